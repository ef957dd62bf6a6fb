"""
Synthetic corpora for pretraining, sanity checks and directional experiments
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.corpus import Corpus, DocumentSet, make_document_set

logger = logging.getLogger(__name__)

TOPICS: Dict[str, Tuple[str, ...]] = {
    'energy': ('solar', 'wind', 'power', 'grid', 'battery', 'turbine', 'voltage', 'fuel', 'panel', 'carbon'),
    'health': ('doctor', 'clinic', 'vaccine', 'patient', 'nurse', 'fever', 'therapy', 'surgery', 'virus', 'diet'),
    'sport': ('football', 'coach', 'league', 'player', 'stadium', 'goal', 'match', 'referee', 'season', 'trophy'),
    'music': ('guitar', 'concert', 'album', 'singer', 'violin', 'melody', 'drummer', 'chorus', 'band', 'opera'),
    'travel': ('airport', 'hotel', 'passport', 'ferry', 'tourist', 'luggage', 'voyage', 'cruise', 'island', 'map'),
    'food': ('bread', 'cheese', 'recipe', 'kitchen', 'soup', 'pepper', 'butter', 'oven', 'baker', 'salad'),
    'finance': ('bank', 'loan', 'market', 'stock', 'budget', 'credit', 'investor', 'profit', 'tax', 'salary'),
    'science': ('lab', 'telescope', 'physics', 'atom', 'molecule', 'experiment', 'theory', 'galaxy', 'robot', 'cell'),
}

VERBS = ('rises', 'falls', 'grows', 'helps', 'needs', 'shows', 'builds', 'keeps', 'opens', 'finds')
ADJECTIVES = ('new', 'big', 'old', 'small', 'local', 'strong')

PARAPHRASES = {
    'rises': 'climbs', 'falls': 'drops', 'grows': 'expands', 'helps': 'supports', 'needs': 'requires',
    'shows': 'reveals', 'builds': 'creates', 'keeps': 'holds', 'opens': 'starts', 'finds': 'discovers',
    'big': 'large', 'new': 'fresh', 'old': 'aged', 'small': 'little',
}

# Vocabulary disjoint from every topic, verb and adjective above
FILLER_WORDS = ('lorem', 'ipsum', 'dolor', 'amet', 'velit', 'nulla', 'porta', 'felis', 'magna', 'risus',
                'tempor', 'augue', 'metus', 'justo', 'vitae', 'quis')


class _Writer:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def pick(self, options: Sequence[str]) -> str:
        return options[int(self.rng.integers(len(options)))]

    def sentence(self, topic: str) -> List[str]:
        nouns = TOPICS[topic]
        return ['the', self.pick(nouns), self.pick(VERBS), 'the', self.pick(ADJECTIVES), self.pick(nouns),
                'with', self.pick(nouns), '.']

    def filler(self, length: int = 6) -> List[str]:
        return [self.pick(FILLER_WORDS) for _ in range(length)] + ['.']

    def paraphrase(self, tokens: Sequence[str], noise: float) -> List[str]:
        out = []
        for token in tokens:
            if token != '.' and self.rng.random() < noise:
                if token in PARAPHRASES:
                    out.append(PARAPHRASES[token])
                # otherwise the word is dropped
                continue
            out.append(token)
        return out


def _text(sentences: Sequence[Sequence[str]]) -> str:
    return ' '.join(' '.join(s) for s in sentences)


def make_copy_corpus(n: int = 50, seed: int = 0, n_sentences: int = 3, split: str = 'train') -> Corpus:
    """Single documents whose gold summary is their first sentence, verbatim"""
    writer = _Writer(seed)
    topics = list(TOPICS)
    examples = []
    for i in range(n):
        sentences = [writer.sentence(writer.pick(topics)) for _ in range(n_sentences)]
        examples.append(make_document_set(f'copy-{i}', 'summary', [(f'copy-{i}-d0', _text(sentences))],
                                          [_text(sentences[:1])]))
    return Corpus(tuple(examples), split)


def make_generic_corpus(n: int = 200, seed: int = 0, noise: float = 0.1, n_sentences: int = 4,
                        split: str = 'train') -> Corpus:
    """Lead-sentence summaries with paraphrase noise, standing in for a generic news corpus"""
    writer = _Writer(seed)
    topics = list(TOPICS)
    examples = []
    for i in range(n):
        sentences = [writer.sentence(writer.pick(topics)) for _ in range(n_sentences)]
        gold = writer.paraphrase(sentences[0], noise)
        examples.append(make_document_set(f'generic-{i}', 'summary', [(f'generic-{i}-d0', _text(sentences))],
                                          [' '.join(gold)]))
    logger.info(f"Generated {n} generic pretraining examples")
    return Corpus(tuple(examples), split)


def make_query_sensitive_corpus(n: int = 100, seed: int = 0, half_size: int = 2, n_golds: int = 1,
                                noise: float = 0.0, split: str = 'train', prefix: str = 'qs') -> Corpus:
    """
    Two-topic documents whose gold summarizes the half named by the query

    The first half of each document is about one topic, the second about another.
    The query is a topic name; the gold is the first sentence of that topic's half.
    """
    writer = _Writer(seed)
    topics = list(TOPICS)
    examples = []
    for i in range(n):
        first, second = (topics[j] for j in writer.rng.choice(len(topics), size=2, replace=False))
        halves = {
            first: [writer.sentence(first) for _ in range(half_size)],
            second: [writer.sentence(second) for _ in range(half_size)],
        }
        target = first if writer.rng.random() < 0.5 else second
        golds = [' '.join(writer.paraphrase(halves[target][0], noise)) for _ in range(n_golds)]
        examples.append(make_document_set(
            f'{prefix}-{i}', f'{target} {TOPICS[target][0]}',
            [(f'{prefix}-{i}-d0', _text(halves[first] + halves[second]))],
            golds,
        ))
    return Corpus(tuple(examples), split)


def make_multi_document_corpus(n_sets: int = 10, seed: int = 0, n_docs: int = 3, n_golds: int = 4,
                               n_key: int = 4, noise: float = 0.2, split: str = 'train',
                               prefix: str = 'md') -> Corpus:
    """
    Document sets sharing key sentences about one topic, with several paraphrased golds

    Each document holds two key sentences plus off-topic sentences; each gold
    restates all key sentences with independent paraphrase noise.
    """
    writer = _Writer(seed)
    topics = list(TOPICS)
    examples = []
    for i in range(n_sets):
        topic = writer.pick(topics)
        others = [t for t in topics if t != topic]
        key = [writer.sentence(topic) for _ in range(n_key)]
        documents = []
        for d in range(n_docs):
            picked = [key[(2 * d + j) % n_key] for j in range(2)]
            off_topic = [writer.sentence(writer.pick(others)) for _ in range(2)]
            order = writer.rng.permutation(4)
            sentences = [(picked + off_topic)[j] for j in order]
            documents.append((f'{prefix}-{i}-d{d}', _text(sentences)))
        golds = [_text([writer.paraphrase(s, noise) for s in key]) for _ in range(n_golds)]
        examples.append(make_document_set(f'{prefix}-{i}', f'{topic} {TOPICS[topic][0]} news', documents, golds))
    return Corpus(tuple(examples), split)


def make_planted_corpus(n_sets: int = 10, seed: int = 0, n_docs: int = 3, n_fillers: int = 2,
                        split: str = 'train') -> Tuple[Corpus, Dict[str, Tuple[str, ...]]]:
    """
    Sets where every document contains exactly one gold sentence verbatim

    Filler sentences share no vocabulary with the gold summary or the query.

    Returns:
        The corpus and, per document id, the tokens of its planted gold sentence
    """
    writer = _Writer(seed)
    topics = list(TOPICS)
    examples: List[DocumentSet] = []
    planted: Dict[str, Tuple[str, ...]] = {}
    for i in range(n_sets):
        topic = topics[i % len(topics)]
        gold_sentences = []
        while len(gold_sentences) < n_docs + 1:
            candidate = writer.sentence(topic)
            if candidate not in gold_sentences:
                gold_sentences.append(candidate)
        documents = []
        for d in range(n_docs):
            sentences = [writer.filler() for _ in range(n_fillers)]
            sentences.insert(int(writer.rng.integers(n_fillers + 1)), gold_sentences[d])
            doc_id = f'planted-{i}-d{d}'
            documents.append((doc_id, _text(sentences)))
            planted[doc_id] = tuple(gold_sentences[d])
        query = ' '.join(TOPICS[topic])
        examples.append(make_document_set(f'planted-{i}', query, documents, [_text(gold_sentences)]))
    return Corpus(tuple(examples), split), planted


def split_corpus(corpus: Corpus, n_train: int, split_names: Optional[Tuple[str, str]] = None) -> Tuple[Corpus, Corpus]:
    """First n_train examples as train, the rest as test"""
    train_name, test_name = split_names or ('train', 'test')
    return (Corpus(corpus.examples[:n_train], train_name), Corpus(corpus.examples[n_train:], test_name))
