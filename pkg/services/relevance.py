"""
Query-sentence relevance and sentence-sentence similarity scorers, plus ranking
"""

import math
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, Mapping, Protocol, Sequence, Tuple

import numpy as np

from services.corpus import DocumentSet, Query, Sentence, Token
from utils.helpers import is_word
from utils.porter import stem_word
from utils.stopwords import STOPWORDS

logger = logging.getLogger(__name__)


def content_terms(tokens: Iterable[Token]) -> List[Token]:
    """Stemmed word tokens with stopwords removed"""
    return [stem_word(t) for t in tokens if is_word(t) and t not in STOPWORDS]


@dataclass(frozen=True)
class CorpusStats:
    document_frequency: Mapping[Token, int]
    n_documents: int

    @classmethod
    def from_units(cls, units: Iterable[Sequence[Token]]) -> 'CorpusStats':
        """Document frequencies over text units (each unit counts as one 'document')"""
        df: Counter = Counter()
        n = 0
        for unit in units:
            n += 1
            df.update(set(content_terms(unit)))
        return cls(document_frequency=dict(df), n_documents=n)

    @classmethod
    def from_document_sets(cls, sets: Iterable[DocumentSet]) -> 'CorpusStats':
        """Statistics over every source sentence of the given document sets"""
        return cls.from_units(s.tokens for ds in sets for _, s in ds.all_sentences())

    def idf(self, term: Token) -> float:
        return math.log(1.0 + self.n_documents / (1.0 + self.document_frequency.get(term, 0)))


EMPTY_STATS = CorpusStats(document_frequency={}, n_documents=0)


class RelevanceScorer(Protocol):
    name: str

    def score(self, query: Query, sentence: Sentence, stats: CorpusStats) -> float:
        ...


class SimilarityScorer(Protocol):
    name: str

    def score(self, s1: Sentence, s2: Sentence) -> float:
        ...


def overlap_score(query: Query, sentence: Sentence) -> float:
    """Number of distinct query terms that also occur in the sentence"""
    return float(len(set(content_terms(query.tokens)) & set(content_terms(sentence.tokens))))


def tfidf_vectors(query: Query, sentence: Sentence, stats: CorpusStats) -> Tuple[np.ndarray, np.ndarray]:
    """tf·idf vectors of query and sentence over their joint vocabulary"""
    q_tf = Counter(content_terms(query.tokens))
    s_tf = Counter(content_terms(sentence.tokens))
    vocab = sorted(set(q_tf) | set(s_tf))
    idf = np.array([stats.idf(term) for term in vocab], dtype=np.float64)
    q_vec = np.array([q_tf[term] for term in vocab], dtype=np.float64) * idf
    s_vec = np.array([s_tf[term] for term in vocab], dtype=np.float64) * idf
    return q_vec, s_vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(min(1.0, max(0.0, np.dot(u, v) / (nu * nv))))


def tfidf_cosine(query: Query, sentence: Sentence, stats: CorpusStats) -> float:
    return cosine(*tfidf_vectors(query, sentence, stats))


def sentence_similarity(s1: Sentence, s2: Sentence) -> float:
    """Unigram F1 between stemmed token multisets: 2·overlap / (|s1| + |s2|)"""
    a = Counter(stem_word(t) for t in s1.tokens if is_word(t))
    b = Counter(stem_word(t) for t in s2.tokens if is_word(t))
    total = sum(a.values()) + sum(b.values())
    if total == 0:
        return 0.0
    return 2.0 * sum((a & b).values()) / total


class OverlapScorer:
    name = 'overlap'

    def score(self, query: Query, sentence: Sentence, stats: CorpusStats) -> float:
        return overlap_score(query, sentence)


class TfidfScorer:
    name = 'tfidf'

    def score(self, query: Query, sentence: Sentence, stats: CorpusStats) -> float:
        return tfidf_cosine(query, sentence, stats)


class UnigramF1Similarity:
    name = 'unigram-f1'

    def score(self, s1: Sentence, s2: Sentence) -> float:
        return sentence_similarity(s1, s2)


RELEVANCE_SCORERS = {
    'overlap': OverlapScorer,
    'tfidf': TfidfScorer,
}

SIMILARITY_SCORERS = {
    'unigram-f1': UnigramF1Similarity,
}


def get_relevance_scorer(name: str) -> RelevanceScorer:
    if name not in RELEVANCE_SCORERS:
        raise ValueError(f"Unknown relevance scorer {name!r}; expected one of {sorted(RELEVANCE_SCORERS)}")
    return RELEVANCE_SCORERS[name]()


def get_similarity_scorer(name: str) -> SimilarityScorer:
    if name not in SIMILARITY_SCORERS:
        raise ValueError(f"Unknown similarity scorer {name!r}; expected one of {sorted(SIMILARITY_SCORERS)}")
    return SIMILARITY_SCORERS[name]()


@dataclass(frozen=True)
class SentenceCandidate:
    """A sentence awaiting ranking, tagged with its source document"""
    doc_id: str
    sentence: Sentence


@dataclass(frozen=True)
class ScoredSentence:
    sentence: Sentence
    doc_id: str
    score: float
    rank: int


def candidates_from_set(document_set: DocumentSet) -> List[SentenceCandidate]:
    return [SentenceCandidate(doc_id, s) for doc_id, s in document_set.all_sentences()]


def rank_sentences(query: Query, candidates: Sequence[SentenceCandidate], scorer: RelevanceScorer,
                   stats: CorpusStats) -> List[ScoredSentence]:
    """
    Rank candidates by descending relevance

    Ties keep the input order, which callers pass as (document order, sentence index).
    """
    scored = [(scorer.score(query, c.sentence, stats), position, c) for position, c in enumerate(candidates)]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [
        ScoredSentence(sentence=c.sentence, doc_id=c.doc_id, score=score, rank=rank)
        for rank, (score, _, c) in enumerate(scored)
    ]


def top_k(ranked: Sequence[ScoredSentence], k: int) -> List[ScoredSentence]:
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return list(ranked[:k])
