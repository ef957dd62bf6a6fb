"""
Weak reference summaries for individual documents built from multi-document gold summaries
"""

import os
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from services.corpus import Document, DocumentSet, Query, Sentence, Summary
from services.relevance import (
    CorpusStats, RelevanceScorer, ScoredSentence, SentenceCandidate, SimilarityScorer, rank_sentences, top_k,
)

logger = logging.getLogger(__name__)

SEED_SIZE = 3

# Provenance entry for a seed sentence kept as-is (no gold replacement)
UNREPLACED = -1


class WeakSupervisionError(ValueError):
    """Gold summaries cannot supply a distinct replacement for every seed sentence"""


@dataclass(frozen=True)
class WeakReference:
    doc_id: str
    seed_sentences: Tuple[ScoredSentence, ...]
    replaced_sentences: Tuple[Sentence, ...]
    provenance: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        if len(self.replaced_sentences) != len(self.seed_sentences):
            raise WeakSupervisionError("Replacement count differs from seed count")
        replaced = [p for p in self.provenance if p[0] != UNREPLACED]
        if len(set(replaced)) != len(replaced):
            raise WeakSupervisionError(f"Gold sentence reused in weak reference for {self.doc_id!r}")

    @property
    def summary(self) -> Summary:
        return Summary.from_sentences(self.replaced_sentences)


@dataclass(frozen=True)
class WeakExample:
    set_id: str
    query: Query
    document: Document
    reference: WeakReference


@dataclass
class WeakCorpus:
    examples: List[WeakExample] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)

    def to_jsonl(self, path: str) -> None:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for ex in self.examples:
                record = {
                    'set_id': ex.set_id,
                    'doc_id': ex.document.id,
                    'query': ' '.join(ex.query.tokens),
                    'document': ' '.join(s.raw for s in ex.document.sentences),
                    'weak_summary': ' '.join(s.raw for s in ex.reference.replaced_sentences),
                    'provenance': [list(p) for p in ex.reference.provenance],
                }
                f.write(json.dumps(record, ensure_ascii=False) + '\n')
        logger.info(f"Wrote {len(self.examples)} weak examples to {path}")


def initial_weak_extractive(doc: Document, query: Query, scorer: RelevanceScorer,
                            stats: CorpusStats) -> List[ScoredSentence]:
    """The SEED_SIZE most query-relevant sentences of one document, in rank order"""
    candidates = [SentenceCandidate(doc.id, s) for s in doc.sentences]
    return top_k(rank_sentences(query, candidates, scorer, stats), SEED_SIZE)


def distant_replace(seed: Sequence[ScoredSentence], golds: Sequence[Summary], sim: SimilarityScorer,
                    doc_id: Optional[str] = None) -> WeakReference:
    """
    Replace each seed sentence with its most similar gold sentence not yet used for this document

    Seeds are processed in rank order. Ties go to the lowest (gold index, sentence index).

    Raises:
        WeakSupervisionError: If the golds hold fewer sentences than the seed
    """
    pool = [(g, s, sentence) for g, gold in enumerate(golds) for s, sentence in enumerate(gold.sentences)]
    if len(pool) < len(seed):
        raise WeakSupervisionError(f"{len(pool)} gold sentences cannot replace {len(seed)} seed sentences")

    used = set()
    replaced: List[Sentence] = []
    provenance: List[Tuple[int, int]] = []
    for item in seed:
        best = None
        best_score = float('-inf')
        for g, s, sentence in pool:
            if (g, s) in used:
                continue
            score = sim.score(item.sentence, sentence)
            if score > best_score:
                best, best_score = (g, s, sentence), score
        g, s, sentence = best
        used.add((g, s))
        replaced.append(sentence)
        provenance.append((g, s))

    if doc_id is None:
        doc_id = seed[0].doc_id if seed else ''
    return WeakReference(doc_id, tuple(seed), tuple(replaced), tuple(provenance))


def keep_seed(seed: Sequence[ScoredSentence], doc_id: str) -> WeakReference:
    """Weak reference that is the extractive seed itself"""
    return WeakReference(
        doc_id=doc_id,
        seed_sentences=tuple(seed),
        replaced_sentences=tuple(item.sentence for item in seed),
        provenance=tuple((UNREPLACED, item.sentence.index) for item in seed),
    )


def build_weak_corpus(sets: Sequence[DocumentSet], scorer: RelevanceScorer, sim: SimilarityScorer,
                      stats: CorpusStats, use_distant_supervision: bool = True) -> WeakCorpus:
    """
    One weak example per (document set, document)

    Documents whose set cannot satisfy the replacement are skipped with a warning.
    """
    corpus = WeakCorpus()
    for document_set in sets:
        for doc in document_set.documents:
            seed = initial_weak_extractive(doc, document_set.query, scorer, stats)
            if use_distant_supervision:
                try:
                    reference = distant_replace(seed, document_set.gold_summaries, sim, doc.id)
                except WeakSupervisionError as e:
                    message = f"Skipping document {doc.id!r} of set {document_set.id!r}: {e}"
                    logger.warning(message)
                    corpus.warnings.append(message)
                    continue
            else:
                reference = keep_seed(seed, doc.id)
            corpus.examples.append(WeakExample(document_set.id, document_set.query, doc, reference))

    logger.info(f"Built {len(corpus.examples)} weak examples from {len(sets)} document sets "
                f"({len(corpus.warnings)} skipped)")
    return corpus
