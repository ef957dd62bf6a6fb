"""
Summary evaluation: ROUGE-1/2/L/SU4, BLEU-1 and paired significance tests
"""

import csv
import json
import math
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from config import EvalConfig
from services.corpus import Corpus, Summary, Token
from utils.helpers import is_word, truncate_to_words
from utils.porter import stem_word

logger = logging.getLogger(__name__)

METRICS = ('rouge-1', 'rouge-2', 'rouge-l', 'rouge-su4', 'bleu-1')
MEASURES = ('recall', 'precision', 'f1')


class AlignmentError(ValueError):
    """Hypotheses and references (or two runs) are not aligned 1:1"""


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float

    @classmethod
    def zero(cls) -> 'RougeScore':
        return cls(0.0, 0.0, 0.0)

    def get(self, measure: str) -> float:
        return getattr(self, measure)


@dataclass(frozen=True)
class SignificanceResult:
    t_statistic: float
    p_value: float
    degrees_of_freedom: int

    def is_significant(self, level: float = 0.05) -> bool:
        return self.p_value <= level


def porter_stem(token: Token) -> Token:
    return stem_word(token)


def f_measure(precision: float, recall: float, alpha: float = 0.5) -> float:
    """Weighted harmonic mean: 1 / (alpha / P + (1 - alpha) / R)"""
    if precision <= 0.0 or recall <= 0.0:
        return 0.0
    return precision * recall / ((1.0 - alpha) * precision + alpha * recall)


def _score(overlap: int, hyp_total: int, ref_total: int, alpha: float) -> RougeScore:
    if hyp_total == 0 or ref_total == 0:
        return RougeScore.zero()
    recall = overlap / ref_total
    precision = overlap / hyp_total
    return RougeScore(recall, precision, f_measure(precision, recall, alpha))


def preprocess(tokens: Sequence[Token], cfg: EvalConfig) -> List[Token]:
    """Drop punctuation, apply the word limit, then stem (in that order)"""
    out = [t for t in tokens if is_word(t)] if cfg.drop_punctuation else list(tokens)
    if cfg.truncate_words is not None:
        out = truncate_to_words(out, cfg.truncate_words)
    if cfg.stemming:
        out = [porter_stem(t) for t in out]
    return out


def _combine(per_ref: List[RougeScore], cfg: EvalConfig) -> RougeScore:
    if cfg.multi_ref_mode == 'mean':
        recall = sum(s.recall for s in per_ref) / len(per_ref)
        precision = sum(s.precision for s in per_ref) / len(per_ref)
        return RougeScore(recall, precision, f_measure(precision, recall, cfg.alpha))
    # max: the reference giving the best F wins; earlier references win ties
    best = per_ref[0]
    for score in per_ref[1:]:
        if (score.f1, score.recall) > (best.f1, best.recall):
            best = score
    return best


def ngram_counts(tokens: Sequence[Token], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def skip_bigram_counts(tokens: Sequence[Token], skip_distance: int, include_unigrams: bool) -> Counter:
    """Ordered pairs with at most `skip_distance` tokens between them (plus unigrams)"""
    counts: Counter = Counter()
    for i in range(len(tokens)):
        for j in range(i + 1, min(len(tokens), i + skip_distance + 2)):
            counts[(tokens[i], tokens[j])] += 1
    if include_unigrams:
        counts.update((t,) for t in tokens)
    return counts


def _overlap(a: Counter, b: Counter) -> int:
    return sum((a & b).values())


def _check_refs(refs: Sequence[Sequence[Token]]) -> None:
    if not refs:
        raise ValueError("At least one reference is required")


def rouge_n(hyp: Sequence[Token], refs: Sequence[Sequence[Token]], n: int, cfg: EvalConfig) -> RougeScore:
    """Clipped n-gram overlap against each reference, combined per cfg.multi_ref_mode"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    _check_refs(refs)
    hyp_counts = ngram_counts(preprocess(hyp, cfg), n)
    per_ref = []
    for ref in refs:
        ref_counts = ngram_counts(preprocess(ref, cfg), n)
        per_ref.append(_score(_overlap(hyp_counts, ref_counts), sum(hyp_counts.values()),
                              sum(ref_counts.values()), cfg.alpha))
    return _combine(per_ref, cfg)


def lcs_length(a: Sequence[Token], b: Sequence[Token]) -> int:
    """Longest common subsequence length, O(|a|·|b|) dynamic programme"""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            curr[j] = prev[j - 1] + 1 if x == y else max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def rouge_l(hyp: Sequence[Token], refs: Sequence[Sequence[Token]], cfg: EvalConfig) -> RougeScore:
    """Sequence-level LCS (not the per-sentence union variant)"""
    _check_refs(refs)
    hyp_tokens = preprocess(hyp, cfg)
    per_ref = []
    for ref in refs:
        ref_tokens = preprocess(ref, cfg)
        per_ref.append(_score(lcs_length(hyp_tokens, ref_tokens), len(hyp_tokens), len(ref_tokens), cfg.alpha))
    return _combine(per_ref, cfg)


def rouge_su4(hyp: Sequence[Token], refs: Sequence[Sequence[Token]], cfg: EvalConfig) -> RougeScore:
    _check_refs(refs)
    hyp_counts = skip_bigram_counts(preprocess(hyp, cfg), cfg.skip_distance, cfg.include_unigrams_in_su)
    per_ref = []
    for ref in refs:
        ref_counts = skip_bigram_counts(preprocess(ref, cfg), cfg.skip_distance, cfg.include_unigrams_in_su)
        per_ref.append(_score(_overlap(hyp_counts, ref_counts), sum(hyp_counts.values()),
                              sum(ref_counts.values()), cfg.alpha))
    return _combine(per_ref, cfg)


def bleu1(hyp: Sequence[Token], ref: Sequence[Token]) -> float:
    """Clipped unigram precision times the brevity penalty"""
    if not ref:
        raise ValueError("Reference must be non-empty")
    if not hyp:
        return 0.0
    precision = _overlap(Counter(hyp), Counter(ref)) / len(hyp)
    penalty = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return precision * penalty


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> SignificanceResult:
    """
    Two-sided paired t-test on a - b

    Args:
        a: Per-example scores of system A
        b: Per-example scores of system B (same examples, same order)

    Returns:
        SignificanceResult with df = n - 1. Zero-variance differences give
        t = 0, p = 1 when the mean difference is 0, otherwise t = ±inf, p = 0.

    Raises:
        AlignmentError: If the lists differ in length
        ValueError: If fewer than two pairs are given
    """
    if len(a) != len(b):
        raise AlignmentError(f"Paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("A paired t-test needs at least two pairs")
    diffs = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = len(diffs)
    df = n - 1
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0 or not np.isfinite(sd):
        if mean == 0.0:
            return SignificanceResult(0.0, 1.0, df)
        return SignificanceResult(math.copysign(math.inf, mean), 0.0, df)
    t = mean / (sd / math.sqrt(n))
    p = float(2.0 * stats.t.sf(abs(t), df))
    return SignificanceResult(t, min(1.0, max(0.0, p)), df)


def score_example(hyp: Sequence[Token], refs: Sequence[Sequence[Token]], cfg: EvalConfig) -> Dict[str, RougeScore]:
    """All metrics for one hypothesis; BLEU-1 is taken against the first reference only"""
    bleu = bleu1(preprocess(hyp, cfg), preprocess(refs[0], cfg) or ['<empty>'])
    return {
        'rouge-1': rouge_n(hyp, refs, 1, cfg),
        'rouge-2': rouge_n(hyp, refs, 2, cfg),
        'rouge-l': rouge_l(hyp, refs, cfg),
        'rouge-su4': rouge_su4(hyp, refs, cfg),
        'bleu-1': RougeScore(bleu, bleu, bleu),
    }


@dataclass
class ScoreTable:
    """Per-example scores for every metric, plus corpus means"""
    example_ids: List[str]
    rows: List[Dict[str, RougeScore]]
    config: Optional[EvalConfig] = None
    extra: Dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def values(self, metric: str, measure: str = 'f1') -> List[float]:
        return [row[metric].get(measure) for row in self.rows]

    def mean(self) -> Dict[str, RougeScore]:
        if not self.rows:
            return {m: RougeScore.zero() for m in METRICS}
        return {
            m: RougeScore(*(float(np.mean(self.values(m, measure))) for measure in MEASURES))
            for m in METRICS
        }

    def to_csv(self, path: str) -> None:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['example_id', 'metric', 'recall', 'precision', 'f1'])
            for example_id, row in zip(self.example_ids, self.rows):
                for metric in METRICS:
                    s = row[metric]
                    writer.writerow([example_id, metric, repr(s.recall), repr(s.precision), repr(s.f1)])
        logger.info(f"Wrote per-example scores to {path}")

    @classmethod
    def from_csv(cls, path: str) -> 'ScoreTable':
        ids: List[str] = []
        rows: Dict[str, Dict[str, RougeScore]] = {}
        with open(path, 'r', encoding='utf-8', newline='') as f:
            reader = csv.DictReader(f)
            for record in reader:
                example_id = record['example_id']
                if example_id not in rows:
                    ids.append(example_id)
                    rows[example_id] = {}
                rows[example_id][record['metric']] = RougeScore(
                    float(record['recall']), float(record['precision']), float(record['f1']))
        return cls(example_ids=ids, rows=[rows[i] for i in ids])

    def report(self) -> Dict[str, object]:
        """JSON report laid out like a results table: metric -> R / P / F"""
        means = self.mean()
        return {
            'examples': len(self.rows),
            'scores': {
                m: {'recall': means[m].recall, 'precision': means[m].precision, 'f1': means[m].f1}
                for m in METRICS
            },
            **({'extra': self.extra} if self.extra else {}),
        }

    def to_json(self, path: str) -> None:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.report(), f, indent=2)


def evaluate_summaries(hyps: Sequence[Summary], corpus: Corpus, cfg: EvalConfig, jobs: int = 1) -> ScoreTable:
    """
    Score hypotheses against the gold summaries of a corpus

    Args:
        hyps: One Summary per corpus example, in corpus order
        corpus: Corpus with gold summaries
        cfg: Evaluation settings
        jobs: Worker threads for per-example scoring

    Raises:
        AlignmentError: If hyps and corpus differ in length
    """
    if len(hyps) != len(corpus):
        raise AlignmentError(f"{len(hyps)} hypotheses for {len(corpus)} examples")

    def _one(pair):
        hyp, example = pair
        return score_example(list(hyp.tokens), [list(g.tokens) for g in example.gold_summaries], cfg)

    pairs = list(zip(hyps, corpus.examples))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_one, pairs))
    else:
        rows = [_one(p) for p in pairs]

    table = ScoreTable(example_ids=[e.id for e in corpus.examples], rows=rows, config=cfg)
    logger.info(f"Evaluated {len(rows)} summaries "
                f"(ROUGE-1 F1 {table.mean()['rouge-1'].f1:.4f})" if rows else "Evaluated 0 summaries")
    return table
