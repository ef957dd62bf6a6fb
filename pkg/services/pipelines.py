"""
End-to-end pipelines: pretraining, single-document fine-tuning, sentence filtering with
sequential fine-tuning, weakly supervised multi-document summarization, and zero-shot baselines
"""

import os
import json
import time
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from config import BeamConfig, EvalConfig, PipelineConfig, config_to_dict
from services.checkpoint import Checkpoint, build_model, to_checkpoint
from services.corpus import Corpus, Document, DocumentSet, Query, Sentence, Summary
from services.decoding import beam_search
from services.metrics import METRICS, AlignmentError, ScoreTable, evaluate_summaries, paired_t_test, rouge_n
from services.metrics import SignificanceResult
from services.modeling import EncoderInput, QFASTransformer, Vocab, build_encoder_input, encode, extractive_scores
from services.relevance import (
    CorpusStats, RelevanceScorer, ScoredSentence, SentenceCandidate, candidates_from_set,
    get_relevance_scorer, get_similarity_scorer, rank_sentences,
)
from services.synthetic import make_generic_corpus
from services.training import Trainer, TrainingExample, make_target
from services.weaksup import SEED_SIZE, build_weak_corpus, initial_weak_extractive
from utils.helpers import (
    RunLogCollector, detokenize, ensure_dir, has_repeated_trigram, sanitize_filename,
    truncate_to_words, word_count, write_text,
)

logger = logging.getLogger(__name__)

ZERO_SHOT_KINDS = ('extractive', 'abstractive')


# Training schedules

@dataclass(frozen=True)
class TrainRun:
    gold_indices: Tuple[int, ...]
    steps: int
    learning_rate: float
    warmup_steps: int


@dataclass(frozen=True)
class TrainSchedule:
    runs: Tuple[TrainRun, ...]
    mode: str

    def __post_init__(self):
        if self.mode not in ('sequential', 'batchwise'):
            raise ValueError(f"Unknown schedule mode {self.mode!r}")
        if not self.runs:
            raise ValueError("A schedule needs at least one run")
        if self.mode == 'batchwise' and len(self.runs) != 1:
            raise ValueError("A batchwise schedule has exactly one run")
        if self.mode == 'sequential' and any(len(run.gold_indices) != 1 for run in self.runs):
            raise ValueError("Every sequential run trains on exactly one gold per example")

    @classmethod
    def sequential(cls, k: int, steps: int, learning_rate: float, warmup_steps: int) -> 'TrainSchedule':
        return cls(tuple(TrainRun((i,), steps, learning_rate, warmup_steps) for i in range(k)), 'sequential')

    @classmethod
    def batchwise(cls, k: int, steps: int, learning_rate: float, warmup_steps: int) -> 'TrainSchedule':
        return cls((TrainRun(tuple(range(k)), steps, learning_rate, warmup_steps),), 'batchwise')

    @classmethod
    def from_config(cls, k: int, cfg: PipelineConfig, mode: Optional[str] = None) -> 'TrainSchedule':
        factory = cls.sequential if (mode or cfg.train.schedule_mode) == 'sequential' else cls.batchwise
        return factory(k, cfg.train.steps, cfg.train.learning_rate, cfg.train.warmup_steps)


@dataclass(frozen=True)
class FinetuneItem:
    """One model input with every gold target available for it"""
    example_id: str
    encoder_input: EncoderInput
    targets: Tuple[Tuple[int, ...], ...]


@dataclass
class ScheduleResult:
    final: Checkpoint
    runs: List[Checkpoint]


# Run reports

@dataclass
class RunReport:
    kind: str
    example_ids: List[str]
    summaries: List[Summary]
    scores: ScoreTable
    config: Dict[str, Any]
    timing: Dict[str, float] = field(default_factory=dict)
    log_lines: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.summaries) != len(self.example_ids) or list(self.scores.example_ids) != list(self.example_ids):
            raise AlignmentError(f"Run {self.kind!r}: summaries, scores and example ids are not aligned")

    def save(self, directory: str) -> str:
        """Write summaries/<id>.txt, scores.csv, config.json, report.json and log.txt"""
        ensure_dir(os.path.join(directory, 'summaries'))
        for example_id, summary in zip(self.example_ids, self.summaries):
            write_text(os.path.join(directory, 'summaries', f'{sanitize_filename(example_id)}.txt'),
                       summary.text + '\n')
        self.scores.to_csv(os.path.join(directory, 'scores.csv'))
        write_text(os.path.join(directory, 'config.json'), json.dumps({
            'kind': self.kind,
            'config': self.config,
            'timing': self.timing,
            'budgets': {
                'summary_budget': 'whitespace words',
                'filter_budget_n': 'corpus tokens',
            },
        }, indent=2))
        write_text(os.path.join(directory, 'report.json'), json.dumps({**self.scores.report(), 'extra': self.extra},
                                                                      indent=2))
        write_text(os.path.join(directory, 'log.txt'), '\n'.join(self.log_lines) + '\n')
        logger.info(f"Saved {self.kind} run with {len(self.summaries)} summaries to {directory}")
        return directory

    @classmethod
    def load(cls, directory: str) -> 'RunReport':
        scores = ScoreTable.from_csv(os.path.join(directory, 'scores.csv'))
        with open(os.path.join(directory, 'config.json'), 'r', encoding='utf-8') as f:
            meta = json.load(f)
        summaries = []
        for example_id in scores.example_ids:
            path = os.path.join(directory, 'summaries', f'{sanitize_filename(example_id)}.txt')
            with open(path, 'r', encoding='utf-8') as f:
                summaries.append(Summary.from_text(f.read().strip()))
        return cls(kind=meta.get('kind', 'unknown'), example_ids=list(scores.example_ids), summaries=summaries,
                   scores=scores, config=meta.get('config', {}), timing=meta.get('timing', {}))


class _RunRecorder:
    """Collects log lines and stage timings while a pipeline runs"""

    def __init__(self, kind: str, cfg: PipelineConfig):
        self.kind = kind
        self.cfg = cfg
        self.timing: Dict[str, float] = {}
        self.extra: Dict[str, Any] = {}
        self._collector = RunLogCollector()
        self._start = 0.0

    def __enter__(self) -> '_RunRecorder':
        self._collector.__enter__()
        self._start = time.perf_counter()
        logger.info(f"Starting {self.kind} run (seed {self.cfg.seed})")
        return self

    def __exit__(self, *exc) -> None:
        self._collector.__exit__(*exc)

    def stage(self, name: str, started: float) -> None:
        self.timing[f'{name}_seconds'] = round(time.perf_counter() - started, 3)

    def report(self, corpus: Corpus, summaries: List[Summary], scores: ScoreTable) -> RunReport:
        self.timing['total_seconds'] = round(time.perf_counter() - self._start, 3)
        means = scores.mean()
        logger.info(f"Finished {self.kind} run: " + ', '.join(f"{m} F1 {means[m].f1:.4f}" for m in METRICS))
        return RunReport(
            kind=self.kind,
            example_ids=[ex.id for ex in corpus.examples],
            summaries=summaries,
            scores=scores,
            config=config_to_dict(self.cfg),
            timing=dict(self.timing),
            log_lines=list(self._collector.lines),
            extra=dict(self.extra),
        )


# Shared building blocks

def build_vocab(supervised: Iterable[Corpus], unsupervised: Iterable[Corpus] = ()) -> Vocab:
    """Vocabulary over queries, documents and (for supervised corpora only) gold summaries"""
    def streams():
        for corpus in supervised:
            for ex in corpus:
                yield ex.query.tokens
                for doc in ex.documents:
                    yield doc.tokens
                for gold in ex.gold_summaries:
                    yield gold.tokens
        for corpus in unsupervised:
            for ex in corpus:
                yield ex.query.tokens
                for doc in ex.documents:
                    yield doc.tokens
    vocab = Vocab.build(streams())
    logger.info(f"Built vocabulary of {len(vocab)} entries")
    return vocab


def new_model(cfg: PipelineConfig, vocab: Vocab) -> QFASTransformer:
    return QFASTransformer(replace(cfg.model, vocab_size=len(vocab)))


def decoding_config(cfg: PipelineConfig) -> BeamConfig:
    return replace(cfg.beam, trigram_block=cfg.beam.trigram_block and cfg.use_trigram_block)


def oracle_labels(doc: Document, golds: Sequence[Summary], cfg: PipelineConfig, k: int = SEED_SIZE) -> List[float]:
    """1.0 for the k sentences with the highest ROUGE-1 recall against the golds, else 0.0"""
    refs = [list(g.tokens) for g in golds]
    recalls = [rouge_n(list(s.tokens), refs, 1, cfg.eval).recall for s in doc.sentences]
    chosen = sorted(range(len(recalls)), key=lambda i: (-recalls[i], i))[:k]
    return [1.0 if i in chosen else 0.0 for i in range(len(recalls))]


def _require_single_document(corpus: Corpus, what: str) -> None:
    multi = [ex.id for ex in corpus if not ex.is_single_document]
    if multi:
        raise ValueError(f"{what} expects single-document examples; {len(multi)} are multi-document "
                         f"(first: {multi[0]!r})")


def pretrain_generic(corpus: Corpus, cfg: PipelineConfig, vocab: Optional[Vocab] = None) -> Checkpoint:
    """
    Train a generic summarizer on single-document examples without any query segment

    Args:
        corpus: Single-document examples with golds
        cfg: Pipeline configuration (train.pretrain_steps, train.extractive_prestage, ...)
        vocab: Vocabulary to use; built from the corpus when omitted

    Returns:
        Checkpoint whose meta carries the per-interval loss history
    """
    _require_single_document(corpus, 'pretrain_generic')
    vocab = vocab or build_vocab([corpus])
    model = new_model(cfg, vocab)
    max_len = cfg.model.max_src_len
    inputs = [build_encoder_input(None, ex.documents[0], vocab, max_len, use_query=False) for ex in corpus]

    meta: Dict[str, Any] = {'stage': 'pretrain', 'extractive_trained': False}
    if cfg.train.extractive_prestage:
        items = [(enc, oracle_labels(ex.documents[0], ex.gold_summaries, cfg)) for enc, ex in zip(inputs, corpus)]
        trainer = Trainer(model, cfg.train)
        meta['extractive_losses'] = trainer.fit(items, cfg.train.extractive_steps, cfg.seed,
                                                'extractive', step_fn=trainer.extractive_step)
        meta['extractive_trained'] = True

    examples = [
        TrainingExample(enc, make_target(gold.tokens, vocab, cfg.model.max_tgt_len))
        for enc, ex in zip(inputs, corpus) for gold in ex.gold_summaries
    ]
    meta['losses'] = Trainer(model, cfg.train).fit(examples, cfg.train.pretrain_steps, cfg.seed, 'pretrain')
    return to_checkpoint(model, vocab, meta)


def initial_checkpoint(cfg: PipelineConfig, vocab: Vocab, generic: Optional[Corpus] = None) -> Checkpoint:
    """Generic-pretrained checkpoint, or a random initialization when use_pretraining is off"""
    if not cfg.use_pretraining:
        logger.info("Pretraining disabled: starting from a random initialization")
        return to_checkpoint(new_model(cfg, vocab), vocab, {'stage': 'random-init'})
    generic = generic or make_generic_corpus(cfg.train.pretrain_examples, seed=cfg.seed)
    return pretrain_generic(generic, cfg, vocab)


def _targets(golds: Sequence[Summary], vocab: Vocab, cfg: PipelineConfig) -> Tuple[Tuple[int, ...], ...]:
    return tuple(make_target(g.tokens, vocab, cfg.model.max_tgt_len) for g in golds)


def _run_examples(items: Sequence[FinetuneItem], run: TrainRun) -> List[TrainingExample]:
    examples = []
    for item in items:
        for g in run.gold_indices:
            if g >= len(item.targets):
                logger.warning(f"Example {item.example_id!r} has {len(item.targets)} golds; "
                               f"reusing its last gold in place of gold {g}")
            examples.append(TrainingExample(item.encoder_input, item.targets[min(g, len(item.targets) - 1)]))
    return examples


def fine_tune(start: Checkpoint, examples: Sequence[TrainingExample], run: TrainRun, cfg: PipelineConfig,
              seed: int, stage: str = 'finetune') -> Checkpoint:
    model = build_model(start)
    trainer = Trainer(model, cfg.train, run.learning_rate, run.warmup_steps)
    history = trainer.fit(examples, run.steps, seed, stage)
    return to_checkpoint(model, start.vocab, {'stage': stage, 'losses': history})


def run_schedule(start: Checkpoint, items: Sequence[FinetuneItem], schedule: TrainSchedule,
                 cfg: PipelineConfig) -> ScheduleResult:
    """Run every fine-tuning run in order, each starting from the previous run's checkpoint"""
    current = start
    per_run = []
    for i, run in enumerate(schedule.runs):
        logger.info(f"Fine-tuning run {i + 1}/{len(schedule.runs)} ({schedule.mode}, golds {list(run.gold_indices)})")
        current = fine_tune(current, _run_examples(items, run), run, cfg, cfg.seed + i, f'{schedule.mode}-run{i + 1}')
        per_run.append(current)
    return ScheduleResult(final=current, runs=per_run)


def sequential_finetune(start: Checkpoint, items: Sequence[FinetuneItem], schedule: TrainSchedule,
                        cfg: PipelineConfig) -> ScheduleResult:
    """Run i trains on gold i of every example, starting from run i-1's checkpoint"""
    if schedule.mode != 'sequential':
        raise ValueError(f"sequential_finetune needs a sequential schedule, got {schedule.mode!r}")
    return run_schedule(start, items, schedule, cfg)


def decode_document(model: QFASTransformer, vocab: Vocab, query: Optional[Query], doc: Document,
                    cfg: PipelineConfig, use_query: bool) -> Summary:
    encoder_input = build_encoder_input(query, doc, vocab, cfg.model.max_src_len, use_query=use_query)
    return beam_search(model, encoder_input, decoding_config(cfg), vocab)


def sentence_filter(document_set: DocumentSet, n: int, scorer: RelevanceScorer, stats: CorpusStats) -> Document:
    """
    Collapse a document set into one document of its most relevant sentences

    Sentences of every document are ranked by relevance; they are kept whole while
    query tokens plus kept tokens fit within n, and the last one is cut to fit.
    """
    query_len = len(document_set.query.tokens)
    if n <= query_len:
        raise ValueError(f"Filter budget n={n} must exceed the query length {query_len}")
    budget = n - query_len
    ranked = rank_sentences(document_set.query, candidates_from_set(document_set), scorer, stats)
    kept: List[Sentence] = []
    for item in ranked:
        if budget <= 0:
            break
        tokens = item.sentence.tokens[:budget]
        raw = item.sentence.raw if len(tokens) == len(item.sentence.tokens) else detokenize(tokens)
        kept.append(Sentence(tokens=tuple(tokens), index=len(kept), raw=raw))
        budget -= len(tokens)
    return Document(id=f'{document_set.id}-filtered', sentences=tuple(kept))


def select_summary(ranked: Sequence[ScoredSentence], budget: int, trigram_block: bool) -> Summary:
    """
    Greedy selection of ranked sentences up to `budget` words

    With trigram_block, a sentence that would repeat a trigram of the selection is skipped.
    The sentence that crosses the budget is cut and ends the selection.
    """
    selected: List[Sentence] = []
    tokens: List[str] = []
    for item in ranked:
        remaining = budget - word_count(tokens)
        if remaining <= 0:
            break
        candidate = list(item.sentence.tokens)
        if not candidate:
            continue
        if trigram_block and has_repeated_trigram(tokens + candidate):
            continue
        if word_count(candidate) > remaining:
            cut = truncate_to_words(candidate, remaining)
            selected.append(Sentence(tuple(cut), len(selected), detokenize(cut)))
            break
        selected.append(item.sentence)
        tokens.extend(candidate)
    return Summary.from_sentences(selected)


def _pool_and_select(document_set: DocumentSet, pooled: Sequence[SentenceCandidate], cfg: PipelineConfig) -> Summary:
    scorer = get_relevance_scorer(cfg.relevance_scorer)
    stats = CorpusStats.from_units(c.sentence.tokens for c in pooled)
    ranked = rank_sentences(document_set.query, pooled, scorer, stats)
    return select_summary(ranked, cfg.summary_budget, cfg.use_trigram_block)


def _pool(doc_id: str, summary: Summary) -> List[SentenceCandidate]:
    return [SentenceCandidate(doc_id, s) for s in summary.sentences if s.tokens]


def _start_and_vocab(cfg: PipelineConfig, start: Optional[Checkpoint], generic: Optional[Corpus],
                     supervised: Sequence[Corpus], unsupervised: Sequence[Corpus]) -> Tuple[Checkpoint, Vocab]:
    if start is not None:
        return start, start.vocab
    if cfg.use_pretraining:
        generic = generic or make_generic_corpus(cfg.train.pretrain_examples, seed=cfg.seed)
        supervised = [generic, *supervised]
    vocab = build_vocab(supervised, unsupervised)
    return initial_checkpoint(cfg, vocab, generic), vocab


APPROACHES = ('sd', 'sft', 'wsl')


def _single_document_items(sets: Corpus, cfg: PipelineConfig, vocab: Vocab) -> List[FinetuneItem]:
    return [
        FinetuneItem(
            ex.id,
            build_encoder_input(ex.query, ex.documents[0], vocab, cfg.model.max_src_len, use_query=cfg.use_query),
            _targets(ex.gold_summaries, vocab, cfg),
        )
        for ex in sets
    ]


def _filtered_items(sets: Corpus, cfg: PipelineConfig, vocab: Vocab) -> List[FinetuneItem]:
    scorer = get_relevance_scorer(cfg.relevance_scorer)
    stats = CorpusStats.from_document_sets(sets)
    items = []
    for ex in sets:
        doc = sentence_filter(ex, cfg.filter_budget_n, scorer, stats)
        items.append(FinetuneItem(
            ex.id,
            build_encoder_input(ex.query, doc, vocab, cfg.model.max_src_len, use_query=cfg.use_query),
            _targets(ex.gold_summaries, vocab, cfg),
        ))
    return items


def _weak_items(sets: Corpus, cfg: PipelineConfig, vocab: Vocab, extra: Dict[str, Any],
                export_path: Optional[str] = None) -> List[FinetuneItem]:
    weak = build_weak_corpus(sets, get_relevance_scorer(cfg.relevance_scorer),
                             get_similarity_scorer(cfg.similarity_scorer), CorpusStats.from_document_sets(sets),
                             use_distant_supervision=cfg.use_distant_supervision)
    extra['weak_examples'] = len(weak)
    extra['weak_warnings'] = list(weak.warnings)
    if export_path:
        weak.to_jsonl(export_path)
        extra['weak_export'] = export_path
    if not weak.examples:
        raise ValueError("No weak training examples could be built from the train sets")
    return [
        FinetuneItem(
            f'{ex.set_id}/{ex.document.id}',
            build_encoder_input(ex.query, ex.document, vocab, cfg.model.max_src_len, use_query=cfg.use_query),
            _targets([ex.reference.summary], vocab, cfg),
        )
        for ex in weak.examples
    ]


def prepare_finetune(approach: str, train_sets: Corpus, cfg: PipelineConfig, vocab: Vocab,
                     extra: Optional[Dict[str, Any]] = None,
                     export_weak: Optional[str] = None) -> Tuple[List[FinetuneItem], TrainSchedule]:
    """
    Training items and schedule of one approach

    sd: single-document inputs, every gold in one batchwise run.
    sft: sentence-filtered inputs, one run per gold (or batchwise per train.schedule_mode).
    wsl: one weakly supervised item per document, one batchwise run; the weak
    corpus is written as JSONL to `export_weak` when given.
    """
    extra = {} if extra is None else extra
    if not len(train_sets):
        raise ValueError("No training examples")
    if approach == 'sd':
        _require_single_document(train_sets, 'single-document fine-tuning')
        k = max(len(ex.gold_summaries) for ex in train_sets)
        return _single_document_items(train_sets, cfg, vocab), TrainSchedule.from_config(k, cfg, mode='batchwise')
    if approach == 'sft':
        k = cfg.train.num_golds or max(len(ex.gold_summaries) for ex in train_sets)
        return _filtered_items(train_sets, cfg, vocab), TrainSchedule.from_config(k, cfg)
    if approach == 'wsl':
        return _weak_items(train_sets, cfg, vocab, extra, export_weak), TrainSchedule.from_config(1, cfg, mode='batchwise')
    raise ValueError(f"Unknown approach {approach!r}; expected one of {APPROACHES}")


def generate_summaries(approach: str, model: QFASTransformer, vocab: Vocab, test_sets: Corpus,
                       cfg: PipelineConfig) -> List[Summary]:
    """One summary per test example, produced the way the approach decodes"""
    if approach == 'sd':
        _require_single_document(test_sets, 'single-document generation')
        return [decode_document(model, vocab, ex.query, ex.documents[0], cfg, cfg.use_query) for ex in test_sets]
    if approach == 'sft':
        beam_cfg = decoding_config(cfg)
        summaries = []
        for item in _filtered_items(test_sets, cfg, vocab):
            generated = beam_search(model, item.encoder_input, beam_cfg, vocab)
            summaries.append(Summary.from_text(detokenize(truncate_to_words(generated.tokens, cfg.summary_budget))))
        return summaries
    if approach == 'wsl':
        summaries = []
        for ex in test_sets:
            pooled: List[SentenceCandidate] = []
            for doc in ex.documents:
                pooled.extend(_pool(doc.id, decode_document(model, vocab, ex.query, doc, cfg, cfg.use_query)))
            summaries.append(_pool_and_select(ex, pooled, cfg))
        return summaries
    raise ValueError(f"Unknown approach {approach!r}; expected one of {APPROACHES}")


def evaluation_config(cfg: PipelineConfig, corpus: Corpus) -> EvalConfig:
    """Single-document corpora use cfg.eval; multi-document ones add the word budget"""
    if all(ex.is_single_document for ex in corpus):
        return cfg.eval
    return cfg.multi_document_eval()


# Pipelines

def preqfas_sd(pretrained: Optional[Checkpoint], folds: Sequence[Tuple[Corpus, Corpus, Corpus]],
               cfg: PipelineConfig, generic: Optional[Corpus] = None, jobs: int = 1) -> RunReport:
    """
    Single-document query-focused summarization over cross-validation folds

    Each fold fine-tunes the pretrained checkpoint on query-concatenated inputs with
    all golds in one batchwise run, then beam-decodes and scores the fold's test split.
    """
    if not folds:
        raise AlignmentError("No folds given")
    for train, _, test in folds:
        _require_single_document(train, 'preqfas_sd')
        _require_single_document(test, 'preqfas_sd')

    with _RunRecorder('preqfas-sd', cfg) as recorder:
        started = time.perf_counter()
        pretrained, vocab = _start_and_vocab(
            cfg, pretrained, generic,
            supervised=[fold[0] for fold in folds] + [fold[1] for fold in folds],
            unsupervised=[fold[2] for fold in folds],
        )
        recorder.stage('pretrain', started)

        example_ids: List[str] = []
        rows = []
        summaries: List[Summary] = []
        fold_means = []
        test_examples: List[DocumentSet] = []
        started = time.perf_counter()
        for i, (train, _, test) in enumerate(folds):
            items, schedule = prepare_finetune('sd', train, cfg, vocab)
            run = schedule.runs[0]
            tuned = fine_tune(pretrained, _run_examples(items, run), run, cfg, cfg.seed + i, f'fold{i + 1}')
            fold_summaries = generate_summaries('sd', build_model(tuned), vocab, test, cfg)
            table = evaluate_summaries(fold_summaries, test, cfg.eval, jobs)
            fold_means.append({m: s.f1 for m, s in table.mean().items()})
            logger.info(f"Fold {i + 1}/{len(folds)}: ROUGE-1 F1 {fold_means[-1]['rouge-1']:.4f}")
            example_ids.extend(table.example_ids)
            rows.extend(table.rows)
            summaries.extend(fold_summaries)
            test_examples.extend(test.examples)
        recorder.stage('finetune_decode', started)

        recorder.extra['fold_f1'] = fold_means
        recorder.extra['folds'] = len(folds)
        scores = ScoreTable(example_ids=example_ids, rows=rows, config=cfg.eval, extra=dict(recorder.extra))
        return recorder.report(Corpus(tuple(test_examples), 'test'), summaries, scores)


def preqfas_sft(train_sets: Corpus, test_sets: Corpus, cfg: PipelineConfig, generic: Optional[Corpus] = None,
                start: Optional[Checkpoint] = None, jobs: int = 1) -> RunReport:
    """
    Multi-document summarization by sentence filtering and sequential fine-tuning

    Every set is filtered to one input of at most filter_budget_n tokens; the model is
    fine-tuned once per gold (or batchwise), then each test input is decoded and cut
    to summary_budget words.
    """
    with _RunRecorder('preqfas-sft', cfg) as recorder:
        started = time.perf_counter()
        start, vocab = _start_and_vocab(cfg, start, generic, [train_sets], [test_sets])
        recorder.stage('pretrain', started)

        started = time.perf_counter()
        items, schedule = prepare_finetune('sft', train_sets, cfg, vocab)
        result = run_schedule(start, items, schedule, cfg)
        recorder.stage('finetune', started)
        recorder.extra['runs'] = len(result.runs)
        recorder.extra['schedule_mode'] = schedule.mode

        started = time.perf_counter()
        summaries = generate_summaries('sft', build_model(result.final), vocab, test_sets, cfg)
        recorder.stage('decode', started)

        scores = evaluate_summaries(summaries, test_sets, cfg.multi_document_eval(), jobs)
        return recorder.report(test_sets, summaries, scores)


def preqfas_wsl(train_sets: Corpus, test_sets: Corpus, cfg: PipelineConfig, generic: Optional[Corpus] = None,
                start: Optional[Checkpoint] = None, jobs: int = 1, export_weak: Optional[str] = None) -> RunReport:
    """
    Multi-document summarization by weak supervision

    Per-document weak references built from the train golds drive fine-tuning; at test
    time each document is summarized, and the pooled generated sentences are ranked
    and selected within summary_budget words. With use_weak_supervision off, source
    sentences are ranked and selected directly and no model is trained.
    """
    with _RunRecorder('preqfas-wsl', cfg) as recorder:
        if not cfg.use_weak_supervision:
            logger.info("Weak supervision disabled: ranking source sentences directly")
            if export_weak:
                logger.warning(f"No weak corpus is built without weak supervision; {export_weak} not written")
            summaries = [_pool_and_select(ex, candidates_from_set(ex), cfg) for ex in test_sets]
        else:
            started = time.perf_counter()
            start, vocab = _start_and_vocab(cfg, start, generic, [train_sets], [test_sets])
            recorder.stage('pretrain', started)

            started = time.perf_counter()
            items, schedule = prepare_finetune('wsl', train_sets, cfg, vocab, recorder.extra, export_weak)
            result = run_schedule(start, items, schedule, cfg)
            recorder.stage('finetune', started)

            started = time.perf_counter()
            summaries = generate_summaries('wsl', build_model(result.final), vocab, test_sets, cfg)
            recorder.stage('decode', started)

        scores = evaluate_summaries(summaries, test_sets, cfg.multi_document_eval(), jobs)
        return recorder.report(test_sets, summaries, scores)


def _extractive_top(model: QFASTransformer, vocab: Vocab, doc: Document, cfg: PipelineConfig) -> List[Sentence]:
    encoder_input = build_encoder_input(None, doc, vocab, cfg.model.max_src_len, use_query=False)
    probs = extractive_scores(encode(encoder_input, model), encoder_input.cls_positions, model)
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))[:SEED_SIZE]
    return [doc.sentences[i] for i in order]


def zero_shot_baseline(test_sets: Corpus, cfg: PipelineConfig, kind: str,
                       pretrained: Checkpoint, jobs: int = 1) -> RunReport:
    """
    Apply a generic checkpoint without any fine-tuning

    extractive: top-3 sentences per document from the sentence-scoring head when it was
    trained, otherwise from the relevance scorer. abstractive: a query-free generated
    summary per document. Both then go through the pooled ranking and selection.
    """
    if kind not in ZERO_SHOT_KINDS:
        raise ValueError(f"Unknown zero-shot kind {kind!r}; expected one of {ZERO_SHOT_KINDS}")

    with _RunRecorder(f'zero-shot-{kind}', cfg) as recorder:
        started = time.perf_counter()
        model = build_model(pretrained)
        vocab = pretrained.vocab
        use_head = kind == 'extractive' and bool(pretrained.meta.get('extractive_trained'))
        recorder.extra['extractive_source'] = 'model' if use_head else 'relevance'
        scorer = get_relevance_scorer(cfg.relevance_scorer)
        summaries = []
        for ex in test_sets:
            pooled: List[SentenceCandidate] = []
            stats = CorpusStats.from_document_sets([ex])
            for doc in ex.documents:
                if kind == 'abstractive':
                    pooled.extend(_pool(doc.id, decode_document(model, vocab, None, doc, cfg, use_query=False)))
                elif use_head:
                    pooled.extend(SentenceCandidate(doc.id, s) for s in _extractive_top(model, vocab, doc, cfg))
                else:
                    seed = initial_weak_extractive(doc, ex.query, scorer, stats)
                    pooled.extend(SentenceCandidate(doc.id, item.sentence) for item in seed)
            summaries.append(_pool_and_select(ex, pooled, cfg))
        recorder.stage('decode', started)

        scores = evaluate_summaries(summaries, test_sets, cfg.multi_document_eval(), jobs)
        return recorder.report(test_sets, summaries, scores)


# Analysis

@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    measure: str
    mean_a: float
    mean_b: float
    result: SignificanceResult

    @property
    def significant(self) -> bool:
        return self.result.is_significant(0.05)


def compare_runs(a: RunReport, b: RunReport, metrics: Sequence[str] = METRICS,
                 measures: Sequence[str] = ('recall', 'f1')) -> List[ComparisonRow]:
    """Paired t-test per metric and measure over per-example scores"""
    if list(a.example_ids) != list(b.example_ids):
        raise AlignmentError(f"Runs {a.kind!r} and {b.kind!r} cover different test examples")
    rows = []
    for metric in metrics:
        for measure in measures:
            xs = a.scores.values(metric, measure)
            ys = b.scores.values(metric, measure)
            rows.append(ComparisonRow(
                metric=metric,
                measure=measure,
                mean_a=sum(xs) / len(xs) if xs else 0.0,
                mean_b=sum(ys) / len(ys) if ys else 0.0,
                result=paired_t_test(xs, ys),
            ))
    flagged = [f"{r.metric}/{r.measure}" for r in rows if r.significant]
    logger.info(f"Compared {a.kind} vs {b.kind}: significant at p<=0.05: {flagged or 'none'}")
    return rows


def k_sweep(train_sets: Corpus, test_sets: Corpus, cfg: PipelineConfig, ks: Sequence[int],
            generic: Optional[Corpus] = None, jobs: int = 1) -> Dict[int, RunReport]:
    """Sentence-filtering runs with K = 1..n golds, all starting from one shared checkpoint"""
    start, _ = _start_and_vocab(cfg, None, generic, [train_sets], [test_sets])
    reports = {}
    for k in ks:
        k_cfg = replace(cfg, train=replace(cfg.train, num_golds=k))
        reports[k] = preqfas_sft(train_sets, test_sets, k_cfg, start=start, jobs=jobs)
    return reports
