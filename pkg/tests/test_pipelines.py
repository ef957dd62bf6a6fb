import copy
import logging
from dataclasses import replace

import pytest

from config import build_pipeline_config
from services.checkpoint import load_checkpoint, save_checkpoint
from services.corpus import Corpus, make_document_set, single_fold, split_sentences
from services.metrics import AlignmentError
from services.relevance import CorpusStats, OverlapScorer, ScoredSentence, TfidfScorer
from services.synthetic import (
    make_generic_corpus, make_multi_document_corpus, make_query_sensitive_corpus, split_corpus,
)
from services.pipelines import (
    FinetuneItem, RunReport, TrainRun, TrainSchedule, build_vocab, compare_runs, evaluation_config, fine_tune,
    initial_checkpoint, k_sweep, oracle_labels, prepare_finetune, preqfas_sd, preqfas_sft, preqfas_wsl,
    pretrain_generic, run_schedule, select_summary, sentence_filter, sequential_finetune, zero_shot_baseline,
    _run_examples,
)
from utils.helpers import has_repeated_trigram, word_count


@pytest.fixture
def multi(tiny_pipeline_config):
    corpus = make_multi_document_corpus(n_sets=5, n_docs=2, n_golds=3, seed=1)
    return split_corpus(corpus, 3)


@pytest.fixture
def generic(tiny_pipeline_config):
    return make_generic_corpus(6, seed=2)


@pytest.fixture
def pretrained(tiny_pipeline_config, generic, multi):
    train, test = multi
    vocab = build_vocab([generic, train], [test])
    return pretrain_generic(generic, tiny_pipeline_config, vocab)


def _ranked(*texts):
    return [ScoredSentence(s, 'd', 1.0, i) for i, s in enumerate(split_sentences(' '.join(texts)))]


# Schedules

def test_schedule_shapes():
    seq = TrainSchedule.sequential(4, steps=2, learning_rate=1e-3, warmup_steps=0)
    assert [run.gold_indices for run in seq.runs] == [(0,), (1,), (2,), (3,)]
    batch = TrainSchedule.batchwise(3, steps=2, learning_rate=1e-3, warmup_steps=0)
    assert len(batch.runs) == 1 and batch.runs[0].gold_indices == (0, 1, 2)


def test_schedule_validation():
    run = TrainRun((0, 1), 1, 1e-3, 0)
    with pytest.raises(ValueError):
        TrainSchedule((run,), 'sequential')
    with pytest.raises(ValueError):
        TrainSchedule((run, run), 'batchwise')
    with pytest.raises(ValueError):
        TrainSchedule((), 'batchwise')


def test_missing_golds_reuse_the_last_one(caplog):
    item = FinetuneItem('x', None, ((7, 5), (8, 5)))
    with caplog.at_level(logging.WARNING):
        examples = _run_examples([item], TrainRun((3,), 1, 1e-3, 0))
    assert examples[0].target_ids == (8, 5)
    assert 'reusing its last gold' in caplog.text


# Filtering and selection

def test_sentence_filter_budget_cuts_last_sentence():
    document_set = make_document_set(
        's', 'alpha beta gamma',
        [('d0', 'one two three four five six seven. alpha two three four five six seven.')],
        ['gold.'],
    )
    doc = sentence_filter(document_set, 10, OverlapScorer(), CorpusStats.from_units([]))
    assert len(doc.sentences) == 1
    assert doc.sentences[0].tokens == ('alpha', 'two', 'three', 'four', 'five', 'six', 'seven')
    assert doc.id == 's-filtered'


def test_sentence_filter_keeps_everything_in_rank_order(two_doc_set):
    stats = CorpusStats.from_document_sets([two_doc_set])
    doc = sentence_filter(two_doc_set, 1000, TfidfScorer(), stats)
    assert len(doc.sentences) == 5
    assert [s.index for s in doc.sentences] == list(range(5))
    assert doc.sentences[0].tokens == ('the', 'cat', 'eats', 'food', '.')


def test_sentence_filter_budget_must_exceed_query(two_doc_set):
    with pytest.raises(ValueError):
        sentence_filter(two_doc_set, 2, OverlapScorer(), CorpusStats.from_units([]))


def test_select_summary_budget_and_blocking():
    ranked = _ranked('the cat sat on the mat.', 'the cat sat on a rug.', 'dogs bark at night.')
    blocked = select_summary(ranked, 100, trigram_block=True)
    assert [s.raw for s in blocked.sentences] == ['the cat sat on the mat.', 'dogs bark at night.']
    assert not has_repeated_trigram(list(blocked.tokens))
    free = select_summary(ranked, 100, trigram_block=False)
    assert len(free.sentences) == 3
    short = select_summary(ranked, 8, trigram_block=False)
    assert word_count(short.tokens) == 8


def test_oracle_labels(tiny_pipeline_config):
    document_set = make_document_set('s', 'q', [('d', 'x y. cat food bowl. dog. cat food.')], ['cat food bowl.'])
    labels = oracle_labels(document_set.documents[0], document_set.gold_summaries, tiny_pipeline_config, k=2)
    assert labels == [0.0, 1.0, 0.0, 1.0]


# Vocabulary and pretraining

def test_vocab_skips_unsupervised_golds():
    train = Corpus((make_document_set('a', 'q', [('d', 'doc words.')], ['trainonly.']),))
    test = Corpus((make_document_set('b', 'q', [('d', 'more words.')], ['secret.']),), 'test')
    vocab = build_vocab([train], [test])
    assert 'trainonly' in vocab and 'more' in vocab
    assert 'secret' not in vocab


def test_pretraining_is_deterministic(tiny_pipeline_config, generic):
    a = pretrain_generic(generic, tiny_pipeline_config)
    b = pretrain_generic(generic, tiny_pipeline_config)
    assert a.same_tensors(b)
    assert a.meta['stage'] == 'pretrain'
    assert len(a.meta['losses']) == tiny_pipeline_config.train.pretrain_steps


def test_pretraining_rejects_multi_document(tiny_pipeline_config, multi):
    with pytest.raises(ValueError):
        pretrain_generic(multi[0], tiny_pipeline_config)


def test_extractive_prestage_is_recorded(tiny_pipeline_config, generic):
    cfg = replace(tiny_pipeline_config, train=replace(tiny_pipeline_config.train, extractive_prestage=True))
    checkpoint = pretrain_generic(generic, cfg)
    assert checkpoint.meta['extractive_trained'] is True
    assert len(checkpoint.meta['extractive_losses']) == cfg.train.extractive_steps


def test_random_init_without_pretraining(tiny_pipeline_config, generic):
    cfg = replace(tiny_pipeline_config, use_pretraining=False)
    checkpoint = initial_checkpoint(cfg, build_vocab([generic]))
    assert checkpoint.meta == {'stage': 'random-init'}


# Fine-tuning schedules

def _items(cfg, corpus, vocab):
    items, _ = prepare_finetune('sft', corpus, cfg, vocab)
    return items


def test_one_sequential_run_equals_batchwise_gold_zero(tiny_pipeline_config, pretrained, multi):
    items = _items(tiny_pipeline_config, multi[0], pretrained.vocab)
    t = tiny_pipeline_config.train
    seq = sequential_finetune(pretrained, items, TrainSchedule.sequential(1, t.steps, t.learning_rate, 0),
                              tiny_pipeline_config)
    batch = run_schedule(pretrained, items, TrainSchedule.batchwise(1, t.steps, t.learning_rate, 0),
                         tiny_pipeline_config)
    assert seq.final.same_tensors(batch.final)


def test_sequential_rejects_batchwise_schedule(tiny_pipeline_config, pretrained, multi):
    items = _items(tiny_pipeline_config, multi[0], pretrained.vocab)
    with pytest.raises(ValueError):
        sequential_finetune(pretrained, items, TrainSchedule.batchwise(2, 1, 1e-3, 0), tiny_pipeline_config)


def test_sequential_runs_chain_through_saved_checkpoints(tiny_pipeline_config, pretrained, multi, tmp_path):
    cfg = tiny_pipeline_config
    items = _items(cfg, multi[0], pretrained.vocab)
    schedule = TrainSchedule.sequential(3, cfg.train.steps, cfg.train.learning_rate, 0)
    result = sequential_finetune(pretrained, items, schedule, cfg)
    assert len(result.runs) == 3
    assert result.final is result.runs[-1]

    path = str(tmp_path / 'run2.qfck')
    save_checkpoint(result.runs[1], path)
    third = schedule.runs[2]
    offline = fine_tune(load_checkpoint(path), _run_examples(items, third), third, cfg, cfg.seed + 2)
    assert offline.same_tensors(result.runs[2])


def test_prepare_finetune_modes(tiny_pipeline_config, pretrained, multi):
    vocab = pretrained.vocab
    _, sft = prepare_finetune('sft', multi[0], tiny_pipeline_config, vocab)
    assert sft.mode == 'sequential' and len(sft.runs) == 3
    capped = replace(tiny_pipeline_config, train=replace(tiny_pipeline_config.train, num_golds=2))
    assert len(prepare_finetune('sft', multi[0], capped, vocab)[1].runs) == 2
    extra = {}
    items, wsl = prepare_finetune('wsl', multi[0], tiny_pipeline_config, vocab, extra)
    assert wsl.mode == 'batchwise'
    assert len(items) == extra['weak_examples'] == 6
    with pytest.raises(ValueError):
        prepare_finetune('nope', multi[0], tiny_pipeline_config, vocab)


def test_single_document_inputs_without_query(tiny_pipeline_config, generic):
    corpus = make_query_sensitive_corpus(4, seed=0)
    cfg = replace(tiny_pipeline_config, use_query=False)
    vocab = build_vocab([generic, corpus])
    items, schedule = prepare_finetune('sd', corpus, cfg, vocab)
    assert all(item.encoder_input.query_len == 1 for item in items)
    assert schedule.mode == 'batchwise'


# End-to-end runs

def test_sft_run_respects_budget_and_is_deterministic(tiny_pipeline_config, generic, multi):
    train, test = multi
    first = preqfas_sft(train, test, tiny_pipeline_config, generic=generic)
    second = preqfas_sft(train, test, tiny_pipeline_config, generic=generic)
    assert first.example_ids == [ex.id for ex in test]
    assert all(word_count(s.tokens) <= tiny_pipeline_config.summary_budget for s in first.summaries)
    assert [s.text for s in first.summaries] == [s.text for s in second.summaries]
    assert first.extra['runs'] == 3
    assert first.log_lines


def test_wsl_run(tiny_pipeline_config, generic, multi, pretrained):
    train, test = multi
    report = preqfas_wsl(train, test, tiny_pipeline_config, start=pretrained)
    assert len(report.summaries) == len(test)
    for summary in report.summaries:
        assert word_count(summary.tokens) <= tiny_pipeline_config.summary_budget
        assert not has_repeated_trigram(list(summary.tokens))
    assert report.extra['weak_examples'] == 6


def test_wsl_without_weak_supervision_ranks_sources(tiny_pipeline_config, multi):
    train, test = multi
    cfg = replace(tiny_pipeline_config, use_weak_supervision=False)
    report = preqfas_wsl(train, test, cfg)
    sources = {s.tokens for ex in test for _, s in ex.all_sentences()}
    for summary in report.summaries:
        for sentence in summary.sentences[:-1]:
            assert sentence.tokens in sources
    assert 'pretrain_seconds' not in report.timing


def test_sd_run_over_folds(tiny_pipeline_config, generic):
    corpus = make_query_sensitive_corpus(6, seed=3)
    train, test = split_corpus(corpus, 4)
    report = preqfas_sd(None, single_fold(train, test), tiny_pipeline_config, generic=generic)
    assert report.example_ids == [ex.id for ex in test]
    assert report.extra['folds'] == 1
    assert set(report.scores.mean()) >= {'rouge-1', 'rouge-2', 'rouge-l'}


@pytest.mark.parametrize('kind', ['extractive', 'abstractive'])
def test_zero_shot_leaves_checkpoint_untouched(tiny_pipeline_config, pretrained, multi, kind):
    _, test = multi
    before = copy.deepcopy(pretrained)
    report = zero_shot_baseline(test, tiny_pipeline_config, kind, pretrained)
    assert pretrained.same_tensors(before)
    for summary in report.summaries:
        assert word_count(summary.tokens) <= tiny_pipeline_config.summary_budget


def test_zero_shot_extractive_is_verbatim(tiny_pipeline_config, pretrained, multi):
    _, test = multi
    report = zero_shot_baseline(test, tiny_pipeline_config, 'extractive', pretrained)
    assert report.extra['extractive_source'] == 'relevance'
    for example, summary in zip(test, report.summaries):
        sources = [s.tokens for _, s in example.all_sentences()]
        for sentence in summary.sentences:
            assert any(src[:len(sentence.tokens)] == sentence.tokens for src in sources)


def test_zero_shot_uses_trained_head(tiny_pipeline_config, generic, multi):
    _, test = multi
    cfg = replace(tiny_pipeline_config, train=replace(tiny_pipeline_config.train, extractive_prestage=True))
    checkpoint = pretrain_generic(generic, cfg, build_vocab([generic], [test]))
    report = zero_shot_baseline(test, cfg, 'extractive', checkpoint)
    assert report.extra['extractive_source'] == 'model'


def test_zero_shot_unknown_kind(tiny_pipeline_config, pretrained, multi):
    with pytest.raises(ValueError):
        zero_shot_baseline(multi[1], tiny_pipeline_config, 'hybrid', pretrained)


# Reports and analysis

def test_run_report_save_and_load(tiny_pipeline_config, multi, tmp_path):
    _, test = multi
    cfg = replace(tiny_pipeline_config, use_weak_supervision=False)
    report = preqfas_wsl(multi[0], test, cfg)
    directory = report.save(str(tmp_path / 'run'))
    for name in ('scores.csv', 'config.json', 'report.json', 'log.txt'):
        assert (tmp_path / 'run' / name).exists()
    assert len(list((tmp_path / 'run' / 'summaries').iterdir())) == len(test)
    loaded = RunReport.load(directory)
    assert loaded.kind == 'preqfas-wsl'
    assert loaded.example_ids == report.example_ids
    assert [s.tokens for s in loaded.summaries] == [s.tokens for s in report.summaries]
    assert loaded.scores.rows == report.scores.rows


def test_run_report_alignment(multi, tiny_pipeline_config):
    cfg = replace(tiny_pipeline_config, use_weak_supervision=False)
    report = preqfas_wsl(multi[0], multi[1], cfg)
    with pytest.raises(AlignmentError):
        RunReport('x', report.example_ids, report.summaries[:-1], report.scores, {})


def test_compare_runs(tiny_pipeline_config, multi):
    _, test = multi
    cfg = replace(tiny_pipeline_config, use_weak_supervision=False)
    a = preqfas_wsl(multi[0], test, cfg)
    b = preqfas_wsl(multi[0], test, replace(cfg, use_trigram_block=False))
    rows = compare_runs(a, a)
    assert all(row.result.p_value == 1.0 and not row.significant for row in rows)
    assert {(row.metric, row.measure) for row in compare_runs(a, b, metrics=('rouge-1',))} == \
        {('rouge-1', 'recall'), ('rouge-1', 'f1')}
    shifted = RunReport('y', a.example_ids[::-1], a.summaries[::-1],
                        replace(a.scores, example_ids=a.example_ids[::-1], rows=a.scores.rows[::-1]), {})
    with pytest.raises(AlignmentError):
        compare_runs(a, shifted)


def test_evaluation_config_for_multi_document(tiny_pipeline_config, multi, generic):
    assert evaluation_config(tiny_pipeline_config, multi[1]).truncate_words == tiny_pipeline_config.summary_budget
    assert evaluation_config(tiny_pipeline_config, generic).truncate_words is None


def test_k_sweep_shares_start(tiny_pipeline_config, generic, multi):
    train, test = multi
    reports = k_sweep(train, test, tiny_pipeline_config, [1, 2], generic=generic)
    assert sorted(reports) == [1, 2]
    assert reports[1].extra['runs'] == 1 and reports[2].extra['runs'] == 2


@pytest.mark.slow
def test_pretraining_lowers_loss(tiny_pipeline_config):
    corpus = make_generic_corpus(50, seed=0, noise=0.0)
    cfg = replace(tiny_pipeline_config, train=replace(tiny_pipeline_config.train, pretrain_steps=200,
                                                      log_interval=20, learning_rate=3e-3, warmup_steps=10))
    losses = [loss for _, loss in pretrain_generic(corpus, cfg).meta['losses']]
    assert losses[-1] < losses[0]


def test_debatepedia_profile_caps_generated_tokens(generic):
    cfg = build_pipeline_config({
        'profile': 'debatepedia',
        'seed': 1,
        'model': {'d_model': 16, 'n_heads': 2, 'n_enc_layers': 1, 'n_dec_layers': 1, 'd_ff': 32, 'dropout': 0.0},
        'train': {'steps': 2, 'pretrain_steps': 2, 'batch_size': 4, 'warmup_steps': 1, 'log_interval': 1},
        'beam': {'beam_size': 2, 'trigram_block': False},
    })
    assert cfg.beam.max_len == 25
    train, test = split_corpus(make_query_sensitive_corpus(6, seed=4), 4)
    report = preqfas_sd(None, single_fold(train, test), cfg, generic=generic)
    assert all(len(summary.tokens) <= 25 for summary in report.summaries)


def _scaled_config(seed, **changes):
    return build_pipeline_config({
        'seed': seed,
        'filter_budget_n': 80,
        'summary_budget': 40,
        'model': {'d_model': 32, 'n_heads': 4, 'n_enc_layers': 1, 'n_dec_layers': 1, 'd_ff': 64,
                  'dropout': 0.0, 'max_src_len': 96, 'max_tgt_len': 48},
        'train': {'steps': 60, 'pretrain_steps': 150, 'pretrain_examples': 60, 'batch_size': 8,
                  'learning_rate': 3e-3, 'warmup_steps': 10, 'log_interval': 50},
        'beam': {'beam_size': 3, 'max_len': 40},
        **changes,
    })


@pytest.mark.slow
def test_more_golds_do_not_hurt():
    improved = 0
    for seed in range(5):
        cfg = _scaled_config(seed)
        train, test = split_corpus(make_multi_document_corpus(n_sets=30, n_docs=2, n_golds=4, seed=seed), 24)
        reports = k_sweep(train, test, cfg, [1, 2, 3, 4])
        f1 = [reports[k].scores.mean()['rouge-1'].f1 for k in (1, 2, 3, 4)]
        improved += all(b >= a for a, b in zip(f1, f1[1:]))
    assert improved >= 4


@pytest.mark.slow
def test_query_and_pretraining_help():
    corpus = make_query_sensitive_corpus(600, seed=0)
    folds = single_fold(*split_corpus(corpus, 500))
    full = preqfas_sd(None, folds, _scaled_config(0))
    no_query = preqfas_sd(None, folds, _scaled_config(0, use_query=False))
    no_pretraining = preqfas_sd(None, folds, _scaled_config(0, use_pretraining=False))
    for ablated in (no_query, no_pretraining):
        row = next(r for r in compare_runs(full, ablated, metrics=('rouge-1',), measures=('f1',)))
        assert row.mean_a > row.mean_b and row.significant
