"""
Command handlers for the query-focused summarization toolkit
"""

import os
import sys
import logging
import argparse
from datetime import datetime
from typing import List, Optional, Sequence, TextIO

from config import Config, PipelineConfig, config_to_json, load_pipeline_config
from services.checkpoint import build_model, load_checkpoint, save_checkpoint
from services.corpus import Corpus, Summary, kfold_split, load_duc_dir, load_jsonl, single_fold, write_jsonl
from services.metrics import AlignmentError, evaluate_summaries
from services.pipelines import (
    APPROACHES, ZERO_SHOT_KINDS, RunReport, build_vocab, compare_runs, evaluation_config, generate_summaries,
    k_sweep, prepare_finetune, preqfas_sd, preqfas_sft, preqfas_wsl, pretrain_generic, run_schedule,
    zero_shot_baseline,
)
from services.synthetic import (
    make_generic_corpus, make_multi_document_corpus, make_query_sensitive_corpus,
)
from utils.helpers import ensure_dir, sanitize_filename, write_text
from utils.messages import ReportTemplates

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

PIPELINE_KINDS = APPROACHES + tuple(f'zero-shot-{k}' for k in ZERO_SHOT_KINDS)


class UsageError(Exception):
    """Bad command line"""


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad arguments"""

    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def validate_config(path: Optional[str], overrides: Sequence[str] = (),
                    echo: Optional[TextIO] = None) -> PipelineConfig:
    """
    Load, fill and validate an experiment config

    Args:
        path: JSON config file, or None for defaults
        overrides: key=value strings
        echo: Stream that receives the effective config as JSON

    Raises:
        ConfigError: On unknown keys or violated bounds (message names the key)
    """
    cfg = load_pipeline_config(path, overrides)
    text = config_to_json(cfg)
    if echo is not None:
        echo.write(text + '\n')
    logger.info(f"Effective config:\n{text}")
    return cfg


def load_corpus(path: str, split: str) -> Corpus:
    """JSONL file, or a directory laid out as <set>/query.txt, docs/, golds/"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"No such corpus: {path}")
    corpus = load_duc_dir(path, split) if os.path.isdir(path) else load_jsonl(path, split)
    logger.info(f"Loaded {len(corpus)} {split} examples from {path}")
    return corpus


def _default_output(kind: str) -> str:
    return os.path.join(Config.RUNS_DIR, f"{kind}-{datetime.now().strftime('%Y%m%d-%H%M%S')}")


def _print(text: str) -> None:
    sys.stdout.write(text + '\n')


def ingest_command(args, cfg: PipelineConfig) -> int:
    """Validate a corpus and optionally normalize it to JSONL"""
    corpus = load_corpus(args.input, args.split)
    if args.output:
        write_jsonl(corpus, args.output)
    documents = sum(len(ex.documents) for ex in corpus)
    golds = sum(len(ex.gold_summaries) for ex in corpus)
    _print(f"{len(corpus)} examples, {documents} documents, {golds} gold summaries")
    return EXIT_OK


def pretrain_command(args, cfg: PipelineConfig) -> int:
    """Train a generic summarizer and save its checkpoint"""
    generic = load_corpus(args.corpus, 'train') if args.corpus else \
        make_generic_corpus(cfg.train.pretrain_examples, seed=cfg.seed)
    extra = [load_corpus(path, 'train') for path in args.vocab_corpus]
    checkpoint = pretrain_generic(generic, cfg, build_vocab([generic, *extra]))
    save_checkpoint(checkpoint, args.output)
    _print(f"Checkpoint written to {args.output}")
    return EXIT_OK


def finetune_command(args, cfg: PipelineConfig) -> int:
    """Fine-tune a checkpoint with one approach; sequential runs also save every intermediate run"""
    start = load_checkpoint(args.checkpoint)
    train = load_corpus(args.train, 'train')
    items, schedule = prepare_finetune(args.kind, train, cfg, start.vocab)
    result = run_schedule(start, items, schedule, cfg)
    if len(result.runs) > 1:
        stem, ext = os.path.splitext(args.output)
        for i, checkpoint in enumerate(result.runs, start=1):
            save_checkpoint(checkpoint, f"{stem}.run{i}{ext}")
    save_checkpoint(result.final, args.output)
    _print(f"{len(result.runs)} fine-tuning run(s); checkpoint written to {args.output}")
    return EXIT_OK


def generate_command(args, cfg: PipelineConfig) -> int:
    """Write one summary per example to <output>/summaries/<id>.txt"""
    checkpoint = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus, 'test')
    summaries = generate_summaries(args.kind, build_model(checkpoint), checkpoint.vocab, corpus, cfg)
    target = ensure_dir(os.path.join(args.output, 'summaries'))
    for example, summary in zip(corpus, summaries):
        write_text(os.path.join(target, f"{sanitize_filename(example.id)}.txt"), summary.text + '\n')
    _print(f"Wrote {len(summaries)} summaries to {target}")
    return EXIT_OK


def eval_command(args, cfg: PipelineConfig) -> int:
    """Score <hyps>/<id>.txt files against a corpus and write scores.csv"""
    corpus = load_corpus(args.corpus, 'test')
    hyps_dir = args.hyps
    if os.path.isdir(os.path.join(hyps_dir, 'summaries')):
        hyps_dir = os.path.join(hyps_dir, 'summaries')
    summaries: List[Summary] = []
    for example in corpus:
        path = os.path.join(hyps_dir, f"{sanitize_filename(example.id)}.txt")
        if not os.path.isfile(path):
            raise AlignmentError(f"No hypothesis for example {example.id!r} in {hyps_dir}")
        with open(path, 'r', encoding='utf-8') as f:
            summaries.append(Summary.from_text(f.read().strip()))
    table = evaluate_summaries(summaries, corpus, evaluation_config(cfg, corpus), args.jobs)
    output = ensure_dir(args.output or args.hyps)
    table.to_csv(os.path.join(output, 'scores.csv'))
    _print(ReportTemplates.score_table(table.mean(), f"{len(table)} examples"))
    return EXIT_OK


def _pipeline_data(args, cfg: PipelineConfig):
    """Corpora for a pipeline run; synthetic data stands in for anything not given"""
    train = load_corpus(args.train, 'train') if args.train else None
    test = load_corpus(args.test, 'test') if args.test else None
    generic = load_corpus(args.generic, 'train') if args.generic else None
    if args.kind == 'sd':
        if args.corpus:
            if cfg.folds < 2:
                raise ValueError("--corpus needs folds >= 2; give --train and --test for a single split")
            return kfold_split(load_corpus(args.corpus, 'train'), cfg.folds, cfg.seed), generic
        if train is None or test is None:
            logger.warning("No --train/--test given: using the synthetic query-sensitive corpus")
            train = train or make_query_sensitive_corpus(40, seed=cfg.seed, split='train', prefix='qs-train')
            test = test or make_query_sensitive_corpus(10, seed=cfg.seed + 1, split='test', prefix='qs-test')
        return single_fold(train, test), generic
    if (train is None and not args.kind.startswith('zero-shot')) or test is None:
        logger.warning("No --train/--test given: using the synthetic multi-document corpus")
        train = train or make_multi_document_corpus(8, seed=cfg.seed, split='train', prefix='md-train')
        test = test or make_multi_document_corpus(4, seed=cfg.seed + 1, split='test', prefix='md-test')
    return (train, test), generic


def pipeline_command(args, cfg: PipelineConfig) -> int:
    """Run one pipeline end to end and save its run directory"""
    if args.export_weak and args.kind != 'wsl':
        raise UsageError("--export-weak only applies to --kind wsl")
    start = load_checkpoint(args.checkpoint) if args.checkpoint else None
    data, generic = _pipeline_data(args, cfg)
    output = args.output or _default_output(args.kind)

    if args.k_sweep:
        if args.kind != 'sft':
            raise UsageError("--k-sweep only applies to --kind sft")
        train, test = data
        ks = [int(k) for k in args.k_sweep.split(',') if k.strip()]
        reports = k_sweep(train, test, cfg, ks, generic=generic, jobs=args.jobs)
        for k, report in reports.items():
            report.save(os.path.join(output, f'k{k}'))
        _print(ReportTemplates.k_sweep_table((k, r.scores.mean()) for k, r in reports.items()))
        return EXIT_OK

    if args.kind == 'sd':
        report = preqfas_sd(start, data, cfg, generic=generic, jobs=args.jobs)
    elif args.kind == 'sft':
        report = preqfas_sft(*data, cfg, generic=generic, start=start, jobs=args.jobs)
    elif args.kind == 'wsl':
        report = preqfas_wsl(*data, cfg, generic=generic, start=start, jobs=args.jobs, export_weak=args.export_weak)
    else:
        if start is None:
            generic = generic or make_generic_corpus(cfg.train.pretrain_examples, seed=cfg.seed)
            start = pretrain_generic(generic, cfg, build_vocab([generic], [data[1]]))
        report = zero_shot_baseline(data[1], cfg, args.kind[len('zero-shot-'):], start, jobs=args.jobs)

    report.save(output)
    _print(ReportTemplates.run_summary(report.kind, len(report.summaries), report.timing, output))
    _print(ReportTemplates.score_table(report.scores.mean()))
    return EXIT_OK


def report_command(args, cfg: PipelineConfig) -> int:
    """Show one run's mean scores, or compare two runs with paired t-tests"""
    if len(args.run) not in (1, 2):
        raise UsageError("report takes one --run (show) or two (compare)")
    reports = [RunReport.load(path) for path in args.run]
    if len(reports) == 1:
        _print(ReportTemplates.score_table(reports[0].scores.mean(), f"{reports[0].kind} ({args.run[0]})"))
    else:
        rows = compare_runs(*reports)
        _print(ReportTemplates.comparison_table(rows, args.run[0], args.run[1]))
    return EXIT_OK


def _common_arguments() -> argparse.ArgumentParser:
    common = CliArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON experiment config')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override a config key (repeatable)')
    common.add_argument('--jobs', type=int, default=Config.DEFAULT_JOBS, help='parallel evaluation workers')
    common.add_argument('--show-config', action='store_true', help='print the effective config and exit')
    return common


def setup_command_handlers(subparsers, common: argparse.ArgumentParser) -> None:
    """Register every subcommand"""
    p = subparsers.add_parser('ingest', parents=[common], help='validate and normalize a corpus')
    p.add_argument('--input', required=True)
    p.add_argument('--split', default='train', choices=('train', 'validation', 'test'))
    p.add_argument('--output', help='write the corpus as JSONL')
    p.set_defaults(handler=ingest_command)

    p = subparsers.add_parser('pretrain', parents=[common], help='generic pretraining')
    p.add_argument('--output', required=True, help='checkpoint path')
    p.add_argument('--corpus', help='generic corpus (synthetic when omitted)')
    p.add_argument('--vocab-corpus', action='append', default=[], help='extra corpus for vocabulary coverage')
    p.set_defaults(handler=pretrain_command)

    p = subparsers.add_parser('finetune', parents=[common], help='fine-tune a checkpoint')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--train', required=True)
    p.add_argument('--kind', required=True, choices=APPROACHES)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=finetune_command)

    p = subparsers.add_parser('generate', parents=[common], help='summarize a corpus')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--corpus', required=True)
    p.add_argument('--kind', required=True, choices=APPROACHES)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=generate_command)

    p = subparsers.add_parser('eval', parents=[common], help='score summaries')
    p.add_argument('--hyps', required=True, help='directory of <id>.txt summaries')
    p.add_argument('--corpus', required=True)
    p.add_argument('--output', help='directory for scores.csv (defaults to --hyps)')
    p.set_defaults(handler=eval_command)

    p = subparsers.add_parser('pipeline', parents=[common], help='run a pipeline end to end')
    p.add_argument('--kind', required=True, choices=PIPELINE_KINDS)
    p.add_argument('--train')
    p.add_argument('--test')
    p.add_argument('--corpus', help='single corpus split into folds (sd only)')
    p.add_argument('--generic', help='generic pretraining corpus')
    p.add_argument('--checkpoint', help='start from this checkpoint instead of pretraining')
    p.add_argument('--k-sweep', help='comma-separated gold counts, e.g. 1,2,3,4 (sft only)')
    p.add_argument('--export-weak', metavar='PATH', help='write the weak training corpus as JSONL (wsl only)')
    p.add_argument('--output', help='run directory')
    p.set_defaults(handler=pipeline_command)

    p = subparsers.add_parser('report', parents=[common], help='show or compare run directories')
    p.add_argument('--run', action='append', default=[], required=True)
    p.set_defaults(handler=report_command)


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(prog='qfas', description='Query-focused abstractive summarization toolkit')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True
    setup_command_handlers(subparsers, _common_arguments())
    return parser


def run(argv: Sequence[str]) -> int:
    """
    Parse arguments and dispatch

    Returns:
        0 on success, 1 on usage errors, 2 on data or validation errors, 3 on runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
        if args.jobs < 1:
            raise UsageError(f"{parser.format_usage()}--jobs must be >= 1")
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_USAGE

    try:
        cfg = validate_config(args.config, args.overrides, echo=sys.stdout if args.show_config else None)
        if args.show_config:
            return EXIT_OK
        logger.info(f"Running command {args.command}")
        return args.handler(args, cfg)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DATA
    except Exception as e:
        logger.exception(f"{args.command} crashed: {e}")
        sys.stderr.write(f"fatal: {type(e).__name__}: {e}\n")
        return EXIT_RUNTIME
