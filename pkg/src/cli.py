"""
Command-line entry point: gen-synth, train, evaluate, sweep-c, overlap and
project.

Run-configuration flags are generated from the RunConfig fields
(``--recon-batch`` sets ``recon_batch``) and override values from
``--config FILE``. Every command prints its resolved configuration as
``key=value`` lines before doing any work; logs go to stderr.
"""

import argparse
import dataclasses
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd

from src.analysis.metrics import overlap_report, pca_project
from src.config import RunConfig, format_config, load_config, resolve_config
from src.data_collection.corpus import describe_dataset
from src.data_collection.sample_data_generator import gen_synthetic, save_synthetic
from src.errors import CarolError, ConfigError, stage_errors
from src.pipeline.experiment import (
    evaluate_checkpoint, projection_frame, read_embeddings, run_experiment, run_training,
    sweep_c, write_run_artifacts, write_sweep,
)
from src.utils.common import create_directories, save_data, setup_logging

logger = logging.getLogger(__name__)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')
SWEEP_FIELDS = ('c', 'seed', 'distance')


# ----------------------
# Argument types
# ----------------------

def _list_of(convert: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse(text: str) -> List[Any]:
        try:
            values = [convert(part) for part in text.split(',') if part.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}: {e}") from e
        if not values:
            raise argparse.ArgumentTypeError(f"empty list {text!r}")
        return values
    return parse


def _flag(name: str) -> str:
    return '--' + name.replace('_', '-')


def _field_type(f: dataclasses.Field) -> Callable[[str], Any]:
    if f.name == 'hidden_grid':
        return _list_of(int)
    if f.default is None:
        return str
    return type(f.default)


def add_config_arguments(parser: argparse.ArgumentParser, skip: Sequence[str] = ()) -> None:
    """Add ``--config`` and one flag per RunConfig field (default None = not given)."""
    group = parser.add_argument_group('run configuration')
    group.add_argument('--config', help='JSON config file; flags override its values')
    for f in dataclasses.fields(RunConfig):
        if f.name in skip:
            continue
        group.add_argument(_flag(f.name), dest=f.name, type=_field_type(f), default=None,
                           help=f"default: {f.default if f.default is not dataclasses.MISSING else ''}")


def config_from_args(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None,
                     skip: Sequence[str] = ()) -> RunConfig:
    """
    Resolve the RunConfig from --config, generated flags and command-specific
    values. Fields in ``skip`` are never read from ``args``; the command sets
    them per cell or not at all.
    """
    overrides = {f.name: getattr(args, f.name, None) for f in dataclasses.fields(RunConfig)
                 if f.name not in skip}
    overrides.update(extra or {})
    with stage_errors('config'):
        if args.config:
            return load_config(args.config, overrides)
        return resolve_config(None, overrides)


def print_config(cfg: RunConfig) -> None:
    print(format_config(cfg))


# ----------------------
# Commands
# ----------------------

def cmd_gen_synth(args: argparse.Namespace) -> int:
    params = {
        'n_minority': args.n_minority,
        'imbalance_ratio': args.imbalance_ratio,
        'overlap': args.overlap,
        'vocab_size': args.vocab_size,
        'doc_len': args.doc_len,
        'seed': args.seed,
        'feat_dim': args.feat_dim,
    }
    for name, value in params.items():
        print(f"{name}={value}")
    print(f"output={args.output}")

    with stage_errors('gen_synth'):
        ds = gen_synthetic(**params)
        paths = save_synthetic(ds, args.output, params)
    for name, value in describe_dataset(ds).items():
        print(f"{name}={value}")
    print(f"corpus={paths['corpus']}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    print_config(cfg)
    report, artifacts = run_training(cfg)
    paths = write_run_artifacts(report, artifacts, cfg.output_dir, checkpoint=True)
    for line in report.summary_lines():
        print(line)
    print(f"checkpoint={paths['checkpoint']}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    print_config(cfg)
    if args.checkpoint:
        print(f"checkpoint={args.checkpoint}")
        report, artifacts = evaluate_checkpoint(cfg, args.checkpoint)
    else:
        report, artifacts = run_experiment(cfg)
    paths = write_run_artifacts(report, artifacts, cfg.output_dir)
    for line in report.summary_lines():
        print(line)
    if args.plot:
        from src.visualization.embedding_plots import EmbeddingVisualizer
        EmbeddingVisualizer(cfg.output_dir).plot_projection(pd.read_csv(paths['projection']))
    print(f"report={paths['run_report']}")
    return 0


def cmd_sweep_c(args: argparse.Namespace) -> int:
    cfg = config_from_args(args, skip=SWEEP_FIELDS)
    distances = args.distances or [cfg.distance]
    print_config(cfg)
    print(f"sweep_c={','.join(f'{c:g}' for c in args.c_values)}")
    print(f"sweep_seeds={','.join(str(s) for s in args.seeds)}")
    print(f"sweep_distances={','.join(distances)}")

    result = sweep_c(cfg, args.c_values, args.seeds, jobs=args.jobs, distances=distances)
    paths = write_sweep(result, cfg.output_dir)
    if args.plot and not result.means.empty:
        from src.visualization.embedding_plots import EmbeddingVisualizer
        paths['sweep_plot'] = EmbeddingVisualizer(cfg.output_dir).plot_sweep(
            result.means, result.best_by_distance)

    print(result.means.to_string(index=False))
    failed = int((result.table['status'] != 'ok').sum())
    print(f"failed_cells={failed}")
    for kind, c in result.best_by_distance.items():
        print(f"best_c[{kind}]={c} selection={result.selection}")
    print(f"best_c={result.best_c} best_distance={result.best_distance} selection={result.selection}")
    print(f"table={paths['sweep_table']}")
    return 0


def cmd_overlap(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    print_config(cfg)
    print(f"embeddings={args.embeddings}")

    with stage_errors('overlap'):
        embeddings, labels = read_embeddings(args.embeddings)
        report = overlap_report(embeddings, labels, cfg.k, cfg.overlap_distance_kind)
        path = save_data(pd.DataFrame([report.to_dict()]), os.path.join(cfg.output_dir, 'overlap.csv'))
    print(f"si={report.si:.6f}")
    print(f"kdn={report.kdn:.6f}")
    print(f"overlap={path}")
    return 0


def cmd_project(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    print_config(cfg)
    print(f"embeddings={args.embeddings}")
    print(f"dims={args.dims}")

    with stage_errors('project'):
        embeddings, labels = read_embeddings(args.embeddings)
        projection = pca_project(embeddings, dims=args.dims)
        create_directories([cfg.output_dir])
        frame = projection_frame(projection, labels)
        path = save_data(frame, os.path.join(cfg.output_dir, 'projection.csv'))
    for warning in projection.warnings:
        print(f"warning={warning}")
    print(f"explained_variance={','.join(f'{v:.6g}' for v in projection.explained_variance)}")
    if args.plot:
        from src.visualization.embedding_plots import EmbeddingVisualizer
        print(f"plot={EmbeddingVisualizer(cfg.output_dir).plot_projection(frame)}")
    print(f"projection={path}")
    return 0


# ----------------------
# Parser and entry point
# ----------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='carol',
        description='Class-aware contrastive loss experiments on imbalanced binary text corpora')
    parser.add_argument('--log-level', default='INFO', choices=LOG_LEVELS, type=str.upper)
    parser.add_argument('--log-file', help='Also write logs to this file')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    gen = sub.add_parser('gen-synth', help='Generate a synthetic imbalanced corpus')
    gen.add_argument('--n-minority', type=int, default=100)
    gen.add_argument('--imbalance-ratio', type=float, default=9.0)
    gen.add_argument('--overlap', type=float, default=0.5,
                     help='Class overlap dial in [0, 1] (0: disjoint vocabularies, 1: identical)')
    gen.add_argument('--vocab-size', type=int, default=2000)
    gen.add_argument('--doc-len', type=int, default=40)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--feat-dim', type=int, default=RunConfig.feat_dim)
    gen.add_argument('-o', '--output', required=True, help='Output directory')
    gen.set_defaults(handler=cmd_gen_synth)

    train = sub.add_parser('train', help='Train the encoder and save a checkpoint')
    add_config_arguments(train)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser('evaluate', help='Run the full protocol and write a run report')
    add_config_arguments(evaluate)
    evaluate.add_argument('--checkpoint', help='Evaluate a saved encoder instead of training one')
    evaluate.add_argument('--plot', action='store_true', help='Also write projection.png')
    evaluate.set_defaults(handler=cmd_evaluate)

    sweep = sub.add_parser('sweep-c', help='Run the protocol over c values and seeds')
    add_config_arguments(sweep, skip=SWEEP_FIELDS)
    sweep.add_argument('--c', dest='c_values', type=_list_of(float), required=True,
                       help='Comma-separated c values')
    sweep.add_argument('--seeds', type=_list_of(int), required=True, help='Comma-separated seeds')
    sweep.add_argument('--distances', type=_list_of(str), default=None,
                       help='Comma-separated contrastive distances (default: the config distance)')
    sweep.add_argument('--jobs', type=int, default=1, help='Parallel worker processes')
    sweep.add_argument('--plot', action='store_true', help='Also write sweep_plot.png')
    sweep.set_defaults(handler=cmd_sweep_c)

    overlap = sub.add_parser('overlap', help='SI and kDN of an embeddings CSV')
    overlap.add_argument('--embeddings', required=True)
    overlap.add_argument('--k', type=int, default=None)
    overlap.add_argument('--distance', dest='overlap_distance', default=None,
                         help='euclidean, chebyshev or cosine')
    overlap.add_argument('--config')
    overlap.add_argument('--output-dir', dest='output_dir')
    overlap.set_defaults(handler=cmd_overlap)

    project = sub.add_parser('project', help='PCA projection of an embeddings CSV')
    project.add_argument('--embeddings', required=True)
    project.add_argument('--dims', type=int, default=2)
    project.add_argument('--plot', action='store_true', help='Also write projection.png')
    project.add_argument('--config')
    project.add_argument('--output-dir', dest='output_dir')
    project.set_defaults(handler=cmd_project)

    return parser


def report_error(error: CarolError) -> int:
    """Print the one-line error summary and return the process exit code."""
    print(f"error stage={error.stage or 'unknown'} type={error.__class__.__name__} "
          f"message={error.message}", file=sys.stderr)
    return error.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_file, level=getattr(logging, args.log_level))

    try:
        if getattr(args, 'jobs', 1) < 1:
            raise ConfigError("--jobs must be >= 1", stage='config')
        return args.handler(args)
    except CarolError as e:
        return report_error(e)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(f"error stage=unknown type={e.__class__.__name__} message={e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
