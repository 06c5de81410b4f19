"""Command line entry point: ``tradecorr <subcommand> ...``.

``pipeline`` runs everything; the other subcommands stop after (or run only)
one stage. Settings come from ``--config FILE`` (JSON with RunConfig keys),
then explicit flags, then the TRADECORR_OUTPUT_DIR / TRADECORR_SEED
environment overrides.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .errors import TradecorrError
from .pipeline import GroupResult, stage_bootstrap, stage_cluster, stage_correlate, stage_eigen
from .report import (
    Emitter,
    cmd_pipeline,
    emit_bands,
    emit_correlation,
    emit_dendrograms,
    emit_eigen,
    emit_ordered,
    emit_pooled,
    load_cuts,
    load_linkmaps,
    load_minority,
    load_tracks,
)
from .strategy import read_strategy_matrix
from .synth import GroundTruth, SynthConfig, generate, ground_truth_compare
from .ingest import write_trades

log = logging.getLogger("tradecorr")

# flag name -> RunConfig field
_RUN_FLAGS = {
    "instrument": "instruments",
    "venue": "venues",
    "month": "months",
    "bucket_minutes": "bucket_minutes",
    "activity_threshold": "activity_threshold",
    "sigma_mode": "sigma_mode",
    "alpha": "alpha",
    "bootstrap_b": "bootstrap_B",
    "bootstrap_k": "bootstrap_k",
    "block_length": "block_length",
    "seed": "seed",
    "linkage": "linkage",
    "minority_trials": "minority_trials",
    "minority_min_months": "minority_min_months",
    "exclude_singleton_minority": "exclude_singleton_minority",
    "n_jobs": "n_jobs",
    "output_dir": "output_dir",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("inputs", nargs="*", help="input files")
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--instrument", action="append", help="restrict to instrument (repeatable)")
    p.add_argument("--venue", action="append", choices=["on_book", "off_book"])
    p.add_argument("--month", action="append", help="restrict to YYYY-MM (repeatable)")
    p.add_argument("--bucket-minutes", type=int)
    p.add_argument("--activity-threshold", type=float)
    p.add_argument("--sigma-mode", choices=["unit", "row_std"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--bootstrap-b", type=int)
    p.add_argument("--bootstrap-k", type=int)
    p.add_argument("--block-length", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--linkage", choices=["complete", "single"])
    p.add_argument("--minority-trials", type=int)
    p.add_argument("--minority-min-months", type=int)
    p.add_argument("--exclude-singleton-minority", action="store_true", default=None)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("-o", "--output-dir")


def run_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.from_file(args.config) if args.config else RunConfig()
    changes = {field: getattr(args, flag) for flag, field in _RUN_FLAGS.items() if getattr(args, flag, None) is not None}
    if args.inputs:
        changes["inputs"] = tuple(args.inputs)
    return dataclasses.replace(base, **changes).with_env()


def _matrix_groups(paths) -> list[GroupResult]:
    groups: dict[tuple, GroupResult] = {}
    for p in paths:
        with open(p) as fh:
            M = read_strategy_matrix(fh)
        g = groups.setdefault((M.instrument, M.venue), GroupResult(M.instrument, M.venue))
        g.matrices[M.month] = M
    return [groups[k] for k in sorted(groups, key=lambda k: (k[0], k[1].value))]


def cmd_matrix_stage(stage: str, cfg: RunConfig) -> int:
    """correlate / eigen / bootstrap / cluster on strategy-matrix files."""
    groups = _matrix_groups(cfg.inputs)
    em = Emitter(Path(cfg.output_dir), cfg)
    stage_correlate(groups, cfg)
    if stage == "correlate":
        emit_correlation(em, groups, cfg.alpha)
    elif stage == "eigen":
        stage_eigen(groups, cfg)
        emit_eigen(em, groups)
        emit_pooled(em, groups)
    elif stage == "bootstrap":
        stage_bootstrap(groups, cfg)
        emit_bands(em, groups)
    elif stage == "cluster":
        stage_cluster(groups, cfg)
        emit_dendrograms(em, groups)
        emit_ordered(em, groups)
    for artifact, files in sorted(em.files.items()):
        for f in files:
            print(f"{artifact}\t{Path(cfg.output_dir) / f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    for name in ("n_crowd", "n_dealer", "months", "days_per_month", "factor_strength", "activity",
                 "resting_order_rate", "seed", "second_factor_strength", "instrument", "venue"):
        v = getattr(args, name)
        if v is not None:
            base[name] = v
    cfg = SynthConfig(**base)
    trades, truth = generate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        write_trades(fh, trades)
    with open(args.truth or out.with_suffix(".truth.json"), "w") as fh:
        truth.to_json(fh)
    print(f"{len(trades)} trades -> {out}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    with open(args.truth) as fh:
        truth = GroundTruth.from_json(fh)
    root = Path(args.run_dir)
    inst = truth.config.instrument
    tracks = load_tracks(root, inst)
    card = ground_truth_compare(
        truth,
        cuts=load_cuts(root, inst),
        linkmaps=load_linkmaps(root, inst),
        tracks=tracks,
        minority=load_minority(root, tracks, inst),
    )
    text = json.dumps(card.as_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tradecorr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in [
        ("pipeline", "run every stage on trade CSV files"),
        ("discretize", "trade CSV files -> strategy matrices"),
        ("persist", "trade CSV files -> code links and persistence regression"),
        ("minority", "trade CSV files -> minority-cluster persistence table"),
        ("correlate", "strategy matrix files -> correlation matrices"),
        ("eigen", "strategy matrix files -> eigenvalue reports and pooled density"),
        ("bootstrap", "strategy matrix files -> bootstrap bands"),
        ("cluster", "strategy matrix files -> dendrograms and ordered matrices"),
    ]:
        _add_run_flags(sub.add_parser(name, help=help_))

    p = sub.add_parser("synth", help="generate a synthetic trade stream with ground truth")
    p.add_argument("--config", help="JSON file with SynthConfig keys")
    p.add_argument("--out", required=True, help="trade CSV to write")
    p.add_argument("--truth", help="ground-truth JSON (default: <out>.truth.json)")
    p.add_argument("--n-crowd", type=int)
    p.add_argument("--n-dealer", type=int)
    p.add_argument("--months", type=int)
    p.add_argument("--days-per-month", type=int)
    p.add_argument("--factor-strength", type=float)
    p.add_argument("--second-factor-strength", type=float)
    p.add_argument("--activity", type=float)
    p.add_argument("--resting-order-rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--instrument")
    p.add_argument("--venue", choices=["on_book", "off_book"])

    p = sub.add_parser("score", help="compare a pipeline run with synthetic ground truth")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="write the scorecard JSON here too")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "score":
            return cmd_score(args)
        cfg = run_config(args)
        if args.command in ("correlate", "eigen", "bootstrap", "cluster"):
            return cmd_matrix_stage(args.command, cfg)
        stop = {"pipeline": None, "discretize": "discretize", "persist": "persist", "minority": "minority"}[args.command]
        skip = frozenset({"bootstrap"}) if args.command in ("persist", "minority") else frozenset()
        rc = cmd_pipeline(cfg, stop_after=stop, skip=skip)
        if rc:
            manifest = Path(cfg.output_dir) / "manifest.json"
            print(f"tradecorr: error: {json.loads(manifest.read_text())['error']} (see {manifest})", file=sys.stderr)
        return rc
    except (TradecorrError, ValueError, OSError) as exc:
        print(f"tradecorr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
