"""``echorange`` command line: synth, train, eval and report subcommands.

Exit codes:
    0  success
    2  configuration or usage error (bad JSON, conflicting flags, --out collision)
    3  I/O error (missing or unreadable files, malformed WAV or checkpoint files)
    4  incompatibility (checkpoint written for a different model configuration)
    5  training aborted on a non-finite loss or gradient
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DomainError,
    IncompatibleCheckpointError,
    NoDataError,
    ShapeError,
    TrainingAborted,
    ValidationError,
    WavFormatError,
)
from .eval import (
    DEFAULT_BIN_WIDTH,
    SUMMARY_COLUMNS,
    ErrorCurve,
    avg_pred_baseline,
    baseline_errors,
    binned_error_curve,
    emit_report,
    predict_traces,
    read_csv,
    summarize,
    summary_row,
    trace_errors,
    trace_f1,
)
from .loss import RegressorKind
from .net.checkpoint import CheckpointFormatError, load_checkpoint
from .net.crnn import CRNNConfig
from .sim.dataset import DatasetConfig, load_manifest, make_dataset
from .train.loop import TrainConfig, compute_standardization, load_scenes, load_stats, train_detector, train_distance

log = logging.getLogger("echorange")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INCOMPATIBLE = 4
EXIT_ABORTED = 5


class UsageError(ConfigError):
    """Flags that conflict or an output directory that would be clobbered."""


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def prepare_out(out: str | None, force: bool) -> Path:
    """Create ``out``; refuse a non-empty existing directory unless ``force``."""
    if not out:
        raise UsageError("--out is required")
    p = Path(out)
    if p.exists() and (not p.is_dir() or any(p.iterdir())):
        if not force:
            raise UsageError(f"{p} already exists; pass --force to overwrite")
        if p.is_dir():
            shutil.rmtree(p)
        else:
            p.unlink()
    p.mkdir(parents=True, exist_ok=True)
    return p


# --- subcommands ----------------------------------------------------------


def cmd_synth(args) -> int:
    config = DatasetConfig.load(args.config)
    out = prepare_out(args.out, args.force)
    manifest = make_dataset(config, out, seed=args.seed, jobs=args.jobs)
    print(f"manifest: {manifest}")
    print(f"manifest sha256: {file_digest(manifest)}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.load(args.config).to_dict() if args.config else TrainConfig().to_dict()
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.detector_only:
        if args.regressor or args.init:
            raise UsageError("--detector-only cannot be combined with --regressor or --init")
        cfg["regressor"] = None
    elif args.regressor:
        RegressorKind.parse(args.regressor)
        cfg["regressor"] = args.regressor
    if args.init:
        cfg["init_checkpoint"] = args.init
    if args.max_epochs is not None:
        cfg["max_epochs"] = args.max_epochs
    if args.patience is not None:
        cfg["patience_epochs"] = args.patience
    return TrainConfig.from_dict(cfg)


def cmd_train(args) -> int:
    config = _train_config(args)
    manifest = load_manifest(args.manifest)
    if config.init_checkpoint and not Path(config.init_checkpoint).exists():
        raise FileNotFoundError(config.init_checkpoint)
    out = prepare_out(args.out, args.force)
    if config.regressor is None:
        result = train_detector(manifest, config)
    else:
        result = train_distance(manifest, config)
    paths = result.save(out)
    print(f"stopped after {len(result.log.records)} epochs ({result.log.stop_reason}); best epoch {result.log.best_epoch}")
    print(f"val loss {result.val_loss:.5f}  val F1 {result.val_f1:.4f}  val MAE {result.val_mae:.4f} m")
    if result.init_source:
        print(f"initialized from {result.init_source}")
    print(f"checkpoint: {paths['checkpoint']}")
    return EXIT_OK


def _resolve_checkpoints(args) -> list[tuple[str, Path]]:
    """(label, checkpoint path) pairs from --checkpoint and/or --ablate."""
    pairs = []
    if args.ablate:
        if not args.runs_dir:
            raise UsageError("--ablate needs --runs-dir holding one <regressor>/model.ckpt per entry")
        for label in [s.strip() for s in args.ablate.split(",") if s.strip()]:
            RegressorKind.parse(label)
            pairs.append((label, Path(args.runs_dir) / label.replace(":", "_") / "model.ckpt"))
    for ck in args.checkpoint or []:
        meta = Path(ck).with_name("train_config.json")
        label = "detector"
        if meta.exists():
            label = json.loads(meta.read_text()).get("regressor") or "detector"
        pairs.append((label, Path(ck)))
    if not pairs:
        raise UsageError("eval needs --checkpoint or --ablate")
    return pairs


def _expected_model(ckpt: Path, explicit: str | None) -> CRNNConfig | None:
    if explicit:
        doc = json.loads(Path(explicit).read_text())
        return CRNNConfig.from_dict(doc.get("model", doc))
    meta = ckpt.with_name("train_config.json")
    if meta.exists():
        return CRNNConfig.from_dict(json.loads(meta.read_text())["model"])
    return None


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    records = manifest.split(args.split)
    if not records:
        raise NoDataError(f"manifest has no {args.split!r} scenes")
    models = []
    for label, ckpt in _resolve_checkpoints(args):
        model = load_checkpoint(ckpt, expected=_expected_model(ckpt, args.model_config))
        stats = load_stats(ckpt)
        if stats is None:
            log.warning("%s has no stats.json; standardizing with the manifest's training split", ckpt)
            stats = compute_standardization(load_scenes(manifest, manifest.split("train")))
        models.append((label, model, stats))
    out = prepare_out(args.out, args.force)
    baseline = avg_pred_baseline(manifest.split("train"))
    rows, curves, traces_out = [], {}, []
    base_err = None
    for label, model, stats in models:
        traces = predict_traces(model, stats, manifest, records, jobs=args.jobs)
        err = trace_errors(traces)
        s = summarize(err)
        rows.append(summary_row(args.experiment, label, s))
        curves[label] = binned_error_curve(err, args.bin_width)
        if not traces_out:
            traces_out = traces[: args.n_traces]
        if base_err is None:
            base_err = baseline_errors(traces, baseline)
        print(
            f"{label:>10}: mean {s.mean_abs_err:.4f}  median {s.median_abs_err:.4f}  "
            f"std {s.std_abs_err:.4f}  n {s.n_frames}  F1 {trace_f1(traces):.4f}"
        )
    b = summarize(base_err)
    rows.append(summary_row(args.experiment, "avg_pred", b))
    print(f"{'avg_pred':>10}: mean {b.mean_abs_err:.4f}  median {b.median_abs_err:.4f}  std {b.std_abs_err:.4f}  (constant {baseline:.4f} m)")
    emit_report(rows, curves, traces_out, out)
    print(f"report: {out}")
    return EXIT_OK


def _read_curve(path: Path) -> ErrorCurve:
    rows = read_csv(path)
    if not rows:
        raise NoDataError(f"{path} has no bins")

    def num(v):
        return float(v) if v != "" else np.nan

    edges = [num(rows[0]["bin_lo"])] + [num(r["bin_hi"]) for r in rows]
    return ErrorCurve(
        np.array(edges),
        np.array([num(r["mean_err"]) for r in rows]),
        np.array([int(r["count"]) for r in rows]),
        np.array([num(r["ci95"]) for r in rows]),
    )


def cmd_report(args) -> int:
    """Merge several eval directories into one summary table and curve plot."""
    rows, curves = [], {}
    seen_baseline = False
    for d in map(Path, args.eval_dirs):
        summary = d / "summary.csv"
        if not summary.exists():
            raise FileNotFoundError(summary)
        for r in read_csv(summary):
            if r["regressor"] == "avg_pred":
                if seen_baseline:
                    continue
                seen_baseline = True
            rows.append({c: r[c] for c in SUMMARY_COLUMNS})
        labels = [r["regressor"] for r in read_csv(summary) if r["regressor"] != "avg_pred"]
        for p in sorted(d.glob("curve*.csv")):
            label = p.stem[len("curve_") :] if p.stem.startswith("curve_") else (labels[0] if labels else d.name)
            curves[f"{d.name}:{label}" if label in curves else label] = _read_curve(p)
    out = prepare_out(args.out, args.force)
    emit_report(rows, curves, [], out)
    for r in rows:
        print(f"{r['experiment']:>12} {r['regressor']:>10}  mean {r['mean']}  median {r['median']}  std {r['std']}  n {r['n']}")
    print(f"report: {out}")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="override the config seed")
    p.add_argument("--jobs", type=int, default=d(os.cpu_count() or 1), help="worker count (default: all cores)")
    p.add_argument("--out", default=d(None), help="output directory")
    p.add_argument("--force", action="store_true", default=d(False), help="overwrite an existing --out")
    p.add_argument("--verbose", "-v", action="count", default=d(0), help="more logging (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echorange", description="Sound source distance estimation pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic dataset from a JSON config")
    p.add_argument("config", help="dataset config JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the detector or the distance model")
    p.add_argument("manifest", help="manifest.jsonl")
    p.add_argument("--config", help="train config JSON (defaults otherwise)")
    p.add_argument("--detector-only", action="store_true", help="detector pre-training (BCE only)")
    p.add_argument("--regressor", help="ae, se, ape, spe or tape:<delta>")
    p.add_argument("--init", help="checkpoint to fine-tune from")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a manifest split")
    p.add_argument("manifest", help="manifest.jsonl")
    p.add_argument("--checkpoint", action="append", help="model.ckpt (repeatable)")
    p.add_argument("--ablate", help="comma-separated regressors, read from --runs-dir/<regressor>/model.ckpt")
    p.add_argument("--runs-dir", help="directory of per-regressor training runs for --ablate")
    p.add_argument("--model-config", help="JSON with the expected model config (or a train config)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH)
    p.add_argument("--experiment", default="eval", help="experiment name for summary rows")
    p.add_argument("--n-traces", type=int, default=3, help="scenes to write prediction traces for")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge eval directories into one table and plot")
    p.add_argument("eval_dirs", nargs="+")
    p.set_defaults(func=cmd_report)

    for sp in sub.choices.values():
        _global_flags(sp, suppress=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except IncompatibleCheckpointError as e:
        print(f"error: incompatible checkpoint: {e}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except TrainingAborted as e:
        print(f"error: training aborted: {e}", file=sys.stderr)
        return EXIT_ABORTED
    except (OSError, WavFormatError, CheckpointFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, DomainError, ValidationError, NoDataError, json.JSONDecodeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeError as e:
        print(f"error: incompatible input: {e}", file=sys.stderr)
        return EXIT_INCOMPATIBLE


if __name__ == "__main__":
    sys.exit(main())
