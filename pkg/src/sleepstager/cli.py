"""Command-line surface: prepare, synth, train, cv, eval, explain.

Every flag mirrors a config-file key (``--window-size`` <-> ``[model]
window_size``); precedence is flag > config file > default. All
quantitative outputs are JSON; fold wall-clock times go to a separate
timing.json so result files stay bit-reproducible for a fixed seed.
Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import STAGES
from .config import KEYS, RunConfig, load_config_file, model_config_from, train_config_from
from .data import (
    epochize,
    load_epochset,
    make_windows,
    normalize_recording,
    parse_edf_file,
    parse_hypnogram,
    save_epochset,
    synth_generate,
)
from .errors import (
    AnnotationError,
    ChannelNotFound,
    ConfigError,
    ContractViolation,
    CorruptCheckpoint,
    DegenerateSignal,
    EmptyDataset,
    InvalidInput,
    InvalidLabel,
    IoError,
    ParseError,
    ShapeError,
    StagerError,
)
from .explain import export_features_csv, gradcam, render_heatmap
from .metrics import metrics_report
from .model import checkpoint_load
from .training import cross_validate, evaluate, fit

_DATA_ERRORS = (
    ParseError,
    AnnotationError,
    ChannelNotFound,
    EmptyDataset,
    CorruptCheckpoint,
    DegenerateSignal,
    InvalidInput,
    InvalidLabel,
    IoError,
    ShapeError,
    ContractViolation,
)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _add_keys(parser, names):
    for name in names:
        spec = KEYS[name]
        parser.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            default=None,
            metavar=spec.kind.upper(),
            help=f"{spec.help} (default: {spec.default})",
        )


def _run_config(args):
    file_values = load_config_file(args.config) if args.config else {}
    flag_values = {
        name: getattr(args, name) for name in KEYS if hasattr(args, name)
    }
    return RunConfig(flag_values=flag_values, file_values=file_values)


def _stage_counts(labels):
    counts = np.bincount(labels, minlength=len(STAGES))
    out = {name: int(c) for name, c in zip(STAGES, counts)}
    out["Total"] = int(counts.sum())
    return out


def _load_caches(cache_dir):
    paths = sorted(Path(cache_dir).glob("*.sepc"))
    if not paths:
        raise EmptyDataset(f"no .sepc caches under {cache_dir}")
    sets = [load_epochset(p) for p in paths]
    rates = {es.sample_rate for es in sets}
    if len(rates) != 1:
        raise ConfigError(f"caches disagree on sample rate: {sorted(rates)}")
    return sets, rates.pop()


def _find_hypnogram(edf_path, fmt):
    stem = edf_path.name[: -len(edf_path.suffix)]
    if stem.endswith("-PSG"):
        stem = stem[: -len("-PSG")]
    if fmt == "csv":
        candidates = [f"{stem}.csv", f"{stem}.hyp.csv"]
    else:
        candidates = [f"{stem}-Hypnogram.edf", f"{stem}.hypnogram.edf"]
    for name in candidates:
        path = edf_path.parent / name
        if path.exists():
            return path
    raise ParseError(
        f"no hypnogram next to {edf_path.name}; tried {candidates}",
        field="hypnogram",
    )


def cmd_prepare(args):
    run = _run_config(args)
    edf_dir = Path(run.require("edf_dir"))
    out_dir = Path(run.require("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    fmt = run["hypnogram_format"]
    channel = run["channel"]
    signal_files = sorted(
        p for p in edf_dir.glob("*.edf") if "hypnogram" not in p.name.lower()
    )
    if not signal_files:
        raise EmptyDataset(f"no EDF recordings under {edf_dir}")
    manifest = {"subjects": [], "failures": []}
    for path in signal_files:
        subject = path.name[: -len(path.suffix)]
        if subject.endswith("-PSG"):
            subject = subject[: -len("-PSG")]
        try:
            recording = parse_edf_file(path)
            hyp = parse_hypnogram(_find_hypnogram(path, fmt), fmt)
            es = epochize(recording, channel, hyp, subject_id=subject)
            if len(es) == 0:
                raise EmptyDataset("no scored epochs survive exclusion")
            es = normalize_recording(es, run["normalize"])
            save_epochset(es, out_dir / f"{subject}.sepc")
            manifest["subjects"].append(
                {
                    "id": subject,
                    "source": path.name,
                    "sample_rate": es.sample_rate,
                    "epoch_counts": _stage_counts(es.labels),
                }
            )
        except StagerError as e:
            print(f"prepare: skipping {path.name}: {e}", file=sys.stderr)
            manifest["failures"].append({"source": path.name, "error": str(e)})
    if not manifest["subjects"]:
        raise EmptyDataset("every recording failed to prepare")
    totals = {name: 0 for name in (*STAGES, "Total")}
    for entry in manifest["subjects"]:
        for name, c in entry["epoch_counts"].items():
            totals[name] += c
    manifest["totals"] = totals
    _write_json(out_dir / "manifest.json", manifest)
    print(f"prepared {len(manifest['subjects'])} subjects -> {out_dir}")
    return 0


def cmd_synth(args):
    run = _run_config(args)
    out_dir = Path(run.require("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    sets = synth_generate(
        run["subjects"], run["epochs_per_subject"], run["sample_rate"], run["seed"]
    )
    manifest = {"subjects": [], "seed": run["seed"],
                "sample_rate": run["sample_rate"]}
    for es in sets:
        save_epochset(es, out_dir / f"{es.subject_id}.sepc")
        _write_json(
            out_dir / f"{es.subject_id}.events.json",
            {
                "subject": es.subject_id,
                "events": [
                    [[kind, t0, t1] for kind, t0, t1 in evs] for evs in es.events
                ],
            },
        )
        manifest["subjects"].append(
            {"id": es.subject_id, "epoch_counts": _stage_counts(es.labels)}
        )
    _write_json(out_dir / "manifest.json", manifest)
    print(f"generated {len(sets)} synthetic subjects -> {out_dir}")
    return 0


def cmd_train(args):
    run = _run_config(args)
    out_dir = Path(run.require("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    sets, rate = _load_caches(run.require("cache_dir"))
    model_cfg = model_config_from(run, rate)
    train_cfg = train_config_from(run)
    checkpoint = out_dir / "checkpoint.sstg"
    _, history = fit(sets, model_cfg, train_cfg, checkpoint_path=checkpoint)
    _write_json(
        out_dir / "loss_history.json",
        {"epochs": train_cfg.epochs, "mean_loss_per_epoch": history,
         "windows_stride": train_cfg.stride_train, "seed": train_cfg.seed},
    )
    print(f"trained {train_cfg.epochs} epochs -> {checkpoint}")
    return 0


def cmd_cv(args):
    run = _run_config(args)
    out_dir = Path(run.require("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    sets, rate = _load_caches(run.require("cache_dir"))
    model_cfg = model_config_from(run, rate)
    train_cfg = train_config_from(run)
    results, pooled = cross_validate(
        sets, run["k"], model_cfg, train_cfg, jobs=run["jobs"],
        checkpoint_dir=out_dir,
    )
    _write_json(
        out_dir / "metrics.json",
        {
            "pooled": pooled,
            "folds": [
                {
                    "fold": r.fold_index,
                    "test_subjects": r.test_subjects,
                    "report": r.report,
                    "loss_history": r.loss_history,
                }
                for r in results
            ],
        },
    )
    _write_json(
        out_dir / "timing.json",
        {"fold_wall_clock_s": {str(r.fold_index): r.wall_clock_s for r in results}},
    )
    print(f"cross-validated {run['k']} folds -> {out_dir / 'metrics.json'}")
    return 0


def cmd_eval(args):
    run = _run_config(args)
    out_dir = Path(run.require("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    params, model_cfg = checkpoint_load(run.require("checkpoint"))
    sets, rate = _load_caches(run.require("cache_dir"))
    if abs(rate - model_cfg.sample_rate) > 1e-9:
        raise ConfigError(
            f"cache rate {rate} Hz != checkpoint's {model_cfg.sample_rate} Hz"
        )
    cm = evaluate(params, model_cfg, sets)
    _write_json(out_dir / "metrics.json", metrics_report(cm))
    print(f"evaluated {int(cm.sum())} epochs -> {out_dir / 'metrics.json'}")
    return 0


def cmd_explain(args):
    run = _run_config(args)
    out_dir = Path(run.require("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    params, model_cfg = checkpoint_load(run.require("checkpoint"))
    subject = run.require("subject")
    cache = Path(run.require("cache_dir")) / f"{subject}.sepc"
    if not cache.exists():
        raise EmptyDataset(f"no cache for subject {subject!r} at {cache}")
    es = load_epochset(cache)
    view = make_windows(es, model_cfg.window_size, 1, "replicate")
    summary = {"subject": subject, "epochs": []}
    for idx in run["epoch_indices"]:
        if not 0 <= idx < len(es):
            raise InvalidInput(
                f"epoch index {idx} outside 0..{len(es) - 1} for {subject}"
            )
        window = view.gather([idx])[0]
        heatmap = gradcam(params, model_cfg, window,
                          gradient_source=run["gradient_source"])
        base = out_dir / f"{subject}_epoch{idx:05d}"
        render_heatmap(heatmap, es.epochs[idx], base)
        summary["epochs"].append(
            {
                "index": int(idx),
                "label": STAGES[es.labels[idx]],
                "predicted": STAGES[heatmap.predicted_class],
                "target": STAGES[heatmap.target_class],
                "raw_max": heatmap.raw_max,
                "empty": heatmap.empty,
                "csv": f"{base.name}.csv",
                "svg": f"{base.name}.svg",
            }
        )
    if run["export_features"]:
        feat_path = out_dir / f"{subject}_features.csv"
        export_features_csv(params, model_cfg, es, feat_path)
        summary["features_csv"] = feat_path.name
    _write_json(out_dir / f"{subject}_explain.json", summary)
    print(f"explained {len(run['epoch_indices'])} epochs -> {out_dir}")
    return 0


_COMMANDS = {
    "prepare": (
        cmd_prepare,
        "cut EDF recordings into labeled 30 s epoch caches",
        ("edf_dir", "channel", "hypnogram_format", "normalize", "out_dir"),
    ),
    "synth": (
        cmd_synth,
        "generate a synthetic labeled dataset with known microstructures",
        ("subjects", "epochs_per_subject", "sample_rate", "seed", "out_dir"),
    ),
    "train": (
        cmd_train,
        "train the stager on prepared caches",
        ("cache_dir", "variant", "width_multiplier", "reduction_ratio",
         "window_size", "lstm_hidden", "lstm_depth", "head_widths", "epochs",
         "batch_size", "lr", "stride_train", "seed", "shuffle", "out_dir"),
    ),
    "cv": (
        cmd_cv,
        "subject-wise k-fold cross-validation with pooled metrics",
        ("cache_dir", "variant", "width_multiplier", "reduction_ratio",
         "window_size", "lstm_hidden", "lstm_depth", "head_widths", "epochs",
         "batch_size", "lr", "stride_train", "seed", "shuffle", "k", "jobs",
         "out_dir"),
    ),
    "eval": (
        cmd_eval,
        "score a checkpoint on held-out caches (stride 1, replicate edges)",
        ("checkpoint", "cache_dir", "out_dir"),
    ),
    "explain": (
        cmd_explain,
        "GradCAM heatmaps (CSV + SVG) and optional feature export",
        ("checkpoint", "cache_dir", "subject", "epoch_indices",
         "gradient_source", "export_features", "out_dir"),
    ),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sleepstager",
        description="Single-channel EEG sleep staging: data preparation, "
                    "training, cross-validation, evaluation, explanation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text, keys) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None,
                       help="INI config file; flags override its values")
        _add_keys(p, keys)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
