"""Run orchestration: training jobs, evaluation, and report aggregation.

A training job writes, per repeat, a metrics CSV, a checkpoint, and a sidecar
descriptor file (so evaluation needs nothing but the checkpoint path), then
records the group in ``manifest.json``.  Groups are keyed by the data file's
stem; rerunning the same job replaces its group wholesale, which together
with fixed formatting makes reruns byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, load_dataset, longtail_resample, save_dataset, subsample_per_class, synth_quadratic
from .errors import ArchError, DatasetFormatError, ShapeError
from .netzoo import BUILTINS, build_network, parse_arch
from .trainer import RunReport, TrainConfig, evaluate, load_checkpoint, save_checkpoint, train

MANIFEST = "manifest.json"
REPORT_HEADER = "label,runs,eval_acc_mean,eval_acc_std,train_acc_mean,train_acc_std"


def arch_text(arg: str) -> tuple:
    """Resolve an architecture argument to (name, descriptor text).

    Accepts a builtin name, a path to a descriptor file, or inline text.
    """
    if arg in BUILTINS:
        return arg, BUILTINS[arg]
    if "\n" not in arg and os.path.isfile(arg):
        with open(arg) as f:
            text = f.read()
        return os.path.splitext(os.path.basename(arg))[0], text
    if "\n" in arg:
        return "inline", arg
    raise ArchError(f"unknown architecture {arg!r}: not a builtin, file, or descriptor text")


@dataclass
class RunResult:
    run: int
    seed: int
    csv: str
    checkpoint: str
    final_train_acc: float
    final_eval_acc: float


def _load_graph_params(graph, params: dict) -> None:
    if set(params) != set(graph.params):
        missing = sorted(set(graph.params) - set(params))
        extra = sorted(set(params) - set(graph.params))
        raise DatasetFormatError(f"checkpoint/arch mismatch: missing {missing}, extra {extra}")
    for name, value in params.items():
        if value.shape != graph.params[name].shape:
            raise ShapeError(
                f"checkpoint tensor {name!r} has shape {value.shape}, arch wants {graph.params[name].shape}"
            )
        graph.params[name] = np.ascontiguousarray(value)


def run_training(
    arch: str,
    data_path: str,
    out_dir: str,
    eval_data_path: str | None = None,
    cfg: TrainConfig = TrainConfig(),
    repeats: int = 1,
) -> dict:
    """Train ``repeats`` networks (seeds cfg.seed, cfg.seed+1, ...) and record artifacts."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    name, text = arch_text(arch)
    spec = parse_arch(text, name=name)
    train_ds = load_dataset(data_path)
    eval_ds = load_dataset(eval_data_path) if eval_data_path else None
    os.makedirs(out_dir, exist_ok=True)
    label = os.path.splitext(os.path.basename(data_path))[0]
    results: list[RunResult] = []
    group = []
    for r in range(repeats):
        run_cfg = replace(cfg, seed=cfg.seed + r)
        net = build_network(spec, seed=run_cfg.seed)
        report = train(net, train_ds, eval_ds, run_cfg)
        base = f"{label}-run{r}"
        csv_path = os.path.join(out_dir, base + ".csv")
        ckpt_path = os.path.join(out_dir, base + ".pdck")
        arch_path = os.path.join(out_dir, base + ".arch")
        report.save_csv(csv_path)
        save_checkpoint(ckpt_path, net.params)
        with open(arch_path, "w") as f:
            f.write(text)
        last = report.rows[-1]
        results.append(RunResult(r, run_cfg.seed, csv_path, ckpt_path, last[3], last[4]))
        group.append({
            "arch": name,
            "seed": run_cfg.seed,
            "epochs": run_cfg.epochs,
            "csv": base + ".csv",
            "checkpoint": base + ".pdck",
        })
    _update_manifest(out_dir, label, group)
    accs = np.array([r.final_eval_acc for r in results])
    return {
        "label": label,
        "runs": results,
        "mean_eval_acc": float(accs.mean()),
        "std_eval_acc": float(accs.std()),
    }


def _update_manifest(out_dir: str, label: str, group: list) -> None:
    path = os.path.join(out_dir, MANIFEST)
    manifest = {"groups": {}}
    if os.path.exists(path):
        try:
            with open(path) as f:
                manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"malformed manifest {path}: {e}") from None
        if "groups" not in manifest:
            raise DatasetFormatError(f"malformed manifest {path}: no groups key")
    manifest["groups"][label] = group
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def run_eval(checkpoint_path: str, data_path: str) -> dict:
    """Rebuild the network from the checkpoint's sidecar descriptor and score it."""
    arch_path = os.path.splitext(checkpoint_path)[0] + ".arch"
    if not os.path.exists(arch_path):
        raise DatasetFormatError(f"no descriptor next to checkpoint: {arch_path} missing")
    with open(arch_path) as f:
        spec = parse_arch(f.read(), name=os.path.basename(arch_path))
    net = build_network(spec, seed=0)
    _load_graph_params(net, load_checkpoint(checkpoint_path))
    ds = load_dataset(data_path)
    return {"accuracy": evaluate(net, ds), "samples": len(ds)}


def _label_key(label: str):
    # numeric-aware ordering so run groups named 50, 500, 5000 sort sensibly
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def run_report(runs_dir: str) -> dict:
    """Aggregate final-epoch accuracies per manifest group into one table."""
    path = os.path.join(runs_dir, MANIFEST)
    if not os.path.isdir(runs_dir) or not os.path.exists(path):
        raise DatasetFormatError(f"no {MANIFEST} in {runs_dir!r}")
    with open(path) as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"malformed manifest: {e}") from None
    groups = manifest.get("groups")
    if not isinstance(groups, dict) or not groups:
        raise DatasetFormatError("manifest has no run groups")
    rows = []
    for label in sorted(groups, key=_label_key):
        entries = groups[label]
        if not entries:
            raise DatasetFormatError(f"group {label!r} is empty")
        eval_accs, train_accs = [], []
        for entry in entries:
            csv_path = os.path.join(runs_dir, entry["csv"])
            with open(csv_path) as f:
                report = RunReport.from_csv_text(f.read())
            if not report.rows:
                raise DatasetFormatError(f"{csv_path} has no epochs")
            eval_accs.append(report.rows[-1][4])
            train_accs.append(report.rows[-1][3])
        ev, tr = np.array(eval_accs), np.array(train_accs)
        rows.append({
            "label": label,
            "runs": len(entries),
            "eval_acc_mean": float(ev.mean()),
            "eval_acc_std": float(ev.std()),
            "train_acc_mean": float(tr.mean()),
            "train_acc_std": float(tr.std()),
        })
    lines = [REPORT_HEADER]
    for row in rows:
        lines.append(
            f"{row['label']},{row['runs']},{row['eval_acc_mean']:.12g},{row['eval_acc_std']:.12g},"
            f"{row['train_acc_mean']:.12g},{row['train_acc_std']:.12g}"
        )
    return {"rows": rows, "csv": "\n".join(lines) + "\n"}


def make_synth(d: int, n_per_class: int, seed: int, out_path: str) -> dict:
    ds = synth_quadratic(d, n_per_class, seed)
    save_dataset(out_path, ds)
    return _ds_info(out_path, ds)


def make_subsample(src: str, m: int, seed: int, out_path: str) -> dict:
    ds = subsample_per_class(load_dataset(src), m, seed)
    save_dataset(out_path, ds)
    return _ds_info(out_path, ds)


def make_longtail(src: str, ratio: float, seed: int, out_path: str) -> dict:
    ds = longtail_resample(load_dataset(src), ratio, seed)
    save_dataset(out_path, ds)
    return _ds_info(out_path, ds)


def _ds_info(path: str, ds: Dataset) -> dict:
    return {
        "path": path,
        "classes": ds.classes,
        "samples": len(ds),
        "counts": [int(x) for x in ds.class_counts],
    }
