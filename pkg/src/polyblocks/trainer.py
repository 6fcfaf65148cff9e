"""SGD training loop, evaluation, checkpointing, and run reports.

Everything is deterministic given (network seed, data, config): shuffling
comes from one seeded generator, parameters update in dict order, and report
formatting is fixed, so repeated runs produce byte-identical artifacts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Var
from .data import Dataset
from .errors import DatasetFormatError, ShapeError, TrainingDiverged

Array = np.ndarray

CKPT_MAGIC = b"PDCK"
CKPT_VERSION = 1
CSV_HEADER = "epoch,lr,train_loss,train_acc,eval_acc"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 120
    batch: int = 128
    lr0: float = 0.1
    milestones: tuple = (40, 60, 80, 100)
    gamma: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if self.lr0 < 0:
            raise ValueError(f"lr0 must be >= 0, got {self.lr0}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be positive")
        ms = self.milestones
        if any(ms[i] >= ms[i + 1] for i in range(len(ms) - 1)):
            raise ValueError(f"milestones must increase strictly: {ms}")
        if ms and ms[-1] >= self.epochs:
            raise ValueError(f"milestone {ms[-1]} not below epochs {self.epochs}")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule: lr0 * gamma^k with k = milestones passed by this epoch."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    k = sum(1 for m in cfg.milestones if m <= epoch)
    return cfg.lr0 * cfg.gamma**k


def cross_entropy(logits, labels):
    """Mean negative log-likelihood; differentiable when logits is a tape node."""
    if isinstance(logits, Var):
        return ad.cross_entropy(logits, labels)
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    ld = logits if logits.ndim == 2 else logits[None, :]
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= ld.shape[1]:
        raise ValueError(f"label out of range [0, {ld.shape[1]})")
    shifted = ld - ld.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(ld.shape[0]), labels].mean())


def sgd_step(params: dict, grads: Mapping, velocity: dict, lr: float, cfg: TrainConfig) -> None:
    """In-place momentum update: v <- mu v + g + wd theta; theta <- theta - lr v."""
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"grad shape {g.shape} != param {theta.shape} for {name!r}")
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(theta)
            velocity[name] = v
        v *= cfg.momentum
        v += g + cfg.weight_decay * theta
        theta -= lr * v


@dataclass
class RunReport:
    """Per-epoch training trace; one row per epoch."""

    rows: list = field(default_factory=list)  # (epoch, lr, train_loss, train_acc, eval_acc)

    @property
    def final_eval_acc(self) -> float:
        return self.rows[-1][4]

    def csv_text(self) -> str:
        lines = [CSV_HEADER]
        for epoch, lr, tl, ta, ea in self.rows:
            lines.append(f"{epoch},{lr:.12g},{tl:.12g},{ta:.12g},{ea:.12g}")
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.csv_text())

    @classmethod
    def from_csv_text(cls, text: str) -> "RunReport":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != CSV_HEADER:
            raise DatasetFormatError(f"bad report header: {lines[0] if lines else '<empty>'!r}")
        rows = []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 5:
                raise DatasetFormatError(f"bad report row: {ln!r}")
            rows.append((int(parts[0]),) + tuple(float(p) for p in parts[1:]))
        return cls(rows=rows)


def _batched(network: Graph, ds: Dataset) -> bool:
    return bool(getattr(network, "batch_ok", False)) and ds.inputs.ndim == 2


def evaluate(network: Graph, ds: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    x = ds.float_inputs()
    if _batched(network, ds):
        pred = np.argmax(network.numeric(x), axis=1)
    else:
        pred = np.array([int(np.argmax(network.numeric(x[i]))) for i in range(len(ds))])
    return float(np.mean(pred == ds.labels))


def train(network: Graph, train_ds: Dataset, eval_ds: Dataset | None = None, cfg: TrainConfig = TrainConfig()) -> RunReport:
    """Run the full schedule and return the per-epoch report.

    A non-finite loss aborts immediately rather than training on garbage.
    """
    if eval_ds is None:
        eval_ds = train_ds
    rng = np.random.default_rng(cfg.seed)
    x_all = train_ds.float_inputs()
    y_all = train_ds.labels
    velocity: dict[str, Array] = {}
    batched = _batched(network, train_ds)
    report = RunReport()
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        perm = rng.permutation(len(train_ds))
        loss_sum = 0.0
        hit_sum = 0
        for start in range(0, len(train_ds), cfg.batch):
            take = perm[start:start + cfg.batch]
            xb, yb = x_all[take], y_all[take]
            if batched:
                out = network.forward_var(xb)
                loss_node = ad.cross_entropy(out, yb)
                loss = float(loss_node.data)
                hits = int(np.sum(np.argmax(out.data, axis=1) == yb))
                ad.backprop(loss_node)
                grads = network.param_grads()
            else:
                grads = {name: np.zeros_like(v) for name, v in network.params.items()}
                loss = 0.0
                hits = 0
                for i in range(len(take)):
                    out = network.forward_var(xb[i])
                    loss_node = ad.cross_entropy(out, yb[i:i + 1])
                    loss += float(loss_node.data)
                    hits += int(np.argmax(out.data) == yb[i])
                    ad.backprop(loss_node)
                    for name, g in network.param_grads().items():
                        grads[name] += g
                loss /= len(take)
                for name in grads:
                    grads[name] /= len(take)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"epoch {epoch}, batch at {start}: loss {loss}")
            loss_sum += loss * len(take)
            hit_sum += hits
            sgd_step(network.params, grads, velocity, lr, cfg)
        eval_acc = evaluate(network, eval_ds)
        report.rows.append(
            (epoch, lr, loss_sum / len(train_ds), hit_sum / len(train_ds), eval_acc)
        )
    return report


def aggregate(reports) -> tuple:
    """Mean and population std of the final eval accuracy across repeats."""
    accs = np.array([r.final_eval_acc for r in reports], dtype=np.float64)
    return float(accs.mean()), float(accs.std())


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(path, params: Mapping) -> None:
    """Named f64 tensors, little-endian, in dict order."""
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(params)))
        for name, value in params.items():
            raw = name.encode("utf-8")
            arr = np.asarray(value, dtype=np.float64)
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f8").tobytes())


def _read(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DatasetFormatError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        magic, version, count = struct.unpack("<4sII", _read(f, 12, "header"))
        if magic != CKPT_MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}")
        if version != CKPT_VERSION:
            raise DatasetFormatError(f"unsupported version {version}")
        out: dict[str, Array] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read(f, 4, "name length"))
            name = _read(f, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read(f, 1, "rank"))
            shape = struct.unpack(f"<{rank}I", _read(f, 4 * rank, "extents"))
            n = int(np.prod(shape)) if rank else 1
            out[name] = np.frombuffer(_read(f, 8 * n, "payload"), dtype="<f8").reshape(shape).copy()
        if f.read(1):
            raise DatasetFormatError("trailing bytes after parameters")
    return out
