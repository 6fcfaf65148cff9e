"""Dataset container, binary I/O, and the sampling protocols.

Storage keeps the on-disk dtype: image-like data as 8-bit integers (scaled to
[0,1] on access), synthetic vectors as 32-bit reals.  Every sampler is a
deterministic function of its arguments and seed, so files regenerated with
the same flags are byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError

Array = np.ndarray

MAGIC = b"PDCD"
VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """Inputs [n, c, h, w] (uint8) or [n, d] (float32) with integer labels in [0, K)."""

    inputs: Array
    labels: Array
    classes: int

    def __post_init__(self):
        inputs = np.ascontiguousarray(self.inputs)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if inputs.dtype not in (np.uint8, np.float32):
            raise DatasetFormatError(f"inputs must be uint8 or float32, got {inputs.dtype}")
        if inputs.ndim not in (2, 4):
            raise DatasetFormatError(f"inputs must be [n,d] or [n,c,h,w], got rank {inputs.ndim}")
        if inputs.shape[0] != labels.shape[0]:
            raise DatasetFormatError(f"{inputs.shape[0]} inputs vs {labels.shape[0]} labels")
        if self.classes < 1 or self.classes > 0xFFFF:
            raise DatasetFormatError(f"class count {self.classes} outside [1, 65535]")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise DatasetFormatError(f"label outside [0, {self.classes})")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def class_counts(self) -> Array:
        return np.bincount(self.labels, minlength=self.classes)

    def float_inputs(self) -> Array:
        """Inputs as float64; 8-bit images land in [0, 1]."""
        if self.inputs.dtype == np.uint8:
            return self.inputs.astype(np.float64) / 255.0
        return self.inputs.astype(np.float64)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.inputs[idx].copy(), self.labels[idx].copy(), self.classes)


def class_histogram(ds: Dataset) -> Array:
    """Per-class sample counts; sums to len(ds)."""
    return ds.class_counts


def save_dataset(path, ds: Dataset) -> None:
    flags = 0 if ds.inputs.dtype == np.uint8 else 1
    shape = ds.inputs.shape[1:]
    payload = ds.inputs.tobytes() if flags == 0 else ds.inputs.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIBII", MAGIC, VERSION, flags, ds.classes, len(ds)))
        f.write(struct.pack("<B", len(shape)))
        f.write(struct.pack(f"<{len(shape)}I", *shape))
        f.write(payload)
        f.write(np.asarray(ds.labels, dtype="<u2").tobytes())


def _read(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DatasetFormatError(f"truncated file while reading {what}")
    return buf


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        magic, version, flags, classes, n = struct.unpack("<4sIBII", _read(f, 17, "header"))
        if magic != MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DatasetFormatError(f"unsupported version {version}")
        if flags not in (0, 1):
            raise DatasetFormatError(f"unknown flags byte {flags}")
        (rank,) = struct.unpack("<B", _read(f, 1, "shape rank"))
        shape = struct.unpack(f"<{rank}I", _read(f, 4 * rank, "shape extents"))
        per = int(np.prod(shape)) if rank else 1
        itemsize = 1 if flags == 0 else 4
        raw = _read(f, n * per * itemsize, "payload")
        inputs = np.frombuffer(raw, dtype="u1" if flags == 0 else "<f4").reshape((n,) + shape)
        labels = np.frombuffer(_read(f, 2 * n, "labels"), dtype="<u2").astype(np.int64)
        if f.read(1):
            raise DatasetFormatError("trailing bytes after labels")
    return Dataset(inputs.copy(), labels, classes)


# -- synthetic task ---------------------------------------------------------


def quadratic_form(d: int, seed: int) -> Array:
    """The fixed full-rank indefinite form used by :func:`synth_quadratic`."""
    rng = np.random.default_rng(seed)
    v, _ = np.linalg.qr(rng.standard_normal((d, d)))
    mags = np.linspace(0.5, 1.5, d)
    lam = np.where(np.arange(d) < d - d // 2, mags, -mags)
    q = (v * lam) @ v.T
    return (q + q.T) / 2.0


def synth_quadratic(d: int, n_per_class: int, seed: int) -> Dataset:
    """Two classes split by the sign of z'Qz for a fixed indefinite Q.

    The boundary is a quadric, so no affine classifier can do well while a
    second-degree model can separate it exactly.  Inputs are rounded to
    float32 before labeling, keeping stored data and labels consistent.
    Classes are filled to exactly n_per_class each.
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    q = quadratic_form(d, seed)
    rng = np.random.default_rng(seed)
    rng.standard_normal((d, d))  # keep the sample stream aligned with quadratic_form's draw
    xs: list[Array] = []
    ys: list[int] = []
    need = [n_per_class, n_per_class]
    while need[0] or need[1]:
        batch = rng.standard_normal((256, d)).astype(np.float32)
        vals = np.einsum("bi,ij,bj->b", batch.astype(np.float64), q, batch.astype(np.float64))
        for row, val in zip(batch, vals):
            if val == 0.0:
                continue  # exactly on the quadric: label undefined
            label = 1 if val > 0.0 else 0
            if need[label]:
                need[label] -= 1
                xs.append(row)
                ys.append(label)
            if not (need[0] or need[1]):
                break
    return Dataset(np.stack(xs), np.asarray(ys), 2)


# -- sampling protocols -----------------------------------------------------


def subsample_per_class(ds: Dataset, m: int, seed: int) -> Dataset:
    """Exactly m samples per class, uniform without replacement."""
    counts = ds.class_counts
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m > counts.min():
        raise ValueError(f"m={m} exceeds smallest class size {int(counts.min())}")
    rng = np.random.default_rng(seed)
    picks = []
    for k in range(ds.classes):
        idx = np.flatnonzero(ds.labels == k)
        picks.append(rng.permutation(idx)[:m])
    return ds.take(np.concatenate(picks))


@dataclass(frozen=True)
class ImbalanceProfile:
    """Target class sizes for a long-tailed resample, largest class first."""

    classes: int
    ratio: float
    n_max: int
    targets: tuple

    def __post_init__(self):
        t = self.targets
        if any(t[i] < t[i + 1] for i in range(len(t) - 1)):
            raise ValueError("targets must be nonincreasing")


def imbalance_profile(classes: int, n_max: int, ratio: float) -> ImbalanceProfile:
    """Exponential profile: class i of the descending order gets
    round(n_max * ratio^(-i/(K-1))), half-up rounding."""
    if ratio < 1:
        raise ValueError(f"imbalance ratio must be >= 1, got {ratio}")
    if classes == 1:
        targets = (n_max,)
    else:
        i = np.arange(classes)
        targets = tuple(int(x) for x in np.floor(n_max * ratio ** (-i / (classes - 1)) + 0.5))
    return ImbalanceProfile(classes=classes, ratio=float(ratio), n_max=n_max, targets=targets)


def longtail_resample(ds: Dataset, ratio: float, seed: int) -> Dataset:
    """Resample to an exponential long-tail profile with the given max/min ratio.

    Classes are ranked by size (descending, ties by class id); the largest
    keeps its full count and class i of the ranking is cut to the profile
    target.  Fails when any class is smaller than its target.
    """
    counts = ds.class_counts
    if counts.min() == 0:
        raise ValueError("every class needs at least one sample")
    order = sorted(range(ds.classes), key=lambda k: (-counts[k], k))
    profile = imbalance_profile(ds.classes, int(counts.max()), ratio)
    rng = np.random.default_rng(seed)
    picks = []
    for rank, k in enumerate(order):
        want = profile.targets[rank]
        if want > counts[k]:
            raise ValueError(
                f"class {k} has {int(counts[k])} samples, profile needs {want}"
            )
        idx = np.flatnonzero(ds.labels == k)
        picks.append(rng.permutation(idx)[:want])
    return ds.take(np.concatenate(picks))
