"""Dense tensor primitives.

All values are C-contiguous (row-major) float64 numpy arrays.  Every function
is pure: inputs are never mutated and results are freshly allocated, so the
whole module is safe to call concurrently on shared read-only arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

Array = np.ndarray


def as_tensor(x) -> Array:
    """Coerce to a row-major float64 array."""
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def matmul(a: Array, b: Array) -> Array:
    """Matrix product.  Accepts [m,k]x[k,n] and the vector case [k]x[k,n]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim not in (1, 2) or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-1/2 x rank-2, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def hadamard(a: Array, b: Array) -> Array:
    """Elementwise product of identically shaped tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shapes differ: {a.shape} vs {b.shape}")
    return a * b


def mode_n_vector_product(w: Array, v: Array, n: int) -> Array:
    """Contract mode ``n`` (1-based) of ``w`` against the vector ``v``.

    Returns a tensor of rank one less than ``w``; remaining modes keep their
    relative order.
    """
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"mode product needs a rank-1 vector, got shape {v.shape}")
    if not 1 <= n <= w.ndim:
        raise ShapeError(f"mode {n} out of range for rank-{w.ndim} tensor")
    if w.shape[n - 1] != v.shape[0]:
        raise ShapeError(
            f"mode {n} extent {w.shape[n - 1]} does not match vector length {v.shape[0]}"
        )
    return np.tensordot(w, v, axes=([n - 1], [0]))


def softmax_rows(a: Array) -> Array:
    """Row-wise softmax of a rank-2 tensor, computed with per-row max subtraction."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"softmax_rows expects rank 2, got shape {a.shape}")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def global_avg_pool(x: Array) -> Array:
    """Column means of an [hw, c] matrix, returned as [1, c]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"global_avg_pool expects a nonempty rank-2 input, got {x.shape}")
    return x.mean(axis=0, keepdims=True)


def replicate_rows(v: Array, m: int) -> Array:
    """Stack ``m`` copies of the [1, c] row vector ``v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != 1:
        raise ShapeError(f"replicate_rows expects shape [1, c], got {v.shape}")
    if m < 1:
        raise ShapeError(f"replicate count must be >= 1, got {m}")
    return np.repeat(v, m, axis=0)


def superdiag_mode3(v: Array) -> Array:
    """diag(v): the mode-3 product of the c x c x c super-diagonal unit tensor with v."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeError(f"superdiag_mode3 expects a nonempty rank-1 vector, got {v.shape}")
    return np.diag(v)


def _conv_out_extent(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(xp: Array, k: int, stride: int, ho: int, wo: int) -> Array:
    """Gather k x k patches of a padded [c, hp, wp] map into [c*k*k, ho*wo] columns."""
    c = xp.shape[0]
    cols = np.empty((c, k, k, ho, wo), dtype=np.float64)
    for a in range(k):
        for b in range(k):
            cols[:, a, b] = xp[:, a : a + stride * ho : stride, b : b + stride * wo : stride]
    return cols.reshape(c * k * k, ho * wo)


def _col2im(cols: Array, c: int, hp: int, wp: int, k: int, stride: int, ho: int, wo: int) -> Array:
    """Scatter-add [c*k*k, ho*wo] columns back into a padded [c, hp, wp] map."""
    xp = np.zeros((c, hp, wp), dtype=np.float64)
    cols = cols.reshape(c, k, k, ho, wo)
    for a in range(k):
        for b in range(k):
            xp[:, a : a + stride * ho : stride, b : b + stride * wo : stride] += cols[:, a, b]
    return xp


def _check_conv_args(x: Array, kern: Array, stride: int, pad: int) -> tuple[int, int, int]:
    if x.ndim != 3 or kern.ndim != 4:
        raise ShapeError(f"conv2d expects [c,h,w] x [co,ci,k,k], got {x.shape} x {kern.shape}")
    co, ci, kh, kw = kern.shape
    if kh != kw:
        raise ShapeError(f"conv2d kernel must be square, got {kh}x{kw}")
    if ci != x.shape[0]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[0]} vs kernel {ci}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    if kh > x.shape[1] + 2 * pad or kh > x.shape[2] + 2 * pad:
        raise ShapeError(f"kernel {kh} exceeds padded input {x.shape[1:]} (pad {pad})")
    return co, kh, ci


def conv2d(x: Array, kern: Array, stride: int = 1, pad: int = 0) -> Array:
    """Strided 2-D cross-correlation (no kernel flip) with zero padding.

    ``x`` is [c_in, h, w], ``kern`` is [c_out, c_in, k, k]; the output extent is
    floor((h + 2*pad - k) / stride) + 1 per spatial dimension.
    """
    x = np.asarray(x, dtype=np.float64)
    kern = np.asarray(kern, dtype=np.float64)
    co, k, _ = _check_conv_args(x, kern, stride, pad)
    ho = _conv_out_extent(x.shape[1], k, stride, pad)
    wo = _conv_out_extent(x.shape[2], k, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, ho, wo)
    out = kern.reshape(co, -1) @ cols
    return out.reshape(co, ho, wo)


def maxpool2d(x: Array, k: int, stride: int | None = None, pad: int = 0) -> Array:
    """Max pooling over k x k windows of a [c, h, w] map.  Stride defaults to k."""
    x = np.asarray(x, dtype=np.float64)
    stride = k if stride is None else stride
    if x.ndim != 3:
        raise ShapeError(f"maxpool2d expects [c,h,w], got {x.shape}")
    if pad >= k:
        raise ShapeError(f"pool pad {pad} must be smaller than window {k}")
    ho = _conv_out_extent(x.shape[1], k, stride, pad)
    wo = _conv_out_extent(x.shape[2], k, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    cols = _im2col(xp, k, stride, ho, wo).reshape(x.shape[0], k * k, ho * wo)
    return cols.max(axis=1).reshape(x.shape[0], ho, wo)


def batchnorm(x: Array, gamma: Array, beta: Array, eps: float = 1e-5) -> Array:
    """Per-channel normalization of a channel-first map with learnable scale/shift.

    Statistics are taken over all non-channel axes of the sample presented,
    i.e. the spatial extent for a [c, h, w] input.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or gamma.shape != (x.shape[0],) or beta.shape != (x.shape[0],):
        raise ShapeError(f"batchnorm shapes inconsistent: x {x.shape}, gamma {gamma.shape}")
    axes = tuple(range(1, x.ndim))
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    expand = (slice(None),) + (None,) * (x.ndim - 1)
    return gamma[expand] * xhat + beta[expand]


def reshape(a: Array, shape: tuple[int, ...]) -> Array:
    """Relayout to ``shape``; the flat element order is preserved."""
    a = np.asarray(a, dtype=np.float64)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} ({a.size} elems) to {shape}")
    return a.reshape(shape)


def transpose(a: Array, perm: tuple[int, ...] | None = None) -> Array:
    """Permute modes; default reverses them.  transpose(transpose(a)) == a."""
    a = np.asarray(a, dtype=np.float64)
    if perm is not None and sorted(perm) != list(range(a.ndim)):
        raise ShapeError(f"invalid permutation {perm} for rank {a.ndim}")
    return np.ascontiguousarray(np.transpose(a, perm))
