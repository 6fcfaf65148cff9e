"""Tape-based reverse-mode differentiation over the tensor primitive set.

Every :class:`Var` wraps a float64 numpy array and records how it was produced.
Running a computation with ``Var`` operands builds the tape in construction
order (which is already topological); :func:`backprop` then walks it in
reverse, accumulating adjoints by addition wherever a value fans out.  The
accumulation order is fixed by the tape, so repeated backward passes over the
same tape are bit-identical.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from . import tensor as T
from .errors import ShapeError

Array = np.ndarray


class Var:
    """One tape node: a value, its adjoint, and the rule producing its input adjoints."""

    __slots__ = ("data", "grad", "_backward", "_prev", "name")

    def __init__(self, data, prev: tuple["Var", ...] = (), name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self._backward: Callable[[], None] | None = None
        self._prev = prev
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.data.shape}{tag})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Var":
        other = lift(other)
        out = Var(self.data + other.data, (self, other))

        def bw():
            self.accumulate(_unbroadcast(out.grad, self.data.shape))
            other.accumulate(_unbroadcast(out.grad, other.data.shape))

        out._backward = bw
        return out

    __radd__ = __add__

    def __mul__(self, other) -> "Var":
        """Elementwise (Hadamard) product; broadcasting is supported."""
        other = lift(other)
        out = Var(self.data * other.data, (self, other))

        def bw():
            self.accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
            other.accumulate(_unbroadcast(out.grad * self.data, other.data.shape))

        out._backward = bw
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "Var":
        return self.scale(-1.0)

    def __sub__(self, other) -> "Var":
        return self + (-lift(other))

    def __rsub__(self, other) -> "Var":
        return lift(other) + (-self)

    def scale(self, s: float) -> "Var":
        out = Var(self.data * s, (self,))

        def bw():
            self.accumulate(out.grad * s)

        out._backward = bw
        return out

    def __matmul__(self, other) -> "Var":
        other = lift(other)
        a, b = self.data, other.data
        out = Var(T.matmul(a, b), (self, other))

        def bw():
            g = out.grad
            if a.ndim == 1:
                self.accumulate(b @ g)
                other.accumulate(np.outer(a, g))
            else:
                self.accumulate(g @ b.T)
                other.accumulate(a.T @ g)

        out._backward = bw
        return out

    def __rmatmul__(self, other) -> "Var":
        return lift(other) @ self

    # -- structural ---------------------------------------------------------

    def reshape(self, shape: tuple[int, ...]) -> "Var":
        out = Var(T.reshape(self.data, shape), (self,))

        def bw():
            self.accumulate(out.grad.reshape(self.data.shape))

        out._backward = bw
        return out

    def transpose(self, perm: tuple[int, ...] | None = None) -> "Var":
        out = Var(T.transpose(self.data, perm), (self,))
        inv = None if perm is None else tuple(np.argsort(perm))

        def bw():
            self.accumulate(np.transpose(out.grad, inv))

        out._backward = bw
        return out

    @property
    def Tm(self) -> "Var":
        """Matrix transpose shorthand."""
        return self.transpose()

    # -- tensor-set nonlinear / pooling ops ---------------------------------

    def softmax_rows(self) -> "Var":
        s = T.softmax_rows(self.data)
        out = Var(s, (self,))

        def bw():
            g = out.grad
            self.accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

        out._backward = bw
        return out

    def global_avg_pool(self) -> "Var":
        out = Var(T.global_avg_pool(self.data), (self,))
        hw = self.data.shape[0]

        def bw():
            self.accumulate(np.repeat(out.grad / hw, hw, axis=0))

        out._backward = bw
        return out

    def replicate_rows(self, m: int) -> "Var":
        out = Var(T.replicate_rows(self.data, m), (self,))

        def bw():
            self.accumulate(out.grad.sum(axis=0, keepdims=True))

        out._backward = bw
        return out

    def conv2d(self, kern: "Var", stride: int = 1, pad: int = 0) -> "Var":
        kern = lift(kern)
        x, kd = self.data, kern.data
        co, k, ci = T._check_conv_args(x, kd, stride, pad)
        ho = T._conv_out_extent(x.shape[1], k, stride, pad)
        wo = T._conv_out_extent(x.shape[2], k, stride, pad)
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
        cols = T._im2col(xp, k, stride, ho, wo)
        k2 = kd.reshape(co, -1)
        out = Var((k2 @ cols).reshape(co, ho, wo), (self, kern))

        def bw():
            g2 = out.grad.reshape(co, -1)
            kern.accumulate((g2 @ cols.T).reshape(kd.shape))
            dxp = T._col2im(k2.T @ g2, ci, xp.shape[1], xp.shape[2], k, stride, ho, wo)
            if pad:
                dxp = dxp[:, pad:-pad, pad:-pad]
            self.accumulate(dxp)

        out._backward = bw
        return out

    def maxpool2d(self, k: int, stride: int | None = None, pad: int = 0) -> "Var":
        x = self.data
        stride = k if stride is None else stride
        if x.ndim != 3:
            raise ShapeError(f"maxpool2d expects [c,h,w], got {x.shape}")
        if pad >= k:
            raise ShapeError(f"pool pad {pad} must be smaller than window {k}")
        c = x.shape[0]
        ho = T._conv_out_extent(x.shape[1], k, stride, pad)
        wo = T._conv_out_extent(x.shape[2], k, stride, pad)
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
        cols = T._im2col(xp, k, stride, ho, wo).reshape(c, k * k, ho * wo)
        arg = cols.argmax(axis=1)
        out = Var(np.take_along_axis(cols, arg[:, None, :], axis=1)[:, 0].reshape(c, ho, wo), (self,))

        def bw():
            dcols = np.zeros_like(cols)
            np.put_along_axis(dcols, arg[:, None, :], out.grad.reshape(c, 1, -1), axis=1)
            dxp = T._col2im(dcols.reshape(c * k * k, -1), c, xp.shape[1], xp.shape[2], k, stride, ho, wo)
            if pad:
                dxp = dxp[:, pad:-pad, pad:-pad]
            self.accumulate(dxp)

        out._backward = bw
        return out

    def batchnorm(self, gamma: "Var", beta: "Var", eps: float = 1e-5) -> "Var":
        gamma, beta = lift(gamma), lift(beta)
        x, gd = self.data, gamma.data
        if x.ndim < 2 or gd.shape != (x.shape[0],):
            raise ShapeError(f"batchnorm shapes inconsistent: x {x.shape}, gamma {gd.shape}")
        axes = tuple(range(1, x.ndim))
        expand = (slice(None),) + (None,) * (x.ndim - 1)
        mu = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        istd = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * istd
        out = Var(gd[expand] * xhat + beta.data[expand], (self, gamma, beta))

        def bw():
            g = out.grad
            gamma.accumulate((g * xhat).sum(axis=axes))
            beta.accumulate(g.sum(axis=axes))
            dh = g * gd[expand]
            self.accumulate(
                istd
                * (dh - dh.mean(axis=axes, keepdims=True) - xhat * (dh * xhat).mean(axis=axes, keepdims=True))
            )

        out._backward = bw
        return out


def lift(x) -> Var:
    """Wrap arrays/scalars as constant leaves; pass Vars through."""
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def cross_entropy(logits: Var, labels) -> Var:
    """Mean negative log-softmax likelihood of integer ``labels``.

    ``logits`` is [B, K] (or [K] for a single sample); labels must lie in [0, K).
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    ld = logits.data if logits.data.ndim == 2 else logits.data[None, :]
    b, k = ld.shape
    if labels.shape[0] != b:
        raise ShapeError(f"{labels.shape[0]} labels for {b} logit rows")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"label out of range [0, {k})")
    shifted = ld - ld.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    out = Var(-logp[np.arange(b), labels].mean(), (logits,))

    def bw():
        p = np.exp(logp)
        p[np.arange(b), labels] -= 1.0
        g = out.grad * p / b
        logits.accumulate(g if logits.data.ndim == 2 else g[0])

    out._backward = bw
    return out


def topo_order(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            stack.append((p, False))
    return order


def backprop(root: Var, seed: Array | float = 1.0) -> list[Var]:
    """Seed ``root`` with ``seed`` and push adjoints through the tape.

    Grads of every node reachable from ``root`` are reset first, so each call
    yields the gradients of <seed, root> alone.  Returns the topological order
    for callers that want to inspect intermediate adjoints.
    """
    order = topo_order(root)
    for v in order:
        v.grad = None
    root.accumulate(np.broadcast_to(np.asarray(seed, dtype=np.float64), root.data.shape).copy())
    for v in reversed(order):
        if v._backward is not None:
            v._backward()
    return order


class Graph:
    """A differentiable network: named trainable parameters plus a builder.

    ``build_fn(x, params)`` must express the forward pass through the tensor
    primitive set; it receives either plain arrays (fast numeric evaluation)
    or :class:`Var` nodes (tape construction), and must not branch on values.
    A Graph is single-writer during forward/backward; independent Graph
    instances may run concurrently.
    """

    def __init__(self, build_fn, params: Mapping[str, Array], input_shape=None):
        self.build_fn = build_fn
        # owned copies: later caller-side mutation must not reach the graph
        self.params: dict[str, Array] = {
            name: np.array(v, dtype=np.float64, order="C") for name, v in params.items()
        }
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self._out: Var | None = None
        self._pvars: dict[str, Var] | None = None

    def param_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def numeric(self, x) -> Array:
        """Evaluate the forward pass on plain arrays (no tape)."""
        return self.build_fn(np.asarray(x, dtype=np.float64), self.params)

    def forward(self, x) -> Array:
        """Run the forward pass, caching the tape for a later backward."""
        self._pvars = {name: Var(v, name=name) for name, v in self.params.items()}
        self._out = self.build_fn(Var(np.asarray(x, dtype=np.float64)), self._pvars)
        return self._out.data

    def forward_var(self, x) -> Var:
        """Like :meth:`forward` but hands back the output node, e.g. to attach a loss."""
        self.forward(x)
        return self._out

    def backward(self, upstream) -> dict[str, Array]:
        """Gradients of <upstream, output> w.r.t. every parameter."""
        if self._out is None:
            raise RuntimeError("backward called before forward")
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != self._out.data.shape:
            raise ShapeError(f"upstream shape {upstream.shape} != output {self._out.data.shape}")
        backprop(self._out, upstream)
        return self.param_grads()

    def param_grads(self) -> dict[str, Array]:
        """Collect per-parameter adjoints after a backward pass; absent ones are zero."""
        if self._pvars is None:
            raise RuntimeError("no cached tape; run forward first")
        return {
            name: (pv.grad if pv.grad is not None else np.zeros_like(pv.data))
            for name, pv in self._pvars.items()
        }


def grad_check(
    graph: Graph,
    x,
    eps: float = 1e-5,
    max_entries: int = 50,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The objective is <u, f(x)> for a fixed random upstream u.  For every
    parameter, up to ``max_entries`` entries are probed (all entries when the
    parameter is smaller).  The error metric is |a - n| / max(1, |a|, |n|).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64)
    out = graph.forward(x)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite forward value in grad_check")
    u = rng.standard_normal(out.shape)
    analytic = graph.backward(u)
    worst = 0.0
    for name in graph.params:
        theta = graph.params[name]
        flat = theta.reshape(-1)
        n = flat.size
        idxs = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        for i in idxs:
            keep = flat[i]
            flat[i] = keep + eps
            up = float(np.vdot(u, graph.numeric(x)))
            flat[i] = keep - eps
            dn = float(np.vdot(u, graph.numeric(x)))
            flat[i] = keep
            num = (up - dn) / (2.0 * eps)
            if not np.isfinite(num):
                raise FloatingPointError("non-finite finite-difference value in grad_check")
            ana = float(analytic[name].reshape(-1)[i])
            worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    return worst
