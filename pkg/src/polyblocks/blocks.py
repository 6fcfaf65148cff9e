"""The block zoo: forward operators that are polynomials of known degree.

Every block here computes a polynomial in its input when run with
``ActivationMode.IDENTITY``; the degree is a structural property of the block
kind (see :func:`block_degree`) and is certified numerically by the probes in
``oracle``.  ``ActivationMode.STANDARD`` switches on the conventional
nonlinearity where the original architecture has one at this level, which for
the blocks below means row softmax on attention matrices and nothing else.

Matrix blocks take X of shape [hw, c] (spatial positions as rows, channels as
columns); vector blocks take z of shape [d].  All math goes through the
``functional`` layer, so the same code runs on plain arrays and on the
autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from . import functional as F
from .errors import ShapeError

Array = np.ndarray

KINDS = ("residual1", "se2", "sk2", "pinet", "pdc", "nl3", "dnl3", "pdcnl3", "pdcnl4")
VECTOR_KINDS = ("pinet", "pdc")
REALIZATIONS = ("dense", "conv1x1", "conv3x3")


class ActivationMode(str, Enum):
    IDENTITY = "identity"
    STANDARD = "standard"

    @classmethod
    def of(cls, x) -> "ActivationMode":
        return x if isinstance(x, cls) else cls(str(x))


@dataclass
class PolyParams:
    """Degree-N polynomial with independent rank-1 factors per degree term.

    ``factors[n-1]`` holds the n matrices of the degree-n term, each [d, o].
    """

    beta: Array
    factors: list  # list over n of list of n [d,o] matrices

    @property
    def degree(self) -> int:
        return len(self.factors)

    def named(self) -> dict:
        out = {"beta": self.beta}
        for n, mats in enumerate(self.factors, start=1):
            for k, m in enumerate(mats, start=1):
                out[f"c{n}_{k}"] = m
        return out

    @classmethod
    def from_named(cls, named: Mapping, degree: int) -> "PolyParams":
        factors = [[named[f"c{n}_{k}"] for k in range(1, n + 1)] for n in range(1, degree + 1)]
        return cls(beta=named["beta"], factors=factors)


@dataclass
class PiNetParams:
    """Parameters of the multiplicative-recursion block.

    A[n]: [d, o] input projections, one per level.  S[n]: [o, o] carry maps
    (none at level 1).  B[n]: [w, o] and b[n]: [w] form each level's bias
    gate.  Lists are indexed 0..N-1; ``S[0]`` is None.
    """

    A: list
    S: list
    B: list
    b: list

    @property
    def degree(self) -> int:
        return len(self.A)

    def named(self) -> dict:
        out = {}
        for n in range(self.degree):
            out[f"a{n + 1}"] = self.A[n]
            if n > 0:
                out[f"s{n + 1}"] = self.S[n]
            out[f"b{n + 1}"] = self.B[n]
            out[f"bb{n + 1}"] = self.b[n]
        return out

    @classmethod
    def from_named(cls, named: Mapping, degree: int) -> "PiNetParams":
        A = [named[f"a{n}"] for n in range(1, degree + 1)]
        S = [None] + [named[f"s{n}"] for n in range(2, degree + 1)]
        B = [named[f"b{n}"] for n in range(1, degree + 1)]
        b = [named[f"bb{n}"] for n in range(1, degree + 1)]
        return cls(A=A, S=S, B=B, b=b)


@dataclass
class AttentionParams:
    """Weight container for the attention family; unused slots stay None."""

    C1: Array | None = None
    C2: Array | None = None
    C3: Array | None = None
    C4: Array | None = None
    C5: Array | None = None
    C6: Array | None = None
    C7: Array | None = None
    C8: Array | None = None
    U1: Array | None = None
    U2: Array | None = None
    c4: Array | None = None
    ratio: int = 4

    def named(self) -> dict:
        out = {}
        for i in range(1, 9):
            m = getattr(self, f"C{i}")
            if m is not None:
                out[f"c{i}"] = m
        if self.U1 is not None:
            out["u1"] = self.U1
        if self.U2 is not None:
            out["u2"] = self.U2
        if self.c4 is not None:
            out["c4"] = self.c4
        return out


@dataclass(frozen=True)
class BlockSpec:
    """Shape-level description of one block instance.

    ``channels`` is c for matrix blocks and the input width d for vector
    blocks; ``out`` is the vector-block output width (defaults to channels);
    ``spatial`` is hw, the number of spatial positions a matrix block sees.
    ``ratio`` compresses every bottleneck map in the block.
    """

    kind: str
    channels: int
    spatial: int = 1
    degree: int | None = None
    out: int | None = None
    ratio: int = 4
    mode: ActivationMode = ActivationMode.IDENTITY
    realization: str = "dense"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ShapeError(f"unknown block kind {self.kind!r}")
        if self.realization not in REALIZATIONS:
            raise ShapeError(f"unknown realization {self.realization!r}")
        if self.realization != "dense" and self.kind not in ("residual1", "se2"):
            raise ShapeError(f"{self.kind} supports only the dense realization")
        if self.kind in VECTOR_KINDS and (self.degree is None or self.degree < 1):
            raise ShapeError(f"{self.kind} needs degree >= 1")
        if self.channels < 1 or self.spatial < 1 or self.ratio < 1:
            raise ShapeError("channels, spatial and ratio must be positive")

    @property
    def o(self) -> int:
        return self.channels if self.out is None else self.out

    @property
    def bottleneck(self) -> int:
        k = self.channels // self.ratio
        if k < 1:
            raise ShapeError(f"ratio {self.ratio} leaves no channels of {self.channels}")
        return k


def _shp(x) -> tuple:
    return tuple(x.shape)


def _expect(ok: bool, msg: str) -> None:
    if not ok:
        raise ShapeError(msg)


# -- first degree -----------------------------------------------------------


def residual_forward(X, C, beta):
    """Y = X + X C + beta: identity shortcut around one linear map."""
    _expect(_shp(C)[0] == _shp(X)[-1] == _shp(C)[1], f"C {_shp(C)} does not preserve X {_shp(X)}")
    return F.add(F.add(X, F.matmul(X, C)), beta)


# -- second degree ----------------------------------------------------------


def se_forward(X, C1, C2, mode=ActivationMode.IDENTITY):
    """Channel gating by pooled statistics: Y = (X C1) * rep(pool(X C1) C2).

    pool averages over rows (spatial positions), rep copies the gate row back
    to every position.  Quadratic in X: each output entry is (row of X C1)
    times (pooled linear functional of X).
    """
    ActivationMode.of(mode)
    hw, c = _shp(X)
    _expect(_shp(C1) == (c, c) and _shp(C2) == (c, c), f"gate weights must be [{c},{c}]")
    V = F.matmul(X, C1)
    gate = F.matmul(F.global_avg_pool(V), C2)
    return F.hadamard(V, F.replicate_rows(gate, hw))


def sk_forward(X, U1, U2, C1, C2, mode=ActivationMode.IDENTITY):
    """Two-path variant: the gate machinery applied to X U1 + X U2."""
    c = _shp(X)[-1]
    _expect(_shp(U1) == (c, c) and _shp(U2) == (c, c), f"path weights must be [{c},{c}]")
    return se_forward(F.add(F.matmul(X, U1), F.matmul(X, U2)), C1, C2, mode)


# -- arbitrary degree, vector form ------------------------------------------


def pinet_forward(z, params: PiNetParams):
    """Multiplicative recursion producing a degree-N polynomial in z.

        x_1 = (A1' z) * (B1' b1)
        x_n = (An' z) * (Sn' x_{n-1} + Bn' bn) + x_{n-1}

    Each level multiplies one more linear projection of z into the running
    product while the additive carry keeps every lower-degree term alive.
    A [B,d] input is treated as B independent samples (the bias products
    broadcast across rows).
    """
    x = F.mul(F.matmul(z, params.A[0]), F.matmul(params.b[0], params.B[0]))
    for n in range(1, params.degree):
        carry = F.add(F.matmul(x, params.S[n]), F.matmul(params.b[n], params.B[n]))
        x = F.add(F.hadamard(F.matmul(z, params.A[n]), carry), x)
    return x


def pdc_forward(z, params: PolyParams):
    """y = beta + sum_n hadamard_k (C_{k,n}' z), no sharing across degrees.

    The degree-n term multiplies n independent projections of z entrywise,
    so the block realizes a full degree-N polynomial with per-term factors.
    A [B,d] input is treated as B independent samples.
    """
    d = _shp(z)[-1]
    y = params.beta
    for mats in params.factors:
        term = None
        for C in mats:
            _expect(_shp(C)[0] == d, f"factor {_shp(C)} does not accept z of width {d}")
            proj = F.matmul(z, C)
            term = proj if term is None else F.hadamard(term, proj)
        y = F.add(y, term)
    return y


# -- third and fourth degree, attention form --------------------------------


def nl_forward(X, C1, C2, C3, mode=ActivationMode.IDENTITY):
    """Self-attention block: Y = (X C1 C2 X') X C3, cubic in X.

    C1 [c,k] and C2 [k,c] factor the pairwise map through a bottleneck;
    standard mode turns each attention row into a distribution.
    """
    mode = ActivationMode.of(mode)
    hw, c = _shp(X)
    k = _shp(C1)[1]
    _expect(_shp(C1) == (c, k) and _shp(C2) == (k, c), "C1/C2 must factor [c,c] through the bottleneck")
    _expect(_shp(C3) == (c, c), f"C3 must be [{c},{c}]")
    att = F.matmul(F.matmul(F.matmul(X, C1), C2), F.transpose(X))
    if mode is ActivationMode.STANDARD:
        att = F.softmax_rows(att)
    return F.matmul(att, F.matmul(X, C3))


def dnl_forward(X, C1, C2, c4, C3, mode=ActivationMode.IDENTITY):
    """Attention split into a centered pairwise term and a unary term.

        Y = ((X C1 - mu_q)(K - mu_k)' + X c4 1') X C3,  K = X C2'

    mu_q and mu_k are the per-channel means of the query and key rows, so the
    pairwise term sees only deviations from the spatial average; the unary
    term scores each position on its own.  Standard mode applies row softmax
    to the two attention summands separately.
    """
    mode = ActivationMode.of(mode)
    hw, c = _shp(X)
    k = _shp(C1)[1]
    _expect(_shp(C1) == (c, k) and _shp(C2) == (k, c), "C1/C2 must factor [c,c] through the bottleneck")
    _expect(_shp(c4) == (c, 1), f"c4 must be [{c},1]")
    _expect(_shp(C3) == (c, c), f"C3 must be [{c},{c}]")
    Q = F.matmul(X, C1)
    K = F.matmul(X, F.transpose(C2))
    Qc = F.sub(Q, F.replicate_rows(F.global_avg_pool(Q), hw))
    Kc = F.sub(K, F.replicate_rows(F.global_avg_pool(K), hw))
    pair = F.matmul(Qc, F.transpose(Kc))
    unary = F.matmul(F.matmul(X, c4), np.ones((1, hw)))
    if mode is ActivationMode.STANDARD:
        pair = F.softmax_rows(pair)
        unary = F.softmax_rows(unary)
    return F.matmul(F.add(pair, unary), F.matmul(X, C3))


def pdcnl3_forward(X, C1, C2, C3, C4, C5, C6, mode=ActivationMode.IDENTITY):
    """All interaction orders up to three, each with its own factors:

        Y = (X C1 C2 X') X C3 + (X C4) X C5 + X C6

    C4 [c, hw] makes the second-degree attention X C4 a full [hw, hw] map, so
    the block is bound to the spatial size it was built for.  Standard mode
    applies row softmax to the third-degree and second-degree attention maps.
    """
    mode = ActivationMode.of(mode)
    hw, c = _shp(X)
    k = _shp(C1)[1]
    _expect(_shp(C1) == (c, k) and _shp(C2) == (k, c), "C1/C2 must factor [c,c] through the bottleneck")
    _expect(_shp(C3) == (c, c) and _shp(C5) == (c, c) and _shp(C6) == (c, c), "value maps must be [c,c]")
    _expect(_shp(C4) == (c, hw), f"C4 must be [{c},{hw}] for spatial size {hw}")
    att3 = F.matmul(F.matmul(F.matmul(X, C1), C2), F.transpose(X))
    att2 = F.matmul(X, C4)
    if mode is ActivationMode.STANDARD:
        att3 = F.softmax_rows(att3)
        att2 = F.softmax_rows(att2)
    y3 = F.matmul(att3, F.matmul(X, C3))
    y2 = F.matmul(att2, F.matmul(X, C5))
    return F.add(F.add(y3, y2), F.matmul(X, C6))


def pdcnl4_forward(X, C1, C2, C3, C4, C5, C6, C7, C8, mode=ActivationMode.IDENTITY):
    """Fourth degree: the cubic block regated by its own pooled statistics.

        Y = Y3 + Y3 * rep(pool(X C7) C8),  Y3 the degree-3 block above
    """
    hw, c = _shp(X)
    kc = _shp(C7)[1]
    _expect(_shp(C7) == (c, kc) and _shp(C8) == (kc, c), "C7/C8 must factor the gate through the bottleneck")
    y3 = pdcnl3_forward(X, C1, C2, C3, C4, C5, C6, mode)
    gate = F.matmul(F.global_avg_pool(F.matmul(X, C7)), C8)
    return F.add(y3, F.hadamard(y3, F.replicate_rows(gate, hw)))


# -- spec-level dispatch ----------------------------------------------------


def block_input_shape(spec: BlockSpec) -> tuple:
    if spec.kind in VECTOR_KINDS:
        return (spec.channels,)
    return (spec.spatial, spec.channels)


def block_forward(spec: BlockSpec, x, params: Mapping):
    """Run the block named by ``spec`` with parameters from a flat dict.

    ``params`` maps the block's canonical parameter names to arrays or tape
    nodes; both backends work.
    """
    kind, mode = spec.kind, spec.mode
    if kind == "residual1":
        return residual_forward(x, params["c"], params["beta"])
    if kind == "se2":
        return se_forward(x, params["c1"], params["c2"], mode)
    if kind == "sk2":
        return sk_forward(x, params["u1"], params["u2"], params["c1"], params["c2"], mode)
    if kind == "pinet":
        return pinet_forward(x, PiNetParams.from_named(params, spec.degree))
    if kind == "pdc":
        return pdc_forward(x, PolyParams.from_named(params, spec.degree))
    if kind == "nl3":
        return nl_forward(x, params["c1"], params["c2"], params["c3"], mode)
    if kind == "dnl3":
        return dnl_forward(x, params["c1"], params["c2"], params["c4"], params["c3"], mode)
    if kind == "pdcnl3":
        return pdcnl3_forward(x, *(params[f"c{i}"] for i in range(1, 7)), mode)
    if kind == "pdcnl4":
        return pdcnl4_forward(x, *(params[f"c{i}"] for i in range(1, 9)), mode)
    raise ShapeError(f"unknown block kind {kind!r}")


def block_degree(spec: BlockSpec) -> int:
    """Declared polynomial degree of the block kind."""
    fixed = {"residual1": 1, "se2": 2, "sk2": 2, "nl3": 3, "dnl3": 3, "pdcnl3": 3, "pdcnl4": 4}
    if spec.kind in fixed:
        return fixed[spec.kind]
    if spec.kind in VECTOR_KINDS:
        return int(spec.degree)
    raise ShapeError(f"unknown block kind {spec.kind!r}")


def _param_shapes(spec: BlockSpec) -> dict:
    """Canonical name -> shape for the dense realization."""
    c, hw, r = spec.channels, spec.spatial, spec.ratio
    kind = spec.kind
    if kind == "residual1":
        return {"c": (c, c), "beta": (c,)}
    if kind == "se2":
        return {"c1": (c, c), "c2": (c, c)}
    if kind == "sk2":
        return {"u1": (c, c), "u2": (c, c), "c1": (c, c), "c2": (c, c)}
    if kind == "pinet":
        d, o = c, spec.o
        shapes = {}
        for n in range(1, spec.degree + 1):
            shapes[f"a{n}"] = (d, o)
            if n > 1:
                shapes[f"s{n}"] = (o, o)
            shapes[f"b{n}"] = (o, o)  # w = o
            shapes[f"bb{n}"] = (o,)
        return shapes
    if kind == "pdc":
        d, o = c, spec.o
        shapes = {"beta": (o,)}
        for n in range(1, spec.degree + 1):
            for k in range(1, n + 1):
                shapes[f"c{n}_{k}"] = (d, o)
        return shapes
    k = spec.bottleneck
    if kind == "nl3":
        return {"c1": (c, k), "c2": (k, c), "c3": (c, c)}
    if kind == "dnl3":
        return {"c1": (c, k), "c2": (k, c), "c3": (c, c), "c4": (c, 1)}
    if kind == "pdcnl3":
        return {"c1": (c, k), "c2": (k, c), "c3": (c, c), "c4": (c, hw), "c5": (c, c), "c6": (c, c)}
    if kind == "pdcnl4":
        return {
            "c1": (c, k), "c2": (k, c), "c3": (c, c), "c4": (c, hw),
            "c5": (c, c), "c6": (c, c), "c7": (c, k), "c8": (k, c),
        }
    raise ShapeError(f"unknown block kind {kind!r}")


# Parameters set to zero by the training initialization: every block starts
# at (or within a skip connection of) its first-degree sub-model, with
# nonzero gradient into the zeroed slots.
_INIT_ZERO = {
    "residual1": ("beta",),
    "se2": ("c2",),
    "sk2": ("c2",),
    "nl3": ("c3",),
    "dnl3": ("c3",),
    "pdcnl3": ("c3", "c5"),
    "pdcnl4": ("c3", "c5", "c8"),
}


def random_params(spec: BlockSpec, rng: np.random.Generator, scale: float = 1.0) -> dict:
    """Unit-scale random parameters; every slot nonzero.  For probes, not training."""
    return {name: scale * rng.standard_normal(shape) for name, shape in _param_shapes(spec).items()}


def init_params(spec: BlockSpec, rng: np.random.Generator) -> dict:
    """Training initialization: fan-in scaled factors, higher-degree paths zeroed."""
    out = {}
    zero = set(_INIT_ZERO.get(spec.kind, ()))
    if spec.kind == "pdc":
        zero = {f"c{n}_{n}" for n in range(2, spec.degree + 1)} | {"beta"}
    if spec.kind == "pinet":
        zero = {f"a{n}" for n in range(2, spec.degree + 1)}
    for name, shape in _param_shapes(spec).items():
        if name in zero or name == "beta":
            out[name] = np.zeros(shape)
        else:
            out[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
    return out


def block_param_count(spec: BlockSpec, in_channels: int | None = None, stride: int = 1) -> int:
    """Exact trainable scalar count for one block instance.

    Dense realization counts the algebraic weights above.  Conv realizations
    (residual1 and se2 trunk blocks) count two k x k filter banks with their
    normalization scales and shifts, a 1x1 projection shortcut when the shape
    changes, and for se2 the bottlenecked gate pair.
    """
    c = spec.channels
    if spec.realization == "dense":
        return int(sum(int(np.prod(s)) for s in _param_shapes(spec).values()))
    cin = c if in_channels is None else in_channels
    k = 3 if spec.realization == "conv3x3" else 1
    n = k * k * cin * c + 2 * c + k * k * c * c + 2 * c
    if stride != 1 or cin != c:
        n += cin * c + 2 * c
    if spec.kind == "se2":
        n += 2 * c * spec.bottleneck
    return int(n)
