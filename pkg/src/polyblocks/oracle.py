"""Brute-force certification of polynomial structure.

Nothing here knows how a block is factored.  The evaluators expand or probe
functions as black boxes: full coefficient tensors built index by index,
degree read off from finite differences along a line, coefficients recovered
by solving the monomial linear system.  Agreement between these routes and
the block forwards is what certifies the degree claims, so the two routes
must stay independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb
from typing import Callable, Mapping

import numpy as np

from .blocks import PolyParams
from .errors import DegreeBoundError, NotPolynomialError, PointsDegenerateError, ShapeError
from .tensor import mode_n_vector_product

Array = np.ndarray

EXPAND_CAP = 10**6
COEFF_SEED = 1729


@dataclass
class FullPolyTensors:
    """Dense coefficient tensors: weights[n-1] has shape [o, d, ..., d] (n d's)."""

    beta: Array
    weights: list

    @property
    def degree(self) -> int:
        return len(self.weights)


@dataclass
class CoefficientTable:
    """Monomial exponent vector (length d, sum <= degree) -> coefficient [o]."""

    degree: int
    coeffs: dict  # tuple[int,...] -> Array [o]

    def __getitem__(self, expo) -> Array:
        return self.coeffs[tuple(expo)]

    def total(self, deg: int) -> float:
        """Largest |coefficient| among monomials of exactly this total degree."""
        vals = [np.abs(v).max() for e, v in self.coeffs.items() if sum(e) == deg]
        return float(max(vals)) if vals else 0.0


def cp_expand(params: PolyParams) -> FullPolyTensors:
    """Multiply the per-degree factors out into dense coefficient tensors.

    W_n[o, i1..in] = prod_k C_{k,n}[ik, o].  Memory grows as d^N * o, so the
    expansion refuses inputs past a fixed cap.
    """
    d, o = params.factors[0][0].shape
    n_max = params.degree
    if d**n_max * o > EXPAND_CAP:
        raise ShapeError(f"expansion size d^N*o = {d**n_max * o} exceeds cap {EXPAND_CAP}")
    weights = []
    for mats in params.factors:
        w = np.asarray(mats[0]).T.copy()  # [o, d]
        for C in mats[1:]:
            w = w[..., None] * np.asarray(C).T.reshape((o,) + (1,) * (w.ndim - 1) + (d,))
        weights.append(w)
    return FullPolyTensors(beta=np.asarray(params.beta).copy(), weights=weights)


def poly_eval_full(tensors: FullPolyTensors, z) -> Array:
    """Evaluate y = beta + sum_n W_n x2 z x3 z ... by repeated mode products."""
    z = np.asarray(z, dtype=np.float64)
    y = tensors.beta.astype(np.float64).copy()
    for w in tensors.weights:
        acc = np.asarray(w, dtype=np.float64)
        while acc.ndim > 1:
            acc = mode_n_vector_product(acc, z, acc.ndim)
        y = y + acc
    return y


def fold_poly2(params: PolyParams) -> Array:
    """Fold a degree-2 block into one [o, d+1, d+1] tensor over x~ = [1; z].

    Constant, linear and quadratic coefficients live at [0,0], [i+1,0] and
    [i+1,j+1]; contraction of the last two modes with x~ reproduces the block.
    """
    if params.degree != 2:
        raise ShapeError(f"fold requires degree 2, got {params.degree}")
    c11 = np.asarray(params.factors[0][0])
    c21, c22 = (np.asarray(m) for m in params.factors[1])
    d, o = c11.shape
    w = np.zeros((o, d + 1, d + 1))
    w[:, 0, 0] = np.asarray(params.beta)
    w[:, 1:, 0] = c11.T
    w[:, 1:, 1:] = c21.T[:, :, None] * c22.T[:, None, :]
    return w


def finite_diff_degree(
    f: Callable[[Array], Array],
    x0,
    v,
    n_max: int = 6,
    h: float = 0.5,
) -> int:
    """Certify the polynomial degree of f restricted to the line x0 + t v.

    The k-th forward difference of g(t) = f(x0 + t v) kills polynomials of
    degree < k, so the first order whose difference vanishes (relative to the
    sampled magnitude) while the previous one does not is the degree.  Raises
    when no order within n_max qualifies.
    """
    if not 0.1 <= h <= 1.0:
        raise ValueError(f"step h={h} outside [0.1, 1]")
    if n_max > 6:
        raise ValueError(f"n_max={n_max} exceeds 6")
    x0 = np.asarray(x0, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    samples = [np.asarray(f(x0 + (j * h) * v), dtype=np.float64) for j in range(n_max + 2)]
    scale = max(1.0, max(float(np.abs(s).max()) for s in samples))
    diffs = {}
    for k in range(1, n_max + 2):
        acc = np.zeros_like(samples[0])
        for j in range(k + 1):
            acc = acc + ((-1) ** j) * comb(k, j) * samples[k - j]
        diffs[k] = float(np.abs(acc).max())
    for n in range(1, n_max + 1):
        if diffs[n] > 1e-8 and diffs[n + 1] < 1e-6 * scale:
            return n
    raise DegreeBoundError(
        f"no degree within {n_max} certified (diffs {['%.2e' % diffs[k] for k in sorted(diffs)]})"
    )


def monomial_exponents(d: int, n: int) -> list:
    """All exponent vectors of length d with total degree <= n, ascending by degree."""
    out = [(0,) * d]
    for deg in range(1, n + 1):
        row = set()
        for pick in combinations_with_replacement(range(d), deg):
            e = [0] * d
            for i in pick:
                e[i] += 1
            row.add(tuple(e))
        out.extend(sorted(row))
    return out


def extract_coefficients(f: Callable[[Array], Array], d: int, n: int) -> CoefficientTable:
    """Recover every monomial coefficient of f up to total degree n.

    Solves the Vandermonde-style system over a fixed seeded point cloud with
    twice as many points as unknowns.  A rank-deficient system means the
    points were degenerate; a large refit residual means f is not actually a
    polynomial of degree <= n on that region.
    """
    if d > 4 or n > 4:
        raise ValueError(f"extraction limited to d<=4, N<=4 (got d={d}, N={n})")
    expos = monomial_exponents(d, n)
    m = 2 * comb(d + n, n)
    rng = np.random.default_rng(COEFF_SEED)
    pts = rng.uniform(-1.0, 1.0, size=(m, d))
    design = np.empty((m, len(expos)))
    for col, e in enumerate(expos):
        design[:, col] = np.prod(pts ** np.asarray(e), axis=1)
    rank = np.linalg.matrix_rank(design)
    if rank < len(expos):
        raise PointsDegenerateError(f"design rank {rank} < {len(expos)} unknowns")
    vals = np.stack([np.asarray(f(p), dtype=np.float64).reshape(-1) for p in pts])
    sol, *_ = np.linalg.lstsq(design, vals, rcond=None)
    residual = float(np.abs(design @ sol - vals).max())
    if residual >= 1e-8:
        raise NotPolynomialError(residual, 1e-8)
    return CoefficientTable(degree=n, coeffs={e: sol[i].copy() for i, e in enumerate(expos)})
