"""Named verification suites behind the `verify` command.

Each suite returns a list of :class:`CheckResult` rows; a suite passes when
every row does.  The checks here are the machine-checkable claims about the
block zoo: certified degrees, agreement of the factored forwards with the
brute-force evaluators, gradient correctness, and the parameter-count
targets of the builtin architectures.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .autodiff import Graph, backprop, grad_check
from .blocks import (
    ActivationMode,
    BlockSpec,
    PolyParams,
    block_degree,
    block_forward,
    block_input_shape,
    pdc_forward,
    random_params,
)
from .errors import DegreeBoundError, NotPolynomialError
from .netzoo import build_network, count_params, parse_arch, randomize_params, resolve_arch
from .oracle import cp_expand, extract_coefficients, finite_diff_degree, fold_poly2, poly_eval_full

Array = np.ndarray

SUITE_NAMES = ("degree", "oracle", "grad", "se-identity", "fold", "all")


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: measured {self.measured:.3e} bound {self.bound:.3e}{extra}"


def _degree_cases() -> list:
    return [
        ("residual1", BlockSpec("residual1", 4, 3)),
        ("se2", BlockSpec("se2", 4, 3)),
        ("sk2", BlockSpec("sk2", 4, 3)),
        ("pinet-n2", BlockSpec("pinet", 3, degree=2, out=3)),
        ("pdc-n2", BlockSpec("pdc", 3, degree=2, out=2)),
        ("nl3", BlockSpec("nl3", 4, 4)),
        ("dnl3", BlockSpec("dnl3", 4, 4)),
        ("pdcnl3", BlockSpec("pdcnl3", 4, 4)),
        ("pinet-n3", BlockSpec("pinet", 3, degree=3, out=3)),
        ("pdcnl4", BlockSpec("pdcnl4", 4, 4)),
        ("pdc-n4", BlockSpec("pdc", 3, degree=4, out=2)),
    ]


def certify_block_degree(spec: BlockSpec, seed: int) -> int:
    """Probe one block with unit-scale random parameters along a random line."""
    rng = np.random.default_rng(seed)
    params = random_params(spec, rng)
    shape = block_input_shape(spec)
    x0 = rng.standard_normal(shape)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    return finite_diff_degree(lambda x: block_forward(spec, x, params), x0, v)


def suite_degree(seed: int = 0) -> list:
    out = []
    for name, spec in _degree_cases():
        want = block_degree(spec)
        try:
            got = certify_block_degree(spec, seed)
            out.append(CheckResult(f"degree-{name}", got == want, float(got), float(want)))
        except DegreeBoundError as e:
            out.append(CheckResult(f"degree-{name}", False, float("nan"), float(want), str(e)))
    return out


def _random_poly(rng: np.random.Generator, d: int, o: int, n: int) -> PolyParams:
    factors = [[rng.standard_normal((d, o)) for _ in range(k)] for k in range(1, n + 1)]
    return PolyParams(beta=rng.standard_normal(o), factors=factors)


def _index_loop_eval(tensors, z: Array) -> Array:
    """Independent route: explicit multi-index sums, no mode products."""
    y = tensors.beta.copy()
    for w in tensors.weights:
        o = w.shape[0]
        for out_i in range(o):
            acc = 0.0
            for idx in np.ndindex(*w.shape[1:]):
                term = w[(out_i,) + idx]
                for i in idx:
                    term = term * z[i]
                acc += term
            y[out_i] += acc
    return y


def suite_oracle(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 6))
        o = int(rng.integers(1, 4))
        n = int(rng.integers(1, 5))
        params = _random_poly(rng, d, o, n)
        z = rng.standard_normal(d)
        direct = np.asarray(pdc_eval(params, z))
        full = poly_eval_full(cp_expand(params), z)
        worst = max(worst, float(np.abs(direct - full).max()))
    out = [CheckResult("oracle-pdc-vs-expanded", worst < 1e-10, worst, 1e-10)]

    params = _random_poly(rng, 3, 2, 3)
    z = rng.standard_normal(3)
    tensors = cp_expand(params)
    dev = float(np.abs(poly_eval_full(tensors, z) - _index_loop_eval(tensors, z)).max())
    out.append(CheckResult("oracle-mode-product-vs-index-loop", dev < 1e-12, dev, 1e-12))

    params = _random_poly(rng, 3, 2, 2)
    table = extract_coefficients(lambda p: pdc_eval(params, p), 3, 2)
    tensors = cp_expand(params)
    worst = float(np.abs(table[(0, 0, 0)] - tensors.beta).max())
    for i in range(3):
        e = [0, 0, 0]
        e[i] = 1
        worst = max(worst, float(np.abs(table[tuple(e)] - tensors.weights[0][:, i]).max()))
    w2 = tensors.weights[1]
    for i in range(3):
        for j in range(i, 3):
            e = [0, 0, 0]
            e[i] += 1
            e[j] += 1
            want = w2[:, i, i] if i == j else w2[:, i, j] + w2[:, j, i]
            worst = max(worst, float(np.abs(table[tuple(e)] - want).max()))
    out.append(CheckResult("oracle-extracted-coefficients", worst < 1e-8, worst, 1e-8))

    spec = BlockSpec("nl3", 2, 2, ratio=2, mode=ActivationMode.STANDARD)
    bparams = random_params(spec, np.random.default_rng(seed + 1))

    def flat_nl(p):
        return block_forward(spec, p.reshape(2, 2), bparams).ravel()

    try:
        extract_coefficients(flat_nl, 4, 3)
        out.append(CheckResult("oracle-softmax-not-polynomial", False, 0.0, 1e-8,
                               "extraction unexpectedly succeeded"))
    except NotPolynomialError as e:
        out.append(CheckResult("oracle-softmax-not-polynomial", True, e.residual, 1e-8,
                               "large residual expected"))
    return out


def pdc_eval(params: PolyParams, z: Array) -> Array:
    return np.asarray(pdc_forward(z, params))


def block_graph(spec: BlockSpec, seed: int, scale: float = 0.5):
    """A one-block Graph plus a matching random input, for gradient checks."""
    rng = np.random.default_rng(seed)
    params = random_params(spec, rng, scale=scale)
    g = Graph(lambda x, p: block_forward(spec, x, p), params)
    return g, rng.standard_normal(block_input_shape(spec))


def suite_grad(seed: int = 0) -> list:
    out = []
    for name, spec in _degree_cases():
        for mode in (ActivationMode.IDENTITY, ActivationMode.STANDARD):
            g, x = block_graph(replace(spec, mode=mode), seed)
            err = grad_check(g, x, eps=1e-5, seed=seed)
            out.append(CheckResult(f"grad-{name}-{mode.value}", err <= 1e-4, err, 1e-4))
    return out


def suite_se_identity(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        hw = int(rng.integers(1, 7))
        c = int(rng.integers(1, 7))
        x = rng.standard_normal((hw, c))
        c1 = rng.standard_normal((c, c))
        c2 = rng.standard_normal((c, c))
        y = block_forward(BlockSpec("se2", c, hw), x, {"c1": c1, "c2": c2})
        gate = (1.0 / hw) * c2.T @ c1.T @ x.T @ np.ones(hw)
        y2 = (x @ c1) @ T.superdiag_mode3(gate)
        worst = max(worst, float(np.abs(np.asarray(y) - y2).max()))
    return [CheckResult("se-superdiagonal-identity", worst < 1e-12, worst, 1e-12)]


def suite_fold(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 6))
        o = int(rng.integers(1, 4))
        params = _random_poly(rng, d, o, 2)
        z = rng.standard_normal(d)
        xt = np.concatenate(([1.0], z))
        w = fold_poly2(params)
        folded = T.mode_n_vector_product(T.mode_n_vector_product(w, xt, 3), xt, 2)
        worst = max(worst, float(np.abs(folded - pdc_eval(params, z)).max()))
    return [CheckResult("fold-padded-evaluation", worst < 1e-12, worst, 1e-12)]


# -- extras reached only through `all` --------------------------------------


def _suite_tensor(seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = []
    a, b, c = (rng.standard_normal((4, 4)) for _ in range(3))
    dev = float(np.abs(T.matmul(T.matmul(a, b), c) - T.matmul(a, T.matmul(b, c))).max())
    out.append(CheckResult("tensor-matmul-associative", dev < 1e-10, dev, 1e-10))
    s = T.softmax_rows(rng.standard_normal((5, 7)))
    dev = float(np.abs(s.sum(axis=1) - 1.0).max())
    out.append(CheckResult("tensor-softmax-row-sums", dev < 1e-12, dev, 1e-12))
    w = rng.standard_normal((2, 3, 3))
    z = rng.standard_normal(3)
    direct = np.einsum("oij,i,j->o", w, z, z)
    via = T.mode_n_vector_product(T.mode_n_vector_product(w, z, 3), z, 2)
    dev = float(np.abs(via - direct).max())
    out.append(CheckResult("tensor-mode-product-vs-einsum", dev < 1e-10, dev, 1e-10))
    conv = T.conv2d(np.array([[[1.0, 2.0], [3.0, 4.0]]]), np.ones((1, 1, 2, 2)))
    dev = float(abs(conv[0, 0, 0] - 10.0))
    out.append(CheckResult("tensor-conv-hand-value", dev == 0.0, dev, 0.0))
    x = rng.standard_normal((6, 5))
    v = rng.standard_normal(5)
    dev = float(np.abs(x @ T.superdiag_mode3(v) - T.hadamard(x, T.replicate_rows(v[None, :], 6))).max())
    out.append(CheckResult("tensor-superdiag-vs-hadamard", dev < 1e-12, dev, 1e-12))
    return out


def _suite_autodiff(seed: int) -> list:
    out = []
    g, x = block_graph(BlockSpec("se2", 4, 3), seed)
    base = g.forward(x)
    rng = np.random.default_rng(seed)
    u1 = rng.standard_normal(base.shape)
    u2 = rng.standard_normal(base.shape)
    g1 = g.backward(u1)
    g2 = g.backward(u2)
    g12 = g.backward(u1 + u2)
    dev = max(
        float(np.abs(g12[name] - g1[name] - g2[name]).max()) for name in g.params
    )
    out.append(CheckResult("autodiff-backward-linear", dev < 1e-12, dev, 1e-12))
    gz = g.backward(np.zeros_like(base))
    dev = max(float(np.abs(v).max()) for v in gz.values())
    out.append(CheckResult("autodiff-zero-upstream", dev == 0.0, dev, 0.0))
    return out


_PARAM_TARGETS = (
    ("resnet18-cifar100", 11.2, 0.02),
    ("resnet34-cifar100", 21.3, 0.02),
    ("senet18-cifar100", 11.6, 0.03),
    ("resnet18-imagenet", 11.7, 0.02),
)


def _suite_netzoo(seed: int) -> list:
    out = []
    for name, target, tol in _PARAM_TARGETS:
        rounded = round(count_params(resolve_arch(name)) / 1e6, 1)
        rel = abs(rounded - target) / target
        out.append(CheckResult(f"params-{name}", rel <= tol, rounded, target, f"rel dev {rel:.3%}"))
    arch = resolve_arch("resnet18-cifar100")
    built = build_network(arch, seed=seed).param_count()
    dev = float(abs(built - count_params(arch)))
    out.append(CheckResult("netzoo-count-equals-built", dev == 0.0, dev, 0.0))
    for name, text, want in (
        ("deg2-deg2", "input 3\nblock kind=pdc degree=2 channels=3\n"
                      "block kind=pdc degree=2 channels=3\nhead classes=2\n", 4),
        ("deg3-deg2", "input 3\nblock kind=pdc degree=3 channels=3\n"
                      "block kind=pdc degree=2 channels=3\nhead classes=2\n", 6),
    ):
        g = randomize_params(build_network(parse_arch(text), seed=seed), seed=seed + 1)
        rng = np.random.default_rng(seed + 2)
        x0 = rng.standard_normal(3)
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        try:
            got = finite_diff_degree(g.numeric, x0, v)
            out.append(CheckResult(f"compose-{name}", got == want, float(got), float(want)))
        except DegreeBoundError as e:
            out.append(CheckResult(f"compose-{name}", False, float("nan"), float(want), str(e)))
    return out


def run_suite(name: str, seed: int = 0) -> list:
    if name == "degree":
        return suite_degree(seed)
    if name == "oracle":
        return suite_oracle(seed)
    if name == "grad":
        return suite_grad(seed)
    if name == "se-identity":
        return suite_se_identity(seed)
    if name == "fold":
        return suite_fold(seed)
    if name == "all":
        return (
            suite_degree(seed)
            + suite_oracle(seed)
            + suite_grad(seed)
            + suite_se_identity(seed)
            + suite_fold(seed)
            + _suite_tensor(seed)
            + _suite_autodiff(seed)
            + _suite_netzoo(seed)
        )
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITE_NAMES)}")


def format_results(results) -> str:
    lines = [r.line() for r in results]
    failed = sum(1 for r in results if not r.passed)
    lines.append(f"checks: {len(results)}  failed: {failed}")
    return "\n".join(lines)
