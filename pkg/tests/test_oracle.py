import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyblocks.blocks import PolyParams, pdc_forward
from polyblocks.errors import DegreeBoundError, NotPolynomialError, ShapeError
from polyblocks.oracle import (
    EXPAND_CAP,
    cp_expand,
    extract_coefficients,
    finite_diff_degree,
    fold_poly2,
    monomial_exponents,
    poly_eval_full,
)


def rng(seed=0):
    return np.random.default_rng(seed)


def random_poly(r, d, o, n):
    return PolyParams(
        beta=r.standard_normal(o),
        factors=[[r.standard_normal((d, o)) for _ in range(m)] for m in range(1, n + 1)],
    )


# -- expansion ---------------------------------------------------------------


def test_cp_expand_linear_term_is_transpose():
    r = rng(1)
    c1 = r.standard_normal((4, 2))
    full = cp_expand(PolyParams(beta=np.zeros(2), factors=[[c1]]))
    np.testing.assert_array_equal(full.weights[0], c1.T)


def test_cp_expand_quadratic_entries():
    r = rng(2)
    c21, c22 = r.standard_normal((3, 2)), r.standard_normal((3, 2))
    params = PolyParams(beta=np.zeros(2), factors=[[np.zeros((3, 2))], [c21, c22]])
    w2 = cp_expand(params).weights[1]
    assert w2.shape == (2, 3, 3)
    for q in range(2):
        for i in range(3):
            for j in range(3):
                assert w2[q, i, j] == pytest.approx(c21[i, q] * c22[j, q], abs=1e-15)


def test_cp_expand_cap():
    d, o = 10, 1
    params = random_poly(rng(3), d, o, 7)
    # 10^7 coefficient entries in the top term is past the refusal line
    with pytest.raises(ShapeError):
        cp_expand(params)
    assert d**6 * o <= EXPAND_CAP
    cp_expand(random_poly(rng(3), d, o, 6))


def test_poly_eval_full_scalar_case():
    one = np.ones((1, 1))
    params = PolyParams(beta=np.array([0.5]), factors=[[one], [one, one]])
    full = cp_expand(params)
    np.testing.assert_allclose(poly_eval_full(full, [2.0]), [0.5 + 2.0 + 4.0], atol=1e-14)


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 2**31 - 1), st.integers(1, 5), st.integers(1, 3), st.integers(1, 4))
def test_expand_evaluates_like_forward(seed, d, o, n):
    r = np.random.default_rng(seed)
    params = random_poly(r, d, o, n)
    z = r.standard_normal(d)
    np.testing.assert_allclose(
        poly_eval_full(cp_expand(params), z), pdc_forward(z, params), atol=1e-10
    )


def test_expand_matches_index_loop():
    # third route: explicit multi-index summation
    r = rng(4)
    d, o = 3, 2
    params = random_poly(r, d, o, 3)
    z = r.standard_normal(d)
    full = cp_expand(params)
    want = params.beta.copy()
    for w in full.weights:
        n = w.ndim - 1
        for idx in np.ndindex(*([d] * n)):
            for q in range(o):
                want[q] += w[(q,) + idx] * np.prod([z[i] for i in idx])
    np.testing.assert_allclose(poly_eval_full(full, z), want, atol=1e-11)


# -- degree-2 fold -----------------------------------------------------------


def test_fold_corner_layout():
    r = rng(5)
    d, o = 3, 2
    params = random_poly(r, d, o, 2)
    w = fold_poly2(params)
    assert w.shape == (o, d + 1, d + 1)
    np.testing.assert_array_equal(w[:, 0, 0], params.beta)
    np.testing.assert_array_equal(w[:, 1:, 0], params.factors[0][0].T)
    np.testing.assert_array_equal(w[:, 0, 1:], np.zeros((o, d)))


def test_fold_padded_evaluation():
    r = rng(6)
    d, o = 4, 3
    params = random_poly(r, d, o, 2)
    w = fold_poly2(params)
    z = r.standard_normal(d)
    xt = np.concatenate([[1.0], z])
    got = np.einsum("oij,i,j->o", w, xt, xt)
    np.testing.assert_allclose(got, pdc_forward(z, params), atol=1e-12)


def test_fold_rejects_other_degrees():
    with pytest.raises(ShapeError):
        fold_poly2(random_poly(rng(7), 3, 2, 3))


# -- finite-difference degree ------------------------------------------------


def test_degree_of_line_polynomials():
    x0, v = np.zeros(1), np.ones(1)
    assert finite_diff_degree(lambda x: 3 * x + 1, x0, v) == 1
    assert finite_diff_degree(lambda x: x**2 - x, x0, v) == 2
    assert finite_diff_degree(lambda x: x**3 + 0.1 * x, x0, v) == 3
    assert finite_diff_degree(lambda x: x**6, x0, v) == 6


def test_degree_multivariate_restriction():
    # along direction (1,1) the quartic term x0^2*x1^2 dominates
    def f(x):
        return np.array([x[0] ** 2 * x[1] ** 2 + x[0]])

    assert finite_diff_degree(f, np.zeros(2), np.ones(2)) == 4
    # along (1,0) the same f restricts to a quadratic... only x[0]^2*0+... -> x[0]
    assert finite_diff_degree(f, np.array([0.0, 1.0]), np.array([1.0, 0.0])) == 2


def test_degree_rejects_transcendental():
    with pytest.raises(DegreeBoundError):
        finite_diff_degree(lambda x: np.exp(x), np.zeros(1), np.ones(1))


def test_degree_rejects_past_bound():
    with pytest.raises(DegreeBoundError):
        finite_diff_degree(lambda x: x**7, np.zeros(1), np.ones(1))


def test_degree_parameter_validation():
    with pytest.raises(ValueError):
        finite_diff_degree(lambda x: x, np.zeros(1), np.ones(1), h=0.01)
    with pytest.raises(ValueError):
        finite_diff_degree(lambda x: x, np.zeros(1), np.ones(1), h=2.0)
    with pytest.raises(ValueError):
        finite_diff_degree(lambda x: x, np.zeros(1), np.ones(1), n_max=7)


def test_degree_scale_tolerant():
    # coefficients spanning 6 orders of magnitude still certify cleanly
    assert finite_diff_degree(lambda x: 1e4 * x**2 + 1e-2 * x, np.zeros(1), np.ones(1)) == 2


# -- coefficient extraction --------------------------------------------------


def test_monomial_exponents_counts_and_order():
    expos = monomial_exponents(3, 2)
    assert len(expos) == 10  # 1 + 3 + 6
    degrees = [sum(e) for e in expos]
    assert degrees == sorted(degrees)
    assert expos[0] == (0, 0, 0)
    assert set(e for e in expos if sum(e) == 1) == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}


def test_extract_recovers_affine_coefficients():
    r = rng(8)
    c1 = r.standard_normal((3, 2))
    beta = r.standard_normal(2)
    params = PolyParams(beta=beta, factors=[[c1]])
    table = extract_coefficients(lambda z: pdc_forward(z, params), d=3, n=2)
    np.testing.assert_allclose(table[(0, 0, 0)], beta, atol=1e-10)
    np.testing.assert_allclose(table[(1, 0, 0)], c1[0], atol=1e-10)
    np.testing.assert_allclose(table[(0, 1, 0)], c1[1], atol=1e-10)
    assert table.total(2) < 1e-10  # no quadratic content in an affine map


def test_extract_recovers_quadratic_coefficients():
    r = rng(9)
    d, o = 3, 2
    params = random_poly(r, d, o, 2)
    full = cp_expand(params)
    table = extract_coefficients(lambda z: pdc_forward(z, params), d=d, n=2)
    w2 = full.weights[1]
    for i in range(d):
        e = [0] * d
        e[i] = 2
        np.testing.assert_allclose(table[tuple(e)], w2[:, i, i], atol=1e-9)
    for i in range(d):
        for j in range(i + 1, d):
            e = [0] * d
            e[i] = e[j] = 1
            np.testing.assert_allclose(table[tuple(e)], w2[:, i, j] + w2[:, j, i], atol=1e-9)


def test_extract_flags_non_polynomial():
    with pytest.raises(NotPolynomialError) as exc:
        extract_coefficients(lambda z: np.array([np.sin(2.0 * z[0])]), d=2, n=3)
    assert exc.value.residual >= exc.value.bound


def test_extract_flags_underfit_degree():
    # a cubic probed as if quadratic leaves an irreducible residual
    with pytest.raises(NotPolynomialError):
        extract_coefficients(lambda z: np.array([z[0] ** 3]), d=2, n=2)


def test_extract_dimension_limits():
    with pytest.raises(ValueError):
        extract_coefficients(lambda z: z, d=5, n=2)
    with pytest.raises(ValueError):
        extract_coefficients(lambda z: z, d=2, n=5)


def test_extract_is_deterministic():
    r = rng(10)
    params = random_poly(r, 2, 1, 2)
    f = lambda z: pdc_forward(z, params)
    t1 = extract_coefficients(f, 2, 2)
    t2 = extract_coefficients(f, 2, 2)
    for e in t1.coeffs:
        np.testing.assert_array_equal(t1[e], t2[e])
