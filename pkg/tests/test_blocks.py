import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyblocks import blocks as B
from polyblocks import tensor as T
from polyblocks.blocks import (
    ActivationMode,
    BlockSpec,
    PiNetParams,
    PolyParams,
    block_degree,
    block_forward,
    block_input_shape,
    block_param_count,
    dnl_forward,
    init_params,
    nl_forward,
    pdc_forward,
    pdcnl3_forward,
    pdcnl4_forward,
    pinet_forward,
    random_params,
    residual_forward,
    se_forward,
    sk_forward,
)
from polyblocks.errors import ShapeError


def rng(seed=0):
    return np.random.default_rng(seed)


# -- residual ----------------------------------------------------------------


def test_residual_pure_shortcut():
    x = rng().standard_normal((3, 4))
    np.testing.assert_array_equal(residual_forward(x, np.zeros((4, 4)), np.zeros(4)), x)


def test_residual_identity_weight_doubles():
    x = rng(1).standard_normal((3, 4))
    np.testing.assert_allclose(residual_forward(x, np.eye(4), np.zeros(4)), 2 * x, atol=1e-14)


def test_residual_matches_affine_composition():
    r = rng(2)
    x, c, beta = r.standard_normal((5, 3)), r.standard_normal((3, 3)), r.standard_normal(3)
    np.testing.assert_allclose(
        residual_forward(x, c, beta), x @ (np.eye(3) + c) + beta, atol=1e-12
    )


# -- squeeze-excitation and selective-kernel ---------------------------------


def test_se_hand_value():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = se_forward(x, np.eye(2), np.eye(2))
    np.testing.assert_allclose(out, [[2.0, 6.0], [6.0, 12.0]], atol=1e-14)


def test_se_zero_gate_kills_output():
    x = rng(3).standard_normal((4, 3))
    out = se_forward(x, rng(4).standard_normal((3, 3)), np.zeros((3, 3)))
    np.testing.assert_array_equal(out, np.zeros((4, 3)))


def test_se_superdiagonal_form():
    r = rng(5)
    hw, c = 6, 4
    x, c1, c2 = r.standard_normal((hw, c)), r.standard_normal((c, c)), r.standard_normal((c, c))
    direct = se_forward(x, c1, c2)
    gate = (1.0 / hw) * c2.T @ c1.T @ x.T @ np.ones(hw)
    via_diag = (x @ c1) @ T.superdiag_mode3(gate)
    np.testing.assert_allclose(direct, via_diag, atol=1e-12)


def test_sk_single_path_reduces_to_se():
    r = rng(6)
    x = r.standard_normal((4, 3))
    c1, c2 = r.standard_normal((3, 3)), r.standard_normal((3, 3))
    got = sk_forward(x, np.eye(3), np.zeros((3, 3)), c1, c2)
    np.testing.assert_allclose(got, se_forward(x, c1, c2), atol=1e-14)


def test_sk_double_identity_paths():
    r = rng(7)
    x = r.standard_normal((4, 3))
    c1, c2 = r.standard_normal((3, 3)), r.standard_normal((3, 3))
    got = sk_forward(x, np.eye(3), np.eye(3), c1, c2)
    np.testing.assert_allclose(got, se_forward(2 * x, c1, c2), atol=1e-13)


# -- multiplicative recursion ------------------------------------------------


def test_pinet_level_one_with_unit_gate():
    r = rng(8)
    a = r.standard_normal((4, 3))
    z = r.standard_normal(4)
    params = PiNetParams(A=[a], S=[None], B=[np.eye(3)], b=[np.ones(3)])
    np.testing.assert_allclose(pinet_forward(z, params), a.T @ z, atol=1e-14)


def test_pinet_zero_projections_zero_output():
    r = rng(9)
    params = PiNetParams(
        A=[np.zeros((4, 3)), np.zeros((4, 3))],
        S=[None, r.standard_normal((3, 3))],
        B=[r.standard_normal((3, 3)), r.standard_normal((3, 3))],
        b=[r.standard_normal(3), r.standard_normal(3)],
    )
    np.testing.assert_array_equal(pinet_forward(rng(10).standard_normal(4), params), np.zeros(3))


def test_pinet_recursion_hand_unrolled():
    r = rng(11)
    d, o = 3, 2
    A = [r.standard_normal((d, o)) for _ in range(2)]
    S = [None, r.standard_normal((o, o))]
    Bm = [r.standard_normal((o, o)) for _ in range(2)]
    bv = [r.standard_normal(o) for _ in range(2)]
    z = r.standard_normal(d)
    x1 = (A[0].T @ z) * (Bm[0].T @ bv[0])
    x2 = (A[1].T @ z) * (S[1].T @ x1 + Bm[1].T @ bv[1]) + x1
    got = pinet_forward(z, PiNetParams(A=A, S=S, B=Bm, b=bv))
    np.testing.assert_allclose(got, x2, atol=1e-13)


# -- independent-factor polynomial -------------------------------------------


def test_pdc_degree_one_is_affine():
    r = rng(12)
    c1 = r.standard_normal((4, 2))
    beta = r.standard_normal(2)
    z = r.standard_normal(4)
    got = pdc_forward(z, PolyParams(beta=beta, factors=[[c1]]))
    np.testing.assert_allclose(got, beta + c1.T @ z, atol=1e-14)


def test_pdc_scalar_expansion():
    one = np.ones((1, 1))
    params = PolyParams(beta=np.zeros(1), factors=[[one], [one, one]])
    for z in (-1.5, 0.0, 2.0):
        got = pdc_forward(np.array([z]), params)
        np.testing.assert_allclose(got, [z + z * z], atol=1e-14)


def test_pdc_batched_rows_match_loop():
    r = rng(13)
    spec = BlockSpec("pdc", channels=5, degree=3, out=2)
    params = random_params(spec, r)
    zb = r.standard_normal((6, 5))
    batched = block_forward(spec, zb, params)
    rows = np.stack([block_forward(spec, zb[i], params) for i in range(6)])
    np.testing.assert_allclose(batched, rows, atol=1e-13)


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 5), st.integers(1, 3))
def test_pdc_term_sum_structure(seed, n, d, o):
    # output equals the sum of per-degree Hadamard terms computed by hand
    r = np.random.default_rng(seed)
    factors = [[r.standard_normal((d, o)) for _ in range(m)] for m in range(1, n + 1)]
    beta = r.standard_normal(o)
    z = r.standard_normal(d)
    want = beta.copy()
    for mats in factors:
        t = np.ones(o)
        for m in mats:
            t = t * (m.T @ z)
        want = want + t
    got = pdc_forward(z, PolyParams(beta=beta, factors=factors))
    np.testing.assert_allclose(got, want, atol=1e-11)


# -- attention family --------------------------------------------------------


def test_nl_zero_value_map():
    r = rng(14)
    x = r.standard_normal((4, 4))
    out = nl_forward(x, r.standard_normal((4, 1)), r.standard_normal((1, 4)), np.zeros((4, 4)))
    np.testing.assert_array_equal(out, np.zeros((4, 4)))


def test_nl_single_position_hand_value():
    r = rng(15)
    x = r.standard_normal((1, 3))
    c1, c2, c3 = r.standard_normal((3, 1)), r.standard_normal((1, 3)), r.standard_normal((3, 3))
    att = (x @ c1 @ c2 @ x.T).item()
    np.testing.assert_allclose(nl_forward(x, c1, c2, c3), att * (x @ c3), atol=1e-13)


def test_nl_standard_mode_rows_are_distributions():
    r = rng(16)
    x = r.standard_normal((5, 4))
    c1, c2, c3 = r.standard_normal((4, 1)), r.standard_normal((1, 4)), np.eye(4)
    ident = nl_forward(x, c1, c2, c3, ActivationMode.IDENTITY)
    std = nl_forward(x, c1, c2, c3, ActivationMode.STANDARD)
    assert not np.allclose(ident, std)
    att = T.softmax_rows(x @ c1 @ c2 @ x.T)
    np.testing.assert_allclose(std, att @ x, atol=1e-12)


def test_dnl_zero_queries_and_unary_kill_output():
    r = rng(17)
    x = r.standard_normal((4, 4))
    out = dnl_forward(
        x, np.zeros((4, 2)), r.standard_normal((2, 4)), np.zeros((4, 1)), np.eye(4)
    )
    np.testing.assert_array_equal(out, np.zeros((4, 4)))


def test_dnl_query_shift_invariance():
    # X with an all-ones column turns a rank-one C1 update into a constant
    # row added to every query; centering must cancel it exactly
    r = rng(18)
    x = r.standard_normal((5, 4))
    x[:, 0] = 1.0
    c1 = r.standard_normal((4, 2))
    shift = np.zeros((4, 2))
    shift[0] = r.standard_normal(2) * 3
    c2, c3 = r.standard_normal((2, 4)), r.standard_normal((4, 4))
    c4 = r.standard_normal((4, 1))
    base = dnl_forward(x, c1, c2, c4, c3)
    shifted = dnl_forward(x, c1 + shift, c2, c4, c3)
    np.testing.assert_allclose(base, shifted, atol=1e-12)


def test_dnl_equals_nl_on_centered_input():
    r = rng(19)
    x = r.standard_normal((6, 4))
    x = x - x.mean(axis=0, keepdims=True)  # queries and keys get zero spatial mean
    c1, c2, c3 = r.standard_normal((4, 2)), r.standard_normal((2, 4)), r.standard_normal((4, 4))
    got = dnl_forward(x, c1, c2, np.zeros((4, 1)), c3)
    want = nl_forward(x, c1, c2, c3)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_pdcnl3_reduces_to_first_degree():
    r = rng(20)
    x = r.standard_normal((4, 4))
    z = np.zeros((4, 1)), np.zeros((1, 4))
    c6 = r.standard_normal((4, 4))
    out = pdcnl3_forward(x, z[0], z[1], np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)), c6)
    np.testing.assert_allclose(out, x @ c6, atol=1e-14)


def test_pdcnl3_term_sum():
    r = rng(21)
    hw, c, k = 5, 4, 1
    x = r.standard_normal((hw, c))
    c1, c2 = r.standard_normal((c, k)), r.standard_normal((k, c))
    c3, c5, c6 = (r.standard_normal((c, c)) for _ in range(3))
    c4 = r.standard_normal((c, hw))
    got = pdcnl3_forward(x, c1, c2, c3, c4, c5, c6)
    want = (x @ c1 @ c2 @ x.T) @ (x @ c3) + (x @ c4) @ (x @ c5) + x @ c6
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_pdcnl4_closed_gate_equals_cubic():
    r = rng(22)
    hw, c, k = 4, 4, 1
    x = r.standard_normal((hw, c))
    args = (
        r.standard_normal((c, k)), r.standard_normal((k, c)), r.standard_normal((c, c)),
        r.standard_normal((c, hw)), r.standard_normal((c, c)), r.standard_normal((c, c)),
    )
    got = pdcnl4_forward(x, *args, r.standard_normal((c, k)), np.zeros((k, c)))
    np.testing.assert_array_equal(got, pdcnl3_forward(x, *args))


def test_pdcnl4_pure_gate_branch():
    r = rng(23)
    hw, c, k = 4, 4, 2
    x = r.standard_normal((hw, c))
    zero, zk = np.zeros((c, c)), np.zeros((c, k))
    c7, c8 = r.standard_normal((c, k)), r.standard_normal((k, c))
    got = pdcnl4_forward(x, zk, np.zeros((k, c)), zero, np.zeros((c, hw)), zero, np.eye(c), c7, c8)
    gate = np.mean(x @ c7, axis=0) @ c8
    np.testing.assert_allclose(got, x + x * gate[None, :], atol=1e-13)


# -- spec-level dispatch -----------------------------------------------------

ALL_SPECS = [
    BlockSpec("residual1", 4, 3),
    BlockSpec("se2", 4, 3),
    BlockSpec("sk2", 4, 3),
    BlockSpec("pinet", 3, degree=2, out=3),
    BlockSpec("pinet", 3, degree=3, out=3),
    BlockSpec("pdc", 3, degree=2, out=2),
    BlockSpec("pdc", 3, degree=4, out=2),
    BlockSpec("nl3", 4, 4),
    BlockSpec("dnl3", 4, 4),
    BlockSpec("pdcnl3", 4, 4),
    BlockSpec("pdcnl4", 4, 4),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind}-n{s.degree or block_degree(s)}")
def test_block_forward_shapes(spec):
    r = rng(24)
    params = random_params(spec, r)
    x = r.standard_normal(block_input_shape(spec))
    out = block_forward(spec, x, params)
    if spec.kind in B.VECTOR_KINDS:
        assert out.shape == (spec.o,)
    else:
        assert out.shape == x.shape


def test_block_degree_map():
    degrees = {s.kind if s.degree is None else f"{s.kind}{s.degree}": block_degree(s) for s in ALL_SPECS}
    assert degrees == {
        "residual1": 1, "se2": 2, "sk2": 2,
        "pinet2": 2, "pinet3": 3, "pdc2": 2, "pdc4": 4,
        "nl3": 3, "dnl3": 3, "pdcnl3": 3, "pdcnl4": 4,
    }


def test_activation_mode_of():
    assert ActivationMode.of("standard") is ActivationMode.STANDARD
    assert ActivationMode.of(ActivationMode.IDENTITY) is ActivationMode.IDENTITY
    with pytest.raises(ValueError):
        ActivationMode.of("relu")


def test_blockspec_validation():
    with pytest.raises(ShapeError):
        BlockSpec("nosuch", 4)
    with pytest.raises(ShapeError):
        BlockSpec("nl3", 4, realization="conv3x3")
    with pytest.raises(ShapeError):
        BlockSpec("pdc", 4)  # degree required
    with pytest.raises(ShapeError):
        BlockSpec("se2", 0)
    with pytest.raises(ShapeError):
        BlockSpec("nl3", 2, ratio=4).bottleneck  # no channels left


def test_named_round_trips():
    r = rng(25)
    spec = BlockSpec("pdc", 4, degree=3, out=2)
    params = random_params(spec, r)
    p = PolyParams.from_named(params, 3)
    assert set(p.named()) == set(params)
    for k, v in p.named().items():
        np.testing.assert_array_equal(v, params[k])

    spec = BlockSpec("pinet", 4, degree=3, out=3)
    params = random_params(spec, r)
    q = PiNetParams.from_named(params, 3)
    assert set(q.named()) == set(params)
    assert q.S[0] is None


# -- initialization ----------------------------------------------------------


def test_random_params_every_slot_nonzero():
    for spec in ALL_SPECS:
        for name, v in random_params(spec, rng(26)).items():
            assert np.abs(v).max() > 0, f"{spec.kind}:{name}"


def test_init_params_zeroes_higher_degree_paths():
    r = rng(27)
    p = init_params(BlockSpec("pdc", 4, degree=3), r)
    assert not p["beta"].any() and not p["c2_2"].any() and not p["c3_3"].any()
    assert p["c1_1"].any() and p["c2_1"].any() and p["c3_1"].any() and p["c3_2"].any()

    p = init_params(BlockSpec("pinet", 4, degree=3, out=4), r)
    assert p["a1"].any() and not p["a2"].any() and not p["a3"].any()

    p = init_params(BlockSpec("pdcnl4", 8, 4), r)
    for z in ("c3", "c5", "c8"):
        assert not p[z].any()
    for nz in ("c1", "c2", "c4", "c6", "c7"):
        assert p[nz].any()

    p = init_params(BlockSpec("residual1", 4), r)
    assert not p["beta"].any() and p["c"].any()


def test_init_scale_tracks_fan_in():
    # big fan-in must shrink entries roughly like 1/sqrt(d)
    p = init_params(BlockSpec("pdc", 1024, degree=1, out=8), rng(28))
    assert p["c1_1"].std() < 0.08


# -- parameter counting ------------------------------------------------------


def test_dense_counts_hand_values():
    assert block_param_count(BlockSpec("residual1", 4)) == 20
    assert block_param_count(BlockSpec("pdc", 4, degree=2)) == 52
    assert block_param_count(BlockSpec("se2", 4)) == 32
    assert block_param_count(BlockSpec("pinet", 4, degree=1)) == 4 * 4 + 4 * 4 + 4


def test_conv_counts_hand_values():
    # two 3x3 banks with scale/shift pairs
    spec = BlockSpec("residual1", 64, realization="conv3x3")
    assert block_param_count(spec, in_channels=64) == 9 * 64 * 64 * 2 + 4 * 64
    # stride-2 entry adds a projection shortcut
    spec = BlockSpec("residual1", 128, realization="conv3x3")
    got = block_param_count(spec, in_channels=64, stride=2)
    assert got == 9 * 64 * 128 + 9 * 128 * 128 + 4 * 128 + 64 * 128 + 2 * 128
    # gate pair on top for the gated variant
    gated = BlockSpec("se2", 64, ratio=16, realization="conv3x3")
    plain = BlockSpec("residual1", 64, realization="conv3x3")
    assert block_param_count(gated, 64) - block_param_count(plain, 64) == 2 * 64 * 4


def test_param_count_matches_shapes_table():
    for spec in ALL_SPECS:
        total = sum(v.size for v in random_params(spec, rng(29)).values())
        assert block_param_count(spec) == total
