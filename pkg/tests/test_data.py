import numpy as np
import pytest

from polyblocks.data import (
    Dataset,
    class_histogram,
    imbalance_profile,
    load_dataset,
    longtail_resample,
    quadratic_form,
    save_dataset,
    subsample_per_class,
    synth_quadratic,
)
from polyblocks.errors import DatasetFormatError


def vector_ds(counts, d=4, seed=0, classes=None):
    """Labeled float32 vectors with the given per-class sample counts."""
    r = np.random.default_rng(seed)
    labels = np.concatenate([np.full(n, k) for k, n in enumerate(counts)])
    x = r.standard_normal((labels.size, d)).astype(np.float32)
    return Dataset(x, labels, classes or len(counts))


# -- container ---------------------------------------------------------------


def test_dataset_validation():
    x = np.zeros((4, 3), dtype=np.float32)
    with pytest.raises(DatasetFormatError):
        Dataset(x, np.array([0, 0, 0]), 2)  # count mismatch
    with pytest.raises(DatasetFormatError):
        Dataset(x, np.array([0, 0, 1, 2]), 2)  # label out of range
    with pytest.raises(DatasetFormatError):
        Dataset(x.astype(np.float64), np.zeros(4, dtype=int), 2)  # dtype
    with pytest.raises(DatasetFormatError):
        Dataset(x.reshape(4, 3, 1), np.zeros(4, dtype=int), 2)  # rank 3


def test_class_counts_and_histogram():
    ds = vector_ds([3, 1, 2])
    np.testing.assert_array_equal(ds.class_counts, [3, 1, 2])
    np.testing.assert_array_equal(class_histogram(ds), [3, 1, 2])
    assert len(ds) == 6


def test_float_inputs_scaling():
    img = Dataset(np.full((2, 1, 2, 2), 255, dtype=np.uint8), np.zeros(2, dtype=int), 2)
    assert img.float_inputs().max() == 1.0
    vec = vector_ds([2, 2])
    assert vec.float_inputs().dtype == np.float64


def test_take_copies():
    ds = vector_ds([2, 2])
    sub = ds.take([0, 2])
    sub.inputs[0, 0] = 99.0
    assert ds.inputs[0, 0] != 99.0


# -- file format -------------------------------------------------------------


def test_round_trip_vectors(tmp_path):
    ds = vector_ds([3, 5], d=6, seed=1)
    p = tmp_path / "v.pdcd"
    save_dataset(p, ds)
    back = load_dataset(p)
    assert back.inputs.dtype == np.float32
    np.testing.assert_array_equal(back.inputs, ds.inputs)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.classes == 2


def test_round_trip_images(tmp_path):
    r = np.random.default_rng(2)
    ds = Dataset(
        r.integers(0, 256, size=(7, 3, 4, 4), dtype=np.uint8),
        r.integers(0, 3, size=7),
        3,
    )
    p = tmp_path / "i.pdcd"
    save_dataset(p, ds)
    back = load_dataset(p)
    assert back.inputs.dtype == np.uint8
    np.testing.assert_array_equal(back.inputs, ds.inputs)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_save_is_byte_deterministic(tmp_path):
    ds = vector_ds([4, 4], seed=3)
    a, b = tmp_path / "a.pdcd", tmp_path / "b.pdcd"
    save_dataset(a, ds)
    save_dataset(b, ds)
    assert a.read_bytes() == b.read_bytes()


def test_load_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.pdcd"
    save_dataset(p, vector_ds([2, 2]))
    raw = bytearray(p.read_bytes())
    raw[:4] = b"NOPE"
    p.write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError, match="magic"):
        load_dataset(p)


def test_load_rejects_bad_version(tmp_path):
    p = tmp_path / "bad.pdcd"
    save_dataset(p, vector_ds([2, 2]))
    raw = bytearray(p.read_bytes())
    raw[4] = 99
    p.write_bytes(bytes(raw))
    with pytest.raises(DatasetFormatError, match="version"):
        load_dataset(p)


def test_load_rejects_truncation_and_trailing(tmp_path):
    p = tmp_path / "t.pdcd"
    save_dataset(p, vector_ds([2, 2]))
    raw = p.read_bytes()
    p.write_bytes(raw[:-3])
    with pytest.raises(DatasetFormatError, match="truncated"):
        load_dataset(p)
    p.write_bytes(raw + b"\x00")
    with pytest.raises(DatasetFormatError, match="trailing"):
        load_dataset(p)


def test_loaded_arrays_are_writable(tmp_path):
    p = tmp_path / "w.pdcd"
    save_dataset(p, vector_ds([2, 2]))
    back = load_dataset(p)
    back.inputs[0, 0] = 1.0  # frombuffer views are read-only; the loader must copy


# -- synthetic quadratic task ------------------------------------------------


def test_synth_balanced_and_deterministic():
    a = synth_quadratic(6, 40, seed=9)
    b = synth_quadratic(6, 40, seed=9)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.class_counts, [40, 40])
    assert a.inputs.dtype == np.float32
    c = synth_quadratic(6, 40, seed=10)
    assert not np.array_equal(a.inputs, c.inputs)


def test_synth_labels_match_form_sign():
    ds = synth_quadratic(5, 30, seed=4)
    q = quadratic_form(5, 4)
    vals = np.einsum("bi,ij,bj->b", ds.inputs.astype(np.float64), q, ds.inputs.astype(np.float64))
    np.testing.assert_array_equal(ds.labels, (vals > 0).astype(int))


def test_quadratic_form_is_indefinite_symmetric():
    q = quadratic_form(7, 0)
    np.testing.assert_allclose(q, q.T, atol=1e-14)
    lam = np.linalg.eigvalsh(q)
    assert lam.min() < -0.1 and lam.max() > 0.1


def test_synth_rejects_degenerate_width():
    with pytest.raises(ValueError):
        synth_quadratic(1, 10, seed=0)


# -- per-class subsampling ---------------------------------------------------


def test_subsample_exact_counts_and_determinism():
    ds = vector_ds([20, 30, 25], seed=5)
    a = subsample_per_class(ds, 10, seed=1)
    b = subsample_per_class(ds, 10, seed=1)
    np.testing.assert_array_equal(a.class_counts, [10, 10, 10])
    np.testing.assert_array_equal(a.inputs, b.inputs)
    c = subsample_per_class(ds, 10, seed=2)
    assert not np.array_equal(a.inputs, c.inputs)


def test_subsample_draws_without_replacement():
    ds = vector_ds([8, 8], seed=6)
    sub = subsample_per_class(ds, 8, seed=0)
    # m == class size: same multiset of rows, any order
    orig = {row.tobytes() for row in ds.inputs}
    got = {row.tobytes() for row in sub.inputs}
    assert orig == got


def test_subsample_bounds():
    ds = vector_ds([5, 3])
    with pytest.raises(ValueError):
        subsample_per_class(ds, 4, seed=0)  # exceeds smallest class
    with pytest.raises(ValueError):
        subsample_per_class(ds, 0, seed=0)


# -- long-tail profile and resample ------------------------------------------


def test_profile_reference_values():
    prof = imbalance_profile(10, 5000, 100.0)
    assert prof.targets == (5000, 2997, 1797, 1077, 646, 387, 232, 139, 83, 50)


def test_profile_reaches_exact_ratio_on_round_powers():
    prof = imbalance_profile(10, 1000, 10.0)
    assert prof.targets[0] == 1000 and prof.targets[-1] == 100
    assert all(prof.targets[i] >= prof.targets[i + 1] for i in range(9))


def test_profile_if_one_is_flat():
    assert imbalance_profile(5, 123, 1.0).targets == (123,) * 5


def test_profile_single_class():
    assert imbalance_profile(1, 77, 50.0).targets == (77,)


def test_profile_rejects_ratio_below_one():
    with pytest.raises(ValueError):
        imbalance_profile(10, 100, 0.5)


@pytest.mark.parametrize("ratio", [10.0, 20.0, 50.0, 100.0, 200.0])
def test_longtail_realized_ratio_within_one_sample(ratio):
    ds = vector_ds([1000] * 10, d=3, seed=7)
    lt = longtail_resample(ds, ratio, seed=0)
    counts = lt.class_counts
    assert counts.max() == 1000
    assert abs(counts.min() - 1000.0 / ratio) <= 1.0


def test_longtail_bit_deterministic():
    ds = vector_ds([200] * 6, seed=8)
    a = longtail_resample(ds, 20.0, seed=3)
    b = longtail_resample(ds, 20.0, seed=3)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_longtail_ranks_classes_by_size():
    # class 1 is largest so it must keep its full count
    ds = vector_ds([50, 400, 130], seed=9)
    lt = longtail_resample(ds, 10.0, seed=0)
    counts = lt.class_counts
    assert counts[1] == 400
    assert counts.min() == 40
    np.testing.assert_array_equal(np.sort(counts)[::-1], imbalance_profile(3, 400, 10.0).targets)


def test_longtail_rejects_infeasible_targets():
    ds = vector_ds([500, 10], seed=10)
    # second-ranked class must shrink to 50 but only has 10
    with pytest.raises(ValueError, match="profile needs"):
        longtail_resample(ds, 10.0, seed=0)


def test_longtail_if_one_keeps_every_sample():
    ds = vector_ds([30, 30], seed=11)
    lt = longtail_resample(ds, 1.0, seed=0)
    assert {r.tobytes() for r in lt.inputs} == {r.tobytes() for r in ds.inputs}
