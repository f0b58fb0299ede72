import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import intensities_scalar
from tctbundle.bundle_model import (
    CANONICAL_ROWS,
    BundleMeasurement,
    SystemMatrix,
    TcmDoseModel,
    canonical_system_matrix,
    log_transform,
    predict_intensities,
    sample_bundle,
    sample_counts,
    sample_n0_tcm,
)

xs = st.lists(st.floats(0, 12), min_size=3, max_size=3).map(np.array)


def test_canonical_rows(canon):
    expected = [[1, 0, 0], [1, 1, 0], [1, 1, 1], [0, 1, 1], [0, 0, 1]]
    assert canon.entries.tolist() == expected
    assert canon.rank == 3
    assert canon.is_canonical()


def test_spectrum(canon):
    s = canon.singular_values()
    np.testing.assert_allclose(s, [2.524, 1.41421, 0.793], atol=1e-3)
    assert canon.condition_number() == pytest.approx(3.186, abs=1e-3)


def test_system_matrix_validation():
    with pytest.raises(ValueError):
        SystemMatrix(np.array([[1, 0], [1, 0]]))  # empty column
    with pytest.raises(ValueError):
        SystemMatrix(np.array([[1, 2]]))
    assert not SystemMatrix(np.array([[1, 1], [1, 1]])).full_column_rank


def test_predict_trivial(canon):
    np.testing.assert_array_equal(predict_intensities(canon, np.zeros(3), 1.0), [1, 2, 3, 2, 1])
    np.testing.assert_allclose(
        predict_intensities(canon, np.full(3, np.log(2)), 100.0), [50, 100, 150, 100, 50]
    )


def test_predict_against_scalar_oracle(canon):
    got = predict_intensities(canon, np.array([1.0, 2.0, 3.0]), 1e5)
    np.testing.assert_allclose(got, intensities_scalar([1, 2, 3], 1e5), rtol=1e-14)
    # frozen from the scalar oracle
    np.testing.assert_allclose(
        got, [36787.94411714423, 50321.472440805504, 55300.1792775919,
              18512.235160447664, 4978.706836786395], rtol=1e-13)


def test_predict_dimension_mismatch(canon):
    with pytest.raises(ValueError):
        predict_intensities(canon, np.zeros(4), 1.0)


def test_predict_batch_matches_single(canon, rng):
    x = rng.uniform(0, 9, (20, 3))
    n0 = rng.uniform(1e4, 3e5, 20)
    batch = predict_intensities(canon, x, n0)
    for i in range(20):
        np.testing.assert_allclose(batch[i], predict_intensities(canon, x[i], n0[i]))


@given(xs, st.integers(0, 2), st.floats(0.01, 3))
def test_predict_monotone(x, k, dx):
    a = CANONICAL_ROWS
    before = predict_intensities(a, x, 1e5)
    x2 = x.copy()
    x2[k] += dx
    after = predict_intensities(a, x2, 1e5)
    active = a[:, k] == 1
    assert np.all(after[active] < before[active])
    np.testing.assert_array_equal(after[~active], before[~active])


@given(xs, st.floats(1.0, 1e6))
def test_centrosymmetry(x, n0):
    a = predict_intensities(CANONICAL_ROWS, x, n0)
    b = predict_intensities(CANONICAL_ROWS, x[::-1], n0)
    np.testing.assert_allclose(a, b[::-1], rtol=1e-14)


def test_sample_inactive_entries_zero(canon):
    _, y = sample_bundle(canon, np.array([0.5, 1.0, 2.0]), 1e4, 3)
    assert np.all(y[canon.entries == 0] == 0)


def test_sample_row_sums(canon):
    m, y = sample_bundle(canon, np.array([1.0, 2.0, 3.0]), 1e5, 9)
    np.testing.assert_array_equal(m.counts, y.sum(axis=1))


def test_sample_reproducible(canon):
    a = sample_bundle(canon, np.array([1.0, 2.0, 3.0]), 1e5, 42)
    b = sample_bundle(canon, np.array([1.0, 2.0, 3.0]), 1e5, 42)
    np.testing.assert_array_equal(a[1], b[1])
    c = sample_bundle(canon, np.array([1.0, 2.0, 3.0]), 1e5, 43)
    assert not np.array_equal(a[1], c[1])


def test_sample_mean_and_dispersion(canon):
    rng = np.random.default_rng(0)
    c = sample_counts(canon, np.zeros((1_000_000, 3)), np.full(1_000_000, 1000.0), rng)
    # row 3 mean 3000; standard error sqrt(3000/1e6) = 0.055
    assert abs(c[:, 2].mean() - 3000.0) < 3 * np.sqrt(3000 / 1e6)
    assert c[:, 0].var() == pytest.approx(c[:, 0].mean(), rel=0.01)


def test_row_counts_are_poisson_chi_square(canon):
    rng = np.random.default_rng(1)
    x = np.array([2.0, 1.0, 3.0])
    lam = predict_intensities(canon, x, 20.0)[2]
    c = sample_counts(canon, np.tile(x, (200_000, 1)), np.full(200_000, 20.0), rng)[:, 2]
    ks = np.arange(0, 25)
    obs = np.array([np.sum(c == k) for k in ks] + [np.sum(c >= 25)])
    p = np.append(stats.poisson.pmf(ks, lam), stats.poisson.sf(24, lam))
    keep = p * len(c) > 5
    chi2 = stats.chisquare(obs[keep], p[keep] / p[keep].sum() * obs[keep].sum())
    assert chi2.pvalue > 1e-3


def test_tcm_bounds():
    m = TcmDoseModel()
    for seed in range(50):
        assert 75_000 <= sample_n0_tcm(m, 0.0, seed) <= 300_000
        assert sample_n0_tcm(m, 9.2, seed) == 300_000
    assert sample_n0_tcm(m, 3.0, 5) == sample_n0_tcm(m, 3.0, 5)


def test_tcm_validation():
    with pytest.raises(ValueError):
        TcmDoseModel(k_min=10, k_max=5)
    with pytest.raises(ValueError):
        sample_n0_tcm(TcmDoseModel(), -1.0, 0)


def test_tcm_log_uniform():
    m = TcmDoseModel(n0_min=1.0, n0_max=1e9)
    k = m.sample(np.zeros(200_000), np.random.default_rng(3))
    u = (np.log(k) - np.log(1397)) / (np.log(5586) - np.log(1397))
    assert stats.kstest(u, "uniform").statistic < 0.005


def test_log_transform():
    y = log_transform(np.array([1e5, 0, 5, 3, 1]), 1e5)
    assert y[0] == 0.0
    assert y[1] == pytest.approx(np.log(1e5))
    # bright path dominates a mixed row in the noiseless limit
    n = predict_intensities(CANONICAL_ROWS, np.array([5.0, 0.0, 5.0]), 1e5)
    assert log_transform(n, 1e5)[1] == pytest.approx(-0.006715348489117967, rel=1e-12)


def test_measurement_validation():
    with pytest.raises(ValueError):
        BundleMeasurement(np.array([1, 2, 3, 4, 5]), 0.0)
    with pytest.raises(ValueError):
        BundleMeasurement(np.array([1.5, 2, 3, 4, 5]), 10.0)
    m = BundleMeasurement(np.array([1, 2, 3, 4, 5]), 10.0)
    np.testing.assert_array_equal(m.reversed().counts, [5, 4, 3, 2, 1])
