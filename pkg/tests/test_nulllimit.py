import numpy as np
import pytest
from scipy import stats

from hdmosum.exceptions import ConfigError, DataValidationError
from hdmosum.mosum import jump_profile, stat_global
from hdmosum.neighborhoods import from_intervals
from hdmosum.nulllimit import (
    BLOCK_REPS,
    ThresholdResult,
    cov_dependent,
    cov_global,
    cov_twoway,
    dependent_kernel,
    g,
    kernel_printed_parts,
    sample_max,
    threshold,
)


def test_g_values():
    assert g(0.0) == 8.0
    assert g(1.0) == 2.0
    assert 18 - 24 + 8 == 2.0  # left branch at 1
    assert g(2.0) == 0.0
    assert g(0.5) == pytest.approx(0.5)
    assert g(1.5) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        g(-0.1)


def test_printed_kernel_continuity():
    rho = np.linspace(-1, 1, 201)
    left = (15 - 20 + 8) * rho**2 + (3 - 4)
    right = (3 - 12 + 12) * rho**2 - 1
    np.testing.assert_allclose(left, right, atol=1e-12)
    np.testing.assert_allclose(dependent_kernel(1.0, rho, "printed"), right, atol=1e-12)
    assert dependent_kernel(1e-12, 1.0, "printed") == pytest.approx(8.0, abs=1e-10)
    z = np.linspace(0, 3, 3001)
    A, B = kernel_printed_parts(z)
    np.testing.assert_allclose(A + B, g(z), atol=1e-12)


def test_global_structure():
    n, bn, p = 100, 20, 50
    cov = cov_global(n, bn, p)
    D = cov.dense()
    np.testing.assert_allclose(np.diag(D), 8 * p / bn**2)
    i, j = np.indices(D.shape)
    assert not D[np.abs(i - j) >= 2 * bn].any()
    np.testing.assert_allclose(D, D.T)
    assert np.linalg.eigvalsh(D).min() > -1e-10


def test_twoway_structure():
    n, bn = 60, 10
    nb = from_intervals(6, [(1, 2), (2, 3), (5, 6)])
    cov = cov_twoway(n, bn, nb)
    D = cov.dense().reshape(3, n - 2 * bn, 3, n - 2 * bn)
    assert not D[0, :, 2, :].any()
    assert D[0, 0, 1, 0] == pytest.approx(0.5 * 8 / bn**2)
    assert D[0, 0, 0, 0] == pytest.approx(8 / bn**2)


def test_twoway_full_is_scaled_global():
    n, bn, p = 50, 8, 7
    a = cov_twoway(n, bn, from_intervals(p, [(1, p)])).dense()
    np.testing.assert_allclose(a, cov_global(n, bn, p).dense() / p, atol=1e-15)


def test_dependent_identity_matches_twoway():
    n, bn = 50, 8
    nb = from_intervals(6, [(1, 3), (2, 5), (4, 6)])
    a = cov_dependent(n, bn, nb, np.eye(6)).dense()
    np.testing.assert_allclose(a, cov_twoway(n, bn, nb).dense(), atol=1e-15)
    b = cov_dependent(n, bn, None, np.eye(6)).dense()
    np.testing.assert_allclose(b, cov_global(n, bn, 6).dense(), atol=1e-15)


def test_dependent_kernel_by_simulation():
    # Gaussian noise with tridiagonal correlation: Cov of sum_j V^2 follows rho^2 g
    n, bn, p, N = 40, 8, 6, 20_000
    th = 0.8
    rng = np.random.default_rng(11)
    R = np.eye(p)
    r = th / (1 + th * th)
    R[np.arange(p - 1), np.arange(1, p)] = R[np.arange(1, p), np.arange(p - 1)] = r
    L = np.linalg.cholesky(R)
    X = np.empty((N, n - 2 * bn))
    for k in range(N):
        E = rng.standard_normal((n, p)) @ L.T
        V = jump_profile(E, bn).V
        X[k] = (V * V).sum(axis=1) - 2 * p / bn
    emp = np.cov(X, rowvar=False)
    theo = cov_dependent(n, bn, None, R).dense()
    se = (X[:, :, None] * X[:, None, :]).std(axis=0) / np.sqrt(N)
    assert np.abs(emp - theo).max() / se.max() < 3


def test_dependent_validation():
    with pytest.raises(DataValidationError):
        cov_dependent(30, 5, None, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DataValidationError):
        cov_dependent(30, 5, None, np.array([[1.0, 0.1], [0.2, 1.0]]))
    with pytest.raises(ConfigError):
        cov_dependent(30, 5, None, np.eye(2), kernel="nope")


def test_sampling_one_by_one():
    cov = cov_global(41, 20, 50)  # a single admissible centre
    assert cov.dim == 1
    var = cov.dense()[0, 0]
    x = sample_max(cov, 100_000, seed=3)
    se = var * np.sqrt(2 / x.size)
    assert abs(x.var() - var) < 3 * se


def test_sampling_zero_cov():
    cov = cov_dependent(30, 5, None, np.eye(3), kernel="printed")
    cov.terms = [(0 * t[0], 0 * t[1]) for t in cov.terms]
    cov._cache.clear()
    assert not sample_max(cov, 10, seed=0).any()


def test_sampling_thread_independent():
    cov = cov_twoway(80, 10, from_intervals(20, [(1, 10), (6, 15), (11, 20)]))
    reps = 3 * BLOCK_REPS + 5
    a = sample_max(cov, reps, seed=9, threads=1)
    b = sample_max(cov, reps, seed=9, threads=3)
    np.testing.assert_array_equal(a, b)
    assert a.size == reps


def test_sampling_matches_null_statistic():
    n, bn, p = 100, 20, 50
    rng = np.random.default_rng(0)
    q = np.array([stat_global(jump_profile(rng.standard_normal((n, p)), bn)).max_value
                  for _ in range(1000)])
    z = sample_max(cov_global(n, bn, p), 1000, seed=0)
    crit = np.sqrt(-np.log(0.01 / 2) / 2) * np.sqrt(2 / 1000)
    assert stats.ks_2samp(q, z).statistic < crit


def test_threshold_rules():
    assert threshold(np.arange(1, 101), 0.05).omega == 95.0
    assert threshold(np.full(10, 2.5), 0.1).omega == 2.5
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ConfigError):
            threshold(np.arange(10), bad)
    res = threshold(np.arange(1, 101), 0.05, seed=4)
    back = ThresholdResult.from_dict(res.to_dict())
    assert back.omega == res.omega and back.seed == 4
