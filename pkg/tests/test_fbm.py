import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fwis.errors import ContractError, GridError
from fwis.fbm import (HurstParams, TimeGrid, fbm_cov, rl_cov, rl_l2_distance, rl_variance, sample_fbm_matrix,
                      sample_rl_matrix)
from fwis.stats import covariance_se, mean_se


def test_hurst_validation():
    with pytest.raises(ContractError):
        HurstParams(1.0)
    with pytest.raises(ContractError):
        HurstParams(0.5, -0.1)
    assert HurstParams(0.7).alpha == 0.7 - 0.5


def test_grid_validation():
    for bad in ([0.0, 1.0, 1.0], [0.1, 1.0], [0.0, 2.0, 1.0]):
        with pytest.raises(GridError):
            TimeGrid(np.array(bad))
    g = TimeGrid.uniform(1.0, 8)
    assert g.uniform_step and g.dt == 0.125 and g.horizon == 1.0
    assert g.index_of(0.5) == 4


def test_fbm_cov_examples():
    assert fbm_cov(HurstParams(0.5), 2.0, 3.0) == pytest.approx(2.0, abs=1e-15)
    for H in (0.2, 0.5, 0.9):
        assert fbm_cov(HurstParams(H), 1.0, 1.0) == 1.0
    # oracle: 2^0.4 at 30 digits
    assert fbm_cov(HurstParams(0.7), 1.0, 2.0) == pytest.approx(float(mpmath.mpf(2) ** mpmath.mpf("0.4")), rel=1e-14)
    with pytest.raises(ContractError):
        fbm_cov(HurstParams(0.7), -1.0, 1.0)


@given(H=st.floats(0.05, 0.95), t=st.floats(0, 5), s=st.floats(0, 5))
def test_fbm_cov_symmetric_and_diagonal(H, t, s):
    h = HurstParams(H)
    assert fbm_cov(h, t, s) == fbm_cov(h, s, t)
    assert fbm_cov(h, t, t) == pytest.approx(t ** (2 * H), rel=1e-14, abs=1e-300)


def test_rl_cov_examples():
    assert rl_cov(HurstParams(0.5, 0.3), 2.0, 3.0) == pytest.approx(2.0, rel=1e-14)
    assert rl_cov(HurstParams(0.7, 0.1), 1.0, 1.0) == pytest.approx(1.1**1.4 - 0.1**1.4, abs=1e-8)
    # the printed 6-digit value 1.102936 is within one unit of its last digit of the exact 1.10293541...
    assert rl_cov(HurstParams(0.7, 0.1), 1.0, 1.0) == pytest.approx(1.102936, abs=1e-6)
    assert rl_cov(HurstParams(0.3, 0.2), 0.0, 2.0) == 0.0


@pytest.mark.parametrize("H,eps,t", [(H, e, t) for H in (0.2, 0.4, 0.6, 0.8, 0.95)
                                     for e, t in ((0.0, 0.7), (0.05, 1.0), (0.2, 0.3), (0.5, 2.0))])
def test_rl_cov_diagonal_lattice(H, eps, t):
    h = HurstParams(H, eps)
    assert abs(rl_cov(h, t, t) - rl_variance(h, t)) <= 1e-8


def test_rl_cov_off_diagonal_against_mpmath():
    H, eps, t, s = 0.3, 0.1, 1.0, 0.6
    a = H - 0.5
    ref = 2 * H * mpmath.quad(lambda u: (t - u + eps) ** a * (s - u + eps) ** a, [0, s])
    assert rl_cov(HurstParams(H, eps), t, s) == pytest.approx(float(ref), rel=1e-9)


def test_l2_distance_decreases():
    d = [rl_l2_distance(HurstParams(0.7, e), 1.0) for e in (0.4, 0.2, 0.1, 0.05)]
    assert all(b < a for a, b in zip(d, d[1:]))
    assert rl_l2_distance(HurstParams(0.5, 0.3), 1.0) == pytest.approx(0.0, abs=1e-12)


def test_unit_variance_at_one(rng):
    B = sample_fbm_matrix(HurstParams(0.3), TimeGrid(np.array([0.0, 1.0])), 1, 1, None, rng, 100_000)
    x = B.values[:, 1, 0, 0]
    m, se = mean_se((x - x.mean()) ** 2)
    assert abs(m - 1.0) <= 3 * se


@pytest.mark.parametrize("H", [0.5, 0.7])
def test_cov_b1_b2(rng, H):
    B = sample_fbm_matrix(HurstParams(H), TimeGrid(np.array([0.0, 1.0, 2.0])), 1, 1, None, rng, 100_000)
    c, se = covariance_se(B.values[:, 1, 0, 0], B.values[:, 2, 0, 0])
    assert abs(c - fbm_cov(HurstParams(H), 1.0, 2.0)) <= 3 * se


def test_four_point_grid_covariance(rng):
    h = HurstParams(0.7)
    grid = TimeGrid(np.array([0.0, 0.25, 0.5, 1.0, 1.5]))
    B = sample_fbm_matrix(h, grid, 2, 1, None, rng, 100_000).values[:, 1:, 0, 0]
    for i in range(4):
        for j in range(i + 1):
            c, se = covariance_se(B[:, i], B[:, j])
            assert abs(c - fbm_cov(h, grid.times[i + 1], grid.times[j + 1])) <= 4 * se


def test_paths_start_at_c_and_reproduce():
    C = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    grid = TimeGrid.uniform(1.0, 4)
    a = sample_fbm_matrix(HurstParams(0.6), grid, 3, 2, C, np.random.default_rng(3), 5)
    b = sample_fbm_matrix(HurstParams(0.6), grid, 3, 2, C, np.random.default_rng(3), 5)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values[:, 0], np.broadcast_to(C, (5, 3, 2)))


def test_rl_exact_variance(rng):
    h = HurstParams(0.7, 0.1)
    B = sample_rl_matrix(h, TimeGrid(np.array([0.0, 1.0])), 1, 1, None, rng, "exact", 100_000)
    x = B.values[:, 1, 0, 0]
    m, se = mean_se(x * x)
    assert abs(m - 1.102936) <= 3 * se


def test_rl_schemes_coincide_at_half():
    h = HurstParams(0.5, 0.2)
    grid = TimeGrid.uniform(1.0, 16)
    a = sample_rl_matrix(h, grid, 2, 2, None, np.random.default_rng(9), "exact", 10)
    b = sample_rl_matrix(h, grid, 2, 2, None, np.random.default_rng(9), "incremental", 10)
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_rl_incremental_terminal_variance():
    h = HurstParams(0.7, 0.1)
    grid = TimeGrid.with_step(1.0, 2**-10)
    inc = sample_rl_matrix(h, grid, 1, 1, None, np.random.default_rng(4), "incremental", 20_000)
    exact = rl_variance(h, 1.0)
    v_inc = np.mean(inc.values[:, -1, 0, 0] ** 2)
    assert abs(v_inc / exact - 1) < 0.02 + 3 * math.sqrt(2 / 20_000)


def test_incremental_needs_eps():
    with pytest.raises(ContractError):
        sample_rl_matrix(HurstParams(0.7), TimeGrid.uniform(1.0, 4), 1, 1, None, np.random.default_rng(), "incremental")
