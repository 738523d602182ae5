import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import psd_from
from fwis.errors import ContractError
from fwis.fbm import HurstParams, TimeGrid
from fwis.spde import GeneralVSpec, SixParamSpec, eps_fwis_general
from fwis.stats import covariance_se, mean_se
from fwis.volmodel import (ForwardContract, VolModelSpec, cir_mean, corr_leverage, corr_returns, corr_vol,
                           correlation_checks, expected_variance, heston_degenerate, mean_volatility,
                           price_variance_forward, simulate_assets)

EXACT_C = mpmath.mpf("1.1") ** mpmath.mpf("1.4") - mpmath.mpf("0.1") ** mpmath.mpf("1.4")


def scalar(v=2.0, S0=0.04, H=0.7, eps=0.1):
    return GeneralVSpec(HurstParams(H, eps), v, [[S0]])


def test_spec_contracts():
    vol = GeneralVSpec(HurstParams(0.7, 0.1), 3.5, np.eye(2))
    with pytest.raises(ContractError):
        VolModelSpec([0, 0], [0.8, 0.8], [1, 1], vol)          # rho'rho > 1
    with pytest.raises(ContractError):
        VolModelSpec([0, 0], [1.2, 0.0], [1, 1], vol)
    with pytest.raises(ContractError):
        VolModelSpec([0, 0], [0, 0], [1, -1], vol)
    with pytest.raises(ContractError):
        VolModelSpec([0], [0], [1], vol)
    z = np.zeros((2, 2))
    frozen = SixParamSpec(HurstParams(0.7, 0.1), np.eye(2), z, z, z)
    with pytest.raises(ContractError):
        VolModelSpec([0, 0], [0, 0], [1, 1], frozen)
    assert VolModelSpec([0, 0], [0, 0], [1, 1], frozen, require_invertible_q=False).p == 2
    with pytest.raises(ContractError):
        ForwardContract(0.0, 1.0, scalar())
    with pytest.raises(ContractError):
        ForwardContract(1.0, 1.0, vol)


def test_correlation_examples():
    assert corr_returns(np.diag([2.0, 3.0]), 0, 1) == 0.0
    assert corr_returns([[1, 0.5], [0.5, 1]], 0, 1) == pytest.approx(0.5)
    assert corr_returns([[4, 3], [3, 9]], 0, 1) == pytest.approx(0.5)
    assert corr_leverage(np.eye(2), [0.3, -0.4], 1) == pytest.approx(-0.4)
    assert corr_leverage(np.eye(2), [0, 0], 0) == 0.0
    assert corr_leverage([[2, 0], [0, 1]], [0.6, 0.8], 0) == pytest.approx(0.6)
    assert corr_vol(np.diag([1.0, 2.0]), [[1, 0.5], [0.5, 1]], 0, 1) == 0.0
    assert corr_vol([[1, 1], [0, 1]], np.eye(2), 0, 1) == 0.0
    # Q = I has diagonal Q'Q, so the vol-vol correlation vanishes even for correlated u
    assert corr_vol(np.eye(2), [[1, 0.5], [0.5, 1]], 0, 1) == 0.0
    # Q'Q = [[1, 1], [1, 2]]: 1 * 0.5 / sqrt(1 * 2 * 1 * 1)
    assert corr_vol([[1, 1], [0, 1]], [[1, 0.5], [0.5, 1]], 0, 1) == pytest.approx(0.5 / math.sqrt(2))
    with pytest.raises(ContractError):
        corr_returns(np.zeros((2, 2)), 0, 1)
    with pytest.raises(ContractError):
        corr_leverage([[0, 0], [0, 1]], [0.5, 0.5], 0)


@given(seed=st.integers(0, 2**32 - 1), r1=st.floats(-1, 1), r2=st.floats(-1, 1))
def test_correlations_are_bounded(seed, r1, r2):
    u = psd_from(seed, 3, shift=1e-3)
    Q = np.random.default_rng(seed).standard_normal((3, 3))
    rho = np.array([r1, r2, 0.0])
    rho = rho / max(1.0, np.linalg.norm(rho))
    for i, j in ((0, 1), (1, 2), (0, 2)):
        assert abs(corr_returns(u, i, j)) <= 1 + 1e-12
        assert abs(corr_vol(Q, u, i, j)) <= 1 + 1e-12
    for i in range(3):
        assert abs(corr_leverage(Q, rho, i)) <= 1 + 1e-12


def test_heston_examples():
    assert heston_degenerate(2.0, 0.3, -1.0) == pytest.approx((2.0, 0.09, 0.6))
    assert cir_mean(2.0, 0.09, 0.09, 3.0) == pytest.approx(0.09, rel=1e-15)
    ref = float(mpmath.mpf("0.09") - mpmath.mpf("0.05") * mpmath.exp(-2))
    assert cir_mean(2.0, 0.09, 0.04, 1.0) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(0.083233, abs=1e-6)
    with pytest.raises(ContractError):
        heston_degenerate(2.0, 0.3, 0.5)


def test_cir_mean_by_simulation():
    v, Q, K, u0, t = 2.0, 0.3, -1.0, 0.04, 0.5
    kappa, theta, _ = heston_degenerate(v, Q, K)
    ref = cir_mean(kappa, theta, u0, t)
    # t + eps <= 1 keeps the characteristic where f = g = 1
    vol = SixParamSpec.from_index(HurstParams(0.5, 0.1), v, [[u0]], [[Q]], [[K]])
    grid = TimeGrid.with_step(t, 2**-8)
    u = eps_fwis_general(vol, grid, np.random.default_rng(11), 40_000, obs_times=[t]).values[:, -1, 0, 0]
    m, se = mean_se(u)
    assert abs(m - ref) <= 3 * se + grid.dt * (1 + ref)


def test_expected_variance_examples():
    assert expected_variance(scalar(H=0.5), 0.7) == pytest.approx(2 * 0.7 + 0.04, rel=1e-14)
    assert expected_variance(scalar(), 0.0) == pytest.approx(0.04, rel=1e-14)
    ref = float(2 * EXACT_C + mpmath.mpf("0.04"))
    assert expected_variance(scalar(), 1.0) == pytest.approx(ref, rel=1e-14)
    # printed 2.245872 is one unit in the last digit from the exact 2.2458708...
    assert ref == pytest.approx(2.245872, abs=2e-6)


def test_forward_examples():
    spec = scalar()
    V0, P0 = price_variance_forward(ForwardContract(1.0, 0.0, spec), r=0.05)
    ref = float(mpmath.exp(-0.05) * (2 * EXACT_C + mpmath.mpf("0.04")))
    assert V0 == pytest.approx(ref, rel=1e-14) and ref == pytest.approx(2.136338, abs=1e-6)
    assert P0 == pytest.approx(expected_variance(spec, 1.0))
    V0, P0 = price_variance_forward(ForwardContract(0.8, 1.0, spec), r=0.0)
    assert V0 == pytest.approx(expected_variance(spec, 0.8) - 1.0, rel=1e-14)
    V_fair, _ = price_variance_forward(ForwardContract(0.8, P0, spec), r=0.03)
    assert V_fair == 0.0


@given(i1=st.floats(-5, 5), i2=st.floats(-5, 5), r=st.floats(0, 0.2), T=st.floats(0.05, 0.9))
def test_forward_parity(i1, i2, r, T):
    spec = scalar()
    a, _ = price_variance_forward(ForwardContract(T, i1, spec), r=r)
    b, _ = price_variance_forward(ForwardContract(T, i2, spec), r=r)
    assert a - b == pytest.approx(math.exp(-r * T) * (i2 - i1), abs=1e-12)


def test_forward_against_simulation():
    spec = scalar(v=3.5)
    T, r, iota = 0.9, 0.05, 1.0
    V0, _ = price_variance_forward(ForwardContract(T, iota, spec), r=r)
    grid = TimeGrid.uniform(T, 256)
    u = eps_fwis_general(spec, grid, np.random.default_rng(12), 40_000, obs_times=[T]).values[:, -1, 0, 0]
    m, se = mean_se(math.exp(-r * T) * (u - iota))
    assert abs(m - V0) <= 3 * se + grid.dt * (1 + abs(V0))


def test_frozen_volatility_gives_brownian_returns():
    z = np.zeros((2, 2))
    S0 = np.array([[0.04, 0.01], [0.01, 0.09]])
    vol = SixParamSpec(HurstParams(0.7, 0.1), S0, z, z, z)
    spec = VolModelSpec([0.1, 0.0], [0.0, 0.0], [1.0, 2.0], vol, require_invertible_q=False)
    ap = simulate_assets(spec, TimeGrid.uniform(0.5, 20), np.random.default_rng(13), 50_000)
    assert np.all(ap.u.values == S0)
    Y = ap.Y.values[:, -1, :, 0] - ap.Y.values[:, 0, :, 0]
    for a, b in ((0, 0), (0, 1), (1, 1)):
        c, se = covariance_se(Y[:, a], Y[:, b])
        assert abs(c - 0.5 * S0[a, b]) <= 3 * se
    m, se = mean_se(Y[:, 0])
    assert abs(m - 0.5 * (0.1 - 0.02)) <= 3 * se
    assert np.allclose(ap.prices()[:, 0], [1.0, 2.0])


def test_simulation_is_reproducible():
    vol = SixParamSpec.from_index(HurstParams(0.7, 0.1), 3.5, np.eye(2) * 0.04, [[0.3, 0.1], [0, 0.25]],
                                  np.zeros((2, 2)))
    spec = VolModelSpec([0, 0], [-0.5, -0.3], [1, 1], vol)
    grid = TimeGrid.uniform(0.25, 16)
    a = simulate_assets(spec, grid, np.random.default_rng(3), 30)
    b = simulate_assets(spec, grid, np.random.default_rng(3), 30)
    assert np.array_equal(a.Y.values, b.Y.values) and np.array_equal(a.u.values, b.u.values)


def test_correlation_estimators():
    h = HurstParams(0.7, 0.1)
    Q = np.array([[0.3, 0.1], [0.0, 0.25]])
    vol = SixParamSpec.from_index(h, 3.5, np.array([[0.04, 0.01], [0.01, 0.05]]), Q, np.zeros((2, 2)))
    spec = VolModelSpec([0, 0], [-0.5, -0.3], [1, 1], vol)
    dt = 2**-7
    k = 32
    ap = simulate_assets(spec, TimeGrid.uniform(dt * (k + 1), k + 1), np.random.default_rng(21), 40_000,
                         record_innovations=[k])
    inn = ap.innovations[k]
    assert np.array_equal(inn.u, ap.u.values[:, k])
    assert np.allclose(mean_volatility(vol, 0.0), vol.Sigma0)
    checks = {c.name: c for c in correlation_checks(spec, inn)}
    assert set(checks) >= {"return_corr", "vol_corr", "leverage[0]", "leverage[1]"}
    for c in checks.values():
        assert c.within(4.0), c
    assert checks["leverage[0]"].reference == pytest.approx(-0.5)
