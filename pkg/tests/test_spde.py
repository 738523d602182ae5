import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fwis.errors import ContractError
from fwis.fbm import HurstParams, TimeGrid
from fwis.spde import (GeneralVSpec, SixParamSpec, blend_coeffs, blend_f, blend_g, characteristic_scale,
                       eps_fwis_general, euler_laplace, general_v_laplace, increment_decomposition_report,
                       knot_continuity, laplace_paths, riccati_solution, riccati_transform,
                       simulate_characteristic)
from fwis.stats import mean_se
from fwis.wishart import wishart_laplace

HE = [(H, e) for H in (0.3, 0.5, 0.7) for e in (0.05, 0.1, 0.3)]


def mp_blend(H, eps):
    """Independent oracle: the raw (unscaled) power systems solved at 60 digits."""
    with mpmath.workdps(60):
        H, eps = mpmath.mpf(H), mpmath.mpf(eps)
        alpha, root = H - mpmath.mpf(1) / 2, mpmath.sqrt(2 * H)
        tgt = [root * mpmath.ff(alpha, k) for k in range(5)]
        A = mpmath.matrix(5, 5)
        Bm = mpmath.matrix(5, 5)
        ra, rb = mpmath.matrix(5, 1), mpmath.matrix(5, 1)
        for k in range(5):
            ra[k] = tgt[k] * eps ** (alpha - k)
            rb[k] = tgt[k]
            for i in range(5):
                m = i + 5
                A[k, i] = mpmath.ff(m, k) * eps ** (m - k)
                Bm[k, i] = mpmath.ff(m, k) * (-1) ** (m - k)
        return ([float(x) for x in mpmath.lu_solve(A, ra)], [float(x) for x in mpmath.lu_solve(Bm, rb)])


@pytest.mark.parametrize("H,eps", HE)
def test_blend_coeffs_match_high_precision(H, eps):
    c = blend_coeffs(H, eps)
    a, b = mp_blend(H, eps)
    assert np.allclose(c.a, a, rtol=1e-9, atol=0)
    assert np.allclose(c.b, b, rtol=1e-9, atol=0)
    assert c.residuals().max() < 1e-9


@given(H=st.floats(0.05, 0.95), eps=st.floats(0.01, 0.6))
def test_blend_residuals_property(H, eps):
    assert blend_coeffs(H, eps).residuals().max() < 1e-9


@pytest.mark.parametrize("H,eps", HE)
def test_knots_are_c4(H, eps):
    reps = knot_continuity(blend_coeffs(H, eps))
    assert {r.knot for r in reps} >= {0.0, eps, 1.0, 2.0}
    assert max(r.rel_gap for r in reps) < 1e-5


def test_blend_examples():
    c = blend_coeffs(0.7, 0.1)
    exact = float(mpmath.sqrt(mpmath.mpf("1.4")) * mpmath.mpf("0.1") ** mpmath.mpf("0.2"))
    assert blend_g(0.1, c) == pytest.approx(exact, rel=1e-14)
    assert exact == pytest.approx(0.7465588, abs=1e-7)
    assert blend_g(-1.0, c) == 0.0 and blend_g(3.0, c) == 0.0
    for H in (0.3, 0.5, 0.7):
        assert blend_g(1.0, blend_coeffs(H, 0.1)) == pytest.approx(math.sqrt(2 * H), rel=1e-15)
    assert blend_f(0.5, c) == pytest.approx(blend_g(0.5, c) ** 2)


def test_blend_half_is_plateau():
    c = blend_coeffs(0.5, 0.2)
    x = np.linspace(0.2, 1.0, 17)
    assert np.allclose(blend_g(x, c), 1.0, rtol=0, atol=1e-15)
    assert np.all(np.diff(blend_g(np.linspace(0.0, 0.2, 50), c)) >= -1e-15)


def test_blend_contract():
    with pytest.raises(ContractError):
        blend_coeffs(0.7, 1.0)
    with pytest.raises(ContractError):
        blend_coeffs(0.7, 0.0)


def test_characteristic_scale_matches_variance():
    c = blend_coeffs(0.7, 0.1)
    assert characteristic_scale(c, 1.0, 0.9) == pytest.approx(1.0**1.4 - 0.1**1.4, rel=1e-10)


def test_spec_contracts():
    h = HurstParams(0.7, 0.1)
    with pytest.raises(ContractError):
        GeneralVSpec(h, 2.5, np.eye(2))
    with pytest.raises(ContractError):
        GeneralVSpec(HurstParams(0.7, 0.0), 3.5, np.eye(2))
    with pytest.raises(ContractError):
        SixParamSpec(h, np.eye(2), np.eye(2), np.eye(2), np.zeros((2, 2)))   # I - 3I not PSD
    s = SixParamSpec.from_index(h, 3.0, np.eye(2), np.eye(2), np.zeros((2, 2)))
    OO, Q, K = s.coefficients()
    assert np.allclose(OO, 3 * np.eye(2)) and Q is None and K is None


def test_x_invariance_at_half():
    spec = GeneralVSpec(HurstParams(0.5, 0.1), 3.0, np.eye(2))
    grid = TimeGrid.uniform(0.4, 64)
    # every characteristic stays inside [eps, 1], where f = g = 1
    fam = simulate_characteristic(spec, np.linspace(0.5, 1.0, 6), grid, np.random.default_rng(5), 50)
    ref = fam.trajectory(0)
    for m in range(1, 6):
        assert np.array_equal(fam.trajectory(m), ref)


def test_no_dynamics_is_constant():
    S0 = np.array([[1.0, 0.2], [0.2, 0.5]])
    z = np.zeros((2, 2))
    spec = SixParamSpec(HurstParams(0.7, 0.1), S0, z, z, z)
    fam = simulate_characteristic(spec, [0.5, 0.9], TimeGrid.uniform(0.4, 32), np.random.default_rng(0), 10)
    assert np.all(fam.values == S0)


def test_permutation_leaves_members_unchanged():
    spec = GeneralVSpec(HurstParams(0.7, 0.1), 3.5, np.eye(2))
    grid = TimeGrid.uniform(0.5, 32)
    x0 = [0.6, 0.8, 1.0, 1.3]
    perm = [2, 0, 3, 1]
    a = simulate_characteristic(spec, x0, grid, np.random.default_rng(9), 20)
    b = simulate_characteristic(spec, [x0[i] for i in perm], grid, np.random.default_rng(9), 20)
    for j, i in enumerate(perm):
        assert np.array_equal(b.trajectory(j), a.trajectory(i))


def test_scalar_drift_mean():
    v, S0, t = 3.5, 0.04, 0.9
    spec = GeneralVSpec(HurstParams(0.7, 0.1), v, [[S0]])
    grid = TimeGrid.uniform(t, 256)
    u = eps_fwis_general(spec, grid, np.random.default_rng(2), 40_000, obs_times=[t]).values[:, -1, 0, 0]
    m, se = mean_se(u)
    ref = v * characteristic_scale(blend_coeffs(0.7, 0.1), t + 0.1, t) + S0
    assert ref == pytest.approx(v * (1.0**1.4 - 0.1**1.4) + S0, rel=1e-10)
    assert abs(m - ref) <= 3 * se + grid.dt * (1 + ref)


def test_general_matches_integer_law_at_half():
    spec = GeneralVSpec(HurstParams(0.5, 0.1), 3.0, np.eye(2))
    Z, t = 0.5 * np.eye(2), 0.75
    grid = TimeGrid.with_step(t, 2**-7)
    u = eps_fwis_general(spec, grid, np.random.default_rng(3), 40_000, obs_times=[t]).values[:, -1]
    m, se = mean_se(np.exp(-np.einsum("ij,pji->p", Z, u)))
    ref = wishart_laplace(Z, t, 3, np.eye(2))
    assert abs(m - ref) <= 3 * se + abs(euler_laplace(spec, t, Z, grid) - ref)


def test_output_is_psd_path():
    spec = GeneralVSpec(HurstParams(0.7, 0.1), 3.5, np.eye(2))
    b = eps_fwis_general(spec, TimeGrid.uniform(0.9, 90), np.random.default_rng(4), 200,
                         obs_times=[0.3, 0.6, 0.9])
    assert b.values.shape == (200, 4, 2, 2)
    w = np.linalg.eigvalsh(b.values)
    assert np.all(w[..., 0] >= -1e-12 * np.trace(b.values, axis1=-2, axis2=-1))
    assert not b.info["stats"].flagged


def test_frequent_projection_is_flagged():
    spec = GeneralVSpec(HurstParams(0.3, 0.05), 3.0, 0.1 * np.eye(2))
    with pytest.warns(RuntimeWarning, match="projection rate"):
        b = eps_fwis_general(spec, TimeGrid.uniform(0.9, 90), np.random.default_rng(4), 200, obs_times=[0.9])
    assert b.info["stats"].flagged
    w = np.linalg.eigvalsh(b.values)
    assert np.all(w[..., 0] >= -1e-12 * np.trace(b.values, axis1=-2, axis2=-1))


def test_riccati_examples():
    spec = GeneralVSpec(HurstParams(0.5, 0.1), 3.0, [[0.3]])
    for t, z in [(0.5, 0.4), (0.9, 1.3)]:
        ref = (1 + 2 * t * z) ** -1.5 * math.exp(-z * 0.3 / (1 + 2 * t * z))
        assert riccati_transform([[z]], t, spec) == pytest.approx(ref, rel=1e-8)
    assert riccati_transform([[1e-14]], 0.5, spec) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("v", [3.0, 3.5, 5.0])
def test_riccati_matches_closed_form(v):
    S0 = np.array([[1.0, 0.3], [0.3, 0.6]])
    spec = GeneralVSpec(HurstParams(0.7, 0.1), v, S0)
    Z = np.array([[0.5, 0.1], [0.1, 0.4]])
    for t in (0.25, 0.9):
        got = riccati_transform(Z, t, spec)
        assert got == pytest.approx(general_v_laplace(Z, spec, t), rel=1e-6)


def test_riccati_b_scales_with_v():
    h, S0, Z = HurstParams(0.7, 0.1), np.eye(2), 0.5 * np.eye(2)
    b3 = riccati_solution(Z, 0.5, GeneralVSpec(h, 3.0, S0)).b
    b5 = riccati_solution(Z, 0.5, GeneralVSpec(h, 5.0, S0)).b
    assert b5 == pytest.approx(5.0 / 3.0 * b3, rel=1e-14)


def test_euler_chain_transform_converges():
    spec = GeneralVSpec(HurstParams(0.7, 0.1), 3.5, np.eye(2))
    Z = 0.5 * np.eye(2)
    ref = general_v_laplace(Z, spec, 0.9)
    gaps = [abs(euler_laplace(spec, 0.9, Z, TimeGrid.with_step(0.9, 0.9 / n)) - ref) for n in (64, 128, 256)]
    assert 1.6 < gaps[0] / gaps[1] < 2.4 and 1.6 < gaps[1] / gaps[2] < 2.4


def test_control_variate_is_unbiased():
    spec = GeneralVSpec(HurstParams(0.7, 0.1), 3.5, np.eye(2))
    Z, t = 0.5 * np.eye(2), 0.9
    grid = TimeGrid.with_step(t, t / 128)
    run = laplace_paths(spec, t, Z, grid, np.random.default_rng(7), 40_000)
    cv_mean, cv_se = mean_se(run.plain - run.controlled)
    assert abs(cv_mean) <= 3 * cv_se
    m, se = mean_se(run.plain)
    assert abs(m - euler_laplace(spec, t, Z, grid)) <= 3 * se
    assert mean_se(run.controlled)[1] < 0.2 * se


def test_increment_report():
    grid = TimeGrid.uniform(0.5, 50)
    half = increment_decomposition_report(GeneralVSpec(HurstParams(0.5, 0.1), 3.0, np.eye(2)), grid, 0.3, 0.1,
                                          np.random.default_rng(1), 200)
    assert half.vanishes
    rough = increment_decomposition_report(GeneralVSpec(HurstParams(0.7, 0.1), 3.0, np.eye(2)), grid, 0.3, 0.1,
                                           np.random.default_rng(1), 200)
    assert rough.positive_fraction > 0.99
    zero = increment_decomposition_report(GeneralVSpec(HurstParams(0.7, 0.1), 3.0, np.eye(2)), grid, 0.3, 0.0,
                                          np.random.default_rng(1), 20)
    assert zero.vanishes
