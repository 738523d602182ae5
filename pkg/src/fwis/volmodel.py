"""Multi-asset stochastic volatility driven by eps-fWIS.

Log-prices follow ``dY = (mu - diag(u)/2) dt + sqrt(u) dB`` with
``dB = dW rho + sqrt(1 - rho'rho) dH``, where ``W`` is the same Brownian
matrix that drives the volatility ``u_t(eps)``.

Reading ``u_t(eps)`` along a path needs one characteristic per grid time
(``x0_k = t_k + eps``). All of them are stepped with the shared noise and
member ``k`` is retired once it has been read at step ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .fbm import PathBatch, TimeGrid
from .spde import GeneralVSpec, SixParamSpec, _march, blend_coeffs, blend_g
from .stats import mean_se

# symbol -> type housing it, collected into the docs index
SYMBOLS = {"μ": "VolModelSpec", "ρ": "VolModelSpec", "r": "VolModelSpec", "T": "ForwardContract", "ι": "ForwardContract", "u": "AssetPaths"}


def _as_vec(x, p, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (p,):
        raise ContractError(f"{name} must have shape ({p},), got {x.shape}")
    return x


def loading_matrix(vol) -> np.ndarray:
    """The ``Q`` of a volatility spec (identity for the real-index family)."""
    return np.eye(vol.p) if isinstance(vol, GeneralVSpec) else vol.Q


@dataclass(frozen=True, eq=False)
class VolModelSpec:
    """Asset block of the model: drift, correlation loadings, initial prices, rate.

    ``require_invertible_q`` can be switched off for degenerate sanity runs
    (e.g. frozen volatility with ``Q = 0``).
    """

    mu: np.ndarray
    rho: np.ndarray
    S0: np.ndarray
    vol: GeneralVSpec | SixParamSpec
    r: float = 0.0
    require_invertible_q: bool = True

    def __post_init__(self):
        p = self.vol.p
        object.__setattr__(self, "mu", _as_vec(self.mu, p, "mu"))
        object.__setattr__(self, "rho", _as_vec(self.rho, p, "rho"))
        object.__setattr__(self, "S0", _as_vec(self.S0, p, "S0"))
        if np.any(np.abs(self.rho) > 1):
            raise ContractError("each rho_i must lie in [-1, 1]")
        if self.rho @ self.rho > 1.0:
            raise ContractError(f"rho'rho = {self.rho @ self.rho:.6g} exceeds 1")
        if np.any(self.S0 <= 0):
            raise ContractError("initial prices must be positive")
        if self.require_invertible_q and abs(np.linalg.det(loading_matrix(self.vol))) < 1e-300:
            raise ContractError("Q must be invertible")

    @property
    def p(self) -> int:
        return self.vol.p


@dataclass(frozen=True)
class ForwardContract:
    """Variance forward paying ``u_T(eps) - iota`` at ``T``."""

    T: float
    iota: float
    vol: GeneralVSpec

    def __post_init__(self):
        if not self.T > 0:
            raise ContractError("delivery time must be positive")
        if self.vol.p != 1:
            raise ContractError("variance forward needs a scalar volatility (p = 1)")


@dataclass
class Innovations:
    """Martingale increments over step ``k``: ``dY = sqrt(u) dB`` and the noise
    part of ``du``, plus ``g`` used by that step (``Var du_ii = 4 g^2 u_ii (Q'Q)_ii dt``)."""

    t: float
    dt: float
    u: np.ndarray     # (paths, p, p), state at the start of the step
    eta: np.ndarray   # (paths, p, p), the characteristic read next, whose root drives du
    dY: np.ndarray    # (paths, p)
    du: np.ndarray    # (paths, p, p)
    g: float


@dataclass
class AssetPaths:
    Y: PathBatch      # log-prices, values (paths, times, p, 1)
    u: PathBatch      # volatility u_t(eps), values (paths, times, p, p)
    innovations: dict = field(default_factory=dict)
    stats: object = None

    def prices(self) -> np.ndarray:
        return np.exp(self.Y.values[..., 0])


def simulate_assets(spec: VolModelSpec, grid: TimeGrid, rng: np.random.Generator, n_paths: int = 1,
                    first_id: int = 0, record_innovations=()) -> AssetPaths:
    """Joint Euler scheme for ``(Y, u)``.

    Per step the volatility scheme draws ``dW`` (p x p) and this routine then
    draws ``dH`` (p x 1), so the stream layout is fixed. ``record_innovations``
    lists grid indices ``k`` whose step ``k -> k+1`` increments are kept.
    """
    if not grid.uniform_step:
        raise ContractError("simulate_assets needs a uniform grid")
    vol = spec.vol
    p = spec.p
    N = grid.n_steps
    dt = grid.dt
    eps = vol.hurst.eps
    coeffs = blend_coeffs(vol.hurst.H, eps)
    keep = {int(k) for k in record_innovations}
    if any(k < 0 or k >= N for k in keep):
        raise ContractError("innovation steps must lie in [0, n_steps)")
    Y = np.empty((n_paths, N + 1, p, 1))
    Y[:, 0, :, 0] = np.log(spec.S0)
    U = np.empty((n_paths, N + 1, p, p))
    resid = math.sqrt(max(1.0 - spec.rho @ spec.rho, 0.0))
    rho = spec.rho[:, None]
    innov = {}

    def on_state(k, lo, S, R):
        U[:, k] = S[:, k - lo]

    def on_step(k, lo, S, R, dW, pred, noise):
        j = k - lo
        u_k, r_k = S[:, j], R[:, j]
        dH = math.sqrt(dt) * rng.standard_normal((n_paths, p, 1))
        dB = dW @ rho + resid * dH
        dY = (r_k @ dB)[..., 0]
        drift = spec.mu - 0.5 * np.diagonal(u_k, axis1=-2, axis2=-1)
        Y[:, k + 1, :, 0] = Y[:, k, :, 0] + drift * dt + dY
        if k in keep:
            g = float(blend_g(np.array([grid.times[k + 1] + eps - grid.times[k]]), coeffs)[0])
            innov[k] = Innovations(grid.times[k], dt, u_k.copy(), S[:, j + 1].copy(), dY,
                                   noise[:, j + 1].copy(), g)

    x0 = grid.times + eps
    stats = _march(vol, x0, grid, rng, n_paths, read_at=np.arange(N + 1), on_state=on_state, on_step=on_step)
    ids = first_id + np.arange(n_paths)
    return AssetPaths(PathBatch(grid, Y, ids, symmetric=False), PathBatch(grid, U, ids, symmetric=True),
                      innov, stats)


# ---------------------------------------------------------------------------
# instantaneous correlations


def _pd_diag(u, idx):
    u = np.asarray(u, dtype=float)
    d = np.diagonal(u, axis1=-2, axis2=-1)[..., list(idx)]
    if np.any(d <= 0):
        raise ContractError("correlation needs positive diagonal entries")
    return d


def corr_returns(u, i: int, j: int):
    """``u_ij / sqrt(u_ii u_jj)``; works on stacks."""
    if i == j:
        raise ContractError("need two distinct assets")
    d = _pd_diag(u, (i, j))
    return np.asarray(u)[..., i, j] / np.sqrt(d[..., 0] * d[..., 1])


def corr_leverage(Q, rho, i: int) -> float:
    """``(Q' rho)_i / sqrt((Q'Q)_ii)``: return vs own variance, constant in time."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    rho = np.asarray(rho, dtype=float).ravel()
    qq = (Q.T @ Q)[i, i]
    if qq <= 0:
        raise ContractError(f"column {i} of Q is zero")
    return float((Q.T @ rho)[i] / math.sqrt(qq))


def corr_vol(Q, u, i: int, j: int):
    """``(Q'Q)_ij u_ij / sqrt((Q'Q)_ii (Q'Q)_jj u_ii u_jj)``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    QQ = Q.T @ Q
    if QQ[i, i] <= 0 or QQ[j, j] <= 0:
        raise ContractError("diagonal of Q'Q must be positive")
    d = _pd_diag(u, (i, j))
    return QQ[i, j] * np.asarray(u)[..., i, j] / np.sqrt(QQ[i, i] * QQ[j, j] * d[..., 0] * d[..., 1])


@dataclass
class CorrelationCheck:
    name: str
    estimate: float
    reference: float
    std_error: float

    def within(self, n_se: float) -> bool:
        return abs(self.estimate - self.reference) <= n_se * self.std_error


def mean_volatility(vol, t: float) -> np.ndarray:
    """``E u_t(eps) = Sigma_0 + ((t+eps)^{2H} - eps^{2H}) Omega Omega'`` for ``K = 0``.

    Exact while ``t + eps <= 1`` (the characteristic stays on the power-law
    part of ``f``).
    """
    OO, _, K = vol.coefficients()
    if K is not None:
        raise ContractError("closed-form mean needs K = 0")
    h = vol.hurst
    c = (t + h.eps) ** (2 * h.H) - h.eps ** (2 * h.H)
    return vol.Sigma0 + c * OO


def correlation_checks(spec: VolModelSpec, innov: Innovations, i: int = 0, j: int = 1) -> list[CorrelationCheck]:
    """Cross-sectional estimates at one time against their ``u``-based targets.

    * return covariance: ``mean(dY_i dY_j) / dt`` vs ``E u_t`` (closed form);
    * return / vol-vol correlation: the normalised products
      ``dY_i dY_j / (dt sqrt(u_ii u_jj))`` etc. have conditional mean
      ``corr_returns(u)`` / ``corr_vol(Q, u)``, so their difference from those
      values has mean zero; the SE is that of the paired difference;
    * leverage: sample correlation of ``(dY_i, du_ii)`` vs ``corr_leverage``.
    """
    from .stats import correlation_se

    vol = spec.vol
    Q = loading_matrix(vol)
    QQ = Q.T @ Q
    u, eta, dY, du, dt, g = innov.u, innov.eta, innov.dY, innov.du, innov.dt, innov.g
    out = []
    Eu = mean_volatility(vol, innov.t)
    for a, b in ((i, i), (i, j), (j, j)):
        m, se = mean_se(dY[:, a] * dY[:, b] / dt)
        out.append(CorrelationCheck(f"return_cov[{a},{b}]", m, float(Eu[a, b]), se))
    norm = np.sqrt(u[:, i, i] * u[:, j, j])
    m, se = mean_se(dY[:, i] * dY[:, j] / (dt * norm) - corr_returns(u, i, j))
    ref = float(np.mean(corr_returns(u, i, j)))
    out.append(CorrelationCheck("return_corr", ref + m, ref, se))
    # du is driven by sqrt(eta), eta = u_t(eps + dt): normalise with it
    vnorm = 4 * g * g * dt * np.sqrt(QQ[i, i] * QQ[j, j] * eta[:, i, i] * eta[:, j, j])
    m, se = mean_se(du[:, i, i] * du[:, j, j] / vnorm - corr_vol(Q, eta, i, j))
    ref = float(np.mean(corr_vol(Q, eta, i, j)))
    out.append(CorrelationCheck("vol_corr", ref + m, ref, se))
    for a in (i, j):
        r, se = correlation_se(dY[:, a], du[:, a, a])
        out.append(CorrelationCheck(f"leverage[{a}]", r, corr_leverage(Q, spec.rho, a), se))
    return out


# ---------------------------------------------------------------------------
# degenerations and pricing


def heston_degenerate(v: float, Q: float, K: float):
    """``(kappa, theta, sigma)`` of the CIR volatility obtained for ``p = 1``, ``H = 1/2``."""
    if not K < 0:
        raise ContractError("mean reversion needs K < 0")
    kappa = -2.0 * K
    return kappa, v * Q * Q / kappa, 2.0 * Q


def cir_mean(kappa: float, theta: float, u0: float, t: float) -> float:
    return theta + (u0 - theta) * math.exp(-kappa * t)


def _scalar_vol(spec) -> GeneralVSpec:
    if not isinstance(spec, GeneralVSpec) or spec.p != 1:
        raise ContractError("expected a scalar real-index volatility spec (p = 1)")
    return spec


def expected_variance(spec: GeneralVSpec, t: float) -> float:
    """``v ((t+eps)^{2H} - eps^{2H}) + Sigma_0``."""
    spec = _scalar_vol(spec)
    h = spec.hurst
    return spec.v * ((t + h.eps) ** (2 * h.H) - h.eps ** (2 * h.H)) + float(spec.Sigma0[0, 0])


def price_variance_forward(contract: ForwardContract, spec: GeneralVSpec | None = None, r: float = 0.0):
    """``(V0, P0)``: value at time 0 and fair delivery price.

    Only time-0 valuation is offered: a later value would need the
    volatility field away from ``x = eps``, which is not observable.
    """
    spec = contract.vol if spec is None else spec
    P0 = expected_variance(spec, contract.T)
    return math.exp(-r * contract.T) * (P0 - contract.iota), P0
