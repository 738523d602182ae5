"""eps-fWIS for real index ``v`` via stochastic characteristics.

The SPDE

    du_t(x) = (d_x u_t(x) + f(x)[Omega Omega' + u K + K' u]) dt
              + g(x) (sqrt(u) dW Q + Q' dW' sqrt(u))

is solved along ``xi_t = x0 - t``: ``eta_t(x0)`` follows a matrix SDE with
time-dependent coefficients ``f(xi_t)``, ``g(xi_t)`` and the field is read
back as ``u_t(x) = eta_t(x + t)``. One Brownian matrix ``W`` drives every
characteristic, so a family of starting points is stepped together with a
single noise draw per step.

``g`` extends ``sqrt(2H) x^alpha`` from ``[eps, 1]`` to a compactly supported
C^4 function using degree-9 polynomial ramps on ``(0, eps)`` and ``(1, 2)``;
``f = g^2``.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from typing import NamedTuple
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import linalg
from .errors import ContractError, NumericError
from .fbm import HurstParams, PathBatch, TimeGrid
from .wishart import wishart_laplace

PROJECTION_WARN_RATE = 0.01
RK4_STEPS = 10_000
_POW = np.arange(5, 10)  # exponents i + 4 for i = 1..5

# symbol -> type housing it, collected into the docs index
SYMBOLS = {
    "v": "GeneralVSpec", "f": "BlendCoeffs", "g": "BlendCoeffs", "aᵢ": "BlendCoeffs", "bᵢ": "BlendCoeffs",
    "Ω": "SixParamSpec", "Q": "SixParamSpec", "K": "SixParamSpec",
    "ξ": "CharacteristicFamily", "η": "CharacteristicFamily", "b": "RiccatiSolution", "B": "RiccatiSolution",
}


def _falling(m, k):
    out = np.ones_like(np.asarray(m, dtype=float))
    for j in range(k):
        out = out * (m - j)
    return out


@dataclass(frozen=True, eq=False)
class BlendCoeffs:
    """Ramp coefficients: ``g = sum a_i x^{i+4}`` on ``(0, eps)`` and
    ``g = sum b_i (x-2)^{i+4}`` on ``(1, 2)``."""

    H: float
    eps: float
    a: np.ndarray
    b: np.ndarray

    @property
    def alpha(self) -> float:
        return self.H - 0.5

    def targets(self, x: float) -> np.ndarray:
        """Derivatives of orders 0..4 of ``sqrt(2H) x^alpha`` at ``x``."""
        root = math.sqrt(2 * self.H)
        return np.array([root * float(_falling(self.alpha, j)) * x ** (self.alpha - j) for j in range(5)])

    def residuals(self) -> np.ndarray:
        """Relative residuals of the ten boundary equations.

        Each residual is ``|lhs - rhs| / (sum |lhs terms| + |rhs|)`` so that
        equations whose right-hand side vanishes are still scaled sensibly.
        """
        out = []
        for x, coef, shift in ((self.eps, self.a, 0.0), (1.0, self.b, 2.0)):
            rhs = self.targets(x)
            for k in range(5):
                terms = coef * _falling(_POW, k) * (x - shift) ** (_POW - k)
                lhs = terms.sum()
                out.append(abs(lhs - rhs[k]) / (np.abs(terms).sum() + abs(rhs[k])))
        return np.array(out)


def blend_coeffs(H: float, eps: float) -> BlendCoeffs:
    """Solve the two 5x5 boundary systems for the ramp coefficients.

    The left system is solved for ``a_i eps^{i+4}`` (so the matrix is the
    falling-factorial matrix at 1 rather than a badly scaled power matrix)
    and mapped back.
    """
    if not 0.0 < eps < 1.0:
        raise ContractError(f"eps must lie in (0, 1), got {eps}")
    if not 0.0 < H < 1.0:
        raise ContractError(f"Hurst index must lie in (0, 1), got {H}")
    alpha = H - 0.5
    root = math.sqrt(2 * H)
    k = np.arange(5)[:, None]
    fall = np.array([[_falling(m, j) for m in _POW] for j in range(5)], dtype=float)
    fall_alpha = np.array([float(_falling(alpha, j)) for j in range(5)])
    # left: sum_i (a_i eps^{i+4}) (i+4)_k = sqrt(2H) (alpha)_k eps^alpha
    try:
        a_scaled = np.linalg.solve(fall, root * fall_alpha * eps**alpha)
        # right: sum_i b_i (i+4)_k (-1)^{i+4-k} = sqrt(2H) (alpha)_k
        b = np.linalg.solve(fall * (-1.0) ** (_POW[None, :] - k), root * fall_alpha)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"boundary system is singular for H={H}, eps={eps}") from exc
    a = a_scaled / eps**_POW
    return BlendCoeffs(H, eps, a, b)


def blend_g(x, coeffs: BlendCoeffs):
    """Piecewise ``g``: 0 | left ramp | sqrt(2H) x^alpha | right ramp | 0."""
    x = np.asarray(x, dtype=float)
    eps = coeffs.eps
    out = np.zeros_like(x)
    left = (x > 0) & (x < eps)
    mid = (x >= eps) & (x <= 1)
    right = (x > 1) & (x < 2)
    if np.any(left):
        y = x[left] / eps
        out[left] = (coeffs.a * eps**_POW * y[:, None] ** _POW).sum(axis=1)
    if np.any(mid):
        out[mid] = math.sqrt(2 * coeffs.H) * x[mid] ** coeffs.alpha
    if np.any(right):
        out[right] = (coeffs.b * (x[right, None] - 2.0) ** _POW).sum(axis=1)
    return float(out) if out.ndim == 0 else out


def blend_f(x, coeffs: BlendCoeffs):
    g = blend_g(x, coeffs)
    return g * g


def blend_branches(coeffs: BlendCoeffs, ctx=None):
    """The four branch expressions as callables usable with ``mpmath`` numbers.

    Each branch is an analytic expression valid beyond its own interval, which
    is what a finite-difference comparison across a knot needs.
    """
    import mpmath

    ctx = ctx or mpmath.mp
    a = [ctx.mpf(float(v)) for v in coeffs.a]
    b = [ctx.mpf(float(v)) for v in coeffs.b]
    root = ctx.sqrt(2 * ctx.mpf(coeffs.H))
    alpha = ctx.mpf(coeffs.H) - ctx.mpf(1) / 2
    return {
        "zero": lambda x: ctx.mpf(0),
        "left": lambda x: sum(ai * x ** int(m) for ai, m in zip(a, _POW)),
        "middle": lambda x: root * x**alpha,
        "right": lambda x: sum(bi * (x - 2) ** int(m) for bi, m in zip(b, _POW)),
    }


_FD = {
    0: ((0,), (1,), 1),
    1: ((-2, -1, 1, 2), (1, -8, 8, -1), 12),
    2: ((-2, -1, 0, 1, 2), (-1, 16, -30, 16, -1), 12),
    3: ((-3, -2, -1, 1, 2, 3), (1, -8, 13, -13, 8, -1), 8),
    4: ((-3, -2, -1, 0, 1, 2, 3), (-1, 12, -39, 56, -39, 12, -1), 6),
}


def central_difference(fn, x, order: int, h):
    """Fourth-order accurate central difference of the given derivative order."""
    offsets, weights, denom = _FD[order]
    return sum(w * fn(x + o * h) for o, w in zip(offsets, weights)) / (denom * h**order)


@dataclass
class KnotReport:
    knot: float
    order: int
    left: float
    right: float

    @property
    def rel_gap(self) -> float:
        return abs(self.left - self.right) / max(1.0, abs(self.left), abs(self.right))


def knot_continuity(coeffs: BlendCoeffs, rel_step: float = 1e-3, dps: int = 50) -> list[KnotReport]:
    """Finite-difference derivatives (orders 0..4) of adjacent branches at each knot.

    Derivatives are taken in the local coordinate ``y = x / scale`` (``scale``
    is ``eps`` at the knots 0 and ``eps``, 1 at the knots 1 and 2), so the
    reported k-th derivative is ``scale^k g^(k)``; without this the ramp on
    ``(0, eps)`` has derivatives of size ``eps^-k`` and the stencil's truncation
    error swamps the comparison. Evaluation runs at ``dps`` digits, so round-off
    in the stencils is negligible.
    """
    import mpmath

    ctx = mpmath.mp.clone()
    ctx.dps = dps
    br = blend_branches(coeffs, ctx)
    eps = coeffs.eps
    knots = [(0.0, "zero", "left", eps), (eps, "left", "middle", eps),
             (1.0, "middle", "right", 1.0), (2.0, "right", "zero", 1.0)]
    out = []
    for x, lb, rb, scale in knots:
        xm = ctx.mpf(x)
        sc = ctx.mpf(scale)
        h = ctx.mpf(rel_step) * sc
        for k in range(5):
            dl = central_difference(br[lb], xm, k, h) * sc**k
            dr = central_difference(br[rb], xm, k, h) * sc**k
            out.append(KnotReport(x, k, float(dl), float(dr)))
    return out


# ---------------------------------------------------------------------------
# specs


def _check_eps(hurst: HurstParams):
    if not 0.0 < hurst.eps < 1.0:
        raise ContractError(f"characteristic schemes need 0 < eps < 1, got {hurst.eps}")


@dataclass(frozen=True, eq=False)
class GeneralVSpec:
    """eps-fWIS(H, v, p, Sigma_0) with real index ``v >= p + 1``."""

    hurst: HurstParams
    v: float
    Sigma0: np.ndarray

    def __post_init__(self):
        _check_eps(self.hurst)
        S = linalg.check_symmetric(np.atleast_2d(np.asarray(self.Sigma0, dtype=float)))
        object.__setattr__(self, "Sigma0", S)
        linalg.cholesky(S)
        if self.v < self.p + 1:
            raise ContractError(f"index v={self.v} must be >= p + 1 = {self.p + 1}")

    @property
    def p(self) -> int:
        return self.Sigma0.shape[0]

    def coefficients(self):
        """``(Omega Omega', Q, K)``; ``None`` marks identity ``Q`` / zero ``K``."""
        return self.v * np.eye(self.p), None, None


@dataclass(frozen=True, eq=False)
class SixParamSpec:
    """eps-fWIS(H, p, Sigma_0, Omega, Q, K)."""

    hurst: HurstParams
    Sigma0: np.ndarray
    Omega: np.ndarray
    Q: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        _check_eps(self.hurst)
        S = linalg.check_symmetric(np.atleast_2d(np.asarray(self.Sigma0, dtype=float)))
        object.__setattr__(self, "Sigma0", S)
        p = S.shape[0]
        for name in ("Omega", "Q", "K"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape != (p, p):
                raise ContractError(f"{name} must be {p}x{p}, got {M.shape}")
            object.__setattr__(self, name, M)
        linalg.cholesky(S)
        gap = self.Omega @ self.Omega.T - (p + 1) * self.Q.T @ self.Q
        w, _ = linalg.sym_eigh(linalg.symmetrize(gap))
        if w[0] < -1e-12 * (1.0 + linalg.frobenius(self.Omega @ self.Omega.T)):
            raise ContractError("Omega Omega' - (p+1) Q'Q must be positive semidefinite "
                                f"(smallest eigenvalue {w[0]:.3e})")

    @classmethod
    def from_index(cls, hurst: HurstParams, v: float, Sigma0, Q, K) -> "SixParamSpec":
        """The ``Omega Omega' = v Q'Q`` special case."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        return cls(hurst, Sigma0, math.sqrt(v) * Q.T, Q, K)

    @property
    def p(self) -> int:
        return self.Sigma0.shape[0]

    def coefficients(self):
        OO = linalg.symmetrize(self.Omega @ self.Omega.T)
        Q = None if np.array_equal(self.Q, np.eye(self.p)) else self.Q
        K = None if not np.any(self.K) else self.K
        return OO, Q, K


def characteristic_scale(coeffs: BlendCoeffs, x0: float, t: float) -> float:
    """``int_0^t f(x0 - s) ds``: the variance scale accumulated along one
    characteristic. Equals ``(t+eps)^{2H} - eps^{2H}`` when ``x0 = t + eps <= 1``."""
    lo, hi = x0 - t, x0
    pad = 1e-12 * (hi - lo)  # ignore knots that only touch an end through roundoff
    pts = [k for k in (0.0, coeffs.eps, 1.0, 2.0) if lo + pad < k < hi - pad]
    val, _ = integrate.quad(lambda x: blend_f(x, coeffs), lo, hi, points=pts or None,
                            epsabs=0.0, epsrel=1e-10, limit=200)
    return val


# ---------------------------------------------------------------------------
# Euler scheme along characteristics


def _euler_parts(S, R, dW, fk, gk, OO, Q, K, dt):
    """Predictable part and noise of one Euler step for a family.

    ``S``, ``R``: (paths, members, p, p); ``dW``: (paths, p, p); ``fk``, ``gk``: (members,).
    """
    drift = OO if K is None else OO + S @ K + K.T @ S
    pred = S + (fk * dt)[:, None, None] * drift
    M = R @ dW[:, None]
    if Q is not None:
        M = M @ Q
    noise = gk[:, None, None] * (M + np.swapaxes(M, -1, -2))
    return pred, noise


@dataclass
class MarchStats:
    projections: int = 0
    member_steps: int = 0
    warnings: list = field(default_factory=list)

    @property
    def projection_rate(self) -> float:
        return self.projections / self.member_steps if self.member_steps else 0.0

    @property
    def flagged(self) -> bool:
        return self.projection_rate > PROJECTION_WARN_RATE


def _march(spec, x0, grid: TimeGrid, rng, n_paths: int, *, read_at=None, on_state=None, on_step=None,
           noise_substeps: int = 1, floor=None) -> MarchStats:
    """Step a family of characteristics sharing one Brownian matrix.

    ``read_at[j]`` (non-decreasing) is the last step at which member ``j`` is
    needed; afterwards it is dropped from the state. ``on_state(k, lo, S, R)``
    sees the projected state of members ``lo:`` at step ``k``;
    ``on_step(k, lo, S, R, dW, pred, noise)`` sees each transition.
    """
    dt = grid.dt
    p = spec.p
    x0 = np.asarray(x0, dtype=float)
    m = x0.size
    coeffs = blend_coeffs(spec.hurst.H, spec.hurst.eps)
    xi = x0[None, :] - grid.times[:, None]
    fx = blend_f(xi, coeffs)
    gx = blend_g(xi, coeffs)
    OO, Q, K = spec.coefficients()
    read_at = np.full(m, grid.n_steps) if read_at is None else np.asarray(read_at)
    if np.any(np.diff(read_at) < 0):
        raise ContractError("members must be ordered by read step")
    sub = int(noise_substeps)
    scale = math.sqrt(dt / sub)
    stats = MarchStats()
    eta = np.broadcast_to(spec.Sigma0, (n_paths, m, p, p)).copy()
    lo = 0
    for k in range(grid.n_steps + 1):
        S, R, clamped = linalg.project_and_sqrt(eta, floor)
        stats.projections += int(clamped.sum())
        stats.member_steps += clamped.size
        if not np.all(np.isfinite(S)):
            bad = np.argwhere(~np.isfinite(S).all(axis=(-2, -1)))[0]
            raise NumericError(f"non-finite state at step {k} (t={grid.times[k]}), path {bad[0]}, "
                               f"member x0={x0[lo + bad[1]]}:\n{eta[tuple(bad)]}")
        if on_state is not None:
            on_state(k, lo, S, R)
        if k == grid.n_steps:
            break
        z = rng.standard_normal((sub, n_paths, p, p))
        dW = scale * (z[0] if sub == 1 else z.sum(axis=0))
        pred, noise = _euler_parts(S, R, dW, fx[k, lo:], gx[k, lo:], OO, Q, K, dt)
        if on_step is not None:
            on_step(k, lo, S, R, dW, pred, noise)
        new_lo = lo + int(np.searchsorted(read_at[lo:], k, side="right"))
        if new_lo >= m:
            break
        eta = (pred + noise)[:, new_lo - lo:]
        lo = new_lo
    if stats.flagged:
        msg = f"projection rate {stats.projection_rate:.2%} exceeds {PROJECTION_WARN_RATE:.0%} of steps"
        stats.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return stats


@dataclass(eq=False)
class CharacteristicFamily:
    """``values[path, member, r]`` is ``eta`` of member ``x0[member]`` at ``times[r]``."""

    x0: np.ndarray
    times: np.ndarray
    values: np.ndarray
    stats: MarchStats

    def trajectory(self, member: int) -> np.ndarray:
        return self.values[:, member]


def simulate_characteristic(spec, x0_list, grid: TimeGrid, rng: np.random.Generator, n_paths: int = 1,
                            record=None, noise_substeps: int = 1, floor=None) -> CharacteristicFamily:
    """Euler-Maruyama for ``eta`` along each characteristic ``xi_t = x0 - t``.

    Every member consumes the same ``dW`` sequence; states are symmetrised
    and projected onto the PSD cone after each step. ``record`` lists grid
    indices to keep (default: all).
    """
    if not grid.uniform_step:
        raise ContractError("characteristic scheme needs a uniform grid")
    x0 = np.atleast_1d(np.asarray(x0_list, dtype=float))
    record = np.arange(len(grid)) if record is None else np.asarray(sorted(set(int(r) for r in record)))
    slot = {int(r): i for i, r in enumerate(record)}
    out = np.empty((n_paths, x0.size, record.size, spec.p, spec.p))

    def keep(k, lo, S, R):
        if k in slot:
            out[:, :, slot[k]] = S

    stats = _march(spec, x0, grid, rng, n_paths, on_state=keep, noise_substeps=noise_substeps, floor=floor)
    return CharacteristicFamily(x0, grid.times[record], out, stats)


def eps_fwis_general(spec, grid: TimeGrid, rng: np.random.Generator, n_paths: int = 1, obs_times=None,
                     noise_substeps: int = 1, first_id: int = 0) -> PathBatch:
    """Sample ``u_t(eps) = eta_t(t + eps)`` at the observation times.

    One characteristic per observation time, all sharing the noise; each is
    read once and then retired.
    """
    eps = spec.hurst.eps
    obs = grid.times[1:] if obs_times is None else np.sort(np.asarray(obs_times, dtype=float))
    obs = obs[obs > 0]
    idx = np.array([grid.index_of(t) for t in obs], dtype=int)
    vals = np.empty((n_paths, obs.size + 1, spec.p, spec.p))
    vals[:, 0] = spec.Sigma0
    stats = None
    if obs.size:
        def read(k, lo, S, R):
            for j in range(lo, obs.size):
                if idx[j] == k:
                    vals[:, j + 1] = S[:, j - lo]
                elif idx[j] > k:
                    break

        stats = _march(spec, obs + eps, grid, rng, n_paths, read_at=idx, on_state=read,
                       noise_substeps=noise_substeps)
    batch = PathBatch(TimeGrid(np.concatenate([[0.0], obs])), vals, first_id + np.arange(n_paths),
                      symmetric=True)
    batch.info["stats"] = stats
    return batch


# ---------------------------------------------------------------------------
# transform cross-checks


@lru_cache(maxsize=64)
def _riccati_core(Zkey: tuple, p: int, t: float, H: float, eps: float, n_steps: int):
    # B and int tr(f B) do not involve v, so one integration serves every v
    Z = np.array(Zkey).reshape(p, p)
    coeffs = blend_coeffs(H, eps)
    h = t / n_steps
    fvals = blend_f(eps + h * np.arange(2 * n_steps + 1) / 2.0, coeffs)

    def rhs(B, fv):
        return 2.0 * fv * (B @ B), fv * np.trace(B)

    B = -Z.copy()
    b = 0.0
    for i in range(n_steps):
        f0, fh, f1 = fvals[2 * i], fvals[2 * i + 1], fvals[2 * i + 2]
        k1, l1 = rhs(B, f0)
        k2, l2 = rhs(B + 0.5 * h * k1, fh)
        k3, l3 = rhs(B + 0.5 * h * k2, fh)
        k4, l4 = rhs(B + h * k3, f1)
        B = B + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        b = b + h / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
        if not np.all(np.isfinite(B)):
            raise NumericError(f"Riccati integration blew up at step {i} (tau={h * (i + 1)})")
    B = linalg.symmetrize(B)
    B.setflags(write=False)
    return b, B


class RiccatiSolution(NamedTuple):
    b: float
    B: np.ndarray


def riccati_solution(Z, t: float, spec: GeneralVSpec, n_steps: int = RK4_STEPS) -> RiccatiSolution:
    """Integrate the transform coefficients ``(b, B)`` over horizon ``t``.

    Along the characteristic the PDE system reduces, in the remaining horizon
    ``tau``, to ``dB/dtau = 2 f(eps + tau) B^2``, ``db/dtau = v tr(f(eps+tau) B)``
    with ``B(0) = -Z``, ``b(0) = 0``. Classical RK4.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if t <= 0:
        raise ContractError("horizon must be positive")
    if Z.shape != (spec.p, spec.p):
        raise ContractError(f"Z must be {spec.p}x{spec.p}")
    b, B = _riccati_core(tuple(Z.ravel()), spec.p, float(t), spec.hurst.H, spec.hurst.eps, int(n_steps))
    return RiccatiSolution(spec.v * b, B.copy())


def riccati_transform(Z, t: float, spec: GeneralVSpec, n_steps: int = RK4_STEPS) -> float:
    """``E etr(-Z u_t(eps)) = exp(b) etr(B Sigma_0)`` from the integrated ODEs."""
    b, B = riccati_solution(Z, t, spec, n_steps)
    return float(np.exp(b + np.trace(B @ spec.Sigma0)))


def _euler_coefficients(spec: GeneralVSpec, t: float, Z, grid: TimeGrid):
    # backward recursion for E[etr(Phi_k eta_k) ...] of the Euler chain
    coeffs = blend_coeffs(spec.hurst.H, spec.hurst.eps)
    x0 = t + spec.hurst.eps
    n = grid.index_of(t)
    fk = blend_f(x0 - grid.times[:n], coeffs)
    dt = grid.dt
    Phi = [None] * (n + 1)
    b = np.zeros(n + 1)
    Phi[n] = -np.atleast_2d(np.asarray(Z, dtype=float))
    for k in range(n - 1, -1, -1):
        P = Phi[k + 1]
        Phi[k] = P + 2.0 * fk[k] * dt * (P @ P)
        b[k] = b[k + 1] + spec.v * fk[k] * dt * np.trace(P)
    return np.array(Phi), b


def euler_laplace(spec: GeneralVSpec, t: float, Z, grid: TimeGrid) -> float:
    """Exact ``E etr(-Z eta_N)`` of the (unprojected) Euler chain for ``u_t(eps)``.

    Given ``eta_k`` the Euler update is Gaussian and linear in ``dW``, so
    ``E[etr(Phi eta_{k+1}) | eta_k] = exp(v f dt tr Phi) etr((Phi + 2 f dt Phi^2) eta_k)``;
    iterating backwards gives the scheme's transform in closed form.
    Its gap to the continuous closed form is the weak discretisation error.
    """
    Phi, b = _euler_coefficients(spec, t, Z, grid)
    return float(np.exp(b[0] + np.trace(Phi[0] @ spec.Sigma0)))


@dataclass
class LaplaceRun:
    plain: np.ndarray        # per-path etr(-Z u_t(eps))
    controlled: np.ndarray   # same minus a zero-mean martingale control variate
    stats: MarchStats


def laplace_paths(spec: GeneralVSpec, t: float, Z, grid: TimeGrid, rng: np.random.Generator,
                  n_paths: int, noise_substeps: int = 1) -> LaplaceRun:
    """Per-path transform values of ``u_t(eps)`` with a martingale control variate.

    The control variate is ``sum_k M_k tr(Phi_{k+1} noise_k)``, where ``M_k`` is
    the conditional transform after the predictable part of step ``k``. It is
    linear in ``dW_k`` with ``F_k``-measurable weights, hence has mean zero
    exactly (projection included) while removing the first-order noise.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Phi, b = _euler_coefficients(spec, t, Z, grid)
    n = grid.index_of(t)
    cv = np.zeros(n_paths)
    final = {}

    def step(k, lo, S, R, dW, pred, noise):
        P = Phi[k + 1]
        lin = np.einsum("ij,pji->p", P, pred[:, 0])
        tr_noise = np.einsum("ij,pji->p", P, noise[:, 0])
        cv[:] += np.exp(b[k + 1] + lin) * tr_noise

    def keep(k, lo, S, R):
        if k == n:
            final["S"] = S[:, 0]

    sub_grid = TimeGrid(grid.times[: n + 1])
    stats = _march(spec, np.array([t + spec.hurst.eps]), sub_grid, rng, n_paths, on_state=keep, on_step=step,
                   noise_substeps=noise_substeps)
    plain = np.exp(-np.einsum("ij,pji->p", Z, final["S"]))
    return LaplaceRun(plain, plain - cv, stats)


@dataclass
class IncrementReport:
    t: float
    dt_obs: float
    past_term: np.ndarray     # per-path |eta_t(t+dt+eps) - eta_t(t+eps)|
    positive_fraction: float
    tol: float

    @property
    def vanishes(self) -> bool:
        return bool(np.all(self.past_term <= self.tol))


def increment_decomposition_report(spec, grid: TimeGrid, t: float, dt_obs: float, rng: np.random.Generator,
                                   n_paths: int, tol: float = 1e-12) -> IncrementReport:
    """Size of the past-dependent part of ``u_{t+dt}(eps) - u_t(eps)``.

    Both characteristics are observed at the common time ``t``; their gap
    ``eta_t(t+dt+eps) - eta_t(t+eps)`` is the memory term. It vanishes when
    ``H = 1/2`` (``f``, ``g`` constant on the range swept).
    """
    eps = spec.hurst.eps
    fam = simulate_characteristic(spec, [t + eps, t + dt_obs + eps], grid, rng, n_paths,
                                  record=[grid.index_of(t)])
    gap = linalg.frobenius(fam.values[:, 1, 0] - fam.values[:, 0, 0])
    return IncrementReport(t, dt_obs, gap, float(np.mean(gap > tol)), tol)


def general_v_laplace(Z, spec: GeneralVSpec, t: float) -> float:
    """Closed-form transform of ``u_t(eps)`` for real index ``v``."""
    h = spec.hurst
    c = (t + h.eps) ** (2 * h.H) - h.eps ** (2 * h.H)
    return wishart_laplace(Z, c, spec.v, spec.Sigma0)
