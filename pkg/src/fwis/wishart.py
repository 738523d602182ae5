"""Integer-index fractional Wishart processes and their Laplace transforms.

``Sigma_t = B_t' B_t`` with ``B`` an ``n x p`` fractional Brownian matrix
(fWIS) or its eps-approximation (eps-fWIS). At a fixed time both are
noncentral Wishart with per-entry variance ``c`` (``t^{2H}`` or
``(t+eps)^{2H} - eps^{2H}``), so one closed form serves every check:

    E etr(-Z Sigma) = det(I + 2cZ)^{-v/2} etr(-Z (I + 2cZ)^{-1} Sigma_0)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ConeError, ContractError
from .fbm import HurstParams, PathBatch, TimeGrid, fbm_cov, sample_fbm_matrix, sample_rl_matrix, variance_scale
from .stats import mean_se

# symbol -> type housing it, collected into the docs index
SYMBOLS = {"n": "FwisSpec", "p": "FwisSpec", "C": "FwisSpec", "Σ_0": "FwisSpec", "Z": "LaplaceQuery"}


@dataclass(frozen=True, eq=False)
class FwisSpec:
    """fWIS(H, n, p, Sigma_0) when ``hurst.eps == 0``, eps-fWIS otherwise.

    ``C`` is the ``n x p`` initial state; ``Sigma_0 = C'C``. A singular
    ``Sigma_0`` (e.g. ``C = 0``) is only accepted with ``allow_singular``.
    """

    hurst: HurstParams
    n: int
    C: np.ndarray
    allow_singular: bool = False

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        object.__setattr__(self, "C", C)
        if C.shape[0] != self.n:
            raise ContractError(f"C must have n={self.n} rows, got {C.shape}")
        if self.p > self.n:
            raise ContractError(f"dimension p={self.p} exceeds index n={self.n}")
        if not self.allow_singular:
            try:
                linalg.cholesky(self.Sigma0)
            except ConeError as exc:
                raise ContractError(f"Sigma_0 = C'C must be positive definite ({exc})") from exc

    @property
    def p(self) -> int:
        return self.C.shape[1]

    @property
    def Sigma0(self) -> np.ndarray:
        return self.C.T @ self.C


def _gram(batch: PathBatch) -> PathBatch:
    B = batch.values
    S = linalg.symmetrize(np.swapaxes(B, -1, -2) @ B)
    return PathBatch(batch.grid, S, batch.path_ids, symmetric=True, seed=batch.seed)


def fwis_paths(spec: FwisSpec, grid: TimeGrid, rng: np.random.Generator, n_paths: int = 1,
               first_id: int = 0, antithetic: bool = False) -> PathBatch:
    """fWIS paths ``Sigma_t = (B^H_t)' B^H_t`` on ``grid``."""
    if spec.hurst.eps != 0.0:
        raise ContractError("fwis_paths needs eps == 0; use eps_fwis_paths_int for eps > 0")
    B = sample_fbm_matrix(spec.hurst, grid, spec.n, spec.p, spec.C, rng, n_paths, first_id, antithetic)
    return _gram(B)


def eps_fwis_paths_int(spec: FwisSpec, grid: TimeGrid, rng: np.random.Generator, scheme: str = "exact",
                       n_paths: int = 1, first_id: int = 0, antithetic: bool = False) -> PathBatch:
    """eps-fWIS paths ``(B^{H,eps}_t)' B^{H,eps}_t`` for integer index ``n``."""
    if spec.hurst.eps <= 0.0:
        raise ContractError("eps_fwis_paths_int needs eps > 0")
    B = sample_rl_matrix(spec.hurst, grid, spec.n, spec.p, spec.C, rng, scheme, n_paths, first_id, antithetic)
    return _gram(B)


@dataclass(frozen=True, eq=False)
class LaplaceQuery:
    """A transform argument: symmetric positive-definite ``Z`` at time ``t > 0``."""

    Z: np.ndarray
    t: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "Z", _check_pd(np.atleast_2d(np.asarray(self.Z, dtype=float))))
        if not self.t > 0:
            raise ContractError("transform time must be positive")


def _check_pd(Z, name="Z"):
    if isinstance(Z, LaplaceQuery):
        return Z.Z
    Z = linalg.check_symmetric(Z)
    try:
        linalg.cholesky(Z)
    except ConeError as exc:
        raise ContractError(f"{name} must be positive definite ({exc})") from exc
    return Z


def wishart_laplace(Z, c: float, v: float, Sigma0) -> float:
    """``E etr(-Z S)`` for ``S`` noncentral Wishart with index ``v``, scale ``c``
    and noncentrality carried by ``Sigma0``."""
    Z = _check_pd(Z)
    Sigma0 = linalg.check_symmetric(Sigma0)
    if c < 0 or v <= 0:
        raise ContractError(f"need c >= 0 and v > 0, got c={c}, v={v}")
    p = Z.shape[0]
    M = np.eye(p) + 2.0 * c * Z
    try:
        logdet = float(linalg.logdet_pd(M))
    except ConeError as exc:  # unreachable for c >= 0 and PD Z
        raise ContractError(f"I + 2cZ is singular: {exc}") from exc
    tr = float(np.trace(Z @ np.linalg.solve(M, Sigma0)))
    return float(np.exp(-0.5 * v * logdet - tr))


def fwis_laplace(Z, hurst: HurstParams, t: float, v: float, Sigma0) -> float:
    """Closed-form transform of fWIS (eps = 0) or eps-fWIS at time ``t``."""
    return wishart_laplace(Z, variance_scale(hurst, t), v, Sigma0)


def wishart_mean(c: float, v: float, Sigma0) -> np.ndarray:
    """``E S = v c I + Sigma_0``.

    Obtained by differentiating the transform at ``Z = 0``: with
    ``log L(Z) = -(v/2) log det(I + 2cZ) - tr(Z (I + 2cZ)^{-1} Sigma_0)``,
    the directional derivative along ``dZ`` at 0 is
    ``-v c tr(dZ) - tr(dZ Sigma_0) = -tr(dZ E S)``.
    """
    Sigma0 = np.atleast_2d(np.asarray(Sigma0, dtype=float))
    return v * c * np.eye(Sigma0.shape[0]) + Sigma0


def isserlis_cov(hurst: HurstParams, t: float, s: float) -> float:
    """``Cov(Sigma_t, Sigma_s)`` of scalar fWIS with ``n = p = 1``, ``C = 0``.

    ``Sigma = B^2`` with ``B`` centred Gaussian, so Isserlis gives
    ``2 Cov(B_t, B_s)^2``.
    """
    return 2.0 * fbm_cov(hurst, t, s) ** 2


def mean_factor(Sigma0, n: int) -> np.ndarray:
    """An ``n x p`` matrix ``C`` with ``C'C = Sigma0``: ``[sqrt(Sigma0); 0]``."""
    R = linalg.sym_sqrt(Sigma0)
    p = R.shape[0]
    if n < p:
        raise ContractError(f"index n={n} must be >= p={p}")
    return np.vstack([R, np.zeros((n - p, p))])


def wishart_sample(n: int, c: float, Sigma0, rng: np.random.Generator, size: int | None = None,
                   antithetic: bool = False) -> np.ndarray:
    """Exact draw(s) ``G'G`` with ``G ~ N(C, c I)`` entrywise, ``C'C = Sigma0``."""
    Sigma0 = linalg.check_symmetric(np.atleast_2d(Sigma0))
    if c < 0:
        raise ContractError("scale c must be non-negative")
    C = mean_factor(Sigma0, n)
    p = C.shape[1]
    m = 1 if size is None else size
    if antithetic:
        if m % 2:
            raise ContractError("antithetic sampling needs an even size")
        z = rng.standard_normal((m // 2, n, p))
        z = np.concatenate([z, -z])
    else:
        z = rng.standard_normal((m, n, p))
    if c == 0.0:
        out = np.broadcast_to(Sigma0, (m, p, p)).copy()
    else:
        G = C + np.sqrt(c) * z
        out = linalg.symmetrize(np.swapaxes(G, -1, -2) @ G)
    return out[0] if size is None else out


def laplace_values(S, Z) -> np.ndarray:
    """Per-sample ``etr(-Z S)`` for a stack of matrices ``S``."""
    Z = Z.Z if isinstance(Z, LaplaceQuery) else np.asarray(Z, dtype=float)
    return np.exp(-np.einsum("ij,...ji->...", Z, np.asarray(S, dtype=float)))


@dataclass
class AdditivityReport:
    estimate: float
    std_error: float
    closed_form: float
    n_paths: int
    index: int
    passed: bool

    @property
    def z_score(self) -> float:
        return (self.estimate - self.closed_form) / self.std_error if self.std_error > 0 else 0.0


def additivity_check(spec_a: FwisSpec, spec_b: FwisSpec, t: float, Z, rng_a: np.random.Generator,
                     rng_b: np.random.Generator, n_paths: int, n_se: float = 3.0) -> AdditivityReport:
    """Compare the MC transform of ``Sigma_t + S_t`` (independent processes)
    with the closed form at index ``n + m`` and initial state ``Sigma_0 + S_0``."""
    if spec_a.hurst != spec_b.hurst or spec_a.p != spec_b.p:
        raise ContractError("additivity needs matching H, eps and p")
    if rng_a is rng_b:
        raise ContractError("the two processes need independent rng streams")
    grid = TimeGrid(np.array([0.0, t]))
    sample = fwis_paths if spec_a.hurst.eps == 0.0 else eps_fwis_paths_int
    S = sample(spec_a, grid, rng_a, n_paths=n_paths).values[:, -1] + \
        sample(spec_b, grid, rng_b, n_paths=n_paths).values[:, -1]
    est, se = mean_se(laplace_values(S, Z))
    cf = fwis_laplace(Z, spec_a.hurst, t, spec_a.n + spec_b.n, spec_a.Sigma0 + spec_b.Sigma0)
    return AdditivityReport(est, se, cf, n_paths, spec_a.n + spec_b.n, abs(est - cf) <= n_se * se)
