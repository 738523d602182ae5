"""Fractional Brownian matrices and their Riemann-Liouville approximations.

Two families of Gaussian matrix processes live here, both sampled on a fixed
time grid with independent components:

* ``B^H``: fractional Brownian motion, covariance
  ``(t^{2H} + s^{2H} - |t-s|^{2H}) / 2``.
* ``B^{H,eps}``: the kernel process ``sqrt(2H) int_0^t (t-u+eps)^alpha dB_u``
  with ``alpha = H - 1/2``. For ``eps > 0`` it is a semimartingale and can be
  stepped forward incrementally; ``eps = 0`` is the Riemann-Liouville limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy import integrate

from . import linalg
from .errors import ConeError, ContractError, GridError, NumericError

QUAD_RTOL = 1e-10

# symbol -> type housing it, collected into the docs index
SYMBOLS = {"H": "HurstParams", "α": "HurstParams", "ε": "HurstParams"}


@dataclass(frozen=True)
class HurstParams:
    """Hurst index ``H`` and approximation offset ``eps`` (0 = limit process)."""

    H: float
    eps: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.H < 1.0:
            raise ContractError(f"Hurst index must lie in (0, 1), got {self.H}")
        if not self.eps >= 0.0:
            raise ContractError(f"eps must be non-negative, got {self.eps}")

    @property
    def alpha(self) -> float:
        return self.H - 0.5

    def with_eps(self, eps: float) -> "HurstParams":
        return HurstParams(self.H, eps)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise GridError("grid must be a non-empty 1-d array of times")
        if t[0] != 0.0:
            raise GridError(f"grid must start at 0, got {t[0]}")
        if not np.all(np.isfinite(t)):
            raise GridError("grid times must be finite")
        if np.any(np.diff(t) <= 0):
            raise GridError("grid times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1 or horizon <= 0:
            raise GridError("uniform grid needs n_steps >= 1 and horizon > 0")
        return cls(np.arange(n_steps + 1) * (horizon / n_steps))

    @classmethod
    def with_step(cls, horizon: float, dt: float) -> "TimeGrid":
        n = int(round(horizon / dt))
        if n < 1 or not math.isclose(n * dt, horizon, rel_tol=1e-12):
            raise GridError(f"horizon {horizon} is not a whole number of steps of {dt}")
        return cls.uniform(horizon, n)

    def __len__(self) -> int:
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def uniform_step(self) -> bool:
        if self.n_steps == 0:
            return True
        d = np.diff(self.times)
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))

    @property
    def dt(self) -> float:
        if not self.uniform_step or self.n_steps == 0:
            raise GridError("grid has no uniform step")
        return self.horizon / self.n_steps

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-12, abs_tol=1e-14):
            raise GridError(f"time {t} is not on the grid")
        return i


@dataclass(eq=False)
class MatrixPath:
    """One trajectory: ``values[k]`` is the matrix at ``grid.times[k]``."""

    grid: TimeGrid
    values: np.ndarray
    path_id: int = 0
    symmetric: bool = False
    seed: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[0] != len(self.grid):
            raise ContractError(f"values must have shape (len(grid), rows, cols), got {self.values.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


@dataclass(eq=False)
class PathBatch:
    """A block of paths on one grid: ``values`` has shape (paths, times, rows, cols)."""

    grid: TimeGrid
    values: np.ndarray
    path_ids: np.ndarray = None
    symmetric: bool = False
    seed: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4 or self.values.shape[1] != len(self.grid):
            raise ContractError(f"values must have shape (paths, len(grid), rows, cols), got {self.values.shape}")
        if self.path_ids is None:
            self.path_ids = np.arange(self.values.shape[0])
        self.path_ids = np.asarray(self.path_ids, dtype=np.int64)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[MatrixPath]:
        for k in range(len(self)):
            yield self.path(k)

    def path(self, k: int) -> MatrixPath:
        return MatrixPath(self.grid, self.values[k], int(self.path_ids[k]), self.symmetric, self.seed)

    def at(self, t: float) -> np.ndarray:
        """All paths' matrices at grid time ``t``."""
        return self.values[:, self.grid.index_of(t)]


def _check_times(*ts):
    for t in ts:
        if np.any(np.asarray(t) < 0):
            raise ContractError("times must be non-negative")


def fbm_cov(hurst: HurstParams, t, s):
    """Covariance of fractional Brownian motion at times ``t`` and ``s``."""
    _check_times(t, s)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    h2 = 2.0 * hurst.H
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def rl_variance(hurst: HurstParams, t):
    """Closed-form ``(t+eps)^{2H} - eps^{2H}``: per-entry variance of ``B^{H,eps}_t``."""
    _check_times(t)
    h2 = 2.0 * hurst.H
    t = np.asarray(t, dtype=float)
    out = (t + hurst.eps) ** h2 - hurst.eps**h2
    return float(out) if out.ndim == 0 else out


def variance_scale(hurst: HurstParams, t):
    """Per-entry variance at time ``t`` of ``B^H`` (eps = 0) or ``B^{H,eps}``."""
    if hurst.eps == 0.0:
        _check_times(t)
        out = np.asarray(t, dtype=float) ** (2.0 * hurst.H)
        return float(out) if out.ndim == 0 else out
    return rl_variance(hurst, t)


@lru_cache(maxsize=65536)
def _rl_cov_scalar(H: float, t: float, s: float, eps_t: float, eps_s: float) -> float:
    alpha = H - 0.5
    m = min(t, s)
    if m == 0.0:
        return 0.0
    if alpha == 0.0:
        return 2.0 * H * m
    # substitute w = m - u; both kernels become (w + offset)^alpha on [0, m]
    off_t = t - m + eps_t
    off_s = s - m + eps_s
    if off_t == 0.0 and off_s == 0.0:
        return m ** (2.0 * H)
    if off_t == 0.0 or off_s == 0.0:
        other = off_s if off_t == 0.0 else off_t
        # integrable endpoint singularity w^alpha carried by the quadrature weight
        val, err, *rest = integrate.quad(lambda w: (w + other) ** alpha, 0.0, m, weight="alg",
                                         wvar=(alpha, 0.0), epsabs=0.0, epsrel=QUAD_RTOL,
                                         limit=200, full_output=1)
    else:
        lo = min(off_t, off_s)
        points = [10.0 * lo] if 10.0 * lo < m else None
        val, err, *rest = integrate.quad(lambda w: ((w + off_t) * (w + off_s)) ** alpha, 0.0, m,
                                         epsabs=0.0, epsrel=QUAD_RTOL, limit=200, points=points,
                                         full_output=1)
    if rest and len(rest) > 1 and err > 1e3 * QUAD_RTOL * abs(val):
        raise NumericError(f"rl_cov quadrature did not converge (H={H}, t={t}, s={s}, "
                           f"eps=({eps_t}, {eps_s}), estimate={val}, abserr={err}): {rest[1]}")
    return 2.0 * H * val


def rl_cov(hurst: HurstParams, t: float, s: float, eps_s: float | None = None) -> float:
    """``Cov(B^{H,eps}_t, B^{H,eps'}_s)`` per matrix entry, by quadrature.

    ``eps_s`` sets a different offset for the ``s`` kernel (defaults to
    ``hurst.eps``); mixed offsets give the cross-covariance needed for the
    L2 distance between approximations.
    """
    _check_times(t, s)
    eps_s = hurst.eps if eps_s is None else float(eps_s)
    return _rl_cov_scalar(float(hurst.H), float(t), float(s), float(hurst.eps), eps_s)


def rl_l2_distance(hurst: HurstParams, t: float) -> float:
    """``E|B^{H,eps}_t - B^{H,0}_t|^2`` per entry (exact, Gaussian)."""
    lim = hurst.with_eps(0.0)
    return (rl_cov(hurst, t, t) + rl_cov(lim, t, t) - 2.0 * rl_cov(hurst, t, t, eps_s=0.0))


def _cov_matrix(fn, times: np.ndarray) -> np.ndarray:
    n = times.size
    K = np.empty((n, n))
    for i in range(n):
        for j in range(i + 1):
            K[i, j] = K[j, i] = fn(times[i], times[j])
    return K


def _grid_factor(cov, grid: TimeGrid) -> np.ndarray:
    pos = grid.times[1:]
    if pos.size == 0:
        raise GridError("grid needs at least one positive time")
    K = _cov_matrix(cov, pos)
    try:
        return linalg.cholesky(K)
    except ConeError as exc:
        raise GridError(f"temporal covariance is not positive definite: {exc}") from exc


def _initial(C, n: int, p: int) -> np.ndarray:
    C = np.zeros((n, p)) if C is None else np.asarray(C, dtype=float)
    if C.shape != (n, p):
        raise ContractError(f"initial state must be {n}x{p}, got {C.shape}")
    return C


def _normals(rng: np.random.Generator, n_paths: int, n: int, p: int, m: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal((n_paths, n, p, m))
    if n_paths % 2:
        raise ContractError("antithetic sampling needs an even number of paths")
    z = rng.standard_normal((n_paths // 2, n, p, m))
    return np.concatenate([z, -z], axis=0)


def _assemble_paths(C, L, z, grid, first_id, symmetric=False) -> PathBatch:
    # z: (paths, n, p, m) -> values at positive times via the temporal factor
    inc = z @ L.T
    vals = np.empty((z.shape[0], len(grid)) + C.shape)
    vals[:, 0] = C
    vals[:, 1:] = C + np.moveaxis(inc, -1, 1)
    return PathBatch(grid, vals, first_id + np.arange(z.shape[0]), symmetric)


def sample_fbm_matrix(hurst: HurstParams, grid: TimeGrid, n: int, p: int, C, rng: np.random.Generator,
                      n_paths: int = 1, first_id: int = 0, antithetic: bool = False) -> PathBatch:
    """Exact fractional Brownian ``n x p`` matrices started at ``C``.

    The grid covariance is factorised once; every entry of every path gets
    its own independent standard normal vector.
    """
    C = _initial(C, n, p)
    L = _grid_factor(lambda a, b: fbm_cov(hurst, a, b), grid)
    z = _normals(rng, n_paths, n, p, L.shape[0], antithetic)
    return _assemble_paths(C, L, z, grid, first_id)


def rl_kernel_weights(hurst: HurstParams, grid: TimeGrid) -> np.ndarray:
    """Lower-triangular weights ``alpha (t_k - t_j + eps)^(alpha-1)``, j < k.

    Row ``k`` turns the stored Brownian increments into the drift integral of
    the incremental scheme at ``t_k``.
    """
    t = grid.times[:-1]
    lag = t[:, None] - t[None, :]
    W = np.zeros_like(lag)
    mask = lag > 0
    W[mask] = hurst.alpha * (lag[mask] + hurst.eps) ** (hurst.alpha - 1.0)
    return W


def sample_rl_matrix(hurst: HurstParams, grid: TimeGrid, n: int, p: int, C, rng: np.random.Generator,
                     scheme: str = "exact", n_paths: int = 1, first_id: int = 0,
                     antithetic: bool = False) -> PathBatch:
    """Sample ``B^{H,eps}`` started at ``C``.

    ``scheme="exact"`` factorises the quadrature covariance on the grid.
    ``scheme="incremental"`` runs the Euler scheme of the semimartingale
    decomposition ``dB^{H,eps} = drift dt + sqrt(2H) eps^alpha dB``, keeping
    every past increment (no kernel truncation). Both schemes consume the same
    normals in the same layout, so at ``H = 1/2`` they produce the same path.
    """
    C = _initial(C, n, p)
    if scheme == "exact":
        L = _grid_factor(lambda a, b: rl_cov(hurst, a, b), grid)
        z = _normals(rng, n_paths, n, p, L.shape[0], antithetic)
        return _assemble_paths(C, L, z, grid, first_id)
    if scheme != "incremental":
        raise ContractError(f"unknown scheme {scheme!r}")
    if hurst.eps <= 0.0:
        raise ContractError("incremental scheme needs eps > 0 (kernel derivative is singular at eps = 0)")
    dt = grid.dt
    z = _normals(rng, n_paths, n, p, grid.n_steps, antithetic)
    dB = math.sqrt(dt) * z
    root = math.sqrt(2.0 * hurst.H)
    drift = root * (dB @ rl_kernel_weights(hurst, grid).T)
    steps = drift * dt + root * hurst.eps**hurst.alpha * dB
    vals = np.empty((n_paths, len(grid), n, p))
    vals[:, 0] = C
    vals[:, 1:] = C + np.moveaxis(np.cumsum(steps, axis=-1), -1, 1)
    return PathBatch(grid, vals, first_id + np.arange(n_paths))
