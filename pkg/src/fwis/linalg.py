"""Small dense symmetric-matrix kernel.

Every routine accepts a single ``(p, p)`` matrix or a stack ``(..., p, p)``
and works on the trailing two axes, so the samplers can push a whole block of
Monte Carlo paths through one call.

Eigendecompositions use cyclic Jacobi rotations applied to the whole stack at
once. For ``p == 2`` a single rotation is exact, which is the hot path of the
SPDE schemes. Above ``JACOBI_MAX_DIM`` LAPACK is used instead.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConeError, ContractError, NumericError

JACOBI_MAX_DIM = 8
SYM_RTOL = 1e-10
CLAMP_RTOL = 1e-12


def frobenius(A) -> np.ndarray:
    """Frobenius norm over the trailing two axes."""
    A = np.asarray(A, dtype=float)
    return np.sqrt(np.sum(A * A, axis=(-2, -1)))


def symmetrize(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def check_symmetric(A, rtol: float = SYM_RTOL) -> np.ndarray:
    """Return ``A`` as a float array, raising ``ContractError`` if it is not
    square-symmetric to within ``rtol * (1 + |A|)``."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2] or A.shape[-1] < 1:
        raise ContractError(f"expected square matrices, got shape {A.shape}")
    asym = frobenius(A - np.swapaxes(A, -1, -2))
    bad = asym > rtol * (1.0 + frobenius(A))
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise ContractError(f"matrix is not symmetric (asymmetry {np.max(asym):.3e} at batch index {tuple(idx)})")
    return A


def _jacobi_eigh(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    p = A.shape[-1]
    batch = A.shape[:-2]
    A = A.reshape((-1, p, p)).copy()
    V = np.broadcast_to(np.eye(p), A.shape).copy()
    pairs = [(i, j) for i in range(p - 1) for j in range(i + 1, p)]
    scale = frobenius(A)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2, axis=(-2, -1)))
        if np.all(off <= tol * scale):
            break
        for i, j in pairs:
            aii = A[:, i, i]
            ajj = A[:, j, j]
            aij = A[:, i, j]
            nz = aij != 0.0
            safe = np.where(nz, aij, 1.0)
            theta = (ajj - aii) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(nz, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            c2 = c[:, None]
            s2 = s[:, None]
            Ai = A[:, :, i].copy()
            Aj = A[:, :, j]
            A[:, :, i] = c2 * Ai - s2 * Aj
            A[:, :, j] = s2 * Ai + c2 * Aj
            Ai = A[:, i, :].copy()
            Aj = A[:, j, :]
            A[:, i, :] = c2 * Ai - s2 * Aj
            A[:, j, :] = s2 * Ai + c2 * Aj
            A[:, i, j] = 0.0
            A[:, j, i] = 0.0
            Vi = V[:, :, i].copy()
            Vj = V[:, :, j]
            V[:, :, i] = c2 * Vi - s2 * Vj
            V[:, :, j] = s2 * Vi + c2 * Vj
    else:
        raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps; worst matrix:\n"
                           f"{A[np.argmax(off)]}")
    w = np.diagonal(A, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    return w.reshape(batch + (p,)), V.reshape(batch + (p, p))


def sym_eigh(A):
    """Eigenvalues (ascending) and orthonormal eigenvectors of symmetric ``A``."""
    A = np.asarray(A, dtype=float)
    p = A.shape[-1]
    if p == 1:
        return A[..., 0].copy(), np.ones_like(A)
    if p <= JACOBI_MAX_DIM:
        return _jacobi_eigh(A)
    try:
        return np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}\n{A}") from exc


def _assemble(V, w):
    return (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)


def sym_sqrt(A, check: bool = True) -> np.ndarray:
    """Symmetric PSD square root ``R`` with ``R @ R == A``.

    Negative eigenvalues (round-off on the cone boundary) are clamped to 0.
    """
    if check:
        A = check_symmetric(A)
    A = symmetrize(A)
    w, V = sym_eigh(A)
    return symmetrize(_assemble(V, np.sqrt(np.maximum(w, 0.0))))


class Projection(NamedTuple):
    matrix: np.ndarray
    clamped: np.ndarray  # bool per matrix in the stack
    min_eig: np.ndarray  # before clamping


def default_floor(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    p = A.shape[-1]
    return CLAMP_RTOL * np.maximum(np.trace(A, axis1=-2, axis2=-1), 0.0) / p


def psd_project(A, floor=None, check: bool = True) -> Projection:
    """Clamp the spectrum of ``A`` from below at ``floor``.

    Matrices whose smallest eigenvalue is already ``>= floor`` are returned
    bitwise unchanged.
    """
    if check:
        A = check_symmetric(A)
    A = np.asarray(A, dtype=float)
    S = symmetrize(A)
    floor = default_floor(S) if floor is None else np.asarray(floor, dtype=float)
    if np.any(floor < 0):
        raise ContractError("floor must be non-negative")
    w, V = sym_eigh(S)
    min_eig = w[..., 0]
    clamped = min_eig < floor
    if not np.any(clamped):
        return Projection(A.copy(), clamped, min_eig)
    fixed = symmetrize(_assemble(V, np.maximum(w, np.asarray(floor)[..., None])))
    out = np.where(clamped[..., None, None], fixed, A)
    return Projection(out, clamped, min_eig)


def project_and_sqrt(A, floor=None):
    """Project onto the cone and return ``(projected, sqrt, clamped)``.

    One eigendecomposition serves both results; this is the per-step kernel of
    the Euler schemes.
    """
    S = symmetrize(A)
    floor = default_floor(S) if floor is None else np.asarray(floor, dtype=float)
    if S.shape[-1] == 2:
        return _project_and_sqrt_2x2(S, floor)
    w, V = sym_eigh(S)
    clamped = w[..., 0] < floor
    w = np.maximum(w, np.asarray(floor)[..., None])
    if np.any(clamped):
        S = np.where(clamped[..., None, None], symmetrize(_assemble(V, w)), S)
    R = symmetrize(_assemble(V, np.sqrt(w)))
    return S, R, clamped


def _project_and_sqrt_2x2(S, floor):
    # closed form: R = (S + sqrt(det) I) / sqrt(tr + 2 sqrt(det)) for PSD 2x2 S
    a, b, d = S[..., 0, 0], S[..., 0, 1], S[..., 1, 1]
    mid = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    lo, hi = mid - rad, mid + rad
    clamped = lo < floor
    s = np.sqrt(np.maximum(lo * hi, 0.0))
    tau = np.sqrt(np.maximum(a + d + 2.0 * s, np.finfo(float).tiny))
    R = S.copy()
    R[..., 0, 0] += s
    R[..., 1, 1] += s
    R /= tau[..., None, None]
    if np.any(clamped):
        idx = np.nonzero(clamped)
        fl = np.broadcast_to(floor, clamped.shape)[idx]
        w, V = _jacobi_eigh(S[idx])
        w = np.maximum(w, fl[:, None])
        S = S.copy()
        S[idx] = symmetrize(_assemble(V, w))
        R[idx] = symmetrize(_assemble(V, np.sqrt(w)))
    return S, R, clamped


def _first_failing_minor(A: np.ndarray) -> int:
    lo, hi = 0, A.shape[-1]  # minor lo is fine, minor hi fails
    while hi - lo > 1:
        mid = (lo + hi) // 2
        try:
            np.linalg.cholesky(A[:mid, :mid])
            lo = mid
        except np.linalg.LinAlgError:
            hi = mid
    return hi


def cholesky(A) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == A`` for strictly PD ``A``."""
    A = check_symmetric(A)
    A = symmetrize(A)
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    if A.ndim != 2:
        for idx in np.ndindex(A.shape[:-2]):
            cholesky(A[idx])
    k = _first_failing_minor(A)
    raise ConeError(f"matrix is not positive definite: leading minor of order {k} fails", minor=k)


def logdet_pd(A) -> np.ndarray:
    """``log det A`` through a Cholesky factor."""
    L = cholesky(A)
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def etr(A) -> np.ndarray:
    """``exp(trace(A))`` over the trailing axes."""
    return np.exp(np.trace(np.asarray(A, dtype=float), axis1=-2, axis2=-1))
