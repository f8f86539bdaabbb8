"""Dense matrix kernels used by the transform learner.

All routines take and return square float64 numpy arrays in C (row-major)
order and are deterministic wrappers around LAPACK via numpy. The learner
needs three things for matrices of a few hundred rows: a symmetric
positive-definite square root, a full SVD with a fixed sign convention,
and inversion guarded by a condition cap.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    NotPositiveDefiniteError,
    ShapeError,
    SingularMatrixError,
    SvdConvergenceError,
)

DEFAULT_CONDITION_CAP = 1e12

_SYMMETRY_RTOL = 1e-10


def as_square(a, name="matrix"):
    """Validate and return ``a`` as a finite square float64 array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def spd_sqrt_and_inverse(a):
    """Return ``(q, q_inv)`` for SPD ``a`` with ``q @ q.T == a``.

    ``q`` is the symmetric eigendecomposition root, so one eigendecomposition
    yields the root and its inverse together. Raises
    :class:`NotPositiveDefiniteError` when ``a`` has a non-positive eigenvalue,
    which signals degenerate accumulators upstream.
    """
    a = as_square(a)
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > _SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    evals, evecs = np.linalg.eigh(a)
    if evals[0] <= 0 or evals[0] < 1e-14 * max(evals[-1], 0.0):
        raise NotPositiveDefiniteError(
            f"matrix is not positive-definite (min eigenvalue {evals[0]:.3e})"
        )
    roots = np.sqrt(evals)
    q = (evecs * roots) @ evecs.T
    q_inv = (evecs / roots) @ evecs.T
    # enforce exact symmetry so downstream results are reproducible
    q = 0.5 * (q + q.T)
    q_inv = 0.5 * (q_inv + q_inv.T)
    return q, q_inv


def symmetric_psd_sqrt(a):
    """Symmetric square root ``q`` of an SPD matrix, with ``q @ q.T == a``."""
    q, _ = spd_sqrt_and_inverse(a)
    return q


@dataclass
class SvdTriple:
    """Full SVD ``a = left @ diag(singulars) @ right.T``.

    ``left`` and ``right`` are orthogonal; ``singulars`` is descending and
    non-negative. Signs are canonicalized so the first significant entry of
    each left singular vector is non-negative, making the factorization
    reproducible run to run.
    """

    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    def reconstruct(self):
        return (self.left * self.singulars) @ self.right.T


def full_svd(a):
    """Full SVD of a square matrix with the canonical sign convention."""
    a = as_square(a)
    try:
        u, s, vh = np.linalg.svd(a)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(
            f"SVD failed to converge for {a.shape[0]}x{a.shape[1]} matrix "
            f"(max |entry| {np.abs(a).max():.3e}): {exc}"
        ) from exc
    v = vh.T
    n = a.shape[0]
    for k in range(n):
        col = u[:, k]
        peak = np.abs(col).max()
        if peak == 0.0:
            continue
        lead = col[np.abs(col) > 1e-12 * peak][0]
        if lead < 0:
            u[:, k] = -u[:, k]
            v[:, k] = -v[:, k]
    return SvdTriple(left=u, singulars=s, right=v)


def condition_number(a):
    """2-norm condition number; ``inf`` for singular input."""
    s = np.linalg.svd(as_square(a), compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


def invert(a, condition_cap=DEFAULT_CONDITION_CAP):
    """Inverse of ``a``, refused when the condition number exceeds the cap."""
    a = as_square(a)
    cond = condition_number(a)
    if not np.isfinite(cond) or cond > condition_cap:
        raise SingularMatrixError(
            f"matrix is singular or ill-conditioned (cond {cond:.3e}, cap {condition_cap:.1e})"
        )
    return np.linalg.inv(a)
