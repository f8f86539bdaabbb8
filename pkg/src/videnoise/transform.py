"""Online mini-batch learning of a square sparsifying transform.

The learner maintains a transform ``w`` (n x n) together with exponentially
weighted accumulators of everything it has seen:

* ``gamma``  - weighted sum of patch outer products ``U @ U.T``
* ``theta``  - weighted sum of patch/code cross products ``U @ X.T``
* ``beta``   - weighted sum of regularizer weights ``lambda0 * ||U||_F^2``

Old mini-batches are discounted by a forgetting factor ``rho`` per step, so
the per-batch work is independent of how much data has streamed past. One
denoising call alternates transform-domain sparse coding (elementwise hard
thresholding of ``w @ u``) with a closed-form transform refresh built from an
SPD square root and a full SVD, then reconstructs the batch as
``w^-1 @ codes``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DegenerateAccumulatorError, NotPositiveDefiniteError, ShapeError, SingularMatrixError

SERIALIZATION_VERSION = 1


def dct_matrix(k):
    """Orthonormal DCT-II matrix of size ``k`` (rows are basis functions)."""
    j = np.arange(k, dtype=np.float64)
    freq = np.arange(k, dtype=np.float64)[:, None]
    mat = np.cos(np.pi * freq * (2.0 * j + 1.0) / (2.0 * k))
    mat[0] *= np.sqrt(1.0 / k)
    mat[1:] *= np.sqrt(2.0 / k)
    return mat


def dct3_transform(n1, n2, m):
    """Separable 3D DCT as one (n1*n2*m)^2 matrix.

    Row order matches the patch vectorization: column index fastest, then
    row, then temporal depth, i.e. flat index ``d*n1*n2 + r*n2 + c``.
    """
    return np.kron(np.kron(dct_matrix(m), dct_matrix(n1)), dct_matrix(n2))


@dataclass
class MiniBatch:
    """A block of vectorized 3D patches with per-patch thresholds.

    ``columns`` is n x M; ``alphas`` holds one threshold per column
    (typically a constant times the current noise level estimate).
    """

    columns: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        self.columns = np.ascontiguousarray(self.columns, dtype=np.float64)
        self.alphas = np.atleast_1d(np.asarray(self.alphas, dtype=np.float64))
        if self.columns.ndim != 2:
            raise ShapeError(f"mini-batch columns must be 2D, got {self.columns.shape}")
        if self.alphas.shape != (self.columns.shape[1],):
            raise ShapeError(
                f"alphas shape {self.alphas.shape} does not match "
                f"{self.columns.shape[1]} columns"
            )
        if np.any(self.alphas < 0):
            raise ValueError("thresholds must be non-negative")


@dataclass
class SparseCodes:
    """Hard-thresholded transform-domain codes for one mini-batch."""

    columns: np.ndarray

    def nonzeros_per_column(self):
        return np.count_nonzero(self.columns, axis=0)


@dataclass
class LearnerState:
    """Transform plus running accumulators for the online update."""

    w: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    beta: float
    rho: float
    lambda0: float
    minibatch_count: int = 0

    @classmethod
    def fresh(cls, n1, n2, m, rho, lambda0):
        """Start from the separable 3D DCT with empty accumulators."""
        n = n1 * n2 * m
        return cls(
            w=dct3_transform(n1, n2, m),
            gamma=np.zeros((n, n)),
            theta=np.zeros((n, n)),
            beta=0.0,
            rho=float(rho),
            lambda0=float(lambda0),
        )

    @classmethod
    def from_transform(cls, w0, rho, lambda0):
        w0 = linalg.as_square(w0, "initial transform")
        n = w0.shape[0]
        return cls(
            w=w0.copy(),
            gamma=np.zeros((n, n)),
            theta=np.zeros((n, n)),
            beta=0.0,
            rho=float(rho),
            lambda0=float(lambda0),
        )

    @property
    def n(self):
        return self.w.shape[0]


def hard_threshold(d, alpha):
    """Zero the entries of ``d`` with magnitude strictly below ``alpha``.

    Entries exactly at the threshold are retained; ``alpha = 0`` passes the
    vector through unchanged.
    """
    d = np.asarray(d, dtype=np.float64)
    return np.where(np.abs(d) >= alpha, d, 0.0)


def _threshold_columns(products, alphas):
    return np.where(np.abs(products) >= alphas[None, :], products, 0.0)


def sparse_code(state, batch):
    """Optimal codes for the batch under the current transform.

    Column ``i`` is the hard threshold of ``w @ u_i`` at ``alphas[i]``, which
    minimizes ``||w u - x||^2 + alpha^2 ||x||_0`` exactly.
    """
    if batch.columns.shape[0] != state.n:
        raise ShapeError(
            f"patch length {batch.columns.shape[0]} does not match transform size {state.n}"
        )
    return SparseCodes(_threshold_columns(state.w @ batch.columns, batch.alphas))


def regularizer_value(w):
    """``-log |det w| + ||w||_F^2``; raises on a singular transform."""
    w = linalg.as_square(w, "transform")
    sign, logabsdet = np.linalg.slogdet(w)
    if sign == 0:
        raise SingularMatrixError("transform is singular (zero determinant)")
    return float(-logabsdet + np.sum(w * w))


def accumulate(state, batch, codes):
    """Fold one mini-batch into the forgetting-factor accumulators.

    ``gamma <- rho*gamma + U U^T``, ``theta <- rho*theta + U X^T`` and
    ``beta <- rho*beta + lambda0 ||U||_F^2``. The codes must have been
    computed against the current ``state.w``.
    """
    u = batch.columns
    x = codes.columns
    if x.shape != u.shape:
        raise ShapeError(f"codes shape {x.shape} does not match batch {u.shape}")
    gamma = state.rho * state.gamma + u @ u.T
    state.gamma = 0.5 * (gamma + gamma.T)
    state.theta = state.rho * state.theta + u @ x.T
    state.beta = state.rho * state.beta + state.lambda0 * float(np.sum(u * u))
    state.minibatch_count += 1
    return state


def transform_update(state):
    """Closed-form refresh of ``w`` from the current accumulators.

    With ``Q Q^T = gamma + beta*I`` and ``Phi S Psi^T`` the full SVD of
    ``Q^-1 theta``, the new transform is
    ``0.5 * Psi (S + (S^2 + 2 beta I)^{1/2}) Phi^T Q^-1``, the global
    minimizer of the accumulated sparsification-plus-regularizer objective.
    Raises :class:`DegenerateAccumulatorError` when the accumulators cannot
    support an update yet (caller should keep the previous transform).
    """
    n = state.n
    if state.beta <= 0.0 and not np.any(state.gamma):
        raise DegenerateAccumulatorError("no data accumulated yet")
    try:
        _, q_inv = linalg.spd_sqrt_and_inverse(state.gamma + state.beta * np.eye(n))
    except NotPositiveDefiniteError as exc:
        raise DegenerateAccumulatorError(str(exc)) from exc
    triple = linalg.full_svd(q_inv @ state.theta)
    gains = triple.singulars + np.sqrt(triple.singulars**2 + 2.0 * state.beta)
    state.w = 0.5 * (triple.right * gains) @ triple.left.T @ q_inv
    return state


def learning_objective(w, gamma, theta, beta):
    """Accumulated objective the closed-form update minimizes.

    ``tr(W (gamma + beta I) W^T) - 2 tr(W theta) - beta log|det W|`` up to a
    data constant. Used by tests as the common yardstick for oracles.
    """
    w = np.asarray(w, dtype=np.float64)
    n = w.shape[0]
    sign, logabsdet = np.linalg.slogdet(w)
    if sign == 0:
        return np.inf
    quad = float(np.sum((w @ (gamma + beta * np.eye(n))) * w))
    return quad - 2.0 * float(np.sum(w * theta.T)) - beta * float(logabsdet)


def denoise_minibatch(state, batch, update=True, alternations=1):
    """Denoise one mini-batch and advance the learner.

    Runs sparse coding with the current transform, folds the batch into the
    accumulators, refreshes the transform in closed form, re-codes with the
    refreshed transform, and reconstructs ``w^-1 @ codes``. With
    ``update=False`` the transform is left untouched (fixed-transform
    operation). A degenerate accumulator skips the refresh and reconstructs
    with the previous transform.

    Returns ``(denoised, codes, state)``.
    """
    codes = sparse_code(state, batch)
    if update:
        accumulate(state, batch, codes)
        try:
            transform_update(state)
        except DegenerateAccumulatorError:
            pass
        else:
            refreshed = sparse_code(state, batch)
            for _ in range(alternations - 1):
                # extra alternations swap the batch's code term, they do not
                # fold the batch into gamma/beta a second time
                state.theta += batch.columns @ (refreshed.columns - codes.columns).T
                codes = refreshed
                transform_update(state)
                refreshed = sparse_code(state, batch)
            codes = refreshed
    w_inv = linalg.invert(state.w)
    denoised = w_inv @ codes.columns
    return denoised, codes, state


def save_learner_state(state, path):
    """Write the learner to ``path`` as a versioned ``.npz`` container.

    Keys: ``version``, ``rho``, ``lambda0``, ``beta``, ``minibatch_count``
    (scalars) and ``w``, ``gamma``, ``theta`` (n x n float64, C order).
    """
    np.savez(
        path,
        version=np.int64(SERIALIZATION_VERSION),
        rho=np.float64(state.rho),
        lambda0=np.float64(state.lambda0),
        beta=np.float64(state.beta),
        minibatch_count=np.int64(state.minibatch_count),
        w=state.w,
        gamma=state.gamma,
        theta=state.theta,
    )


def load_learner_state(path):
    """Inverse of :func:`save_learner_state`."""
    with np.load(path) as data:
        version = int(data["version"])
        if version != SERIALIZATION_VERSION:
            raise ValueError(f"unsupported learner container version {version}")
        return LearnerState(
            w=np.ascontiguousarray(data["w"], dtype=np.float64),
            gamma=np.ascontiguousarray(data["gamma"], dtype=np.float64),
            theta=np.ascontiguousarray(data["theta"], dtype=np.float64),
            beta=float(data["beta"]),
            rho=float(data["rho"]),
            lambda0=float(data["lambda0"]),
            minibatch_count=int(data["minibatch_count"]),
        )
