"""3D patch geometry: vectorization, scan order, extraction and deposit.

A buffer is an (h, w, m) array of m stacked frames, oldest at depth 0.
Patches are n1 x n2 x m sub-tensors addressed by the (row, col) of their
spatial corner. Vectorization uses the fixed flat index
``d*n1*n2 + r*n2 + c`` (column fastest, then row, then depth), matching the
row order of the separable 3D DCT in :mod:`videnoise.transform`.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CoverageError, ShapeError


@dataclass(frozen=True)
class PatchGeometry:
    """Patch and frame dimensions shared by the extraction pipeline."""

    n1: int
    n2: int
    m: int
    frame_h: int
    frame_w: int
    spatial_stride: int = 1

    def __post_init__(self):
        if min(self.n1, self.n2, self.m, self.spatial_stride) < 1:
            raise ShapeError("patch dimensions and stride must be positive")
        if self.n1 > self.frame_h or self.n2 > self.frame_w:
            raise ShapeError(
                f"patch {self.n1}x{self.n2} does not fit in frame "
                f"{self.frame_h}x{self.frame_w}"
            )

    @property
    def n(self):
        return self.n1 * self.n2 * self.m

    @property
    def row_positions(self):
        return range(0, self.frame_h - self.n1 + 1, self.spatial_stride)

    @property
    def col_positions(self):
        return range(0, self.frame_w - self.n2 + 1, self.spatial_stride)

    @property
    def patch_count(self):
        return len(self.row_positions) * len(self.col_positions)


def vectorize(tensor):
    """Flatten an (n1, n2, m) patch tensor to a length-n vector."""
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != 3:
        raise ShapeError(f"expected a 3D patch tensor, got shape {tensor.shape}")
    return tensor.transpose(2, 0, 1).reshape(-1).copy()


def tensorize(vector, n1, n2, m):
    """Inverse of :func:`vectorize`."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (n1 * n2 * m,):
        raise ShapeError(f"expected a vector of length {n1 * n2 * m}, got {vector.shape}")
    return vector.reshape(m, n1, n2).transpose(1, 2, 0).copy()


def serpentine_order(geom, time_parity=0):
    """All patch corners in boustrophedon order, as a (P, 2) int array.

    Rows are visited top to bottom; the column direction alternates per row
    so consecutive positions stay spatially adjacent. Odd ``time_parity``
    reverses the whole sequence, so buffers adjacent in time are scanned in
    opposite order.
    """
    rows = np.asarray(list(geom.row_positions), dtype=np.int64)
    cols = np.asarray(list(geom.col_positions), dtype=np.int64)
    out = np.empty((rows.size * cols.size, 2), dtype=np.int64)
    idx = 0
    for i, r in enumerate(rows):
        line = cols if i % 2 == 0 else cols[::-1]
        out[idx : idx + cols.size, 0] = r
        out[idx : idx + cols.size, 1] = line
        idx += cols.size
    if time_parity % 2:
        out = out[::-1].copy()
    return out


def _check_pos(buffer, pos, n1, n2):
    r, c = int(pos[0]), int(pos[1])
    h, w = buffer.shape[:2]
    if not (0 <= r <= h - n1 and 0 <= c <= w - n2):
        raise ShapeError(f"patch at {(r, c)} does not fit inside {h}x{w} frame")
    return r, c


def extract_patch(buffer, pos, n1, n2):
    """Vectorized n1 x n2 x m patch spanning every buffer frame at ``pos``."""
    buffer = np.asarray(buffer, dtype=np.float64)
    r, c = _check_pos(buffer, pos, n1, n2)
    return vectorize(buffer[r : r + n1, c : c + n2, :])


class OutputAccumulator:
    """Aggregation buffer: per-voxel value sums and weight sums.

    Deposits are purely additive; emission divides values by weights on the
    oldest plane, then :meth:`shift` drops that plane and appends a zero one.
    """

    def __init__(self, frame_h, frame_w, m):
        self.values = np.zeros((frame_h, frame_w, m), dtype=np.float64)
        self.weights = np.zeros((frame_h, frame_w, m), dtype=np.float64)

    @property
    def depth(self):
        return self.values.shape[2]

    def shift(self):
        """Evict the oldest plane; value and weight planes move together."""
        self.values[:, :, :-1] = self.values[:, :, 1:]
        self.values[:, :, -1] = 0.0
        self.weights[:, :, :-1] = self.weights[:, :, 1:]
        self.weights[:, :, -1] = 0.0


def deposit_patch(acc, pos, patch, weight):
    """Add ``weight * patch`` (an n1 x n2 x m tensor) at ``pos``, all planes."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[2] != acc.depth:
        raise ShapeError(f"patch shape {patch.shape} incompatible with accumulator")
    n1, n2 = patch.shape[:2]
    r, c = _check_pos(acc.values, pos, n1, n2)
    acc.values[r : r + n1, c : c + n2, :] += weight * patch
    acc.weights[r : r + n1, c : c + n2, :] += weight


def normalize_oldest_frame(acc):
    """Weight-normalized oldest plane; every pixel must have been covered."""
    w = acc.weights[:, :, 0]
    if np.any(w <= 0.0):
        holes = int(np.count_nonzero(w <= 0.0))
        raise CoverageError(
            f"{holes} pixel(s) of the frame being emitted received no deposits"
        )
    return acc.values[:, :, 0] / w


def normalize_all(acc):
    """Weight-normalized copy of every plane (used for buffer-local cleanup)."""
    if np.any(acc.weights <= 0.0):
        holes = int(np.count_nonzero(acc.weights <= 0.0))
        raise CoverageError(f"{holes} voxel(s) received no deposits")
    return acc.values / acc.weights


def gather_minibatch(buffer, positions, n1, n2):
    """Bulk :func:`extract_patch` over a (K, 2) position array -> (n, K)."""
    buffer = np.ascontiguousarray(buffer, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.int64)
    return kernels.gather_patches(
        buffer, np.ascontiguousarray(positions[:, 0]), np.ascontiguousarray(positions[:, 1]), n1, n2
    )
