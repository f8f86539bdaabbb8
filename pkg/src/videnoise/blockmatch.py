"""Motion-compensated patch formation by exhaustive block matching.

Each 3D patch is assembled from one 2D patch per buffer frame: the reference
patch on the middle frame plus, for every other frame, the in-window patch
closest to it in Euclidean distance. The matched coordinates are recorded so
denoised slices can be deposited back where they came from.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError


@dataclass
class BmRecord:
    """Matched coordinates for one 3D patch.

    ``slots`` are ordered: slot 0 is the reference patch (middle frame,
    distance 0); the rest ascend by match distance, with ties broken by
    smaller squared displacement from the reference, then scan order, then
    frame depth. Arrays all have length m.
    """

    ref_pos: tuple
    depths: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    distances: np.ndarray


def _slot_order(mid, rows, cols, d2, ref_rows, ref_cols):
    """Slot permutation for (K, m) match arrays; returns (K, m) depth indices."""
    k, m = rows.shape
    depths = np.broadcast_to(np.arange(m, dtype=np.int64), (k, m))
    disp2 = (rows - ref_rows[:, None]) ** 2 + (cols - ref_cols[:, None]) ** 2
    order = np.lexsort((depths, cols, rows, disp2, d2), axis=-1)
    # drop the mid column from the sorted order, then put the reference first
    slot_depths = np.empty((k, m), dtype=np.int64)
    slot_depths[:, 0] = mid
    rest = order[order != mid].reshape(k, m - 1)
    slot_depths[:, 1:] = rest
    return slot_depths


def match_positions(buffer, positions, n1, n2, h1, h2):
    """Block-match every reference position; bulk form of :func:`block_match`.

    Returns ``(depths, rows, cols, distances)``, each (K, m), already in slot
    order (reference first, then ascending distance).
    """
    buffer = np.ascontiguousarray(buffer, dtype=np.float64)
    h, w, m = buffer.shape
    if m % 2 == 0:
        raise ShapeError("block matching needs an odd temporal depth")
    if h1 < n1 or h2 < n2:
        raise ShapeError(f"search window {h1}x{h2} smaller than patch {n1}x{n2}")
    mid = (m - 1) // 2
    dr = (h1 - n1) // 2
    dc = (h2 - n2) // 2
    positions = np.asarray(positions, dtype=np.int64)
    ref_rows = np.ascontiguousarray(positions[:, 0])
    ref_cols = np.ascontiguousarray(positions[:, 1])
    rows, cols, d2 = kernels.block_match(buffer, ref_rows, ref_cols, n1, n2, dr, dc, mid)
    # squared distances come back from the kernel; record Euclidean distances
    slot_depths = _slot_order(mid, rows, cols, d2, ref_rows, ref_cols)
    take = np.arange(rows.shape[0])[:, None]
    slot_rows = rows[take, slot_depths]
    slot_cols = cols[take, slot_depths]
    slot_dist = np.sqrt(d2[take, slot_depths])
    return slot_depths, slot_rows, slot_cols, slot_dist


def block_match(buffer, ref_pos, n1, n2, h1, h2):
    """Match one reference patch across the buffer; returns a :class:`BmRecord`."""
    positions = np.asarray([ref_pos], dtype=np.int64)
    depths, rows, cols, dists = match_positions(buffer, positions, n1, n2, h1, h2)
    return BmRecord(
        ref_pos=(int(ref_pos[0]), int(ref_pos[1])),
        depths=depths[0],
        rows=rows[0],
        cols=cols[0],
        distances=dists[0],
    )


def form_bm_patch(buffer, rec, n1, n2):
    """Stack the recorded 2D patches in slot order and vectorize.

    Slot order (reference first, then ascending distance) is the stacking
    order, not chronological frame order.
    """
    buffer = np.ascontiguousarray(buffer, dtype=np.float64)
    column = kernels.gather_bm_patches(
        buffer, rec.depths[None, :], rec.rows[None, :], rec.cols[None, :], n1, n2
    )
    return column[:, 0]


def deposit_bm(acc, rec, patch, weight):
    """Add each slice of ``patch`` at its recorded frame and position.

    ``patch`` is an n1 x n2 x m tensor whose depth axis follows slot order;
    slice j lands on plane ``rec.depths[j]``.
    """
    patch = np.asarray(patch, dtype=np.float64)
    n1, n2 = patch.shape[:2]
    for j in range(patch.shape[2]):
        r, c, d = int(rec.rows[j]), int(rec.cols[j]), int(rec.depths[j])
        acc.values[r : r + n1, c : c + n2, d] += weight * patch[:, :, j]
        acc.weights[r : r + n1, c : c + n2, d] += weight


def patch_weight(codes_column):
    """Aggregation weight ``1 / (1 + nnz)``: sparser codes weigh more."""
    return 1.0 / (1.0 + np.count_nonzero(codes_column))


def batch_weights(code_columns):
    """Per-column :func:`patch_weight` for an (n, K) code block."""
    return 1.0 / (1.0 + np.count_nonzero(code_columns, axis=0).astype(np.float64))
