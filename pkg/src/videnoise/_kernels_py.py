"""Pure numpy implementations of the hot kernels.

Mirrors the compiled extension exactly: same signatures, dtypes and tie
rules. Buffers are (h, w, m) float64 C-order arrays with the temporal axis
last; patch vectors use flat index ``d*n1*n2 + r*n2 + c``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_BM_CHUNK = 256


def gather_patches(buffer, rows, cols, n1, n2):
    """Extract full-depth patches at (rows, cols) as an (n, K) column block."""
    windows = sliding_window_view(buffer, (n1, n2), axis=(0, 1))
    stack = windows[rows, cols]  # (K, m, n1, n2)
    k = stack.shape[0]
    return np.ascontiguousarray(stack.reshape(k, -1).T)


def gather_bm_patches(buffer, planes, rows, cols, n1, n2):
    """Extract one 2D slice per (plane, row, col) triple; (K, m) index arrays."""
    windows = sliding_window_view(buffer, (n1, n2), axis=(0, 1))
    stack = windows[rows, cols, planes]  # (K, m, n1, n2)
    k = stack.shape[0]
    return np.ascontiguousarray(stack.reshape(k, -1).T)


def deposit_patches(values, weights, planes, rows, cols, patches, wts, n1, n2):
    """Weighted scatter-add of patch slices into the accumulator pair.

    Slot j of patch i lands at plane ``planes[i, j]`` and spatial corner
    ``(rows[i, j], cols[i, j])``; slots with plane < 0 are skipped.
    """
    h, w, m_planes = values.shape
    k, m = planes.shape
    vals = patches.T.reshape(k, m, n1, n2) * wts[:, None, None, None]
    dr = np.arange(n1, dtype=np.int64)
    dc = np.arange(n2, dtype=np.int64)
    flat = (
        (rows[:, :, None, None] + dr[None, None, :, None]) * w
        + cols[:, :, None, None]
        + dc[None, None, None, :]
    ) * m_planes + planes[:, :, None, None]
    keep = (planes >= 0)[:, :, None, None] & np.ones((1, 1, n1, n2), dtype=bool)
    idx = flat[keep]
    size = values.size
    values.ravel()[:] += np.bincount(idx, weights=vals[keep], minlength=size)
    wvals = np.broadcast_to(wts[:, None, None, None], vals.shape)[keep]
    weights.ravel()[:] += np.bincount(idx, weights=wvals, minlength=size)


def block_match(buffer, ref_rows, ref_cols, n1, n2, dr, dc, mid):
    """Exhaustive best match per reference patch and frame depth.

    References live on the middle depth ``mid``. For every other depth the
    candidate positions are all in-frame corners within +-dr rows / +-dc
    columns of the reference corner. Ties resolve by smaller squared
    displacement from the reference, then row-major position. Returns
    (rows, cols, d2), each (K, m); the ``mid`` column is the reference
    itself with distance zero.
    """
    h, w, m = buffer.shape
    k = ref_rows.shape[0]
    out_rows = np.empty((k, m), dtype=np.int64)
    out_cols = np.empty((k, m), dtype=np.int64)
    out_d2 = np.empty((k, m), dtype=np.float64)
    out_rows[:, mid] = ref_rows
    out_cols[:, mid] = ref_cols
    out_d2[:, mid] = 0.0

    windows = sliding_window_view(buffer, (n1, n2), axis=(0, 1))
    off_r = np.arange(-dr, dr + 1, dtype=np.int64)
    off_c = np.arange(-dc, dc + 1, dtype=np.int64)
    for start in range(0, k, _BM_CHUNK):
        sl = slice(start, min(start + _BM_CHUNK, k))
        rr = ref_rows[sl]
        rc = ref_cols[sl]
        refs = windows[rr, rc, mid]  # (kc, n1, n2)
        raw_r = rr[:, None] + off_r[None, :]  # (kc, R)
        raw_c = rc[:, None] + off_c[None, :]
        cand_r = np.clip(raw_r, 0, h - n1)
        cand_c = np.clip(raw_c, 0, w - n2)
        valid = (cand_r == raw_r)[:, :, None] & (cand_c == raw_c)[:, None, :]
        disp2 = (
            (cand_r[:, :, None] - rr[:, None, None]) ** 2
            + (cand_c[:, None, :] - rc[:, None, None]) ** 2
        ).astype(np.float64)
        grid_r = np.broadcast_to(cand_r[:, :, None], disp2.shape)
        grid_c = np.broadcast_to(cand_c[:, None, :], disp2.shape)
        kc, nr, nc = disp2.shape
        for d in range(m):
            if d == mid:
                continue
            cands = windows[cand_r[:, :, None], cand_c[:, None, :], d]
            diff = cands - refs[:, None, None]
            d2 = np.einsum("krcij,krcij->krc", diff, diff)
            d2 = np.where(valid, d2, np.inf)
            order = np.lexsort(
                (
                    grid_c.reshape(kc, -1),
                    grid_r.reshape(kc, -1),
                    disp2.reshape(kc, -1),
                    d2.reshape(kc, -1),
                ),
                axis=-1,
            )[:, 0]
            take = np.arange(kc)
            out_rows[sl, d] = grid_r.reshape(kc, -1)[take, order]
            out_cols[sl, d] = grid_c.reshape(kc, -1)[take, order]
            out_d2[sl, d] = d2.reshape(kc, -1)[take, order]
    return out_rows, out_cols, out_d2
