"""Tile assignment for the compiled compositing kernels.

Splats arrive depth-sorted; each is duplicated into every tile its pixel
bounding box overlaps.  Because duplicates are generated in splat order and
the sort by tile id is stable, each tile's duplicate list stays depth-sorted,
which is exactly what front-to-back compositing needs.
"""

from __future__ import annotations

import numpy as np


def bin_splats(boxes: np.ndarray, width: int, height: int, tile_size: int = 16):
    """Assign splats to tiles.

    boxes: (M, 4) int32 pixel bounds x0, x1, y0, y1 (half-open, clipped).
    Returns (tile_starts, dup_ids, ntx, nty): tile_starts is (ntx*nty + 1,)
    int64 offsets into dup_ids, which lists splat indices per tile in depth
    order.
    """
    ntx = (width + tile_size - 1) // tile_size
    nty = (height + tile_size - 1) // tile_size
    n_tiles = ntx * nty
    m = boxes.shape[0]
    if m == 0:
        return (np.zeros(n_tiles + 1, dtype=np.int64),
                np.zeros(0, dtype=np.int32), ntx, nty)

    tx0 = boxes[:, 0] // tile_size
    tx1 = (boxes[:, 1] - 1) // tile_size + 1
    ty0 = boxes[:, 2] // tile_size
    ty1 = (boxes[:, 3] - 1) // tile_size + 1
    spans_x = tx1 - tx0
    counts = spans_x * (ty1 - ty0)
    total = int(counts.sum())

    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    splat_of_dup = np.repeat(np.arange(m, dtype=np.int32), counts)
    local = np.arange(total, dtype=np.int64) - np.repeat(offsets, counts)
    sx = np.repeat(spans_x.astype(np.int64), counts)
    tile_x = np.repeat(tx0.astype(np.int64), counts) + local % sx
    tile_y = np.repeat(ty0.astype(np.int64), counts) + local // sx
    tile_id = tile_y * ntx + tile_x

    order = np.argsort(tile_id, kind="stable")
    dup_ids = np.ascontiguousarray(splat_of_dup[order])
    per_tile = np.bincount(tile_id, minlength=n_tiles)
    tile_starts = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(per_tile, out=tile_starts[1:])
    return tile_starts, dup_ids, ntx, nty
