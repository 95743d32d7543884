"""Uniform-grid spatial hashing for closed-ball radius queries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np


class InvalidCellSize(ValueError):
    pass


@dataclass(frozen=True)
class GridIndex:
    """Points bucketed by ``floor(coords / cell_size)``.

    Storage is CSR-like: ``order`` lists point indices grouped by cell, the
    occupied cell keys are lexicographically sorted in ``cell_keys`` and cell
    ``i`` owns ``order[starts[i]:starts[i + 1]]``.
    """

    points: np.ndarray
    cell_size: float
    cell_keys: np.ndarray
    starts: np.ndarray
    order: np.ndarray
    bounds: tuple = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def cells(self) -> dict:
        """Mapping from integer cell key to the (ascending) point indices it holds."""
        return {
            tuple(int(k) for k in key): self.order[self.starts[i] : self.starts[i + 1]].tolist()
            for i, key in enumerate(self.cell_keys)
        }


def build(points, cell_size: float) -> GridIndex:
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if pts.shape[0] == 0:
        raise ValueError("cannot index an empty point set")
    if not (np.isfinite(cell_size) and cell_size > 0):
        raise InvalidCellSize(f"cell_size must be positive and finite, got {cell_size!r}")
    keys = np.floor(pts / cell_size).astype(np.int64)
    # lexsort uses the last key as primary: reverse the columns, then break ties by index
    order = np.lexsort((np.arange(len(pts)),) + tuple(keys[:, ::-1].T)).astype(np.int64)
    sorted_keys = keys[order]
    new_cell = np.ones(len(order), dtype=bool)
    new_cell[1:] = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    first = np.flatnonzero(new_cell)
    starts = np.append(first, len(order)).astype(np.int64)
    bounds = (pts.min(axis=0), pts.max(axis=0))
    return GridIndex(pts, float(cell_size), np.ascontiguousarray(sorted_keys[first]), starts, order, bounds)


def neighbors_within(g: GridIndex, p, r: float) -> np.ndarray:
    """Sorted indices of the indexed points with ``||x_i - p|| <= r``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    p = np.asarray(p, dtype=float)
    out = query_ball(g.points, g.cell_size, g.cell_keys, g.starts, g.order, p, float(r))
    out.sort()
    return out


@nb.njit(cache=True, nogil=True)
def _key_cmp(keys, i, key):
    for j in range(key.shape[0]):
        if keys[i, j] < key[j]:
            return -1
        if keys[i, j] > key[j]:
            return 1
    return 0


@nb.njit(cache=True, nogil=True)
def find_cell(keys, key):
    """Row of ``key`` in the lexicographically sorted ``keys``, or -1."""
    lo, hi = 0, keys.shape[0] - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        c = _key_cmp(keys, mid, key)
        if c == 0:
            return mid
        if c < 0:
            lo = mid + 1
        else:
            hi = mid - 1
    return -1


@nb.njit(cache=True, nogil=True)
def query_ball(points, cell_size, keys, starts, order, p, r):
    """Unsorted indices of points within closed distance ``r`` of ``p``."""
    dim = points.shape[1]
    lo = np.empty(dim, np.int64)
    hi = np.empty(dim, np.int64)
    n_box = 1.0
    for j in range(dim):
        lo[j] = math.floor((p[j] - r) / cell_size)
        hi[j] = math.floor((p[j] + r) / cell_size)
        n_box *= hi[j] - lo[j] + 1
    buf = np.empty(16, np.int64)
    n_out = 0
    if n_box <= keys.shape[0]:
        cur = lo.copy()
        while True:
            c = find_cell(keys, cur)
            if c >= 0:
                for t in range(starts[c], starts[c + 1]):
                    i = order[t]
                    d2 = 0.0
                    for j in range(dim):
                        diff = points[i, j] - p[j]
                        d2 += diff * diff
                    if math.sqrt(d2) <= r:
                        if n_out == buf.shape[0]:
                            buf = _grow(buf)
                        buf[n_out] = i
                        n_out += 1
            # odometer over the box of cells
            j = dim - 1
            while j >= 0:
                cur[j] += 1
                if cur[j] <= hi[j]:
                    break
                cur[j] = lo[j]
                j -= 1
            if j < 0:
                break
    else:
        # query box larger than the occupied grid: scan occupied cells instead
        for c in range(keys.shape[0]):
            inside = True
            for j in range(dim):
                if keys[c, j] < lo[j] or keys[c, j] > hi[j]:
                    inside = False
                    break
            if not inside:
                continue
            for t in range(starts[c], starts[c + 1]):
                i = order[t]
                d2 = 0.0
                for j in range(dim):
                    diff = points[i, j] - p[j]
                    d2 += diff * diff
                if math.sqrt(d2) <= r:
                    if n_out == buf.shape[0]:
                        buf = _grow(buf)
                    buf[n_out] = i
                    n_out += 1
    return buf[:n_out].copy()


@nb.njit(cache=True, nogil=True)
def _grow(buf):
    new = np.empty(2 * buf.shape[0], buf.dtype)
    new[: buf.shape[0]] = buf
    return new
