"""Ascending-dimension co-detection of tuples, pruning by hull proximity and
assembly of the stratification result."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import RANK_TOL, SimplexTuple, make_tuple
from .params import ParamSchedule
from .spatial_index import build

log = logging.getLogger(__name__)

PRACTICAL_TUPLE_CAP = 10_000


@dataclass
class LayerDetection:
    """Output of one dimension step.

    ``tuples`` is an (m, dim+1) integer array of point indices, rows sorted
    lexicographically; ``labeled_indices`` and ``pruned_indices`` are sorted.
    """

    dim: int
    tuples: np.ndarray
    labeled_indices: np.ndarray
    pruned_indices: np.ndarray

    @property
    def n_tuples(self) -> int:
        return len(self.tuples)

    def simplex_tuples(self, points):
        """Yield the co-detected tuples as :class:`SimplexTuple` objects."""
        points = np.asarray(points, dtype=float)
        for row in self.tuples:
            yield make_tuple(row, points[row])


@dataclass
class StratificationResult:
    K_hat: int
    layers: list
    residual_indices: np.ndarray
    params_used: ParamSchedule
    n_points: int
    metadata: dict = field(default_factory=dict)

    @property
    def dims(self) -> list:
        return [layer.dim for layer in self.layers]

    def layer(self, dim: int) -> LayerDetection | None:
        for layer in self.layers:
            if layer.dim == dim:
                return layer
        return None

    def point_dims(self, residual_value: int | None = None) -> np.ndarray:
        """Detected dimension of every point; residual points get
        ``residual_value`` (default d_max + 1)."""
        if residual_value is None:
            residual_value = self.params_used.d_max + 1
        out = np.full(self.n_points, residual_value, dtype=np.int64)
        for layer in self.layers:
            out[layer.labeled_indices] = layer.dim
        return out

    def check_partition(self):
        seen = np.zeros(self.n_points, dtype=np.int64)
        for layer in self.layers:
            seen[layer.labeled_indices] += 1
        seen[self.residual_indices] += 1
        if not np.all(seen == 1):
            raise AssertionError("layers and residual do not partition the sample")
        dims = self.dims
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise AssertionError("layer dimensions are not strictly increasing")


def _anchor_chunks(n: int, threads: int) -> list:
    # many small chunks balance the uneven per-anchor cost
    n_chunks = max(1, min(n, 8 * threads))
    return [c for c in np.array_split(np.arange(n, dtype=np.int64), n_chunks) if len(c)]


def codetect_dimension(active, points, d: int, sched: ParamSchedule, index=None, threads: int = 1,
                       max_tuples_per_anchor: int | None = None, rank_tol: float = RANK_TOL):
    """Co-detected (d+1)-tuples among the ``active`` points.

    Returns ``(tuples, labeled, n_capped)``: tuples as an (m, d+1) array of
    global indices in lexicographic order, the sorted union of their vertices
    and the number of anchors whose enumeration was truncated.
    """
    active = np.asarray(active, dtype=np.int64)
    p = sched.at(d)
    empty = np.empty((0, d + 1), dtype=np.int64)
    if len(active) < d + 1:
        return empty, np.empty(0, dtype=np.int64), 0
    sub = np.ascontiguousarray(points[active])
    g = index if index is not None else build(sub, p["r"])
    cap = int(max_tuples_per_anchor or 0)

    def work(chunk):
        return _kernels.codetect_anchors(
            g.points, g.cell_size, g.cell_keys, g.starts, g.order, chunk, d, p["r"], p["h_par"],
            p["h_perp"], int(p["n_min"]), cap, rank_tol,
        )

    chunks = _anchor_chunks(len(active), threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    local = np.concatenate([t for t, _ in parts]) if parts else empty
    n_capped = int(sum(c for _, c in parts))
    # anchors are the smallest tuple index and chunks ascend, so rows are
    # already lexicographic; sort anyway so the order is never an accident
    tuples = active[local] if len(local) else empty
    if len(tuples):
        tuples = tuples[np.lexsort(tuples.T[::-1])]
    labeled = np.unique(tuples)
    return tuples, labeled, n_capped


def prune_pass(candidates, points, tuples, delta: float, threads: int = 1) -> np.ndarray:
    """Sorted ``candidates`` within closed distance ``delta`` of some tuple's hull."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if len(tuples) == 0 or len(candidates) == 0:
        return np.empty(0, dtype=np.int64)
    points = np.ascontiguousarray(points, dtype=float)
    tuples = np.ascontiguousarray(tuples, dtype=np.int64)
    verts = points[tuples]
    bary = np.ascontiguousarray(verts.mean(axis=1))
    ext = np.sqrt(((verts - bary[:, None, :]) ** 2).sum(axis=2)).max(axis=1)
    ext_max = float(ext.max())
    g = build(bary, max(delta + ext_max, 1e-12))

    def work(chunk):
        return _kernels.prune_candidates(points, tuples, bary, ext, g.cell_size, g.cell_keys,
                                         g.starts, g.order, chunk, float(delta), ext_max)

    chunks = _anchor_chunks(len(candidates), threads)
    chunks = [candidates[c] for c in chunks]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            masks = list(pool.map(work, chunks))
    else:
        masks = [work(c) for c in chunks]
    keep = np.concatenate(masks)
    return np.sort(candidates[keep])


def run(points, sched: ParamSchedule, threads: int = 1, max_tuples_per_anchor: int | None = None,
        seed: int | None = None) -> StratificationResult:
    """Run the full ascending-dimension sieve on ``points`` (an (n, D) array).

    ``max_tuples_per_anchor=None`` enumerates every candidate tuple.
    """
    x = np.ascontiguousarray(np.asarray(points, dtype=float))
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("points must be a nonempty (n, D) array")
    if not np.all(np.isfinite(x)):
        raise ValueError("points must be finite")
    sched.check_ambient(x.shape[1])
    t0 = time.perf_counter()
    active = np.arange(len(x), dtype=np.int64)
    layers = []
    n_capped_total = 0
    d = 0
    while len(active) and d < sched.d_max:
        d += 1
        p = sched.at(d)
        tuples, labeled, n_capped = codetect_dimension(
            active, x, d, sched, threads=threads, max_tuples_per_anchor=max_tuples_per_anchor
        )
        n_capped_total += n_capped
        unlabeled = np.setdiff1d(active, labeled, assume_unique=True)
        pruned = prune_pass(unlabeled, x, tuples, p["delta"], threads=threads)
        labeled_all = np.union1d(labeled, pruned)
        log.debug("d=%d: %d tuples, %d labeled, %d pruned", d, len(tuples), len(labeled), len(pruned))
        if len(labeled_all):
            layers.append(LayerDetection(d, tuples, labeled_all, pruned))
            active = np.setdiff1d(active, labeled_all, assume_unique=True)
    res = StratificationResult(
        K_hat=len(layers),
        layers=layers,
        residual_indices=active,
        params_used=sched,
        n_points=len(x),
        metadata={
            "threads": threads,
            "rng_seed": seed,
            "max_tuples_per_anchor": max_tuples_per_anchor,
            "capped_anchors": n_capped_total,
            "wall_ms": 1000 * (time.perf_counter() - t0),
        },
    )
    res.check_partition()
    return res


def result_to_dict(res: StratificationResult, include_tuples: bool = True) -> dict:
    out = {
        "K_hat": res.K_hat,
        "dims": res.dims,
        "n_points": res.n_points,
        "layers": [],
        "residual_indices": res.residual_indices.tolist(),
        "params_used": res.params_used.to_dict(),
        "metadata": {k: v for k, v in res.metadata.items()},
    }
    for layer in res.layers:
        entry = {
            "dim": layer.dim,
            "n_tuples": layer.n_tuples,
            "labeled_indices": layer.labeled_indices.tolist(),
            "pruned_indices": layer.pruned_indices.tolist(),
        }
        if include_tuples:
            entry["tuples"] = layer.tuples.tolist()
        out["layers"].append(entry)
    return out


def result_from_dict(data: dict) -> StratificationResult:
    from .params import schedule_from_dict

    sched = schedule_from_dict(data["params_used"])
    layers = []
    for entry in data["layers"]:
        d = int(entry["dim"])
        tuples = np.asarray(entry.get("tuples", []), dtype=np.int64).reshape(-1, d + 1)
        layers.append(LayerDetection(
            d, tuples,
            np.asarray(entry["labeled_indices"], dtype=np.int64),
            np.asarray(entry["pruned_indices"], dtype=np.int64),
        ))
    return StratificationResult(
        K_hat=int(data["K_hat"]),
        layers=layers,
        residual_indices=np.asarray(data["residual_indices"], dtype=np.int64),
        params_used=sched,
        n_points=int(data["n_points"]),
        metadata=dict(data.get("metadata", {})),
    )


def simplex_tuple(points, indices) -> SimplexTuple:
    return make_tuple(indices, np.asarray(points, dtype=float)[list(indices)])

