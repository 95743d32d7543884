"""Estimators read off a stratification result and the losses used to score
them against a known mixture."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .core import LayerDetection, StratificationResult
from .geometry import RANK_TOL
from .samplers import ManifoldSpec, PointCloud, dist_to_manifold, reference_net, tangent_at
from .spatial_index import build


class EmptyLayer(ValueError):
    pass


class MissingLabels(ValueError):
    pass


def extract_structure(res: StratificationResult) -> tuple[int, list]:
    dims = sorted(layer.dim for layer in res.layers if len(layer.tuples) or len(layer.labeled_indices))
    return len(dims), dims


@dataclass
class HullComplex:
    """Union of the convex hulls of a layer's co-detected tuples.

    ``tuples`` index rows of ``points``; per-hull barycenters, extents (largest
    vertex distance to the barycenter) and orthonormal spans are cached.
    """

    points: np.ndarray
    tuples: np.ndarray
    dim: int
    bary: np.ndarray = field(init=False, repr=False)
    ext: np.ndarray = field(init=False, repr=False)
    spans: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        self.tuples = np.ascontiguousarray(self.tuples, dtype=np.int64)
        if self.tuples.ndim != 2 or len(self.tuples) == 0:
            raise EmptyLayer("a hull complex needs at least one tuple")
        verts = self.points[self.tuples]
        self.bary = np.ascontiguousarray(verts.mean(axis=1))
        self.ext = np.sqrt(((verts - self.bary[:, None, :]) ** 2).sum(axis=2)).max(axis=1)
        spans, ok = _kernels.tuple_spans(self.points, self.tuples, RANK_TOL)
        if not ok.all():
            raise ValueError("degenerate tuple in hull complex")
        self.spans = spans
        self._grid = None
        self._tree = None

    @property
    def n_simplices(self) -> int:
        return len(self.tuples)

    @property
    def ext_max(self) -> float:
        return float(self.ext.max())

    def vertices(self, i: int) -> np.ndarray:
        return self.points[self.tuples[i]]

    def _bary_grid(self, radius: float):
        cell = max(self.ext_max + radius, 1e-12)
        if self._grid is None or self._grid.cell_size < cell:
            self._grid = build(self.bary, cell)
        return self._grid

    def _incidence(self):
        """(kd-tree over used vertices, used ids, CSR hull incidence)."""
        if self._tree is None:
            used = np.unique(self.tuples)
            # CSR incidence: vertex -> hulls containing it
            flat = self.tuples.ravel()
            owner = np.repeat(np.arange(len(self.tuples)), self.tuples.shape[1])
            order = np.argsort(flat, kind="stable")
            starts = np.searchsorted(flat[order], used)
            self._tree = (cKDTree(self.points[used]), used, owner[order],
                          np.append(starts, len(order)).astype(np.int64))
        return self._tree

    def _nearest_vertex(self, q):
        tree, _, inc, starts = self._incidence()
        return tree.query(q)[1].astype(np.int64), inc, starts

    def _vertex_upper(self, q, stop: float = -1.0):
        """Upper bound on each query's distance: the distance to the hulls
        incident to its nearest vertex. With ``stop >= 0`` a bound is only
        refined until it reaches ``stop``."""
        nearest, inc, starts = self._nearest_vertex(q)
        return _kernels.incident_upper(self.points, self.tuples, q, nearest, inc, starts, float(stop))

    def dist(self, p, upper=None):
        """dist(p | complex) for a point or rows of points (exact)."""
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        q = np.ascontiguousarray(np.atleast_2d(p))
        if upper is None:
            upper = self._vertex_upper(q)
        g = self._bary_grid(0.0)
        out = _kernels.hull_dist(self.points, self.tuples, self.bary, self.ext, g.cell_size,
                                 g.cell_keys, g.starts, g.order, self.ext_max, q,
                                 np.ascontiguousarray(upper, dtype=float))
        return float(out[0]) if single else out

    def barycentric_samples(self, m: int, center: bool = True):
        """Points of every hull on the barycentric grid of step 1/m (plus the
        barycenter); returns (samples, owner hull index)."""
        return _hull_samples(self.points, self.tuples, m, center)


def _barycentric_grid(k: int, m: int) -> np.ndarray:
    """All weight vectors in the (k-1)-simplex with entries in {0, 1/m, ..., 1}."""
    m = max(1, int(m))
    out = []

    def rec(prefix, left):
        if len(prefix) == k - 1:
            out.append(prefix + [left])
            return
        for a in range(left + 1):
            rec(prefix + [a], left - a)

    rec([], m)
    return np.asarray(out, dtype=float) / m


def _hull_samples(points, tuples, m: int, center: bool = True):
    k = tuples.shape[1]
    w = _barycentric_grid(k, m)
    if center:
        w = np.unique(np.vstack([w, np.full(k, 1 / k)]), axis=0)
    samples = np.einsum("gk,mkd->mgd", w, points[tuples]).reshape(-1, points.shape[1])
    return np.ascontiguousarray(samples), np.repeat(np.arange(len(tuples)), len(w))


def reconstruct_layer(layer: LayerDetection, points) -> HullComplex:
    if layer is None or len(layer.tuples) == 0:
        raise EmptyLayer("layer has no co-detected tuples")
    return HullComplex(np.asarray(points, dtype=float), layer.tuples, layer.dim)


# --- Hausdorff -----------------------------------------------------------------


def _round_center(spec: ManifoldSpec):
    """Center of a round circle or sphere, or None for other kinds."""
    return spec.t if spec.kind in ("circle", "sphere") else None


def project_to_manifold(spec: ManifoldSpec, p):
    """Nearest point of a round circle or sphere (None for other kinds)."""
    if spec.kind not in ("circle", "sphere"):
        return None
    q = (np.atleast_2d(p) - spec.t) @ spec.R
    m = spec.local_dim
    inplane = q[:, :m]
    norm = np.linalg.norm(inplane, axis=1, keepdims=True)
    # the center itself is equidistant to all of the manifold: pick any point
    inplane = np.where(norm > 0, inplane / np.where(norm > 0, norm, 1), np.eye(1, m))
    return spec.embed(inplane)


def _complex_side(spec: ManifoldSpec, cx: HullComplex, resolution: float, chunk: int = 200_000) -> float:
    """sup over the complex of dist(· | M)."""
    c = _round_center(spec)
    if c is not None:
        _, off = spec.to_local(cx.points[np.unique(cx.tuples)])
        if off.max() <= 1e-24:
            # every hull lies in the manifold's own flat: |p - c| - s is
            # convex, so its extremes over a hull are at a vertex or at the
            # point nearest the center
            r = np.linalg.norm(cx.points[cx.tuples] - c, axis=2).max(axis=1)
            near = _kernels.center_to_hulls(cx.points, cx.tuples, np.ascontiguousarray(c, dtype=float))
            return float(max((r - spec.scale).max(), (spec.scale - near).max(), 0.0))
    diam = 2 * cx.ext_max
    w = _barycentric_grid(cx.tuples.shape[1], math.ceil(diam / resolution) if diam > 0 else 1)
    best = 0.0
    step = max(1, chunk // len(w))
    for lo in range(0, len(cx.tuples), step):
        verts = cx.points[cx.tuples[lo: lo + step]]
        pts = np.einsum("gk,mkd->mgd", w, verts).reshape(-1, cx.points.shape[1])
        best = max(best, float(np.max(dist_to_manifold(spec, pts))))
    return best


def hausdorff_layer_error(spec: ManifoldSpec, cx: HullComplex, resolution: float) -> float:
    """d_H(M, complex) up to an additive slack of ``resolution``."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    b = _complex_side(spec, cx, resolution)
    net, _ = reference_net(spec, resolution)
    net = np.ascontiguousarray(net)
    upper = cx._vertex_upper(net, stop=b)
    need = upper > b
    a = 0.0
    if need.any():
        a = float(cx.dist(net[need], upper=upper[need]).max())
    return max(a, b)


# --- clustering ------------------------------------------------------------------


def _true_dims(truth: PointCloud) -> list:
    if truth.specs is None:
        raise MissingLabels("truth carries no manifold specs")
    return [s.dim for s in truth.specs]


def clustering_error(res: StratificationResult, truth: PointCloud) -> dict:
    """#(X̂_k △ X_k) / (N_k ∨ 1) for every true layer k (1-based), with X̂_k
    the labeled set of the detected layer of the same dimension."""
    if truth.true_labels is None:
        raise MissingLabels("truth carries no labels")
    dims = _true_dims(truth)
    out = {}
    for k, d in enumerate(dims, start=1):
        true_set = np.flatnonzero(truth.true_labels == k)
        layer = res.layer(d)
        est = layer.labeled_indices if layer is not None else np.empty(0, dtype=np.int64)
        sym = len(np.setxor1d(est, true_set, assume_unique=True))
        out[k] = sym / max(len(true_set), 1)
    return out


# --- tangents --------------------------------------------------------------------


def tangent_error(spec: ManifoldSpec, cx: HullComplex, delta: float, resolution: float | None = None,
                  subdiv: int = 2) -> float:
    """Symmetrized localized tangent loss at tolerance ``delta``.

    The manifold side uses the reference net at ``resolution`` (default
    delta / 20) with analytic tangents. The complex side samples every hull on
    its barycentric grid of step 1/subdiv plus the barycenter; for round
    circles and spheres the exact foot point joins the net candidates.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    resolution = resolution or delta / 20
    net, net_tan = reference_net(spec, resolution)
    net = np.ascontiguousarray(net)
    net_tan = np.ascontiguousarray(net_tan)
    if spec.dim != cx.dim:
        return 1.0

    sup = 0.0
    gn = build(net, max(delta, resolution))
    # longest hulls first: they carry the largest angles and raise the
    # running sup early, which lets later inner searches stop sooner
    by_size = np.argsort(-cx.ext, kind="stable")
    n_w = len(_barycentric_grid(cx.tuples.shape[1], subdiv)) + 1
    chunk = max(1, 500_000 // n_w)
    for lo in range(0, cx.n_simplices, chunk):
        ids = by_size[lo: lo + chunk]
        samples, owner = _hull_samples(cx.points, cx.tuples[ids], subdiv)
        spans = np.ascontiguousarray(cx.spans[ids[owner]])
        foot = project_to_manifold(spec, samples)
        has_foot = foot is not None
        if has_foot:
            # the sample's own projection and that of its hull's barycenter,
            # whose tangent is close to the hull's span
            foot = np.stack([foot, project_to_manifold(spec, cx.bary[ids[owner]])], axis=1)
            flat = foot.reshape(-1, foot.shape[2])
            foot_tan = tangent_at(spec, flat).reshape(len(samples), 2, cx.dim, -1)
            foot, foot_tan = np.ascontiguousarray(foot), np.ascontiguousarray(foot_tan)
        else:
            foot = np.zeros((len(samples), 1, samples.shape[1]))
            foot_tan = np.zeros((len(samples), 1, cx.dim, samples.shape[1]))
        sup = _kernels.sup_min_angle_to_net(samples, spans, net, net_tan, gn.cell_size, gn.cell_keys,
                                            gn.starts, gn.order, float(delta), foot, foot_tan,
                                            has_foot, sup)
    # manifold side last, so its inner searches start from the complex side's sup
    g = cx._bary_grid(delta)
    first = cKDTree(cx.bary).query(net, k=min(16, cx.n_simplices))[1].reshape(len(net), -1)
    sup = _kernels.sup_min_angle_near(cx.points, cx.tuples, cx.spans, cx.bary, cx.ext, g.cell_size,
                                      g.cell_keys, g.starts, g.order, cx.ext_max, net, net_tan,
                                      float(delta), sup, first.astype(np.int64))
    return float(sup)


# --- dimension sandwich ----------------------------------------------------------


def dimension_label_check(res: StratificationResult, truth: PointCloud, tau_per_layer,
                          n: int | None = None) -> float:
    """Fraction of points with min{d_k : dist(X_i | M_k) <= tau_k (log n/n)^(2/d_k)}
    <= d̂(X_i) <= d_{Y_i}; residual points count as d_max + 1."""
    if truth.true_labels is None:
        raise MissingLabels("truth carries no labels")
    dims = np.asarray(_true_dims(truth))
    tau = np.broadcast_to(np.asarray(tau_per_layer, dtype=float), dims.shape)
    n = n or truth.n
    dhat = res.point_dims()
    upper_ok = dhat <= dims[truth.true_labels - 1]
    lower = np.full(truth.n, np.inf)
    for k, spec in enumerate(truth.specs):
        thr = tau[k] * (math.log(n) / n) ** (2 / dims[k])
        close = np.isinf(tau[k]) | (dist_to_manifold(spec, truth.points) <= thr)
        lower = np.where(close, np.minimum(lower, dims[k]), lower)
    return float(np.mean(upper_ok & (lower <= dhat)))


# --- per-layer report ------------------------------------------------------------


@dataclass
class LayerEvaluation:
    k: int
    dim: int
    hausdorff_error: float
    clustering_error: float
    tangent_error: float
    dims_correct: bool
    delta_used: float
    resolution: float

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("hausdorff_error", "tangent_error"):
            if not math.isfinite(out[key]):
                out[key] = None
        return out


def default_delta(res: StratificationResult, d: int, factor: float = 3.0) -> float:
    p = res.params_used.at(d)
    return factor * p["kappa"] * p["h_par"] ** 2


def evaluate(res: StratificationResult, truth: PointCloud, resolution: float | None = None,
             delta: float | None = None, delta_factor: float = 3.0,
             tangent_resolution: float | None = None) -> list:
    """One :class:`LayerEvaluation` per true layer. A true layer without a
    detected layer of its dimension scores an infinite Hausdorff error and the
    maximal tangent error 1."""
    if truth.specs is None:
        raise MissingLabels("truth carries no manifold specs")
    clus = clustering_error(res, truth)
    _, dims = extract_structure(res)
    dims_ok = dims == sorted(s.dim for s in truth.specs)
    out = []
    for k, spec in enumerate(truth.specs, start=1):
        layer = res.layer(spec.dim)
        d = spec.dim
        dl = delta if delta is not None else (
            default_delta(res, d, delta_factor) if d <= res.params_used.d_max else math.nan)
        if layer is None or len(layer.tuples) == 0:
            out.append(LayerEvaluation(k, d, math.inf, clus[k], 1.0, dims_ok, dl, resolution or math.nan))
            continue
        cx = reconstruct_layer(layer, truth.points)
        # resolve the Hausdorff error well below the hull scale
        res_k = resolution or _auto_resolution(res, spec)
        out.append(LayerEvaluation(k, d, hausdorff_layer_error(spec, cx, res_k), clus[k],
                                   tangent_error(spec, cx, dl, tangent_resolution), dims_ok, dl, res_k))
    return out


MAX_NET_POINTS = 2_000_000


def _auto_resolution(res: StratificationResult, spec: ManifoldSpec) -> float:
    # errors scale like h^2 (sagitta of an r-chord is about kappa r^2 / 8), but
    # never resolve coarser than a thousandth of the layer's own size; the
    # floor keeps the reference net near MAX_NET_POINTS points
    p = res.params_used.at(spec.dim)
    size = spec.volume ** (1 / spec.dim)
    floor = (spec.volume / MAX_NET_POINTS) ** (1 / spec.dim)
    return max(min(p["kappa"] * p["r"] ** 2 / 80, size / 1000), floor)
