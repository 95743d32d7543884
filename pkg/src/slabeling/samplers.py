"""Synthetic compact manifolds and their mixtures, with analytic tangents.

Each manifold kind lives in a few local coordinates; a :class:`ManifoldSpec`
places it in R^D via ``x = rotation @ pad(scale * local) + translation``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

KINDS = ("circle", "sphere", "torus", "figure_eight", "embedded_flat_circle_product", "segment")


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str
    dim: int
    ambient: int
    scale: float = 1.0
    translation: tuple | None = None
    rotation: tuple | None = None
    minor: float = 0.25  # torus tube radius, relative to scale

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        expected = {"circle": 1, "torus": 2, "figure_eight": 1, "embedded_flat_circle_product": 2,
                    "segment": 1}.get(self.kind, self.dim)
        if self.dim != expected or self.dim < 1:
            raise ValueError(f"{self.kind} has dimension {expected}, got {self.dim}")
        if self.local_dim > self.ambient:
            raise ValueError(f"{self.kind} of dim {self.dim} needs ambient >= {self.local_dim}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "torus" and not 0 < self.minor < 1:
            raise ValueError("torus minor radius must lie in (0, 1) relative to the major one")

    @property
    def local_dim(self) -> int:
        return {"circle": 2, "torus": 3, "figure_eight": 2, "embedded_flat_circle_product": 4,
                "segment": 1}.get(self.kind, self.dim + 1)

    @property
    def R(self) -> np.ndarray:
        if self.rotation is None:
            return np.eye(self.ambient)
        return np.asarray(self.rotation, dtype=float)

    @property
    def t(self) -> np.ndarray:
        if self.translation is None:
            return np.zeros(self.ambient)
        return np.asarray(self.translation, dtype=float)

    @property
    def kappa(self) -> float:
        """Largest curvature of the placed manifold."""
        if self.kind in ("circle", "sphere"):
            return 1 / self.scale
        if self.kind == "torus":
            return 1 / (self.minor * self.scale)
        if self.kind == "embedded_flat_circle_product":
            # each unit circle factor, the product sits on a sphere of radius sqrt(2)
            return 1 / self.scale
        if self.kind == "figure_eight":
            return _gerono_table()[3] / self.scale
        return 0.0

    @property
    def volume(self) -> float:
        s = self.scale
        if self.kind == "circle":
            return 2 * math.pi * s
        if self.kind == "sphere":
            k = self.dim
            return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2) * s**k
        if self.kind == "torus":
            return 4 * math.pi**2 * s * (self.minor * s)
        if self.kind == "embedded_flat_circle_product":
            return (2 * math.pi * s) ** 2
        if self.kind == "figure_eight":
            return _gerono_table()[2] * s
        return s

    def embed(self, local: np.ndarray) -> np.ndarray:
        local = np.atleast_2d(local)
        pad = np.zeros((len(local), self.ambient))
        pad[:, : local.shape[1]] = self.scale * local
        return pad @ self.R.T + self.t

    def embed_tangents(self, local_t: np.ndarray) -> np.ndarray:
        """(n, d, local_dim) orthonormal local tangents -> (n, d, D)."""
        n, d, m = local_t.shape
        pad = np.zeros((n, d, self.ambient))
        pad[:, :, :m] = local_t
        return pad @ self.R.T

    def to_local(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unscaled local coordinates of ``p`` and the squared norm of its
        component off the local coordinate span."""
        q = (np.atleast_2d(p) - self.t) @ self.R
        m = self.local_dim
        off = (q[:, m:] ** 2).sum(axis=1)
        return q[:, :m] / self.scale, off

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "ambient": self.ambient, "scale": self.scale,
               "translation": None if self.translation is None else list(map(float, self.translation)),
               "rotation": None if self.rotation is None else np.asarray(self.rotation).tolist()}
        if self.kind == "torus":
            out["minor"] = self.minor
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ManifoldSpec":
        data = dict(data)
        if data.get("translation") is not None:
            data["translation"] = tuple(data["translation"])
        if data.get("rotation") is not None:
            data["rotation"] = tuple(tuple(r) for r in data["rotation"])
        return cls(**data)


def circle(ambient=2, scale=1.0, **kw) -> ManifoldSpec:
    return ManifoldSpec("circle", 1, ambient, scale, **kw)


def sphere(dim=2, ambient=3, scale=1.0, **kw) -> ManifoldSpec:
    return ManifoldSpec("sphere", dim, ambient, scale, **kw)


def torus(ambient=3, scale=1.0, minor=0.25, **kw) -> ManifoldSpec:
    return ManifoldSpec("torus", 2, ambient, scale, minor=minor, **kw)


def figure_eight(kappa=1.0, ambient=2, **kw) -> ManifoldSpec:
    """Lemniscate of Gerono scaled so that its largest curvature is ``kappa``."""
    return ManifoldSpec("figure_eight", 1, ambient, _gerono_table()[3] / kappa, **kw)


def flat_torus(ambient=4, scale=1.0, **kw) -> ManifoldSpec:
    return ManifoldSpec("embedded_flat_circle_product", 2, ambient, scale, **kw)


def segment(ambient=2, scale=1.0, **kw) -> ManifoldSpec:
    return ManifoldSpec("segment", 1, ambient, scale, **kw)


@dataclass
class PointCloud:
    points: np.ndarray
    true_labels: np.ndarray | None = None
    true_tangents: list | None = None
    specs: list | None = None
    seed: int | None = None
    weights: list | None = field(default=None)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        n = len(self.points)
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if len(self.true_labels) != n:
                raise ValueError("labels and points differ in length")
            if self.specs is not None and len(self.true_labels) and (
                    self.true_labels.min() < 1 or self.true_labels.max() > len(self.specs)):
                raise ValueError("labels must lie in 1..K")
        if self.true_tangents is not None and len(self.true_tangents) != n:
            raise ValueError("tangents and points differ in length")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def ambient(self) -> int:
        return self.points.shape[1]


# --- Gerono lemniscate: x = cos t, y = sin t cos t -------------------------


def _gerono(t):
    return np.stack([np.cos(t), np.sin(t) * np.cos(t)], axis=-1)


def _gerono_d1(t):
    return np.stack([-np.sin(t), np.cos(2 * t)], axis=-1)


@lru_cache(maxsize=1)
def _gerono_table(m: int = 200_001):
    t = np.linspace(0, 2 * np.pi, m)
    speed = np.linalg.norm(_gerono_d1(t), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
    x1, y1 = -np.sin(t), np.cos(2 * t)
    x2, y2 = -np.cos(t), -2 * np.sin(2 * t)
    curv = np.abs(x1 * y2 - y1 * x2) / speed**3
    return t, arc, float(arc[-1]), float(curv.max())


def _gerono_at_arclength(s):
    t, arc, _, _ = _gerono_table()
    return np.interp(s, arc, t)


# --- local samplers: (local coords, local tangent bases) -------------------


def _householder_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal bases of u^perp for unit rows u, shape (n, m-1, m)."""
    n, m = u.shape
    e0 = np.zeros(m)
    e0[0] = 1.0
    sign = np.where(u[:, 0] > 0, -1.0, 1.0)
    v = u - sign[:, None] * e0
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    h = np.eye(m)[None] - 2 * v[:, :, None] * v[:, None, :]
    # H maps u to +-e0, so its remaining columns span u^perp
    return np.transpose(h[:, :, 1:], (0, 2, 1))


def _local_circle(theta):
    pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    tan = np.stack([-np.sin(theta), np.cos(theta)], axis=1)[:, None, :]
    return pts, tan


def _local_torus(u, v, minor):
    rr = 1 + minor * np.cos(v)
    pts = np.stack([rr * np.cos(u), rr * np.sin(u), minor * np.sin(v)], axis=1)
    tu = np.stack([-np.sin(u), np.cos(u), np.zeros_like(u)], axis=1)
    tv = np.stack([-np.sin(v) * np.cos(u), -np.sin(v) * np.sin(u), np.cos(v)], axis=1)
    return pts, np.stack([tu, tv], axis=1)


def _local_flat_torus(a, b):
    z = np.zeros_like(a)
    pts = np.stack([np.cos(a), np.sin(a), np.cos(b), np.sin(b)], axis=1)
    ta = np.stack([-np.sin(a), np.cos(a), z, z], axis=1)
    tb = np.stack([z, z, -np.sin(b), np.cos(b)], axis=1)
    return pts, np.stack([ta, tb], axis=1)


def _local_gerono(t):
    d1 = _gerono_d1(t)
    return _gerono(t), (d1 / np.linalg.norm(d1, axis=1, keepdims=True))[:, None, :]


def _local_sample(spec: ManifoldSpec, rng: np.random.Generator, n: int):
    if spec.kind == "circle":
        return _local_circle(rng.uniform(0, 2 * np.pi, n))
    if spec.kind == "sphere":
        g = rng.standard_normal((n, spec.dim + 1))
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        return u, _householder_complement(u)
    if spec.kind == "torus":
        # surface measure has density proportional to 1 + minor cos v in v
        u = rng.uniform(0, 2 * np.pi, n)
        v = np.empty(n)
        filled = 0
        while filled < n:
            cand = rng.uniform(0, 2 * np.pi, 2 * (n - filled))
            acc = rng.uniform(0, 1 + spec.minor, cand.size) <= 1 + spec.minor * np.cos(cand)
            take = cand[acc][: n - filled]
            v[filled : filled + take.size] = take
            filled += take.size
        return _local_torus(u, v, spec.minor)
    if spec.kind == "embedded_flat_circle_product":
        return _local_flat_torus(rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n))
    if spec.kind == "figure_eight":
        total = _gerono_table()[2]
        return _local_gerono(_gerono_at_arclength(rng.uniform(0, total, n)))
    s = rng.uniform(0, 1, n)
    return s[:, None], np.ones((n, 1, 1))


def sample_manifold(spec: ManifoldSpec, n: int, rng: np.random.Generator):
    """n uniform points of ``spec`` with their (n, d, D) tangent bases."""
    local, tan = _local_sample(spec, rng, n)
    return spec.embed(local), spec.embed_tangents(tan)


def _check_weights(weights, k):
    w = np.asarray(weights, dtype=float)
    if w.shape != (k,) or np.any(~np.isfinite(w)) or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
        raise WeightError(f"weights must be {k} positive numbers summing to 1, got {weights!r}")
    return w


def sample_mixture(specs, weights, n: int, seed: int) -> PointCloud:
    """i.i.d. draws: a layer index from ``weights``, then a point of that layer.

    A Philox (counter-based) stream per layer, spawned from one seed
    sequence, keeps the draw reproducible and independent of layer order.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one manifold")
    if n < 1:
        raise ValueError("n must be positive")
    w = _check_weights(weights, len(specs))
    if len({s.ambient for s in specs}) != 1:
        raise ValueError("all manifolds must share the ambient dimension")
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(specs) + 1)
    label_rng = np.random.Generator(np.random.Philox(children[0]))
    labels = label_rng.choice(len(specs), size=n, p=w) + 1
    D = specs[0].ambient
    points = np.empty((n, D))
    tangents = [None] * n
    for k, spec in enumerate(specs, start=1):
        idx = np.flatnonzero(labels == k)
        rng = np.random.Generator(np.random.Philox(children[k]))
        pts, tan = sample_manifold(spec, len(idx), rng)
        points[idx] = pts
        for j, i in enumerate(idx):
            tangents[i] = tan[j]
    return PointCloud(points, labels, tangents, specs, seed, list(map(float, w)))


# --- reference nets ----------------------------------------------------------


def _cube_sphere_net(k: int, m: int) -> np.ndarray:
    """Radial projection of a grid on the faces of [-1, 1]^(k+1)."""
    g = np.linspace(-1, 1, m)
    face = np.stack(np.meshgrid(*([g] * k), indexing="ij"), axis=-1).reshape(-1, k)
    parts = []
    for axis in range(k + 1):
        for sign in (-1.0, 1.0):
            pts = np.insert(face, axis, sign, axis=1)
            parts.append(pts)
    pts = np.unique(np.concatenate(parts), axis=0)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def reference_net(spec: ManifoldSpec, resolution: float):
    """Deterministic net of ``spec`` with covering radius <= resolution, plus
    the tangent bases at the net points."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    s = spec.scale
    if spec.kind == "circle":
        m = max(3, math.ceil(2 * math.pi * s / resolution))
        local, tan = _local_circle(np.arange(m) * (2 * math.pi / m))
    elif spec.kind == "sphere":
        k = spec.dim
        m = max(2, math.ceil(s * math.sqrt(k) / resolution) + 1)
        local = _cube_sphere_net(k, m)
        tan = _householder_complement(local)
    elif spec.kind == "torus":
        a = spec.minor
        mu = max(3, math.ceil(2 * math.pi * (1 + a) * s / resolution))
        mv = max(3, math.ceil(2 * math.pi * a * s / resolution))
        u, v = np.meshgrid(np.arange(mu) * 2 * math.pi / mu, np.arange(mv) * 2 * math.pi / mv,
                           indexing="ij")
        local, tan = _local_torus(u.ravel(), v.ravel(), a)
    elif spec.kind == "embedded_flat_circle_product":
        m = max(3, math.ceil(2 * math.pi * s / resolution))
        a, b = np.meshgrid(np.arange(m) * 2 * math.pi / m, np.arange(m) * 2 * math.pi / m,
                           indexing="ij")
        local, tan = _local_flat_torus(a.ravel(), b.ravel())
    elif spec.kind == "figure_eight":
        total = _gerono_table()[2]
        m = max(3, math.ceil(total * s / resolution))
        local, tan = _local_gerono(_gerono_at_arclength(np.arange(m) * total / m))
    else:
        m = max(2, math.ceil(s / resolution) + 1)
        local, tan = np.linspace(0, 1, m)[:, None], np.ones((m, 1, 1))
    return spec.embed(local), spec.embed_tangents(tan)


def dense_reference_sample(spec: ManifoldSpec, resolution: float) -> np.ndarray:
    return reference_net(spec, resolution)[0]


# --- distances ---------------------------------------------------------------


def dist_to_manifold(spec: ManifoldSpec, p) -> np.ndarray | float:
    """Euclidean distance from ``p`` (a point or rows of points) to ``spec``."""
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    q, off = spec.to_local(p)
    s = spec.scale
    if spec.kind in ("circle", "sphere"):
        in_plane = (np.linalg.norm(q, axis=1) - 1) ** 2
    elif spec.kind == "torus":
        rho = np.hypot(q[:, 0], q[:, 1])
        in_plane = (np.hypot(rho - 1, q[:, 2]) - spec.minor) ** 2
    elif spec.kind == "embedded_flat_circle_product":
        in_plane = (np.linalg.norm(q[:, :2], axis=1) - 1) ** 2 + (np.linalg.norm(q[:, 2:], axis=1) - 1) ** 2
    elif spec.kind == "segment":
        in_plane = (q[:, 0] - np.clip(q[:, 0], 0, 1)) ** 2
    else:
        in_plane = np.array([_gerono_dist(row) ** 2 for row in q])
    out = np.sqrt(s * s * in_plane + off)
    return float(out[0]) if single else out


def _gerono_closest(q: np.ndarray) -> tuple[float, float]:
    """Parameter and distance of the point of the unscaled lemniscate nearest
    to ``q``: grid search, bounded Brent around each grid local minimum, then
    Newton steps on (gamma(t) - q) . gamma'(t) = 0 to reach machine precision."""
    t, _, _, _ = _gerono_table()
    coarse = t[::50]
    d2 = ((_gerono(coarse) - q) ** 2).sum(axis=1)
    step = coarse[1] - coarse[0]
    best_t, best = coarse[np.argmin(d2)], d2.min()
    mins = np.flatnonzero((d2 <= np.roll(d2, 1)) & (d2 <= np.roll(d2, -1)))
    for i in mins:
        lo, hi = coarse[i] - step, coarse[i] + step
        res = minimize_scalar(lambda x: float(((_gerono(x) - q) ** 2).sum()), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-13})
        x = float(res.x)
        for _ in range(4):
            g0, g1 = _gerono(x) - q, _gerono_d1(x)
            g2 = np.array([-math.cos(x), -2 * math.sin(2 * x)])
            curv = g1 @ g1 + g0 @ g2
            if curv <= 0:
                break
            nx = x - (g0 @ g1) / curv
            if not lo <= nx <= hi:
                break
            x = nx
        val = float(((_gerono(x) - q) ** 2).sum())
        if val < best:
            best_t, best = x, val
    return float(best_t), math.sqrt(max(best, 0.0))


def _gerono_dist(q: np.ndarray) -> float:
    return _gerono_closest(q)[1]


def tangent_at(spec: ManifoldSpec, p) -> np.ndarray:
    """Tangent bases (n, d, D) at points lying on ``spec``."""
    q, _ = spec.to_local(p)
    if spec.kind == "circle":
        tan = _local_circle(np.arctan2(q[:, 1], q[:, 0]))[1]
    elif spec.kind == "sphere":
        tan = _householder_complement(q / np.linalg.norm(q, axis=1, keepdims=True))
    elif spec.kind == "torus":
        u = np.arctan2(q[:, 1], q[:, 0])
        v = np.arctan2(q[:, 2], np.hypot(q[:, 0], q[:, 1]) - 1)
        tan = _local_torus(u, v, spec.minor)[1]
    elif spec.kind == "embedded_flat_circle_product":
        tan = _local_flat_torus(np.arctan2(q[:, 1], q[:, 0]), np.arctan2(q[:, 3], q[:, 2]))[1]
    elif spec.kind == "figure_eight":
        tan = _local_gerono(np.array([_gerono_closest(row)[0] for row in q]))[1]
    else:
        tan = np.ones((len(q), 1, 1))
    return spec.embed_tangents(tan)


# --- named scenes ------------------------------------------------------------


def _preset_specs(name: str):
    if name == "circle":
        return [circle(ambient=2)], [1.0]
    if name == "segment":
        return [segment(ambient=2)], [1.0]
    if name == "circle_sphere":
        return [circle(ambient=3, translation=(3.0, 0.0, 0.0)), sphere(dim=2, ambient=3)], [0.5, 0.5]
    if name == "tangent_contact":
        # circle of radius 1/2 in the equatorial plane, touching the equator at (1, 0, 0)
        return [circle(ambient=3, scale=0.5, translation=(0.5, 0.0, 0.0)), sphere(dim=2, ambient=3)], [0.5, 0.5]
    if name == "figure_eight":
        return [figure_eight(kappa=1.0, ambient=2)], [1.0]
    if name == "torus":
        return [torus(ambient=3, scale=1.0, minor=0.5)], [1.0]
    if name == "flat_torus":
        return [flat_torus(ambient=4)], [1.0]
    raise KeyError(name)


PRESETS = ("circle", "segment", "circle_sphere", "tangent_contact", "figure_eight", "torus", "flat_torus")


def preset(name: str):
    """``(specs, weights)`` of a named scene."""
    try:
        return _preset_specs(name)
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def sample_preset(name: str, n: int, seed: int) -> PointCloud:
    specs, weights = preset(name)
    return sample_mixture(specs, weights, n, seed)
