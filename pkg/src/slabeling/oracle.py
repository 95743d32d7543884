"""Slow, transparent reference implementations for tests.

Nothing here uses the grid index or the compiled kernels: tuples are
enumerated with itertools, slab counts are linear scans and distances to
simplices come from recursive projection.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import LayerDetection, StratificationResult
from .geometry import RANK_TOL, Subspace, min_enclosing_ball_radius, principal_angles
from .params import ParamSchedule

BRUTE_FORCE_GUARD = 500


class TooLarge(ValueError):
    pass


# --- brute-force sieve -------------------------------------------------------


def _rad(y: np.ndarray) -> float:
    k = len(y)
    if k == 2:
        return 0.5 * float(np.linalg.norm(y[1] - y[0]))
    if k == 3:
        a, b, c = (float(np.linalg.norm(y[i] - y[j])) for i, j in ((1, 2), (0, 2), (0, 1)))
        a, b, c = sorted((a, b, c))
        if c * c >= a * a + b * b:
            # right or obtuse: the longest side is a diameter
            return c / 2
        s = (a + b + c) / 2
        area = math.sqrt(max(s * (s - a) * (s - b) * (s - c), 0.0))
        return a * b * c / (4 * area)
    return min_enclosing_ball_radius(y)


def _rad_many(x: np.ndarray, combos: np.ndarray) -> np.ndarray:
    """Vectorized :func:`_rad` for pairs and triangles (rows of ``combos``)."""
    y = x[combos]
    if combos.shape[1] == 2:
        return 0.5 * np.linalg.norm(y[:, 1] - y[:, 0], axis=1)
    if combos.shape[1] == 3:
        sides = np.stack([np.linalg.norm(y[:, i] - y[:, j], axis=1) for i, j in ((1, 2), (0, 2), (0, 1))], axis=1)
        a, b, c = np.sort(sides, axis=1).T
        s = (a + b + c) / 2
        area = np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            circ = a * b * c / (4 * area)
        return np.where(c * c >= a * a + b * b, c / 2, circ)
    return np.array([_rad(row) for row in y])


def _span_qr(y: np.ndarray, rank_tol: float):
    e = (y[1:] - y[0]).T
    sv = np.linalg.svd(e, compute_uv=False)
    if sv[0] == 0 or sv[-1] < rank_tol * sv[0]:
        return None
    q, _ = np.linalg.qr(e)
    return q


def _slab_count(points: np.ndarray, center, q, h_par, h_perp) -> int:
    v = points - center
    par = v @ q
    perp = v - par @ q.T
    inside = (np.linalg.norm(par, axis=1) <= h_par) & (np.linalg.norm(perp, axis=1) <= h_perp)
    return int(inside.sum())


def _proj_simplex(z: np.ndarray, y: np.ndarray) -> float:
    """Distance from z to conv(y): project on the affine hull, recurse on the
    facets when the foot falls outside."""
    if len(y) == 1:
        return float(np.linalg.norm(z - y[0]))
    e = (y[1:] - y[0]).T
    coef, *_ = np.linalg.lstsq(e, z - y[0], rcond=None)
    lam = np.concatenate([[1 - coef.sum()], coef])
    if np.all(lam >= 0):
        return float(np.linalg.norm(z - y[0] - e @ coef))
    return min(_proj_simplex(z, np.delete(y, i, axis=0)) for i in range(len(y)))


def brute_force_run(points, sched: ParamSchedule, guard: int = BRUTE_FORCE_GUARD,
                    rank_tol: float = RANK_TOL) -> StratificationResult:
    """The ascending-dimension sieve over every (d+1)-subset of active points."""
    x = np.asarray(points, dtype=float)
    if len(x) > guard:
        raise TooLarge(f"{len(x)} points exceed the brute-force guard of {guard}")
    sched.check_ambient(x.shape[1])
    active = list(range(len(x)))
    layers = []
    d = 0
    while active and d < sched.d_max:
        d += 1
        p = sched.at(d)
        act = x[active]
        tuples = []
        combos = np.array(list(itertools.combinations(active, d + 1)), dtype=np.int64).reshape(-1, d + 1)
        if len(combos):
            combos = combos[_rad_many(x, combos) <= p["r"]]
        for combo in map(tuple, combos.tolist()):
            y = x[list(combo)]
            q = _span_qr(y, rank_tol)
            if q is None:
                continue
            if _slab_count(act, y.mean(axis=0), q, p["h_par"], p["h_perp"]) >= p["n_min"]:
                tuples.append(combo)
        labeled = sorted({i for t in tuples for i in t})
        pruned = [z for z in active if z not in set(labeled)
                  and any(_proj_simplex(x[z], x[list(t)]) <= p["delta"] for t in tuples)]
        all_labeled = sorted(set(labeled) | set(pruned))
        if all_labeled:
            layers.append(LayerDetection(d, np.asarray(tuples, dtype=np.int64).reshape(-1, d + 1),
                                         np.asarray(all_labeled, dtype=np.int64),
                                         np.asarray(pruned, dtype=np.int64)))
            gone = set(all_labeled)
            active = [i for i in active if i not in gone]
    return StratificationResult(len(layers), layers, np.asarray(active, dtype=np.int64), sched, len(x),
                                {"oracle": True})


# --- Monte-Carlo slab sections -------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    std_error: float
    samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.samples < 1000:
            raise ValueError("Monte-Carlo estimates use at least 1000 samples")


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius**d


def mc_section_volume(t: Subspace, t2: Subspace, h_par: float, h_perp: float, samples: int = 100_000,
                      seed: int = 0) -> MonteCarloEstimate:
    """d-volume of T ∩ S_{T2}(0, h_par, h_perp) by uniform sampling of the
    ball B_T(0, 2 h_par), which contains the section when h_perp <= h_par."""
    if samples < 1000:
        raise ValueError("samples must be at least 1000")
    if t.dim < t2.dim:
        raise ValueError("dim T must be at least dim T2")
    if h_perp > h_par:
        raise ValueError("the enclosing ball needs h_perp <= h_par")
    rng = np.random.default_rng(seed)
    d = t.dim
    g = rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = 2 * h_par * rng.random(samples) ** (1 / d)
    v = (g * radius[:, None]) @ t.basis
    par = v @ t2.basis.T
    perp = v - par @ t2.basis
    hit = (np.linalg.norm(par, axis=1) <= h_par) & (np.linalg.norm(perp, axis=1) <= h_perp)
    vol = ball_volume(d, 2 * h_par)
    p = hit.mean()
    return MonteCarloEstimate(vol * p, vol * math.sqrt(p * (1 - p) / samples), samples)


def section_volume_bound(t: Subspace, t2: Subspace, h_par: float, h_perp: float) -> float:
    """4^d prod_k min(h_par, h_perp / sin theta_k) over the principal angles
    of T against T2, padded with pi/2 up to d = dim T."""
    theta = principal_angles(t, t2)[: t.dim]
    theta = np.concatenate([theta, np.full(t.dim - len(theta), math.pi / 2)])
    s = np.sin(theta)
    caps = np.where(s > 0, np.minimum(h_par, h_perp / np.where(s > 0, s, 1)), h_par)
    return float(4 ** t.dim * np.prod(caps))


# --- grid minimization ---------------------------------------------------------


@dataclass(frozen=True)
class GridMinimum:
    """Grid minimum of a Lipschitz field: the true minimum lies in
    [value - error_bound, value]."""

    value: float
    error_bound: float
    argmin: np.ndarray


def grid_min_distance(f, lo, hi, steps, lipschitz: float) -> GridMinimum:
    """Minimize ``f`` (vectorized over rows of parameters) over the box
    [lo, hi] on a regular grid with ``steps`` points per axis.

    Every box point is within half a grid step per axis of a node, so the
    grid minimum overshoots by at most lipschitz * half-diagonal of a cell.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    steps = np.broadcast_to(np.asarray(steps, dtype=int), lo.shape)
    if np.any(steps < 2):
        raise ValueError("need at least two grid points per axis")
    axes = [np.linspace(a, b, m) for a, b, m in zip(lo, hi, steps)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    vals = np.asarray(f(grid), dtype=float)
    i = int(np.argmin(vals))
    half = (hi - lo) / (steps - 1) / 2
    return GridMinimum(float(vals[i]), float(lipschitz * np.linalg.norm(half)), grid[i])
