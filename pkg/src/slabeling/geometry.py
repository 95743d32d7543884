"""Linear-geometric primitives: flats, principal angles, slabs, enclosing balls
and distances to simplices and finite point sets.

Every function here works on plain numpy arrays. Points are 1-d arrays of
length D, point sets are (m, D) arrays.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import directed_hausdorff

RANK_TOL = 1e-8


class DegenerateError(ValueError):
    """Raised when a family of vectors is numerically rank deficient."""


@dataclass(frozen=True)
class Subspace:
    """Linear flat of dimension ``dim`` stored as ``dim`` orthonormal rows."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def ambient(self) -> int:
        return self.basis.shape[1]

    def project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ``v`` (a vector or rows of vectors)."""
        v = np.asarray(v, dtype=float)
        return (v @ self.basis.T) @ self.basis

    def projector(self) -> np.ndarray:
        return self.basis.T @ self.basis


def orthonormalize(vectors, rank_tol: float = RANK_TOL) -> Subspace:
    """Orthonormal basis of the span of ``vectors``.

    Raises DegenerateError when the smallest singular value of the stacked
    vectors falls below ``rank_tol`` times the largest one.
    """
    a = np.atleast_2d(np.asarray(vectors, dtype=float))
    if a.shape[0] < 1 or a.shape[0] > a.shape[1]:
        raise ValueError(f"need between 1 and D={a.shape[1]} vectors, got {a.shape[0]}")
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0 or s[-1] < rank_tol * s[0]:
        raise DegenerateError(
            f"rank deficient family (singular value ratio {s[-1] / s[0] if s[0] else 0.0:.3g})"
        )
    # QR keeps the Gram-Schmidt orientation: axis-aligned inputs give axis-aligned bases
    q, r = np.linalg.qr(a.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    basis = (q * signs).T
    return Subspace(basis)


def principal_angles(t1: Subspace, t2: Subspace) -> np.ndarray:
    """Nondecreasing principal angles, padded with pi/2 up to the larger dimension.

    Cosines come from the singular values of the basis product and sines from
    the residual of the smaller basis off the larger one; each angle is read
    from whichever of the two is better conditioned.
    """
    if t1.ambient != t2.ambient:
        raise ValueError("subspaces live in different ambient spaces")
    big, small = (t1, t2) if t1.dim >= t2.dim else (t2, t1)
    prod = small.basis @ big.basis.T
    cos = np.sort(np.linalg.svd(prod, compute_uv=False))[::-1]
    sin = np.sort(np.linalg.svd(small.basis - prod @ big.basis, compute_uv=False))
    cos, sin = np.clip(cos, 0.0, 1.0), np.clip(sin, 0.0, 1.0)
    angles = np.where(cos * cos > 0.5, np.arcsin(sin), np.arccos(cos))
    angles = np.sort(np.clip(angles, 0.0, np.pi / 2))
    return np.concatenate([angles, np.full(big.dim - small.dim, np.pi / 2)])


def subspace_angle(t1: Subspace, t2: Subspace) -> float:
    """Operator norm of the difference of the orthogonal projectors.

    Equal to the sine of the largest principal angle for flats of the same
    dimension, and to 1 otherwise.
    """
    if t1.ambient != t2.ambient:
        raise ValueError("subspaces live in different ambient spaces")
    if t1.dim != t2.dim:
        return 1.0
    # the residual of one basis off the other has operator norm sin(theta_max)
    resid = t2.basis - (t2.basis @ t1.basis.T) @ t1.basis
    return float(min(1.0, np.linalg.norm(resid, 2)))


def cone_angle_one_sided(flats, flats2) -> float:
    """sup over ``flats`` of inf over ``flats2`` of :func:`subspace_angle`."""
    flats, flats2 = list(flats), list(flats2)
    if not flats or not flats2:
        raise ValueError("both families of flats must be nonempty")
    return max(min(subspace_angle(t, u) for u in flats2) for t in flats)


def cone_angle(flats, flats2) -> float:
    """Symmetrized version of :func:`cone_angle_one_sided`."""
    return max(cone_angle_one_sided(flats, flats2), cone_angle_one_sided(flats2, flats))


@dataclass(frozen=True)
class Slab:
    """center + B_T(0, h_par) + B_{T^perp}(0, h_perp)."""

    center: np.ndarray
    flat: Subspace
    h_par: float
    h_perp: float

    def __post_init__(self):
        if self.h_par <= 0 or self.h_perp <= 0:
            raise ValueError("slab half-widths must be positive")
        if self.h_perp > self.h_par:
            warnings.warn("slab normal width exceeds its tangential width", stacklevel=3)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def slab_offsets(s: Slab, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tangential and normal norms of ``points - s.center``."""
    diff = np.atleast_2d(np.asarray(points, dtype=float)) - s.center
    coef = diff @ s.flat.basis.T
    par = np.linalg.norm(coef, axis=1)
    perp = np.linalg.norm(diff - coef @ s.flat.basis, axis=1)
    return par, perp


def slab_contains(s: Slab, p) -> bool:
    par, perp = slab_offsets(s, p)
    return bool(par[0] <= s.h_par and perp[0] <= s.h_perp)


@dataclass(frozen=True)
class SimplexTuple:
    """A (d+1)-tuple of sample points with its span and barycenter."""

    indices: tuple
    vertices: np.ndarray
    span: Subspace = field(repr=False)
    barycenter: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.span.dim


def make_tuple(indices, vertices, rank_tol: float = RANK_TOL) -> SimplexTuple:
    """Build a :class:`SimplexTuple`; raises DegenerateError for flat tuples."""
    vertices = np.asarray(vertices, dtype=float)
    if len(set(indices)) != len(indices) or len(indices) != len(vertices):
        raise ValueError("tuple indices must be distinct and match the vertices")
    span = orthonormalize(vertices[1:] - vertices[0], rank_tol=rank_tol)
    return SimplexTuple(tuple(int(i) for i in indices), vertices, span, vertices.mean(axis=0))


def tuple_slab(t: SimplexTuple, h_par: float, h_perp: float) -> Slab:
    return Slab(t.barycenter, t.span, h_par, h_perp)


def _circumball(support: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Ball through all support points, centered in their affine hull."""
    p0 = support[0]
    if len(support) == 1:
        return p0.copy(), 0.0
    e = support[1:] - p0
    gram = e @ e.T
    rhs = 0.5 * np.einsum("ij,ij->i", e, e)
    try:
        lam = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(lam)):
        return None
    center = p0 + lam @ e
    return center, float(np.linalg.norm(center - p0))


def min_enclosing_ball(points) -> tuple[np.ndarray, float]:
    """Exact smallest enclosing ball of a handful of points (move-to-front Welzl).

    Returns (center, radius). Intended for at most D+1 points, as in a tuple.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise ValueError("need at least one point")
    eps = 1e-12 * (1.0 + np.abs(pts).max())
    order = [p for p in pts]

    def mtf(n, boundary):
        ball = _circumball(np.array(boundary)) if boundary else None
        if ball is None and boundary:
            raise DegenerateError("affinely dependent support")
        if len(boundary) == pts.shape[1] + 1:
            return ball
        for i in range(n):
            p = order[i]
            if ball is None or np.linalg.norm(p - ball[0]) > ball[1] + eps:
                ball = mtf(i, boundary + [p])
                order.insert(0, order.pop(i))
        return ball

    try:
        return mtf(len(order), [])
    except DegenerateError:
        return _min_ball_by_supports(pts)


def _min_ball_by_supports(pts: np.ndarray) -> tuple[np.ndarray, float]:
    best = None
    eps = 1e-12 * (1.0 + np.abs(pts).max())
    for k in range(1, len(pts) + 1):
        for sub in itertools.combinations(range(len(pts)), k):
            ball = _circumball(pts[list(sub)])
            if ball is None:
                continue
            c, r = ball
            if np.all(np.linalg.norm(pts - c, axis=1) <= r + eps):
                if best is None or r < best[1]:
                    best = (c, r)
    return best


def min_enclosing_ball_radius(points) -> float:
    return min_enclosing_ball(points)[1]


def nearest_point_on_simplex(p, vertices) -> np.ndarray:
    """Closest point of conv(vertices) to ``p`` by exact face enumeration.

    The minimizer lies in the relative interior of exactly one face, where it
    coincides with the affine projection onto that face; every face is tried.
    """
    p = np.asarray(p, dtype=float)
    v = np.atleast_2d(np.asarray(vertices, dtype=float))
    best, best_d = v[0], np.inf
    for k in range(1, len(v) + 1):
        for sub in itertools.combinations(range(len(v)), k):
            face = v[list(sub)]
            if k == 1:
                q = face[0]
            else:
                e = face[1:] - face[0]
                gram = e @ e.T
                try:
                    lam = np.linalg.solve(gram, e @ (p - face[0]))
                except np.linalg.LinAlgError:
                    continue
                if np.any(lam < -1e-12) or lam.sum() > 1 + 1e-12:
                    continue
                q = face[0] + lam @ e
            dq = np.linalg.norm(p - q)
            if dq < best_d:
                best, best_d = q, dq
    return best


def dist_to_simplex(p, vertices) -> float:
    p = np.asarray(p, dtype=float)
    return float(np.linalg.norm(p - nearest_point_on_simplex(p, vertices)))


def hausdorff_one_sided(a, b) -> float:
    """sup over ``a`` of the distance to ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return float(directed_hausdorff(a, b)[0])


def hausdorff(a, b) -> float:
    return max(hausdorff_one_sided(a, b), hausdorff_one_sided(b, a))
