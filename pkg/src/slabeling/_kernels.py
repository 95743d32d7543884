"""Compiled inner loops of the co-detection and pruning passes."""
import math

import numba as nb
import numpy as np

from .spatial_index import _grow, query_ball


@nb.njit(cache=True, nogil=True)
def _sq(x):
    s = 0.0
    for v in x:
        s += v * v
    return s


@nb.njit(cache=True, nogil=True)
def meb_radius(y):
    """Radius of the smallest ball enclosing the rows of ``y``.

    Tries the circumball (centered in the affine hull) of every nonempty
    subset and keeps the smallest one that encloses all rows.
    """
    k, dim = y.shape
    best = np.inf
    eps = 1e-12 * (1.0 + np.abs(y).max())
    for mask in range(1, 1 << k):
        idx = np.empty(k, np.int64)
        s = 0
        for j in range(k):
            if mask >> j & 1:
                idx[s] = j
                s += 1
        center = y[idx[0]].copy()
        if s > 1:
            e = np.empty((s - 1, dim))
            for a in range(s - 1):
                e[a] = y[idx[a + 1]] - y[idx[0]]
            gram = e @ e.T
            rhs = np.empty(s - 1)
            for a in range(s - 1):
                rhs[a] = 0.5 * _sq(e[a])
            if s == 2:
                lam = rhs / gram[0, 0] if gram[0, 0] > 0 else np.full(1, np.nan)
            else:
                det = np.linalg.det(gram)
                if not abs(det) > 1e-300:
                    continue
                lam = np.linalg.solve(gram, rhs)
            if not np.all(np.isfinite(lam)):
                continue
            center += lam @ e
        rad = math.sqrt(_sq(center - y[idx[0]]))
        if rad >= best:
            continue
        ok = True
        for j in range(k):
            if math.sqrt(_sq(y[j] - center)) > rad + eps:
                ok = False
                break
        if ok:
            best = rad
    return best


@nb.njit(cache=True, nogil=True)
def _segment_dist2(p, a, b):
    ab = b - a
    denom = _sq(ab)
    t = 0.0
    if denom > 0:
        t = np.dot(p - a, ab) / denom
        t = min(1.0, max(0.0, t))
    return _sq(p - (a + t * ab))


@nb.njit(cache=True, nogil=True)
def _triangle_dist2(p, a, b, c):
    # closest point on a triangle by Voronoi-region tests; only dot products
    # are used, so this is valid in any ambient dimension
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.dot(ab, ap)
    d2 = np.dot(ac, ap)
    if d1 <= 0 and d2 <= 0:
        return _sq(ap)
    bp = p - b
    d3 = np.dot(ab, bp)
    d4 = np.dot(ac, bp)
    if d3 >= 0 and d4 <= d3:
        return _sq(bp)
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return _sq(p - (a + v * ab))
    cp = p - c
    d5 = np.dot(ab, cp)
    d6 = np.dot(ac, cp)
    if d6 >= 0 and d5 <= d6:
        return _sq(cp)
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return _sq(p - (a + w * ac))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return _sq(p - (b + w * (c - b)))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return _sq(p - (a + ab * v + ac * w))


@nb.njit(cache=True, nogil=True)
def _face_dist2(p, y):
    """Squared distance to conv(rows of y) by enumeration of faces."""
    k, dim = y.shape
    best = np.inf
    for mask in range(1, 1 << k):
        idx = np.empty(k, np.int64)
        s = 0
        for j in range(k):
            if mask >> j & 1:
                idx[s] = j
                s += 1
        if s == 1:
            d2 = _sq(p - y[idx[0]])
        else:
            e = np.empty((s - 1, dim))
            for a in range(s - 1):
                e[a] = y[idx[a + 1]] - y[idx[0]]
            gram = e @ e.T
            if not abs(np.linalg.det(gram)) > 1e-300:
                continue
            lam = np.linalg.solve(gram, e @ (p - y[idx[0]]))
            if np.any(lam < -1e-12) or lam.sum() > 1 + 1e-12:
                continue
            d2 = _sq(p - y[idx[0]] - lam @ e)
        if d2 < best:
            best = d2
    return best


@nb.njit(cache=True, nogil=True)
def simplex_dist(p, y):
    k = y.shape[0]
    if k == 1:
        return math.sqrt(_sq(p - y[0]))
    if k == 2:
        return math.sqrt(_segment_dist2(p, y[0], y[1]))
    if k == 3:
        return math.sqrt(_triangle_dist2(p, y[0], y[1], y[2]))
    return math.sqrt(_face_dist2(p, y))


@nb.njit(cache=True, nogil=True)
def span_basis(y, rank_tol, basis):
    """Write an orthonormal basis of span(y[1:] - y[0]) into ``basis``.

    Returns False when the edge vectors are numerically rank deficient
    (singular value ratio below ``rank_tol``).
    """
    d = y.shape[0] - 1
    dim = y.shape[1]
    e = np.empty((d, dim))
    for a in range(d):
        e[a] = y[a + 1] - y[0]
    if d == 1:
        nrm = math.sqrt(_sq(e[0]))
        if nrm == 0.0:
            return False
        basis[0] = e[0] / nrm
        return True
    if d == 2:
        # singular values of a 2 x D matrix from its Gram matrix, with the
        # determinant taken as a sum of squared 2 x 2 minors (no cancellation)
        g11 = _sq(e[0])
        g22 = _sq(e[1])
        g12 = np.dot(e[0], e[1])
        det = 0.0
        for i in range(dim):
            for j in range(i + 1, dim):
                m = e[0, i] * e[1, j] - e[0, j] * e[1, i]
                det += m * m
        tr = g11 + g22
        lam_max = 0.5 * (tr + math.sqrt(max(0.0, (g11 - g22) ** 2 + 4 * g12 * g12)))
        if lam_max == 0.0 or det <= 0.0:
            return False
        lam_min = det / lam_max
        if math.sqrt(lam_min / lam_max) < rank_tol:
            return False
    else:
        s = np.linalg.svd(e)[1]
        if s[0] == 0.0 or s[-1] < rank_tol * s[0]:
            return False
    # Gram-Schmidt, applied twice for orthogonality at moderate condition numbers
    for a in range(d):
        v = e[a].copy()
        for _ in range(2):
            for b in range(a):
                v -= np.dot(v, basis[b]) * basis[b]
        nrm = math.sqrt(_sq(v))
        if nrm == 0.0:
            return False
        basis[a] = v / nrm
    return True


@nb.njit(cache=True, nogil=True)
def slab_count(points, cand, center, basis, h_par, h_perp, stop_at):
    """Number of ``points[cand]`` inside the slab, stopping once ``stop_at`` is reached."""
    d, dim = basis.shape
    hp2 = h_par * h_par
    hq2 = h_perp * h_perp
    diff = np.empty(dim)
    count = 0
    for t in range(cand.shape[0]):
        i = cand[t]
        for j in range(dim):
            diff[j] = points[i, j] - center[j]
        par2 = 0.0
        for a in range(d):
            c = 0.0
            for j in range(dim):
                c += diff[j] * basis[a, j]
            par2 += c * c
            for j in range(dim):
                diff[j] -= c * basis[a, j]
        if par2 > hp2:
            continue
        if _sq(diff) > hq2:
            continue
        count += 1
        if count >= stop_at:
            break
    return count


@nb.njit(cache=True, nogil=True)
def codetect_anchors(points, cell_size, keys, starts, order, anchors, d, r, h_par, h_perp,
                     n_min, cap, rank_tol):
    """Co-detected (d+1)-tuples whose smallest index lies in ``anchors``.

    ``points`` are the active points only; returned tuples use row indices
    into ``points``, in lexicographic order. The second output counts the
    anchors whose enumeration hit ``cap`` (cap <= 0 means uncapped).
    """
    dim = points.shape[1]
    k = d + 1
    out = np.empty((64, k), np.int64)
    n_out = 0
    n_capped = 0
    reach = 2 * r + math.sqrt(h_par * h_par + h_perp * h_perp)
    y = np.empty((k, dim))
    bary = np.empty(dim)
    basis = np.empty((d, dim))
    pos = np.empty(d, np.int64)
    four_r2 = 4 * r * r
    for ai in range(anchors.shape[0]):
        a = anchors[ai]
        near = query_ball(points, cell_size, keys, starts, order, points[a], 2 * r)
        near.sort()
        verts = near[np.searchsorted(near, a, side="right"):]
        m = verts.shape[0]
        if m < d:
            continue
        cand = query_ball(points, cell_size, keys, starts, order, points[a], reach)
        if cand.shape[0] < n_min:
            continue
        # nearby points first so that counting stops early
        dist2 = np.empty(cand.shape[0])
        for t in range(cand.shape[0]):
            dist2[t] = _sq(points[cand[t]] - points[a])
        cand = cand[np.argsort(dist2, kind="mergesort")]
        y[0] = points[a]
        evaluated = 0
        level = 0
        pos[0] = -1
        capped = False
        # depth-first lexicographic enumeration of d-subsets of verts
        while level >= 0:
            pos[level] += 1
            if pos[level] > m - (d - level):
                level -= 1
                continue
            vi = verts[pos[level]]
            ok = True
            for b in range(level):
                if _sq(points[vi] - points[verts[pos[b]]]) > four_r2:
                    ok = False
                    break
            if not ok:
                continue
            if level < d - 1:
                level += 1
                pos[level] = pos[level - 1]
                continue
            for b in range(d):
                y[b + 1] = points[verts[pos[b]]]
            for j in range(dim):
                s = 0.0
                for b in range(k):
                    s += y[b, j]
                bary[j] = s / k
            ext = 0.0
            for b in range(k):
                ext = max(ext, _sq(y[b] - bary))
            if math.sqrt(ext) > r:
                if d == 1 or meb_radius(y) > r:
                    continue
            if cap > 0 and evaluated >= cap:
                capped = True
                break
            evaluated += 1
            if not span_basis(y, rank_tol, basis):
                continue
            if slab_count(points, cand, bary, basis, h_par, h_perp, n_min) >= n_min:
                if n_out == out.shape[0]:
                    grown = np.empty((2 * n_out, k), np.int64)
                    grown[:n_out] = out[:n_out]
                    out = grown
                out[n_out, 0] = a
                for b in range(d):
                    out[n_out, b + 1] = verts[pos[b]]
                n_out += 1
        if capped:
            n_capped += 1
    return out[:n_out].copy(), n_capped


@nb.njit(cache=True, nogil=True)
def prune_candidates(points, tuples, bary, ext, cell_size, keys, starts, order, queries, delta,
                     ext_max):
    """Boolean mask over ``queries``: within ``delta`` of some tuple's hull.

    ``bary`` and ``ext`` hold each tuple's barycenter and the largest
    barycenter-to-vertex distance; the grid indexes the barycenters.
    """
    k = tuples.shape[1]
    dim = points.shape[1]
    keep = np.zeros(queries.shape[0], np.bool_)
    y = np.empty((k, dim))
    for qi in range(queries.shape[0]):
        z = points[queries[qi]]
        near = query_ball(bary, cell_size, keys, starts, order, z, delta + ext_max)
        near.sort()
        for t in near:
            if math.sqrt(_sq(z - bary[t])) > delta + ext[t]:
                continue
            for b in range(k):
                y[b] = points[tuples[t, b]]
            if simplex_dist(z, y) <= delta:
                keep[qi] = True
                break
    return keep


@nb.njit(cache=True, nogil=True)
def batch_simplex_dist(points, tuples, queries_xyz):
    out = np.empty(queries_xyz.shape[0])
    k = tuples.shape[1]
    y = np.empty((k, points.shape[1]))
    for q in range(queries_xyz.shape[0]):
        best = np.inf
        for t in range(tuples.shape[0]):
            for b in range(k):
                y[b] = points[tuples[t, b]]
            best = min(best, simplex_dist(queries_xyz[q], y))
        out[q] = best
    return out


__all__ = ["meb_radius", "simplex_dist", "span_basis", "slab_count", "codetect_anchors",
           "prune_candidates", "_grow"]


@nb.njit(cache=True, nogil=True)
def flat_angle(u, t):
    """Operator-norm angle between the row spaces of orthonormal ``u`` and ``t``."""
    if u.shape[0] != t.shape[0]:
        return 1.0
    d, dim = t.shape
    if d == 1:
        c = 0.0
        for j in range(dim):
            c += t[0, j] * u[0, j]
        r2 = 0.0
        for j in range(dim):
            e = t[0, j] - c * u[0, j]
            r2 += e * e
        return min(1.0, math.sqrt(r2))
    if d == 2:
        c00 = c01 = c10 = c11 = 0.0
        for j in range(dim):
            c00 += t[0, j] * u[0, j]
            c01 += t[0, j] * u[1, j]
            c10 += t[1, j] * u[0, j]
            c11 += t[1, j] * u[1, j]
        g11 = g22 = g12 = 0.0
        for j in range(dim):
            e0 = t[0, j] - c00 * u[0, j] - c01 * u[1, j]
            e1 = t[1, j] - c10 * u[0, j] - c11 * u[1, j]
            g11 += e0 * e0
            g22 += e1 * e1
            g12 += e0 * e1
        lam = 0.5 * (g11 + g22 + math.sqrt(max(0.0, (g11 - g22) ** 2 + 4 * g12 * g12)))
        return min(1.0, math.sqrt(lam))
    resid = t.copy()
    for a in range(d):
        for b in range(d):
            c = 0.0
            for j in range(dim):
                c += t[a, j] * u[b, j]
            for j in range(dim):
                resid[a, j] -= c * u[b, j]
    return min(1.0, np.linalg.svd(resid)[1][0])


@nb.njit(cache=True, nogil=True)
def hull_dist(points, tuples, bary, ext, cell_size, keys, starts, order, ext_max, queries, upper):
    """Exact distance from each query to the union of the tuple hulls.

    ``upper`` holds a valid upper bound per query (for instance the distance
    to the nearest hull vertex); only hulls that can beat it are examined.
    """
    k = tuples.shape[1]
    y = np.empty((k, points.shape[1]))
    out = np.empty(queries.shape[0])
    for qi in range(queries.shape[0]):
        z = queries[qi]
        best = upper[qi]
        near = query_ball(bary, cell_size, keys, starts, order, z, best + ext_max)
        for t in near:
            if math.sqrt(_sq(z - bary[t])) - ext[t] >= best:
                continue
            for b in range(k):
                y[b] = points[tuples[t, b]]
            dz = simplex_dist(z, y)
            if dz < best:
                best = dz
        out[qi] = best
    return out


@nb.njit(cache=True, nogil=True)
def sup_min_angle_near(points, tuples, spans, bary, ext, cell_size, keys, starts, order, ext_max,
                       queries, qtan, radius, floor, first):
    """max(floor, sup over queries x of the min angle between the flat at x and
    the spans of hulls meeting the closed ball B(x, radius)); a query whose
    ball meets no hull scores 1.

    Inner searches stop once they fall to the running sup, which leaves the
    sup unchanged. The hulls ``first[i]`` (for instance those with the
    nearest barycenters) are tried before the full grid search.
    """
    k = tuples.shape[1]
    y = np.empty((k, points.shape[1]))
    sup = floor
    for qi in range(queries.shape[0]):
        z = queries[qi]
        best = 1.0
        for j in range(first.shape[1]):
            t = first[qi, j]
            ang = flat_angle(spans[t], qtan[qi])
            if ang >= best:
                continue
            for b in range(k):
                y[b] = points[tuples[t, b]]
            if simplex_dist(z, y) <= radius:
                best = ang
                if best <= sup:
                    break
        if best > sup:
            near = query_ball(bary, cell_size, keys, starts, order, z, radius + ext_max)
            for t in near:
                if math.sqrt(_sq(z - bary[t])) - ext[t] > radius:
                    continue
                ang = flat_angle(spans[t], qtan[qi])
                if ang >= best:
                    continue
                for b in range(k):
                    y[b] = points[tuples[t, b]]
                if simplex_dist(z, y) <= radius:
                    best = ang
                    if best <= sup:
                        break
        if best > sup:
            sup = best
    return sup


@nb.njit(cache=True, nogil=True)
def sup_min_angle_to_net(samples, sample_span, net, net_tan, cell_size, keys, starts, order, radius,
                         foot, foot_tan, has_foot, floor):
    """max(floor, sup over samples y of the min angle between y's span and the
    net tangents within B(y, radius), plus optional exact manifold points
    ``foot[y, :]`` with tangents ``foot_tan[y, :]``; a sample with no
    candidate in its ball scores 1."""
    sup = floor
    for si in range(samples.shape[0]):
        z = samples[si]
        span = sample_span[si]
        best = 1.0
        if has_foot:
            for f in range(foot.shape[1]):
                if math.sqrt(_sq(z - foot[si, f])) <= radius:
                    best = min(best, flat_angle(span, foot_tan[si, f]))
        if best > sup:
            near = query_ball(net, cell_size, keys, starts, order, z, radius)
            for t in near:
                ang = flat_angle(span, net_tan[t])
                if ang < best:
                    best = ang
                    if best <= sup:
                        break
        if best > sup:
            sup = best
    return sup


@nb.njit(cache=True, nogil=True)
def tuple_spans(points, tuples, rank_tol):
    m, k = tuples.shape
    dim = points.shape[1]
    spans = np.zeros((m, k - 1, dim))
    ok = np.zeros(m, np.bool_)
    y = np.empty((k, dim))
    basis = np.empty((k - 1, dim))
    for t in range(m):
        for b in range(k):
            y[b] = points[tuples[t, b]]
        if span_basis(y, rank_tol, basis):
            spans[t] = basis
            ok[t] = True
    return spans, ok


@nb.njit(cache=True, nogil=True)
def center_to_hulls(points, tuples, center):
    out = np.empty(tuples.shape[0])
    k = tuples.shape[1]
    y = np.empty((k, points.shape[1]))
    for t in range(tuples.shape[0]):
        for b in range(k):
            y[b] = points[tuples[t, b]]
        out[t] = simplex_dist(center, y)
    return out


@nb.njit(cache=True, nogil=True)
def incident_upper(points, tuples, queries, nearest, inc, starts, stop):
    """Distance from query i to the hulls incident to vertex slot nearest[i]
    (CSR incidence ``inc[starts[v]:starts[v+1]]``); the scan of a query ends
    early, with some value <= stop, once a hull within ``stop`` is seen."""
    k = tuples.shape[1]
    y = np.empty((k, points.shape[1]))
    out = np.empty(queries.shape[0])
    for qi in range(queries.shape[0]):
        best = np.inf
        v = nearest[qi]
        for j in range(starts[v], starts[v + 1]):
            t = inc[j]
            for b in range(k):
                y[b] = points[tuples[t, b]]
            dz = simplex_dist(queries[qi], y)
            if dz < best:
                best = dz
                if best <= stop:
                    break
        out[qi] = best
    return out
