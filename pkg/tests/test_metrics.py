import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from slabeling import params, samplers
from slabeling.core import LayerDetection, StratificationResult, run
from slabeling.geometry import dist_to_simplex
from slabeling.metrics import (
    EmptyLayer,
    HullComplex,
    LayerEvaluation,
    MissingLabels,
    clustering_error,
    dimension_label_check,
    evaluate,
    extract_structure,
    hausdorff_layer_error,
    reconstruct_layer,
    tangent_error,
)
from slabeling.samplers import PointCloud, circle, figure_eight, segment, sphere, torus

E = np.empty(0, dtype=np.int64)


def fake_result(layers, n, d_max=2, residual=None):
    sched = params.practical_schedule(max(n, 3), d_max + 1, {})
    used = np.concatenate([l.labeled_indices for l in layers]) if layers else E
    if residual is None:
        residual = np.setdiff1d(np.arange(n), used)
    return StratificationResult(len(layers), layers, np.asarray(residual, dtype=np.int64), sched, n)


def layer(d, labeled, tuples=None):
    labeled = np.asarray(labeled, dtype=np.int64)
    if tuples is None:
        tuples = np.empty((0, d + 1), dtype=np.int64)
    return LayerDetection(d, np.asarray(tuples, dtype=np.int64).reshape(-1, d + 1), labeled, E)


def polygon(n_sides, scale=1.0):
    a = np.arange(n_sides) * 2 * math.pi / n_sides
    pts = scale * np.stack([np.cos(a), np.sin(a)], axis=1)
    tuples = np.stack([np.arange(n_sides), (np.arange(n_sides) + 1) % n_sides], axis=1)
    return HullComplex(pts, np.sort(tuples, axis=1), 1)


# --- structure ---------------------------------------------------------------------


def test_extract_structure_examples():
    assert extract_structure(fake_result([], 5)) == (0, [])
    two = fake_result([layer(1, [0, 1], [[0, 1]]), layer(2, [2, 3, 4], [[2, 3, 4]])], 5)
    assert extract_structure(two) == (2, [1, 2])
    one = fake_result([layer(3, [0, 1, 2, 3], [[0, 1, 2, 3]])], 5, d_max=3)
    assert extract_structure(one) == (1, [3])


def test_extract_structure_of_a_run_is_increasing():
    pc = samplers.sample_preset("circle_sphere", 2000, 0)
    res = run(pc.points, params.practical_schedule(2000, 3, {}))
    _, dims = extract_structure(res)
    assert all(b > a for a, b in zip(dims, dims[1:]))


# --- hull complexes -----------------------------------------------------------------------


def test_single_segment_distance():
    cx = HullComplex(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0, 1]]), 1)
    assert cx.dist([0.5, 0.2]) == pytest.approx(0.2)
    assert cx.dist([0.0, 0.0]) == 0.0


def test_two_segments_take_the_minimum():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [1.0, 3.0]])
    cx = HullComplex(pts, np.array([[0, 1], [2, 3]]), 1)
    q = np.array([[0.5, 1.0], [0.5, 2.5], [2.0, 1.5]])
    want = [min(dist_to_simplex(p, pts[:2]), dist_to_simplex(p, pts[2:])) for p in q]
    np.testing.assert_allclose(cx.dist(q), want, atol=1e-12)


def test_hull_distance_matches_face_enumeration():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (40, 3))
    tuples = np.array([np.sort(rng.choice(40, 3, replace=False)) for _ in range(25)])
    cx = HullComplex(pts, tuples, 2)
    q = rng.uniform(-0.5, 1.5, (200, 3))
    want = [min(dist_to_simplex(p, pts[t]) for t in tuples) for p in q]
    np.testing.assert_allclose(cx.dist(q), want, atol=1e-12)


def test_reconstruct_layer():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    cx = reconstruct_layer(layer(1, [0, 1], [[0, 1]]), pts)
    assert cx.n_simplices == 1 and cx.dim == 1
    with pytest.raises(EmptyLayer):
        reconstruct_layer(layer(1, [2]), pts)
    with pytest.raises(ValueError):
        HullComplex(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), np.array([[0, 1, 2]]), 2)


# --- Hausdorff error ------------------------------------------------------------------------


@pytest.mark.parametrize("n_sides", [16, 200])
def test_inscribed_polygon_error_is_its_sagitta(n_sides):
    res = 1e-3
    err = hausdorff_layer_error(circle(), polygon(n_sides), res)
    sagitta = 1 - math.cos(math.pi / n_sides)
    assert sagitta - res <= err <= sagitta + 1e-12


def test_far_segment_error():
    pts = np.array([[5.0, -0.5], [5.0, 0.5]])
    cx = HullComplex(pts, np.array([[0, 1]]), 1)
    # the circle point (-1, 0) is 6 away, farther than any segment point from the circle
    err = hausdorff_layer_error(circle(), cx, 1e-3)
    assert 6.0 - 1e-3 <= err <= 6.0 + 1e-12


def test_segment_complex_of_segment_is_exact():
    spec = segment(ambient=2, scale=2.0)
    cx = HullComplex(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1], [1, 2]]), 1)
    assert hausdorff_layer_error(spec, cx, 0.01) == pytest.approx(0.0, abs=1e-12)


def test_sphere_net_triangulation_within_two_resolutions():
    spec = sphere()
    res = 0.05
    net = samplers.dense_reference_sample(spec, 0.2)
    hull = ConvexHull(net)
    cx = HullComplex(net, np.sort(hull.simplices, axis=1), 2)
    err = hausdorff_layer_error(spec, cx, res)
    assert err <= 2 * 0.2
    # the exact complex side: hull face centers pulled in the most
    near = min(dist_to_simplex(np.zeros(3), net[t]) for t in hull.simplices)
    assert err >= 1 - near - 1e-12


def test_generic_manifold_uses_sampled_complex_side():
    spec = torus(ambient=3, scale=1.0, minor=0.5)
    net = samplers.dense_reference_sample(spec, 0.3)
    # complex built from a handful of net points: far from covering the torus
    cx = HullComplex(net, np.array([[0, 1], [1, 2]]), 1)
    err = hausdorff_layer_error(spec, cx, 0.02)
    assert err > 1.0


# --- clustering error ---------------------------------------------------------------------------


def truth_two_layers():
    labels = np.array([1, 1, 1, 2, 2, 2, 2])
    return PointCloud(np.zeros((7, 3)), labels, None, [circle(ambient=3), sphere()], 0, [0.5, 0.5])


def test_clustering_perfect():
    truth = truth_two_layers()
    res = fake_result([layer(1, [0, 1, 2]), layer(2, [3, 4, 5, 6])], 7)
    assert clustering_error(res, truth) == {1: 0.0, 2: 0.0}


def test_clustering_one_missing_point():
    truth = truth_two_layers()
    res = fake_result([layer(1, [0, 1]), layer(2, [3, 4, 5, 6])], 7)
    assert clustering_error(res, truth) == {1: pytest.approx(1 / 3), 2: 0.0}


def test_clustering_empty_layer_convention():
    truth = PointCloud(np.zeros((3, 3)), np.array([2, 2, 2]), None, [circle(ambient=3), sphere()], 0)
    res = fake_result([layer(2, [0, 1, 2])], 3)
    assert clustering_error(res, truth)[1] == 0.0


def test_clustering_needs_labels():
    truth = PointCloud(np.zeros((3, 3)), None, None, [circle(ambient=3)], 0)
    with pytest.raises(MissingLabels):
        clustering_error(fake_result([], 3), truth)


def test_clustering_zero_iff_sets_coincide():
    truth = truth_two_layers()
    rng = np.random.default_rng(0)
    for _ in range(200):
        who = rng.integers(0, 4, 7)  # 0: residual, 1..3: layer dims
        layers = [layer(d, np.flatnonzero(who == d)) for d in (1, 2, 3) if np.any(who == d)]
        res = fake_result(layers, 7, d_max=3)
        err = clustering_error(res, truth)
        for k, d in ((1, 1), (2, 2)):
            same = set(np.flatnonzero(who == d)) == set(np.flatnonzero(truth.true_labels == k))
            assert (err[k] == 0.0) == same
            assert err[k] <= (7 + np.sum(truth.true_labels == k)) / max(np.sum(truth.true_labels == k), 1)


# --- tangent error -------------------------------------------------------------------------------


@pytest.mark.parametrize("n_sides", [50, 400])
def test_polygon_tangent_error_small(n_sides):
    cx = polygon(n_sides)
    edge = 2 * math.sin(math.pi / n_sides)
    err = tangent_error(circle(), cx, delta=2 * edge)
    assert err <= 2 * math.asin(edge / 2)


def test_flat_data_tangent_error_zero():
    spec = segment(ambient=3)
    cx = HullComplex(np.array([[0.0, 0, 0], [0.5, 0, 0], [1.0, 0, 0]]), np.array([[0, 1], [1, 2]]), 1)
    assert tangent_error(spec, cx, 0.1) == pytest.approx(0.0, abs=1e-12)


def test_tangent_error_empty_ball_is_one():
    cx = HullComplex(np.array([[5.0, 0.0], [5.0, 1.0]]), np.array([[0, 1]]), 1)
    assert tangent_error(circle(), cx, 0.1) == 1.0


def test_tangent_error_dimension_mismatch_is_one():
    cx = polygon(20)
    assert tangent_error(sphere(dim=1, ambient=2), cx, 0.5) < 1.0
    tri = HullComplex(np.eye(3), np.array([[0, 1, 2]]), 2)
    assert tangent_error(circle(ambient=3), tri, 0.5) == 1.0


def test_tangent_error_nonincreasing_in_delta():
    spec = figure_eight(kappa=1.0)
    net = samplers.dense_reference_sample(spec, 0.4)
    m = len(net)
    cx = HullComplex(net + 0.01, np.sort(np.stack([np.arange(m), (np.arange(m) + 1) % m], axis=1), axis=1), 1)
    errs = [tangent_error(spec, cx, dl, resolution=0.01) for dl in (0.005, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    # below the 0.01 * sqrt(2) offset every ball is empty
    assert errs[0] == 1.0 and errs[-1] < 0.5


def test_tangent_error_matches_brute_force():
    # small instance checked against a direct sup-inf over the same candidate sets
    spec = circle()
    rng = np.random.default_rng(1)
    ang = np.sort(rng.uniform(0, 2 * math.pi, 12))
    pts = np.stack([np.cos(ang), np.sin(ang)], axis=1) * (1 + 0.05 * rng.standard_normal((12, 1)))
    tuples = np.sort(np.stack([np.arange(12), (np.arange(12) + 1) % 12], axis=1), axis=1)
    cx = HullComplex(pts, tuples, 1)
    delta, res = 0.3, 0.01
    got = tangent_error(spec, cx, delta, resolution=res, subdiv=2)
    net, net_tan = samplers.reference_net(spec, res)
    dirs = pts[tuples[:, 1]] - pts[tuples[:, 0]]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def ang_between(u, v):
        return math.sqrt(max(0.0, 1 - float(u @ v) ** 2))

    # manifold side: each net point against the hulls meeting its ball
    side_a = 0.0
    for y, ty in zip(net, net_tan):
        near = [i for i, t in enumerate(tuples) if dist_to_simplex(y, pts[t]) <= delta]
        side_a = max(side_a, min((ang_between(ty[0], dirs[i]) for i in near), default=1.0))
    # complex side: hull samples against net points and exact foot points in the ball
    side_b = 0.0
    for i, t in enumerate(tuples):
        a, b = pts[t]
        for lam in (0.0, 0.5, 1.0):
            x = (1 - lam) * a + lam * b
            cands = [ang_between(ty[0], dirs[i]) for y, ty in zip(net, net_tan) if np.linalg.norm(y - x) <= delta]
            for f in (x, (a + b) / 2):
                foot = f / np.linalg.norm(f)
                if np.linalg.norm(foot - x) <= delta:
                    cands.append(ang_between(np.array([-foot[1], foot[0]]), dirs[i]))
            side_b = max(side_b, min(cands, default=1.0))
    assert got == pytest.approx(max(side_a, side_b), abs=1e-12)


# --- dimension sandwich ---------------------------------------------------------------------------


def sandwich_truth():
    c = circle(ambient=3, translation=(3.0, 0.0, 0.0))
    s = sphere()
    pts = np.array([[4.0, 0, 0], [3.0, 1.0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    return PointCloud(pts, np.array([1, 1, 2, 2, 2]), None, [c, s], 0, [0.5, 0.5])


def test_sandwich_all_correct():
    truth = sandwich_truth()
    res = fake_result([layer(1, [0, 1]), layer(2, [2, 3, 4])], 5)
    assert dimension_label_check(res, truth, [1.0, 1.0]) == 1.0


def test_sandwich_residual_violates_upper_bound():
    truth = sandwich_truth()
    res = fake_result([layer(1, [0, 1]), layer(2, [2, 3])], 5)
    assert res.point_dims()[4] == 3
    assert dimension_label_check(res, truth, [1.0, 1.0]) == pytest.approx(4 / 5)


def test_sandwich_infinite_tau_keeps_only_upper_bound():
    truth = sandwich_truth()
    # sphere points labeled 1: lower bound fails at finite tau (they are far from the circle)
    res = fake_result([layer(1, [0, 1, 2]), layer(2, [3, 4])], 5)
    assert dimension_label_check(res, truth, [1.0, 1.0]) == pytest.approx(4 / 5)
    assert dimension_label_check(res, truth, [math.inf, math.inf]) == 1.0


# --- full evaluation ------------------------------------------------------------------------------


def test_evaluate_circle_sphere():
    pc = samplers.sample_preset("circle_sphere", 3000, 0)
    res = run(pc.points, params.practical_schedule(3000, 3, {}))
    evs = evaluate(res, pc, resolution=0.01, tangent_resolution=0.005)
    assert [e.dim for e in evs] == [1, 2]
    for e in evs:
        assert isinstance(e, LayerEvaluation)
        # at this small n a few sphere points can be claimed by the d = 1 step
        assert e.dims_correct and e.clustering_error <= 0.05
        assert 0 <= e.hausdorff_error < math.inf and 0 <= e.tangent_error <= 1
        assert e.resolution == 0.01
        assert e.delta_used == pytest.approx(3 * res.params_used.h_par[e.dim - 1] ** 2)
        d = e.to_dict()
        assert set(d) == {"k", "dim", "hausdorff_error", "clustering_error", "tangent_error",
                          "dims_correct", "delta_used", "resolution"}


def test_evaluate_missing_layer_scores_worst():
    pc = samplers.sample_preset("circle_sphere", 500, 0)
    res = fake_result([layer(1, np.flatnonzero(pc.true_labels == 1))], 500)
    evs = evaluate(res, pc, resolution=0.05)
    assert evs[0].hausdorff_error == math.inf and evs[0].tangent_error == 1.0
    assert not evs[0].dims_correct
    assert evs[0].to_dict()["hausdorff_error"] is None
