import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree
from scipy.stats import kstest, ortho_group

from slabeling.oracle import grid_min_distance
from slabeling.samplers import (
    PRESETS,
    ManifoldSpec,
    WeightError,
    circle,
    dense_reference_sample,
    dist_to_manifold,
    figure_eight,
    flat_torus,
    preset,
    reference_net,
    sample_mixture,
    sample_preset,
    segment,
    sphere,
    tangent_at,
    torus,
)

ALL_SPECS = {
    "circle": circle(ambient=3, scale=1.5, translation=(0.0, 1.0, 2.0)),
    "sphere": sphere(dim=2, ambient=4, scale=0.8),
    "torus": torus(ambient=3, scale=1.0, minor=0.5),
    "flat_torus": flat_torus(ambient=5),
    "figure_eight": figure_eight(kappa=1.0, ambient=3),
    "segment": segment(ambient=2, scale=2.0),
}


def test_unit_circle_samples_on_circle():
    pc = sample_mixture([circle()], [1.0], 1000, 0)
    np.testing.assert_allclose(np.linalg.norm(pc.points, axis=1), 1.0, atol=1e-12)
    assert np.all(pc.true_labels == 1)


def test_circle_tangent_is_derivative():
    pc = sample_mixture([circle()], [1.0], 200, 1)
    t = np.arctan2(pc.points[:, 1], pc.points[:, 0])
    want = np.stack([-np.sin(t), np.cos(t)], axis=1)
    got = np.array([tan[0] for tan in pc.true_tangents])
    # tangent lines: equal up to sign
    np.testing.assert_allclose(np.abs((got * want).sum(axis=1)), 1.0, atol=1e-12)


def test_label_fraction_circle_sphere():
    # Hoeffding: P(|p_hat - 0.5| > 0.05) <= 2 exp(-2 n 0.05^2) = 2 e^-50 at n = 10000
    assert 2 * math.exp(-2 * 10000 * 0.05**2) < 1e-3
    pc = sample_preset("circle_sphere", 10000, 3)
    frac = np.mean(pc.true_labels == 1)
    assert 0.45 <= frac <= 0.55


@pytest.mark.parametrize("w", [[0.5, 0.4], [1.2, -0.2], [0.5, float("nan")], [1.0]])
def test_bad_weights(w):
    with pytest.raises(WeightError):
        sample_mixture([circle(ambient=3), sphere()], w, 10, 0)


def test_bad_spec_dimensions():
    with pytest.raises(ValueError):
        ManifoldSpec("circle", 2, 3)
    with pytest.raises(ValueError):
        sphere(dim=3, ambient=3)
    with pytest.raises(ValueError):
        ManifoldSpec("klein_bottle", 2, 4)


def test_unknown_preset():
    with pytest.raises(KeyError, match="unknown preset"):
        preset("nope")


@pytest.mark.parametrize("name", PRESETS)
def test_presets_sample(name):
    pc = sample_preset(name, 300, 0)
    assert pc.points.shape[0] == 300
    d = np.array([dist_to_manifold(pc.specs[k - 1], p) for p, k in zip(pc.points, pc.true_labels)])
    assert d.max() < 1e-9


# --- reference nets --------------------------------------------------------------


def test_circle_net_gaps():
    net = dense_reference_sample(circle(), 0.01)
    assert len(net) >= math.ceil(2 * math.pi / 0.01)
    ang = np.sort(np.arctan2(net[:, 1], net[:, 0]))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
    assert gaps.max() <= 0.01 + 1e-12


@pytest.mark.parametrize("r", [0.3, 0.1, 0.05])
def test_sphere_net_covers(r):
    spec = sphere(dim=2, ambient=3)
    net = dense_reference_sample(spec, r)
    probe = np.random.default_rng(0).standard_normal((20000, 3))
    probe /= np.linalg.norm(probe, axis=1, keepdims=True)
    d, _ = cKDTree(net).query(probe)
    assert d.max() <= r


@pytest.mark.parametrize("name", list(ALL_SPECS))
def test_nets_cover(name):
    spec = ALL_SPECS[name]
    r = 0.08
    net, tan = reference_net(spec, r)
    pc = sample_mixture([spec], [1.0], 5000, 2)
    d, _ = cKDTree(net).query(pc.points)
    assert d.max() <= r
    # net tangents are orthonormal
    gram = np.einsum("nid,njd->nij", tan, tan)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(spec.dim), gram.shape), atol=1e-9)


def test_coarse_net_still_covers():
    spec = circle()
    net = dense_reference_sample(spec, 10.0)
    assert 1 <= len(net) <= 10
    pts = sample_mixture([spec], [1.0], 500, 0).points
    assert cKDTree(net).query(pts)[0].max() <= 10.0


# --- distances -----------------------------------------------------------------


def test_dist_examples():
    assert dist_to_manifold(circle(), [2.0, 0.0]) == pytest.approx(1.0)
    assert dist_to_manifold(sphere(), [0.0, 0.0, 0.0]) == pytest.approx(1.0)
    # R = 2, r = 0.5: the axis at height 0 is sqrt(R^2) - r from the tube
    tor = torus(ambient=3, scale=2.0, minor=0.25)
    assert dist_to_manifold(tor, [0.0, 0.0, 0.0]) == pytest.approx(1.5)


@pytest.mark.parametrize("name", list(ALL_SPECS))
def test_dist_matches_dense_net(name):
    spec = ALL_SPECS[name]
    rng = np.random.default_rng(4)
    net = dense_reference_sample(spec, 2e-3)
    tree = cKDTree(net)
    q = spec.t + rng.standard_normal((30, spec.ambient))
    exact = dist_to_manifold(spec, q)
    approx, _ = tree.query(q)
    assert np.all(exact <= approx + 1e-12)
    assert np.all(approx - exact <= 2e-3)


def test_figure_eight_distance_certified():
    spec = figure_eight(kappa=1.0)
    rng = np.random.default_rng(5)
    for q in rng.uniform(-3, 3, (10, 2)):
        d = dist_to_manifold(spec, q)
        # grid oracle over the parameter; the curve moves at speed <= scale * max |gamma'|
        speed = spec.scale * np.sqrt(2.0)

        def f(par):
            s = par[:, 0]
            return np.linalg.norm(spec.scale * np.stack([np.cos(s), np.sin(s) * np.cos(s)], axis=1) - q, axis=1)

        g = grid_min_distance(f, [0.0], [2 * np.pi], 200001, lipschitz=speed)
        assert g.value - g.error_bound - 1e-9 <= d <= g.value + 1e-9


def test_figure_eight_self_intersects():
    spec = figure_eight(kappa=1.0)
    # the lemniscate crosses itself at the origin with two tangents
    assert dist_to_manifold(spec, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert spec.kappa == pytest.approx(1.0)


# --- invariants -------------------------------------------------------------------


def test_seeded_determinism_bytes():
    a = sample_preset("circle_sphere", 2000, 11)
    b = sample_preset("circle_sphere", 2000, 11)
    c = sample_preset("circle_sphere", 2000, 12)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.true_labels.tobytes() == b.true_labels.tobytes()
    assert a.points.tobytes() != c.points.tobytes()


def test_circle_angles_uniform():
    pc = sample_mixture([circle()], [1.0], 10000, 0)
    ang = np.arctan2(pc.points[:, 1], pc.points[:, 0])
    assert kstest((ang + np.pi) / (2 * np.pi), "uniform").pvalue > 1e-3


@settings(max_examples=1000, deadline=None)
@given(st.sampled_from(list(ALL_SPECS)), st.integers(0, 2**32 - 1))
def test_tangent_second_order(name, seed):
    spec = ALL_SPECS[name]
    pc = sample_mixture([spec], [1.0], 400, seed)
    kappa = spec.kappa
    reach = 0.1 / kappa if kappa > 0 else 1.0
    i = np.random.default_rng(seed).integers(len(pc.points))
    x, tx = pc.points[i], pc.true_tangents[i]
    if spec.kind == "figure_eight" and np.linalg.norm(x - spec.t) <= 2 * reach:
        # near the crossing, close points may sit on the other branch
        return
    v = pc.points - x
    dist = np.linalg.norm(v, axis=1)
    v, dist = v[dist <= reach], dist[dist <= reach]
    normal = np.linalg.norm(v - (v @ tx.T) @ tx, axis=1)
    assert np.all(normal <= 0.5 * kappa * dist**2 * (1 + 1e-6) + 1e-12)


def test_tangent_at_matches_sampled_tangents():
    for spec in ALL_SPECS.values():
        pc = sample_mixture([spec], [1.0], 100, 0)
        got = tangent_at(spec, pc.points)
        for g, t in zip(got, pc.true_tangents):
            assert np.linalg.norm(g.T @ g - t.T @ t, 2) < 1e-6


def test_rotated_placement():
    rot = ortho_group.rvs(3, random_state=0)
    spec = sphere(dim=2, ambient=3, rotation=tuple(map(tuple, rot)), translation=(1.0, 2.0, 3.0))
    pc = sample_mixture([spec], [1.0], 500, 0)
    np.testing.assert_allclose(np.linalg.norm(pc.points - [1, 2, 3], axis=1), 1.0, atol=1e-12)
    assert ManifoldSpec.from_dict(spec.to_dict()) == spec
