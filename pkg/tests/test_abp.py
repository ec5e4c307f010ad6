import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import ConvexHull

from nonlocal_pucci.abp import (abp_sup_bound_check, concave_envelope, contact_set, cube_decomposition,
                                gradient_image_volume, half_ball_check, ring_measure_estimate, rho0,
                                slope_ball_contained, spike_forcing, spike_instance, upper_hull_1d)
from nonlocal_pucci.errors import DomainError, ResolutionError
from nonlocal_pucci.grid import GridFunction
from nonlocal_pucci.kernels import DirectionFunctional


def hull_oracle(u, R):
    """Least concave majorant of ``u+`` on ``[-2R, 2R]`` from scipy's convex hull."""
    X = u.axis
    ball = np.abs(X) <= 2 * R * (1 + 1e-12)
    pts = np.stack([X[ball], np.maximum(u.values[ball], 0.0)], axis=1)
    pts = np.vstack([pts, [[-2 * R, 0.0], [2 * R, 0.0], [0.0, -10.0]]])
    eq = ConvexHull(pts).equations
    up = eq[eq[:, 1] > 1e-12]
    G = np.min(-(up[:, 0][None, :] * X[ball][:, None] + up[:, 2][None, :]) / up[:, 1][None, :], axis=1)
    return ball, G


def random_pl(rng, R=0.5, N=129):
    k = int(rng.integers(2, 7))
    xs = np.concatenate([[-R], np.sort(rng.uniform(-R, R, k)), [R]])
    ys = np.concatenate([[0.0], rng.uniform(-0.5, 1.5, k), [0.0]])
    return GridFunction.from_function(
        lambda X: np.where(np.abs(X[:, 0]) <= R, np.interp(X[:, 0], xs, ys), 0.0), 1, 1.0, N)


def bumps_2d(rng, R=0.5, N=33, count=3):
    c = rng.uniform(-0.25, 0.25, (count, 2))
    a = rng.uniform(0.3, 1.0, count)
    w = rng.uniform(0.08, 0.2, count)

    def f(X):
        v = sum(a[i] * np.maximum(0.0, 1.0 - ((X - c[i]) ** 2).sum(axis=1) / w[i] ** 2) for i in range(count))
        return np.where(np.linalg.norm(X, axis=1) <= R, v - 0.1, -0.1)

    return GridFunction.from_function(f, 2, 1.0, N)


def test_rho0_values():
    assert rho0(1) == pytest.approx(1 / 16)
    assert rho0(2) == pytest.approx(1 / (16 * math.sqrt(2)))


def test_upper_hull_1d_basic():
    hx, hy = upper_hull_1d(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 2.0, 1.0, 0.0]))
    assert hx.tolist() == [0.0, 1.0, 3.0] and hy.tolist() == [0.0, 2.0, 0.0]


def test_cone_envelope_1d_exact():
    u = spike_instance(1, R=1.0, N=65)
    env = concave_envelope(u, 1.0)
    assert np.allclose(env.values, np.maximum(0.0, 1.0 - np.abs(u.axis) / 2.0), atol=1e-14)
    tr = concave_envelope(u, 1.0, method="transform")
    assert np.allclose(tr.values, env.values, atol=1e-12)
    assert gradient_image_volume(env) == pytest.approx(1.0, abs=2 * env.dp)


def test_hull_oracle_random_pl(rng):
    for _ in range(20):
        u = random_pl(rng)
        ball, G = hull_oracle(u, 0.5)
        hull = concave_envelope(u, 0.5, method="hull")
        tr = concave_envelope(u, 0.5, method="transform")
        assert np.max(np.abs(hull.values[ball] - G)) <= 1e-12
        assert np.max(np.abs(tr.values[ball] - G)) <= tr.dp * 2 * 0.5


def test_support_check():
    u = GridFunction.from_function(lambda X: np.ones(len(X)), 1, 1.0, 33)
    with pytest.raises(DomainError, match="outside B_R"):
        concave_envelope(u, 0.5)
    with pytest.raises(DomainError):
        concave_envelope(u, 0.8)


def test_envelope_suites_2d(rng):
    R = 0.5
    for _ in range(2):
        u = bumps_2d(rng)
        env = concave_envelope(u, R)
        G = env.values
        ball = env.ball.reshape(G.shape)
        assert np.min((G - np.maximum(u.values, 0.0))[ball]) >= -1e-12
        idx = np.argwhere(ball)
        pairs = idx[rng.integers(0, len(idx), (3000, 2))]
        pairs = pairs[((pairs[:, 0] + pairs[:, 1]) % 2 == 0).all(axis=1)]
        a, b = G[tuple(pairs[:, 0].T)], G[tuple(pairs[:, 1].T)]
        mid = G[tuple(((pairs[:, 0] + pairs[:, 1]) // 2).T)]
        assert np.min(mid - 0.5 * (a + b)) >= -1e-12
        again = concave_envelope(env.gamma, R, check_support=False)
        assert np.max(np.abs(again.values - G)[ball]) <= env.dp * 2 * R
        bigger = u + GridFunction.from_function(lambda X: 0.05 * np.maximum(0, 1 - (X**2).sum(1) / 0.09), 2, 1.0,
                                                u.N)
        env_b = concave_envelope(bigger, R)
        assert np.min((env_b.values - G)[ball]) >= -env.dp * 2 * R


@given(seed=st.integers(0, 2**31 - 1))
def test_envelope_properties_1d(seed):
    rng = np.random.default_rng(seed)
    u = random_pl(rng, N=65)
    env = concave_envelope(u, 0.5)
    G = env.values
    ball = env.ball
    assert np.all(G[ball] >= np.maximum(u.values[ball], 0.0) - 1e-12)
    g = G[ball]
    assert np.all(g[1:-1] >= 0.5 * (g[:-2] + g[2:]) - 1e-12)
    pmax = 2 * env.M0 / 0.5 if env.M0 > 0 else 1.0
    assert np.all(np.abs(env.slopes) <= pmax + 1e-12)


def test_contact_slopes_are_supergradients(rng):
    u = bumps_2d(rng)
    env = concave_envelope(u, 0.5)
    cs = contact_set(env)
    assert len(cs) > 0
    X = u.nodes()[env.ball]
    G = env.values.ravel()[env.ball]
    for x, s, j in zip(cs.points, cs.slopes, cs.indices):
        plane = env.values.ravel()[j] + (X - x) @ s
        assert np.all(G <= plane + 1e-12)


def test_spike_slope_ball_and_decomposition():
    R, M0 = 0.5, 1.0
    for n in (1, 2):
        u = spike_instance(n, R, 33, M0)
        env = concave_envelope(u, R)
        rep = slope_ball_contained(env, M0 / (6 * math.sqrt(n) * R), directions=32)
        assert rep["contained"], rep["misses"]
    u = spike_instance(2, R, 33, M0)
    env = concave_envelope(u, R)
    f = spike_forcing(u, env, 1.5)
    dec = cube_decomposition(u, env, R, f, 1.5)
    assert not dec.aborted
    assert all(dec.checks[k] for k in ("a_disjoint", "b_meets_contact", "c_covers_contact", "d_diameter"))
    for c in dec.cubes:
        assert math.isfinite(c.e_margin) and math.isfinite(c.f_fraction)
    rep = abp_sup_bound_check(u, env, dec, f, 1.5, R)
    assert rep.passed and rep.ratio > 0
    scaled = abp_sup_bound_check(u, env, dec, 8.0 * f, 1.5, R)
    assert scaled.ratio == pytest.approx(rep.ratio / 8.0, rel=1e-12)


def test_empty_contact_gives_no_cubes():
    u = GridFunction(np.full((17, 17), -1.0), 1.0)
    env = concave_envelope(u, 0.5)
    assert len(contact_set(env)) == 0
    dec = cube_decomposition(u, env, 0.5, 0.0, 1.5)
    assert dec.cubes == [] and not dec.aborted
    rep = abp_sup_bound_check(u, env, dec, 0.0, 1.5, 0.5)
    assert rep.ratio == 0.0 and rep.passed


def test_zero_function_ratio_is_zero():
    u = GridFunction(np.zeros((17, 17)), 1.0)
    env = concave_envelope(u, 0.5)
    dec = cube_decomposition(u, env, 0.5, 0.0, 1.5)
    assert abp_sup_bound_check(u, env, dec, 0.0, 1.5, 0.5).ratio == 0.0


def test_eta_variant_restricts_contact():
    u = GridFunction.from_function(lambda X: np.maximum(0.0, 1.0 - 4.0 * X[:, 0] ** 2), 1, 1.0, 65)
    env = concave_envelope(u, 0.5)
    with pytest.raises(DomainError):
        cube_decomposition(u, env, 0.5, 1.0, 0.8, variant="eta")
    fun = DirectionFunctional(np.array([[1.0]]))
    cs = contact_set(env, fun)
    assert 0 < int(cs.eta_plus.sum()) < len(cs)
    assert np.all(cs.slopes[cs.eta_plus, 0] <= 0)
    dec = cube_decomposition(u, env, 0.5, 1.0, 0.8, variant="eta", functional=fun)
    assert dec.constants["J"] == pytest.approx(0.5**0.2)
    assert dec.checks["c_covers_contact"] and dec.checks["a_disjoint"]
    assert all(c.contact_nodes > 0 for c in dec.cubes)
    full = cube_decomposition(u, env, 0.5, 1.0, 0.8)
    assert sum(c.contact_nodes for c in dec.cubes) < sum(c.contact_nodes for c in full.cubes)


def test_ring_estimate_bound_scales_like_inverse_threshold():
    u = spike_instance(1, 0.5, 1025)
    env = concave_envelope(u, 0.5)
    a = ring_measure_estimate(u, env, [0.0], 1.0, 2.0, 1.5, 0.5)
    b = ring_measure_estimate(u, env, [0.0], 1.0, 4.0, 1.5, 0.5)
    assert b.bound == pytest.approx(a.bound / 2.0)
    assert a.eta_bound == pytest.approx(10 * 0.5**-0.5 * 1.0 / 2.0)
    assert a.finest_usable >= 0 and len(a.fractions) == len(a.radii)
    assert a.radii[0] == pytest.approx(rho0(1) * 2 ** (-1 / 0.5) * 0.5)


def test_ring_estimate_below_resolution_raises():
    u = spike_instance(2, 0.5, 129)
    with pytest.raises(ResolutionError):
        ring_measure_estimate(u, concave_envelope(u, 0.5), [0.0, 0.0], 1.0, 1.0, 1.5, 0.5)


def test_half_ball_consistency(rng):
    for _ in range(3):
        u = bumps_2d(rng, N=65)
        env = concave_envelope(u, 0.5)
        for x in rng.uniform(-0.3, 0.3, (4, 2)):
            res = half_ball_check(env, x, 0.2, 1e-3)
            assert res["consistent"]
