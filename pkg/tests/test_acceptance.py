"""End-to-end acceptance checks, one test per criterion, each under its time budget."""

import json
import math
import time

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from nonlocal_pucci import abp, barriers, harness, kernels, operators, regularity, solver
from nonlocal_pucci.grid import AffineExterior, ConstantExterior, GridFunction, StepExterior


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


def cap(X):
    return np.maximum(0.0, 1.0 - (X**2).sum(axis=1))


@pytest.mark.criterion(1, "closed-form operator value and quadrature self-consistency")
def test_criterion_1_operator_correctness():
    u = GridFunction.from_function(cap, 1, 2.0, 65, analytic=True)
    fine_q = operators.default_quadrature().refined()
    with Budget(1.0):
        for sigma in (0.5, 1.0, 1.5):
            k = kernels.radial_kernel(sigma)
            v = operators.evaluate_linear(k, u, [0.0], grad=[0.0])
            assert abs(v.value + 4.0 / sigma) <= 1e-4 * 4.0 / sigma
            fine = operators.evaluate_linear(k, u, [0.0], grad=[0.0], quad=fine_q)
            assert abs(fine.value - v.value) <= v.error + 1e-14


def _smooth_2d(rng, N=65):
    c = rng.uniform(-0.4, 0.4, (2, 2))
    a = rng.uniform(1.0, 6.0, 2)
    s = rng.normal(size=2)
    return GridFunction.from_function(
        lambda X: sum(s[i] * np.exp(-a[i] * ((X - c[i]) ** 2).sum(axis=1)) for i in range(2)), 2, 1.0, N)


@pytest.mark.criterion(2, "duality, sandwich and subadditivity on a 65x65 grid")
def test_criterion_2_extremal_algebra():
    rng = np.random.default_rng(2)
    lam, Lam, sigma = 1.0, 2.0, 1.3
    P = operators.OperatorSpec.extremal("+", lam, Lam, sigma)
    M = operators.OperatorSpec.extremal("-", lam, Lam, sigma)
    fam = []
    for _ in range(20):
        d = rng.normal(size=2)
        fam.append(kernels.cosine_kernel(sigma, rng.uniform(1.2, 1.8), rng.uniform(-0.2, 0.2),
                                         d / np.linalg.norm(d), 2, lam, Lam))
    assert all(kernels.verify_kernel_class(k, 512).passed for k in fam)
    u, v = _smooth_2d(rng), _smooth_2d(rng)
    pts = rng.uniform(-0.9, 0.9, (50, 2))
    tol = 1e-8
    with Budget(30.0):
        for x in pts:
            pu, mu_, pv, mv = (operators.evaluate(S, w, x).value for S, w in ((P, u), (M, u), (P, v), (M, v)))
            assert abs(pu + operators.evaluate(M, -u, x).value) <= tol * max(abs(pu), 1.0)
            puv = operators.evaluate(P, u + v, x).value
            muv = operators.evaluate(M, u + v, x).value
            assert puv <= pu + pv + tol * max(abs(puv), abs(pu), abs(pv), 1.0)
            assert muv >= mu_ + mv - tol * max(abs(muv), abs(mu_), abs(mv), 1.0)
            scale = max(abs(pu), abs(mu_), 1.0)
            for k in fam:
                L = operators.evaluate_linear(k, u, x).value
                assert mu_ - tol * scale <= L <= pu + tol * scale


@pytest.mark.criterion(3, "drift vectors and eta classification")
def test_criterion_3_drift_and_classification():
    with Budget(5.0):
        for k in (kernels.radial_kernel(0.7, 1.3), kernels.radial_kernel(1.4, 1.0, 2),
                  kernels.cosine_kernel(1.1, 2.0, 0.0, dimension=2)):
            d = kernels.drift_vector(k, 0.25)
            assert np.linalg.norm(d.value) <= max(3 * d.quadrature_error, 1e-14)
        lam, Lam = 1.0, 2.5
        for R in (0.5, 0.1, 0.01):
            d = kernels.drift_vector(kernels.split_kernel(1.0, Lam, lam), R)
            assert abs(d.value[0] - (Lam - lam) * math.log(1 / R)) < 1e-6
        ks = [kernels.radial_kernel(1.0), kernels.radial_kernel(0.5, 2.0),
              kernels.cosine_kernel(0.8, 2.0, 0.0, dimension=2), kernels.split_kernel(1.5, 1.0, 1.0),
              kernels.radial_kernel(1.2, 1.0, 2), kernels.split_kernel(1.0, 1.0, 2.0),
              kernels.split_kernel(0.5, 3.0, 1.0), kernels.cosine_kernel(1.0, 2.0, 1.0, dimension=2),
              kernels.cosine_kernel(0.7, 2.0, -1.5, dimension=2),
              kernels.split_kernel(1.3, 1.0, 2.0, [1.0, 1.0], 2)]
        etas = [kernels.classify_eta_single(k, 0.25).eta for k in ks]
        assert etas == [1.0] * 5 + [0.5] * 5


@pytest.mark.criterion(4, "barrier certificates and the capped barrier")
def test_criterion_4_barriers():
    with Budget(300.0):
        res = barriers.find_parameters("power", 1.0, 1.0, 1, 1.9)
        assert res.certificate.worst_margin >= 0 and res.refined.worst_margin >= 0
        for sigma in (0.5, 1.0):
            res = barriers.find_parameters("exponential", 1.0, 2.0, 1, sigma, R=0.05)
            assert res.certificate.worst_margin >= 0 and res.refined.worst_margin >= 0
        for sigma, R in ((0.5, 0.05), (1.5, 0.5)):
            psi = barriers.build_psi(R, sigma, 1.0, 2.0)
            b = psi.barrier
            assert psi.min_q3r > 2.0
            r_out = 2.0 * math.sqrt(b.n) * R
            assert np.all(b.evaluate(np.linspace(r_out, 4 * r_out, 50)[:, None] * (1 + 1e-12)) == 0.0)
            r = np.linspace(0.0, 2.0 * R, 200)[:, None]
            support = r[psi.psi(r) > 0, 0]
            assert support.size > 0 and support.max() <= R / 4.0


def _hull_oracle(u, R):
    X = u.axis
    ball = np.abs(X) <= 2 * R * (1 + 1e-12)
    pts = np.stack([X[ball], np.maximum(u.values[ball], 0.0)], axis=1)
    pts = np.vstack([pts, [[-2 * R, 0.0], [2 * R, 0.0], [0.0, -10.0]]])
    eq = ConvexHull(pts).equations
    up = eq[eq[:, 1] > 1e-12]
    return ball, np.min(-(up[:, 0][None, :] * X[ball][:, None] + up[:, 2][None, :]) / up[:, 1][None, :], axis=1)


@pytest.mark.criterion(5, "concave envelope oracles and structural suites")
def test_criterion_5_envelopes():
    rng = np.random.default_rng(5)
    R = 0.5
    with Budget(120.0):
        for _ in range(100):
            k = int(rng.integers(2, 7))
            xs = np.concatenate([[-R], np.sort(rng.uniform(-R, R, k)), [R]])
            ys = np.concatenate([[0.0], rng.uniform(-0.5, 1.5, k), [0.0]])
            u = GridFunction.from_function(
                lambda X: np.where(np.abs(X[:, 0]) <= R, np.interp(X[:, 0], xs, ys), 0.0), 1, 1.0, 129)
            ball, G = _hull_oracle(u, R)
            for method in ("hull", "transform"):
                env = abp.concave_envelope(u, R, method=method)
                # one slope-grid cell of tilt across the radius of B_{2R}
                assert np.max(np.abs(env.values[ball] - G)) <= env.dp * 2 * R
        for _ in range(3):
            c = rng.uniform(-0.25, 0.25, (3, 2))
            a = rng.uniform(0.3, 1.0, 3)
            w = rng.uniform(0.05, 0.2, 3)
            f = lambda X: np.where(np.linalg.norm(X, axis=1) <= R, sum(
                a[i] * np.maximum(0.0, 1.0 - ((X - c[i]) ** 2).sum(axis=1) / w[i] ** 2) for i in range(3)) - 0.1,
                -0.1)
            u = GridFunction.from_function(f, 2, 1.0, 65)
            env = abp.concave_envelope(u, R)
            G = env.values
            ball = env.ball.reshape(G.shape)
            assert np.min((G - np.maximum(u.values, 0.0))[ball]) >= -1e-12
            idx = np.argwhere(ball)
            pr = idx[rng.integers(0, len(idx), (4000, 2))]
            pr = pr[((pr[:, 0] + pr[:, 1]) % 2 == 0).all(axis=1)]
            mid = G[tuple(((pr[:, 0] + pr[:, 1]) // 2).T)]
            assert np.min(mid - 0.5 * (G[tuple(pr[:, 0].T)] + G[tuple(pr[:, 1].T)])) >= -1e-12
            again = abp.concave_envelope(env.gamma, R, check_support=False)
            assert np.max(np.abs(again.values - G)[ball]) <= env.dp * 2 * R
            bump = GridFunction.from_function(lambda X: 0.05 * np.maximum(0, 1 - (X**2).sum(1) / 0.09), 2, 1.0, 65)
            env_b = abp.concave_envelope(u + bump, R)
            assert np.min((env_b.values - G)[ball]) >= -env.dp * 2 * R


@pytest.mark.criterion(6, "ABP machinery on the single-spike instance")
def test_criterion_6_abp():
    R, M0, sigma = 0.5, 1.0, 1.0
    ratios = []
    with Budget(180.0):
        for N in (33, 65, 129):
            u = abp.spike_instance(2, R, N, M0)
            env = abp.concave_envelope(u, R)
            cont = abp.slope_ball_contained(env, M0 / (6 * math.sqrt(2) * R), directions=32)
            assert cont["contained"], cont["misses"]
            f = abp.spike_forcing(u, env, sigma)
            dec = abp.cube_decomposition(u, env, R, f, sigma, max_depth=12)
            assert not dec.aborted
            assert max(c.level for c in dec.cubes) <= 12
            assert all(dec.checks[k] for k in ("a_disjoint", "b_meets_contact", "c_covers_contact", "d_diameter"))
            assert all(math.isfinite(c.e_margin) and math.isfinite(c.f_fraction) for c in dec.cubes)
            rep = abp.abp_sup_bound_check(u, env, dec, f, sigma, R)
            assert rep.passed
            ratios.append(rep.ratio)
    assert max(ratios) / min(ratios) <= 2.0


def _plus(sigma, lam=1.0, Lam=2.0):
    return operators.OperatorSpec.extremal("+", lam, Lam, sigma)


@pytest.mark.criterion(7, "solver exactness, comparison and duality at 129 nodes")
def test_criterion_7_solver():
    N = 129
    rng = np.random.default_rng(7)
    with Budget(300.0):
        u, rep = solver.solve(solver.ProblemSpec(_plus(1.5), 0.0, ConstantExterior(2.0), N=N))
        assert rep.converged and np.max(np.abs(u.values - 2.0)) <= 1e-6
        aff = AffineExterior(0.5, [0.7], clip_radius=1e6)
        u, rep = solver.solve(solver.ProblemSpec(_plus(1.5, 1.0, 1.0), 0.0, aff, N=N))
        assert rep.converged and np.max(np.abs(u.values - (0.5 + 0.7 * u.axis))) <= 1e-6
        op = solver.DiscreteOperator(solver.ProblemSpec(_plus(1.3), 0.0, N=N))
        for _ in range(10):
            amp, gap = rng.uniform(0.2, 1.0), rng.uniform(0.05, 0.5)
            freq, phase = rng.uniform(0.5, 3.0), rng.uniform(0, 2 * math.pi)
            g = rng.uniform(-0.5, 0.5)
            f_lo = lambda X: amp * np.sin(freq * X[:, 0] + phase)
            lo = solver.ProblemSpec(_plus(1.3), f_lo, ConstantExterior(g), N=N)
            hi = solver.ProblemSpec(_plus(1.3), lambda X: f_lo(X) - gap, ConstantExterior(g + gap), N=N)
            u_lo, r1 = solver.solve(lo, op)
            u_hi, r2 = solver.solve(hi, op)
            assert r1.converged and r2.converged
            assert np.min(u_hi.values - u_lo.values) >= -1e-6
        f = lambda X: -1.0 - 0.5 * np.cos(2 * X[:, 0])
        step = StepExterior(0.0, 1.0, [1.0])
        u, _ = solver.solve(solver.ProblemSpec(_plus(1.4), f, step, N=N, tol=1e-9))
        v, _ = solver.solve(solver.ProblemSpec(operators.OperatorSpec.extremal("-", 1.0, 2.0, 1.4),
                                               lambda X: -f(X), -step, N=N, tol=1e-9))
        assert np.max(np.abs(u.values + v.values)) <= 1e-6


def _run(command, **overrides):
    cfg = harness.resolve_config(command, {}, overrides)
    res, elapsed = harness.run_experiment(command, cfg)
    return cfg, res, elapsed


@pytest.mark.criterion(8, "regularity measurements")
def test_criterion_8_regularity():
    with Budget(600.0):
        for n, p, N in ((1, 0.5, 512), (1, 1.0, 512), (1, 2.0, 512), (2, 1.0, 256)):
            u = GridFunction.from_function(
                lambda X: np.maximum(np.linalg.norm(X, axis=1), 1e-300) ** -p * (np.linalg.norm(X, axis=1) > 0),
                n, 1.0, N)
            fit = regularity.level_decay(u)
            assert abs(fit.eps_star - n / p) <= 0.05 * n / p
        assert regularity.harnack_ratio(GridFunction(np.full((33, 33), 1.7), 1.0), 1.0)["ratio"] == 1.0
        _, res, _ = _run("harnack", sigma=1.5, resolutions=[33, 65], problems=10)
        assert res.checks["stable[sigma=1.5]"]["passed"] and res.checks["stable[sigma=1.5]"]["spread"] < 2.0
        assert all(c["passed"] for name, c in res.checks.items() if name.startswith("converged"))
        _, res, _ = _run("harnack", sigmas=[1.6, 1.8, 1.95], resolutions=[33, 65], problems=10)
        assert res.checks["no_blowup"]["passed"]
        u = GridFunction.from_function(lambda X: np.sqrt(np.abs(X[:, 0])), 1, 1.0, 257)
        assert regularity.holder_seminorm(u, [0.0], 0.5, 0.5).seminorm == pytest.approx(1.0, abs=1e-12)
        _, res, _ = _run("holder", profile="solve", alpha=0.5, resolutions=[65, 129])
        assert res.checks["alpha_positive"]["passed"]
        assert res.checks["alpha_stable"]["passed"] and res.checks["alpha_stable"]["drift"] <= 0.25


@pytest.mark.criterion(9, "reports re-run bit-identically from their embedded config")
def test_criterion_9_reproducibility(tmp_path):
    cases = [("classify-kernel", {}), ("eval-operator", {"sigma": 0.8}), ("solve", {"N": 65, "forcing": -1.0}),
             ("abp-report", {"resolutions": [17, 33]}), ("harnack", {"resolutions": [17, 33], "problems": 3}),
             ("level-decay", {}), ("holder", {})]
    for command, overrides in cases:
        cfg, res, elapsed = _run(command, **overrides)
        report = harness.build_report(command, cfg, res, elapsed)
        path = harness.write_report(report, res, tmp_path / command)
        cmp = harness.rerun_report(path)
        assert cmp["identical"], (command, cmp["differing_sections"])
        again = json.loads(path.read_text())
        assert again["metrics"] == cmp["report"]["metrics"]
