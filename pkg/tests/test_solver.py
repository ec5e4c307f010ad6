import math

import numpy as np
import pytest

from nonlocal_pucci.errors import DomainError, SolverDivergence
from nonlocal_pucci.grid import AffineExterior, ConstantExterior, FormulaExterior, StepExterior
from nonlocal_pucci.kernels import split_kernel
from nonlocal_pucci.operators import OperatorSpec
from nonlocal_pucci.solver import DiscreteOperator, ProblemSpec, initial_guess, residual, solve


def plus(sigma=1.5, lam=1.0, Lam=2.0):
    return OperatorSpec.extremal("+", lam, Lam, sigma)


def test_problem_validation():
    with pytest.raises(DomainError):
        ProblemSpec(plus(), scheme="implicit")
    with pytest.raises(DomainError):
        ProblemSpec(plus(), dt_safety=1.5)
    with pytest.raises(DomainError):
        ProblemSpec(plus(), N=3)
    with pytest.raises(DomainError):
        ProblemSpec(plus(), forcing=np.full(33, np.nan), N=33).forcing_values()


def test_constant_data_is_exact():
    prob = ProblemSpec(plus(), 0.0, ConstantExterior(3.0), N=65)
    u, rep = solve(prob)
    assert rep.converged and rep.iterations == 0
    assert np.max(np.abs(u.values - 3.0)) <= 1e-12


def test_affine_data_is_exact_for_symmetric_operator():
    prob = ProblemSpec(plus(1.5, 1.0, 1.0), 0.0, AffineExterior(0.5, [0.7], clip_radius=1e6), N=65)
    u, rep = solve(prob)
    assert rep.converged
    assert np.max(np.abs(u.values - (0.5 + 0.7 * u.axis))) <= 1e-6


def test_residual_reports_interior_only():
    prob = ProblemSpec(plus(), 1.0, ConstantExterior(0.0), N=33)
    u = prob.grid(initial_guess(prob).reshape(33))
    r = residual(u, prob)
    assert r["grid"][0] == 0 and r["grid"][-1] == 0
    assert r["max"] == pytest.approx(1.0)


def test_converged_solution_meets_tolerance():
    prob = ProblemSpec(plus(1.2), -1.0, ConstantExterior(0.0), N=65, tol=1e-7)
    u, rep = solve(prob)
    assert rep.converged and rep.residual <= 1e-7
    assert residual(u, prob)["max"] <= 1e-7
    assert np.all(u.values >= -1e-12)


def test_comparison_on_ordered_pairs(rng):
    op = DiscreteOperator(ProblemSpec(plus(1.3), 0.0, N=65))
    for _ in range(3):
        a, b = rng.uniform(0.2, 1.0, 2)
        c = rng.uniform(0.0, 0.5)
        lo = ProblemSpec(plus(1.3), lambda X, a=a: a * (1 + 0.5 * np.sin(3 * X[:, 0])),
                         ConstantExterior(c), N=65)
        hi = ProblemSpec(plus(1.3), lambda X, a=a, b=b: a * (1 + 0.5 * np.sin(3 * X[:, 0])) - b,
                         ConstantExterior(c + 0.1), N=65)
        u_lo, r1 = solve(lo, op)
        u_hi, r2 = solve(hi, op)
        assert r1.converged and r2.converged
        assert np.min(u_hi.values - u_lo.values) >= -1e-6


def test_duality_of_solves():
    f = lambda X: -1.0 - 0.5 * np.cos(2 * X[:, 0])
    g = StepExterior(0.0, 1.0, [1.0])
    u, _ = solve(ProblemSpec(plus(1.4), f, g, N=65, tol=1e-9))
    v, _ = solve(ProblemSpec(OperatorSpec.extremal("-", 1.0, 2.0, 1.4), lambda X: -f(X), -g, N=65, tol=1e-9))
    assert np.max(np.abs(u.values + v.values)) <= 1e-7


def test_getoor_profile_converges_under_refinement():
    rad = OperatorSpec.extremal("+", 1.0, 1.0, 1.0)
    c = -math.pi  # fractional Laplacian of (1 - x^2)_+^(1/2) at sigma = 1 with this normalization
    errs = []
    for N in (65, 129):
        ext = FormulaExterior(lambda z: np.sqrt(np.maximum(0.0, 1 - (z**2).sum(axis=1))), 1.0)
        u, rep = solve(ProblemSpec(rad, c, ext, N=N, tol=1e-8))
        x = u.axis
        m = np.abs(x) <= 0.5
        errs.append(np.max(np.abs(u.values[m] - np.sqrt(1 - x[m] ** 2))))
    assert errs[1] < errs[0] < 0.05


def test_family_operator_solves():
    ks = (split_kernel(1.2, 1.0, 2.0), split_kernel(1.2, 2.0, 1.0))
    prob = ProblemSpec(OperatorSpec.family(ks, "max"), -1.0, ConstantExterior(0.0), N=33)
    u, rep = solve(prob)
    assert rep.converged and np.all(u.values >= -1e-12)


def test_divergence_is_reported():
    prob = ProblemSpec(plus(1.5), -1.0, ConstantExterior(0.0), N=33, max_iters=2000)
    op = DiscreteOperator(prob)
    op.diag_mass = op.diag_mass / 50.0
    with pytest.raises(SolverDivergence) as err:
        solve(prob, op)
    assert err.value.trace


def test_report_serialization():
    prob = ProblemSpec(plus(), -1.0, N=33)
    _, rep = solve(prob)
    d = rep.to_dict(timing=False)
    assert "wall_time" not in d and d["converged"]
    assert prob.to_dict()["forcing"] == -1.0
