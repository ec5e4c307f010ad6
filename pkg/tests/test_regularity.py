import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_pucci.errors import DegenerateFitError, DomainError, ResolutionError
from nonlocal_pucci.grid import GridFunction
from nonlocal_pucci.regularity import (c1alpha_probe, harnack_ratio, holder_seminorm, level_decay,
                                       localized_decay_check, loglog_fit)


def power_profile(n, p, N):
    def f(X):
        r = np.linalg.norm(X, axis=1)
        return np.where(r > 0, np.maximum(r, 1e-300) ** (-p), 0.0)

    return GridFunction.from_function(f, n, 1.0, N)


def test_loglog_fit_exact_power():
    x = np.geomspace(0.01, 1.0, 20)
    fit = loglog_fit(x, 3.0 * x**1.7)
    assert fit.slope == pytest.approx(1.7) and np.exp(fit.intercept) == pytest.approx(3.0)
    assert fit.r_squared == pytest.approx(1.0) and fit.max_residual < 1e-10
    assert len(fit.x) == 15


def test_loglog_fit_degenerate():
    with pytest.raises(DegenerateFitError):
        loglog_fit([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(DegenerateFitError):
        loglog_fit([1.0] * 8, np.arange(1.0, 9.0), exclude=0.0)


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0])
def test_level_decay_recovers_exponent_1d(p):
    fit = level_decay(power_profile(1, p, 512), R=1.0)
    assert fit.eps_star * p == pytest.approx(1.0, rel=0.05)
    assert fit.C > 0


def test_level_decay_2d():
    fit = level_decay(power_profile(2, 1.0, 256), R=1.0)
    assert fit.eps_star == pytest.approx(2.0, rel=0.05)


def test_level_decay_rejects_negative_and_constant():
    with pytest.raises(DomainError):
        level_decay(GridFunction(-np.ones(33), 1.0))
    with pytest.raises(DegenerateFitError):
        level_decay(GridFunction(np.ones(33), 1.0))


def test_localized_decay_rows():
    u = power_profile(1, 1.0, 257)
    fit = level_decay(u)
    out = localized_decay_check(u, [0.3], 0.2, [2.0, 4.0, 8.0], fit.eps_star, fit.C, 1.0, 1.0, 1.5)
    assert len(out["rows"]) == 3 and out["max_ratio"] >= 0


def test_harnack_constant_and_errors():
    u = GridFunction(np.full((33, 33), 2.0), 1.0)
    assert harnack_ratio(u, 1.0)["ratio"] == 1.0
    with pytest.raises(DomainError):
        harnack_ratio(GridFunction(np.zeros(33), 1.0), 1.0)
    assert harnack_ratio(GridFunction(np.zeros(33), 1.0), 1.0, C0=1.0)["ratio"] == 0.0


def test_holder_exact_on_square_root():
    u = GridFunction.from_function(lambda X: np.sqrt(np.abs(X[:, 0])), 1, 1.0, 257)
    rep = holder_seminorm(u, [0.0], 0.5, 0.5)
    assert rep.seminorm == pytest.approx(1.0, rel=1e-12)
    assert rep.alpha_fit == pytest.approx(0.5, abs=0.02)
    assert holder_seminorm(u, [0.0], 0.0, 0.5).seminorm == pytest.approx(np.sqrt(0.5))


def test_holder_constant_has_no_exponent():
    rep = holder_seminorm(GridFunction(np.ones(33), 1.0), [0.0])
    assert rep.alpha_fit is None and "constant" in rep.diagnostic["reason"]
    with pytest.raises(DomainError):
        holder_seminorm(GridFunction(np.ones(33), 1.0), [0.8], radius=0.5)
    with pytest.raises(DomainError):
        holder_seminorm(GridFunction(np.ones(33), 1.0), [0.0], alpha=1.5)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3))
def test_holder_affine_2d(a, b):
    u = GridFunction.from_function(lambda X: a + b * X[:, 0], 2, 1.0, 33)
    rep = holder_seminorm(u, [0.0, 0.0], 1.0, 0.5)
    assert rep.seminorm == pytest.approx(abs(b), rel=1e-9)


def test_c1alpha_probe():
    u = GridFunction.from_function(lambda X: np.abs(X[:, 0]) ** 1.5, 1, 1.0, 513)
    rep = c1alpha_probe(u, [0.0], 0.5, 0.5)
    assert rep.du_seminorms[0] == pytest.approx(1.5, rel=1e-3)
    assert rep.norm > rep.sup_u
    with pytest.raises(ResolutionError):
        c1alpha_probe(GridFunction(np.zeros(9), 1.0), [0.0], 0.2)
