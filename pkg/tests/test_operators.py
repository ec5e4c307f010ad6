import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_pucci.errors import DomainError, IllConditionedError
from nonlocal_pucci.grid import AffineExterior, ConstantExterior, GridFunction
from nonlocal_pucci.kernels import DirectionFunctional, cosine_kernel, drift_vector, radial_kernel, split_kernel
from nonlocal_pucci.operators import (OperatorSpec, default_quadrature, ellipticity_sandwich_check, evaluate,
                                      evaluate_linear, extremal, extremal_eta, mu)


def cap(X):
    return np.maximum(0.0, 1.0 - (X**2).sum(axis=1))


def cap_grid(N=65, half_width=2.0):
    return GridFunction.from_function(cap, 1, half_width, N, analytic=True)


def gaussian_grid(n, N, center=0.0, a=4.0, s=1.0):
    c = np.broadcast_to(np.asarray(center, dtype=float), (n,))
    return GridFunction.from_function(lambda X: s * np.exp(-a * ((X - c) ** 2).sum(axis=1)), n, 1.0, N)


def test_mu_examples():
    u = cap_grid()
    assert mu(u, [0.0], [0.5], [0.0]) == pytest.approx(-0.25)
    assert mu(u, [0.0], [2.0], [0.0]) == pytest.approx(-1.0)
    aff = GridFunction.from_function(lambda X: 1 + 2 * X[:, 0], 1, 1.0, 33,
                                     exterior=AffineExterior(1.0, [2.0]), analytic=True)
    assert mu(aff, [0.1], [0.3], [2.0]) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
def test_closed_form_cap(sigma):
    u = cap_grid()
    v = evaluate_linear(radial_kernel(sigma), u, [0.0], grad=[0.0])
    assert v.value == pytest.approx(-4.0 / sigma, rel=1e-4)
    fine = evaluate_linear(radial_kernel(sigma), u, [0.0], grad=[0.0], quad=default_quadrature().refined())
    assert abs(fine.value - v.value) <= v.error + fine.error + 1e-12


def test_constant_and_affine_give_zero():
    const = GridFunction(np.full(33, 2.5), 1.0, ConstantExterior(2.5))
    assert abs(evaluate_linear(radial_kernel(1.2), const, [0.1]).value) < 1e-12
    aff = GridFunction.from_function(lambda X: 0.5 + 0.7 * X[:, 0], 1, 1.0, 65,
                                     exterior=AffineExterior(0.5, [0.7], clip_radius=1e6), analytic=True)
    assert abs(evaluate_linear(radial_kernel(1.5), aff, [0.0]).value) < 1e-6


def test_extremal_on_cap_uses_sign_of_mu():
    u = cap_grid()
    plus = extremal(u, [0.0], [0.0], OperatorSpec.extremal("+", 1.0, 2.0, 1.0))
    minus = extremal(u, [0.0], [0.0], OperatorSpec.extremal("-", 1.0, 2.0, 1.0))
    assert plus.value == pytest.approx(-4.0, rel=1e-4)
    assert minus.value == pytest.approx(-8.0, rel=1e-4)


def test_equal_bounds_reduce_to_linear():
    u = gaussian_grid(1, 65, 0.1)
    a = evaluate(OperatorSpec.extremal("+", 1.3, 1.3, 0.8), u, [0.05]).value
    b = evaluate_linear(radial_kernel(0.8, 1.3), u, [0.05]).value
    assert a == pytest.approx(b, rel=1e-12)


def test_ill_conditioned_kink_names_point():
    u = GridFunction.from_function(lambda X: np.abs(X).sum(axis=1), 2, 1.0, 33)
    with pytest.raises(IllConditionedError, match=r"\[0\.0, 0\.0\]"):
        evaluate_linear(radial_kernel(1.0, 1.0, 2), u, [0.0, 0.0])


def test_boundary_points_rejected():
    u = gaussian_grid(1, 33)
    with pytest.raises(DomainError):
        evaluate_linear(radial_kernel(1.0), u, [1.0 - 0.5 * u.spacing])


def test_operator_spec_validation():
    with pytest.raises(DomainError):
        OperatorSpec("nope", 1.0)
    with pytest.raises(DomainError):
        OperatorSpec.extremal("+", 2.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        OperatorSpec.extremal("+", 1.0, 2.0, 2.0)
    with pytest.raises(DomainError):
        OperatorSpec.extremal("+", 1.0, 2.0, 1.0, R=1.5)


def _random_pairs(seed, count):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        out.append(gaussian_grid(2, 33, rng.uniform(-0.4, 0.4, 2), rng.uniform(1, 6), rng.normal()))
    return out, rng


def test_duality_and_subadditivity_2d():
    (u, v), rng = _random_pairs(3, 2)
    P = OperatorSpec.extremal("+", 1.0, 2.0, 1.3)
    M = OperatorSpec.extremal("-", 1.0, 2.0, 1.3)
    for x in rng.uniform(-0.8, 0.8, (10, 2)):
        a, b = evaluate(P, u, x).value, evaluate(M, -u, x).value
        assert abs(a + b) <= 1e-10 * max(abs(a), 1.0)
        s, s1, s2 = evaluate(P, u + v, x).value, evaluate(P, u, x).value, evaluate(P, v, x).value
        assert s <= s1 + s2 + 1e-8 * max(abs(s), abs(s1), abs(s2), 1.0)
        m, m1, m2 = evaluate(M, u + v, x).value, evaluate(M, u, x).value, evaluate(M, v, x).value
        assert m >= m1 + m2 - 1e-8 * max(abs(m), abs(m1), abs(m2), 1.0)


def test_widening_ellipticity_is_monotone():
    u = gaussian_grid(1, 65, 0.2)
    x = [0.1]
    narrow_p = evaluate(OperatorSpec.extremal("+", 1.0, 1.5, 1.1), u, x).value
    wide_p = evaluate(OperatorSpec.extremal("+", 0.5, 2.5, 1.1), u, x).value
    narrow_m = evaluate(OperatorSpec.extremal("-", 1.0, 1.5, 1.1), u, x).value
    wide_m = evaluate(OperatorSpec.extremal("-", 0.5, 2.5, 1.1), u, x).value
    assert wide_p >= narrow_p and wide_m <= narrow_m


def test_truncation_consistency_symmetric_kernel():
    u = gaussian_grid(1, 129, 0.1)
    k = radial_kernel(1.4, 1.2)
    full = evaluate_linear(k, u, [0.0])
    trunc = evaluate_linear(k, u, [0.0], cutoff=0.3)
    assert abs(full.value - trunc.value) <= 3 * (full.error + trunc.error) + 1e-10


def test_sandwich_examples():
    (u, v), rng = _random_pairs(5, 2)
    pts = rng.uniform(-0.6, 0.6, (4, 2))
    fam = [cosine_kernel(1.2, 1.5, 0.3, [1.0, 0.0], 2, 1.0, 2.0),
           cosine_kernel(1.2, 1.5, -0.4, [0.6, 0.8], 2, 1.0, 2.0),
           radial_kernel(1.2, 1.7, 2, 1.0, 2.0)]
    rep = ellipticity_sandwich_check(fam, u, v, pts)
    assert rep.passed
    same = ellipticity_sandwich_check(fam[:1], u, u, pts[:2])
    assert same.passed and all(abs(r["difference"]) == 0 for r in same.rows)


def test_eta_correction_arithmetic():
    k = split_kernel(1.5, 2.0, 1.0)
    b = drift_vector(k, 0.5).value
    fun = DirectionFunctional(b[None, :])
    u = GridFunction.from_function(lambda X: 0.3 + X[:, 0], 1, 1.0, 65,
                                   exterior=AffineExterior(0.3, [1.0], clip_radius=1e6), analytic=True)
    C = 0.8
    eta = extremal_eta(u, [0.0], [1.0], OperatorSpec.eta("+", 1.0, 2.0, 1.5, 0.5, fun, C))
    base = extremal(u, [0.0], [1.0], OperatorSpec.extremal("+", 1.0, 2.0, 1.5, R=0.5))
    assert eta.value - base.value == pytest.approx(b[0] + 0.5 * C * 0.5**-0.5, rel=1e-12)
    zero_grad = extremal_eta(u, [0.0], [1.0], OperatorSpec.eta("+", 1.0, 2.0, 1.5, 0.5,
                                                               DirectionFunctional.zero(1), 0.0))
    assert zero_grad.value == base.value
    minus = extremal_eta(u, [0.0], [1.0], OperatorSpec.eta("-", 1.0, 2.0, 1.5, 0.5, fun, C))
    base_m = extremal(u, [0.0], [1.0], OperatorSpec.extremal("-", 1.0, 2.0, 1.5, R=0.5))
    assert base_m.value - minus.value == pytest.approx(-b[0] + 0.5 * C * 0.5**-0.5, rel=1e-12)


def test_family_and_isaacs():
    u = gaussian_grid(1, 65, 0.2)
    ks = [split_kernel(1.1, 1.0, 2.0), split_kernel(1.1, 2.0, 1.0), radial_kernel(1.1, 1.5)]
    vals = [evaluate_linear(k, u, [0.1]).value for k in ks]
    assert evaluate(OperatorSpec.family(ks, "max"), u, [0.1]).value == pytest.approx(max(vals))
    assert evaluate(OperatorSpec.family(ks, "min"), u, [0.1]).value == pytest.approx(min(vals))
    isa = evaluate(OperatorSpec.isaacs([ks[:2], ks[2:]]), u, [0.1]).value
    assert isa == pytest.approx(min(max(vals[:2]), vals[2]))


def test_json_record():
    d = evaluate(OperatorSpec.extremal("+", 1.0, 2.0, 1.0), cap_grid(), [0.0], [0.0]).to_dict()
    assert set(d) == {"point", "operator", "value", "error_estimate"}


@given(a=st.floats(-2, 2), b=st.floats(-2, 2), x=st.floats(-0.5, 0.5))
def test_linear_operator_is_linear(a, b, x):
    u = gaussian_grid(1, 65, 0.1, 3.0)
    v = gaussian_grid(1, 65, -0.2, 5.0)
    k = split_kernel(1.2, 1.0, 2.0)
    w = u * a + v * b
    lhs = evaluate_linear(k, w, [x]).value
    rhs = a * evaluate_linear(k, u, [x]).value + b * evaluate_linear(k, v, [x]).value
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@given(x=st.floats(-0.6, 0.6), sigma=st.floats(0.3, 1.9))
def test_duality_property_1d(x, sigma):
    u = gaussian_grid(1, 65, 0.15, 2.0, -0.7)
    a = evaluate(OperatorSpec.extremal("+", 0.7, 1.9, sigma), u, [x]).value
    b = evaluate(OperatorSpec.extremal("-", 0.7, 1.9, sigma), -u, [x]).value
    assert abs(a + b) <= 1e-10 * max(abs(a), 1.0)
    assert not math.isnan(a)
