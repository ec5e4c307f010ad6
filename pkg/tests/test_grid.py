import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_pucci.errors import DomainError
from nonlocal_pucci.grid import (AffineExterior, ConstantExterior, GridFunction, StepExterior,
                                 exterior_from_config)


def test_multilinear_reproduces_affine_in_2d(rng):
    f = lambda X: 0.3 + X @ np.array([1.5, -0.25])  # noqa: E731
    u = GridFunction.from_function(f, 2, 1.0, 17)
    P = rng.uniform(-1, 1, (50, 2))
    assert np.allclose(u.evaluate(P), f(P), atol=1e-13)


def test_interpolation_matrix_matches_evaluate(rng):
    u = GridFunction.from_function(lambda X: np.sin(X[:, 0]) * np.cos(X[:, 1]), 2, 1.0, 21,
                                   exterior=ConstantExterior(0.5))
    P = rng.uniform(-1.5, 1.5, (200, 2))
    M, e = u.interpolation_matrix(P)
    assert np.allclose(M @ u.values.ravel() + e, u.evaluate(P), atol=1e-14)


def test_exterior_rules():
    c = ConstantExterior(2.0)
    assert c.far_field().value == 2.0
    a = AffineExterior(1.0, [2.0], clip_radius=10.0)
    z = np.array([[3.0], [100.0], [-100.0]])
    assert np.allclose(a(z), [7.0, 21.0, -19.0])
    assert a.far_field() is None
    s = StepExterior(0.0, 1.0, [1.0])
    assert np.allclose(s(np.array([[2.0], [-2.0]])), [1.0, 0.0])
    with pytest.raises(DomainError):
        StepExterior(0.0, 1.0, [0.0])
    with pytest.raises(DomainError, match="exterior.slope"):
        exterior_from_config({"kind": "affine"})
    with pytest.raises(DomainError, match="exterior.kind"):
        exterior_from_config({"kind": "spline"})


def test_hessian_and_gradient_exact_on_quadratics():
    u = GridFunction.from_function(lambda X: X[:, 0] ** 2 + 3 * X[:, 0] * X[:, 1] - X[:, 1], 2, 1.0, 33)
    x = np.array([0.25, -0.125])
    assert np.allclose(u.hessian(x), [[2.0, 3.0], [3.0, 0.0]], atol=1e-10)
    assert np.allclose(u.gradient(x), [2 * 0.25 + 3 * -0.125, 3 * 0.25 - 1], atol=1e-10)


def test_arithmetic_and_exterior_combination():
    u = GridFunction(np.ones(9), 1.0, ConstantExterior(1.0))
    v = GridFunction(np.full(9, 2.0), 1.0, ConstantExterior(3.0))
    w = 2.0 * (u - v) + 1.0
    assert np.allclose(w.values, -1.0)
    assert float(w.evaluate(np.array([[5.0]]))[0]) == pytest.approx(2 * (1 - 3) + 1)
    assert (-u).far_field().value == -1.0
    with pytest.raises(DomainError):
        u + GridFunction(np.ones(11), 1.0)


def test_dump_load_roundtrip(tmp_path):
    u = GridFunction.from_function(lambda X: X[:, 0] ** 3, 1, 2.0, 65, exterior=StepExterior(-1, 1, [1.0]))
    u.dump(tmp_path / "g")
    v = GridFunction.load(tmp_path / "g")
    assert np.array_equal(u.values, v.values)
    assert v.half_width == 2.0
    assert v.exterior.to_dict() == u.exterior.to_dict()
    raw = np.fromfile(tmp_path / "g.bin", dtype="<f8")
    assert raw.size == 65


def test_validation():
    with pytest.raises(DomainError):
        GridFunction(np.ones((3, 4)), 1.0)
    with pytest.raises(DomainError):
        GridFunction(np.array([1.0, np.nan, 2.0]), 1.0)
    with pytest.raises(DomainError):
        GridFunction(np.ones(5), 0.0)


@given(st.lists(st.floats(-5, 5), min_size=5, max_size=5), st.floats(-0.999, 0.999))
def test_interpolation_bounded_by_neighbours(vals, x):
    u = GridFunction(np.array(vals), 1.0)
    v = float(u.evaluate(np.array([[x]]))[0])
    assert min(vals) - 1e-12 <= v <= max(vals) + 1e-12


def test_margin_and_kink_radii():
    u = GridFunction(np.zeros(9), 1.0)
    assert u.margin([0.25]) == pytest.approx(0.75)
    assert sorted(u.kink_radii([0.25])) == pytest.approx([0.75, 1.25])
