"""Grid functions on ``[-a, a]^n`` with an exterior extension rule.

A :class:`GridFunction` is total on ``R^n``: inside the closed box values
come from multilinear interpolation of the node values (or from an exact
formula when one is attached), outside the box from the exterior rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .errors import DomainError

__all__ = [
    "ExteriorRule",
    "ConstantExterior",
    "AffineExterior",
    "StepExterior",
    "FormulaExterior",
    "SumExterior",
    "FarField",
    "GridFunction",
    "exterior_from_config",
]


@dataclass(frozen=True)
class FarField:
    """``|u(z) - value| <= deviation`` whenever ``|z| >= radius``."""

    radius: float
    value: float
    deviation: float = 0.0


class ExteriorRule:
    """Values of a function outside its computational box."""

    kind = "abstract"

    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bound(self) -> float:
        """Upper bound for ``|u|`` on the exterior."""
        raise NotImplementedError

    def far_field(self) -> Optional[FarField]:
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    def __neg__(self):
        return SumExterior((self,), (-1.0,))

    def scaled(self, c: float):
        return SumExterior((self,), (float(c),))


class ConstantExterior(ExteriorRule):
    kind = "constant"

    def __init__(self, value: float = 0.0):
        value = float(value)
        if not math.isfinite(value):
            raise DomainError("exterior constant must be finite")
        self.value = value

    def __call__(self, z):
        return np.full(np.asarray(z).shape[0], self.value)

    def bound(self):
        return abs(self.value)

    def far_field(self):
        return FarField(0.0, self.value, 0.0)

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


class AffineExterior(ExteriorRule):
    """``c0 + clip(b . z, -|b| rho, |b| rho)``: affine up to a large radius."""

    kind = "affine"

    def __init__(self, offset: float, slope, clip_radius: float = 1e8):
        self.offset = float(offset)
        self.slope = np.atleast_1d(np.asarray(slope, dtype=float))
        self.clip_radius = float(clip_radius)
        if not (np.all(np.isfinite(self.slope)) and math.isfinite(self.offset) and self.clip_radius > 0):
            raise DomainError("affine exterior needs finite offset, slope and a positive clip radius")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        lim = float(np.linalg.norm(self.slope)) * self.clip_radius
        return self.offset + np.clip(z @ self.slope, -lim, lim)

    def bound(self):
        return abs(self.offset) + float(np.linalg.norm(self.slope)) * self.clip_radius

    def to_dict(self):
        return {"kind": "affine", "offset": self.offset, "slope": self.slope.tolist(),
                "clip_radius": self.clip_radius}


class StepExterior(ExteriorRule):
    """``upper`` where ``z . direction > 0`` and ``lower`` elsewhere."""

    kind = "step"

    def __init__(self, lower: float, upper: float, direction):
        self.lower = float(lower)
        self.upper = float(upper)
        d = np.atleast_1d(np.asarray(direction, dtype=float))
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or not np.linalg.norm(d) > 0:
            raise DomainError("step exterior needs finite values and a nonzero direction")
        self.direction = d / np.linalg.norm(d)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(z @ self.direction > 0, self.upper, self.lower)

    def bound(self):
        return max(abs(self.lower), abs(self.upper))

    def to_dict(self):
        return {"kind": "step", "lower": self.lower, "upper": self.upper,
                "direction": self.direction.tolist()}


class FormulaExterior(ExteriorRule):
    """Bounded analytic exterior values given by a vectorized callable."""

    kind = "formula"

    def __init__(self, fun: Callable, bound: float, far: Optional[FarField] = None, name: str = "formula"):
        bound = float(bound)
        if not (math.isfinite(bound) and bound >= 0):
            raise DomainError("formula exterior needs a finite sup bound")
        self.fun = fun
        self._bound = bound
        self._far = far
        self.name = name

    def __call__(self, z):
        vals = np.asarray(self.fun(np.asarray(z, dtype=float)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise DomainError("exterior formula produced a non-finite value")
        return vals

    def bound(self):
        return self._bound

    def far_field(self):
        return self._far

    def to_dict(self):
        return {"kind": "formula", "name": self.name, "bound": self._bound}


class SumExterior(ExteriorRule):
    kind = "sum"

    def __init__(self, rules, coeffs):
        self.rules = tuple(rules)
        self.coeffs = tuple(float(c) for c in coeffs)

    def __call__(self, z):
        out = np.zeros(np.asarray(z).shape[0])
        for r, c in zip(self.rules, self.coeffs):
            out = out + c * r(z)
        return out

    def bound(self):
        return sum(abs(c) * r.bound() for r, c in zip(self.rules, self.coeffs))

    def far_field(self):
        parts = [r.far_field() for r in self.rules]
        if any(p is None for p in parts):
            return None
        return FarField(
            max(p.radius for p in parts),
            sum(c * p.value for p, c in zip(parts, self.coeffs)),
            sum(abs(c) * p.deviation for p, c in zip(parts, self.coeffs)),
        )

    def to_dict(self):
        return {"kind": "sum", "coeffs": list(self.coeffs), "rules": [r.to_dict() for r in self.rules]}


def exterior_from_config(cfg) -> ExteriorRule:
    """Build an exterior rule from a mapping such as ``{"kind": "constant", "value": 1}``."""
    if cfg is None:
        return ConstantExterior(0.0)
    if isinstance(cfg, (int, float)):
        return ConstantExterior(cfg)
    kind = cfg.get("kind", "constant")
    try:
        if kind in ("zero", "constant"):
            return ConstantExterior(cfg.get("value", 0.0))
        if kind == "affine":
            return AffineExterior(cfg.get("offset", 0.0), cfg["slope"], cfg.get("clip_radius", 1e8))
        if kind == "step":
            return StepExterior(cfg["lower"], cfg["upper"], cfg.get("direction", [1.0]))
    except KeyError as exc:
        raise DomainError(f"exterior.{exc.args[0]} is required for kind '{kind}'") from None
    raise DomainError(f"exterior.kind: unknown kind '{kind}'")


def _multilinear(points, N, a, h):
    """Corner indices and weights for multilinear interpolation."""
    m, n = points.shape
    t = (points + a) / h
    i0 = np.clip(np.floor(t).astype(np.int64), 0, N - 2)
    frac = np.clip(t - i0, 0.0, 1.0)
    corners = 1 << n
    idx = np.zeros((m, corners), dtype=np.int64)
    wts = np.ones((m, corners))
    strides = N ** np.arange(n - 1, -1, -1)
    for c in range(corners):
        for d in range(n):
            bit = (c >> (n - 1 - d)) & 1
            idx[:, c] += (i0[:, d] + bit) * strides[d]
            wts[:, c] *= frac[:, d] if bit else 1.0 - frac[:, d]
    return idx, wts


@dataclass
class GridFunction:
    """Node values on ``[-a, a]^n`` plus an exterior rule.

    Parameters
    ----------
    values : ndarray
        Array of shape ``(N,) * n``.
    half_width : float
        The box is ``[-half_width, half_width]^n``.
    exterior : ExteriorRule
        Values outside the closed box.
    formula : callable, optional
        Exact interior evaluator; when present it replaces interpolation.
    gradient_hint : ndarray, optional
        Per-node gradient of shape ``values.shape + (n,)``.
    """

    values: np.ndarray
    half_width: float
    exterior: ExteriorRule = field(default_factory=ConstantExterior)
    formula: Optional[Callable] = None
    gradient_hint: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim < 1 or len(set(self.values.shape)) != 1 or self.values.shape[0] < 3:
            raise DomainError("values must be a cube array with at least 3 nodes per axis")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("grid values must be finite")
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")
        self.half_width = float(self.half_width)

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.N - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.N)

    @classmethod
    def from_function(cls, fun, n, half_width, N, exterior=None, analytic=False):
        """Sample ``fun`` (vectorized over ``(m, n)`` points) on the grid.

        With ``analytic=True`` the formula is kept as the exact interior
        evaluator; otherwise it is only used to fill the nodes.
        """
        ax = np.linspace(-half_width, half_width, N)
        mesh = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
        vals = np.asarray(fun(mesh), dtype=float).reshape((N,) * n)
        return cls(vals, half_width, exterior or ConstantExterior(0.0), fun if analytic else None)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(N**n, n)`` in C order."""
        ax = self.axis
        return np.stack(np.meshgrid(*([ax] * self.n), indexing="ij"), axis=-1).reshape(-1, self.n)

    def node_norms(self) -> np.ndarray:
        return np.linalg.norm(self.nodes(), axis=1).reshape(self.values.shape)

    def inside(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.all(np.abs(points) <= self.half_width * (1 + 1e-12), axis=1)

    def evaluate(self, points) -> np.ndarray:
        """Values at points of shape ``(m, n)`` (or ``(m,)`` when ``n = 1``)."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, self.n) if self.n > 1 else points[:, None]
        out = np.empty(points.shape[0])
        ins = self.inside(points)
        if np.any(ins):
            p = points[ins]
            if self.formula is not None:
                out[ins] = np.asarray(self.formula(p), dtype=float)
            else:
                idx, wts = _multilinear(p, self.N, self.half_width, self.spacing)
                out[ins] = np.sum(self.values.ravel()[idx] * wts, axis=1)
        if np.any(~ins):
            out[~ins] = self.exterior(points[~ins])
        return out

    def interpolation_matrix(self, points):
        """Sparse matrix ``P`` and exterior values ``e`` with ``u(points) = P @ values + e``."""
        points = np.asarray(points, dtype=float)
        ins = self.inside(points)
        m = points.shape[0]
        e = np.zeros(m)
        if np.any(~ins):
            e[~ins] = self.exterior(points[~ins])
        rows_in = np.nonzero(ins)[0]
        idx, wts = _multilinear(points[ins], self.N, self.half_width, self.spacing)
        rows = np.repeat(rows_in, idx.shape[1])
        P = sparse.csr_matrix((wts.ravel(), (rows, idx.ravel())), shape=(m, self.values.size))
        P.eliminate_zeros()
        return P, e

    def gradient(self, x, step=None) -> np.ndarray:
        """Centered-difference gradient at ``x``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        h = self.spacing if step is None else step
        E = np.eye(self.n) * h
        vals = self.evaluate(np.concatenate([x + E, x - E], axis=0))
        return (vals[: self.n] - vals[self.n:]) / (2 * h)

    def hessian(self, x, step=None) -> np.ndarray:
        """Second differences at ``x`` with step ``h`` (default grid spacing)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        h = self.spacing if step is None else step
        n = self.n
        E = np.eye(n) * h
        pts = [x]
        for i in range(n):
            pts += [x + E[i], x - E[i]]
        for i in range(n):
            for j in range(i + 1, n):
                pts += [x + E[i] + E[j], x + E[i] - E[j], x - E[i] + E[j], x - E[i] - E[j]]
        v = self.evaluate(np.asarray(pts))
        H = np.zeros((n, n))
        for i in range(n):
            H[i, i] = (v[1 + 2 * i] - 2 * v[0] + v[2 + 2 * i]) / h**2
        k = 1 + 2 * n
        for i in range(n):
            for j in range(i + 1, n):
                H[i, j] = H[j, i] = (v[k] - v[k + 1] - v[k + 2] + v[k + 3]) / (4 * h**2)
                k += 4
        return H

    def margin(self, x) -> float:
        """Distance from ``x`` to the box boundary (negative outside)."""
        return float(self.half_width - np.max(np.abs(np.asarray(x, dtype=float))))

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(self.values))), self.exterior.bound())

    def far_field(self) -> Optional[FarField]:
        ff = self.exterior.far_field()
        if ff is None:
            return None
        return FarField(max(ff.radius, self.half_width * math.sqrt(self.n)), ff.value, ff.deviation)

    def kink_radii(self, x) -> list:
        """Radii around ``x`` where the integrand may be non-smooth (1-D box faces)."""
        if self.n != 1:
            return []
        x0 = float(np.asarray(x).reshape(-1)[0])
        return [abs(self.half_width - x0), abs(self.half_width + x0)]

    def smoothness_is_exact(self) -> bool:
        return False

    def with_values(self, values, exterior=None) -> "GridFunction":
        return GridFunction(np.asarray(values, dtype=float).reshape(self.values.shape), self.half_width,
                            self.exterior if exterior is None else exterior)

    def _combine(self, other, c_self, c_other):
        if isinstance(other, GridFunction):
            if other.values.shape != self.values.shape or other.half_width != self.half_width:
                raise DomainError("grid functions live on different grids")
            f1, f2 = self.formula, other.formula
            formula = None
            if f1 is not None and f2 is not None:
                formula = lambda p: c_self * f1(p) + c_other * f2(p)  # noqa: E731
            elif f1 is not None or f2 is not None:
                formula = None
            return GridFunction(c_self * self.values + c_other * other.values, self.half_width,
                                SumExterior((self.exterior, other.exterior), (c_self, c_other)), formula)
        c = float(other)
        f1 = self.formula
        ext = SumExterior((self.exterior, ConstantExterior(c_other * c)), (c_self, 1.0))
        formula = None if f1 is None else (lambda p: c_self * f1(p) + c_other * c)
        return GridFunction(c_self * self.values + c_other * c, self.half_width, ext, formula)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __neg__(self):
        f = self.formula
        return GridFunction(-self.values, self.half_width, -self.exterior,
                            None if f is None else (lambda p: -f(p)))

    def __mul__(self, c):
        c = float(c)
        f = self.formula
        return GridFunction(c * self.values, self.half_width, self.exterior.scaled(c),
                            None if f is None else (lambda p: c * f(p)))

    __rmul__ = __mul__

    def metadata(self) -> dict:
        return {
            "format": "nonlocal-grid/1",
            "dtype": "float64",
            "byte_order": "little",
            "shape": list(self.values.shape),
            "dimension": self.n,
            "half_width": self.half_width,
            "spacing": self.spacing,
            "exterior": self.exterior.to_dict(),
        }

    def dump(self, path) -> Path:
        """Write ``path.bin`` (raw little-endian float64, C order) and ``path.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.values.astype("<f8").tofile(path.with_suffix(".bin"))
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))
        return path.with_suffix(".bin")

    @classmethod
    def load(cls, path) -> "GridFunction":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        vals = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(meta["shape"])
        ext = meta.get("exterior", {})
        rule = exterior_from_config(ext) if ext.get("kind") in ("constant", "affine", "step") else ConstantExterior(0.0)
        return cls(vals, meta["half_width"], rule)
