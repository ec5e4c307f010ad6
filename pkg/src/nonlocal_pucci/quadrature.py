"""Log-radial Gauss-Legendre panels and direction sets on the unit sphere.

Kernels in the class are power laws in the radius, so a panel layout that
is uniform in ``s = log r`` resolves them with a handful of nodes per
decade.  Angular integration uses fixed, antipodally symmetric direction
sets so that odd integrands cancel to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError

__all__ = [
    "QuadratureSpec",
    "RadialResult",
    "gauss_legendre",
    "sphere_area",
    "sphere_directions",
    "integrate_log_radial",
    "integrate_adaptive",
    "fixed_radial_rule",
]

MAX_ACTIVE_PANELS = 4096
ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureSpec:
    """Panel and tolerance controls shared by every quadrature.

    Parameters
    ----------
    order : int
        Gauss-Legendre nodes per panel.
    panels_per_decade : int
        Initial panels per factor of ten in the radius.
    directions : int
        Number of directions on the sphere for ``n >= 2`` (rounded up to a
        multiple of four).  Ignored for ``n = 1``.
    adaptive : bool
        Bisect panels until the local error test passes.  The fixed layout
        is used when the nodes must not depend on the integrand.
    rtol, atol : float
        Relative and absolute targets for the adaptive radial integral.
    max_levels : int
        Maximum bisection depth.
    tail_tol : float
        Target for the far-field truncation bound when the exterior rule is
        not eventually constant.
    """

    order: int = 8
    panels_per_decade: int = 4
    directions: int = 64
    adaptive: bool = True
    rtol: float = 1e-11
    atol: float = 1e-14
    max_levels: int = 400
    tail_tol: float = 1e-11

    def __post_init__(self):
        if self.order < 2 or self.panels_per_decade < 1 or self.directions < 4:
            raise DomainError("quadrature order >= 2, panels_per_decade >= 1, directions >= 4 required")
        if not (self.rtol > 0 and self.atol > 0 and self.tail_tol > 0):
            raise DomainError("quadrature tolerances must be positive")

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        """Return the layout at ``factor`` times the resolution."""
        return replace(
            self,
            panels_per_decade=self.panels_per_decade * factor,
            directions=self.directions * factor,
            rtol=self.rtol / factor**2,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RadialResult:
    value: np.ndarray
    error: np.ndarray
    panels: int
    converged: bool


@lru_cache(maxsize=64)
def gauss_legendre(m: int):
    """Nodes and weights of the ``m``-point rule on ``[-1, 1]``."""
    x, w = leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in ``R^n`` (2 for ``n = 1``)."""
    if n < 1:
        raise DomainError("dimension must be >= 1")
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@lru_cache(maxsize=64)
def _directions_cached(n: int, count: int):
    if n == 1:
        d = np.array([[1.0], [-1.0]])
        w = np.array([1.0, 1.0])
        return d, w, d[:0], w[:0]
    count = max(4, 4 * math.ceil(count / 4))
    if n == 2:
        t = 2.0 * math.pi * (np.arange(count) + 0.5) / count
        d = np.stack([np.cos(t), np.sin(t)], axis=1)
    elif n == 3:
        half = count // 2
        k = np.arange(half) + 0.5
        z = 1.0 - k / half
        phi = math.pi * (3.0 - math.sqrt(5.0)) * np.arange(half)
        rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        up = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
        d = np.concatenate([up, -up], axis=0)
    else:
        raise DomainError("direction sets are implemented for n <= 3")
    area = sphere_area(n)
    w = np.full(len(d), area / len(d))
    if n == 2:
        dh = d[::2]
    else:
        half = len(d) // 2
        sub = np.arange(0, half, 2)
        dh = np.concatenate([d[sub], d[half + sub]], axis=0)
    wh = np.full(len(dh), area / len(dh))
    return d, w, dh, wh


def sphere_directions(n: int, count: int = 64):
    """Antipodally symmetric direction set on ``S^{n-1}``.

    Returns
    -------
    dirs, weights, half_dirs, half_weights : ndarray
        Full rule and a coarser companion rule used for the angular error
        estimate.  For ``n = 1`` the rule ``{+1, -1}`` is exact and the
        companion is empty.  Weights sum to the sphere area.
    """
    return _directions_cached(int(n), int(count))


def _initial_panels(s_lo, s_hi, per_unit, cuts):
    edges = [s_lo]
    pts = sorted({c for c in cuts if s_lo < c < s_hi} | {s_hi})
    a = s_lo
    for b in pts:
        k = max(1, math.ceil((b - a) * per_unit - 1e-9))
        edges.extend(np.linspace(a, b, k + 1)[1:].tolist())
        a = b
    e = np.asarray(edges)
    return np.stack([e[:-1], e[1:]], axis=1)


def _panel_nodes(panels, x, w):
    mid = 0.5 * (panels[:, 0] + panels[:, 1])
    half = 0.5 * (panels[:, 1] - panels[:, 0])
    s = mid[:, None] + half[:, None] * x[None, :]
    ws = half[:, None] * w[None, :]
    return s, ws


def _apply(fs, panels, x, w):
    s, ws = _panel_nodes(panels, x, w)
    vals = fs(s.ravel()).reshape(panels.shape[0], x.size, -1)
    return np.einsum("pm,pmk->pk", ws, vals)


def _halves(panels):
    mid = 0.5 * (panels[:, 0] + panels[:, 1])
    left = np.stack([panels[:, 0], mid], axis=1)
    right = np.stack([mid, panels[:, 1]], axis=1)
    return left, right


def integrate_adaptive(func, a, b, spec: QuadratureSpec, breakpoints=(), log=False, magnitudes=False) -> RadialResult:
    """Adaptive composite Gauss-Legendre integration of ``func`` over ``[a, b]``.

    With ``log=True`` the panels are uniform in ``log r`` and ``func`` is
    still integrated against ``dr``.  ``func`` maps a 1-D array of abscissae
    to shape ``(m,)`` or ``(m, k)``; breakpoints align panel edges with
    known jumps.  With ``magnitudes=True`` the second half of the columns
    returned by ``func`` holds absolute sizes of the terms whose difference
    forms the first half; they set a roundoff floor for each panel and are
    not returned.
    """
    x, w = gauss_legendre(spec.order)
    if log:
        if not (0 < a < b):
            raise DomainError(f"need 0 < r_lo < r_hi, got {a}, {b}")
        s_lo, s_hi = math.log(a), math.log(b)
        cuts = [math.log(c) for c in breakpoints if a < c < b]
        fs = lambda s: np.exp(s)[:, None] * np.asarray(func(np.exp(s)), dtype=float).reshape(s.size, -1)  # noqa: E731
        per_unit = spec.panels_per_decade / math.log(10.0)
    else:
        if not a < b:
            raise DomainError(f"need a < b, got {a}, {b}")
        s_lo, s_hi = float(a), float(b)
        cuts = [float(c) for c in breakpoints if a < c < b]
        fs = lambda s: np.asarray(func(s), dtype=float).reshape(s.size, -1)  # noqa: E731
        per_unit = spec.panels_per_decade / (s_hi - s_lo)
    panels = _initial_panels(s_lo, s_hi, per_unit, cuts)
    coarse = _apply(fs, panels, x, w)
    k = coarse.shape[1] // 2 if magnitudes else coarse.shape[1]
    coarse = coarse[:, :k]
    refine = np.ones(panels.shape[0], dtype=bool)
    val = np.zeros((panels.shape[0], k))
    err = np.zeros((panels.shape[0], k))
    mag = np.zeros((panels.shape[0], k))
    converged = True
    level = 0
    while True:
        # bisect the selected panels; their children replace them in the pool
        sel = np.nonzero(refine)[0]
        left, right = _halves(panels[sel])
        qb = _apply(fs, np.concatenate([left, right], axis=0), x, w)
        ql, qr = qb[: len(sel)], qb[len(sel):]
        e_l = np.abs(ql[:, :k] + qr[:, :k] - coarse[:, :k]) * 0.5
        if magnitudes:
            m_l, m_r = np.abs(ql[:, k:]), np.abs(qr[:, k:])
        else:
            m_l, m_r = np.abs(ql), np.abs(qr)
        keep = ~refine
        panels = np.concatenate([panels[keep], left, right], axis=0)
        val = np.concatenate([val[keep], ql[:, :k], qr[:, :k]], axis=0)
        err = np.concatenate([err[keep], e_l, e_l], axis=0)
        mag = np.concatenate([mag[keep], m_l, m_r], axis=0)
        level += 1
        if not spec.adaptive:
            break
        floor = ROUNDOFF * mag
        excess = np.maximum(err - floor, 0.0)
        tol = np.maximum(spec.atol, spec.rtol * np.abs(val).sum(axis=0))
        if np.all(excess.sum(axis=0) <= tol):
            break
        score = np.max(excess / tol[None, :], axis=1)
        refine = score >= float(score.max()) / 16.0
        if level >= spec.max_levels or 2 * int(refine.sum()) > MAX_ACTIVE_PANELS:
            converged = False
            break
        coarse = val[refine]
    total = val.sum(axis=0)
    total_err = err.sum(axis=0) + ROUNDOFF * np.maximum(np.abs(val).sum(axis=0), mag.sum(axis=0))
    return RadialResult(total, total_err, int(panels.shape[0]), converged)


def integrate_log_radial(func, r_lo, r_hi, spec: QuadratureSpec, breakpoints=(), magnitudes=False) -> RadialResult:
    """Integrate ``func(r) dr`` over ``[r_lo, r_hi]`` on panels uniform in ``log r``.

    Returns
    -------
    RadialResult
        ``value`` and ``error`` have shape ``(k,)``.
    """
    return integrate_adaptive(func, r_lo, r_hi, spec, breakpoints, log=True, magnitudes=magnitudes)


def fixed_radial_rule(r_lo, r_hi, spec: QuadratureSpec, breakpoints=()):
    """Nodes and ``dr`` weights of the non-adaptive layout.

    Each initial panel is split in two halves with ``spec.order`` nodes
    each, matching the fine rule of :func:`integrate_log_radial`.
    """
    x, w = gauss_legendre(spec.order)
    s_lo, s_hi = math.log(r_lo), math.log(r_hi)
    cuts = [math.log(b) for b in breakpoints if r_lo < b < r_hi]
    panels = _initial_panels(s_lo, s_hi, spec.panels_per_decade / math.log(10.0), cuts)
    left, right = _halves(panels)
    s, ws = _panel_nodes(np.concatenate([left, right], axis=0), x, w)
    r = np.exp(s).ravel()
    return r, (ws.ravel() * r)
