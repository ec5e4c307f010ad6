"""Empirical regularity measurements on grid functions.

Fits are least squares on log-log tails with the smallest quarter of the
abscissae excluded.  Every fit reports its residual diagnostics and the
data it used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DegenerateFitError, DomainError, ResolutionError
from .grid import GridFunction

__all__ = [
    "LogLogFit",
    "DecayFit",
    "HolderReport",
    "C1AlphaReport",
    "loglog_fit",
    "level_decay",
    "localized_decay_check",
    "harnack_ratio",
    "holder_seminorm",
    "c1alpha_probe",
]

EXCLUDE_FRACTION = 0.25
MIN_LEVELS = 4


@dataclass
class LogLogFit:
    """``log y = intercept + slope log x`` with a 95% interval for the slope."""

    slope: float
    intercept: float
    stderr: float
    ci: tuple
    r_squared: float
    max_residual: float
    x: list
    y: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def loglog_fit(x, y, exclude: float = EXCLUDE_FRACTION, min_points: int = MIN_LEVELS) -> LogLogFit:
    """Fit a power law to positive data, dropping the smallest ``exclude`` fraction of ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    order = np.argsort(x)
    x, y = x[order], y[order]
    drop = int(math.floor(exclude * x.size))
    x, y = x[drop:], y[drop:]
    if x.size < min_points:
        raise DegenerateFitError(f"{x.size} usable points, need at least {min_points}",
                                 {"usable": int(x.size), "required": min_points})
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise DegenerateFitError("abscissae are all equal", {"usable": int(x.size)})
    res = stats.linregress(lx, ly)
    dof = x.size - 2
    tq = float(stats.t.ppf(0.975, dof)) if dof > 0 else math.inf
    resid = ly - (res.intercept + res.slope * lx)
    return LogLogFit(float(res.slope), float(res.intercept), float(res.stderr),
                     (float(res.slope - tq * res.stderr), float(res.slope + tq * res.stderr)),
                     float(res.rvalue**2), float(np.max(np.abs(resid))), x.tolist(), y.tolist())


def _ball_values(u: GridFunction, R: float, center=None):
    X = u.nodes()
    c = np.zeros(u.n) if center is None else np.asarray(center, dtype=float).reshape(u.n)
    d = np.linalg.norm(X - c, axis=1)
    mask = d <= R * (1 + 1e-12)
    if not np.any(mask):
        raise ResolutionError("no grid node lies in the ball", finest_usable=None)
    return u.values.ravel()[mask], X[mask], d[mask]


@dataclass
class DecayFit:
    """``|{u > t} cap B_R| / |B_R| ~ C t^(-eps_star)``."""

    eps_star: float
    C: float
    fit: LogLogFit
    t: list
    measure: list
    nodes: int

    def to_dict(self) -> dict:
        return {"eps_star": self.eps_star, "C": self.C, "fit": self.fit.to_dict(), "t": self.t,
                "measure": self.measure, "nodes": self.nodes}


def level_decay(u: GridFunction, R: float = 1.0, t_grid=None, center=None, levels: int = 40,
                min_nodes: int = 8, exclude: float = EXCLUDE_FRACTION) -> DecayFit:
    """Fit the decay exponent of the superlevel-set measure of ``u >= 0``.

    A level is usable when its set is a proper subset of the ball holding at
    least ``min_nodes`` nodes.  ``C`` is the smallest constant with
    ``measure <= C t^(-eps_star)`` on the usable levels.
    """
    vals, _, _ = _ball_values(u, R, center)
    if np.min(vals) < -1e-12 * max(1.0, float(np.max(np.abs(vals)))):
        raise DomainError("level_decay needs u >= 0 on the ball")
    total = vals.size
    if t_grid is None:
        pos = vals[vals > 0]
        if pos.size == 0:
            raise DegenerateFitError("u vanishes on the ball", {"usable": 0})
        lo, hi = float(pos.min()), float(np.sort(pos)[max(0, pos.size - min_nodes)])
        t_grid = np.geomspace(lo, hi, levels) if hi > lo else np.array([lo])
    t = np.asarray(t_grid, dtype=float)
    counts = np.array([np.count_nonzero(vals > s) for s in t])
    meas = counts / total
    usable = (counts >= min_nodes) & (counts < total) & (t > 0)
    if usable.sum() < MIN_LEVELS:
        raise DegenerateFitError(f"{int(usable.sum())} usable levels, need at least {MIN_LEVELS}",
                                 {"usable": int(usable.sum()), "levels": t.tolist(), "measure": meas.tolist()})
    fit = loglog_fit(t[usable], meas[usable], exclude)
    eps = -fit.slope
    C = float(np.max(meas[usable] * t[usable] ** eps))
    return DecayFit(float(eps), C, fit, t[usable].tolist(), meas[usable].tolist(), total)


def localized_decay_check(u: GridFunction, x, r: float, t_grid, eps_star: float, C: float, c0: float,
                          R: float, sigma: float) -> dict:
    """Ratio of ``|{u > t} cap B_r(x)|`` to ``C r^n (u(x) + c0 R^sigma r^sigma)^eps t^(-eps)``."""
    vals, _, _ = _ball_values(u, r, x)
    n = u.n
    h = u.spacing
    ux = float(u.evaluate(np.asarray(x, dtype=float).reshape(1, n))[0])
    base = ux + c0 * R**sigma * r**sigma
    if base <= 0:
        raise DomainError("u(x) + c0 R^sigma r^sigma must be positive")
    rows = []
    for t in np.asarray(t_grid, dtype=float):
        meas = np.count_nonzero(vals > t) * h**n
        bound = C * r**n * base**eps_star * t ** (-eps_star)
        rows.append({"t": float(t), "measure": float(meas), "bound": float(bound),
                     "ratio": float(meas / bound)})
    return {"c0": c0, "rows": rows, "max_ratio": max(rw["ratio"] for rw in rows)}


def harnack_ratio(u: GridFunction, R: float, C0: float = 0.0, center=None) -> dict:
    """``sup_{B_{R/2}} u / (inf_{B_{R/2}} u + C0)``."""
    vals, _, _ = _ball_values(u, R / 2.0, center)
    sup, inf = float(vals.max()), float(vals.min())
    den = inf + C0
    if not den > 0:
        raise DomainError(f"inf + C0 = {den} must be positive")
    return {"sup": sup, "inf": inf, "C0": C0, "ratio": sup / den, "nodes": int(vals.size)}


@dataclass
class HolderReport:
    alpha: float
    seminorm: float
    alpha_fit: Optional[float]
    fit: Optional[LogLogFit]
    diagnostic: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "seminorm": self.seminorm, "alpha_fit": self.alpha_fit,
                "fit": None if self.fit is None else self.fit.to_dict(), "diagnostic": self.diagnostic}


def _holder_from_samples(vals, d, u_c, alpha, radius, shells_min=MIN_LEVELS):
    off = d > 0
    dv = np.abs(vals[off] - u_c)
    dd = d[off]
    if dv.size == 0:
        raise ResolutionError("the ball contains no node besides the center", finest_usable=None)
    semi = float(np.max(dv)) if alpha == 0 else float(np.max(dv / dd**alpha))
    radii, osc = [], []
    k = 0
    while True:
        hi, lo = radius * 2.0**-k, radius * 2.0 ** -(k + 1)
        shell = (dd > lo) & (dd <= hi * (1 + 1e-12))
        if not np.any(shell):
            break
        radii.append(hi)
        osc.append(float(np.max(dv[shell])))
        k += 1
    diag = {"shell_radii": radii, "shell_oscillation": osc}
    if max(osc, default=0.0) == 0.0:
        diag["reason"] = "constant on the ball; the exponent is undefined"
        return semi, None, None, diag
    try:
        fit = loglog_fit(radii, osc, EXCLUDE_FRACTION, shells_min)
    except DegenerateFitError as exc:
        diag["reason"] = str(exc)
        return semi, None, None, diag
    return semi, float(fit.slope), fit, diag


def holder_seminorm(u: GridFunction, center=None, alpha: float = 0.5, radius: float = 0.5) -> HolderReport:
    """``sup_x |u(x) - u(c)| / |x - c|^alpha`` over nodes of ``B_radius(c)`` and a fitted exponent.

    The fit regresses the maximal oscillation on dyadic shells against the
    shell radius.  A constant ``u`` (or too few shells) yields
    ``alpha_fit = None`` with the reason in ``diagnostic``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    c = np.zeros(u.n) if center is None else np.asarray(center, dtype=float).reshape(u.n)
    if u.margin(c) < radius * (1 - 1e-12):
        raise DomainError("the ball must lie within the grid box")
    vals, _, d = _ball_values(u, radius, c)
    u_c = float(u.evaluate(c[None, :])[0])
    semi, a_fit, fit, diag = _holder_from_samples(vals, d, u_c, alpha, radius)
    return HolderReport(float(alpha), semi, a_fit, fit, diag)


@dataclass
class C1AlphaReport:
    alpha: float
    sup_u: float
    sup_du: float
    du_seminorms: list
    du_alpha_fits: list
    norm: float
    radius: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def c1alpha_probe(u: GridFunction, center=None, radius: float = 0.5, alpha: float = 0.5,
                  scale: Optional[float] = None) -> C1AlphaReport:
    """Holder report of the centered difference quotients of ``u``.

    The composite norm is ``|u|_inf + R |Du|_inf + R^(1+alpha) [Du]_alpha``
    on the ball, with ``R = scale`` (default ``2 * radius``).
    """
    n = u.n
    h = u.spacing
    if 2.0 * radius / h + 1 < 9:
        raise ResolutionError("need at least 9 nodes per axis in the ball", finest_usable=None)
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(n)
    if u.margin(c) < radius + h:
        raise DomainError("the ball plus one cell must lie within the grid box")
    V = u.values
    semis, fits, sup_du = [], [], 0.0
    X = u.nodes()
    d = np.linalg.norm(X - c, axis=1)
    mask = d <= radius * (1 + 1e-12)
    for ax in range(n):
        D = np.zeros_like(V)
        sl_c = [slice(1, -1) if a == ax else slice(None) for a in range(n)]
        sl_p = [slice(2, None) if a == ax else slice(None) for a in range(n)]
        sl_m = [slice(None, -2) if a == ax else slice(None) for a in range(n)]
        D[tuple(sl_c)] = (V[tuple(sl_p)] - V[tuple(sl_m)]) / (2 * h)
        du = GridFunction(D, u.half_width)
        vals = D.ravel()[mask]
        du_c = float(du.evaluate(c[None, :])[0])
        semi, a_fit, _, _ = _holder_from_samples(vals, d[mask], du_c, alpha, radius)
        semis.append(semi)
        fits.append(a_fit)
        sup_du = max(sup_du, float(np.max(np.abs(vals))))
    R = 2.0 * radius if scale is None else float(scale)
    sup_u = float(np.max(np.abs(V.ravel()[mask])))
    norm = sup_u + R * sup_du + R ** (1.0 + alpha) * max(semis)
    return C1AlphaReport(float(alpha), sup_u, sup_du, semis, fits, float(norm), float(radius))
