"""Increments, linear nonlocal operators and the extremal operators.

Every evaluation splits ``R^n`` into three pieces around ``x``:

* the inner ball ``|y| < delta``, where ``u`` is replaced by its local
  quadratic model and the radial integral is done in closed form;
* rings ``delta <= |y| < r_far``, integrated on log-radial panels times a
  direction set;
* the far field ``|y| >= r_far``, handled exactly when the exterior rule
  is eventually constant and by the analytic tail bound otherwise.

Several *channels* (a linear kernel, or the ``M+``/``M-`` integrands) share
one set of samples of ``u`` so that families of operators are evaluated in
a single pass and algebraic relations between them hold to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, IllConditionedError, QuadratureError
from .kernels import DirectionFunctional, KernelSpec
from .quadrature import QuadratureSpec, integrate_log_radial, sphere_area, sphere_directions

__all__ = [
    "Channel",
    "OperatorSpec",
    "OperatorValue",
    "ChannelResult",
    "SandwichReport",
    "mu",
    "evaluate_channels",
    "evaluate_linear",
    "extremal",
    "extremal_eta",
    "evaluate",
    "ellipticity_sandwich_check",
    "default_quadrature",
]

KINK_RATIO = 1.75


def default_quadrature() -> QuadratureSpec:
    return QuadratureSpec()


@dataclass(frozen=True)
class Channel:
    """One integrand ``phi(mu) * weight(y)``.

    ``kind`` is ``"linear"`` (``phi(mu) = mu`` against a kernel), ``"plus"``
    (``Lam mu+ - lam mu-``) or ``"minus"`` (``lam mu+ - Lam mu-``) against
    ``(2 - sigma) / |y|^(n+sigma)``.
    """

    kind: str
    sigma: float
    lam: float = 1.0
    Lam: float = 1.0
    kernel: Optional[KernelSpec] = None

    @classmethod
    def linear(cls, kernel: KernelSpec) -> "Channel":
        return cls("linear", kernel.sigma, kernel.lam, kernel.Lam, kernel)

    @classmethod
    def plus(cls, lam, Lam, sigma) -> "Channel":
        _check_ellipticity(lam, Lam, sigma)
        return cls("plus", float(sigma), float(lam), float(Lam))

    @classmethod
    def minus(cls, lam, Lam, sigma) -> "Channel":
        _check_ellipticity(lam, Lam, sigma)
        return cls("minus", float(sigma), float(lam), float(Lam))

    def phi(self, m):
        if self.kind == "linear":
            return m
        hi, lo = (self.Lam, self.lam) if self.kind == "plus" else (self.lam, self.Lam)
        return hi * np.maximum(m, 0.0) - lo * np.maximum(-m, 0.0)

    def amplitude(self, theta, r):
        """``K(r theta) * r^(n+sigma)`` on directions ``theta``."""
        if self.kind == "linear":
            return (2.0 - self.sigma) * self.kernel.profile(theta, r)
        return np.full(theta.shape[0], 2.0 - self.sigma)

    def weight(self, y, r):
        if self.kind == "linear":
            return self.kernel(y)
        n = y.shape[-1]
        with np.errstate(over="ignore"):
            return (2.0 - self.sigma) / r ** (n + self.sigma)

    @property
    def lipschitz(self) -> float:
        return 1.0 if self.kind == "linear" else self.Lam

    @property
    def upper(self) -> float:
        return self.Lam


def _check_ellipticity(lam, Lam, sigma):
    if not (0.0 < sigma < 2.0):
        raise DomainError(f"sigma must lie in (0, 2), got {sigma}")
    if not (lam > 0 and Lam >= lam):
        raise DomainError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")


@dataclass
class ChannelResult:
    values: np.ndarray
    errors: np.ndarray
    point: np.ndarray
    grad: np.ndarray
    parts: dict = field(default_factory=dict)


def mu(u, x, y, grad, cutoff: float = 1.0):
    """``u(x+y) - u(x) - (grad . y) 1{|y| < cutoff}``, vectorized over ``y``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0 or (y.ndim == 1 and n > 1 and y.size == n)
    yy = y.reshape(-1, n)
    g = np.asarray(grad, dtype=float).reshape(n)
    ux = u.evaluate(x[None, :])[0]
    r = np.linalg.norm(yy, axis=1)
    out = u.evaluate(x[None, :] + yy) - ux - (yy @ g) * (r < cutoff)
    return float(out[0]) if scalar else out


def _field_prop(u, name, default):
    attr = getattr(u, name, None)
    return default if attr is None else attr


def _inner_radius(u, x):
    if hasattr(u, "inner_radius"):
        return float(u.inner_radius(x))
    return 2.0 * u.spacing


def _check_interior(u, x):
    if getattr(u, "formula", None) is None and hasattr(u, "spacing") and hasattr(u, "margin"):
        if u.margin(x) < 2.0 * u.spacing * (1.0 - 1e-9):
            raise DomainError(f"point {np.asarray(x).tolist()} is closer than 2h to the box boundary")


def _kink_check(u, x, H, scale):
    if getattr(u, "exact_derivatives", False):
        return
    h = u.spacing
    H2 = u.hessian(x, step=2.0 * h)
    d1, d2 = np.abs(np.diag(H)), np.abs(np.diag(H2))
    # a kink of slope jump J gives d1 ~ J/h = 2 d2; near inflection points both are small
    bad = (d1 > KINK_RATIO * d2 + scale) & (d1 * h * h > 1e-8 * max(scale, 1e-300))
    if np.any(bad):
        raise IllConditionedError(
            f"second differences at {np.asarray(x).tolist()} grow under refinement; "
            "the principal value is ill-conditioned there", point=np.asarray(x).tolist())


def evaluate_channels(u, x, channels: Sequence[Channel], grad=None, cutoff: float = 1.0,
                      quad: Optional[QuadratureSpec] = None, strict: bool = True) -> ChannelResult:
    """Integrate each channel's ``phi(mu) * weight`` over ``R^n`` at ``x``.

    Parameters
    ----------
    u : GridFunction or BarrierFunction
        Function to evaluate.
    x : array_like
        Evaluation point.
    channels : sequence of Channel
        Integrands sharing the same samples of ``u``.
    grad : array_like, optional
        Gradient used in the compensator; defaults to ``u.gradient(x)``.
    cutoff : float
        Radius of the compensator ball (1 for the full increment, ``R`` for
        the truncated one).
    quad : QuadratureSpec, optional
        Layout and tolerances.
    strict : bool
        Reject points where second differences indicate a kink.
    """
    quad = quad or default_quadrature()
    channels = list(channels)
    if not channels:
        raise DomainError("no channels to evaluate")
    sigma = channels[0].sigma
    if any(abs(c.sigma - sigma) > 0 for c in channels):
        raise DomainError("channels must share sigma")
    if not (0.0 < cutoff <= 1.0):
        raise DomainError("cutoff must lie in (0, 1]")
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    if n != u.n:
        raise DomainError("point dimension does not match the function")
    _check_interior(u, x)
    u0 = float(u.evaluate(x[None, :])[0])
    g_loc = np.asarray(u.gradient(x), dtype=float).reshape(n)
    g = g_loc if grad is None else np.asarray(grad, dtype=float).reshape(n)
    if not np.all(np.isfinite(g)):
        raise DomainError("gradient must be finite")
    adaptive = quad.adaptive and bool(_field_prop(u, "prefers_adaptive", getattr(u, "formula", None) is not None))
    q = quad if adaptive == quad.adaptive else replace(quad, adaptive=adaptive)
    dirs, w, dh, wh = sphere_directions(n, quad.directions)
    C = len(channels)
    delta = _inner_radius(u, x)
    scale = max(abs(u0), u.sup_norm(), 1e-300)

    # inner ball: quadratic model
    H = np.asarray(u.hessian(x), dtype=float)
    if strict:
        _kink_check(u, x, H, scale)
    ell = g_loc - g
    ell_zero = float(np.linalg.norm(ell)) <= 1e-12 * (1.0 + float(np.linalg.norm(g)))
    inner = np.zeros(C)
    inner_h = np.zeros(C)
    r0 = min(delta, cutoff) if ell_zero else 0.0
    if r0 > 0:
        qf = 0.5 * np.einsum("ki,ij,kj->k", dirs, H, dirs)
        qh = 0.5 * np.einsum("ki,ij,kj->k", dh, H, dh) if len(dh) else qf[:0]
        fac = r0 ** (2.0 - sigma) / (2.0 - sigma)
        for i, c in enumerate(channels):
            inner[i] = fac * np.sum(w * c.phi(qf) * c.amplitude(dirs, r0))
            if len(dh):
                inner_h[i] = fac * np.sum(wh * c.phi(qh) * c.amplitude(dh, r0))
            else:
                inner_h[i] = inner[i]
    model_lo = r0
    if not ell_zero:
        if sigma >= 1.0:
            raise IllConditionedError(
                f"compensator gradient differs from the local derivative at {x.tolist()}; "
                "the principal value diverges for sigma >= 1", point=x.tolist())
        model_lo = delta * 1e-12
        lin = np.zeros(C)
        for i, c in enumerate(channels):
            lin[i] = np.sum(w * c.phi(dirs @ ell) * c.amplitude(dirs, model_lo))
        rem = model_lo ** (1.0 - sigma) / (1.0 - sigma)
        inner += rem * lin
        inner_h += rem * lin
    model_part = np.zeros(C)
    model_err = np.zeros(C)
    if model_lo < delta:
        def model_integrand(r):
            y = r[:, None, None] * dirs[None, :, :]
            m = (y @ g_loc) - (y @ g) * (r[:, None] < cutoff) + 0.5 * np.einsum("rki,ij,rkj->rk", y, H, y)
            out = np.empty((r.size, C))
            for i, c in enumerate(channels):
                wt = c.weight(y.reshape(-1, n), np.repeat(r, len(dirs))).reshape(r.size, len(dirs))
                out[:, i] = (c.phi(m) * wt) @ w * r ** (n - 1)
            return out

        res = integrate_log_radial(model_integrand, model_lo, delta, replace(q, adaptive=True), (cutoff,))
        model_part, model_err = res.value, res.error
    inner_total = inner + model_part
    inner_err = np.abs(inner - inner_h) + model_err

    # far field
    ff = u.far_field()
    cap = max(c.upper for c in channels)
    xnorm = float(np.linalg.norm(x))
    tail = np.zeros(C)
    tail_err = np.zeros(C)
    if ff is not None:
        r_far = max(ff.radius + xnorm, 1.0, 2.0 * delta)
        for i, c in enumerate(channels):
            amp = c.amplitude(dirs, r_far)
            mass = np.sum(w * amp) * r_far ** (-sigma) / sigma
            tail[i] = c.phi(np.array([ff.value - u0]))[0] * mass
            if len(dh):
                mass_h = np.sum(wh * c.amplitude(dh, r_far)) * r_far ** (-sigma) / sigma
                tail_err[i] = abs(c.phi(np.array([ff.value - u0]))[0]) * abs(mass - mass_h)
            tail_err[i] += c.lipschitz * ff.deviation * abs(mass)
    else:
        omega = sphere_area(n)
        coef = 2.0 * u.sup_norm() * (2.0 - sigma) * cap * omega / sigma
        target = 0.1 * quad.tail_tol
        r_far = max(1.0, 2.0 * delta, (coef / target) ** (1.0 / sigma) if coef > 0 else 1.0)
        if not math.isfinite(r_far) or r_far > 1e250:
            raise QuadratureError("far-field truncation radius overflows; tail bound cannot be met",
                                  None, coef)
        tail_err[:] = coef * r_far ** (-sigma)

    # rings
    kinks = [cutoff, 1.0] + list(_field_prop(u, "kink_radii", lambda _x: [])(x))
    kinks = [k for k in kinks if delta < k < r_far]
    nd = len(dirs)

    def ring_integrand(r):
        y = r[:, None, None] * dirs[None, :, :]
        flat = y.reshape(-1, n)
        vals = u.evaluate(x[None, :] + flat).reshape(r.size, nd)
        lin = (y @ g) * (r[:, None] < cutoff)
        m = vals - u0 - lin
        size = np.abs(vals) + abs(u0) + np.abs(lin)
        rr = np.repeat(r, nd)
        cols, mags = [], []
        for c in channels:
            wt = c.weight(flat, rr).reshape(r.size, nd)
            pw = c.phi(m) * wt
            sw = c.lipschitz * size * wt
            cols.append(pw @ w)
            mags.append(sw @ w)
            if len(dh):
                cols.append(_half(pw, n) @ wh)
                mags.append(_half(sw, n) @ wh)
        out = np.stack(cols + mags, axis=1)
        return out * (r ** (n - 1))[:, None]

    res = integrate_log_radial(ring_integrand, delta, r_far, q, kinks, magnitudes=True)
    if len(dh):
        ring_full = res.value[0::2]
        ring_half = res.value[1::2]
        ring_err = res.error[0::2] + np.abs(ring_full - ring_half)
    else:
        ring_full, ring_err = res.value, res.error
    if not res.converged:
        raise QuadratureError(f"ring quadrature did not converge at {x.tolist()}",
                              inner_total + ring_full + tail, float(np.max(ring_err)))
    values = inner_total + ring_full + tail
    errors = inner_err + ring_err + tail_err
    parts = {"inner": inner_total, "rings": ring_full, "tail": tail, "delta": delta, "r_far": r_far,
             "panels": res.panels}
    return ChannelResult(values, errors, x, g, parts)


def _half(pw, n):
    """Columns of the companion direction rule."""
    if n == 2:
        return pw[:, ::2]
    half = pw.shape[1] // 2
    sub = np.arange(0, half, 2)
    return pw[:, np.concatenate([sub, half + sub])]


@dataclass
class OperatorValue:
    """Result of one pointwise evaluation."""

    value: float
    error: float
    kind: str
    point: list
    grad: Optional[list] = None

    def to_dict(self) -> dict:
        return {"point": self.point, "operator": self.kind, "value": self.value,
                "error_estimate": self.error}


@dataclass(frozen=True)
class OperatorSpec:
    """Operator description.

    ``kind`` is one of ``linear``, ``extremal_plus``, ``extremal_minus``,
    ``extremal_plus_truncated``, ``extremal_minus_truncated``,
    ``extremal_eta_plus``, ``extremal_eta_minus``, ``family_max``,
    ``family_min`` or ``isaacs`` (min over groups of the max within each
    group).
    """

    kind: str
    sigma: float
    lam: float = 1.0
    Lam: float = 1.0
    R: float = 1.0
    kernels: tuple = ()
    groups: tuple = ()
    functional: Optional[DirectionFunctional] = None
    C: Optional[float] = None
    quadrature: QuadratureSpec = field(default_factory=default_quadrature)

    KINDS = ("linear", "extremal_plus", "extremal_minus", "extremal_plus_truncated",
             "extremal_minus_truncated", "extremal_eta_plus", "extremal_eta_minus",
             "family_max", "family_min", "isaacs")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown operator kind '{self.kind}'")
        _check_ellipticity(self.lam, self.Lam, self.sigma)
        if not (0.0 < self.R <= 1.0):
            raise DomainError("R must lie in (0, 1]")
        if self.kind == "linear" and len(self.kernels) != 1:
            raise DomainError("linear operator needs exactly one kernel")
        if self.kind in ("family_max", "family_min") and not self.kernels:
            raise DomainError("family operator needs kernels")
        if self.kind == "isaacs" and not self.groups:
            raise DomainError("isaacs operator needs groups of kernels")

    @classmethod
    def linear(cls, kernel: KernelSpec, quadrature=None):
        return cls("linear", kernel.sigma, kernel.lam, kernel.Lam, kernels=(kernel,),
                   quadrature=quadrature or default_quadrature())

    @classmethod
    def extremal(cls, sign: str, lam, Lam, sigma, R=None, quadrature=None):
        base = "extremal_plus" if sign in ("+", "plus") else "extremal_minus"
        kind = base + ("_truncated" if R is not None else "")
        return cls(kind, float(sigma), float(lam), float(Lam), 1.0 if R is None else float(R),
                   quadrature=quadrature or default_quadrature())

    @classmethod
    def eta(cls, sign: str, lam, Lam, sigma, R, functional: Optional[DirectionFunctional] = None,
            C: Optional[float] = None, quadrature=None):
        kind = "extremal_eta_plus" if sign in ("+", "plus") else "extremal_eta_minus"
        return cls(kind, float(sigma), float(lam), float(Lam), float(R), functional=functional, C=C,
                   quadrature=quadrature or default_quadrature())

    @classmethod
    def family(cls, kernels: Sequence[KernelSpec], mode: str = "max", quadrature=None):
        ks = tuple(kernels)
        if not ks:
            raise DomainError("family operator needs kernels")
        return cls("family_" + mode, ks[0].sigma, min(k.lam for k in ks), max(k.Lam for k in ks),
                   kernels=ks, quadrature=quadrature or default_quadrature())

    @classmethod
    def isaacs(cls, groups: Sequence[Sequence[KernelSpec]], quadrature=None):
        gs = tuple(tuple(g) for g in groups)
        allk = [k for g in gs for k in g]
        if not allk:
            raise DomainError("isaacs operator needs kernels")
        return cls("isaacs", allk[0].sigma, min(k.lam for k in allk), max(k.Lam for k in allk),
                   groups=gs, quadrature=quadrature or default_quadrature())

    @property
    def cutoff(self) -> float:
        return self.R if ("truncated" in self.kind or "eta" in self.kind) else 1.0

    def eta_constant(self, n: int) -> float:
        return self.Lam * sphere_area(n) if self.C is None else float(self.C)

    def channels(self):
        """Channels to integrate and a reducer mapping their values to the operator value."""
        if self.kind == "linear":
            return [Channel.linear(self.kernels[0])], lambda v: v[0]
        if self.kind.startswith("extremal"):
            plus = "plus" in self.kind
            ch = Channel.plus(self.lam, self.Lam, self.sigma) if plus else Channel.minus(self.lam, self.Lam, self.sigma)
            return [ch], lambda v: v[0]
        if self.kind in ("family_max", "family_min"):
            chs = [Channel.linear(k) for k in self.kernels]
            red = np.max if self.kind == "family_max" else np.min
            return chs, lambda v: float(red(v))
        chs, sizes = [], []
        for g in self.groups:
            chs.extend(Channel.linear(k) for k in g)
            sizes.append(len(g))
        bounds = np.cumsum([0] + sizes)

        def red(v):
            return float(min(np.max(v[bounds[i]:bounds[i + 1]]) for i in range(len(sizes))))

        return chs, red

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "sigma": self.sigma, "lambda": self.lam, "Lambda": self.Lam, "R": self.R,
             "quadrature": self.quadrature.to_dict()}
        if self.kernels:
            d["kernels"] = [k.to_dict() for k in self.kernels]
        if self.groups:
            d["groups"] = [[k.to_dict() for k in g] for g in self.groups]
        if self.functional is not None:
            d["functional"] = self.functional.to_dict()
        if self.C is not None:
            d["C"] = self.C
        return d


def _eta_correction(spec: OperatorSpec, g: np.ndarray) -> float:
    fun = spec.functional or DirectionFunctional.zero(g.size)
    C = spec.eta_constant(g.size)
    gnorm = float(np.linalg.norm(g))
    extra = (2.0 - spec.sigma) * C * spec.R ** (1.0 - spec.sigma) * gnorm
    if spec.kind == "extremal_eta_plus":
        return float(fun.plus(g)[0]) + extra
    return -(float(fun.minus(g)[0]) + extra)


def evaluate(spec: OperatorSpec, u, x, grad=None, strict: bool = True) -> OperatorValue:
    """Evaluate the operator described by ``spec`` at ``x``."""
    chs, red = spec.channels()
    res = evaluate_channels(u, x, chs, grad, spec.cutoff, spec.quadrature, strict)
    value = float(red(res.values))
    err = float(np.max(res.errors))
    if spec.kind.startswith("extremal_eta"):
        value += _eta_correction(spec, res.grad)
    return OperatorValue(value, err, spec.kind, res.point.tolist(), res.grad.tolist())


def evaluate_linear(kernel: KernelSpec, u, x, grad=None, cutoff: float = 1.0,
                    quad: Optional[QuadratureSpec] = None, strict: bool = True) -> OperatorValue:
    """Principal value ``L u(x)`` for the kernel."""
    res = evaluate_channels(u, x, [Channel.linear(kernel)], grad, cutoff, quad, strict)
    return OperatorValue(float(res.values[0]), float(res.errors[0]), "linear", res.point.tolist(),
                         res.grad.tolist())


def extremal(u, x, grad=None, spec: Optional[OperatorSpec] = None, strict: bool = True) -> OperatorValue:
    """``M+`` or ``M-`` (full or truncated) as selected by ``spec.kind``."""
    if spec is None or not spec.kind.startswith("extremal") or "eta" in spec.kind:
        raise DomainError("extremal needs an extremal operator spec")
    return evaluate(spec, u, x, grad, strict)


def extremal_eta(u, x, grad=None, spec: Optional[OperatorSpec] = None, strict: bool = True) -> OperatorValue:
    """Truncated extremal operator plus the drift and gradient corrections."""
    if spec is None or not spec.kind.startswith("extremal_eta"):
        raise DomainError("extremal_eta needs an eta operator spec")
    return evaluate(spec, u, x, grad, strict)


@dataclass
class SandwichReport:
    passed: bool
    worst_margin: float
    tolerance: float
    rows: list

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst_margin": self.worst_margin, "tolerance": self.tolerance,
                "rows": self.rows}


def ellipticity_sandwich_check(family: Sequence[KernelSpec], u, v, points, quad=None,
                               rtol: float = 1e-6) -> SandwichReport:
    """Check ``M-[u-v] <= J u - J v <= M+[u-v]`` for ``J`` the max and min over the family.

    The class bounds are the smallest ``lambda`` and largest ``Lambda`` in the
    family.  The margin at a point is normalized by the largest magnitude
    involved; the check passes when every normalized margin is at least
    ``-rtol`` beyond the combined quadrature error.
    """
    family = list(family)
    if not family:
        raise DomainError("family is empty")
    lam = min(k.lam for k in family)
    Lam = max(k.Lam for k in family)
    sig = family[0].sigma
    lin = [Channel.linear(k) for k in family]
    ext = [Channel.minus(lam, Lam, sig), Channel.plus(lam, Lam, sig)]
    d = u - v
    rows = []
    worst = math.inf
    ok = True
    for x in points:
        ru = evaluate_channels(u, x, lin, quad=quad)
        rv = evaluate_channels(v, x, lin, quad=quad)
        rd = evaluate_channels(d, x, ext, quad=quad)
        mminus, mplus = rd.values
        err = float(np.max(ru.errors) + np.max(rv.errors) + np.max(rd.errors))
        for mode, red in (("max", np.max), ("min", np.min)):
            diff = float(red(ru.values) - red(rv.values))
            scale = max(abs(mminus), abs(mplus), float(np.max(np.abs(ru.values))),
                        float(np.max(np.abs(rv.values))), 1e-300)
            margin = min(diff - mminus, mplus - diff)
            norm_margin = margin / scale
            tol = rtol + err / scale
            ok &= norm_margin >= -tol
            worst = min(worst, norm_margin)
            rows.append({"point": np.asarray(x).tolist(), "mode": mode, "m_minus": mminus, "difference": diff,
                         "m_plus": mplus, "margin": margin, "normalized_margin": norm_margin})
    return SandwichReport(bool(ok), float(worst), rtol, rows)
