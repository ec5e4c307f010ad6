"""Radial subsolution barriers and numerical certificates for them.

Three profiles are provided: the capped power ``min{(delta R)^-p, |x|^-p}``,
the stretched exponential ``exp(-p |x|^(sigma/4))`` and the capped function
``Psi`` built from either of them.  Free constants are searched and every
claim ``M- f >= 0`` is witnessed by quadrature at two resolutions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import CertificationError, DomainError
from .grid import FarField
from .operators import Channel, default_quadrature, evaluate_channels
from .quadrature import QuadratureSpec
from .parallel import pmap as _pmap

__all__ = [
    "BarrierFunction",
    "BarrierCertificate",
    "ParameterSearch",
    "PsiResult",
    "make_power_barrier",
    "make_exp_barrier",
    "make_psi",
    "certify_subsolution",
    "radial_consistency",
    "find_parameters",
    "build_psi",
    "sigma_star_scan",
]

INNER_FRACTION = 1e-3
FAR_RELATIVE = 1e-13
SEAM_GAP = 4e-3


@dataclass(frozen=True)
class BarrierFunction:
    """A radial barrier with closed-form value, gradient and Hessian.

    Parameters
    ----------
    kind : str
        ``"power"``, ``"exponential"`` or ``"psi_capped"``.
    p : float
        Exponent of the base profile.
    sigma : float
        Order of the operator the barrier is built for.
    R : float
        Reference radius.
    delta : float, optional
        Plateau scale of the power profile.
    c : float, optional
        Amplitude of the capped function.
    n : int
        Dimension.
    base : str, optional
        Base profile of ``psi_capped`` (``"power"`` or ``"exponential"``).
    """

    kind: str
    p: float
    sigma: float
    R: float = 1.0
    delta: Optional[float] = None
    c: Optional[float] = None
    n: int = 1
    base: Optional[str] = None
    cap_radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("power", "exponential", "psi_capped"):
            raise DomainError(f"unknown barrier kind '{self.kind}'")
        if not (self.p > 0 and math.isfinite(self.p)):
            raise DomainError("p must be positive")
        if not (0.0 < self.sigma < 2.0):
            raise DomainError("sigma must lie in (0, 2)")
        if not (0.0 < self.R <= 1.0):
            raise DomainError("R must lie in (0, 1]")
        if self.n < 1:
            raise DomainError("dimension must be >= 1")
        base = self.kind if self.kind != "psi_capped" else self.base
        if base == "power" and not (self.delta is not None and 0.0 < self.delta < 1.0):
            raise DomainError("power profile needs delta in (0, 1)")
        if base == "exponential" and self.sigma > 1.0:
            raise DomainError("the exponential profile is used only for sigma in (0, 1]")
        if self.kind == "psi_capped":
            if base not in ("power", "exponential"):
                raise DomainError("psi_capped needs base 'power' or 'exponential'")
            if not (self.c is not None and self.c > 0):
                raise DomainError("psi_capped needs amplitude c > 0")
            if self.cap_radius is not None and not (0.0 < self.cap_radius <= self.R / 4.0):
                raise DomainError("cap_radius must lie in (0, R/4]")

    # radial profiles -------------------------------------------------
    @property
    def base_kind(self) -> str:
        return self.kind if self.kind != "psi_capped" else self.base

    @property
    def alpha(self) -> float:
        return self.sigma / 4.0

    @property
    def r_cap(self) -> float:
        return self.R / 4.0 if self.cap_radius is None else self.cap_radius

    @property
    def outer_radius(self) -> float:
        return 2.0 * math.sqrt(self.n) * self.R

    def _base(self, r):
        r = np.asarray(r, dtype=float)
        p = self.p
        if self.base_kind == "power":
            cut = self.delta * self.R
            rr = np.maximum(r, cut)
            g = rr ** (-p)
            g1 = np.where(r > cut, -p * rr ** (-p - 1.0), 0.0)
            g2 = np.where(r > cut, p * (p + 1.0) * rr ** (-p - 2.0), 0.0)
            return g, g1, g2
        a = self.alpha
        rs = np.maximum(r, 1e-300)
        g = np.exp(-p * r**a)
        with np.errstate(over="ignore", invalid="ignore"):
            g1 = np.where(r > 0, -p * a * rs ** (a - 1.0) * g, -np.inf)
            g2 = np.where(r > 0, g * (p * p * a * a * rs ** (2 * a - 2) - p * a * (a - 1.0) * rs ** (a - 2.0)), np.inf)
        return g, g1, g2

    @property
    def cap(self):
        """Paraboloid coefficients ``(a, b)`` with ``P = a - b |x|^2``."""
        r4 = self.r_cap
        f4, d4, _ = self._base(r4)
        f2 = float(self._base(self.outer_radius)[0])
        b = -float(d4) * self.c / (2.0 * r4)
        a = self.c * (float(f4) - f2) + b * r4 * r4
        return a, b

    def profile(self, r):
        """Radial value, first and second derivative at radii ``r``."""
        r = np.asarray(r, dtype=float)
        if self.kind != "psi_capped":
            return self._base(r)
        a, b = self.cap
        r4, ro = self.r_cap, self.outer_radius
        f, f1, f2 = self._base(np.clip(r, r4, None))
        fo = float(self._base(ro)[0])
        inner = r < r4
        outer = r >= ro
        g = np.where(inner, a - b * r * r, np.where(outer, 0.0, self.c * (f - fo)))
        g1 = np.where(inner, -2.0 * b * r, np.where(outer, 0.0, self.c * f1))
        g2 = np.where(inner, -2.0 * b, np.where(outer, 0.0, self.c * f2))
        return g, g1, g2

    # field protocol used by the operator evaluator --------------------
    prefers_adaptive = True
    exact_derivatives = True

    def evaluate(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.n)
        # far tail samples may overflow to r = inf, where every profile is 0
        with np.errstate(over="ignore"):
            r = np.linalg.norm(points, axis=1)
        return self.profile(r)[0]

    __call__ = evaluate

    def gradient(self, x, step=None) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return np.zeros(self.n)
        _, g1, _ = self.profile(r)
        return float(g1) * x / r

    def hessian(self, x, step=None) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        r = float(np.linalg.norm(x))
        _, g1, g2 = self.profile(max(r, 0.0))
        if r == 0.0:
            return float(g2) * np.eye(self.n)
        e = x / r
        P = np.outer(e, e)
        return float(g2) * P + float(g1) / r * (np.eye(self.n) - P)

    def seams(self) -> list:
        out = []
        if self.base_kind == "power":
            out.append(self.delta * self.R)
        if self.kind == "psi_capped":
            out += [self.r_cap, self.outer_radius]
        return out

    def inner_radius(self, x) -> float:
        r = float(np.linalg.norm(x))
        base = INNER_FRACTION * max(r, self.R / 4.0) / (1.0 + self.p)
        for s in self.seams():
            d = abs(r - s)
            if d > 0:
                base = min(base, 0.5 * d)
        return max(base, 1e-9 * max(r, self.R))

    def kink_radii(self, x) -> list:
        r = float(np.linalg.norm(x))
        out = [r] if self.base_kind == "exponential" else []
        for s in self.seams():
            out += [abs(s - r), s + r]
        return [v for v in out if v > 0]

    def sup_norm(self) -> float:
        return float(self.profile(0.0)[0])

    def far_field(self) -> FarField:
        if self.kind == "psi_capped":
            return FarField(self.outer_radius, 0.0, 0.0)
        ref = float(self._base(64.0 * self.R)[0])
        dev = FAR_RELATIVE * ref
        if self.base_kind == "power":
            rho = dev ** (-1.0 / self.p)
        else:
            rho = (-math.log(dev) / self.p) ** (1.0 / self.alpha)
        rho = min(max(rho, 64.0 * self.R), 1e200)
        return FarField(rho, 0.0, float(self._base(rho)[0]))

    def scale(self, r) -> float:
        """Normalizer for ``M- f`` at radius ``r``."""
        r = max(float(r), self.R / 4.0)
        if self.kind == "psi_capped":
            return self.sup_norm() * self.R ** (-self.sigma)
        return float(self._base(r)[0]) * r ** (-self.sigma)

    def with_sigma(self, sigma) -> "BarrierFunction":
        return replace(self, sigma=float(sigma))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "p": self.p, "sigma": self.sigma, "R": self.R, "n": self.n}
        if self.delta is not None:
            d["delta"] = self.delta
        if self.kind == "psi_capped":
            a, b = self.cap
            d.update({"c": self.c, "base": self.base, "cap_radius": self.r_cap, "cap_a": a, "cap_b": b})
        return d


def make_power_barrier(p, delta, R, sigma, n: int = 1) -> BarrierFunction:
    """``min{delta^-p R^-p, |x|^-p}``."""
    return BarrierFunction("power", float(p), float(sigma), float(R), delta=float(delta), n=int(n))


def make_exp_barrier(p, sigma, n: int = 1, R: float = 1.0) -> BarrierFunction:
    """``exp(-p |x|^(sigma/4))``; only for ``sigma <= 1``."""
    if sigma > 1.0:
        raise DomainError("the exponential barrier is defined for sigma in (0, 1]")
    return BarrierFunction("exponential", float(p), float(sigma), float(R), n=int(n))


def make_psi(base: str, p, sigma, R, n: int = 1, delta=None, c: Optional[float] = None,
             margin: float = 1.01, cap_radius: Optional[float] = None) -> BarrierFunction:
    """Capped function with amplitude chosen so that ``Psi > 2`` on ``Q_{3R}``.

    With ``c=None`` the amplitude is ``2 * margin`` divided by the profile
    drop between the cube corner ``1.5 sqrt(n) R`` and ``2 sqrt(n) R``.
    """
    probe = BarrierFunction("psi_capped", float(p), float(sigma), float(R),
                            delta=None if delta is None else float(delta), c=1.0, n=int(n), base=base,
                            cap_radius=None if cap_radius is None else float(cap_radius))
    if c is None:
        corner = 1.5 * math.sqrt(n) * R
        drop = float(probe.profile(corner)[0])
        if not (drop > 0 and math.isfinite(drop)):
            raise CertificationError("profile does not drop between the cube corner and the support edge",
                                     best=drop)
        c = 2.0 * margin / drop
        if not math.isfinite(c) or c > 1e300:
            raise CertificationError("amplitude needed for Psi > 2 is unbounded", best=drop)
    return replace(probe, c=float(c))


@dataclass
class BarrierCertificate:
    """Sampled witness of ``M- f >= 0`` on an annulus."""

    barrier: BarrierFunction
    annulus: tuple
    worst_margin: float
    sample_count: int
    tolerance: float
    passed: bool
    lam: float
    Lam: float
    radii: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    quadrature: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "barrier": self.barrier.to_dict(),
            "annulus": list(self.annulus),
            "worst_margin": self.worst_margin,
            "sample_count": self.sample_count,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "lambda": self.lam,
            "Lambda": self.Lam,
            "radii": self.radii,
            "margins": self.margins,
            "errors": self.errors,
            "quadrature": self.quadrature,
        }


def _sample_radii(barrier, annulus, samples):
    r_in, r_out = float(annulus[0]), float(annulus[1])
    if not (0.0 < r_in < r_out):
        raise DomainError("annulus needs 0 < r_in < r_out")
    r = np.geomspace(r_in, r_out, int(samples))
    for s in barrier.seams():
        near = np.abs(r - s) < SEAM_GAP * s
        r[near] = np.where(r[near] >= s, s * (1 + SEAM_GAP), s * (1 - SEAM_GAP))
    return np.clip(r, r_in, r_out * (1 - SEAM_GAP) if barrier.kind == "psi_capped" else r_out)


def _m_minus(barrier, x, lam, Lam, quad):
    ch = Channel.minus(lam, Lam, barrier.sigma)
    res = evaluate_channels(barrier, x, [ch], quad=quad)
    return float(res.values[0]), float(res.errors[0])


def certify_subsolution(barrier: BarrierFunction, lam, Lam, annulus, samples: int = 16,
                        quad: Optional[QuadratureSpec] = None) -> BarrierCertificate:
    """Evaluate ``M- f`` along one ray at log-spaced radii in ``annulus``.

    Margins are normalized by ``f(r) r^-sigma`` (by ``Psi(0) R^-sigma`` for
    the capped kind).  ``passed`` holds when the worst margin is at least
    minus the largest normalized quadrature error.
    """
    quad = quad or default_quadrature()
    radii = _sample_radii(barrier, annulus, samples)
    e = np.zeros(barrier.n)
    e[-1] = 1.0
    margins, errors = [], []
    for r in radii:
        v, err = _m_minus(barrier, r * e, lam, Lam, quad)
        s = barrier.scale(r)
        margins.append(v / s)
        errors.append(err / s)
    worst = float(min(margins))
    tol = float(max(errors))
    return BarrierCertificate(barrier, (float(annulus[0]), float(annulus[1])), worst, len(radii), tol,
                              bool(worst >= -tol), float(lam), float(Lam), radii.tolist(), margins, errors,
                              quad.to_dict())


def radial_consistency(barrier: BarrierFunction, lam, Lam, r, directions: int = 8, seed: int = 0,
                       quad: Optional[QuadratureSpec] = None):
    """``M- f`` at radius ``r`` along random directions; returns values and errors."""
    quad = quad or default_quadrature()
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((directions, barrier.n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    vals, errs = [], []
    for th in d:
        v, e = _m_minus(barrier, r * th, lam, Lam, quad)
        vals.append(v)
        errs.append(e)
    return np.array(vals), np.array(errs)


@dataclass
class ParameterSearch:
    """Outcome of :func:`find_parameters`."""

    kind: str
    p: float
    delta: Optional[float]
    margin: float
    certificate: BarrierCertificate
    refined: BarrierCertificate
    trials: list
    sigma_star: Optional[float] = None
    sigma_scan: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "delta": self.delta,
            "margin": self.margin,
            "certificate": self.certificate.to_dict(),
            "refined_certificate": self.refined.to_dict(),
            "trials": self.trials,
            "sigma_star": self.sigma_star,
            "sigma_scan": self.sigma_scan,
            "warnings": self.warnings,
        }


def default_annulus(kind: str, R: float, n: int):
    if kind == "power":
        return (R / 4.0, 16.0 * R)
    return (R / 4.0, 2.0 * math.sqrt(n) * R)


def _make(kind, p, delta, R, sigma, n):
    if kind == "power":
        return make_power_barrier(p, delta, R, sigma, n)
    if kind == "exponential":
        return make_exp_barrier(p, sigma, n, R)
    raise DomainError(f"unknown barrier kind '{kind}'")


def find_parameters(kind: str, lam, Lam, n: int, sigma, R: Optional[float] = None, annulus=None,
                    p_grid=None, delta_grid=None, samples: int = 12, quad: Optional[QuadratureSpec] = None,
                    scan_sigma_star: bool = False) -> ParameterSearch:
    """Search ``p`` (and ``delta`` for the power kind) for a certified barrier.

    The smallest ``p`` on the grid whose best ``delta`` gives a nonnegative
    worst margin at both the base and the doubled quadrature resolution is
    returned.  Ties in ``delta`` go to the larger margin, then to search
    order.
    """
    quad = quad or default_quadrature()
    if kind not in ("power", "exponential"):
        raise DomainError(f"unknown barrier kind '{kind}'")
    if kind == "exponential" and sigma > 1.0:
        raise DomainError("the exponential barrier is defined for sigma in (0, 1]")
    R = (1.0 if kind == "power" else 0.05) if R is None else float(R)
    annulus = default_annulus(kind, R, n) if annulus is None else tuple(annulus)
    p_grid = np.geomspace(0.5, 64.0, 22) if p_grid is None else np.asarray(p_grid, dtype=float)
    if kind == "power":
        delta_grid = np.geomspace(0.01, 0.5, 6) if delta_grid is None else np.asarray(delta_grid, dtype=float)
    else:
        delta_grid = np.array([np.nan])
    items = [(float(p), float(d)) for p in p_grid for d in delta_grid]

    def trial(item):
        p, d = item
        b = _make(kind, p, None if math.isnan(d) else d, R, sigma, n)
        try:
            cert = certify_subsolution(b, lam, Lam, annulus, samples, quad)
        except Exception as exc:  # noqa: BLE001 - a failed trial is data, not an abort
            return {"p": p, "delta": None if math.isnan(d) else d, "margin": -math.inf, "error": str(exc)}, None
        return {"p": p, "delta": None if math.isnan(d) else d, "margin": cert.worst_margin,
                "tolerance": cert.tolerance}, cert

    results = _pmap(trial, items)
    trials = [t for t, _ in results]
    best_fail = max(t["margin"] for t in trials)
    chosen = None
    for p in p_grid:
        cands = [(t, c) for t, c in results if t["p"] == float(p) and c is not None and t["margin"] >= 0]
        cands.sort(key=lambda tc: -tc[0]["margin"])
        for t, cert in cands:
            refined = certify_subsolution(cert.barrier, lam, Lam, annulus, samples, quad.refined())
            if refined.worst_margin >= 0:
                chosen = (t, cert, refined)
                break
        if chosen:
            break
    if chosen is None:
        raise CertificationError(f"no {kind} barrier on the search grid certifies at sigma={sigma}",
                                 best=best_fail)
    t, cert, refined = chosen
    out = ParameterSearch(kind, t["p"], t["delta"], cert.worst_margin, cert, refined, trials)
    if scan_sigma_star and kind == "power":
        out.sigma_star, out.sigma_scan, out.warnings = sigma_star_scan(cert.barrier, lam, Lam, annulus,
                                                                       samples=samples, quad=quad)
    return out


def sigma_star_scan(barrier: BarrierFunction, lam, Lam, annulus, sigmas=None, samples: int = 8,
                    quad: Optional[QuadratureSpec] = None):
    """Empirical threshold below which the fixed power barrier stops certifying.

    Returns ``(sigma_star, rows, warnings)``: ``sigma_star`` is the smallest
    grid value from which every larger grid value certifies, ``rows`` holds
    the margins and ``warnings`` lists breaks of monotonicity in ``sigma``.
    """
    sigmas = np.round(np.arange(1.05, 1.96, 0.05), 10) if sigmas is None else np.asarray(sigmas, dtype=float)

    def run(s):
        cert = certify_subsolution(barrier.with_sigma(float(s)), lam, Lam, annulus, samples, quad)
        return {"sigma": float(s), "margin": cert.worst_margin, "passed": cert.worst_margin >= 0}

    rows = _pmap(run, list(sigmas))
    star = None
    for row in reversed(rows):
        if not row["passed"]:
            break
        star = row["sigma"]
    notes = []
    for a, b in zip(rows, rows[1:]):
        if b["margin"] < a["margin"] and a["sigma"] >= (star if star is not None else math.inf):
            msg = f"margin decreases from sigma={a['sigma']} to sigma={b['sigma']}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return star, rows, notes


@dataclass
class PsiResult:
    """Capped barrier, its certificate and the forcing profile on ``B_{R/4}``."""

    barrier: BarrierFunction
    certificate: BarrierCertificate
    refined: BarrierCertificate
    psi_radii: list
    psi_values: list
    psi_sup: float
    min_q3r: float
    max_value: float
    search: list = field(default_factory=list)

    def psi(self, points) -> np.ndarray:
        """Piecewise-linear interpolation of the sampled forcing profile, zero outside ``B_{R/4}``."""
        points = np.asarray(points, dtype=float).reshape(-1, self.barrier.n)
        r = np.linalg.norm(points, axis=1)
        vals = np.interp(r, self.psi_radii, self.psi_values)
        return np.where(r <= self.barrier.R / 4.0, vals, 0.0)

    def to_dict(self) -> dict:
        return {
            "barrier": self.barrier.to_dict(),
            "certificate": self.certificate.to_dict(),
            "refined_certificate": self.refined.to_dict(),
            "psi_radii": self.psi_radii,
            "psi_values": self.psi_values,
            "psi_sup": self.psi_sup,
            "min_Q3R": self.min_q3r,
            "max_value": self.max_value,
            "search": self.search,
        }


def cube_min(barrier: BarrierFunction, per_axis: int = 17) -> float:
    """Minimum of the barrier over a node grid of ``Q_{3R}`` (corners included)."""
    ax = np.linspace(-1.5 * barrier.R, 1.5 * barrier.R, per_axis)
    pts = np.stack(np.meshgrid(*([ax] * barrier.n), indexing="ij"), axis=-1).reshape(-1, barrier.n)
    return float(np.min(barrier.evaluate(pts)))


def build_psi(R, sigma, lam, Lam, n: int = 1, p_grid=None, delta_grid=None, samples: int = 12,
              psi_samples: int = 9, quad: Optional[QuadratureSpec] = None,
              cap_factors=(1, 2, 4, 8, 16)) -> PsiResult:
    """Search and certify the capped barrier, then record the forcing profile.

    The base profile is exponential for ``sigma <= 1`` and the capped power
    otherwise.  Certification covers ``R/4 <= |x| < 2 sqrt(n) R``.  The cap
    first sits on ``B_{R/4}``; when no exponent certifies, its radius is
    shrunk to ``R/(4k)`` for ``k`` in ``cap_factors`` so that the negative
    layer of ``M- Psi`` around the cap stays inside ``B_{R/4}``.
    """
    quad = quad or default_quadrature()
    if not (0.0 < R <= 1.0):
        raise DomainError("R must lie in (0, 1]")
    base = "exponential" if sigma <= 1.0 else "power"
    p_grid = np.geomspace(0.5, 64.0, 22) if p_grid is None else np.asarray(p_grid, dtype=float)
    if base == "power":
        delta_grid = np.geomspace(0.01, 0.2, 4) if delta_grid is None else np.asarray(delta_grid, dtype=float)
    else:
        delta_grid = np.array([np.nan])
    annulus = (R / 4.0, 2.0 * math.sqrt(n) * R)
    trials = []
    chosen = None
    for k in cap_factors:
        rc = R / (4.0 * k)
        items = [(float(p), float(d)) for p in p_grid for d in delta_grid]

        def trial(item, rc=rc):
            p, d = item
            rec = {"cap_radius": rc, "p": p, "delta": None if math.isnan(d) else d}
            try:
                b = make_psi(base, p, sigma, R, n, rec["delta"], cap_radius=rc)
                cert = certify_subsolution(b, lam, Lam, annulus, samples, quad)
            except Exception as exc:  # noqa: BLE001 - a failed trial is data, not an abort
                rec.update(margin=-math.inf, error=str(exc))
                return rec, None
            rec["margin"] = cert.worst_margin
            return rec, cert

        results = _pmap(trial, items)
        trials += [t for t, _ in results]
        for p in p_grid:
            cands = [(t, c) for t, c in results if t["p"] == float(p) and c is not None and t["margin"] >= 0]
            cands.sort(key=lambda tc: -tc[0]["margin"])
            for t, cert in cands:
                refined = certify_subsolution(cert.barrier, lam, Lam, annulus, samples, quad.refined())
                if refined.worst_margin >= 0:
                    chosen = (cert, refined)
                    break
            if chosen:
                break
        if chosen:
            break
    if chosen is None:
        raise CertificationError(f"no capped barrier certifies at sigma={sigma}, R={R}",
                                 best=max(t["margin"] for t in trials))
    cert, refined = chosen
    b = cert.barrier
    radii = np.linspace(0.0, R / 4.0 * (1 - SEAM_GAP), psi_samples)
    e = np.zeros(n)
    e[-1] = 1.0
    vals = []
    for r in radii:
        v, _ = _m_minus(b, r * e, lam, Lam, quad)
        vals.append(max(0.0, -(R**sigma) * v))
    radii = np.append(radii, R / 4.0)
    vals.append(vals[-1])
    return PsiResult(b, cert, refined, radii.tolist(), vals, float(max(vals)), cube_min(b), b.sup_norm(), trials)
