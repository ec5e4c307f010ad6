"""Kernels comparable to ``(2 - sigma) / |y|^(n + sigma)``, drift vectors and
eta-classification of operator families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, QuadratureError
from .quadrature import (
    QuadratureSpec,
    fixed_radial_rule,
    integrate_adaptive,
    integrate_log_radial,
    sphere_area,
    sphere_directions,
)

__all__ = [
    "KernelSpec",
    "KernelVerification",
    "DriftVector",
    "DirectionFunctional",
    "EtaClassification",
    "TranslationRegularity",
    "radial_kernel",
    "split_kernel",
    "cosine_kernel",
    "mixture_kernel",
    "kernel_from_config",
    "load_toml",
    "j_sigma",
    "verify_kernel_class",
    "drift_vector",
    "classify_eta_single",
    "classify_eta_family",
    "eta_from_drifts",
    "translation_regularity",
    "random_direction_sample",
]

DRIFT_ZERO_FLOOR = 1e-10


def _as_points(y, n):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, n) if n > 1 else y[:, None]
    return y


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A nonnegative kernel with ellipticity data.

    Parameters
    ----------
    sigma : float
        Order in ``(0, 2)``.
    lam, Lam : float
        Ellipticity bounds ``0 < lam <= Lam``.
    evaluator : callable
        Vectorized ``K``: points of shape ``(m, n)`` to values ``(m,)``.
    dimension : int
        Ambient dimension ``n``.
    symmetry_declared : bool
        Claim that ``K(-y) = K(y)``.
    amplitude : callable, optional
        Angular profile ``a`` with ``K(y) = (2 - sigma) a(y/|y|) / |y|^(n+sigma)``
        for homogeneous kernels.  Used for closed-form inner-ball and tail
        contributions; when absent the profile is sampled from ``evaluator``.
    kind, params : str, dict
        Provenance for serialization.
    """

    sigma: float
    lam: float
    Lam: float
    evaluator: Callable
    dimension: int = 1
    symmetry_declared: bool = False
    amplitude: Optional[Callable] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.sigma < 2.0):
            raise DomainError(f"sigma must lie in (0, 2), got {self.sigma}")
        if not (self.lam > 0 and self.Lam >= self.lam):
            raise DomainError(f"need 0 < lambda <= Lambda, got {self.lam}, {self.Lam}")
        if int(self.dimension) < 1:
            raise DomainError("dimension must be >= 1")

    @property
    def n(self) -> int:
        return int(self.dimension)

    def __call__(self, y) -> np.ndarray:
        return np.asarray(self.evaluator(_as_points(y, self.n)), dtype=float)

    def profile(self, theta, r: float = 1.0) -> np.ndarray:
        """``K(r theta) r^(n+sigma) / (2 - sigma)`` on unit directions ``theta``."""
        theta = _as_points(theta, self.n)
        if self.amplitude is not None:
            return np.asarray(self.amplitude(theta), dtype=float)
        return self(r * theta) * r ** (self.n + self.sigma) / (2.0 - self.sigma)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "lambda": self.lam,
            "Lambda": self.Lam,
            "dimension": self.n,
            "symmetry_declared": self.symmetry_declared,
            "params": self.params,
        }


def _homogeneous(sigma, n, amplitude):
    def ev(y):
        r = np.linalg.norm(y, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = y / r[:, None]
            return (2.0 - sigma) * amplitude(theta) / r ** (n + sigma)

    return ev


def radial_kernel(sigma, amplitude=1.0, dimension=1, lam=None, Lam=None) -> KernelSpec:
    """``(2 - sigma) A / |y|^(n+sigma)``."""
    A = float(amplitude)
    amp = lambda t: np.full(t.shape[0], A)  # noqa: E731
    return KernelSpec(sigma, A if lam is None else lam, A if Lam is None else Lam,
                      _homogeneous(sigma, dimension, amp), dimension, True, amp, "radial",
                      {"amplitude": A})


def split_kernel(sigma, a_plus, a_minus, direction=None, dimension=1, lam=None, Lam=None) -> KernelSpec:
    """Amplitude ``a_plus`` on ``{y . d > 0}`` and ``a_minus`` on the complement."""
    d = np.zeros(dimension)
    d[0] = 1.0
    if direction is not None:
        d = np.asarray(direction, dtype=float).reshape(dimension)
        d = d / np.linalg.norm(d)
    ap, am = float(a_plus), float(a_minus)
    amp = lambda t: np.where(t @ d > 0, ap, am)  # noqa: E731
    return KernelSpec(sigma, min(ap, am) if lam is None else lam, max(ap, am) if Lam is None else Lam,
                      _homogeneous(sigma, dimension, amp), dimension, ap == am, amp, "angular-split",
                      {"a_plus": ap, "a_minus": am, "direction": d.tolist()})


def cosine_kernel(sigma, a0, a1, direction=None, dimension=1, lam=None, Lam=None) -> KernelSpec:
    """Amplitude ``a0 + a1 (theta . d)``; smooth in angle and nonsymmetric for ``a1 != 0``."""
    d = np.zeros(dimension)
    d[0] = 1.0
    if direction is not None:
        d = np.asarray(direction, dtype=float).reshape(dimension)
        d = d / np.linalg.norm(d)
    a0, a1 = float(a0), float(a1)
    if a0 - abs(a1) <= 0:
        raise DomainError("cosine kernel needs a0 > |a1|")
    amp = lambda t: a0 + a1 * (t @ d)  # noqa: E731
    return KernelSpec(sigma, a0 - abs(a1) if lam is None else lam, a0 + abs(a1) if Lam is None else Lam,
                      _homogeneous(sigma, dimension, amp), dimension, a1 == 0.0, amp, "cosine",
                      {"a0": a0, "a1": a1, "direction": d.tolist()})


def mixture_kernel(components: Sequence[KernelSpec], weights=None, lam=None, Lam=None) -> KernelSpec:
    """Convex combination of kernels with the same order and dimension."""
    comps = list(components)
    if not comps:
        raise DomainError("mixture needs at least one component")
    sig, n = comps[0].sigma, comps[0].n
    if any(abs(c.sigma - sig) > 0 or c.n != n for c in comps):
        raise DomainError("mixture components must share sigma and dimension")
    w = np.full(len(comps), 1.0 / len(comps)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
        raise DomainError("mixture weights must be nonnegative and sum to 1")
    ev = lambda y: sum(wi * c(y) for wi, c in zip(w, comps))  # noqa: E731
    amps = [c.amplitude for c in comps]
    amp = None
    if all(a is not None for a in amps):
        amp = lambda t: sum(wi * a(t) for wi, a in zip(w, amps))  # noqa: E731
    return KernelSpec(
        sig,
        float(np.dot(w, [c.lam for c in comps])) if lam is None else lam,
        float(np.dot(w, [c.Lam for c in comps])) if Lam is None else Lam,
        ev, n, all(c.symmetry_declared for c in comps), amp, "finite-mixture",
        {"weights": w.tolist(), "components": [c.to_dict() for c in comps]},
    )


def load_toml(path) -> dict:
    """Read a TOML file."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def kernel_from_config(cfg: dict, prefix: str = "kernel") -> KernelSpec:
    """Build a builtin kernel from a config table.

    Recognized ``kind`` values: ``radial``, ``angular-split``, ``cosine`` and
    ``finite-mixture`` (with a ``components`` array of tables and optional
    ``weights``).  Missing required keys raise :class:`DomainError` naming
    the field.
    """

    def need(key):
        if key not in cfg:
            raise DomainError(f"{prefix}.{key} is required")
        return cfg[key]

    kind = cfg.get("kind", "radial")
    n = int(cfg.get("dimension", 1))
    lam, Lam = cfg.get("lambda"), cfg.get("Lambda")
    if kind == "finite-mixture":
        comps = [kernel_from_config(c, f"{prefix}.components[{i}]") for i, c in enumerate(need("components"))]
        return mixture_kernel(comps, cfg.get("weights"), lam, Lam)
    sigma = float(need("sigma"))
    try:
        if kind == "radial":
            return radial_kernel(sigma, cfg.get("amplitude", 1.0), n, lam, Lam)
        if kind == "angular-split":
            return split_kernel(sigma, need("a_plus"), need("a_minus"), cfg.get("direction"), n, lam, Lam)
        if kind == "cosine":
            return cosine_kernel(sigma, need("a0"), need("a1"), cfg.get("direction"), n, lam, Lam)
    except DomainError as exc:
        raise DomainError(f"{prefix}: {exc}") from None
    raise DomainError(f"{prefix}.kind: unknown kernel kind '{kind}'")


def j_sigma(sigma: float, R: float) -> float:
    """``(1 - R^(1-sigma)) / (1 - sigma)``, or ``-log R`` at ``sigma = 1``."""
    if not (0.0 < R <= 1.0):
        raise DomainError(f"R must lie in (0, 1], got {R}")
    if not (0.0 < sigma < 2.0):
        raise DomainError(f"sigma must lie in (0, 2), got {sigma}")
    e = 1.0 - sigma
    L = -math.log(R)
    if abs(e) < 1e-8:
        # (1 - exp(-e L)) / e expanded in e
        return L * (1.0 - e * L / 2.0 + (e * L) ** 2 / 6.0)
    return -math.expm1(-e * L) / e


def random_direction_sample(n: int, count: int, rng) -> np.ndarray:
    if n == 1:
        return rng.choice([-1.0, 1.0], size=(count, 1))
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass
class KernelVerification:
    passed: bool
    ratio_min: float
    ratio_max: float
    worst_ratio: float
    sample_count: int
    seed: int
    offending_y: Optional[list] = None
    symmetry_ok: Optional[bool] = None
    message: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def verify_kernel_class(kernel: KernelSpec, sample_count: int = 4096, seed: int = 0,
                        rtol: float = 1e-12) -> KernelVerification:
    """Sample ``K(y) |y|^(n+sigma) / (2 - sigma)`` and compare with ``[lam, Lam]``.

    Radii are log-uniform on ``[1e-6, 1e3]`` and directions uniform.
    """
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n, s = kernel.n, kernel.sigma
    r = 10.0 ** rng.uniform(-6.0, 3.0, sample_count)
    y = random_direction_sample(n, sample_count, rng) * r[:, None]
    try:
        K = kernel(y)
    except Exception as exc:  # evaluator must be total on the sample
        return KernelVerification(False, math.nan, math.nan, math.nan, sample_count, seed,
                                  y[0].tolist(), None, f"evaluator raised {exc!r}")
    bad = ~np.isfinite(K) | (K < 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        return KernelVerification(False, math.nan, math.nan, float(K[i]), sample_count, seed,
                                  y[i].tolist(), None, "evaluator returned a negative or non-finite value")
    ratio = K * r ** (n + s) / (2.0 - s)
    lo, hi = float(ratio.min()), float(ratio.max())
    low_bad = lo < kernel.lam * (1 - rtol)
    high_bad = hi > kernel.Lam * (1 + rtol)
    if high_bad and (not low_bad or hi / kernel.Lam >= kernel.lam / lo):
        worst, i = hi, int(np.argmax(ratio))
    elif low_bad:
        worst, i = lo, int(np.argmin(ratio))
    else:
        worst, i = (hi, None) if hi / kernel.Lam >= kernel.lam / lo else (lo, None)
    passed = not (low_bad or high_bad)
    msg = "" if passed else "ratio outside [lambda, Lambda]"
    sym_ok = None
    if kernel.symmetry_declared:
        Km = kernel(-y)
        sym_ok = bool(np.all(np.abs(K - Km) <= rtol * K))
        if not sym_ok:
            passed = False
            j = int(np.argmax(np.abs(K - Km) / np.maximum(K, 1e-300)))
            i = j if i is None else i
            msg = (msg + "; " if msg else "") + "declared symmetry violated"
    return KernelVerification(passed, lo, hi, worst, sample_count, seed,
                              None if i is None else y[i].tolist(), sym_ok, msg)


@dataclass
class DriftVector:
    R: float
    value: np.ndarray
    quadrature_error: float

    def is_zero(self) -> bool:
        return float(np.linalg.norm(self.value)) <= max(DRIFT_ZERO_FLOOR, 3.0 * self.quadrature_error)

    def to_dict(self):
        return {"R": self.R, "value": np.asarray(self.value).tolist(), "quadrature_error": self.quadrature_error}


def _drift_quad(quad):
    if quad is None:
        return QuadratureSpec(order=12, panels_per_decade=4, rtol=1e-13, atol=1e-15, directions=256)
    return quad


def drift_vector(kernel: KernelSpec, R: float, quad: Optional[QuadratureSpec] = None,
                 tol: float = 1e-9) -> DriftVector:
    """Integral of ``y K(y)`` over ``B_1`` minus ``B_R``.

    ``K`` already carries the ``(2 - sigma)`` normalization, so this is the
    gradient coefficient that separates the full and truncated operators on
    affine data.

    Raises
    ------
    QuadratureError
        When the achieved error exceeds ``tol`` (relative to the kernel scale).
    """
    n, s = kernel.n, kernel.sigma
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    if R >= 1.0:
        return DriftVector(float(R), np.zeros(n), 0.0)
    quad = _drift_quad(quad)
    scale = (2.0 - s) * kernel.Lam * sphere_area(n) * j_sigma(s, R)
    if n == 1:
        def f(r):
            y = r[:, None]
            return np.stack([r * kernel(y), r * kernel(-y)], axis=1)

        res = integrate_log_radial(f, R, 1.0, quad)
        value = np.array([res.value[0] - res.value[1]])
        err = float(res.error.sum())
        converged = res.converged
    elif n == 2:
        rr, wr = fixed_radial_rule(R, 1.0, QuadratureSpec(order=16, panels_per_decade=4, adaptive=False))

        def g(phi):
            th = np.stack([np.cos(phi), np.sin(phi)], axis=1)
            y = rr[None, :, None] * th[:, None, :]
            K = kernel(y.reshape(-1, 2)).reshape(phi.size, rr.size)
            radial = (K * rr[None, :] ** 2) @ wr
            return th * radial[:, None]

        res = integrate_adaptive(g, 0.0, 2.0 * math.pi, QuadratureSpec(
            order=quad.order, panels_per_decade=8, rtol=quad.rtol, atol=quad.atol, max_levels=quad.max_levels))
        value = res.value
        err = float(res.error.sum())
        converged = res.converged
    else:
        d, w, dh, wh = sphere_directions(n, quad.directions)
        rr, wr = fixed_radial_rule(R, 1.0, QuadratureSpec(order=16, panels_per_decade=4, adaptive=False))

        def vec(dirs, wts):
            y = rr[None, :, None] * dirs[:, None, :]
            K = kernel(y.reshape(-1, n)).reshape(len(dirs), rr.size)
            radial = (K * rr[None, :] ** n) @ wr
            return (dirs * (radial * wts)[:, None]).sum(axis=0)

        full = vec(d, w)
        value = full
        err = float(np.linalg.norm(full - vec(dh, wh)))
        converged = True
    out = DriftVector(float(R), value, err)
    if not converged or err > tol * max(scale, 1.0):
        raise QuadratureError(f"drift quadrature reached error {err:.3e} above tolerance", out, err)
    return out


class DirectionFunctional:
    """Degree-one functionals ``B+(a) = max_i b_i . a`` and ``B-(a) = max_i (-b_i . a)``."""

    def __init__(self, drifts):
        b = np.atleast_2d(np.asarray(drifts, dtype=float))
        self.drifts = b

    @classmethod
    def zero(cls, n: int):
        return cls(np.zeros((1, n)))

    @property
    def n(self) -> int:
        return self.drifts.shape[1]

    def plus(self, a) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return np.max(a @ self.drifts.T, axis=1)

    def minus(self, a) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return np.max(-(a @ self.drifts.T), axis=1)

    __call__ = plus

    def to_dict(self):
        return {"drifts": self.drifts.tolist()}


@dataclass
class EtaClassification:
    eta: float
    witness_directions: np.ndarray
    family_size: int
    drifts: list
    flags: list = field(default_factory=list)
    direction_samples: int = 0
    seed: Optional[int] = None
    functional: Optional[DirectionFunctional] = None

    def to_dict(self):
        return {
            "eta": self.eta,
            "family_size": self.family_size,
            "witness_directions": np.asarray(self.witness_directions).tolist()[:32],
            "drifts": [d.to_dict() for d in self.drifts],
            "flags": list(self.flags),
            "direction_samples": self.direction_samples,
            "seed": self.seed,
        }


def _effective(d: DriftVector):
    return np.zeros_like(d.value) if d.is_zero() else np.asarray(d.value)


def classify_eta_single(kernel: KernelSpec, R: float, quad=None, seed: int = 0,
                        witness_count: int = 16) -> EtaClassification:
    """``eta = 1`` for a vanishing drift and ``eta = 1/2`` otherwise."""
    d = drift_vector(kernel, R, quad)
    n = kernel.n
    rng = np.random.default_rng(seed)
    sample = np.array([[1.0], [-1.0]]) if n == 1 else random_direction_sample(n, witness_count * 2, rng)
    flags = []
    if d.is_zero():
        if np.linalg.norm(d.value) > 0:
            flags.append("drift indistinguishable from zero")
        return EtaClassification(1.0, sample, 1, [d], flags, len(sample), seed, DirectionFunctional.zero(n))
    b = np.asarray(d.value)
    wit = sample[sample @ b <= 0]
    if n == 1:
        wit = np.array([[-math.copysign(1.0, b[0])]])
    return EtaClassification(0.5, wit[:witness_count], 1, [d], flags, len(sample), seed, DirectionFunctional(b))


def eta_from_drifts(drifts: np.ndarray, direction_samples: int = 4096, seed: int = 0):
    """Fraction of directions ``a`` with ``max_i b_i . a <= 0`` and the witnesses."""
    b = np.atleast_2d(np.asarray(drifts, dtype=float))
    n = b.shape[1]
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        dirs = random_direction_sample(n, direction_samples, np.random.default_rng(seed))
    good = np.max(dirs @ b.T, axis=1) <= 0.0
    return float(good.mean()), dirs[good], len(dirs)


def classify_eta_family(kernels: Sequence[KernelSpec], R: float, direction_samples: int = 4096,
                        seed: int = 0, quad=None) -> EtaClassification:
    """Estimate the spherical measure fraction where ``B+_R <= 0``.

    One-dimensional families are classified exhaustively over ``{-1, +1}``;
    otherwise directions are sampled uniformly with the given seed.
    """
    kernels = list(kernels)
    if not kernels:
        raise DomainError("kernel family is empty")
    drifts = [drift_vector(k, R, quad) for k in kernels]
    eff = np.array([_effective(d) for d in drifts])
    flags = []
    if any(d.is_zero() and np.linalg.norm(d.value) > 0 for d in drifts):
        flags.append("drift indistinguishable from zero")
    eta, wit, used = eta_from_drifts(eff, direction_samples, seed)
    if eta == 0.0:
        flags.append("no direction with nonpositive drift functional")
    return EtaClassification(eta, wit, len(kernels), drifts, flags, used, seed, DirectionFunctional(eff))


@dataclass
class TranslationRegularity:
    value: float
    coarse_value: float
    relative_agreement: float
    per_h: list
    radial_bound: Optional[float]
    truncation_radius: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def _translation_integral(kernel, hvec, rho1, r_far, directions, order):
    n = kernel.n
    d, w, _, _ = sphere_directions(n, directions)
    spec = QuadratureSpec(order=order, panels_per_decade=max(4, directions // 16), adaptive=False)
    rr, wr = fixed_radial_rule(rho1, r_far, spec)
    y = rr[:, None, None] * d[None, :, :]
    flat = y.reshape(-1, n)
    diff = np.abs(kernel(flat) - kernel(flat - hvec[None, :])).reshape(rr.size, len(d))
    radial = rr ** (n - 1)
    return float(((diff @ w) * radial) @ wr) / float(np.linalg.norm(hvec))


def translation_regularity(kernel: KernelSpec, rho1: float, h_samples: int = 8, seed: int = 0,
                           tol: float = 1e-4, directions: int = 512, C: Optional[float] = None,
                           h_values=None) -> TranslationRegularity:
    """Estimate ``sup_h  int_{|y| > rho1} |K(y) - K(y - h)| / |h| dy`` over ``h`` in ``B_{rho1/2}``.

    ``|h|`` is sampled uniformly in ``[rho1/8, rho1/2]``; ``h = 0`` is
    skipped.  The value is computed at two angular/radial resolutions.
    """
    if not rho1 > 0:
        raise DomainError("rho1 must be positive")
    n, s = kernel.n, kernel.sigma
    rng = np.random.default_rng(seed)
    if h_values is None:
        mags = rng.uniform(rho1 / 8, rho1 / 2, h_samples)
        hs = random_direction_sample(n, h_samples, rng) * mags[:, None]
    else:
        hs = np.asarray(h_values, dtype=float).reshape(-1, n)
    hs = hs[np.linalg.norm(hs, axis=1) > 0]
    if not len(hs):
        raise DomainError("no nonzero translation in the sample")
    hmin = float(np.min(np.linalg.norm(hs, axis=1)))
    c_tail = 2.0 * (2.0 - s) * kernel.Lam * sphere_area(n) * 2.0 ** (n + s) / s
    r_far = max(4.0 * rho1, (c_tail / (hmin * tol)) ** (1.0 / s))
    per_h, per_h_fine = [], []
    for h in hs:
        per_h.append(_translation_integral(kernel, h, rho1, r_far, directions, 12))
        per_h_fine.append(_translation_integral(kernel, h, rho1, r_far, 2 * directions, 12))
    v, vf = max(per_h), max(per_h_fine)
    agree = abs(v - vf) / max(abs(vf), 1e-300)
    bound = None
    if kernel.kind == "radial":
        bound = (2 - s) * 2 ** (n + s + 1) * (n + s) * kernel.Lam * sphere_area(n) / ((s + 1) * rho1 ** (1 + s))
    flags = []
    if C is not None and vf > C:
        flags.append("not in the translation-regular class")
    if agree > 0.01:
        flags.append("resolutions disagree by more than 1%")
    return TranslationRegularity(vf, v, agree, [[hh.tolist(), a, b] for hh, a, b in zip(hs, per_h, per_h_fine)],
                                 bound, r_far, flags)
