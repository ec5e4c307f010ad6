"""Experiment runners and report plumbing behind the command-line harness.

Every experiment takes a fully resolved config dict and returns an
:class:`ExperimentResult`.  Reports embed that config and the seeds, so
re-running the embedded config reproduces the metrics bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import abp, barriers, kernels, operators, regularity, solver
from .errors import CertificationError, DegenerateFitError, DomainError
from .grid import GridFunction, exterior_from_config
from .parallel import pmap
from .quadrature import QuadratureSpec

__all__ = [
    "SCHEMA",
    "CSV_SCHEMA",
    "ConfigError",
    "ExperimentResult",
    "EXPERIMENTS",
    "resolve_config",
    "run_experiment",
    "build_report",
    "write_report",
    "rerun_report",
    "to_jsonable",
]

SCHEMA = "nonlocal-report/1"
CSV_SCHEMA = {"version": 1, "columns": ["experiment", "resolution", "metric", "value"]}


class ConfigError(DomainError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentResult:
    results: dict
    metrics: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)

    def metric(self, resolution, name, value):
        self.metrics.append([self.results.get("experiment", ""), resolution, name, _num(value)])

    def check(self, name, passed, **info):
        self.checks[name] = {"passed": bool(passed), **{k: to_jsonable(v) for k, v in info.items()}}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def to_jsonable(obj):
    """Recursively convert numpy containers and non-finite floats for JSON output."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


# ---------------------------------------------------------------- config

_REQUIRED = object()


def _f(x):
    return float(x)


def _i(x):
    if isinstance(x, bool) or (isinstance(x, float) and not x.is_integer()):
        raise ValueError("expected an integer")
    return int(x)


def _b(x):
    if isinstance(x, str):
        if x.lower() in ("1", "true", "yes"):
            return True
        if x.lower() in ("0", "false", "no"):
            return False
        raise ValueError("expected a boolean")
    return bool(x)


def _s(x):
    return str(x)


def _fo(x):
    return None if x is None or x == "none" else float(x)


def _fl(x):
    if isinstance(x, str):
        x = [v for v in x.split(",") if v.strip()]
    return [float(v) for v in x]


def _il(x):
    if isinstance(x, str):
        x = [v for v in x.split(",") if v.strip()]
    return [_i(float(v)) if isinstance(v, str) else _i(v) for v in x]


def _d(x):
    if not isinstance(x, dict):
        raise ValueError("expected a table")
    return dict(x)


def _dl(x):
    if not isinstance(x, list) or not all(isinstance(v, dict) for v in x):
        raise ValueError("expected an array of tables")
    return [dict(v) for v in x]


_OPERATOR = {
    "operator": ("extremal_plus", _s),
    "sigma": (1.5, _f),
    "lambda": (1.0, _f),
    "Lambda": (1.0, _f),
    "R": (1.0, _f),
}

SCHEMAS = {
    "classify-kernel": {
        "kernel": ({"kind": "radial", "sigma": 1.5}, _d),
        "family": ([], _dl),
        "R": (0.5, _f),
        "seed": (0, _i),
        "samples": (4096, _i),
    },
    "eval-operator": {
        **_OPERATOR,
        "kernel": ({}, _d),
        "n": (1, _i),
        "function": ("bump", _s),
        "points": ([0.0, 0.25, 0.5], _fl),
    },
    "verify-barrier": {
        "kind": ("power", _s),
        "sigma": (1.9, _f),
        "n": (1, _i),
        "lambda": (1.0, _f),
        "Lambda": (1.0, _f),
        "R": (None, _fo),
        "samples": (12, _i),
    },
    "abp-report": {
        "n": (2, _i),
        "R": (0.5, _f),
        "M0": (1.0, _f),
        "sigma": (1.0, _f),
        "lambda": (1.0, _f),
        "Lambda": (1.0, _f),
        "resolutions": ([33, 65, 129], _il),
        "C": (10.0, _f),
        "xi0": (0.1, _f),
        "max_depth": (12, _i),
        "stability_factor": (2.0, _f),
    },
    "solve": {
        **_OPERATOR,
        "n": (1, _i),
        "N": (129, _i),
        "half_width": (1.0, _f),
        "forcing": (0.0, _f),
        "exterior": ({"kind": "constant", "value": 0.0}, _d),
        "tol": (1e-6, _f),
        "max_iters": (200000, _i),
        "dt_safety": (0.9, _f),
        "directions": (16, _i),
    },
    "level-decay": {
        "profile": ("power", _s),
        "p": (1.0, _f),
        "n": (1, _i),
        "resolutions": ([256, 512], _il),
        "R": (1.0, _f),
        "tolerance": (0.05, _f),
        "sigma": (1.5, _f),
        "lambda": (1.0, _f),
        "Lambda": (2.0, _f),
        "drift_tolerance": (0.2, _f),
        "eps0_grid": ([0.0], _fl),
        "frontier_M": ([1.5, 2.0, 4.0, 8.0], _fl),
    },
    "harnack": {
        "sigma": (1.5, _f),
        "sigmas": ([], _fl),
        "resolutions": ([33, 65], _il),
        "problems": (10, _i),
        "seed": (0, _i),
        "C0": (0.0, _f),
        "R": (1.0, _f),
        "stability_factor": (2.0, _f),
        "sweep_factor": (2.0, _f),
    },
    "holder": {
        "profile": ("power", _s),
        "exponent": (0.5, _f),
        "alpha": (0.5, _f),
        "n": (1, _i),
        "resolutions": ([65, 129], _il),
        "radius": (0.5, _f),
        "sigma": (1.0, _f),
        "drift_tolerance": (0.25, _f),
    },
    "c1alpha": {
        "profile": ("power", _s),
        "exponent": (1.5, _f),
        "alpha": (0.5, _f),
        "n": (1, _i),
        "N": (257, _i),
        "radius": (0.5, _f),
        "sigma": (1.5, _f),
        "compare_families": (False, _b),
    },
}


def resolve_config(command: str, file_cfg: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, a config table and command-line overrides, validating each field.

    The config table may hold the fields at top level or under a section
    named after the command.
    """
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command '{command}'")
    schema = SCHEMAS[command]
    cfg = {k: v[0] for k, v in schema.items()}
    src = dict(file_cfg or {})
    if command in src and isinstance(src[command], dict):
        src = {**{k: v for k, v in src.items() if k != command and k in schema}, **src[command]}
    merged = {**src, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    for key, raw in merged.items():
        if key not in schema:
            raise ConfigError(f"unknown field '{key}' for {command}")
        caster = schema[key][1]
        try:
            cfg[key] = caster(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field '{key}': {exc}") from None
    for key in ("resolutions",):
        if key in cfg:
            res = cfg[key]
            if not res or any(b <= a for a, b in zip(res, res[1:])):
                raise ConfigError(f"field '{key}' must be strictly increasing and nonempty")
    if "R" in cfg and cfg["R"] is not None and not (0.0 < cfg["R"] <= 1.0):
        raise ConfigError("field 'R' must lie in (0, 1]")
    if "sigma" in cfg and not (0.0 < cfg["sigma"] < 2.0):
        raise ConfigError("field 'sigma' must lie in (0, 2)")
    return cfg


# ---------------------------------------------------------------- helpers

def _operator(cfg, quad=None) -> operators.OperatorSpec:
    kind = cfg["operator"]
    q = quad or operators.default_quadrature()
    s, lam, Lam, R = cfg["sigma"], cfg["lambda"], cfg["Lambda"], cfg["R"]
    try:
        if kind in ("extremal_plus", "extremal_minus"):
            return operators.OperatorSpec.extremal("+" if kind.endswith("plus") else "-", lam, Lam, s, quadrature=q)
        if kind in ("extremal_plus_truncated", "extremal_minus_truncated"):
            return operators.OperatorSpec.extremal("+" if "plus" in kind else "-", lam, Lam, s, R, quadrature=q)
        if kind in ("extremal_eta_plus", "extremal_eta_minus"):
            return operators.OperatorSpec.eta("+" if "plus" in kind else "-", lam, Lam, s, R, quadrature=q)
        if kind == "linear":
            kc = dict(cfg.get("kernel") or {"kind": "radial"})
            kc.setdefault("sigma", s)
            kc.setdefault("dimension", cfg.get("n", 1))
            return operators.OperatorSpec.linear(kernels.kernel_from_config(kc), quadrature=q)
    except DomainError as exc:
        raise ConfigError(f"field 'operator': {exc}") from None
    raise ConfigError(f"field 'operator': unknown operator '{kind}'")


TEST_FUNCTIONS: dict[str, Callable] = {
    "bump": lambda X: np.maximum(0.0, 1.0 - np.sum(X**2, axis=1)),
    "gaussian": lambda X: np.exp(-np.sum(X**2, axis=1)),
    "getoor": lambda X: np.sqrt(np.maximum(0.0, 1.0 - np.sum(X**2, axis=1))),
}


def _points(cfg):
    n = cfg["n"]
    pts = np.asarray(cfg["points"], dtype=float)
    if pts.size % n:
        raise ConfigError("field 'points' must hold a multiple of n coordinates")
    return pts.reshape(-1, n)


# ---------------------------------------------------------------- experiments

def exp_classify_kernel(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "classify-kernel"})
    try:
        if cfg["family"]:
            ks = [kernels.kernel_from_config(c, f"family[{i}]") for i, c in enumerate(cfg["family"])]
        else:
            ks = [kernels.kernel_from_config(cfg["kernel"])]
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    verifs = [kernels.verify_kernel_class(k, cfg["samples"], cfg["seed"]) for k in ks]
    if len(ks) == 1:
        cls = kernels.classify_eta_single(ks[0], cfg["R"], seed=cfg["seed"])
    else:
        cls = kernels.classify_eta_family(ks, cfg["R"], seed=cfg["seed"])
    out.results.update({"eta": cls.eta, "classification": cls.to_dict(),
                        "verification": [v.to_dict() for v in verifs],
                        "kernels": [k.to_dict() for k in ks]})
    out.metric("", "eta", cls.eta)
    for i, d in enumerate(cls.drifts):
        out.metric("", f"drift_norm[{i}]", float(np.linalg.norm(d.value)))
    out.check("kernel_class", all(v.passed for v in verifs))
    out.check("eta_positive", cls.eta > 0, eta=cls.eta)
    return out


def exp_eval_operator(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "eval-operator"})
    name = cfg["function"]
    if name not in TEST_FUNCTIONS:
        raise ConfigError(f"field 'function': unknown test function '{name}'")
    spec = _operator(cfg)
    n = cfg["n"]
    u = GridFunction.from_function(TEST_FUNCTIONS[name], n, 2.0, 65, analytic=True)
    rows = []
    for x in _points(cfg):
        v = operators.evaluate(spec, u, x)
        rows.append(v.to_dict())
        out.metric("", f"value[{x.tolist()}]", v.value)
        out.metric("", f"error[{x.tolist()}]", v.error)
    out.results.update({"operator": spec.to_dict(), "function": name, "values": rows})
    out.check("finite", all(math.isfinite(r["value"]) and math.isfinite(r["error_estimate"]) for r in rows))
    return out


def exp_verify_barrier(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "verify-barrier"})
    kind = cfg["kind"]
    lam, Lam, s, n = cfg["lambda"], cfg["Lambda"], cfg["sigma"], cfg["n"]
    try:
        if kind == "psi":
            R = cfg["R"] if cfg["R"] is not None else 0.05
            psi = barriers.build_psi(R, s, lam, Lam, n, samples=cfg["samples"])
            out.results["psi"] = psi.to_dict()
            cert = psi.certificate
            out.metric("", "min_q3r", psi.min_q3r)
            out.check("psi_above_2_on_q3r", psi.min_q3r > 2.0, value=psi.min_q3r)
            out.check("certified", cert.passed and psi.refined.passed)
        else:
            search = barriers.find_parameters(kind, lam, Lam, n, s, cfg["R"], samples=cfg["samples"])
            out.results["search"] = search.to_dict()
            cert = search.certificate
            out.metric("", "p", search.p)
            out.metric("", "refined_worst_margin", search.refined.worst_margin)
            out.check("certified", search.certificate.passed and search.refined.passed)
    except CertificationError as exc:
        best = exc.best
        out.results["failure"] = str(exc)
        out.results["best"] = to_jsonable(best)
        out.check("certified", False, message=str(exc))
        return out
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    out.results["certificate"] = cert.to_dict()
    out.metric("", "worst_margin", cert.worst_margin)
    return out


def exp_abp_report(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "abp-report"})
    n, R, M0, s = cfg["n"], cfg["R"], cfg["M0"], cfg["sigma"]
    ratios, rows = [], []
    for N in cfg["resolutions"]:
        if N % 2 == 0:
            raise ConfigError("field 'resolutions' must hold odd node counts")
        v = abp.spike_instance(n, R, N, M0)
        env = abp.concave_envelope(v, R)
        cont = abp.slope_ball_contained(env, M0 / (6.0 * math.sqrt(n) * R))
        f = abp.spike_forcing(v, env, s, cfg["lambda"], cfg["Lambda"])
        dec = abp.cube_decomposition(v, env, R, f, s, C=cfg["C"], xi0=cfg["xi0"], max_depth=cfg["max_depth"])
        rep = abp.abp_sup_bound_check(v, env, dec, f, s, R)
        ratios.append(rep.ratio)
        e_margin = min((c.e_margin for c in dec.cubes), default=0.0)
        f_frac = min((c.f_fraction for c in dec.cubes), default=0.0)
        rows.append({"N": N, "containment": cont, "decomposition": dec.to_dict(), "abp": rep.to_dict()})
        out.metric(N, "abp_ratio", rep.ratio)
        out.metric(N, "cubes", len(dec.cubes))
        out.metric(N, "min_e_margin", e_margin)
        out.metric(N, "min_f_fraction", f_frac)
        out.check(f"containment[{N}]", cont["contained"])
        out.check(f"terminated[{N}]", not dec.aborted)
        out.check(f"conditions_abcd[{N}]", all(dec.checks[k] for k in
                                                ("a_disjoint", "b_meets_contact", "c_covers_contact",
                                                 "d_diameter")))
    fin = [r for r in ratios if math.isfinite(r) and r > 0]
    spread = max(fin) / min(fin) if fin else math.inf
    out.metric("", "ratio_spread", spread)
    out.check("ratio_stability", spread <= cfg["stability_factor"], spread=spread)
    out.results["levels"] = rows
    return out


def _solve_problem(cfg):
    quad = QuadratureSpec(directions=cfg["directions"])
    spec = _operator(cfg, quad)
    try:
        ext = exterior_from_config(cfg["exterior"])
    except DomainError as exc:
        raise ConfigError(f"field 'exterior': {exc}") from None
    return solver.ProblemSpec(spec, cfg["forcing"], ext, cfg["n"], cfg["half_width"], cfg["N"],
                              dt_safety=cfg["dt_safety"], tol=cfg["tol"], max_iters=cfg["max_iters"])


def exp_solve(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "solve"})
    prob = _solve_problem(cfg)
    u, rep = solver.solve(prob)
    out.results.update({"problem": prob.to_dict(), "report": rep.to_dict(timing=False),
                        "sup": float(u.values.max()), "inf": float(u.values.min())})
    out.grids["solution"] = u
    out.metric(cfg["N"], "residual", rep.residual)
    out.metric(cfg["N"], "iterations", rep.iterations)
    out.check("converged", rep.converged, residual=rep.residual, tol=prob.tol)
    return out


def _power_profile(p, n, N):
    if N % 2:
        raise ConfigError("field 'resolutions' must hold even node counts for the singular profile")
    return GridFunction.from_function(lambda X: np.linalg.norm(X, axis=1) ** (-p), n, 1.0, N)


def _supersolution(cfg, N, eps0=0.0):
    """``M- u = eps0 - psi`` with zero exterior data and ``psi`` the bump on ``B_{1/4}``."""
    spec = operators.OperatorSpec.extremal("-", cfg["lambda"], cfg["Lambda"], cfg["sigma"])
    psi = lambda X: eps0 - np.maximum(0.0, 1.0 - 16.0 * np.sum(X**2, axis=1))  # noqa: E731
    prob = solver.ProblemSpec(spec, psi, n=cfg["n"], half_width=1.0, N=N, tol=1e-8)
    u, rep = solver.solve(prob)
    return u, rep


def exp_level_decay(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "level-decay"})
    n = cfg["n"]
    fits = []
    for N in cfg["resolutions"]:
        if cfg["profile"] == "power":
            u = _power_profile(cfg["p"], n, N)
        elif cfg["profile"] == "solve":
            u, rep = _supersolution(cfg, N)
            out.metric(N, "residual", rep.residual)
        else:
            raise ConfigError(f"field 'profile': unknown profile '{cfg['profile']}'")
        try:
            fit = regularity.level_decay(u, cfg["R"])
        except DegenerateFitError as exc:
            out.check(f"fit[{N}]", False, message=str(exc), diagnostic=exc.diagnostic)
            fits.append(None)
            continue
        fits.append(fit)
        out.metric(N, "eps_star", fit.eps_star)
        out.metric(N, "C", fit.C)
        out.metric(N, "r_squared", fit.fit.r_squared)
    out.results["fits"] = [None if f is None else f.to_dict() for f in fits]
    last = fits[-1]
    if cfg["profile"] == "power":
        target = n / cfg["p"]
        rel = math.inf if last is None else abs(last.eps_star - target) / target
        out.results["target"] = target
        out.check("eps_star_recovered", rel <= cfg["tolerance"], relative_error=rel)
    else:
        ok = len(fits) >= 2 and fits[-1] is not None and fits[-2] is not None
        drift = abs(fits[-1].eps_star - fits[-2].eps_star) / abs(fits[-1].eps_star) if ok else math.inf
        out.check("eps_star_positive", ok and fits[-1].eps_star > 0)
        out.check("eps_star_stable", drift <= cfg["drift_tolerance"], drift=drift)
        out.results["frontier"] = _nu_m_frontier(cfg, u)
    return out


def _nu_m_frontier(cfg, u_zero):
    """Reported ``(nu, M)`` trade-off: ``|{u <= M} cap Q_{1/4}| / |Q_{1/4}|`` after scaling ``inf_{Q_{1/2}} u`` to 1.

    Nothing is asserted; the curve is recorded per ``eps0`` in ``eps0_grid``.
    """
    N = cfg["resolutions"][-1]
    rows = []
    for eps0 in cfg["eps0_grid"]:
        u = u_zero if eps0 == 0.0 else _supersolution(cfg, N, eps0)[0]
        cube = np.max(np.abs(u.nodes()), axis=1)
        vals = u.values.ravel()
        s = float(vals[cube <= 0.5].min())
        if s <= 0.0:
            rows.append({"eps0": eps0, "scale": s, "curve": None})
            continue
        inner = vals[cube <= 0.25] / s
        curve = [{"M": M, "nu": float(np.mean(inner <= M))} for M in cfg["frontier_M"]]
        rows.append({"eps0": eps0, "scale": s, "effective_eps0": eps0 / s, "curve": curve})
    return rows


def random_positive_problem(rng, sigma, N, n=1):
    """A random in-class operator with positive data and nonpositive forcing."""
    lam = float(rng.uniform(0.5, 1.0))
    Lam = float(rng.uniform(1.0, 2.0))
    choice = int(rng.integers(3))
    if choice == 0:
        spec = operators.OperatorSpec.extremal("+", lam, Lam, sigma)
    elif choice == 1:
        spec = operators.OperatorSpec.extremal("-", lam, Lam, sigma)
    else:
        a_plus, a_minus = rng.uniform(lam, Lam, 2)
        k = kernels.split_kernel(sigma, float(a_plus), float(a_minus), None, n, lam, Lam)
        spec = operators.OperatorSpec.linear(k)
    g = float(rng.uniform(0.5, 1.5))
    amp = float(rng.uniform(0.5, 2.0))
    freq = float(rng.uniform(0.5, 3.0))
    phase = float(rng.uniform(0, 2 * math.pi))
    forcing = lambda X: -amp * (1.0 + 0.5 * np.sin(freq * X[:, 0] + phase))  # noqa: E731
    from .grid import ConstantExterior
    desc = {"operator": spec.to_dict(), "exterior": g, "amplitude": amp, "frequency": freq, "phase": phase}
    return solver.ProblemSpec(spec, forcing, ConstantExterior(g), n, 1.0, N), desc


def _harnack_at(sigma, N, cfg):
    rng = np.random.default_rng([cfg["seed"], int(round(sigma * 1e6))])
    problems = [random_positive_problem(rng, sigma, N) for _ in range(cfg["problems"])]

    def run(item):
        prob, desc = item
        u, rep = solver.solve(prob)
        hr = regularity.harnack_ratio(u, cfg["R"], cfg["C0"])
        return {"problem": desc, "ratio": hr["ratio"], "converged": rep.converged, "residual": rep.residual}

    return pmap(run, problems)


def exp_harnack(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "harnack"})
    sigmas = cfg["sigmas"] or [cfg["sigma"]]
    per_sigma = {}
    for s in sigmas:
        worst = []
        for N in cfg["resolutions"]:
            rows = _harnack_at(s, N, cfg)
            m = max(r["ratio"] for r in rows)
            worst.append(m)
            out.metric(N, f"max_ratio[sigma={s}]", m)
            out.check(f"converged[sigma={s},N={N}]", all(r["converged"] for r in rows))
            per_sigma.setdefault(str(s), []).append({"N": N, "max_ratio": m, "problems": rows})
        spread = max(worst) / min(worst)
        out.metric("", f"resolution_spread[sigma={s}]", spread)
        out.check(f"stable[sigma={s}]", spread < cfg["stability_factor"], spread=spread)
    if len(sigmas) > 1:
        first = per_sigma[str(sigmas[0])][-1]["max_ratio"]
        last = per_sigma[str(sigmas[-1])][-1]["max_ratio"]
        out.metric("", "sweep_ratio", last / first)
        out.check("no_blowup", last <= cfg["sweep_factor"] * first, first=first, last=last)
    out.results["per_sigma"] = per_sigma
    return out


def _rough_problem(cfg, N):
    from .grid import StepExterior
    spec = operators.OperatorSpec.extremal("+", 1.0, 2.0, cfg["sigma"])
    ext = StepExterior(0.0, 1.0, [1.0] + [0.0] * (cfg["n"] - 1))
    return solver.ProblemSpec(spec, 0.0, ext, cfg["n"], 1.0, N, tol=1e-8)


def exp_holder(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "holder"})
    n, a = cfg["n"], cfg["alpha"]
    reps = []
    for N in cfg["resolutions"]:
        if cfg["profile"] == "power":
            e = cfg["exponent"]
            u = GridFunction.from_function(lambda X: np.linalg.norm(X, axis=1) ** e, n, 1.0, N)
        elif cfg["profile"] == "solve":
            u, srep = solver.solve(_rough_problem(cfg, N))
            out.metric(N, "residual", srep.residual)
        else:
            raise ConfigError(f"field 'profile': unknown profile '{cfg['profile']}'")
        r = regularity.holder_seminorm(u, None, a, cfg["radius"])
        reps.append(r)
        out.metric(N, "seminorm", r.seminorm)
        out.metric(N, "alpha_fit", r.alpha_fit)
    out.results["reports"] = [r.to_dict() for r in reps]
    if cfg["profile"] == "power" and abs(cfg["exponent"] - a) == 0 and cfg["radius"] <= 1.0:
        out.check("seminorm_exact", abs(reps[-1].seminorm - 1.0) <= 1e-12, value=reps[-1].seminorm)
    else:
        fits = [r.alpha_fit for r in reps[-2:]]
        ok = len(fits) == 2 and all(f is not None and f > 0 for f in fits)
        drift = abs(fits[1] - fits[0]) / abs(fits[1]) if ok else math.inf
        out.check("alpha_positive", ok)
        out.check("alpha_stable", drift <= cfg["drift_tolerance"], drift=drift)
    return out


def _family_solution(cfg, regular: bool, N=129):
    """Isaacs-free comparison: a linear operator whose kernel is smooth or has an angular jump."""
    s = cfg["sigma"]
    k = kernels.radial_kernel(s) if regular else kernels.split_kernel(s, 1.0, 2.0)
    spec = operators.OperatorSpec.linear(k)
    return solver.solve(solver.ProblemSpec(spec, -1.0, n=1, half_width=1.0, N=N, tol=1e-8))[0]


def exp_c1alpha(cfg) -> ExperimentResult:
    out = ExperimentResult({"experiment": "c1alpha"})
    n, N = cfg["n"], cfg["N"]
    if cfg["profile"] == "power":
        e = cfg["exponent"]
        u = GridFunction.from_function(lambda X: np.linalg.norm(X, axis=1) ** e, n, 1.0, N)
    elif cfg["profile"] == "quadratic":
        u = GridFunction.from_function(lambda X: np.sum(X**2, axis=1), n, 1.0, N)
    else:
        raise ConfigError(f"field 'profile': unknown profile '{cfg['profile']}'")
    rep = regularity.c1alpha_probe(u, None, cfg["radius"], cfg["alpha"])
    out.results["report"] = rep.to_dict()
    out.metric(N, "du_seminorm", max(rep.du_seminorms))
    out.metric(N, "norm", rep.norm)
    out.check("finite", math.isfinite(rep.norm))
    if cfg["compare_families"]:
        comp = {}
        for label, regular in (("radial", True), ("split", False)):
            v = _family_solution(cfg, regular)
            r = regularity.c1alpha_probe(v, None, cfg["radius"], cfg["alpha"])
            comp[label] = r.to_dict()
            out.metric(129, f"norm[{label}]", r.norm)
        out.results["families"] = comp
    return out


EXPERIMENTS = {
    "classify-kernel": exp_classify_kernel,
    "eval-operator": exp_eval_operator,
    "verify-barrier": exp_verify_barrier,
    "abp-report": exp_abp_report,
    "solve": exp_solve,
    "level-decay": exp_level_decay,
    "harnack": exp_harnack,
    "holder": exp_holder,
    "c1alpha": exp_c1alpha,
}


def _seeds(cfg) -> list:
    return [cfg["seed"]] if "seed" in cfg else []


def run_experiment(command: str, cfg: dict):
    """Run ``command`` on a resolved config; return the result and elapsed seconds."""
    t0 = time.perf_counter()
    res = EXPERIMENTS[command](cfg)
    return res, time.perf_counter() - t0


def build_report(command: str, cfg: dict, res: ExperimentResult, elapsed: float) -> dict:
    return {
        "schema": SCHEMA,
        "command": command,
        "config": to_jsonable(cfg),
        "seeds": _seeds(cfg),
        "csv_schema": CSV_SCHEMA,
        "metrics": to_jsonable(res.metrics),
        "checks": to_jsonable(res.checks),
        "passed": res.passed,
        "results": to_jsonable(res.results),
        "timing": {"wall_seconds": elapsed},
    }


def write_report(report: dict, res: ExperimentResult, out_dir) -> Path:
    """Write ``report.json``, ``tables/<command>.csv`` and grid dumps under ``out_dir``."""
    out = Path(out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True))
    with open(out / "tables" / f"{report['command']}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# csv_schema_version={CSV_SCHEMA['version']}"])
        w.writerow(CSV_SCHEMA["columns"])
        for row in report["metrics"]:
            w.writerow(row)
    for name, g in res.grids.items():
        g.dump(out / "grids" / name)
    return path


def rerun_report(path) -> dict:
    """Re-run the config embedded in a report and compare metrics, checks and results exactly."""
    old = json.loads(Path(path).read_text())
    if old.get("schema") != SCHEMA:
        raise ConfigError(f"field 'schema': expected {SCHEMA}")
    command = old["command"]
    cfg = resolve_config(command, old["config"])
    res, elapsed = run_experiment(command, cfg)
    new = json.loads(json.dumps(build_report(command, cfg, res, elapsed), sort_keys=True))
    keys = ("metrics", "checks", "results", "config", "seeds", "passed")
    diffs = [k for k in keys if new[k] != old.get(k)]
    return {"identical": not diffs, "differing_sections": diffs, "command": command, "report": new}
