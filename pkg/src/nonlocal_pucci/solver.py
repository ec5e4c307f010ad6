"""Explicit pseudo-time marching for ``I u = f`` in a box with exterior Dirichlet data.

The discrete operator is assembled once.  Every integrand sample of every
interior node is an affine function of the node values, ``mu = A u + b``.
The samples come from three sources: ring quadrature nodes, the quadratic
inner-ball model, and the closed-form far-field tail.  Each operator channel
weighs the same rows, so one sparse product per step feeds all kernels of
a family or Isaacs operator.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import DomainError, SolverDivergence
from .grid import ConstantExterior, ExteriorRule, GridFunction, _multilinear
from .kernels import DirectionFunctional
from .operators import OperatorSpec
from .quadrature import fixed_radial_rule, sphere_area, sphere_directions

__all__ = ["ProblemSpec", "SolveReport", "DiscreteOperator", "solve", "residual", "initial_guess"]

SCHEMES = ("explicit_marching",)


@dataclass
class ProblemSpec:
    """Dirichlet problem ``I u = f`` in the open box, ``u = g`` outside.

    Parameters
    ----------
    operator : OperatorSpec
    forcing : float, ndarray or callable
        ``f`` at the grid nodes (a scalar, an array of shape ``(N,) * n``, or a
        vectorized function of points).
    exterior : ExteriorRule
        ``g``; also used at the nodes on the box boundary.
    n, half_width, N : int, float, int
        Box ``[-half_width, half_width]^n`` with ``N`` nodes per axis.
    scheme : str
        Only ``"explicit_marching"``.
    dt_safety : float
        Fraction of the monotonicity step bound, in ``(0, 1)``.
    tol : float
        Target for ``max |I u - f|`` over interior nodes.
    max_iters : int
    """

    operator: OperatorSpec
    forcing: object = 0.0
    exterior: ExteriorRule = field(default_factory=ConstantExterior)
    n: int = 1
    half_width: float = 1.0
    N: int = 65
    scheme: str = "explicit_marching"
    dt_safety: float = 0.9
    tol: float = 1e-6
    max_iters: int = 200_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme '{self.scheme}'")
        if not (0.0 < self.dt_safety < 1.0):
            raise DomainError("dt_safety must lie in (0, 1)")
        if not (self.tol > 0 and self.max_iters >= 0):
            raise DomainError("tol must be positive and max_iters nonnegative")
        if self.N < 5 or self.half_width <= 0 or self.n < 1:
            raise DomainError("need N >= 5, half_width > 0, n >= 1")
        if not math.isfinite(self.exterior.bound()):
            raise DomainError("exterior rule must be bounded")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.N - 1)

    def grid(self, values=None) -> GridFunction:
        vals = np.zeros((self.N,) * self.n) if values is None else values
        return GridFunction(vals, self.half_width, self.exterior)

    def forcing_values(self) -> np.ndarray:
        shape = (self.N,) * self.n
        f = self.forcing
        if callable(f):
            vals = np.asarray(f(self.grid().nodes()), dtype=float).reshape(shape)
        else:
            arr = np.asarray(f, dtype=float)
            vals = np.full(shape, float(arr)) if arr.ndim == 0 else arr.reshape(shape)
        if not np.all(np.isfinite(vals)):
            raise DomainError("forcing must be finite")
        return vals

    def to_dict(self) -> dict:
        f = self.forcing
        fd = float(f) if np.ndim(f) == 0 and not callable(f) else ("callable" if callable(f) else "array")
        return {"operator": self.operator.to_dict(), "forcing": fd, "exterior": self.exterior.to_dict(),
                "n": self.n, "half_width": self.half_width, "N": self.N, "scheme": self.scheme,
                "dt_safety": self.dt_safety, "tol": self.tol, "max_iters": self.max_iters}


@dataclass
class SolveReport:
    iterations: int
    residual: float
    dt: float
    wall_time: float
    converged: bool
    trace: list = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        d = {"iterations": self.iterations, "residual": self.residual, "dt": self.dt,
             "converged": self.converged}
        if timing:
            d["wall_time"] = self.wall_time
        return d


def _reducer(spec: OperatorSpec, chs):
    if spec.kind in ("family_max", "family_min"):
        fn = np.max if spec.kind == "family_max" else np.min
        return lambda V: fn(V, axis=0)
    if spec.kind == "isaacs":
        b = np.cumsum([0] + [len(g) for g in spec.groups])
        return lambda V: np.min(np.stack([V[b[i]:b[i + 1]].max(axis=0) for i in range(len(b) - 1)]), axis=0)
    return lambda V: V[0]


class DiscreteOperator:
    """Assembled affine sample map and channel weights for a problem grid.

    Attributes
    ----------
    interior : ndarray of int
        Flat indices of the unknown nodes.
    A, b : sparse matrix, ndarray
        ``mu = A @ u + b`` over all sample rows.
    owner : ndarray of int
        Position in ``interior`` of the node owning each row.
    weights : ndarray
        Shape ``(channels, rows)``.
    diag_mass : ndarray
        Monotonicity bound ``sum_rows Lip |W| |dmu/du_i|`` per interior node.
    """

    def __init__(self, problem: ProblemSpec):
        self.problem = problem
        spec = problem.operator
        self.spec = spec
        chs, _ = spec.channels()
        self.channels = chs
        self.reduce = _reducer(spec, chs)
        grid = problem.grid()
        self.grid = grid
        n, N, h = problem.n, problem.N, problem.spacing
        X = grid.nodes()
        margins = problem.half_width - np.max(np.abs(X), axis=1)
        self.interior = np.nonzero(margins > 0.5 * h)[0]
        self.boundary = np.nonzero(margins <= 0.5 * h)[0]
        self._assemble(X, h)

    def _assemble(self, X, h):
        p, spec, grid = self.problem, self.spec, self.grid
        n = p.n
        sigma = spec.sigma
        cutoff = spec.cutoff
        quad = replace(spec.quadrature, adaptive=False)
        dirs, w, _, _ = sphere_directions(n, quad.directions)
        nd = len(dirs)
        C = len(self.channels)
        M = X.shape[0]
        m_int = self.interior.size
        delta = 2.0 * h
        r_in = min(delta, cutoff)
        ff = grid.far_field()
        stride = p.N ** np.arange(n - 1, -1, -1)
        bound = 2.0 * max(p.exterior.bound(), 1.0)
        q_in = 0.5 * np.einsum("ka,kb->kab", dirs, dirs)
        fac = r_in ** (2.0 - sigma) / (2.0 - sigma)
        W_in = np.stack([fac * w * ch.amplitude(dirs, r_in) for ch in self.channels])
        rows, cols, data = [], [], []
        b_parts, w_parts, own_parts, self_parts, lin_parts = [], [], [], [], []
        offset = 0

        def push(A_rows, A_cols, A_data, bvec, W, k, selfc, lin):
            nonlocal offset
            rows.append(A_rows + offset)
            cols.append(A_cols)
            data.append(A_data)
            b_parts.append(bvec)
            w_parts.append(W)
            own_parts.append(np.full(bvec.size, k))
            self_parts.append(selfc)
            lin_parts.append(lin)
            offset += bvec.size

        for k, i in enumerate(self.interior):
            x = X[i]
            xnorm = float(np.linalg.norm(x))
            if ff is not None:
                r_far = max(ff.radius + xnorm, 1.0, 2.0 * delta)
            else:
                coef = 2.0 * bound * (2.0 - sigma) * max(c.upper for c in self.channels) * sphere_area(n) / sigma
                r_far = max(1.0, 2.0 * delta, (coef / (0.1 * quad.tail_tol)) ** (1.0 / sigma))
            kinks = [r for r in [cutoff, 1.0] + list(grid.kink_radii(x)) if delta < r < r_far]
            r, wr = fixed_radial_rule(delta, r_far, quad, kinks)
            Y = (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)
            rr = np.repeat(r, nd)
            Z = x[None, :] + Y
            ins = grid.inside(Z)
            base = np.repeat(wr * r ** (n - 1), nd) * np.tile(w, r.size)
            W_all = np.stack([base * ch.weight(Y, rr) for ch in self.channels])
            lin = Y * (rr < cutoff)[:, None]
            # samples inside the box interpolate the nodes
            near = ins | (rr < cutoff)
            Zn = Z[near]
            inside_n = ins[near]
            idx, wts = _multilinear(Zn[inside_n], p.N, p.half_width, h)
            loc = np.nonzero(inside_n)[0]
            e_near = np.zeros(Zn.shape[0])
            if np.any(~inside_n):
                e_near[~inside_n] = p.exterior(Zn[~inside_n])
            push(np.repeat(loc, idx.shape[1]), idx.ravel(), wts.ravel(), e_near, W_all[:, near], k,
                 np.ones(Zn.shape[0]), lin[near])
            # exterior samples beyond the compensator share mu = g(z) - u_i; merge equal g
            far = ~near
            if np.any(far):
                vals, inv = np.unique(p.exterior(Z[far]), return_inverse=True)
                W_far = np.stack([np.bincount(inv, weights=W_all[c, far], minlength=vals.size) for c in range(C)])
                e0 = np.zeros(0, dtype=np.int64)
                push(e0, e0, np.zeros(0), vals, W_far, k, np.ones(vals.size), np.zeros((vals.size, n)))
            # inner model: directional second differences from the centered Hessian
            hr, hc, hd = [], [], []
            for j in range(nd):
                for a_ in range(n):
                    for b_ in range(n):
                        c_ab = q_in[j, a_, b_]
                        if c_ab == 0.0:
                            continue
                        if a_ == b_:
                            hc += [i + stride[a_], i - stride[a_], i]
                            hd += [c_ab / h**2, c_ab / h**2, -2.0 * c_ab / h**2]
                            hr += [j] * 3
                        else:
                            q = c_ab / (4 * h**2)
                            hc += [i + stride[a_] + stride[b_], i + stride[a_] - stride[b_],
                                   i - stride[a_] + stride[b_], i - stride[a_] - stride[b_]]
                            hd += [q, -q, -q, q]
                            hr += [j] * 4
            push(np.asarray(hr), np.asarray(hc), np.asarray(hd), np.zeros(nd), W_in, k, np.zeros(nd),
                 np.zeros((nd, n)))
            if ff is not None:
                Wt = np.array([[np.sum(w * ch.amplitude(dirs, r_far)) * r_far ** (-sigma) / sigma]
                               for ch in self.channels])
                e0 = np.zeros(0, dtype=np.int64)
                push(e0, e0, np.zeros(0), np.array([ff.value]), Wt, k, np.ones(1), np.zeros((1, n)))
        R_ = offset
        self.A = sparse.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                                   shape=(R_, M))
        self.b = np.concatenate(b_parts)
        self.weights = np.concatenate(w_parts, axis=1)
        self.owner = np.concatenate(own_parts)
        self.self_coef = np.concatenate(self_parts)
        lin_all = np.concatenate(lin_parts, axis=0)
        gi = np.repeat(np.arange(m_int) * n, 2 * n) + np.tile(np.repeat(np.arange(n), 2), m_int)
        gc = (self.interior[:, None] + np.concatenate([[s_, -s_] for s_ in stride])[None, :]).ravel()
        gd = np.tile(np.tile([0.5 / h, -0.5 / h], n), m_int)
        self.G = sparse.csr_matrix((gd, (gi, gc)), shape=(m_int * n, M))
        coo = self.A.tocoo()
        sel = coo.col == self.interior[self.owner[coo.row]]
        diag = -self.self_coef.copy()
        np.add.at(diag, coo.row[sel], coo.data[sel])
        own_col = self.interior[self.owner]
        self.A = (self.A - sparse.csr_matrix((self.self_coef, (np.arange(R_), own_col)), shape=(R_, M))).tocsr()
        self.A.eliminate_zeros()
        lr = np.repeat(np.arange(R_), n)
        lc = (self.owner[:, None] * n + np.arange(n)[None, :]).ravel()
        self.L = sparse.csr_matrix((lin_all.ravel(), (lr, lc)), shape=(R_, m_int * n))
        self.L.eliminate_zeros()
        lip = max(c.lipschitz for c in self.channels)
        mass = np.abs(self.weights).max(axis=0) * lip * np.abs(diag)
        self.diag_mass = np.bincount(self.owner, weights=mass, minlength=m_int)
        if np.any(self.diag_mass <= 0):
            raise DomainError("discrete operator has a node without diagonal mass")

    def _eta_scale(self) -> float:
        s = self.spec
        return (2.0 - s.sigma) * s.eta_constant(self.problem.n) * s.R ** (1.0 - s.sigma)

    def samples(self, u_flat: np.ndarray):
        """Increments ``mu`` for every row and the interior gradients."""
        gf = self.G @ u_flat
        m = self.A @ u_flat + self.b - self.L @ gf
        return m, gf.reshape(-1, self.problem.n)

    def apply(self, u_flat: np.ndarray) -> np.ndarray:
        """``I u`` at the interior nodes for full-grid values ``u_flat``."""
        m, g = self.samples(u_flat)
        V = np.empty((len(self.channels), self.interior.size))
        for c, ch in enumerate(self.channels):
            V[c] = np.bincount(self.owner, weights=self.weights[c] * ch.phi(m), minlength=self.interior.size)
        out = self.reduce(V)
        if self.spec.kind.startswith("extremal_eta"):
            fun = self.spec.functional or DirectionFunctional.zero(self.problem.n)
            gn = np.linalg.norm(g, axis=1)
            if self.spec.kind == "extremal_eta_plus":
                out = out + fun.plus(g) + self._eta_scale() * gn
            else:
                out = out - fun.minus(g) - self._eta_scale() * gn
        return out


def initial_guess(problem: ProblemSpec) -> np.ndarray:
    """Multilinear blend of exterior values at the box faces, averaged over axes."""
    X = problem.grid().nodes()
    a = problem.half_width
    n = problem.n
    acc = np.zeros(X.shape[0])
    for d in range(n):
        lo, hi = X.copy(), X.copy()
        lo[:, d], hi[:, d] = -a, a
        t = (X[:, d] + a) / (2 * a)
        acc += (1 - t) * problem.exterior(lo) + t * problem.exterior(hi)
    return acc / n


def residual(u: GridFunction, problem: ProblemSpec, op: Optional[DiscreteOperator] = None) -> dict:
    """Pointwise ``|I u - f|`` over interior nodes with max and L1 summaries."""
    op = op or DiscreteOperator(problem)
    f = problem.forcing_values().ravel()
    r = np.zeros(u.values.size)
    r[op.interior] = np.abs(op.apply(u.values.ravel()) - f[op.interior])
    h = problem.spacing
    return {"grid": r.reshape(u.values.shape), "max": float(r.max()), "l1": float(r.sum() * h**problem.n)}


def solve(problem: ProblemSpec, op: Optional[DiscreteOperator] = None, u0=None, divergence_window: int = 100):
    """March ``u <- u + dt (I u - f)`` to a fixed point.

    Returns
    -------
    GridFunction, SolveReport

    Raises
    ------
    SolverDivergence
        The residual grew tenfold over ``divergence_window`` iterations.
    """
    t0 = time.perf_counter()
    op = op or DiscreteOperator(problem)
    f = problem.forcing_values().ravel()[op.interior]
    u = initial_guess(problem) if u0 is None else np.array(u0, dtype=float).ravel()
    X = op.grid.nodes()
    u[op.boundary] = problem.exterior(X[op.boundary])
    dt = problem.dt_safety / op.diag_mass
    trace = []
    it = 0
    res_hist = []
    converged = False
    while True:
        r = op.apply(u) - f
        res = float(np.max(np.abs(r))) if r.size else 0.0
        res_hist.append(res)
        if it % 100 == 0:
            trace.append((it, res))
        if not math.isfinite(res):
            raise SolverDivergence("residual is not finite", trace)
        if res <= problem.tol:
            converged = True
            break
        if len(res_hist) > divergence_window and res > 10.0 * res_hist[-divergence_window - 1]:
            raise SolverDivergence(f"residual grew from {res_hist[-divergence_window - 1]:.3e} to {res:.3e}",
                                   trace + [(it, res)])
        if it >= problem.max_iters:
            break
        u[op.interior] += dt * r
        it += 1
        if len(res_hist) > 2 * divergence_window:
            res_hist = res_hist[-divergence_window - 1:]
    out = GridFunction(u.reshape((problem.N,) * problem.n), problem.half_width, problem.exterior)
    rep = SolveReport(it, res, float(dt.min()), time.perf_counter() - t0, converged, trace)
    return out, rep
