"""Finite-difference Neumann solver for ``S_k(D^2 u) = f``.

The discrete system has one row per grid node.  With the default
``pde_rows="interior"`` interior nodes carry the PDE and boundary nodes carry
the one-sided Neumann relation ``(u_nu)_h - phi = 0`` (averaged over the faces
meeting at edges and corners).  With ``pde_rows="all"`` every node carries the
PDE and the boundary data enters through the ghost layer.

Problem data are handled through small "data" objects exposing

    f(u)   -> (f, f_u)       sampled at every node
    phi(u) -> (phi, phi_u)   sampled at every face-value slot of the grid

so the homotopy, the epsilon-perturbations and the flow can all reuse one
residual/Jacobian assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from . import expr as ex
from .errors import InvalidArgument, NumericalError, ValidationError
from .geometry import Rectangle, diameter
from .grid import Grid, build_grid, gradient_from_padded, hessian_from_padded, fill_ghosts, normal_derivative
from .matops import sk_batch
from .symfun import SumHessianParams, binomial_sk, cone_margin, sk_order

__all__ = [
    "MODES",
    "ProblemSpec",
    "NewtonConfig",
    "SolveReport",
    "DiscreteSystem",
    "ExprData",
    "validate_problem",
    "seed_coefficient",
    "admissible_seed",
    "residual",
    "jacobian",
    "newton_solve",
    "continuation_solve",
    "classical_neumann",
    "translating_constant",
    "ClassicalResult",
    "TranslatingResult",
    "c0_bounds",
    "gauge_error",
    "weighted_mean",
]

MODES = ("general", "classical", "translating")
A_MIN = 1e-3


# --- problem description -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One Neumann problem on a rectangle grid.

    ``f`` may use ``x y z u``; ``phi`` may also use the face normal
    ``nu_x nu_y nu_z``.  In classical mode the boundary condition is
    ``u_nu = s + phi(x)``; in translating mode the equation is
    ``S_k(D^2 u) = f(x) e^s``.  ``u_range`` is the interval of ``u`` values
    over which the structural conditions are sampled.
    """

    params: SumHessianParams
    grid: Grid
    f: ex.Expr
    phi: ex.Expr
    mode: str = "general"
    c_phi: float | None = None
    c_f: float | None = None
    f_min: float | None = None
    u_range: tuple[float, float] = (-1.0, 1.0)
    pde_rows: str = "interior"

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgument(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pde_rows not in ("interior", "all"):
            raise InvalidArgument("pde_rows must be 'interior' or 'all'")
        self.params.check_dimension(self.grid.dim)
        if isinstance(self.f, str):
            object.__setattr__(self, "f", ex.parse(self.f))
        if isinstance(self.phi, str):
            object.__setattr__(self, "phi", ex.parse(self.phi))

    @classmethod
    def build(cls, k, alpha, lower, upper, dims, f, phi, **kw) -> "ProblemSpec":
        grid = build_grid(Rectangle(tuple(lower), tuple(upper)), dims)
        return cls(SumHessianParams(k, alpha), grid, f, phi, **kw)


@dataclass(frozen=True)
class NewtonConfig:
    """Damped Newton settings.  ``relative_tol`` divides the tolerance test by ``1 + sup f``."""

    tol: float = 1e-9
    max_iter: int = 30
    min_damp: float = 2.0**-20
    relative_tol: bool = False
    dense_limit: int = 41 * 41
    dt_min: float = 2.0**-10
    dt_max: float = 0.25

    def __post_init__(self):
        if not (self.tol > 0 and self.max_iter >= 1 and 0 < self.min_damp <= 1):
            raise InvalidArgument("invalid Newton configuration")


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    margin_history: list = field(default_factory=list)
    monitors: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_history": [float(v) for v in self.residual_history],
            "damping": [float(v) for v in self.damping],
            "margin_history": [float(v) for v in self.margin_history],
            "monitors": self.monitors,
            "stages": self.stages,
            "message": self.message,
        }


# --- data objects --------------------------------------------------------------


def _node_env(grid: Grid) -> dict:
    names = ("x", "y", "z")
    env = {names[a]: grid.coords[:, a] for a in range(grid.dim)}
    for a in range(grid.dim, 3):
        env[names[a]] = np.zeros(grid.n_nodes)
    env["t"] = 0.0
    for nm in ("nu_x", "nu_y", "nu_z"):
        env[nm] = 0.0
    return env


def _face_env(grid: Grid) -> dict:
    nodes = grid.face_value_nodes
    names = ("x", "y", "z")
    env = {names[a]: grid.coords[nodes, a] for a in range(grid.dim)}
    for a in range(grid.dim, 3):
        env[names[a]] = np.zeros(nodes.size)
    normals = np.concatenate([np.repeat(f.normal[None, :], f.nodes.size, axis=0) for f in grid.faces])
    nus = ("nu_x", "nu_y", "nu_z")
    for a in range(3):
        env[nus[a]] = normals[:, a] if a < grid.dim else np.zeros(nodes.size)
    env["t"] = 0.0
    return env


def _eval_full(node: ex.Expr, env: dict, size: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(ex.evaluate(node, env), dtype=float), (size,)).copy()


class ExprData:
    """Problem data from expressions, sampled on the grid."""

    def __init__(self, grid: Grid, f: ex.Expr, phi: ex.Expr):
        self.grid = grid
        self._f, self._fu = f, ex.deriv(f, "u")
        self._phi, self._phiu = phi, ex.deriv(phi, "u")
        self._nenv = _node_env(grid)
        self._fenv = _face_env(grid)
        self._slots = grid.face_value_nodes

    def f(self, u):
        env = dict(self._nenv, u=u)
        n = self.grid.n_nodes
        return _eval_full(self._f, env, n), _eval_full(self._fu, env, n)

    def phi(self, u):
        env = dict(self._fenv, u=u[self._slots])
        m = self._slots.size
        return _eval_full(self._phi, env, m), _eval_full(self._phiu, env, m)


@dataclass
class ConstData:
    """Precomputed ``f(x)`` and ``phi(x)`` with optional linear/exponential u-dependence.

    ``f(u) = f0 * exp(f_rate * u)`` and ``phi(u) = phi0 + phi_rate * u``.
    """

    grid: Grid
    f0: np.ndarray
    phi0: np.ndarray
    f_rate: float = 0.0
    phi_rate: float = 0.0

    def f(self, u):
        if self.f_rate == 0.0:
            return self.f0, np.zeros_like(self.f0)
        val = self.f0 * np.exp(self.f_rate * u)
        return val, self.f_rate * val

    def phi(self, u):
        if self.phi_rate == 0.0:
            return self.phi0, np.zeros_like(self.phi0)
        return self.phi0 + self.phi_rate * u[self.grid.face_value_nodes], np.full(self.phi0.size, self.phi_rate)


@dataclass
class HomotopyData:
    """``f_t = (1-t) g0 + t f`` and ``phi_t = (1-t)(psi0 + c (u - u0)) + t phi``."""

    base: object
    t: float
    g0: np.ndarray
    psi0: np.ndarray
    u0_slots: np.ndarray
    c: float
    slots: np.ndarray

    def f(self, u):
        if self.t == 0.0:
            return self.g0, np.zeros_like(self.g0)
        fb, fub = self.base.f(u)
        return (1 - self.t) * self.g0 + self.t * fb, self.t * fub

    def phi(self, u):
        lin = self.psi0 + self.c * (u[self.slots] - self.u0_slots)
        if self.t == 0.0:
            return lin, np.full(lin.size, self.c)
        pb, pub = self.base.phi(u)
        return (1 - self.t) * lin + self.t * pb, (1 - self.t) * self.c + self.t * pub


# --- discrete system -----------------------------------------------------------


@dataclass
class Evaluation:
    residual: np.ndarray
    margin: float
    hessian: np.ndarray
    sig: np.ndarray
    value: np.ndarray
    grad: np.ndarray
    f: np.ndarray
    fu: np.ndarray
    phi: np.ndarray
    phiu: np.ndarray
    padded: np.ndarray
    jac: sp.csr_matrix | None = None


class DiscreteSystem:
    """Residual and Jacobian of the discrete Neumann problem.

    ``form="raw"`` uses ``S_k - f``; ``form="log"`` uses ``log S_k - log f``.
    When ``dt`` is given the PDE rows become the backward-Euler residual
    ``G(u) - (u - u_old)/dt``.
    """

    def __init__(self, grid: Grid, params: SumHessianParams, data, pde_rows="interior", form="raw", dt=None, u_old=None):
        if form not in ("raw", "log"):
            raise InvalidArgument("form must be 'raw' or 'log'")
        self.grid, self.params, self.data = grid, params, data
        self.pde_rows, self.form = pde_rows, form
        self.dt, self.u_old = dt, u_old
        self.pde = grid.interior if pde_rows == "interior" else np.arange(grid.n_nodes)
        self.bnd = grid.boundary if pde_rows == "interior" else np.array([], dtype=np.int64)

    def with_data(self, data, dt=None, u_old=None) -> "DiscreteSystem":
        return DiscreteSystem(self.grid, self.params, data, self.pde_rows, self.form, dt, u_old)

    def evaluate(self, u: np.ndarray, jac: bool = False) -> Evaluation:
        g, p = self.grid, self.params
        phi, phiu = self.data.phi(u)
        padded = fill_ghosts(g, u, phi)
        h_all = hessian_from_padded(g, padded)
        h = h_all[self.pde]
        sig, value, grad = sk_batch(h, p)
        margin = float(np.min(cone_margin(sig, p))) if self.pde.size else math.inf
        f, fu = self.data.f(u)
        fp, fup = f[self.pde], fu[self.pde]
        res = np.empty(g.n_nodes)
        with np.errstate(all="ignore"):
            if self.form == "raw":
                pde_res = value - fp
            else:
                pde_res = np.where(value > 0, np.log(np.where(value > 0, value, 1.0)), -np.inf) - np.log(fp)
        if self.dt is not None:
            pde_res = pde_res - (u[self.pde] - self.u_old[self.pde]) / self.dt
        res[self.pde] = pde_res
        if self.bnd.size:
            res[self.bnd] = g.face_average @ (g.neumann_operator @ u - phi)
        ev = Evaluation(res, margin, h_all, sig, value, grad, f, fu, phi, phiu, padded)
        if jac:
            ev.jac = self._jacobian(ev)
        return ev

    def _jacobian(self, ev: Evaluation) -> sp.csr_matrix:
        g, n = self.grid, self.grid.dim
        gop = g.ghost_operator(ev.phiu)
        rows = self.pde
        acc = None
        for (a, b), d in g.hessian_stencils.items():
            w = ev.grad[:, a, b] * (1.0 if a == b else 2.0)
            term = sp.diags(w) @ (d[rows] @ gop)
            acc = term if acc is None else acc + term
        fp, fup = ev.f[rows], ev.fu[rows]
        if self.form == "raw":
            j_pde = acc - sp.diags(fup) @ _selector(rows, g.n_nodes)
        else:
            j_pde = sp.diags(1.0 / ev.value) @ acc - sp.diags(fup / fp) @ _selector(rows, g.n_nodes)
        if self.dt is not None:
            j_pde = j_pde - sp.diags(np.full(rows.size, 1.0 / self.dt)) @ _selector(rows, g.n_nodes)
        out = _selector(rows, g.n_nodes).T @ j_pde
        if self.bnd.size:
            j_b = g.face_average @ (g.neumann_operator - sp.diags(ev.phiu) @ g.face_selector)
            out = out + _selector(self.bnd, g.n_nodes).T @ j_b
        return sp.csr_matrix(out)


def _selector(rows: np.ndarray, n: int) -> sp.csr_matrix:
    return sp.csr_matrix((np.ones(rows.size), (np.arange(rows.size), rows)), shape=(rows.size, n))


def _solve_linear(j: sp.csr_matrix, rhs: np.ndarray, dense_limit: int) -> np.ndarray:
    try:
        if j.shape[0] <= dense_limit:
            x = np.linalg.solve(j.toarray(), rhs)
        else:
            x = spla.spsolve(j.tocsc(), rhs)
    except (np.linalg.LinAlgError, RuntimeError) as err:
        raise NumericalError(f"linear solve failed: {err}") from err
    if not np.all(np.isfinite(x)):
        raise NumericalError("linear solve produced non-finite values")
    return x


# --- Newton --------------------------------------------------------------------


def newton_iterate(system: DiscreteSystem, u_init, cfg: NewtonConfig, report: SolveReport | None = None, monitor=None):
    """Damped Newton on ``system``; returns ``(u, converged, evaluation)``.

    A step ``u + lam du`` is accepted for the first ``lam`` in 1, 1/2, 1/4, ...
    that strictly lowers the residual max-norm and keeps a positive cone
    margin at every PDE node.
    """
    report = report if report is not None else SolveReport()
    u = np.array(u_init, dtype=float)
    ev = system.evaluate(u, jac=True)
    scale = 1.0 + float(np.max(np.abs(ev.f))) if cfg.relative_tol else 1.0
    norm = float(np.max(np.abs(ev.residual)))
    report.residual_history.append(norm)
    report.margin_history.append(ev.margin)
    if monitor is not None:
        monitor(ev)
    for _ in range(cfg.max_iter):
        if norm / scale <= cfg.tol and ev.margin > 0:
            return u, True, ev
        du = _solve_linear(ev.jac, -ev.residual, cfg.dense_limit)
        lam = 1.0
        while True:
            trial = u + lam * du
            ev_t = system.evaluate(trial)
            n_t = float(np.max(np.abs(ev_t.residual)))
            if np.isfinite(n_t) and n_t < norm and ev_t.margin > 0:
                break
            lam *= 0.5
            if lam < cfg.min_damp:
                report.message = "damping underflow"
                return u, False, ev
        u = trial
        report.iterations += 1
        report.damping.append(lam)
        ev = system.evaluate(u, jac=True)
        norm = float(np.max(np.abs(ev.residual)))
        report.residual_history.append(norm)
        report.margin_history.append(ev.margin)
        if monitor is not None:
            monitor(ev)
    if norm / scale <= cfg.tol and ev.margin > 0:
        return u, True, ev
    report.message = "iteration limit reached"
    return u, False, ev


class ContractionMonitor:
    """Tracks the trace identity and two-sided bound at every accepted iterate."""

    def __init__(self, p: SumHessianParams, n: int):
        self.p, self.n = p, n
        self.max_rel = 0.0
        self.violations = 0
        self.samples = 0

    def __call__(self, ev: Evaluation) -> None:
        p, n, k, a = self.p, self.n, self.p.k, self.p.alpha
        sig, t = ev.sig, ev.grad
        h = ev.hessian if ev.hessian.shape[0] == t.shape[0] else None
        if h is None or k < 2:
            return
        contr = np.einsum("nij,nij->n", t, h)
        tr = np.trace(t, axis1=1, axis2=2)
        lhs = contr + a / (n - k + 1) * tr
        s_k = sk_order(sig, k, a)
        rhs = k * s_k + (n - k + 2) / (n - k + 1) * a * a * sig[:, k - 2]
        scale = np.maximum(1.0, np.abs(lhs) + np.abs(rhs))
        self.max_rel = max(self.max_rel, float(np.max(np.abs(lhs - rhs) / scale)))
        tol = 1e-9 * scale
        bad = (contr < -a / (n - k + 1) * tr - tol) | (contr > k * s_k + tol)
        self.violations += int(np.sum(bad))
        self.samples += int(contr.size)

    def to_dict(self) -> dict:
        return {"identity_max_rel_err": self.max_rel, "bound_violations": self.violations, "samples": self.samples}


def _contraction_monitor(system: DiscreteSystem):
    mon = ContractionMonitor(system.params, system.grid.dim)

    def call(ev: Evaluation):
        sub = replace(ev, hessian=ev.hessian[system.pde])
        mon(sub)

    return mon, call


def field_monitors(grid: Grid, u: np.ndarray, ev: Evaluation) -> dict:
    du = gradient_from_padded(grid, ev.padded)
    return {
        "sup_u": float(np.max(np.abs(u))),
        "min_u": float(np.min(u)),
        "max_u": float(np.max(u)),
        "sup_du": float(np.max(np.linalg.norm(du, axis=1))),
        "sup_d2u": float(np.max(np.abs(ev.hessian))),
        "min_cone_margin": float(ev.margin),
        "residual_max": float(np.max(np.abs(ev.residual))),
    }


# --- seed and validation ---------------------------------------------------------


def seed_coefficient(params: SumHessianParams, n: int, sup_f: float) -> float:
    """Smallest ``A >= A_MIN`` with ``S_k(A, ..., A) >= 2 sup f``."""
    target = 2.0 * sup_f
    g = lambda a: binomial_sk(n, params, a) - target  # noqa: E731
    if g(A_MIN) >= 0:
        return A_MIN
    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
    return float(brentq(g, A_MIN, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def _f_at_zero(ps: ProblemSpec) -> np.ndarray:
    env = dict(_node_env(ps.grid), u=0.0)
    return _eval_full(ps.f, env, ps.grid.n_nodes)


def admissible_seed(ps: ProblemSpec, sup_f: float | None = None):
    """Return ``(u0, A)`` with ``u0 = A |x - x_c|^2 / 2`` and ``S_k(A 1) >= 2 sup f``.

    ``sup f`` is taken over the grid nodes at ``u = 0`` unless given.
    """
    if sup_f is None:
        sup_f = float(np.max(_f_at_zero(ps)))
    a = seed_coefficient(ps.params, ps.grid.dim, sup_f)
    return _seed_field(ps.grid, a), a


def _seed_field(grid: Grid, a: float) -> np.ndarray:
    c = grid.domain.center
    return 0.5 * a * np.sum((grid.coords - c) ** 2, axis=1)


def validate_problem(ps: ProblemSpec) -> dict:
    """Check the structural hypotheses on a sample of nodes and ``u`` values.

    Returns the sampled extremes.  Raises :class:`ValidationError` when
    ``f <= 0`` (or below ``f_min``), when ``phi_u`` exceeds ``c_phi`` in
    general mode, or when data depend on ``u`` where they must not.
    """
    g = ps.grid
    if ps.params.k < 2:
        raise ValidationError("problems need k >= 2")
    fvars = ex.free_variables(ps.f)
    pvars = ex.free_variables(ps.phi)
    if fvars & {"t", "nu_x", "nu_y", "nu_z"}:
        raise ValidationError("f may only use x, y, z, u")
    if "t" in pvars:
        raise ValidationError("phi may not use t")
    if ps.mode in ("classical", "translating"):
        if "u" in fvars or "u" in pvars:
            raise ValidationError(f"{ps.mode} mode needs f and phi independent of u")
    lo, hi = ps.u_range
    if not lo <= hi:
        raise ValidationError("u_range must be increasing")
    us = np.linspace(lo, hi, 9)
    data = ExprData(g, ps.f, ps.phi)
    f_min, phi_u_max, ratio_min = math.inf, -math.inf, math.inf
    try:
        for uv in us:
            u = np.full(g.n_nodes, uv)
            f, fu = data.f(u)
            phi, phiu = data.phi(u)
            if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(phiu))):
                raise ValidationError("phi is not finite on the sample")
            f_min = min(f_min, float(np.min(f)))
            phi_u_max = max(phi_u_max, float(np.max(phiu)))
            if np.all(f > 0):
                ratio_min = min(ratio_min, float(np.min(fu / f)))
    except ex.ExprDomainError as err:
        raise ValidationError(f"expression cannot be evaluated on the sample: {err}") from err
    if not f_min > 0:
        raise ValidationError(f"f must be positive; sampled minimum {f_min:.6g}")
    if ps.f_min is not None and f_min < ps.f_min:
        raise ValidationError(f"f drops to {f_min:.6g} below f_min={ps.f_min}")
    if ps.mode == "general":
        if ps.c_phi is None or not ps.c_phi < 0:
            raise ValidationError("general mode needs c_phi < 0")
        if phi_u_max > ps.c_phi + 1e-12:
            raise ValidationError(f"phi_u reaches {phi_u_max:.6g} above c_phi={ps.c_phi}")
    if ps.c_f is not None and ratio_min < ps.c_f - 1e-12:
        raise ValidationError(f"f_u/f drops to {ratio_min:.6g} below c_f={ps.c_f}")
    return {"f_min": f_min, "phi_u_max": phi_u_max, "fu_over_f_min": ratio_min}


def c0_bounds(ps: ProblemSpec, seed_a: float | None = None) -> tuple[float, float]:
    """A priori interval ``(L, U)`` for general-mode solutions.

    ``U = max(0, max_b phi(x,0)/(-c_phi))`` and
    ``L = min(0, min_b (2 A diam - phi(x,0))/c_phi) - A diam^2/2``, where the
    minimum with zero covers a nonnegative boundary minimum of ``u - v``.
    """
    if ps.c_phi is None or not ps.c_phi < 0:
        raise InvalidArgument("c0 bounds need c_phi < 0")
    if seed_a is None:
        _, seed_a = admissible_seed(ps)
    data = ExprData(ps.grid, ps.phi, ps.phi)
    phi0, _ = data.phi(np.zeros(ps.grid.n_nodes))
    diam = diameter(ps.grid.domain)
    upper = max(0.0, float(np.max(phi0)) / (-ps.c_phi))
    lower_b = float(np.min((2.0 * seed_a * diam - phi0) / ps.c_phi))
    lower = min(0.0, lower_b) - seed_a * diam * diam / 2.0
    return lower, upper


def weighted_mean(grid: Grid, v: np.ndarray) -> float:
    w = grid.trapezoid_weights()
    return float(np.sum(w * v) / np.sum(w))


def gauge_error(grid: Grid, u: np.ndarray, ref: np.ndarray) -> float:
    """Max-norm of ``u - ref`` after removing the mean difference."""
    d = u - ref
    return float(np.max(np.abs(d - weighted_mean(grid, d))))


# --- public solvers --------------------------------------------------------------


def _system(ps: ProblemSpec, data=None, form="raw") -> DiscreteSystem:
    data = data if data is not None else ExprData(ps.grid, ps.f, ps.phi)
    return DiscreteSystem(ps.grid, ps.params, data, ps.pde_rows, form)


def _mode_data(ps: ProblemSpec, s: float):
    base = ExprData(ps.grid, ps.f, ps.phi)
    if ps.mode == "general":
        return base
    u0 = np.zeros(ps.grid.n_nodes)
    f0, _ = base.f(u0)
    phi0, _ = base.phi(u0)
    if ps.mode == "classical":
        return ConstData(ps.grid, f0, phi0 + s)
    return ConstData(ps.grid, f0 * math.exp(s), phi0)


def residual(ps: ProblemSpec, u, s: float = 0.0):
    """``(pde_rows, neumann_rows)`` of the discrete problem at ``u``.

    ``s`` is the classical boundary constant or the translating speed.
    """
    sysm = _system(ps, _mode_data(ps, s))
    r = sysm.evaluate(np.asarray(u, dtype=float)).residual
    return r[sysm.pde], r[sysm.bnd]


def jacobian(ps: ProblemSpec, u, s: float = 0.0) -> sp.csr_matrix:
    """Sparse Jacobian of the full residual (rows in node order)."""
    sysm = _system(ps, _mode_data(ps, s))
    return sysm.evaluate(np.asarray(u, dtype=float), jac=True).jac


def newton_solve(ps: ProblemSpec, u_init, cfg: NewtonConfig = NewtonConfig(), s: float = 0.0):
    """Damped Newton from ``u_init``; returns ``(u, SolveReport)``."""
    sysm = _system(ps, _mode_data(ps, s))
    report = SolveReport()
    mon, call = _contraction_monitor(sysm)
    u0 = np.asarray(u_init, dtype=float)
    if sysm.evaluate(u0).margin <= 0:
        raise InvalidArgument("initial field is not admissible at every PDE node")
    u, ok, ev = newton_iterate(sysm, u0, cfg, report, call)
    report.converged = ok
    report.monitors = field_monitors(ps.grid, u, ev)
    report.monitors["contraction"] = mon.to_dict()
    _attach_c0(ps, u, report)
    return u, report


def _attach_c0(ps: ProblemSpec, u: np.ndarray, report: SolveReport, tol: float = 1e-2) -> None:
    if ps.mode != "general" or ps.c_phi is None or not ps.c_phi < 0:
        return
    lower, upper = c0_bounds(ps)
    ok = bool(np.min(u) >= lower - tol and np.max(u) <= upper + tol)
    report.monitors["c0_bounds"] = {"lower": lower, "upper": upper, "pass": ok}


def _continuation(system: DiscreteSystem, base, u_seed: np.ndarray, c_hom: float, cfg: NewtonConfig, report: SolveReport, monitor=None):
    """Homotopy from the seed problem (``t = 0``) to ``base`` (``t = 1``)."""
    g = system.grid
    psi0 = normal_derivative(g, u_seed)
    pad = fill_ghosts(g, u_seed, psi0)
    h = hessian_from_padded(g, pad)
    _, g0, _ = sk_batch(h, system.params)
    if np.any(g0 <= 0):
        raise NumericalError("seed is not admissible")
    slots = g.face_value_nodes
    make = lambda t: HomotopyData(base, t, g0, psi0, u_seed[slots], c_hom, slots)  # noqa: E731
    u = u_seed.copy()
    u, ok, ev = newton_iterate(system.with_data(make(0.0)), u, cfg, SolveReport(), monitor)
    report.stages.append({"t": 0.0, "iterations": 0, "converged": ok})
    t, dt = 0.0, cfg.dt_max
    while t < 1.0:
        t_try = min(1.0, t + dt)
        sub = SolveReport()
        try:
            u_new, ok, ev_new = newton_iterate(system.with_data(make(t_try)), u, cfg, sub, monitor)
        except NumericalError:
            ok = False
        report.iterations += sub.iterations
        report.damping.extend(sub.damping)
        report.residual_history.extend(sub.residual_history)
        report.margin_history.extend(sub.margin_history)
        if ok:
            u, ev, t = u_new, ev_new, t_try
            report.stages.append({"t": t, "iterations": sub.iterations, "converged": True})
            dt = min(cfg.dt_max, 1.5 * dt)
        else:
            report.stages.append({"t": t_try, "iterations": sub.iterations, "converged": False})
            dt *= 0.5
            if dt < cfg.dt_min:
                report.message = f"continuation step underflow at t={t:.6g}"
                return u, False, ev
    report.message = "converged"
    return u, True, ev


def continuation_solve(ps: ProblemSpec, cfg: NewtonConfig = NewtonConfig()):
    """Method-of-continuity solve of a general-mode problem from the quadratic seed."""
    if ps.mode != "general":
        raise InvalidArgument("continuation_solve handles general mode; use classical_neumann or translating_constant")
    validate_problem(ps)
    sysm = _system(ps)
    u_seed, a = admissible_seed(ps)
    report = SolveReport()
    mon, call = _contraction_monitor(sysm)
    u, ok, ev = _continuation(sysm, sysm.data, u_seed, ps.c_phi, cfg, report, call)
    report.converged = ok
    report.monitors = field_monitors(ps.grid, u, ev)
    report.monitors["seed_a"] = a
    report.monitors["contraction"] = mon.to_dict()
    _attach_c0(ps, u, report)
    return u, report


# --- epsilon schemes ----------------------------------------------------------------

DEFAULT_EPS = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass
class ClassicalResult:
    s: float
    u: np.ndarray
    eps: list
    s_seq: list
    s_extrapolated: float
    reports: list
    converged: bool

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "eps": list(self.eps),
            "s_seq": list(self.s_seq),
            "s_extrapolated": self.s_extrapolated,
            "converged": self.converged,
            "stages": [r.to_dict() for r in self.reports],
        }


@dataclass
class TranslatingResult:
    s: float
    u_ell: np.ndarray
    y0: int
    eps: list
    s_seq: list
    s_extrapolated: float
    shift_identity_err: float
    reports: list
    converged: bool

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "y0": self.y0,
            "eps": list(self.eps),
            "s_seq": list(self.s_seq),
            "s_extrapolated": self.s_extrapolated,
            "shift_identity_err": self.shift_identity_err,
            "converged": self.converged,
            "stages": [r.to_dict() for r in self.reports],
        }


def _extrapolate(eps, s_seq) -> float:
    """Linear-in-epsilon extrapolation from the last two stages."""
    if len(s_seq) < 2:
        return float(s_seq[-1]) if s_seq else math.nan
    e1, e2 = eps[-2], eps[-1]
    s1, s2 = s_seq[-2], s_seq[-1]
    return float((e1 * s2 - e2 * s1) / (e1 - e2))


def _check_eps(eps_seq) -> list:
    eps = [float(e) for e in eps_seq]
    if not eps or any(not e > 0 for e in eps):
        raise InvalidArgument("eps_seq must be a nonempty list of positive numbers")
    return eps


def _stage(system: DiscreteSystem, data, warm, u_seed, cfg):
    """Newton from ``warm``; on failure fall back to continuation from the seed."""
    rep = SolveReport()
    ok = False
    if warm is not None:
        try:
            u, ok, ev = newton_iterate(system.with_data(data), warm, cfg, rep)
        except NumericalError:
            ok = False
    if not ok:
        rep = SolveReport()
        u, ok, ev = _continuation(system.with_data(data), data, u_seed, -1.0, cfg, rep)
    rep.converged = ok
    return u, ok, ev, rep


def classical_neumann(ps: ProblemSpec, cfg: NewtonConfig = NewtonConfig(), eps_seq=DEFAULT_EPS) -> ClassicalResult:
    """Recover the boundary constant ``s`` of ``u_nu = s + phi(x)`` by the epsilon scheme.

    Each stage solves ``u_nu = -eps u + phi(x)`` written as ``u = v + m`` with a
    constant offset ``m = -s_prev/eps``, so the large constant part of
    ``u_eps`` never enters the floating-point field.
    """
    if ps.mode != "classical":
        raise InvalidArgument("classical_neumann needs a classical-mode problem")
    validate_problem(ps)
    eps = _check_eps(eps_seq)
    g = ps.grid
    zero = np.zeros(g.n_nodes)
    base = ExprData(g, ps.f, ps.phi)
    f0, _ = base.f(zero)
    phi0, _ = base.phi(zero)
    u_seed, _ = admissible_seed(ps)
    sysm = _system(ps, ConstData(g, f0, phi0))
    bnd = g.boundary
    s_prev, warm = 0.0, None
    s_seq, reports, w = [], [], None
    all_ok = True
    for e in eps:
        m = -s_prev / e
        data = ConstData(g, f0, phi0 - e * m, phi_rate=-e)
        v, ok, ev, rep = _stage(sysm, data, warm, u_seed, cfg)
        rep.monitors = field_monitors(g, v, ev)
        reports.append(rep)
        if not ok:
            all_ok = False
            break
        s_e = float(-e * np.mean(v[bnd]) + s_prev)
        rep.monitors["eps"] = e
        rep.monitors["s_eps"] = s_e
        s_seq.append(s_e)
        w = v - weighted_mean(g, v)
        warm, s_prev = w, s_e
    s = s_seq[-1] if s_seq else math.nan
    u = w if w is not None else zero
    return ClassicalResult(s, u, eps[: len(s_seq)], s_seq, _extrapolate(eps, s_seq), reports, all_ok)


def translating_constant(ps: ProblemSpec, u0=None, y0: int | None = None, cfg: NewtonConfig = NewtonConfig(), eps_seq=DEFAULT_EPS) -> TranslatingResult:
    """Speed ``s`` of the translating problem via ``S_k = f e^{eps u}``.

    ``s_eps = eps (u_eps(y0) - u0(y0))`` and the profile
    ``u_ell = u_eps - s_eps/eps`` is pinned to ``u0`` at ``y0``.  Stages use
    the offset ``u = v + s_prev/eps`` so that ``u_ell = v - v(y0) + u0(y0)``
    is formed without cancellation.
    """
    if ps.mode != "translating":
        raise InvalidArgument("translating_constant needs a translating-mode problem")
    validate_problem(ps)
    eps = _check_eps(eps_seq)
    g = ps.grid
    zero = np.zeros(g.n_nodes)
    base = ExprData(g, ps.f, ps.phi)
    f0, _ = base.f(zero)
    phi0, _ = base.phi(zero)
    u_seed, _ = admissible_seed(ps)
    u0 = u_seed if u0 is None else np.asarray(u0, dtype=float)
    if y0 is None:
        y0 = g.nearest_node(g.domain.center)
    sysm = _system(ps, ConstData(g, f0, phi0))
    s_prev, warm = 0.0, None
    s_seq, reports, u_ell = [], [], None
    all_ok = True
    last = None
    for e in eps:
        data = ConstData(g, f0 * math.exp(s_prev), phi0, f_rate=e)
        v, ok, ev, rep = _stage(sysm, data, warm, u_seed, cfg)
        rep.monitors = field_monitors(g, v, ev)
        reports.append(rep)
        if not ok:
            all_ok = False
            break
        s_e = float(e * (v[y0] - u0[y0]) + s_prev)
        rep.monitors["eps"] = e
        rep.monitors["s_eps"] = s_e
        s_seq.append(s_e)
        u_ell = v - v[y0] + u0[y0]
        last = (e, s_e)
        warm = u_ell
        s_prev = s_e
    shift_err = math.nan
    if last is not None:
        # solving directly at s = s_eps must reproduce u_ell
        e, s_e = last
        data = ConstData(g, f0 * math.exp(s_e), phi0, f_rate=e)
        u_chk, ok_chk, _ = newton_iterate(sysm.with_data(data), u_ell, cfg, SolveReport())
        shift_err = float(np.max(np.abs(u_chk - u_ell))) if ok_chk else math.inf
    s = s_seq[-1] if s_seq else math.nan
    return TranslatingResult(
        s, u_ell if u_ell is not None else zero, int(y0), eps[: len(s_seq)], s_seq,
        _extrapolate(eps, s_seq), shift_err, reports, all_ok,
    )
