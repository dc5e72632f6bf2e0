"""Flow ``u_t = log S_k(D^2 u) - log f(x, u)`` with Neumann boundary rows.

The semi-discrete system is a differential-algebraic one: PDE nodes evolve
by the flow, boundary nodes follow from the discrete Neumann relation.  The
time derivative recorded in traces is ``G(u) = log S_k(D^2_h u) - log f`` at
the PDE nodes, i.e. the right-hand side evaluated at the current state.

Backward Euler (default) reuses the elliptic Newton machinery; the explicit
variant advances PDE nodes and then re-solves the boundary relation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .elliptic import (
    ConstData,
    DiscreteSystem,
    ExprData,
    NewtonConfig,
    ProblemSpec,
    SolveReport,
    newton_iterate,
    validate_problem,
    weighted_mean,
    _solve_linear,
)
from .errors import InvalidArgument, NumericalError, ValidationError
from .grid import gradient_from_padded

__all__ = [
    "FlowConfig",
    "FlowTrace",
    "TRACE_COLUMNS",
    "compatibility_check",
    "enforce_neumann",
    "flow_step",
    "flow_run",
    "translating_flow_run",
    "ut_monitor",
    "fit_decay_rate",
]

TRACE_COLUMNS = ("t", "ut_max", "ut_mean", "cone_margin", "sup_du", "sup_d2u", "ut_min", "ut_maxval")
OUTCOMES = ("steady", "translating", "t_max_reached", "blow_up")


@dataclass(frozen=True)
class FlowConfig:
    """Time-stepping settings; ``dt0=None`` means the smallest ``h^2``."""

    stepping: str = "implicit"
    dt0: float | None = None
    dt_growth: float = 1.2
    dt_max: float = 0.1
    steady_tol: float = 1e-8
    translating_tol: float = 1e-8
    t_max: float = 100.0
    max_steps: int = 20000
    max_halvings: int = 40
    compat_tol: float = 1e-6
    force: bool = False
    project_initial: bool = False
    newton_tol: float = 1e-12

    def __post_init__(self):
        if self.stepping not in ("implicit", "explicit"):
            raise InvalidArgument("stepping must be 'implicit' or 'explicit'")
        if self.dt0 is not None and not self.dt0 > 0:
            raise InvalidArgument("dt0 must be positive")
        if not (self.dt_max > 0 and self.dt_growth >= 1 and self.steady_tol > 0 and self.translating_tol > 0 and self.t_max > 0):
            raise InvalidArgument("invalid flow configuration")


@dataclass
class FlowTrace:
    """Accepted-step samples plus the outcome of the run."""

    samples: list = field(default_factory=list)
    outcome: str = ""
    s_est: float | None = None
    steps: int = 0
    rejections: int = 0
    final_residual: float = math.nan
    notes: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([row[i] for row in self.samples])

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "s_est": self.s_est,
            "steps": self.steps,
            "rejections": self.rejections,
            "final_residual": self.final_residual,
            "samples": len(self.samples),
            "notes": self.notes,
        }


def _flow_system(ps: ProblemSpec, data=None) -> DiscreteSystem:
    data = data if data is not None else _flow_data(ps)
    return DiscreteSystem(ps.grid, ps.params, data, ps.pde_rows, form="log")


def _flow_data(ps: ProblemSpec):
    base = ExprData(ps.grid, ps.f, ps.phi)
    if ps.mode == "general":
        return base
    if ps.mode == "classical":
        raise InvalidArgument("the flow is defined for general and translating modes")
    zero = np.zeros(ps.grid.n_nodes)
    return ConstData(ps.grid, base.f(zero)[0], base.phi(zero)[0])


def compatibility_check(ps: ProblemSpec, u0) -> float:
    """``max |(u0)_nu - phi(x, u0)|`` over boundary nodes (order-zero condition).

    At edges and corners the discrete relation is the mean over the incident
    faces, matching the boundary rows of the discrete problem.
    """
    u0 = np.asarray(u0, dtype=float)
    g = ps.grid
    phi, _ = _flow_data(ps).phi(u0)
    return float(np.max(np.abs(g.face_average @ (g.neumann_operator @ u0 - phi))))


def enforce_neumann(system: DiscreteSystem, u, tol: float = 1e-13, max_iter: int = 30) -> np.ndarray:
    """Re-solve boundary values so the discrete Neumann rows vanish, interior fixed."""
    g = system.grid
    u = np.array(u, dtype=float)
    bnd = system.bnd
    if bnd.size == 0:
        return u
    for _ in range(max_iter):
        phi, phiu = system.data.phi(u)
        r = g.face_average @ (g.neumann_operator @ u - phi)
        if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(u))):
            return u
        jb = (g.face_average @ (g.neumann_operator - sp.diags(phiu) @ g.face_selector)).tocsc()[:, bnd]
        u[bnd] -= _solve_linear(sp.csr_matrix(jb), r, 0)
    raise NumericalError("boundary relation did not converge")


@dataclass
class _State:
    u: np.ndarray
    ut: np.ndarray
    margin: float
    ev: object


def _state(system: DiscreteSystem, u: np.ndarray) -> _State:
    ev = system.evaluate(u)
    ut = ev.residual[system.pde]
    return _State(u, ut, ev.margin, ev)


def _step(system: DiscreteSystem, st: _State, dt: float, cfg: FlowConfig):
    """One accepted step, halving ``dt`` on rejection; returns ``(state, dt_used, halvings)``."""
    halvings = 0
    while halvings <= cfg.max_halvings:
        new = _try_step(system, st, dt, cfg)
        if new is not None:
            return new, dt, halvings
        dt *= 0.5
        halvings += 1
    raise NumericalError("time step underflow")


def _try_step(system: DiscreteSystem, st: _State, dt: float, cfg: FlowConfig):
    if cfg.stepping == "implicit":
        be = system.with_data(system.data, dt=dt, u_old=st.u)
        # (u - u_old)/dt cannot be resolved below its rounding level
        floor = 64 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(st.u)))) / dt
        ncfg = NewtonConfig(tol=max(cfg.newton_tol, floor), max_iter=25)
        try:
            u, ok, _ = newton_iterate(be, st.u, ncfg, SolveReport())
        except NumericalError:
            return None
        if not ok:
            return None
        new = _state(system, u)
        return new if new.margin > 0 else None
    u = st.u.copy()
    u[system.pde] += dt * st.ut
    try:
        u = enforce_neumann(system, u)
    except NumericalError:
        return None
    new = _state(system, u)
    if not (new.margin > 0 and np.all(np.isfinite(new.ut))):
        return None
    # stability guard: the explicit update must not amplify u_t
    old = float(np.max(np.abs(st.ut)))
    if float(np.max(np.abs(new.ut))) > (1.0 + 1e-3) * old + 1e-12:
        return None
    return new


def flow_step(ps: ProblemSpec, u, dt: float, stepping: str = "implicit"):
    """Advance one step from ``u``; returns ``(u_new, dt_used)``."""
    cfg = FlowConfig(stepping=stepping)
    system = _flow_system(ps)
    st = _state(system, np.asarray(u, dtype=float))
    if not st.margin > 0:
        raise InvalidArgument("u is not admissible")
    new, used, _ = _step(system, st, dt, cfg)
    return new.u, used


def _sample(system: DiscreteSystem, t: float, st: _State) -> tuple:
    ut = st.ut
    du = gradient_from_padded(system.grid, st.ev.padded)
    return (
        float(t),
        float(np.max(np.abs(ut))),
        float(np.mean(ut)),
        float(st.margin),
        float(np.max(np.linalg.norm(du, axis=1))),
        float(np.max(np.abs(st.ev.hessian))),
        float(np.min(ut)),
        float(np.max(ut)),
    )


def _raw_residual(ps: ProblemSpec, system: DiscreteSystem, u: np.ndarray, shift: float = 0.0) -> float:
    raw = DiscreteSystem(ps.grid, ps.params, system.data, ps.pde_rows, form="raw")
    if shift:
        data = system.data
        raw = DiscreteSystem(ps.grid, ps.params, ConstData(ps.grid, data.f0 * math.exp(shift), data.phi0), ps.pde_rows, "raw")
    return float(np.max(np.abs(raw.evaluate(u).residual)))


def _prepare(ps: ProblemSpec, u0, cfg: FlowConfig, system: DiscreteSystem):
    u0 = np.array(u0, dtype=float)
    if u0.shape != (ps.grid.n_nodes,):
        raise InvalidArgument("initial field does not match the grid")
    if cfg.project_initial:
        u0 = enforce_neumann(system, u0)
    gap = compatibility_check(ps, u0)
    if gap > cfg.compat_tol and not cfg.force:
        raise ValidationError(f"initial data violate the compatibility condition: gap {gap:.3e} > {cfg.compat_tol:.3e}")
    st = _state(system, u0)
    if not st.margin > 0:
        raise ValidationError("initial data are not admissible")
    return st, gap


def _run(ps, u0, cfg, system, done, trace, on_step=None):
    st, gap = _prepare(ps, u0, cfg, system)
    trace.notes["compatibility_gap"] = gap
    trace.notes["higher_order_compatibility"] = "not evaluated"
    h2 = float(np.min(ps.grid.h) ** 2)
    dt = cfg.dt0 if cfg.dt0 is not None else h2
    t = 0.0
    trace.samples.append(_sample(system, t, st))
    if on_step is not None:
        on_step(t, st)
    if done(st):
        return st, t
    while trace.steps < cfg.max_steps:
        if t >= cfg.t_max:
            trace.outcome = "t_max_reached"
            return st, t
        dt = min(dt, cfg.dt_max, cfg.t_max - t)
        try:
            st, used, halvings = _step(system, st, dt, cfg)
        except NumericalError:
            trace.outcome = "blow_up"
            return st, t
        trace.rejections += halvings
        t += used
        trace.steps += 1
        trace.samples.append(_sample(system, t, st))
        if on_step is not None:
            on_step(t, st)
        if done(st):
            return st, t
        dt = min(used * cfg.dt_growth, cfg.dt_max)
    trace.outcome = "t_max_reached"
    return st, t


def flow_run(ps: ProblemSpec, u0, cfg: FlowConfig = FlowConfig()):
    """Integrate the general-mode flow to a steady state; returns ``(u, FlowTrace)``.

    The run stops when ``max |u_t| < steady_tol`` and the raw elliptic residual
    of the field is below ``10 * steady_tol``.
    """
    if ps.mode != "general":
        raise InvalidArgument("flow_run needs a general-mode problem")
    validate_problem(ps)
    system = _flow_system(ps)
    trace = FlowTrace()

    def done(st):
        if np.max(np.abs(st.ut)) >= cfg.steady_tol:
            return False
        return _raw_residual(ps, system, st.u) < 10 * cfg.steady_tol

    st, t = _run(ps, u0, cfg, system, done, trace)
    if not trace.outcome:
        trace.outcome = "steady"
    trace.final_residual = _raw_residual(ps, system, st.u)
    return st.u, trace


def translating_flow_run(ps: ProblemSpec, u0, cfg: FlowConfig = FlowConfig(), reference=None):
    """Integrate the translating-mode flow until ``u_t`` is spatially constant.

    Returns ``(s_est, profile, FlowTrace)`` with ``s_est`` the mean of ``u_t``
    and the profile ``u - s_est t`` shifted to zero mean.  ``reference`` may
    be a pair ``(u_ell, s)`` from the elliptic route; the trace then records
    the extrema of ``w = u - (u_ell + s t)``.
    """
    if ps.mode != "translating":
        raise InvalidArgument("translating_flow_run needs a translating-mode problem")
    validate_problem(ps)
    system = _flow_system(ps)
    trace = FlowTrace()
    snaps: list = []
    w_ext = []

    def on_step(t, st):
        snaps.append((t, st.u.copy()))
        if reference is not None:
            w = st.u - (reference[0] + reference[1] * t)
            w_ext.append((t, float(np.min(w)), float(np.max(w))))

    def done(st):
        return float(np.max(np.abs(st.ut - np.mean(st.ut)))) < cfg.translating_tol

    st, t = _run(ps, u0, cfg, system, done, trace, on_step)
    if not trace.outcome:
        trace.outcome = "translating"
    s_est = float(np.mean(st.ut))
    trace.s_est = s_est
    trace.final_residual = _raw_residual(ps, system, st.u, shift=s_est)
    # secant speed over the second half of the run
    if t > 0:
        half = min(snaps, key=lambda p: abs(p[0] - t / 2))
        if t - half[0] > 0:
            secant = (st.u - half[1]) / (t - half[0])
            trace.notes["secant_speed_spread"] = float(np.max(secant) - np.min(secant))
            trace.notes["secant_speed_mean"] = float(np.mean(secant))
    if reference is not None and w_ext:
        lo0, hi0 = w_ext[0][1], w_ext[0][2]
        worst = max(max(lo0 - lo, hi - hi0) for _, lo, hi in w_ext)
        trace.notes["comparison_excess"] = float(worst)
    profile = st.u - s_est * t
    profile = profile - weighted_mean(ps.grid, profile)
    return s_est, profile, trace


def ut_monitor(trace: FlowTrace, c_f: float | None = None, rate: float | None = None, slack: float = 1e-7, sign_start: bool | None = None) -> list:
    """Check the time-derivative bounds along a trace; returns violations.

    * two-sided: ``min(min u_t(0), 0) <= u_t <= max(max u_t(0), 0)``;
    * decay (when ``c_f`` is given, with ``rate`` defaulting to ``c_f``):
      the same bounds multiplied by ``exp(-rate t)``;
    * sign (when ``sign_start`` is true, meaning ``u_t(0) >= 0``): ``u_t >= 0``.

    Every check allows the additive ``slack`` on ``u_t`` itself.
    """
    if not trace.samples:
        raise InvalidArgument("empty trace")
    t = trace.column("t")
    lo, hi = trace.column("ut_min"), trace.column("ut_maxval")
    top = max(hi[0], 0.0)
    bot = min(lo[0], 0.0)
    out = []
    for i in range(len(t)):
        if hi[i] > top + slack:
            out.append({"bound": "two_sided_upper", "t": float(t[i]), "value": float(hi[i]), "limit": float(top)})
        if lo[i] < bot - slack:
            out.append({"bound": "two_sided_lower", "t": float(t[i]), "value": float(lo[i]), "limit": float(bot)})
    if c_f is not None:
        r = c_f if rate is None else rate
        if r > c_f:
            raise InvalidArgument("decay rate must not exceed c_f")
        for i in range(len(t)):
            damp = math.exp(-r * t[i])
            if hi[i] > top * damp + slack:
                out.append({"bound": "decay_upper", "t": float(t[i]), "value": float(hi[i]), "limit": float(top * damp)})
            if lo[i] < bot * damp - slack:
                out.append({"bound": "decay_lower", "t": float(t[i]), "value": float(lo[i]), "limit": float(bot * damp)})
    if sign_start is None:
        sign_start = bool(lo[0] >= 0)
    if sign_start:
        for i in range(len(t)):
            if lo[i] < -slack:
                out.append({"bound": "sign", "t": float(t[i]), "value": float(lo[i]), "limit": 0.0})
    return out


def fit_decay_rate(trace: FlowTrace, floor: float = 1e-7) -> float:
    """Least-squares rate ``r`` in ``max|u_t| ~ exp(-r t)`` over samples above ``floor``."""
    t = trace.column("t")
    v = trace.column("ut_max")
    mask = v > floor
    if np.sum(mask) < 3:
        raise NumericalError("too few samples above the noise floor for a decay fit")
    slope = np.polyfit(t[mask], np.log(v[mask]), 1)[0]
    return float(-slope)
