import numpy as np
import pytest

from sumhess.elliptic import ProblemSpec, continuation_solve
from sumhess.errors import InvalidArgument, ValidationError
from sumhess.parabolic import (
    TRACE_COLUMNS,
    FlowConfig,
    FlowTrace,
    compatibility_check,
    fit_decay_rate,
    flow_run,
    flow_step,
    translating_flow_run,
    ut_monitor,
)

Q = "(x^2+y^2)/2"


def relaxing(n=9, shift=""):
    """Steady state ``u* = |x|^2/2`` with ``f_u/f = 1`` and ``phi_u = -1``."""
    return ProblemSpec.build(
        2, 1.0, (0, 0), (1, 1), (n, n),
        f"3*exp(u-{Q})", f"nu_x*x+nu_y*y{shift}-(u-{Q})",
        c_phi=-1.0, c_f=1.0, u_range=(-1, 2),
    )


def quad(ps):
    return 0.5 * np.sum(ps.grid.coords**2, axis=1)


def test_compatibility_examples():
    ps = relaxing()
    assert compatibility_check(ps, quad(ps)) < 1e-14
    assert compatibility_check(relaxing(shift="+0.1"), quad(ps)) == pytest.approx(0.1)


def test_incompatible_start_is_gated():
    ps = relaxing(shift="+0.1")
    with pytest.raises(ValidationError, match="compatibility"):
        flow_run(ps, quad(ps), FlowConfig())
    _, trace = flow_run(ps, quad(ps), FlowConfig(force=True, t_max=0.05))
    assert trace.notes["compatibility_gap"] == pytest.approx(0.1)


def test_fixed_point_step():
    ps = relaxing()
    u, dt = flow_step(ps, quad(ps), 0.01)
    assert dt == 0.01
    np.testing.assert_allclose(u, quad(ps), atol=1e-12)


def test_steady_start_stops_immediately():
    ps = relaxing()
    u, trace = flow_run(ps, quad(ps), FlowConfig())
    assert trace.outcome == "steady" and trace.steps <= 2
    assert ut_monitor(trace, c_f=1.0) == []


def test_elliptic_solution_is_steady():
    ps = relaxing()
    ue, rep = continuation_solve(ps)
    assert rep.converged
    _, trace = flow_run(ps, ue, FlowConfig())
    assert trace.steps <= 2


def test_supersolution_start_keeps_sign():
    ps = relaxing()
    u, trace = flow_run(ps, quad(ps) - 0.1, FlowConfig(project_initial=True))
    assert trace.outcome == "steady"
    assert trace.column("ut_min")[0] >= 0
    assert trace.column("ut_min").min() >= -1e-7
    assert ut_monitor(trace, c_f=1.0, rate=0.8, sign_start=True) == []
    assert fit_decay_rate(trace) >= 0.8
    assert np.max(np.abs(u - quad(ps))) < 1e-6
    assert np.all(trace.column("cone_margin") > 0)


def test_explicit_large_step_is_rejected():
    ps = relaxing()
    x, y = ps.grid.coords.T
    u0 = quad(ps) + 0.05 * np.cos(np.pi * x) * np.cos(np.pi * y)
    cfg = FlowConfig(stepping="explicit", dt0=1000 * ps.grid.h[0] ** 2, t_max=0.2, project_initial=True)
    _, trace = flow_run(ps, u0, cfg)
    assert trace.rejections > 0


def test_implicit_and_explicit_agree():
    ps = relaxing()
    x, y = ps.grid.coords.T
    u0 = quad(ps) + 0.05 * np.cos(np.pi * x) * np.cos(np.pi * y)
    ui, ti = flow_run(ps, u0, FlowConfig(project_initial=True))
    ue, te = flow_run(ps, u0, FlowConfig(project_initial=True, stepping="explicit"))
    assert ti.outcome == te.outcome == "steady"
    np.testing.assert_allclose(ui, ue, atol=1e-6)


def test_monitor_flags_corrupted_trace():
    trace = FlowTrace()
    for i, t in enumerate(np.linspace(0, 1, 11)):
        row = dict.fromkeys(TRACE_COLUMNS, 0.0)
        row.update(t=t, ut_max=np.exp(-t), ut_min=0.0, ut_maxval=np.exp(-t))
        if i == 6:
            row["ut_maxval"] = 2.0
        trace.samples.append(tuple(row[c] for c in TRACE_COLUMNS))
    found = ut_monitor(trace)
    assert found and found[0]["bound"] == "two_sided_upper" and found[0]["t"] == pytest.approx(0.6)
    assert any(v["bound"] == "decay_upper" for v in ut_monitor(trace, c_f=1.0))
    with pytest.raises(InvalidArgument):
        ut_monitor(trace, c_f=1.0, rate=2.0)


def test_translating_flow_speed():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (13, 13), "3*exp(-0.3)", "nu_x*x + nu_y*y", mode="translating")
    s, profile, trace = translating_flow_run(ps, quad(ps), FlowConfig())
    assert trace.outcome == "translating"
    assert s == pytest.approx(0.3, abs=1e-2)
    ref = quad(ps) - np.mean(quad(ps))
    assert np.max(np.abs(profile - np.mean(profile) - ref)) < 1e-2


def test_translating_flow_zero_speed():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "3", "nu_x*x + nu_y*y", mode="translating")
    s, _, trace = translating_flow_run(ps, quad(ps), FlowConfig())
    assert abs(s) < 1e-6


def test_flow_rejects_wrong_mode():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "3", "nu_x*x - 0.2", mode="classical")
    with pytest.raises(InvalidArgument):
        flow_run(ps, quad(ps))
