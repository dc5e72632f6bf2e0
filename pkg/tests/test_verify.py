import json

import numpy as np
import pytest

from sumhess.elliptic import ProblemSpec
from sumhess.errors import InvalidArgument
from sumhess.matops import sk_and_grad_matrix
from sumhess.symfun import SumHessianParams, sigma, sk, sk_truncate
from sumhess.verify import (
    jacobian_check,
    ratio_hypotheses,
    reports_json,
    run_all_suites,
    run_barrier_suite,
    run_cone_suite,
    run_garding_suite,
)

P21 = SumHessianParams(2, 1.0)


def test_truncated_sum_identity_example():
    lam = [2.0, 1.0, 1.0]
    total = sum(sk_truncate(lam, P21, (i,), 2) for i in range(3))
    assert total == pytest.approx(13.0)
    assert total == pytest.approx((3 - 2) * sk(lam, P21) + sigma(lam, 1))


def test_garding_example():
    a = np.diag([2.0, 1.0, 1.0])
    lhs = sk_and_grad_matrix(a + np.eye(3), P21)[0]
    assert lhs == pytest.approx(23.0)
    assert lhs >= 9.0 + 3.0


def test_ratio_gate_rejects_nonnegative_last_entry():
    assert not ratio_hypotheses(np.array([3.0, 2.0, 1.0]), 2)


def test_quick_suites_pass_and_are_seeded():
    reps = run_all_suites(seed=3, quick=True)
    assert all(r.failures == 0 for r in reps)
    assert reports_json(reps) == reports_json(run_all_suites(seed=3, quick=True))


def test_cone_suite_logs_positive_constants():
    rep = run_cone_suite(seed=2, samples=300, quota=30)
    assert rep.ok
    for name in ("theta0_ratio", "theta1_ratio"):
        e = rep.entry(name)
        assert e.constant is not None and e.constant > 0


def test_garding_and_barrier_reports():
    rep = run_garding_suite(seed=5, pairs=100)
    assert rep.failures == 0
    rep = run_barrier_suite(seed=5, samples=60)
    assert rep.failures == 0 and rep.entry("ratio_positive").constant > 0
    doc = json.loads(reports_json([rep]))
    assert doc[0]["suite"] == "barrier"
    assert "ratio_positive" in rep.table()


def test_jacobian_check_on_quadratic_and_linear_hook():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "3", "nu_x*x + nu_y*y - (u - (x^2+y^2)/2)", c_phi=-1.0)
    u = 0.5 * np.sum(ps.grid.coords**2, axis=1)
    assert jacobian_check(ps, u) <= 1e-5
    lin = ProblemSpec.build(1, 1.0, (0, 0), (1, 1), (9, 9), "1", "-u", c_phi=-1.0)
    assert jacobian_check(lin, u) <= 1e-10
    big = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (13, 13), "3", "-u", c_phi=-1.0)
    with pytest.raises(InvalidArgument):
        jacobian_check(big, np.zeros(169))


def test_jacobian_check_refuses_log_form_outside_cone():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "3", "nu_x*x + nu_y*y - u", c_phi=-1.0, pde_rows="all")
    u = -0.5 * np.sum(ps.grid.coords**2, axis=1)
    with pytest.raises(InvalidArgument, match="not finite"):
        jacobian_check(ps, u, form="log")
