import math

import numpy as np
import pytest

from sumhess.elliptic import (
    A_MIN,
    NewtonConfig,
    ProblemSpec,
    admissible_seed,
    c0_bounds,
    classical_neumann,
    continuation_solve,
    jacobian,
    newton_solve,
    residual,
    seed_coefficient,
    translating_constant,
    validate_problem,
)
from sumhess.errors import InvalidArgument, ValidationError
from sumhess.symfun import SumHessianParams, cone_check
from sumhess.grid import fd_hessian

QUAD = "(x^2+y^2)/2"
QUAD_PHI = f"nu_x*x + nu_y*y - (u - {QUAD})"


def quad_problem(n=17, **kw):
    return ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (n, n), "3", QUAD_PHI, c_phi=-1.0, **kw)


def exact_quad(ps):
    return 0.5 * np.sum(ps.grid.coords**2, axis=1)


def test_seed_coefficient_example():
    a = seed_coefficient(SumHessianParams(2, 1.0), 2, 3.0)
    assert a == pytest.approx((-2 + math.sqrt(28)) / 2, rel=1e-10)
    assert seed_coefficient(SumHessianParams(2, 1.0), 2, 1e-12) == A_MIN


def test_seed_is_admissible():
    ps = quad_problem(9)
    u0, a = admissible_seed(ps)
    hess = fd_hessian(ps.grid, u0, lambda p, u, nu: a * ((p - ps.grid.domain.center) @ nu))
    for h in hess:
        assert cone_check(np.linalg.eigvalsh(h), ps.params).in_gamma_tilde_k


@pytest.mark.parametrize("rows", ["interior", "all"])
def test_residual_vanishes_on_quadratic(rows):
    ps = quad_problem(9, pde_rows=rows)
    pde, bnd = residual(ps, exact_quad(ps))
    assert np.max(np.abs(np.concatenate([pde, bnd]))) < 1e-13


def test_residual_at_zero_field():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "1", "-u", c_phi=-1.0)
    pde, _ = residual(ps, np.zeros(ps.grid.n_nodes))
    np.testing.assert_allclose(pde, -1.0)


def test_residual_locality():
    ps = quad_problem(11)
    g = ps.grid

    def by_node(v):
        pde, bnd = residual(ps, v)
        out = np.empty(g.n_nodes)
        out[g.interior], out[g.boundary] = pde, bnd
        return out

    u = exact_quad(ps)
    base = by_node(u)
    node = g.interior[g.interior.size // 2]
    u[node] += 1e-3
    changed = np.flatnonzero(by_node(u) != base)
    offsets = np.abs(g.multi_index[changed] - g.multi_index[node])
    assert np.all(offsets <= 1)
    assert node in changed and changed.size <= 9


def test_linear_hook_jacobian_is_laplacian():
    ps = ProblemSpec.build(1, 1.0, (0, 0), (1, 1), (7, 7), "1", "-u", c_phi=-1.0)
    j = jacobian(ps, np.zeros(ps.grid.n_nodes)).toarray()
    node = int(ps.grid.ravel(np.array([3, 3])))
    h2 = ps.grid.h[0] ** 2
    stencil = j[node]
    assert stencil[node] == pytest.approx(-4 / h2)
    for nb in (node - 1, node + 1, node - 7, node + 7):
        assert stencil[nb] == pytest.approx(1 / h2)
    with pytest.raises(ValidationError):
        validate_problem(ps)


def test_newton_quadratic_from_seed():
    ps = quad_problem()
    u0, _ = admissible_seed(ps)
    u, rep = newton_solve(ps, u0)
    assert rep.converged
    assert np.max(np.abs(u - exact_quad(ps))) <= 1e-8
    assert all(m > 0 for m in rep.margin_history)


def test_newton_fixed_point():
    ps = quad_problem(9)
    u, rep = newton_solve(ps, exact_quad(ps))
    assert rep.converged and rep.iterations <= 1
    assert all(d == 1.0 for d in rep.damping)


def test_relative_tolerance_flag():
    big = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "3e6", "nu_x*x + nu_y*y - u", c_phi=-1.0)
    u0, _ = admissible_seed(big)
    _, rep_abs = newton_solve(big, u0, NewtonConfig(tol=1e-9, max_iter=15))
    _, rep_rel = newton_solve(big, u0, NewtonConfig(tol=1e-9, max_iter=15, relative_tol=True))
    assert rep_rel.converged
    assert rep_abs.iterations >= rep_rel.iterations


def test_continuation_exponential_converges():
    us = "exp(x)+exp(y)+x^2+y^2"
    ps = ProblemSpec.build(
        2, 1.0, (0, 0), (1, 1), (17, 17),
        "(exp(x)+2)*(exp(y)+2) + exp(x)+exp(y)+4",
        f"nu_x*(exp(x)+2*x) + nu_y*(exp(y)+2*y) - (u - ({us}))",
        c_phi=-1.0,
    )
    u, rep = continuation_solve(ps)
    x, y = ps.grid.coords.T
    assert rep.converged
    assert np.max(np.abs(u - (np.exp(x) + np.exp(y) + x**2 + y**2))) < 5e-3
    assert rep.stages and rep.stages[0]["iterations"] <= 2


def test_infeasible_data_rejected_before_solving():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "x - 0.5", "-u", c_phi=-1.0)
    with pytest.raises(ValidationError):
        continuation_solve(ps)


def test_structural_condition_checked():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "1", "u", c_phi=-1.0)
    with pytest.raises(ValidationError):
        validate_problem(ps)


def test_mode_guards():
    with pytest.raises(InvalidArgument):
        classical_neumann(quad_problem(9))
    with pytest.raises(InvalidArgument):
        ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "1", "-u", mode="sideways")


def test_c0_bounds_examples():
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "3", "-u", c_phi=-1.0)
    assert c0_bounds(ps)[1] == 0.0
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (9, 9), "3", "1 - u", c_phi=-1.0)
    lo, hi = c0_bounds(ps)
    assert hi == 1.0 and lo < 0


def test_quadratic_inside_c0_interval():
    ps = quad_problem()
    lo, hi = c0_bounds(ps)
    u = exact_quad(ps)
    assert lo - 1e-2 <= u.min() and u.max() <= hi + 1e-2


@pytest.mark.parametrize("shift, expect", [(0.7, 0.7), (0.0, 0.0)])
def test_classical_recovers_constant(shift, expect):
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (17, 17), "3", f"nu_x*x + nu_y*y - {shift}", mode="classical")
    res = classical_neumann(ps)
    assert res.converged
    assert abs(res.s - expect) <= 10 * 1e-4 + 1e-3


@pytest.mark.parametrize("speed", [0.3, 0.0])
def test_translating_recovers_speed(speed):
    ps = ProblemSpec.build(2, 1.0, (0, 0), (1, 1), (17, 17), f"3*exp(-{speed})", "nu_x*x + nu_y*y", mode="translating")
    res = translating_constant(ps)
    assert res.converged
    assert abs(res.s - speed) <= 1e-2
    assert res.shift_identity_err <= 1e-6


def test_jacobian_pattern_symmetric_in_the_interior():
    ps = quad_problem(11)
    g = ps.grid
    u = exact_quad(ps) + 1e-3 * np.sin(3 * g.coords[:, 0]) * np.cos(2 * g.coords[:, 1])
    pattern = (jacobian(ps, u).toarray() != 0)
    deep = np.flatnonzero(np.all((g.multi_index >= 2) & (g.multi_index <= 8), axis=1))
    block = pattern[np.ix_(deep, deep)]
    np.testing.assert_array_equal(block, block.T)
