import numpy as np
import pytest

from sumhess.errors import InvalidArgument
from sumhess.geometry import Rectangle
from sumhess.grid import (
    build_grid,
    centered_normal_derivative,
    fd_gradient,
    fd_hessian,
    fill_ghosts,
    norms,
    read_field,
    write_field,
)

UNIT = Rectangle((0, 0), (1, 1))


def _normal_dot(points, u, normal, fn):
    return fn(points) @ normal


def test_counts_and_spacing():
    g = build_grid(UNIT, (5, 5))
    np.testing.assert_allclose(g.h, [0.25, 0.25])
    assert g.n_nodes == 25 and g.interior.size == 9
    kinds = [g.kind(i) for i in range(g.n_nodes)]
    assert kinds.count("face") == 12 and kinds.count("corner") == 4
    np.testing.assert_allclose(build_grid(Rectangle((0, 0), (2, 1)), (5, 5)).h, [0.5, 0.25])
    with pytest.raises(InvalidArgument):
        build_grid(UNIT, (3, 5))


def test_ghost_linear_exactness():
    g = build_grid(UNIT, (9, 9))
    x = g.coords
    pad = fill_ghosts(g, x[:, 0], lambda pts, u, nu: np.full(len(pts), nu[0]))
    # the padded row beyond the right face must continue u = x
    hx = g.h[0]
    np.testing.assert_allclose(pad[-1, 1:-1], 1.0 + hx, atol=1e-14)
    np.testing.assert_allclose(pad[0, 1:-1], -hx, atol=1e-14)


def test_ghost_mirror_for_homogeneous():
    g = build_grid(UNIT, (9, 9))
    x = g.coords
    u = np.cos(np.pi * x[:, 0]) + x[:, 1] ** 2 * (1 - x[:, 1]) ** 2
    pad = fill_ghosts(g, u, lambda pts, u, nu: np.zeros(len(pts)))
    np.testing.assert_allclose(pad[0, 1:-1], pad[2, 1:-1])


def test_quadratic_normal_derivative_exact():
    g = build_grid(UNIT, (9, 9))
    x = g.coords
    u = 0.5 * np.sum(x**2, axis=1)
    phi = lambda pts, u, nu: pts @ nu  # noqa: E731
    pad = fill_ghosts(g, u, phi)
    dn = centered_normal_derivative(g, pad)
    for fid, face in enumerate(g.faces):
        vals = dn[g.face_offsets[fid] : g.face_offsets[fid + 1]]
        np.testing.assert_allclose(vals, x[face.nodes] @ face.normal, atol=1e-13)


def test_hessian_quadratic_and_cross():
    g = build_grid(UNIT, (9, 9))
    x, y = g.coords.T
    grad = lambda pts: 2 * pts  # noqa: E731
    hess = fd_hessian(g, x**2 + y**2, lambda p, u, nu: _normal_dot(p, u, nu, grad))
    np.testing.assert_allclose(hess, np.broadcast_to(2 * np.eye(2), hess.shape), atol=1e-10)
    grad = lambda pts: pts[:, ::-1]  # noqa: E731
    hess = fd_hessian(g, x * y, lambda p, u, nu: _normal_dot(p, u, nu, grad))
    np.testing.assert_allclose(hess, np.broadcast_to([[0, 1], [1, 0]], hess.shape), atol=1e-10)
    gr = fd_gradient(g, x * y, lambda p, u, nu: _normal_dot(p, u, nu, grad))
    np.testing.assert_allclose(gr, np.stack([y, x], axis=1), atol=1e-12)


def test_hessian_refinement_slope():
    errs, hs = [], []
    for n in (9, 17, 33):
        g = build_grid(UNIT, (n, n))
        x, y = g.coords.T
        u = np.sin(np.pi * x) * np.sin(np.pi * y)

        def grad(p):
            return np.pi * np.stack(
                [np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]), np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])], axis=1
            )

        hess = fd_hessian(g, u, lambda p, uu, nu: _normal_dot(p, uu, nu, grad))
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
        exact = np.pi**2 * np.stack([np.stack([-s * sy, c * cy], 1), np.stack([c * cy, -s * sy], 1)], 1)
        # boundary rows see the ghost closure, which is one order lower
        inner = g.interior
        errs.append(np.max(np.abs(hess[inner] - exact[inner])))
        hs.append(g.h[0])
    slopes = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert np.all(np.abs(slopes - 2) <= 0.3), slopes


def test_operators_are_linear():
    g = build_grid(UNIT, (7, 8))
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=(2, g.n_nodes))
    zero = lambda p, uu, nu: np.zeros(len(p))  # noqa: E731
    lhs = fd_hessian(g, 2 * u - 3 * v, zero)
    rhs = 2 * fd_hessian(g, u, zero) - 3 * fd_hessian(g, v, zero)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_integration_by_parts():
    # with zero-flux ghosts the trapezoid-weighted discrete Laplacian sums to zero
    g = build_grid(UNIT, (11, 11))
    rng = np.random.default_rng(1)
    u = rng.normal(size=g.n_nodes)
    hess = fd_hessian(g, u, lambda p, uu, nu: np.zeros(len(p)))
    lap = hess[:, 0, 0] + hess[:, 1, 1]
    assert abs(np.sum(g.trapezoid_weights() * lap)) < 1e-8


def test_norms():
    g = build_grid(UNIT, (11, 11))
    assert norms(g, np.ones(g.n_nodes))[0] == 1.0
    assert norms(g, np.ones(g.n_nodes))[1] == pytest.approx(1.0, rel=0.25)
    assert norms(g, np.zeros(g.n_nodes)) == (0.0, 0.0)
    delta = np.zeros(g.n_nodes)
    delta[17] = 1.0
    assert norms(g, delta) == pytest.approx((1.0, 0.1))


def test_field_dump_round_trip(tmp_path):
    g = build_grid(Rectangle((0, 0), (2, 1)), (5, 6))
    vals = np.random.default_rng(2).normal(size=g.n_nodes)
    path = tmp_path / "u.dat"
    write_field(path, g, vals)
    text = path.read_bytes()
    assert text.startswith(b"# 5 6 0.5 0.20000000000000001\n") and b"\r" not in text
    blocks = text.decode().rstrip("\n").split("\n\n")
    assert len(blocks) == 5 and all(len(b.splitlines()) == 6 for b in blocks[1:])
    dims, h, coords, values = read_field(path)
    assert dims == (5, 6)
    np.testing.assert_array_equal(values, vals)
    np.testing.assert_array_equal(coords, g.coords)
