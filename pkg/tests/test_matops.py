import math

import numpy as np
import pytest

from sumhess.errors import DomainError, InvalidArgument
from sumhess.matops import (
    as_symmetric,
    char_coeffs,
    eigen_sym,
    newton_tensor,
    quotient_second_directional,
    second_directional,
    sk_and_grad_matrix,
    sk_batch,
)
from sumhess.symfun import SumHessianParams, sample_tilde_cone, sigma_all
from sumhess.verify import random_orthogonal

P21 = SumHessianParams(2, 1.0)


def test_char_coeffs_examples():
    np.testing.assert_allclose(char_coeffs(np.diag([2.0, 1.0, 1.0])), [1, 4, 5, 2])
    for n in range(2, 6):
        np.testing.assert_allclose(char_coeffs(np.eye(n)), [math.comb(n, m) for m in range(n + 1)])


def test_char_coeffs_similarity_invariant():
    rng = np.random.default_rng(0)
    d = rng.normal(size=4)
    q = random_orthogonal(rng, 4)
    np.testing.assert_allclose(char_coeffs(q @ np.diag(d) @ q.T), sigma_all(d), rtol=1e-10, atol=1e-12)


def test_char_coeffs_matches_eigen_route():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        a = rng.normal(size=(n, n))
        a = a + a.T
        ref = sigma_all(eigen_sym(a).lam)
        scale = np.array([np.max(np.abs(a)) ** m * math.comb(n, m) for m in range(n + 1)])
        assert np.max(np.abs(char_coeffs(a) - ref) / scale) < 1e-9


def test_newton_tensor_examples():
    a = np.diag([2.0, 1.0, 1.0])
    np.testing.assert_allclose(newton_tensor(a, 1), np.diag([2.0, 3.0, 3.0]))
    np.testing.assert_allclose(newton_tensor(a, 0), np.eye(3))
    with pytest.raises(InvalidArgument):
        newton_tensor(a, 3)


def test_newton_tensor_trace_identity():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(2, 6))
        a = rng.normal(size=(n, n))
        a = a + a.T
        sig = sigma_all(eigen_sym(a).lam)
        for m in range(n):
            assert np.trace(newton_tensor(a, m)) == pytest.approx((n - m) * sig[m], rel=1e-9, abs=1e-9)


def test_sk_and_grad_examples():
    val, grad = sk_and_grad_matrix(np.diag([2.0, 1.0, 1.0]), P21)
    assert val == pytest.approx(9.0)
    np.testing.assert_allclose(grad, np.diag([3.0, 4.0, 4.0]))
    val, grad = sk_and_grad_matrix(np.zeros((3, 3)), P21)
    assert val == 0.0
    np.testing.assert_allclose(grad, np.eye(3))


def test_sk_grad_matches_fd():
    rng = np.random.default_rng(3)
    p = SumHessianParams(3, 0.7)
    a = rng.normal(size=(4, 4))
    a = a + a.T
    _, grad = sk_and_grad_matrix(a, p)
    for _ in range(6):
        b = rng.normal(size=(4, 4))
        b = b + b.T
        t = 1e-5
        fd = (sk_and_grad_matrix(a + t * b, p)[0] - sk_and_grad_matrix(a - t * b, p)[0]) / (2 * t)
        assert np.sum(grad * b) == pytest.approx(fd, rel=1e-6)


def test_sk_batch_agrees_with_single():
    rng = np.random.default_rng(4)
    h = rng.normal(size=(7, 3, 3))
    h = h + np.swapaxes(h, 1, 2)
    _, vals, grads = sk_batch(h, P21)
    for i in range(7):
        v, g = sk_and_grad_matrix(h[i], P21)
        assert vals[i] == pytest.approx(v, abs=1e-12)
        np.testing.assert_allclose(grads[i], g, atol=1e-12)


def test_eigen_sym_examples():
    e = eigen_sym(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_allclose(e.lam, [3, 2, 1])
    np.testing.assert_allclose(np.abs(e.q), np.eye(3))
    np.testing.assert_allclose(eigen_sym(np.array([[0.0, 1.0], [1.0, 0.0]])).lam, [1, -1], atol=1e-15)


def test_eigen_sym_reconstruction():
    rng = np.random.default_rng(5)
    for n in range(2, 8):
        a = rng.normal(size=(n, n))
        a = a + a.T
        e = eigen_sym(a)
        assert np.all(np.diff(e.lam) <= 0)
        np.testing.assert_allclose(e.q @ np.diag(e.lam) @ e.q.T, a, atol=1e-12 * np.linalg.norm(a))
        np.testing.assert_allclose(e.q.T @ e.q, np.eye(n), atol=1e-13)


def test_asymmetric_rejected():
    with pytest.raises(InvalidArgument):
        as_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_second_directional_examples():
    assert second_directional(np.eye(3), np.eye(3), P21) == pytest.approx(6.0)


def test_second_directional_matches_fd():
    rng = np.random.default_rng(6)
    p = SumHessianParams(2, 1.0)
    for _ in range(10):
        lam = sample_tilde_cone(int(rng.integers(1 << 30)), 3, p)
        q = random_orthogonal(rng, 3)
        a = q @ np.diag(lam) @ q.T
        b = rng.normal(size=(3, 3))
        b = b + b.T
        for tr in ("raw", "kth_root", "log"):
            def g(t):
                v = sk_and_grad_matrix(a + t * b, p)[0]
                return {"raw": v, "kth_root": v ** 0.5, "log": math.log(v)}[tr]

            t = 1e-3
            fd = (-g(2 * t) + 16 * g(t) - 30 * g(0) + 16 * g(-t) - g(-2 * t)) / (12 * t * t)
            an = second_directional(a, b, p, tr)
            assert an == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_transforms_need_admissible_point():
    with pytest.raises(DomainError):
        second_directional(-np.eye(3), np.eye(3), P21, "log")
    with pytest.raises(InvalidArgument):
        second_directional(np.eye(3), np.eye(3), P21, "cube")


def test_quotient_concavity():
    rng = np.random.default_rng(7)
    p = SumHessianParams(3, 1.0)
    for _ in range(50):
        lam = sample_tilde_cone(int(rng.integers(1 << 30)), 4, p)
        q = random_orthogonal(rng, 4)
        a = q @ np.diag(lam) @ q.T
        b = rng.normal(size=(4, 4))
        b = b + b.T
        for ell in (0, 1, 2):
            assert quotient_second_directional(a, b, p, ell) <= 1e-8 * (1 + np.sum(b * b))
