import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sumhess.errors import InvalidArgument
from sumhess.symfun import (
    SumHessianParams,
    binomial_sk,
    brute_force_sigma,
    cone_check,
    sample_tilde_cone,
    sample_tilde_cone_batch,
    sigma,
    sigma_all,
    sk,
    sk_grad,
    sk_truncate,
)

P21 = SumHessianParams(2, 1.0)


def test_sigma_all_examples():
    np.testing.assert_allclose(sigma_all([1, 1, 1]), [1, 3, 3, 1])
    np.testing.assert_allclose(sigma_all([2, 1, 1]), [1, 4, 5, 2])
    np.testing.assert_array_equal(sigma_all(np.zeros(5)), [1, 0, 0, 0, 0, 0])


def test_sigma_beyond_n_is_zero():
    assert sigma([1.0, 2.0], 3) == 0.0
    assert sigma([1.0, 2.0], 0) == 1.0


def test_non_finite_rejected():
    with pytest.raises(InvalidArgument):
        sigma_all([1.0, math.nan])


def test_params_validation():
    with pytest.raises(InvalidArgument):
        SumHessianParams(2, 0.0)
    with pytest.raises(InvalidArgument):
        SumHessianParams(0, 1.0)
    with pytest.raises(InvalidArgument):
        SumHessianParams(4, 1.0).check_dimension(3)


def test_sk_examples():
    assert sk([2, 1, 1], P21) == pytest.approx(9.0)
    assert sk(np.zeros(3), P21) == 0.0
    for n in range(2, 7):
        assert sk(np.ones(n), P21) == pytest.approx(math.comb(n, 2) + n)
        assert binomial_sk(n, P21) == pytest.approx(math.comb(n, 2) + n)


def test_sk_truncate_examples():
    lam = [2.0, 1.0, 1.0]
    assert sk_truncate(lam, P21, (0,), 1) == pytest.approx(3.0)
    with pytest.raises(InvalidArgument):
        sk_truncate(lam, P21, (1, 1), 1)
    # S_k = lam_i S_{k-1}(lam|i) + S_k(lam|i)
    assert 2 * sk_truncate(lam, P21, (0,), 1) + sk_truncate(lam, P21, (0,), 2) == pytest.approx(9.0)


def test_sk_grad_examples():
    g = sk_grad([2, 1, 1], P21)
    np.testing.assert_allclose(g, [3, 4, 4])
    assert g.sum() == pytest.approx(2 * 4 + 3 * 1)
    assert float(np.dot([2, 1, 1], g)) == pytest.approx(2 * 9 - 4)
    np.testing.assert_allclose(sk_grad(np.zeros(3), P21), [1, 1, 1])
    np.testing.assert_allclose(sk_grad(np.zeros(4), SumHessianParams(3, 2.0)), 0.0)


def test_cone_check_examples():
    r = cone_check([1, 1, 1], P21)
    assert r.in_gamma and r.in_gamma_tilde_k and r.margin == pytest.approx(3.0)
    r = cone_check([-0.5, 2, 2], P21)
    assert r.in_gamma
    # sigma_2 < 0 < S_2 with sigma_1 > 0: admissible but outside Gamma_2
    r = cone_check([-0.5, 2, 0.5], P21)
    assert r.in_gamma_k == (True, False)
    assert r.in_gamma_tilde_k
    assert not cone_check(np.zeros(3), P21).in_gamma_tilde_k
    assert not cone_check([-1, 2, 0.4], P21).in_gamma_tilde_k


def test_sampler_regions_and_determinism():
    lam = sample_tilde_cone(1, 3, P21)
    assert cone_check(lam, P21).margin > 1e-6
    np.testing.assert_array_equal(lam, sample_tilde_cone(1, 3, P21))
    rng = np.random.default_rng(3)
    batch = sample_tilde_cone_batch(rng, 50, 4, SumHessianParams(3, 0.5), "tilde_only")
    sig = sigma_all(batch)
    s3 = sig[:, 3] + 0.5 * sig[:, 2]
    assert np.all(sig[:, 3] < 0) and np.all(s3 >= 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_sigma_matches_enumeration(values):
    lam = np.array(values)
    sig = sigma_all(lam)
    for m in range(lam.size + 1):
        ref = brute_force_sigma(lam, m)
        assert sig[m] == pytest.approx(ref, rel=1e-12, abs=1e-12 * 5.0**m * math.comb(lam.size, m))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=6), st.floats(0.1, 3.0))
def test_grad_identity_sum(values, alpha):
    # sum_i S_k^{ii} = (n-k+1) sigma_{k-1} + alpha (n-k+2) sigma_{k-2}
    lam = np.array(values)
    n = lam.size
    p = SumHessianParams(2, alpha)
    sig = sigma_all(lam)
    lhs = sk_grad(lam, p).sum()
    rhs = (n - 1) * sig[1] + alpha * n * sig[0]
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_inputs_not_reordered():
    lam = np.array([0.5, 3.0, -0.2])
    keep = lam.copy()
    sk_grad(lam, P21)
    cone_check(lam, P21)
    np.testing.assert_array_equal(lam, keep)
