"""Matrix-level sum Hessian operator.

Invariants ``sigma_m(A)`` come from the Faddeev-LeVerrier recursion

    B_0 = I,   sigma_m = tr(A B_{m-1}) / m,   B_m = sigma_m I - A B_{m-1},

whose auxiliary matrices ``B_m`` are exactly the Newton transformations
``T_m(A) = sum_j (-1)^j sigma_{m-j}(A) A^j``, the gradients of
``sigma_{m+1}``.  No eigenvalues are needed for values or gradients; the
Jacobi solver below is only used for cross-checks and for the second
directional derivative.

All kernels accept a single matrix ``(n, n)`` or a batch ``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidArgument, NumericalError
from .symfun import SumHessianParams, sigma_all, sk_order

__all__ = [
    "EigenPair",
    "as_symmetric",
    "char_coeffs",
    "newton_tensors",
    "newton_tensor",
    "sk_and_grad_matrix",
    "sk_batch",
    "eigen_sym",
    "second_directional",
    "quotient_second_directional",
]

TRANSFORMS = ("raw", "kth_root", "log")


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues in descending order and orthogonal eigenvectors (columns)."""

    lam: np.ndarray
    q: np.ndarray
    sweeps: int


def as_symmetric(a, rtol: float = 1e-8) -> np.ndarray:
    """Validate and symmetrize a square matrix (or batch)."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidArgument(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("matrix has non-finite entries")
    at = np.swapaxes(a, -1, -2)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - at)) > rtol * scale:
        raise InvalidArgument("matrix is not symmetric")
    return 0.5 * (a + at)


def _fl(a: np.ndarray):
    n = a.shape[-1]
    eye = np.broadcast_to(np.eye(n), a.shape)
    sig = np.zeros(a.shape[:-2] + (n + 1,))
    sig[..., 0] = 1.0
    tens = [eye.copy()]
    b = eye
    for m in range(1, n + 1):
        ab = a @ b
        s = np.trace(ab, axis1=-2, axis2=-1) / m
        sig[..., m] = s
        b = s[..., None, None] * eye - ab
        tens.append(b)
    return sig, tens


def char_coeffs(a) -> np.ndarray:
    """``(sigma_0, ..., sigma_n)`` of the eigenvalues of symmetric ``a``."""
    a = as_symmetric(a)
    sig, _ = _fl(a)
    return sig


def newton_tensors(a, upto: int):
    """Return ``(sigmas, [T_0, ..., T_upto])`` for symmetric ``a``."""
    a = as_symmetric(a)
    n = a.shape[-1]
    if not 0 <= upto <= n:
        raise InvalidArgument(f"order must lie in 0..{n}")
    sig, tens = _fl(a)
    return sig, tens[: upto + 1]


def newton_tensor(a, m: int) -> np.ndarray:
    """``T_m(A)``, the gradient of ``sigma_{m+1}`` with respect to ``A``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if not 0 <= m <= n - 1:
        raise InvalidArgument(f"m must lie in 0..{n - 1}, got {m}")
    return newton_tensors(a, m)[1][m]


def sk_and_grad_matrix(a, p: SumHessianParams):
    """Value ``S_k(A)`` and gradient ``T_{k-1}(A) + alpha T_{k-2}(A)``."""
    a = as_symmetric(a)
    sig, tens = _fl(a)
    value = sk_order(sig, p.k, p.alpha)
    grad = tens[p.k - 1].copy()
    if p.k >= 2:
        grad = grad + p.alpha * tens[p.k - 2]
    if np.ndim(value) == 0:
        value = float(value)
    return value, grad


def sk_batch(h: np.ndarray, p: SumHessianParams):
    """Sigmas, ``S_k`` and ``dS_k/dA`` for a batch ``(N, n, n)`` of symmetric matrices.

    Skips the symmetry validation of :func:`sk_and_grad_matrix`; callers pass
    matrices that are symmetric by construction.
    """
    sig, tens = _fl(h)
    value = sk_order(sig, p.k, p.alpha)
    grad = tens[p.k - 1]
    if p.k >= 2:
        grad = grad + p.alpha * tens[p.k - 2]
    return sig, value, grad


def eigen_sym(a, tol: float = 1e-12, max_sweeps: int = 100) -> EigenPair:
    """Cyclic Jacobi eigen-decomposition of a small symmetric matrix.

    Rotations are applied in row-cyclic order, so results are reproducible
    bit for bit.  Raises :class:`NumericalError` if the off-diagonal Frobenius
    norm has not dropped below ``tol * ||A||_F`` after ``max_sweeps`` sweeps.
    """
    a = as_symmetric(a)
    if a.ndim != 2:
        raise InvalidArgument("eigen_sym takes a single matrix")
    n = a.shape[0]
    m = a.copy()
    q = np.eye(n)
    fro = np.linalg.norm(m)
    sweeps = 0
    while True:
        off = np.linalg.norm(m - np.diag(np.diag(m)))
        if off <= tol * fro or fro == 0.0:
            break
        if sweeps >= max_sweeps:
            raise NumericalError(f"Jacobi did not converge after {sweeps} sweeps (off={off:.3e})")
        sweeps += 1
        for p_ in range(n - 1):
            for r in range(p_ + 1, n):
                apr = m[p_, r]
                if apr == 0.0:
                    continue
                diff = m[r, r] - m[p_, p_]
                if abs(apr) < 1e-18 * abs(diff):
                    t = apr / diff
                else:
                    theta = diff / (2.0 * apr)
                    t = 1.0 / (abs(theta) + np.hypot(theta, 1.0))
                    t = -t if theta < 0 else t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p_, p_] = c
                rot[r, r] = c
                rot[p_, r] = s
                rot[r, p_] = -s
                m = rot.T @ m @ rot
                m[p_, r] = m[r, p_] = 0.0
                q = q @ rot
    lam = np.diag(m).copy()
    order = np.argsort(-lam, kind="stable")
    return EigenPair(lam[order], q[:, order], sweeps)


def _spectral_derivatives(a, b, p: SumHessianParams):
    """First and second derivatives of ``S_l(A + tB)`` at ``t = 0`` for all l.

    Returns ``(lam, sig, d1, d2)`` where ``d1[l]``, ``d2[l]`` refer to
    ``S_l = sigma_l + alpha sigma_{l-1}`` for ``l = 0..n``.
    """
    a = as_symmetric(a)
    b = as_symmetric(b)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidArgument("a and b must be single matrices of equal order")
    n = a.shape[0]
    eig = eigen_sym(a)
    lam = eig.lam
    bt = eig.q.T @ b @ eig.q
    sig = sigma_all(lam)
    # sigmas with one and two coordinates removed
    one = np.repeat(lam[None, :], n, axis=0)
    one[np.arange(n), np.arange(n)] = 0.0
    sig1 = sigma_all(one)
    two = np.repeat(lam[None, None, :], n, axis=0).repeat(n, axis=1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    two[ii, jj, ii] = 0.0
    two[ii, jj, jj] = 0.0
    sig2 = sigma_all(two)
    diag_b = np.diag(bt)
    off = np.triu(np.ones((n, n), dtype=bool), 1)
    d1 = np.zeros(n + 1)
    d2 = np.zeros(n + 1)
    for ell in range(1, n + 1):
        g = sk_order(sig1, ell - 1, p.alpha)
        h = sk_order(sig2, ell - 2, p.alpha)
        np.fill_diagonal(h, 0.0)
        d1[ell] = g @ diag_b
        # (g_i - g_j)/(lam_i - lam_j) = -S_{l-2}(lam|ij), exact at ties
        d2[ell] = diag_b @ h @ diag_b - 2.0 * np.sum(h[off] * bt[off] ** 2)
    return lam, sig, d1, d2


def second_directional(a, b, p: SumHessianParams, transform: str = "raw") -> float:
    """``d^2/dt^2 G(A + tB)`` at ``t = 0`` for ``G`` in {S_k, S_k^(1/k), log S_k}.

    Uses the eigenvalue second-derivative formula in the eigenbasis of ``A``.
    Transformed variants require ``lambda(A)`` in the admissible cone.
    """
    if transform not in TRANSFORMS:
        raise InvalidArgument(f"unknown transform {transform!r}")
    a = np.asarray(a, dtype=float)
    p.check_dimension(a.shape[-1])
    lam, sig, d1, d2 = _spectral_derivatives(a, b, p)
    k = p.k
    s1, s2 = d1[k], d2[k]
    if transform == "raw":
        return float(s2)
    val = float(sk_order(sig, k, p.alpha))
    if not _admissible(sig, p):
        raise DomainError("lambda(A) is outside the admissible cone")
    if transform == "kth_root":
        r = 1.0 / k
        return float(r * val ** (r - 1) * s2 + r * (r - 1) * val ** (r - 2) * s1 * s1)
    return float(s2 / val - (s1 / val) ** 2)


def quotient_second_directional(a, b, p: SumHessianParams, ell: int) -> float:
    """Second directional derivative of ``(S_k / S_l)^(1/(k-l))``, ``0 <= l < k``.

    ``S_l`` carries the same ``alpha`` as ``S_k``; ``S_0 = 1``.
    """
    k = p.k
    if not 0 <= ell < k:
        raise InvalidArgument(f"need 0 <= l < k, got l={ell}")
    a = np.asarray(a, dtype=float)
    p.check_dimension(a.shape[-1])
    lam, sig, d1, d2 = _spectral_derivatives(a, b, p)
    if not _admissible(sig, p):
        raise DomainError("lambda(A) is outside the admissible cone")
    top = float(sk_order(sig, k, p.alpha))
    if ell == 0:
        bot, b1, b2 = 1.0, 0.0, 0.0
    else:
        bot, b1, b2 = float(sk_order(sig, ell, p.alpha)), d1[ell], d2[ell]
    t1, t2 = d1[k], d2[k]
    q = top / bot
    q1 = (t1 * bot - top * b1) / bot**2
    q2 = t2 / bot - 2 * t1 * b1 / bot**2 - top * b2 / bot**2 + 2 * top * b1**2 / bot**3
    r = 1.0 / (k - ell)
    return float(r * q ** (r - 1) * q2 + r * (r - 1) * q ** (r - 2) * q1 * q1)


def _admissible(sig: np.ndarray, p: SumHessianParams) -> bool:
    return bool(np.all(sig[1 : p.k] > 0) and sk_order(sig, p.k, p.alpha) > 0)
