"""Elementary symmetric functions and the sum Hessian operator on spectra.

Everything here acts on eigenvalue vectors.  Functions accept a single vector
of shape ``(n,)`` or a batch of shape ``(..., n)``; the symmetric functions are
always taken along the last axis.  Indices are zero-based.

The sum Hessian operator is ``S_k = sigma_k + alpha * sigma_{k-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import InvalidArgument, NumericalError

__all__ = [
    "SumHessianParams",
    "ConeReport",
    "sigma_all",
    "sigma",
    "sk",
    "sk_order",
    "sk_truncate",
    "sk_grad",
    "cone_check",
    "cone_margin",
    "sample_tilde_cone",
    "sample_tilde_cone_batch",
    "brute_force_sigma",
]

REGIONS = ("gamma_k", "tilde_only", "boundary_near")


@dataclass(frozen=True)
class SumHessianParams:
    """Order ``k`` and weight ``alpha`` of ``S_k = sigma_k + alpha sigma_{k-1}``.

    ``k = 1`` is accepted as a linear testing hook (``S_1 = trace + alpha``);
    the problem layer insists on ``k >= 2``.
    """

    k: int
    alpha: float

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgument(f"k must be a positive integer, got {self.k!r}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise InvalidArgument(f"alpha must be > 0, got {self.alpha!r}")

    def check_dimension(self, n: int) -> None:
        if n < 2:
            raise InvalidArgument(f"dimension must be >= 2, got {n}")
        if self.k > n:
            raise InvalidArgument(f"k={self.k} exceeds dimension n={n}")


@dataclass(frozen=True)
class ConeReport:
    """Cone membership of one spectrum.

    ``in_gamma_k[m-1]`` records ``sigma_m > tol`` for ``m = 1..k``.  The margin
    is ``min(sigma_1, ..., sigma_{k-1}, S_k)`` and is reported even when the
    spectrum is outside the cone.
    """

    in_gamma_k: tuple[bool, ...]
    in_gamma_tilde_k: bool
    margin: float

    @property
    def in_gamma(self) -> bool:
        return all(self.in_gamma_k)


def _as_spectrum(lam) -> np.ndarray:
    arr = np.asarray(lam, dtype=float)
    if arr.ndim == 0:
        raise InvalidArgument("a spectrum must be a vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("spectrum has non-finite entries")
    return arr


def sigma_all(lam) -> np.ndarray:
    """Return ``(sigma_0, ..., sigma_n)`` by expanding ``prod_i (1 + lam_i x)``.

    >>> sigma_all([2.0, 1.0, 1.0]).tolist()
    [1.0, 4.0, 5.0, 2.0]
    """
    lam = _as_spectrum(lam)
    n = lam.shape[-1]
    out = np.zeros(lam.shape[:-1] + (n + 1,))
    out[..., 0] = 1.0
    for i in range(n):
        x = lam[..., i : i + 1]
        # descending in m so the update reads the previous factor's values
        out[..., 1 : i + 2] = out[..., 1 : i + 2] + x * out[..., 0 : i + 1]
    return out


def sigma(lam, m: int) -> np.ndarray | float:
    """``sigma_m(lam)``, zero for ``m < 0`` or ``m > n``."""
    lam = _as_spectrum(lam)
    n = lam.shape[-1]
    if m < 0 or m > n:
        zero = np.zeros(lam.shape[:-1])
        return zero if zero.ndim else 0.0
    val = sigma_all(lam)[..., m]
    return val if np.ndim(val) else float(val)


def _pick(sig: np.ndarray, m: int) -> np.ndarray:
    n = sig.shape[-1] - 1
    if m < 0 or m > n:
        return np.zeros(sig.shape[:-1])
    return sig[..., m]


def sk_order(sig: np.ndarray, m: int, alpha: float) -> np.ndarray:
    """``S_m = sigma_m + alpha sigma_{m-1}`` from precomputed sigmas."""
    return _pick(sig, m) + alpha * _pick(sig, m - 1)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def sk(lam, p: SumHessianParams):
    """``S_k(lam) = sigma_k(lam) + alpha sigma_{k-1}(lam)``."""
    return _scalar(sk_order(sigma_all(lam), p.k, p.alpha))


def _drop(lam: np.ndarray, drop) -> np.ndarray:
    n = lam.shape[-1]
    idx = [int(i) for i in drop]
    if len(idx) not in (1, 2):
        raise InvalidArgument("drop must contain one or two indices")
    if len(set(idx)) != len(idx):
        raise InvalidArgument(f"duplicate index in drop set {idx}")
    for i in idx:
        if not 0 <= i < n:
            raise InvalidArgument(f"index {i} out of range for n={n}")
    out = lam.copy()
    out[..., idx] = 0.0
    return out


def sk_truncate(lam, p: SumHessianParams, drop, order: int):
    """``S_order`` of ``lam`` with the coordinates in ``drop`` set to zero.

    ``order = k-1`` with one dropped index gives ``S_k^{ii}``; ``order = k-2``
    with two dropped indices gives the mixed second derivative
    ``S_k^{ii,jj}``.  The weight ``alpha`` is taken from ``p``.
    """
    lam = _as_spectrum(lam)
    return _scalar(sk_order(sigma_all(_drop(lam, drop)), order, p.alpha))


def _deleted_sigmas(lam: np.ndarray) -> np.ndarray:
    """Sigmas of ``lam`` with each coordinate zeroed in turn: shape ``(..., n, n+1)``."""
    n = lam.shape[-1]
    stack = np.repeat(lam[..., None, :], n, axis=-2)
    ii = np.arange(n)
    stack[..., ii, ii] = 0.0
    return sigma_all(stack)


def sk_grad(lam, p: SumHessianParams) -> np.ndarray:
    """Gradient ``(dS_k/dlam_i)_i = (S_{k-1}(lam|i))_i``."""
    lam = _as_spectrum(lam)
    return sk_order(_deleted_sigmas(lam), p.k - 1, p.alpha)


def cone_margin(sig: np.ndarray, p: SumHessianParams) -> np.ndarray:
    """Binding slack ``min(sigma_1..sigma_{k-1}, S_k)`` from precomputed sigmas."""
    parts = [sig[..., m] for m in range(1, p.k)]
    parts.append(sk_order(sig, p.k, p.alpha))
    return np.min(np.stack(parts, axis=-1), axis=-1)


def cone_check(lam, p: SumHessianParams, tol: float = 1e-10) -> ConeReport:
    """Membership of ``lam`` in the Garding cone and the admissible cone.

    Membership is strict with absolute slack ``tol``: a quantity counts as
    positive only when it exceeds ``tol``.
    """
    if tol < 0:
        raise InvalidArgument("tol must be non-negative")
    lam = _as_spectrum(lam)
    if lam.ndim != 1:
        raise InvalidArgument("cone_check takes a single spectrum")
    p.check_dimension(lam.size)
    sig = sigma_all(lam)
    in_k = tuple(bool(sig[m] > tol) for m in range(1, p.k + 1))
    s_k = float(sk_order(sig, p.k, p.alpha))
    tilde = all(in_k[: p.k - 1]) and s_k > tol
    return ConeReport(in_k, tilde, float(cone_margin(sig, p)))


def brute_force_sigma(lam, m: int) -> float:
    """Subset-sum definition of ``sigma_m``; a test oracle, O(C(n, m))."""
    from itertools import combinations

    lam = [float(v) for v in lam]
    if m == 0:
        return 1.0
    if m < 0 or m > len(lam):
        return 0.0
    return float(sum(np.prod(c) for c in combinations(lam, m)))


# --- sampling -------------------------------------------------------------


def _region_margin(lam: np.ndarray, p: SumHessianParams, region: str) -> np.ndarray:
    sig = sigma_all(lam)
    if region == "gamma_k":
        return np.min(sig[..., 1 : p.k + 1], axis=-1)
    return cone_margin(sig, p)


def _ray_threshold(lam: np.ndarray, p: SumHessianParams, region: str) -> np.ndarray:
    """Smallest shift ``t`` with ``lam + t*1`` inside the region, by bisection.

    The feasible shifts form an open half-line because the cones are open,
    convex and contain the positive diagonal.
    """
    span = np.max(np.abs(lam), axis=-1) + 1.0
    lo = -span - 1.0
    hi = span + 1.0
    ones = np.ones(lam.shape[-1])
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = _region_margin(lam + mid[:, None] * ones, p, region) > 0
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return hi


def sample_tilde_cone_batch(
    rng: np.random.Generator,
    count: int,
    n: int,
    p: SumHessianParams,
    region: str = "gamma_k",
    min_margin: float = 1e-6,
    max_attempts: int = 10_000,
) -> np.ndarray:
    """Draw ``count`` spectra from the requested region.

    Regions:

    ``gamma_k``
        inside the Garding cone, shifted a random distance past its boundary;
    ``tilde_only``
        admissible but outside the Garding cone, so ``sigma_k < 0 < S_k``;
    ``boundary_near``
        admissible with a margin between ``min_margin`` and roughly ``1e-3``.
    """
    if region not in REGIONS:
        raise InvalidArgument(f"unknown region {region!r}; expected one of {REGIONS}")
    p.check_dimension(n)
    ones = np.ones(n)
    out = np.empty((0, n))
    attempts = 0
    while out.shape[0] < count:
        attempts += 1
        if attempts > max_attempts:
            raise NumericalError(f"sampler failed to fill region {region!r} after {max_attempts} rounds")
        m = max(count - out.shape[0], 8)
        lam = rng.standard_normal((m, n))
        t_tilde = _ray_threshold(lam, p, "tilde")
        if region == "gamma_k":
            t_k = _ray_threshold(lam, p, "gamma_k")
            t = t_k + rng.exponential(1.0, m)
            cand = lam + t[:, None] * ones
            ok = _region_margin(cand, p, "gamma_k") > min_margin
        elif region == "tilde_only":
            t_k = _ray_threshold(lam, p, "gamma_k")
            t = t_tilde + rng.uniform(0.0, 1.0, m) * (t_k - t_tilde)
            cand = lam + t[:, None] * ones
            sig = sigma_all(cand)
            ok = (cone_margin(sig, p) > min_margin) & (sig[:, p.k] < 0)
        else:
            t = t_tilde + 10.0 ** rng.uniform(-6.0, -3.0, m)
            cand = lam + t[:, None] * ones
            ok = cone_margin(sigma_all(cand), p) > min_margin
        out = np.concatenate([out, cand[ok]], axis=0)
    return out[:count]


def sample_tilde_cone(seed: int, n: int, p: SumHessianParams, region: str = "gamma_k") -> np.ndarray:
    """One spectrum from ``region``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    return sample_tilde_cone_batch(rng, 1, n, p, region)[0]


def binomial_sk(n: int, p: SumHessianParams, a: float = 1.0) -> float:
    """``S_k(a, ..., a)`` in closed form."""
    return comb(n, p.k) * a**p.k + p.alpha * comb(n, p.k - 1) * a ** (p.k - 1)
