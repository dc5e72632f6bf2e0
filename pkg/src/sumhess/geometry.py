"""Closed-form geometry for rectangles (boxes) and disks (balls).

The finite-difference grid lives on the rectangle.  The disk exists so the
boundary barrier ``h = -d + K d^2`` and the convexity constants can be checked
on a domain that is genuinely uniformly convex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgument
from .symfun import SumHessianParams, sigma

__all__ = [
    "Rectangle",
    "Disk",
    "BoundaryQuery",
    "domain_query",
    "barrier_eval",
    "barrier_defaults",
    "convexity_constants",
    "diameter",
]


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box ``prod_a [lower_a, upper_a]`` in 2 or 3 dimensions.

    Faces are flat (all curvatures zero), so the box is almost convex with
    ``a_kappa = 0`` but not uniformly convex, and its corners violate the
    smoothness the theory assumes.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    uniformly_convex: bool = field(default=False, init=False)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or len(lo) not in (2, 3):
            raise InvalidArgument("rectangle needs matching lower/upper of length 2 or 3")
        if any(not (h > l) for l, h in zip(lo, hi)):
            raise InvalidArgument("rectangle extents must be positive")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    @property
    def extents(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)


@dataclass(frozen=True)
class Disk:
    """Ball of radius ``radius`` around ``center`` (2 or 3 dimensions)."""

    radius: float
    center: tuple[float, ...] = (0.0, 0.0)
    uniformly_convex: bool = field(default=True, init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("radius must be positive")
        c = tuple(float(v) for v in self.center)
        if len(c) not in (2, 3):
            raise InvalidArgument("disk center must have 2 or 3 coordinates")
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return len(self.center)


@dataclass(frozen=True)
class BoundaryQuery:
    """Distance to the boundary and local boundary data at the nearest point.

    ``nu`` is NaN-filled when the nearest point is a corner or edge of a box
    (``corner`` is then set); ``kappa`` holds the principal curvatures.
    """

    d: float
    inside: bool
    nearest: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    corner: bool = False


def diameter(dom) -> float:
    if isinstance(dom, Rectangle):
        return float(np.linalg.norm(dom.extents))
    return 2.0 * dom.radius


def _query_rectangle(dom: Rectangle, x: np.ndarray) -> BoundaryQuery:
    lo, hi = np.array(dom.lower), np.array(dom.upper)
    n = dom.dim
    kappa = np.zeros(n - 1)
    inside = bool(np.all(x >= lo) and np.all(x <= hi))
    if inside:
        gaps = np.concatenate([x - lo, hi - x])
        j = int(np.argmin(gaps))
        axis, side = j % n, (-1 if j < n else 1)
        nearest = x.copy()
        nearest[axis] = lo[axis] if side < 0 else hi[axis]
        nu = np.zeros(n)
        nu[axis] = side
        return BoundaryQuery(float(gaps[j]), True, nearest, nu, kappa)
    nearest = np.clip(x, lo, hi)
    outside_axes = np.flatnonzero((x < lo) | (x > hi))
    d = float(np.linalg.norm(x - nearest))
    if outside_axes.size > 1:
        return BoundaryQuery(d, False, nearest, np.full(n, np.nan), kappa, corner=True)
    nu = np.zeros(n)
    a = outside_axes[0]
    nu[a] = -1.0 if x[a] < lo[a] else 1.0
    return BoundaryQuery(d, False, nearest, nu, kappa)


def _query_disk(dom: Disk, x: np.ndarray) -> BoundaryQuery:
    c = np.array(dom.center)
    r_vec = x - c
    r = float(np.linalg.norm(r_vec))
    if r == 0.0:
        nu = np.zeros(dom.dim)
        nu[0] = 1.0
    else:
        nu = r_vec / r
    nearest = c + dom.radius * nu
    kappa = np.full(dom.dim - 1, 1.0 / dom.radius)
    return BoundaryQuery(abs(dom.radius - r), r <= dom.radius, nearest, nu, kappa)


def domain_query(dom, x) -> BoundaryQuery:
    """Exact distance, nearest boundary point, outward normal and curvatures."""
    x = np.asarray(x, dtype=float)
    if x.shape != (dom.dim,) or not np.all(np.isfinite(x)):
        raise InvalidArgument(f"expected a finite point of dimension {dom.dim}")
    if isinstance(dom, Rectangle):
        return _query_rectangle(dom, x)
    return _query_disk(dom, x)


def barrier_defaults(dom: Disk) -> tuple[float, float]:
    """Default strip width ``mu = R/10`` and ``K = 1/(8 mu)``."""
    mu = dom.radius / 10.0
    return mu, 1.0 / (8.0 * mu)


def barrier_eval(dom: Disk, big_k: float, x, mu: float | None = None):
    """Value, gradient and Hessian of ``h = -d + K d^2`` in the strip ``d < mu``.

    Requires ``8 K mu <= 1``.  With ``d = R - |x - c|`` and ``nu`` the radial
    unit vector,

        Dh  = (1 - 2Kd) nu,
        D2h = (1 - 2Kd) (I - nu nu^T) / |x - c| + 2K nu nu^T,

    which in principal coordinates is ``diag((1-2Kd) kappa/(1-kappa d), ..., 2K)``.
    """
    if not isinstance(dom, Disk):
        raise InvalidArgument("the barrier is implemented for disks only")
    if mu is None:
        mu = dom.radius / 10.0
    if not (big_k >= 0 and mu > 0):
        raise InvalidArgument("need K >= 0 and mu > 0")
    if 8.0 * big_k * mu > 1.0 + 1e-12:
        raise DomainError(f"8*K*mu = {8 * big_k * mu:.4g} exceeds 1")
    q = domain_query(dom, x)
    on_boundary = q.d <= 16 * np.finfo(float).eps * dom.radius
    if not (q.inside or on_boundary) or q.d >= mu:
        raise DomainError(f"point is outside the boundary strip (d={q.d:.4g}, mu={mu:.4g})")
    x = np.asarray(x, dtype=float)
    d = q.d
    r = dom.radius - d
    nu = q.nu
    n = dom.dim
    h = -d + big_k * d * d
    dh = (1.0 - 2.0 * big_k * d) * nu
    proj = np.eye(n) - np.outer(nu, nu)
    d2h = (1.0 - 2.0 * big_k * d) * proj / r + 2.0 * big_k * np.outer(nu, nu)
    return h, dh, d2h


def convexity_constants(dom, p: SumHessianParams):
    """``(a_kappa, c_kappa, gamma_kappa)``; ``gamma_kappa`` is None when not uniformly convex."""
    if isinstance(dom, Rectangle):
        return 0.0, 0.0, None
    kappa = np.full(dom.dim - 1, 1.0 / dom.radius)
    c_kappa = float(sigma(kappa, p.k - 1))
    return 1.0 / dom.radius, c_kappa, 1.0 / dom.radius
