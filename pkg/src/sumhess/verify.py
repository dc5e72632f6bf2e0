"""Seeded property suites for the structural inequalities of ``S_k``.

Each suite draws a deterministic corpus from ``numpy.random.default_rng(seed)``,
checks a family of identities or inequalities and returns a
:class:`LemmaSuiteReport`.  Inequalities use the slack
``-1e-10 * max(1, |lhs|, |rhs|)`` unless a check documents otherwise.
Constants that the theory only asserts to exist are reported as observed
minima and checked for strict positivity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .elliptic import DiscreteSystem, ExprData, ProblemSpec, _mode_data, c0_bounds
from .errors import InvalidArgument
from .geometry import Disk, barrier_defaults, barrier_eval
from .matops import quotient_second_directional, second_directional, sk_and_grad_matrix, char_coeffs
from .symfun import (
    SumHessianParams,
    cone_margin,
    sample_tilde_cone_batch,
    sigma_all,
    sk_grad,
    sk_order,
)

__all__ = [
    "LemmaEntry",
    "LemmaSuiteReport",
    "run_identity_suite",
    "run_cone_suite",
    "run_concavity_suite",
    "run_garding_suite",
    "run_barrier_suite",
    "run_all_suites",
    "ratio_hypotheses",
    "c0_bounds",
    "jacobian_check",
    "random_orthogonal",
]

DEFAULT_SIZES = tuple((n, k) for n in range(2, 7) for k in range(2, n + 1))
SLACK = 1e-10


@dataclass
class LemmaEntry:
    samples: int = 0
    passes: int = 0
    worst_slack: float = float("inf")
    constant: float | None = None
    asserted: bool = True
    min_samples: int = 1

    def add(self, slack: np.ndarray, ok: np.ndarray) -> None:
        slack = np.atleast_1d(np.asarray(slack, dtype=float))
        ok = np.atleast_1d(np.asarray(ok, dtype=bool))
        self.samples += int(ok.size)
        self.passes += int(np.sum(ok))
        if slack.size:
            self.worst_slack = min(self.worst_slack, float(np.min(slack)))

    def note_constant(self, value: float) -> None:
        value = float(value)
        self.constant = value if self.constant is None else min(self.constant, value)

    @property
    def ok(self) -> bool:
        if not self.asserted:
            return True
        positive = self.constant is None or self.constant > 0
        return self.samples >= self.min_samples and self.passes == self.samples and positive


@dataclass
class LemmaSuiteReport:
    suite: str
    seed: int
    entries: dict = field(default_factory=dict)

    def entry(self, name: str) -> LemmaEntry:
        return self.entries.setdefault(name, LemmaEntry())

    @property
    def failures(self) -> int:
        """Failed samples, plus one per check that is short of samples or has a non-positive constant."""
        out = 0
        for e in self.entries.values():
            if e.asserted:
                out += e.samples - e.passes
                if e.passes == e.samples and not e.ok:
                    out += 1
        return out

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries.values())

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "ok": self.ok,
            "failures": self.failures,
            "entries": {
                name: {
                    "samples": e.samples,
                    "passes": e.passes,
                    "worst_slack": e.worst_slack,
                    "constant": e.constant,
                    "asserted": e.asserted,
                    "min_samples": e.min_samples,
                }
                for name, e in sorted(self.entries.items())
            },
        }

    def table(self) -> str:
        rows = [f"{'suite/check':44s} {'samples':>8s} {'passes':>8s} {'worst slack':>12s} {'constant':>12s}"]
        for name, e in sorted(self.entries.items()):
            const = "" if e.constant is None else f"{e.constant:12.4e}"
            rows.append(f"{self.suite + '/' + name:44s} {e.samples:8d} {e.passes:8d} {e.worst_slack:12.4e} {const:>12s}")
        return "\n".join(rows)


def _rel_slack(lhs, rhs, scale=None):
    """``(lhs - rhs) / max(1, |lhs|, |rhs|)`` so ``>= -SLACK`` means ``lhs >= rhs``."""
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    if scale is None:
        scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    return (lhs - rhs) / scale


# --- identities ------------------------------------------------------------------


def _set_coord(lam: np.ndarray, idx, value: float) -> np.ndarray:
    out = lam.copy()
    out[..., idx] = value
    return out


def run_identity_suite(seed: int = 1, sizes=DEFAULT_SIZES, samples: int = 10_000, rtol: float = 1e-12) -> LemmaSuiteReport:
    """Six algebraic identities of ``S_k`` on Gaussian spectra.

    Errors are measured relative to ``n (1 + alpha) max_m sigma_m(|lam|)``,
    which bounds every term that appears.  The first and second partial
    derivatives are checked against exact difference quotients: ``S_k`` is
    affine in each coordinate, so ``S(lam_i = 1) - S(lam_i = 0)`` is the
    derivative and the four-point difference in ``(lam_i, lam_j)`` is the
    mixed derivative.
    """
    rep = LemmaSuiteReport("identity", seed)
    rng = np.random.default_rng(seed)
    for n, k in sizes:
        lam = rng.standard_normal((samples, n)) * rng.uniform(0.1, 3.0, (samples, 1))
        alpha = rng.uniform(0.05, 3.0, samples)
        sig = sigma_all(lam)
        scale = n * (1.0 + alpha) * np.max(sigma_all(np.abs(lam)), axis=-1)
        # difference quotients plant 1.0 into coordinates, so their terms are bounded by this
        scale_dq = n * (1.0 + alpha) * np.max(sigma_all(np.maximum(np.abs(lam), 1.0)), axis=-1)

        def S(sg, m):
            return _sk_vec(sg, m, alpha, n)

        s_k = S(sig, k)
        s_km1_sig = _pick(sig, k - 1)
        s_km2_sig = _pick(sig, k - 2)
        grad = np.empty((samples, n))
        trunc_k = np.empty((samples, n))
        for i in range(n):
            drop = sigma_all(_set_coord(lam, i, 0.0))
            grad[:, i] = S(drop, k - 1)
            trunc_k[:, i] = S(drop, k)
            # (2) S_k = lam_i S_{k-1}(lam|i) + S_k(lam|i)
            err = np.abs(s_k - (lam[:, i] * grad[:, i] + trunc_k[:, i])) / scale
            rep.entry("def2_expansion").add(-err, err <= rtol)
            # (3) partial derivative equals S_{k-1}(lam|i)
            one = S(sigma_all(_set_coord(lam, i, 1.0)), k)
            err = np.abs((one - S(drop, k)) - grad[:, i]) / scale_dq
            rep.entry("def3_gradient").add(-err, err <= rtol)
        for i in range(n):
            for j in range(i + 1, n):
                def at(vi, vj):
                    return S(sigma_all(_set_coord(_set_coord(lam, i, vi), j, vj)), k)

                mixed = at(1.0, 1.0) - at(1.0, 0.0) - at(0.0, 1.0) + at(0.0, 0.0)
                both = sigma_all(_set_coord(_set_coord(lam, i, 0.0), j, 0.0))
                err = np.abs(mixed - S(both, k - 2)) / scale_dq
                rep.entry("def4_second_derivative").add(-err, err <= rtol)
        # (5) sum of S^{ii}
        rhs = (n - k + 1) * s_km1_sig + alpha * (n - k + 2) * s_km2_sig
        err = np.abs(grad.sum(axis=1) - rhs) / scale
        rep.entry("def5_trace_gradient").add(-err, err <= rtol)
        # (6) sum of S_k(lam|i)
        rhs = (n - k) * s_k + alpha * s_km1_sig
        err = np.abs(trunc_k.sum(axis=1) - rhs) / scale
        rep.entry("def6_trace_truncation").add(-err, err <= rtol)
        # (7) sum of lam_i S_{k-1}(lam|i)
        rhs = k * s_k - alpha * s_km1_sig
        err = np.abs(np.sum(lam * grad, axis=1) - rhs) / scale
        rep.entry("def7_euler").add(-err, err <= rtol)
        # library gradient agrees with the truncation route
        lib = np.stack([sk_grad(lam[m], SumHessianParams(k, float(alpha[m]))) for m in range(min(50, samples))])
        err = np.max(np.abs(lib - grad[: lib.shape[0]]), axis=1) / scale[: lib.shape[0]]
        rep.entry("library_gradient").add(-err, err <= rtol)
    return rep


def _pick(sig: np.ndarray, m: int) -> np.ndarray:
    n = sig.shape[-1] - 1
    if m < 0 or m > n:
        return np.zeros(sig.shape[:-1])
    return sig[..., m]


def _sk_vec(sig: np.ndarray, m: int, alpha, n: int) -> np.ndarray:
    return _pick(sig, m) + alpha * _pick(sig, m - 1)


# --- cone inequalities -------------------------------------------------------------


def _corpus(rng, count: int, n: int, p: SumHessianParams) -> np.ndarray:
    """Spectra spread over the Garding cone, the admissible-only part and near the boundary."""
    parts = []
    share = max(count // 3, 1)
    for region in ("gamma_k", "tilde_only", "boundary_near"):
        if region == "tilde_only" and p.k == n and n == 1:
            continue
        parts.append(sample_tilde_cone_batch(rng, share, n, p, region))
    parts.append(sample_tilde_cone_batch(rng, count - share * len(parts), n, p, "gamma_k") if count > share * len(parts) else np.empty((0, n)))
    out = np.concatenate(parts, axis=0)
    return out[rng.permutation(out.shape[0])]


def ratio_hypotheses(lam, k: int, delta: float = 0.1, eps: float = 0.1) -> bool:
    """Whether ``lam`` (with ``lam[0]`` distinguished, rest descending) meets the ratio lemma's hypotheses."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if n < 2 or k < 2:
        return False
    rest = lam[1:]
    if np.any(np.diff(rest) > 0):
        return False
    l1, l2, ln = lam[0], lam[1], lam[-1]
    if n >= k >= 3:
        case = l1 > 0
    elif n > k == 2:
        case = l1 >= 1 and l2 > 0
    else:
        case = False
    return bool(case and ln < 0 and l1 >= delta * l2 and -ln >= eps * l1)


def run_cone_suite(seed: int = 1, sizes=DEFAULT_SIZES, samples: int = 2000, alpha: float = 1.0, quota: int = 200) -> LemmaSuiteReport:
    """Convexity of the admissible cone and the lower bounds on ``S_k^{ii}``."""
    rep = LemmaSuiteReport("cone", seed)
    rng = np.random.default_rng(seed)
    ts = np.round(np.arange(1, 10) / 10.0, 1)
    for n, k in sizes:
        p = SumHessianParams(k, alpha)
        lam = _corpus(rng, samples, n, p)
        sig = sigma_all(lam)
        s_k = sk_order(sig, k, alpha)
        grad = np.stack([sk_grad(row, p) for row in lam])
        tr = grad.sum(axis=1)
        # convexity: midpoints of random pairs stay admissible
        other = lam[rng.permutation(lam.shape[0])]
        for t in ts:
            mid = t * lam + (1 - t) * other
            m = cone_margin(sigma_all(mid), p)
            rep.entry("convexity").add(m, m > 0)
        # sigma_{k-1} and the trace of S^{ii} stay positive once S_k >= 1
        big = s_k >= 1.0
        if np.sum(big) < quota:
            extra = _corpus(rng, 4 * samples, n, p)
            es = sigma_all(extra)
            keep = sk_order(es, k, alpha) >= 1.0
            sig_big = np.concatenate([sig[big], es[keep]])
            tr_big = np.concatenate([tr[big], np.array([sk_grad(r, p).sum() for r in extra[keep]])])
        else:
            sig_big, tr_big = sig[big], tr[big]
        c0 = np.minimum(sig_big[:, k - 1], tr_big)
        e = rep.entry("sigma_k_minus_1_floor")
        e.add(c0, c0 > 0)
        e.note_constant(float(np.min(c0)))
        # a negative coordinate carries at least its share of the trace
        neg_rows, neg_cols = np.nonzero(lam < 0)
        if neg_rows.size:
            lhs = grad[neg_rows, neg_cols]
            rhs = tr[neg_rows] / (n - k + 2)
            sl = _rel_slack(lhs, rhs)
            rep.entry("negative_entry_share").add(sl, sl >= -SLACK)
        # lambda_i S^{ii} >= theta0 S_k for the k-1 largest entries
        order = np.argsort(-lam, axis=1, kind="stable")
        srt = np.take_along_axis(lam, order, axis=1)
        gs = np.take_along_axis(grad, order, axis=1)
        if k >= 2:
            prod = srt[:, : k - 1] * gs[:, : k - 1]
            ratio = prod / s_k[:, None]
            e = rep.entry("theta0_ratio")
            e.add(ratio.ravel(), ratio.ravel() > 0)
            e.note_constant(float(np.min(ratio)))
        # ratio lemma under its hypotheses
        _ratio_checks(rep, rng, lam, srt, n, p, quota)
    return rep


def _ratio_checks(rep, rng, lam, srt, n, p, quota):
    k = p.k
    if not ((n >= k >= 3) or (n > k == 2)):
        return
    ratios = []
    pool = srt
    tries = 0
    while len(ratios) < quota and tries < 20:
        for row in pool:
            for j in range(n):
                cand = np.concatenate([[row[j]], np.delete(row, j)])
                if not ratio_hypotheses(cand, k):
                    continue
                g = sk_grad(cand, p)
                ratios.append(g[0] / g[-1])
        tries += 1
        if len(ratios) < quota:
            extra = sample_tilde_cone_batch(rng, 2000, n, p, "tilde_only")
            extra = extra * rng.uniform(1.0, 4.0, (extra.shape[0], 1))
            extra = extra[cone_margin(sigma_all(extra), p) > 1e-9]
            pool = -np.sort(-extra, axis=1)
    if not ratios:
        return
    r = np.array(ratios)
    e = rep.entry("theta1_ratio")
    e.min_samples = quota
    e.add(r, r > 0)
    e.note_constant(float(np.min(r)))


# --- matrix-level suites ----------------------------------------------------------------


def random_orthogonal(rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _conjugate(rng, lam: np.ndarray) -> np.ndarray:
    q = random_orthogonal(rng, lam.size)
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def _random_sym(rng, n: int) -> np.ndarray:
    b = rng.standard_normal((n, n))
    return 0.5 * (b + b.T)


def run_concavity_suite(seed: int = 1, pairs: int = 1000, sizes=((2, 2), (3, 2), (3, 3), (4, 2), (4, 3), (5, 3)), alpha: float = 1.0, tol: float = 1e-8) -> LemmaSuiteReport:
    """Second directional derivatives of the concave transforms are non-positive.

    The bound is ``tol * max(1, |first-order part|, |second-order part|)``.
    """
    rep = LemmaSuiteReport("concavity", seed)
    rng = np.random.default_rng(seed)
    per = [pairs // len(sizes) + (1 if i < pairs % len(sizes) else 0) for i in range(len(sizes))]
    for (n, k), count in zip(sizes, per):
        p = SumHessianParams(k, alpha)
        lam = _corpus(rng, count, n, p)
        for row in lam:
            a = _conjugate(rng, row)
            b = _random_sym(rng, n)
            s, g = sk_and_grad_matrix(a, p)
            s1 = float(np.sum(g * b))
            raw = second_directional(a, b, p, "raw")
            scale_root = max(1.0, abs(s ** (1.0 / k - 1) * raw), abs(s ** (1.0 / k - 2) * s1 * s1))
            val = second_directional(a, b, p, "kth_root")
            rep.entry("kth_root").add(-val / scale_root, val <= tol * scale_root)
            scale_log = max(1.0, abs(raw / s), (s1 / s) ** 2)
            val = second_directional(a, b, p, "log")
            rep.entry("log").add(-val / scale_log, val <= tol * scale_log)
            for ell in range(k):
                val = quotient_second_directional(a, b, p, ell)
                q_scale = max(1.0, scale_root, scale_log) * max(1.0, abs(s))
                rep.entry(f"quotient_l{ell}" if ell < 3 else "quotient_l3plus").add(-val / q_scale, val <= tol * q_scale)
    return rep


def run_garding_suite(seed: int = 1, pairs: int = 1000, sizes=((2, 2), (3, 2), (3, 3), (4, 2), (4, 3), (5, 4)), alpha: float = 1.0) -> LemmaSuiteReport:
    """Superadditivity against ``sigma_k`` of a Garding-cone increment and its two tangent forms."""
    rep = LemmaSuiteReport("garding", seed)
    rng = np.random.default_rng(seed)
    per = [pairs // len(sizes) + (1 if i < pairs % len(sizes) else 0) for i in range(len(sizes))]
    for (n, k), count in zip(sizes, per):
        p = SumHessianParams(k, alpha)
        lam_a = _corpus(rng, count, n, p)
        lam_b = sample_tilde_cone_batch(rng, count, n, p, "gamma_k")
        for i in range(count):
            a = _conjugate(rng, lam_a[i])
            b = _conjugate(rng, lam_b[i])
            if i == 0:
                b = 1e-8 * np.eye(n)
            _garding_pair(rep, a, b, p)
            _trace_bounds(rep, a, p)
    return rep


def _garding_pair(rep, a, b, p):
    k = p.k
    s_a, g_a = sk_and_grad_matrix(a, p)
    s_ab, _ = sk_and_grad_matrix(a + b, p)
    sig_b = float(char_coeffs(b)[k])
    sl = _rel_slack(s_ab, s_a + sig_b)
    rep.entry("superadditive").add(sl, sl >= -SLACK)
    pair = float(np.sum(g_a * b))
    # strict positivity of the right side is only observable when sigma_k(B)
    # survives rounding next to S_k(A); the B -> 0 limit case checks >= 0
    strict = sig_b > 1e-12 * max(1.0, abs(s_a))
    lhs = s_a ** (1.0 / k - 1) * pair / k
    rhs = (s_a + sig_b) ** (1.0 / k) - s_a ** (1.0 / k)
    sl = _rel_slack(lhs, rhs)
    rep.entry("kth_root_display").add(sl, (sl >= -SLACK) & ((rhs > 0) if strict else (rhs >= 0)))
    lhs = pair / s_a
    rhs = np.log(s_a + sig_b) - np.log(s_a)
    sl = _rel_slack(lhs, rhs)
    rep.entry("log_display").add(sl, (sl >= -SLACK) & ((rhs > 0) if strict else (rhs >= 0)))


def _trace_bounds(rep, a, p):
    n, k, al = a.shape[0], p.k, p.alpha
    s_a, g_a = sk_and_grad_matrix(a, p)
    sig = char_coeffs(a)
    contr = float(np.sum(g_a * a))
    tr = float(np.trace(g_a))
    upper = _rel_slack(k * s_a, contr)
    lower = _rel_slack(contr, -al / (n - k + 1) * tr)
    rep.entry("trace_bound_upper").add(upper, upper >= -SLACK)
    rep.entry("trace_bound_lower").add(lower, lower >= -SLACK)
    lhs = contr + al / (n - k + 1) * tr
    rhs = k * s_a + (n - k + 2) / (n - k + 1) * al * al * sig[k - 2]
    err = abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
    rep.entry("trace_identity").add(-err, err <= 1e-9)


def run_barrier_suite(seed: int = 1, samples: int = 1000, sizes=((2, 2), (3, 2), (3, 3)), alpha: float = 1.0, fd_checks: int = 20) -> LemmaSuiteReport:
    """Contraction of the boundary barrier Hessian with ``S_k^{ij}`` on disks.

    Uses the default strip ``mu = R/10`` and ``K = 1/(8 mu)``; records the
    observed ``min sum S^{ij} h_ij / sum S^{ii}``.
    """
    rep = LemmaSuiteReport("barrier", seed)
    rng = np.random.default_rng(seed)
    per = [samples // len(sizes) + (1 if i < samples % len(sizes) else 0) for i in range(len(sizes))]
    for (n, k), count in zip(sizes, per):
        p = SumHessianParams(k, alpha)
        lam = _corpus(rng, count, n, p)
        e = rep.entry("ratio_positive")
        fd = rep.entry("hessian_fd")
        for i in range(count):
            radius = float(rng.uniform(0.5, 2.0))
            dom = Disk(radius, tuple([0.0] * n))
            mu, big_k = barrier_defaults(dom)
            d = float(rng.uniform(0.0, 0.999) * mu)
            if i == 0:
                d = 0.0
            direction = rng.standard_normal(n)
            direction /= np.linalg.norm(direction)
            x = (radius - d) * direction
            _, _, d2h = barrier_eval(dom, big_k, x)
            a = np.eye(n) if i == 0 else _conjugate(rng, lam[i])
            _, g = sk_and_grad_matrix(a, p)
            ratio = float(np.sum(g * d2h) / np.trace(g))
            e.add(ratio, ratio > 0)
            e.note_constant(ratio)
            if i < fd_checks:
                err = _barrier_fd_error(dom, big_k, x, d2h)
                fd.add(-err, err <= 1e-5)
    return rep


def _barrier_fd_error(dom, big_k, x, d2h) -> float:
    n = x.size
    step = 1e-4 * dom.radius
    fd = np.zeros((n, n))
    val = lambda y: barrier_eval(dom, big_k, y)[0]  # noqa: E731
    inward = -x / np.linalg.norm(x) * 2 * step
    y = x + inward
    _, _, d2y = barrier_eval(dom, big_k, y)
    for i in range(n):
        for j in range(n):
            ei = np.eye(n)[i] * step
            ej = np.eye(n)[j] * step
            fd[i, j] = (val(y + ei + ej) - val(y + ei - ej) - val(y - ei + ej) + val(y - ei - ej)) / (4 * step * step)
    return float(np.max(np.abs(fd - d2y)) / max(1.0, np.max(np.abs(d2y))))


def run_all_suites(seed: int = 1, quick: bool = False) -> list[LemmaSuiteReport]:
    scale = 10 if quick else 1
    return [
        run_identity_suite(seed, samples=10_000 // scale),
        run_cone_suite(seed, samples=2000 // scale, quota=200 // scale),
        run_concavity_suite(seed, pairs=1000 // scale),
        run_garding_suite(seed, pairs=1000 // scale),
        run_barrier_suite(seed, samples=1000 // scale),
    ]


# --- solver checks ---------------------------------------------------------------------


def jacobian_check(ps: ProblemSpec, u, s: float = 0.0, form: str = "raw") -> float:
    """Max entry error of the analytic Jacobian against central differences,
    relative to the largest analytic entry.  Step ``1e-6 (1 + |u_j|)``."""
    g = ps.grid
    if max(g.dims) > 11:
        raise InvalidArgument("jacobian_check is limited to grids with at most 11 nodes per axis")
    u = np.asarray(u, dtype=float)
    sysm = DiscreteSystem(g, ps.params, _mode_data(ps, s), ps.pde_rows, form)
    base = sysm.evaluate(u, jac=True)
    if not np.all(np.isfinite(base.residual)):
        raise InvalidArgument("residual is not finite at u; the log form needs S_k > 0 on every PDE row")
    ja = base.jac.toarray()
    jf = np.empty_like(ja)
    for j in range(g.n_nodes):
        hstep = 1e-6 * (1.0 + abs(u[j]))
        up, um = u.copy(), u.copy()
        up[j] += hstep
        um[j] -= hstep
        jf[:, j] = (sysm.evaluate(up).residual - sysm.evaluate(um).residual) / (2 * hstep)
    return float(np.max(np.abs(ja - jf)) / np.max(np.abs(ja)))


def reports_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)
