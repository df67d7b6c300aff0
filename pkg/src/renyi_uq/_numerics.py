"""Shared numerical machinery: log-space quadrature, 1-D search, extended reals.

Everything in the package that integrates a density-like function or optimizes
a bound over a scalar parameter goes through the helpers here, so tolerances
are set in one place.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

INF = math.inf
# below this length log_sum_exp works on Python floats
SMALL_LSE = 64

QUAD_RTOL = 1e-9
QUAD_ATOL = 1e-12
# Truncate unbounded domains once the integrand drops below this fraction of its peak.
TAIL_CUTOFF = 1e-15


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3g})")
        self.achieved = achieved


# ---------------------------------------------------------------------------
# extended-real helpers
# ---------------------------------------------------------------------------

def log_sum_exp(a, b=None) -> float:
    """``log sum_i b_i exp(a_i)`` for 1-D input with nonnegative weights.

    A lean stand-in for ``scipy.special.logsumexp`` on the small vectors that
    sit inside scalar searches, where the generic wrapper dominates runtime.
    The largest term is factored out and the rest goes through ``log1p``, so
    sums close to one keep full precision.
    """
    if b is None and isinstance(a, list) and len(a) <= SMALL_LSE:
        vals = [float(v) for v in a]
    else:
        a = np.asarray(a, dtype=float).ravel()
        if b is not None:
            b = np.asarray(b, dtype=float).ravel()
            keep = b > 0
            a = a[keep] + np.log(b[keep])
        vals = a.tolist() if a.size <= SMALL_LSE else None
    if vals is not None:
        # plain floats beat numpy dispatch at this size
        if not vals:
            return -INF
        if any(v != v for v in vals):
            return math.nan
        i = max(range(len(vals)), key=vals.__getitem__)
        m = vals[i]
        if not math.isfinite(m):
            return m
        rest = math.fsum(math.exp(v - m) for j, v in enumerate(vals) if j != i)
        return m + math.log1p(rest)
    if a.size == 0:
        return -INF
    i = int(a.argmax())
    m = float(a[i])
    if not math.isfinite(m):
        return m
    e = np.exp(a - m)
    e[i] = 0.0
    return m + math.log1p(float(e.sum()))


def upper_add(*terms: float) -> float:
    """Sum with the convention -inf + inf = +inf (used for upper bounds)."""
    if any(t == INF for t in terms):
        return INF
    if any(math.isnan(t) for t in terms):
        return math.nan
    return float(sum(terms))


def lower_sub(a: float, b: float) -> float:
    """Difference ``a - b`` with the convention inf - inf = -inf (lower bounds)."""
    if a == -INF or b == INF:
        return -INF
    return float(a - b)


def scale_ext(k: float, v: float) -> float:
    """``k * v`` for finite nonzero ``k`` and extended-real ``v``."""
    if math.isinf(v):
        return v if k > 0 else -v
    return k * v


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _safe_eval(logf: Callable[[float], float], x: float) -> float:
    try:
        v = float(logf(x))
    except (ValueError, OverflowError, ZeroDivisionError):
        return -INF
    if math.isnan(v):
        return -INF
    return v


def _quad(f, a, b, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if points is not None and len(points) and math.isfinite(a) and math.isfinite(b):
            val, err = integrate.quad(f, a, b, points=points, epsabs=QUAD_ATOL,
                                      epsrel=QUAD_RTOL, limit=500)
        else:
            val, err = integrate.quad(f, a, b, epsabs=QUAD_ATOL, epsrel=QUAD_RTOL,
                                      limit=500)
    return val, err


def _probe_grid(lo: float, hi: float, center: float, scale: float) -> np.ndarray:
    offs = scale * np.concatenate([[0.0], 2.0 ** np.arange(-20, 61, 0.5)])
    pts = np.concatenate([center - offs, center + offs])
    if math.isfinite(lo) and math.isfinite(hi):
        u = np.linspace(0.0, 1.0, 401)[1:-1]
        pts = np.concatenate([pts, lo + (hi - lo) * u])
    if math.isfinite(lo):
        pts = np.concatenate([pts, lo + scale * 10.0 ** np.arange(-14, 1)])
    if math.isfinite(hi):
        pts = np.concatenate([pts, hi - scale * 10.0 ** np.arange(-14, 1)])
    pts = pts[(pts > lo) & (pts < hi)]
    return np.unique(pts)


def _tail_diverges(logf, x1: float, x2: float) -> bool:
    """Whether log f decays slower than 1/|x| between two far points."""
    l1, l2 = _safe_eval(logf, x1), _safe_eval(logf, x2)
    if l2 == INF:
        return True
    if l2 == -INF or l1 == -INF:
        return False
    slope = (l2 - l1) / math.log(abs(x2) / abs(x1))
    return slope >= -1.0 - 1e-9


def _edge_diverges(logf, edge: float, direction: float, scale: float) -> bool:
    """Whether log f blows up like |x-edge|^s with s <= -1 at a finite edge."""
    h1, h2 = scale * 1e-9, scale * 1e-13
    l1 = _safe_eval(logf, edge + direction * h1)
    l2 = _safe_eval(logf, edge + direction * h2)
    if l2 == INF:
        return True
    if l1 == -INF or l2 == -INF:
        return False
    s = (l2 - l1) / math.log(h2 / h1)
    return s <= -1.0 + 1e-6


def log_integrate(logf: Callable[[float], float], lo: float, hi: float, *,
                  center: float, scale: float,
                  points: tuple[float, ...] = ()) -> float:
    """Return ``log int_lo^hi exp(logf(x)) dx`` as an extended real.

    The integrand is rescaled by its sampled peak before integration, the
    domain is split at ``points`` and at a core interval outside of which the
    integrand is below ``TAIL_CUTOFF`` of the peak, and the remaining tails are
    integrated with QUADPACK's infinite-interval rule. Polynomially divergent
    tails or edge singularities return ``+inf``.

    Parameters
    ----------
    logf : callable
        Scalar log-integrand; ``-inf`` where the integrand vanishes.
    lo, hi : float
        Integration limits, possibly infinite.
    center, scale : float
        Location and spread hints used to locate the bulk of the integrand.
    points : tuple of float
        Known kinks or peaks inside ``(lo, hi)``.
    """
    if not hi > lo:
        return -INF
    scale = float(scale) if scale > 0 and math.isfinite(scale) else 1.0
    center = float(min(max(center, lo), hi)) if math.isfinite(center) else 0.0
    grid = _probe_grid(lo, hi, center, scale)
    grid = np.unique(np.concatenate([grid, [p for p in points if lo < p < hi]]))
    vals = np.array([_safe_eval(logf, x) for x in grid])
    if np.any(vals == INF):
        return INF
    finite = np.isfinite(vals)
    if not finite.any():
        return -INF
    ref = float(vals[finite].max())
    peak_x = float(grid[finite][np.argmax(vals[finite])])
    cut = ref + math.log(TAIL_CUTOFF)

    # divergence tests at the edges
    if math.isinf(hi):
        far = max(abs(grid[-1]), 1.0) * 1e3
        if _tail_diverges(logf, far, far * 1e4):
            return INF
    elif _edge_diverges(logf, hi, -1.0, scale):
        return INF
    if math.isinf(lo):
        far = -max(abs(grid[0]), 1.0) * 1e3
        if _tail_diverges(logf, far, far * 1e4):
            return INF
    elif _edge_diverges(logf, lo, 1.0, scale):
        return INF

    # core interval: outermost probe points where the integrand is still above cut
    above = grid[finite & (vals > cut)]
    core_lo = float(above.min()) if above.size else peak_x
    core_hi = float(above.max()) if above.size else peak_x
    # widen to the next probe point outside
    idx_lo = np.searchsorted(grid, core_lo)
    idx_hi = np.searchsorted(grid, core_hi)
    core_lo = float(grid[idx_lo - 1]) if idx_lo > 0 else (lo if math.isfinite(lo) else core_lo)
    core_hi = float(grid[idx_hi + 1]) if idx_hi + 1 < grid.size else (hi if math.isfinite(hi) else core_hi)
    if math.isfinite(lo) and core_lo - lo < 1e-3 * scale:
        core_lo = lo
    if math.isfinite(hi) and hi - core_hi < 1e-3 * scale:
        core_hi = hi

    brk = sorted({peak_x, *[p for p in points if core_lo < p < core_hi]})
    # a peak hugging a finite edge is an edge singularity; QUADPACK handles it
    # better over the whole piece than on a sliver
    brk = [p for p in brk if core_lo + 1e-3 * scale < p < core_hi - 1e-3 * scale
           or p in points]
    edges = [core_lo, *brk, core_hi]
    pieces = [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if core_lo > lo:
        pieces.append((lo, core_lo))
    if core_hi < hi:
        pieces.append((core_hi, hi))

    def run(shift):
        def f(x):
            v = _safe_eval(logf, x)
            return 0.0 if v == -INF else math.exp(min(v - shift, 700.0))
        tot, err = 0.0, 0.0
        for a, b in pieces:
            v, e = _quad(f, a, b)
            tot += v
            err += e
        return tot, err

    total, err_total = run(ref)
    # a sampled peak at an integrable singularity can dwarf the bulk; rescale so
    # the absolute quadrature tolerance stays meaningful
    if 0.0 < total < 1e-3 and math.isfinite(total):
        ref += math.log(total)
        total, err_total = run(ref)
    if not math.isfinite(total):
        return INF
    if total <= 0.0:
        return -INF
    if err_total > max(1e-6 * total, 1e-10):
        raise QuadratureError("quadrature did not converge", err_total / total)
    return ref + math.log(total)


def integrate_signed(f: Callable[[float], float], lo: float, hi: float,
                     points: tuple[float, ...] = ()) -> float:
    """Plain adaptive quadrature of a signed integrand, split at ``points``."""
    edges = [lo, *sorted(p for p in points if lo < p < hi), hi]
    total = 0.0
    err_total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = _quad(f, a, b)
        total += v
        err_total += e
    if err_total > max(1e-7 * abs(total), 1e-9):
        raise QuadratureError("quadrature did not converge", err_total)
    return total


# ---------------------------------------------------------------------------
# one-dimensional search
# ---------------------------------------------------------------------------

BIG = 1e300


@dataclass
class SearchResult:
    """Outcome of a scan-then-refine minimization in a parameter ``t``."""

    t: float
    value: float
    trace: list[tuple[float, float]] = field(default_factory=list)
    multimodal: bool = False


def _count_local_minima(vals: np.ndarray) -> int:
    finite = np.where(np.isfinite(vals), vals, np.inf)
    n = 0
    for i in range(len(finite)):
        left = finite[i - 1] if i > 0 else np.inf
        right = finite[i + 1] if i + 1 < len(finite) else np.inf
        if np.isfinite(finite[i]) and finite[i] < left and finite[i] < right:
            n += 1
    return n


def scan_refine_minimize(obj: Callable[[float], float], t_lo: float, t_hi: float, *,
                         n_scan: int = 64, xtol: Callable[[float], float] | float = 1e-10,
                         max_iter: int = 200) -> SearchResult:
    """Minimize ``obj`` on ``[t_lo, t_hi]`` by a uniform scan then local refinement.

    The scan brackets the best sample between its neighbours; bounded Brent
    search (golden section with parabolic steps) then runs inside that
    bracket. ``xtol`` may be a number or a function of the current midpoint
    giving the stopping bracket width.
    The result flags ``multimodal`` when the scan sees several strict local
    minima, which signals the refinement may have settled on one of them.
    """
    ts = np.linspace(t_lo, t_hi, n_scan)
    vals = np.array([obj(float(t)) for t in ts], dtype=float)
    vals = np.where(np.isnan(vals), np.inf, vals)
    trace = list(zip(ts.tolist(), vals.tolist()))
    if not np.isfinite(vals).any():
        j = int(np.argmin(vals))
        return SearchResult(float(ts[j]), float(vals[j]), trace, False)
    j = int(np.argmin(vals))
    multimodal = _count_local_minima(vals) > 1
    a = float(ts[max(j - 1, 0)])
    b = float(ts[min(j + 1, n_scan - 1)])
    best_t, best_v = float(ts[j]), float(vals[j])

    def tol_at(m):
        return xtol(m) if callable(xtol) else xtol

    if b - a > tol_at(0.5 * (a + b)):
        def logged(t):
            v = obj(float(t))
            trace.append((float(t), v))
            # parabolic steps cannot use inf; a huge finite value keeps the bracket logic
            return v if v < BIG else BIG

        res = optimize.minimize_scalar(logged, bounds=(a, b), method="bounded",
                                       options={"xatol": tol_at(0.5 * (a + b)) / 2,
                                                "maxiter": max_iter})
        if res.fun < best_v:
            best_t, best_v = float(res.x), float(res.fun)
    return SearchResult(best_t, best_v, trace, multimodal)
