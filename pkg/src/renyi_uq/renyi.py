"""Rényi divergences, the variational (Donsker–Varadhan type) lower bound and a
bootstrap relative-entropy estimator.

Conventions: ``renyi_divergence(Q, P, alpha)`` is

    R_alpha(Q||P) = 1/(alpha (alpha-1)) log int q^alpha p^(1-alpha),

so ``alpha = 1`` is ``KL(Q||P)`` and ``alpha = 0`` is ``KL(P||Q)``. Values are
in nats and may be ``+inf``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from ._numerics import INF, log_integrate, log_sum_exp
from .dist import (KDE, Distribution, Exponential, FiniteDiscrete, Gamma, Normal,
                   kde_fit)

KL_SWITCH = 1e-6


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def _log_I_normal(Q: Normal, P: Normal, alpha: float) -> float:
    s2 = alpha * P.sigma ** 2 + (1 - alpha) * Q.sigma ** 2
    if s2 <= 0:
        return INF if alpha * (alpha - 1) > 0 else -INF
    d = Q.mu - P.mu
    return ((1 - alpha) * math.log(Q.sigma) + alpha * math.log(P.sigma)
            - 0.5 * math.log(s2) - alpha * (1 - alpha) * d * d / (2 * s2))


def _log_I_exponential(Q: Exponential, P: Exponential, alpha: float) -> float:
    rate = alpha * Q.rate + (1 - alpha) * P.rate
    if rate <= 0:
        return INF if alpha * (alpha - 1) > 0 else -INF
    return alpha * math.log(Q.rate) + (1 - alpha) * math.log(P.rate) - math.log(rate)


def _log_I_gamma(Q: Gamma, P: Gamma, alpha: float) -> float:
    A = alpha * Q.a + (1 - alpha) * P.a
    B = alpha / Q.b + (1 - alpha) / P.b
    if A <= 0 or B <= 0:
        return INF if alpha * (alpha - 1) > 0 else -INF
    return (math.lgamma(A) - A * math.log(B)
            - alpha * (Q.a * math.log(Q.b) + math.lgamma(Q.a))
            - (1 - alpha) * (P.a * math.log(P.b) + math.lgamma(P.a)))


def _kl_closed(Q, P) -> float | None:
    """``KL(Q||P)`` for same-family parametric pairs, or ``None``."""
    if isinstance(Q, Normal) and isinstance(P, Normal):
        d = Q.mu - P.mu
        return (math.log(P.sigma / Q.sigma)
                + (Q.sigma ** 2 + d * d) / (2 * P.sigma ** 2) - 0.5)
    if isinstance(Q, Exponential) and isinstance(P, Exponential):
        return math.log(Q.rate / P.rate) + P.rate / Q.rate - 1.0
    if isinstance(Q, Gamma) and isinstance(P, Gamma):
        return ((Q.a - P.a) * special.digamma(Q.a) - math.lgamma(Q.a) + math.lgamma(P.a)
                + P.a * (math.log(P.b) - math.log(Q.b)) + Q.a * (Q.b / P.b - 1.0))
    return None


# ---------------------------------------------------------------------------
# support handling
# ---------------------------------------------------------------------------

def _as_common_discrete(Q: FiniteDiscrete, P: FiniteDiscrete):
    if Q.points.shape == P.points.shape and np.array_equal(Q.points, P.points):
        return P.points, Q.probs, P.probs
    pts = np.union1d(Q.points, P.points)
    q = np.zeros(pts.size)
    p = np.zeros(pts.size)
    q[np.searchsorted(pts, Q.points)] = Q.probs
    p[np.searchsorted(pts, P.points)] = P.probs
    return pts, q, p


def _contained(inner: Distribution, outer: Distribution) -> bool:
    a, b = inner.support
    c, d = outer.support
    return a >= c and b <= d


def _check_pair(Q, P):
    for D in (Q, P):
        if not isinstance(D, Distribution):
            raise TypeError(f"unsupported model {type(D).__name__}: needs a density")
    if Q.discrete != P.discrete:
        raise TypeError("cannot compare a discrete and a continuous model")


# ---------------------------------------------------------------------------
# divergences
# ---------------------------------------------------------------------------

def kl_divergence(Q, P) -> float:
    """Relative entropy ``KL(Q||P) = int q log(q/p)``."""
    _check_pair(Q, P)
    if isinstance(Q, FiniteDiscrete):
        _, q, p = _as_common_discrete(Q, P)
        m = q > 0
        if np.any(p[m] == 0):
            return INF
        return float(max(np.sum(q[m] * (np.log(q[m]) - np.log(p[m]))), 0.0))
    closed = _kl_closed(Q, P)
    if closed is not None:
        return max(closed, 0.0)
    if not _contained(Q, P):
        return INF

    # split q log(q/p) into its positive and negative parts, each in log space
    def part(sign):
        def logf(x):
            lq = Q._logpdf(x)
            if lq == -INF:
                return -INF
            lp = P._logpdf(x)
            if lp == -INF:
                return INF if sign > 0 else -INF
            d = sign * (lq - lp)
            return lq + math.log(d) if d > 0 else -INF
        return logf

    lo, hi = Q.support
    pts = tuple(sorted(set(Q.breakpoints) | set(P.breakpoints)))
    pos = log_integrate(part(+1), lo, hi, center=Q.center, scale=Q.scale, points=pts)
    if pos == INF:
        return INF
    neg = log_integrate(part(-1), lo, hi, center=Q.center, scale=Q.scale, points=pts)
    val = (math.exp(pos) if pos > -INF else 0.0) - (math.exp(neg) if neg > -INF else 0.0)
    return max(val, 0.0)


def _log_I(Q, P, alpha: float) -> float:
    """``log int q^alpha p^(1-alpha)`` over ``{p > 0}`` (and ``{q > 0}`` if alpha < 0)."""
    if isinstance(Q, FiniteDiscrete):
        _, q, p = _as_common_discrete(Q, P)
        terms = []
        for qi, pi in zip(q.tolist(), p.tolist()):
            if qi > 0 and pi > 0:
                terms.append(alpha * math.log(qi) + (1 - alpha) * math.log(pi))
            elif (qi > 0 and alpha > 1) or (pi > 0 and alpha < 0):
                return INF
        return log_sum_exp(terms)
    if isinstance(Q, Normal) and isinstance(P, Normal):
        return _log_I_normal(Q, P, alpha)
    if isinstance(Q, Exponential) and isinstance(P, Exponential):
        return _log_I_exponential(Q, P, alpha)
    if isinstance(Q, Gamma) and isinstance(P, Gamma):
        return _log_I_gamma(Q, P, alpha)
    if alpha > 1 and not _contained(Q, P):
        return INF
    if alpha < 0 and not _contained(P, Q):
        return INF

    def logf(x):
        lq = Q._logpdf(x)
        lp = P._logpdf(x)
        if lp == -INF or lq == -INF:
            return -INF
        return alpha * lq + (1 - alpha) * lp

    lo = max(Q.support[0], P.support[0])
    hi = min(Q.support[1], P.support[1])
    pts = tuple(sorted(set(Q.breakpoints) | set(P.breakpoints)))
    return log_integrate(logf, lo, hi, center=0.5 * (Q.center + P.center),
                         scale=max(Q.scale, P.scale), points=pts)


def renyi_divergence(Q, P, alpha: float) -> float:
    """Rényi divergence ``R_alpha(Q||P)`` in nats.

    Parameters
    ----------
    Q, P : Distribution
        Both finite-discrete, or both with densities. Same-family normal,
        exponential and gamma pairs use closed forms; finite-discrete pairs an
        exact sum; other continuous pairs quadrature.
    alpha : float
        Order. ``1`` (and ``|alpha - 1| < 1e-6``) gives ``KL(Q||P)``; ``0``
        (and ``|alpha| < 1e-6``) gives ``KL(P||Q)``.

    Returns
    -------
    float
        Nonnegative extended real; ``+inf`` when the defining integral diverges
        or absolute continuity fails in the direction the order requires.
    """
    _check_pair(Q, P)
    alpha = float(alpha)
    if abs(alpha - 1.0) < KL_SWITCH:
        return kl_divergence(Q, P)
    if abs(alpha) < KL_SWITCH:
        return kl_divergence(P, Q)
    li = _log_I(Q, P, alpha)
    if li == INF:
        return INF
    if li == -INF:
        # disjoint supports on the integration set
        return INF
    return max(li / (alpha * (alpha - 1.0)), 0.0)


def renyi_skew_check(Q, P, alpha: float) -> tuple[float, float]:
    """Both sides of ``R_alpha(Q||P) = R_{1-alpha}(P||Q)``."""
    return renyi_divergence(Q, P, alpha), renyi_divergence(P, Q, 1.0 - alpha)


def worst_case_regret(Q: FiniteDiscrete, P: FiniteDiscrete) -> float:
    """``log ess-sup dQ/dP`` for finite-discrete models."""
    _, q, p = _as_common_discrete(Q, P)
    m = q > 0
    if np.any(p[m] == 0):
        return INF
    return float(np.max(np.log(q[m]) - np.log(p[m])))


# ---------------------------------------------------------------------------
# variational formula on finite spaces
# ---------------------------------------------------------------------------

def _dv_parts(q, p, alpha, g):
    m = q > 0
    a1 = log_sum_exp((alpha - 1) * g[m], q[m])
    n = p > 0
    a2 = log_sum_exp(alpha * g[n], p[n])
    return a1 / (alpha - 1) - a2 / alpha


def renyi_dv_objective(Q: FiniteDiscrete, P: FiniteDiscrete, alpha: float, g) -> float:
    """Variational objective

    ``1/(alpha-1) log E_Q[e^{(alpha-1) g}] - 1/alpha log E_P[e^{alpha g}]``

    for a function ``g`` given by its values on the common support (sorted).
    """
    if not (isinstance(Q, FiniteDiscrete) and isinstance(P, FiniteDiscrete)):
        raise TypeError("the variational objective is implemented for finite-discrete models")
    _, q, p = _as_common_discrete(Q, P)
    g = np.asarray(g, dtype=float)
    if g.shape != q.shape:
        raise ValueError(f"g must have one value per support point ({q.size})")
    return float(_dv_parts(q, p, float(alpha), g))


def _dv_grad(q, p, alpha, g):
    # objective is 1/(a-1) lse_q((a-1)g) - 1/a lse_p(a g); gradient is w - v
    lw = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)) + (alpha - 1) * g, -INF)
    lv = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)) + alpha * g, -INF)
    w = np.exp(lw - special.logsumexp(lw))
    v = np.exp(lv - special.logsumexp(lv))
    return w - v


def renyi_dv_maximize(Q: FiniteDiscrete, P: FiniteDiscrete, alpha: float,
                      n_points: int | None = None, *, init: str = "llr",
                      tol: float = 1e-10, max_iter: int = 20000) -> float:
    """Maximize the variational objective over ``g`` by gradient ascent.

    Uses full-gradient ascent with backtracking line search. The objective is
    invariant to adding a constant to ``g``, so iterates are mean-centred.
    ``init="llr"`` starts from the log-likelihood ratio clipped to
    ``[-30, 30]``; ``init="zero"`` starts from ``g = 0``.

    Parameters
    ----------
    n_points : int, optional
        Maximum support size accepted (default 64).

    Returns
    -------
    float
        The supremum estimate.
    """
    if not (isinstance(Q, FiniteDiscrete) and isinstance(P, FiniteDiscrete)):
        raise TypeError("the variational maximization needs finite-discrete models")
    _, q, p = _as_common_discrete(Q, P)
    limit = 64 if n_points is None else int(n_points)
    if q.size > limit:
        raise ValueError(f"support has {q.size} points, more than the limit {limit}")
    alpha = float(alpha)
    if alpha in (0.0, 1.0):
        raise ValueError("alpha must differ from 0 and 1")
    if init == "llr":
        with np.errstate(divide="ignore"):
            g = np.log(q) - np.log(p)
        g = np.clip(np.nan_to_num(g, nan=0.0, posinf=30.0, neginf=-30.0), -30.0, 30.0)
    elif init == "zero":
        g = np.zeros(q.size)
    else:
        raise ValueError(f"unknown init {init!r}")
    g = g - g.mean()
    f = _dv_parts(q, p, alpha, g)
    step = 1.0
    for _ in range(max_iter):
        d = _dv_grad(q, p, alpha, g)
        d = d - d.mean()
        gn = float(d @ d)
        if gn < 1e-28:
            break
        while True:
            g_new = g + step * d
            f_new = _dv_parts(q, p, alpha, g_new)
            if f_new >= f + 1e-4 * step * gn:
                break
            step *= 0.5
            if step < 1e-20:
                break
        if step < 1e-20:
            break
        improvement = f_new - f
        g, f = g_new - g_new.mean(), f_new
        step = min(step * 2.0, 1e6)
        if improvement < tol and gn < 1e-16:
            break
    return float(f)


# ---------------------------------------------------------------------------
# bootstrap relative-entropy estimate
# ---------------------------------------------------------------------------

def kl_grid(Q: KDE, P: Distribution, grid_size: int = 2048, mass: float = 1e-6) -> float:
    """Trapezoid estimate of ``KL(Q||P)`` on a grid spanning ``1 - mass`` of ``P``.

    ``Q`` is renormalised on the grid so truncation does not bias the estimate.
    """
    lo = float(P.ppf(0.5 * mass))
    hi = float(P.ppf(1.0 - 0.5 * mass))
    x = np.linspace(lo, hi, grid_size)
    lq = np.asarray(Q.logpdf(x), dtype=float)
    lp = np.asarray(P.logpdf(x), dtype=float)
    q = np.exp(lq)
    z = integrate.trapezoid(q, x)
    q = q / z
    lq = lq - math.log(z)
    integrand = np.where(q > 0, q * (lq - lp), 0.0)
    return float(integrate.trapezoid(integrand, x))


def kl_bootstrap_estimate(samples, P: Distribution, n_boot: int = 200, seed: int = 0,
                          *, grid_size: int = 2048,
                          bandwidth_rule: str | float = "silverman") -> tuple[float, float]:
    """Bootstrap estimate of ``KL(Q||P)`` with ``Q`` a KDE of the data.

    Each replicate resamples the data with replacement, fits a Gaussian KDE and
    integrates the relative entropy on a ``grid_size`` grid. Replicate ``i``
    uses its own generator spawned from ``seed``, so results do not depend on
    evaluation order.

    Returns
    -------
    (mean, std) : tuple of float
        Mean and (population) standard deviation over replicates.
    """
    x = np.asarray(samples, dtype=float)
    kde_fit(x, bandwidth_rule)  # validate once up front
    if n_boot < 1:
        raise ValueError("n_boot must be at least 1")
    children = np.random.SeedSequence(seed).spawn(n_boot)
    vals = np.empty(n_boot)
    for i, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        resample = rng.choice(x, size=x.size, replace=True)
        vals[i] = kl_grid(kde_fit(resample, bandwidth_rule), P, grid_size)
    return float(vals.mean()), float(vals.std())
