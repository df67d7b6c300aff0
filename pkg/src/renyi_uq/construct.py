"""Alternative models that saturate a tail-profile ambiguity set.

Given a baseline density ``p`` and a tail profile ``mu``, the model

    q(x) = H_mu(psi(p(x))) p(x),    psi(y) = P(p <= y),

has likelihood ratio distributed (under ``P``) exactly as ``mu``. Its
log-likelihood CGF therefore equals ``Lambda_mu`` and it sits on the boundary
of ``U^mu(P)``. Further members are produced by blending such a model with the
scaled baseline ``r0 p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._numerics import INF, log_integrate
from .ambiguity import (TailMeasure, default_r_grid, level_set_exceedance)
from .dist import (Distribution, Exponential, FiniteDiscrete, Reweighted,
                   UnsupportedShapeError)
from .renyi import _as_common_discrete, kl_divergence


@dataclass(frozen=True)
class ConstructedModel:
    """Saturating alternative ``Q(dx) = phi(p(x)) P(dx)``.

    Attributes
    ----------
    baseline : Distribution
    profile : TailMeasure
    distribution : Distribution
        ``Q`` itself, usable wherever a model is expected.
    log_ratio : callable
        ``x -> log phi(p(x))``.
    """

    baseline: Distribution
    profile: TailMeasure
    distribution: Distribution
    log_ratio: Callable[[float], float] = field(repr=False, compare=False)

    def phi(self, y):
        """Likelihood ratio as a function of the baseline density value ``y``."""
        def one(v):
            if v <= 0:
                return INF
            lpsi = self.baseline.log_psi_level(math.log(v))
            if lpsi == -INF:
                return 0.0
            return math.exp(self.profile.log_G_inv_of_log(min(lpsi, 0.0)))
        if np.ndim(y) == 0:
            return one(float(y))
        return np.array([one(float(v)) for v in np.ravel(y)]).reshape(np.shape(y))

    def ratio(self, x):
        """``dQ/dP`` at ``x``."""
        if np.ndim(x) == 0:
            return math.exp(self.log_ratio(float(x)))
        return np.exp([self.log_ratio(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def density(self, x):
        return self.distribution.pdf(x)


def _discrete_construction(P: FiniteDiscrete, mu: TailMeasure) -> ConstructedModel:
    ratio = np.empty(P.points.size)
    for i, p in enumerate(P.probs):
        lpsi = P.log_psi_level(math.log(p))
        ratio[i] = math.exp(mu.log_G_inv_of_log(min(lpsi, 0.0)))
    q = ratio * P.probs
    mass = q.sum()
    if abs(mass - 1.0) > 1e-12:
        raise ValueError(
            f"profile does not line up with the baseline probabilities (mass {mass:.12g}); "
            "use a step profile whose tail values match cumulative baseline masses")
    q = q / mass
    Q = FiniteDiscrete(P.points, q)
    lr = dict(zip(P.points.tolist(), np.log(ratio).tolist()))
    return ConstructedModel(P, mu, Q, lambda x: lr.get(float(x), -INF))


def construct_saturating(P: Distribution, mu: TailMeasure) -> ConstructedModel:
    """Build the alternative model whose likelihood ratio has law ``mu`` under ``P``.

    Parameters
    ----------
    P : Distribution
        Baseline. Continuous baselines must be unimodal (so that ``psi`` maps
        onto ``(0, 1)``); finite-discrete baselines are supported for step
        profiles aligned with their probabilities.
    mu : TailMeasure
        Profile; for continuous baselines its tail must be continuous and
        strictly decreasing beyond ``r0``.

    Returns
    -------
    ConstructedModel
        An exponential baseline with a power-law profile returns the exact
        exponential law with rate ``r0 * rate``.
    """
    if mu.family == "delta":
        return ConstructedModel(P, mu, P, lambda x: 0.0)
    if isinstance(P, FiniteDiscrete):
        return _discrete_construction(P, mu)
    if not P.unimodal:
        raise UnsupportedShapeError(
            f"{P.kind} baselines lack a level-set solver; psi is unavailable")
    if not P.density_range_ok():
        raise ValueError("psi does not cover (0, 1) for this baseline")
    if not mu.continuous:
        raise ValueError(
            "profile tail has flat parts or atoms; only the continuous, strictly decreasing "
            "case is supported for continuous baselines")

    def log_ratio(x):
        lpsi = P.log_psi_at(x)
        if lpsi == -INF:
            return INF
        return mu.log_G_inv_of_log(min(lpsi, 0.0))

    if isinstance(P, Exponential) and mu.family == "power-law":
        Q = Exponential(mu.r0 * P.rate)
        return ConstructedModel(P, mu, Q, log_ratio)
    Q = Reweighted(P, log_ratio, 0.0, label=f"constructed:{mu.family}", ratio_argmin=P.mode)
    return ConstructedModel(P, mu, Q, log_ratio)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class SaturationReport:
    """Outcome of :func:`verify_saturation`."""

    mass: float
    mass_ok: bool
    g_max_err: float
    g_ok: bool
    lambda_errors: dict
    lambda_ok: bool
    kl: float
    kl_cap: float
    kl_ok: bool

    @property
    def passed(self) -> bool:
        return self.mass_ok and self.g_ok and self.lambda_ok and self.kl_ok

    def as_dict(self) -> dict:
        return {"mass": self.mass, "mass_ok": self.mass_ok, "g_max_err": self.g_max_err,
                "g_ok": self.g_ok,
                "lambda_errors": {str(k): v for k, v in self.lambda_errors.items()},
                "lambda_ok": self.lambda_ok, "kl": self.kl, "kl_cap": self.kl_cap,
                "kl_ok": self.kl_ok, "passed": self.passed}


def _log_moment_ratio(model: ConstructedModel, power: float) -> float:
    """``log int p(x) ratio(x)^power dx`` by quadrature."""
    P = model.baseline
    lr = model.log_ratio

    def f(x):
        lp = P._logpdf(x)
        if lp == -INF:
            return -INF
        v = lr(x)
        if v == INF:
            return INF
        return lp + power * v

    lo, hi = P.support
    return log_integrate(f, lo, hi, center=P.center, scale=P.scale, points=P.breakpoints)


def verify_saturation(model: ConstructedModel, r_grid=None,
                      lambdas=(0.25, 0.5, 1.0, 2.0), *, mass_tol: float = 1e-6,
                      g_tol: float = 1e-6, lambda_tol: float = 1e-5,
                      kl_tol: float = 1e-5) -> SaturationReport:
    """Check that a constructed model saturates its profile.

    Checks (i) total mass one, (ii) ``P(dQ/dP >= r) = G_mu(r)`` on ``r_grid``
    (level-set roots of the ratio combined with baseline CDF values),
    (iii) ``log E_Q[(dQ/dP)^l] = Lambda_mu(l)`` at each ``l`` inside the
    profile's domain and (iv) ``KL(Q||P)`` equals the profile's KL cap.
    """
    P, mu = model.baseline, model.profile
    r = default_r_grid(mu) if r_grid is None else np.asarray(r_grid, dtype=float)

    if isinstance(P, FiniteDiscrete):
        Q = model.distribution
        _, q, p = _as_common_discrete(Q, P)
        mass = float(q.sum())
        m = p > 0
        ratio = q[m] / p[m]
        S = np.array([p[m][ratio >= rr * (1 - 1e-12)].sum() for rr in r])
        g_err = float(np.max(np.abs(S - mu.G(r))))
        lam_err = {}
        for lam in lambdas:
            pos = ratio > 0
            val = float(np.log(np.sum(p[m][pos] * ratio[pos] ** (lam + 1))))
            lam_err[lam] = abs(val - mu.Lambda(lam))
    else:
        lm = _log_moment_ratio(model, 1.0)
        mass = math.exp(lm)
        g = np.asarray(mu.G(r))
        S = np.array([level_set_exceedance(model.log_ratio, P, P.mode, rr) for rr in r])
        g_err = float(np.max(np.abs(S - g)))
        lam_err = {}
        for lam in lambdas:
            if lam >= mu.lambda_max:
                lam_err[lam] = None
                continue
            val = _log_moment_ratio(model, lam + 1.0)
            lam_err[lam] = abs(val - mu.Lambda(lam))
    kl = kl_divergence(model.distribution, P) if mu.family != "delta" else 0.0
    cap = mu.kl_cap
    finite_errs = [e for e in lam_err.values() if e is not None]
    return SaturationReport(
        mass=mass, mass_ok=abs(mass - 1.0) <= mass_tol,
        g_max_err=g_err, g_ok=g_err <= g_tol,
        lambda_errors=lam_err, lambda_ok=all(e <= lambda_tol for e in finite_errs),
        kl=kl, kl_cap=cap, kl_ok=abs(kl - cap) <= kl_tol,
    )


# ---------------------------------------------------------------------------
# sandwich members
# ---------------------------------------------------------------------------

def _blend_weights(a: float, b: float, theta: float) -> tuple[float, float]:
    """Weights ``(theta, s)`` on the two regions giving total mass one.

    ``a = Q0(A) - r0 P(A)`` on ``A = {q0 > r0 p}`` and ``b = r0 P(B) - Q0(B)``
    on ``B = {q0 < r0 p}``; mass one requires ``theta a - s b = a - b``.
    """
    if b <= 0:
        if a <= 1e-15:
            return theta, theta
        return 1.0, 1.0
    s = 1.0 - (1.0 - theta) * a / b
    if s < 0:
        return 1.0 - b / a, 0.0
    return theta, s


def sandwich_weights(P: Distribution, Q0, r0: float, theta: float) -> tuple[float, float]:
    """Effective region weights used by :func:`sandwich_member`."""
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    Q0d = Q0.distribution if isinstance(Q0, ConstructedModel) else Q0
    if isinstance(P, FiniteDiscrete):
        _, q0, p = _as_common_discrete(Q0d, P)
        A = q0 > r0 * p
        B = q0 < r0 * p
        a = float(q0[A].sum() - r0 * p[A].sum())
        b = float(r0 * p[B].sum() - q0[B].sum())
        return _blend_weights(a, b, theta)
    lr0, m = _continuous_ratio(P, Q0)
    PA = level_set_exceedance(lr0, P, m, r0)
    QA = _q_mass_above(P, lr0, m, r0)
    a = QA - r0 * PA
    b = a - (1.0 - r0)
    return _blend_weights(a, max(b, 0.0), theta)


def _continuous_ratio(P, Q0):
    if isinstance(Q0, ConstructedModel):
        return Q0.log_ratio, P.mode
    if isinstance(Q0, Reweighted) and Q0.ratio_argmin is not None and Q0.base == P:
        return (lambda x: Q0.log_ratio(x) - Q0.log_norm), Q0.ratio_argmin
    raise ValueError("continuous sandwich needs Q0 given as a reweighting of P "
                     "with a valley-shaped ratio")


def _q_mass_above(P, lr0, m, r0) -> float:
    """``Q0({dQ0/dP >= r0})`` via its complement interval around ``m``."""
    from .ambiguity import _level_root

    if lr0(m) >= math.log(r0):
        return 1.0
    xl = _level_root(lr0, P, m, math.log(r0), -1)
    xr = _level_root(lr0, P, m, math.log(r0), +1)

    def f(x):
        lp = P._logpdf(x)
        return lp + lr0(x) if lp > -INF else -INF

    inner = log_integrate(f, xl, xr, center=m, scale=P.scale, points=(m,))
    return 1.0 - (math.exp(inner) if inner > -INF else 0.0)


def sandwich_member(P: Distribution, Q0, r0: float, theta: float) -> Distribution:
    """Model whose density lies between ``q0`` and ``r0 p`` pointwise.

    On ``A = {q0 > r0 p}`` the density is ``theta q0 + (1 - theta) r0 p``;
    on ``B = {q0 < r0 p}`` it is ``s q0 + (1 - s) r0 p`` with ``s`` chosen so
    the total mass is one. If no ``s`` in ``[0, 1]`` works for the requested
    ``theta``, ``theta`` is raised to the smallest feasible value (see
    :func:`sandwich_weights`). With ``r0 = 1`` and ``Q0 != P`` this reduces
    to the convex combination ``theta q0 + (1 - theta) p``.
    """
    th, s = sandwich_weights(P, Q0, r0, theta)
    Q0d = Q0.distribution if isinstance(Q0, ConstructedModel) else Q0
    if isinstance(P, FiniteDiscrete):
        pts, q0, p = _as_common_discrete(Q0d, P)
        A = q0 > r0 * p
        B = q0 < r0 * p
        q = np.where(A, th * q0 + (1 - th) * r0 * p,
                     np.where(B, s * q0 + (1 - s) * r0 * p, q0))
        lo, hi = np.minimum(q0, r0 * p), np.maximum(q0, r0 * p)
        if np.any(q < lo - 1e-15) or np.any(q > hi + 1e-15):
            raise ValueError("blend left the envelope")
        if abs(q.sum() - 1) > 1e-9:
            raise ValueError(f"blend has mass {q.sum():.12g}; the pair does not admit it")
        return FiniteDiscrete(pts, q / q.sum())
    lr0, m = _continuous_ratio(P, Q0)
    lr_r0 = math.log(r0)

    def log_ratio(x):
        v = lr0(x)
        w = th if v > lr_r0 else s
        if v == INF:
            return INF if w > 0 else lr_r0
        return float(np.logaddexp(math.log(w) + v if w > 0 else -INF,
                                  math.log1p(-w) + lr_r0 if w < 1 else -INF))

    Q = Reweighted(P, log_ratio, 0.0, label="sandwich", ratio_argmin=m)
    lo, hi = P.support
    mass = log_integrate(Q._logpdf, lo, hi, center=P.center, scale=P.scale, points=(m,))
    if abs(math.exp(mass) - 1.0) > 1e-6:
        raise ValueError(f"blend has mass {math.exp(mass):.9g}; the pair does not admit it")
    return Q


# ---------------------------------------------------------------------------
# step profiles aligned with discrete baselines
# ---------------------------------------------------------------------------

def aligned_step_profile(P: FiniteDiscrete, rng: np.random.Generator,
                         n_blocks: int | None = None) -> TailMeasure:
    """Random step profile whose construction on ``P`` is exact.

    Support points are ordered by probability and cut into contiguous blocks;
    each block gets one ratio value, decreasing from the least to the most
    probable block, normalised so the ratios average to one under ``P``.
    """
    from .ambiguity import step_mu

    p = P.probs
    order = np.argsort(p, kind="stable")
    ps = p[order]
    if np.unique(ps).size != ps.size:
        raise ValueError("aligned step profiles need distinct baseline probabilities")
    n = ps.size
    k = n_blocks if n_blocks is not None else int(rng.integers(2, min(n, 5) + 1))
    k = max(2, min(k, n))
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
    masses = np.array([blk.sum() for blk in np.split(ps, cuts)])
    u = np.sort(rng.uniform(0.05, 3.0, size=k))[::-1]
    u = np.maximum.accumulate(u[::-1])[::-1] + np.arange(k)[::-1] * 1e-3
    v = u / (masses @ u)
    w = masses / masses.sum()
    return step_mu(v, w)
