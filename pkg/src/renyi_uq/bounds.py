"""Risk-sensitive uncertainty-quantification bounds.

Upper bounds on ``log E_Q[tau]`` hold uniformly over an ambiguity set
(either a CGF bound ``Lambda`` on the log-likelihood or an explicit alternative
``Q`` whose Renyi divergences are known). Every bound is a one-dimensional
optimization over an auxiliary exponent ``c``. The optimizer works in an
unbounded reparameterization of each ``c`` branch, scans 64 points and then
refines with bounded Brent search; multimodal scans are flagged in the result.

Extended-real conventions: ``-inf + inf = +inf`` inside upper bounds and
``inf - inf = -inf`` inside lower bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from ._numerics import INF, lower_sub, scan_refine_minimize, scale_ext, upper_add
from .ambiguity import LambdaBound
from .dist import (Distribution, Exponential, FiniteDiscrete, Gamma, Normal, QoI, Reweighted,
                   log_mgf, log_power_moment, moment_c_sup)
from .renyi import renyi_divergence

T_CLAMP = 30.0
C_RTOL = 1e-9
# Smallest |c| for objectives that divide a log-moment by c. Below it the
# rounding error of the moment, amplified by 1/c, can fake a better bound.
C_MIN = 1e-6


def _t_floor(scale: float = 1.0) -> float:
    """Lower ``t`` limit for ``c = scale * exp(t)`` keeping ``|c| >= C_MIN``."""
    return max(-T_CLAMP, math.log(C_MIN / abs(scale)))


def _logit_floor(scale: float = 1.0) -> float:
    """Lower ``t`` limit for ``c = scale * expit(t)`` keeping ``|c| >= C_MIN``."""
    u = min(C_MIN / abs(scale), 0.5)
    return max(-T_CLAMP, math.log(u / (1.0 - u)))


@dataclass
class BoundResult:
    """Optimized bound on ``log E_Q[tau]`` (or on ``+-E_Q[f]`` for Gibbs bounds).

    Attributes
    ----------
    value : float
        Extended-real bound, natural-log units for the risk-sensitive kinds.
    c_star : float
        Optimizing exponent.
    kind : str
        ``upper-lambda``, ``upper-renyi``, ``lower-renyi``, ``gibbs-upper`` or
        ``gibbs-lower``.
    trace : list of (c, objective)
        Every objective evaluation made by the optimizer, sorted by ``c``.
    multimodal : bool
        The coarse scan saw more than one strict local optimum.
    diagnostic : str
        Non-empty when the feasible set was empty or similar.
    """

    value: float
    c_star: float
    kind: str
    trace: list[tuple[float, float]] = field(default_factory=list)
    multimodal: bool = False
    diagnostic: str = ""

    @property
    def exp_value(self) -> float:
        if self.kind.startswith("gibbs"):
            return self.value
        return math.exp(self.value) if self.value < 700 else INF

    def as_dict(self) -> dict:
        return {"value": self.value, "exp_value": self.exp_value, "c_star": self.c_star,
                "kind": self.kind, "multimodal": self.multimodal,
                "diagnostic": self.diagnostic}


def _branch(obj_c: Callable[[float], float], to_c: Callable[[float], float],
            t_lo: float, t_hi: float, maximize: bool, xtol: Callable[[float], float]):
    """Optimize ``obj_c(to_c(t))`` over ``t``; returns (value, c, trace, multimodal)."""
    sign = -1.0 if maximize else 1.0
    cache: dict[float, float] = {}

    def obj_t(t):
        c = to_c(t)
        v = obj_c(c)
        cache[c] = v
        return sign * v if not math.isnan(v) else INF

    res = scan_refine_minimize(obj_t, t_lo, t_hi, xtol=xtol)
    c_star = to_c(res.t)
    return sign * res.value, c_star, sorted(cache.items()), res.multimodal


def _merge(kind: str, parts, maximize: bool) -> BoundResult:
    parts = [p for p in parts if p is not None]
    best = (max if maximize else min)(parts, key=lambda p: p[0])
    trace = sorted(x for p in parts for x in p[2])
    return BoundResult(float(best[0]), float(best[1]), kind, trace,
                       any(p[3] for p in parts))


def _upper_c_search(objective: Callable[[float], float], c_lo: float, c_hi: float,
                    kind: str) -> BoundResult:
    """Minimize over ``c`` in ``(c_lo, c_hi)`` with ``c_lo >= 1`` via ``t = log(c - 1)``."""
    t_lo = max(-T_CLAMP, math.log(c_lo - 1.0)) if c_lo > 1.0 else -T_CLAMP
    t_hi = min(T_CLAMP, math.log(c_hi - 1.0)) if math.isfinite(c_hi) else T_CLAMP
    # open interval: stay a hair inside finite ends
    if c_lo > 1.0:
        t_lo += 1e-12 * max(1.0, abs(t_lo))
    if math.isfinite(c_hi):
        t_hi -= 1e-12 * max(1.0, abs(t_hi))
    if not t_hi > t_lo:
        return BoundResult(INF, math.nan, kind, diagnostic="empty feasible c interval")
    part = _branch(objective, lambda t: 1.0 + math.exp(t), t_lo, t_hi, False,
                   lambda t: C_RTOL * (1.0 + math.exp(-t)))
    return _merge(kind, [part], False)


# ---------------------------------------------------------------------------
# upper bounds
# ---------------------------------------------------------------------------

def _lambda_term(lb: LambdaBound, c: float) -> float:
    """``((c-1)/c) Lambda(1/(c-1))``."""
    lam = 1.0 / (c - 1.0)
    v = lb(lam)
    return scale_ext((c - 1.0) / c, float(v))


def _upper_lambda_from_moments(log_moment: Callable[[float], float], lb: LambdaBound,
                               c_hi: float, exact_one: Callable[[], float]) -> BoundResult:
    kind = "upper-lambda"
    if lb.label == "delta":
        return BoundResult(exact_one(), 1.0, kind, diagnostic="zero ambiguity: no perturbation")
    c_lo = 1.0 + 1.0 / lb.lambda_max if math.isfinite(lb.lambda_max) else 1.0

    def F(c):
        return upper_add(scale_ext(1.0 / c, log_moment(c)), _lambda_term(lb, c))

    return _upper_c_search(F, c_lo, c_hi, kind)


def uq_upper_lambda(P: Distribution, tau: QoI, lb: LambdaBound) -> BoundResult:
    """Worst-case ``log E_Q[tau]`` over the ambiguity set defined by ``lb``.

    Minimizes ``(1/c) log E_P[tau^c] + ((c-1)/c) Lambda(1/(c-1))`` over ``c``
    in ``(max(1, 1 + 1/lambda_max), c_hi)`` with ``c_hi`` the supremum of
    finite moments of ``tau`` under ``P``.

    Examples
    --------
    >>> from renyi_uq.dist import Gamma, QoI
    >>> from renyi_uq.ambiguity import lambda_from_mu, power_law_mu
    >>> res = uq_upper_lambda(Gamma(5.38, 149.0), QoI.power(-1), lambda_from_mu(power_law_mu(0.7)))
    >>> round(res.exp_value, 5)
    0.00194
    """
    return _upper_lambda_from_moments(lambda c: log_power_moment(P, tau, c), lb,
                                      moment_c_sup(P, tau),
                                      lambda: log_power_moment(P, tau, 1.0))


def uq_upper_renyi(P: Distribution, Q: Distribution, tau: QoI) -> BoundResult:
    """``inf_{c>1} (1/c) log E_P[tau^c] + R_{c/(c-1)}(Q||P) / (c-1)``."""

    def F(c):
        m = scale_ext(1.0 / c, log_power_moment(P, tau, c))
        r = renyi_divergence(Q, P, c / (c - 1.0))
        return upper_add(m, scale_ext(1.0 / (c - 1.0), r) if r != 0 else 0.0)

    return _upper_c_search(F, 1.0, moment_c_sup(P, tau), "upper-renyi")


def uq_lower_renyi(P: Distribution, Q: Distribution, tau: QoI) -> BoundResult:
    """``sup_{c<1, c!=0} (1/c) log E_P[tau^c] - R_{1/(1-c)}(P||Q) / (1-c)``.

    The branches ``0 < c < 1`` (``c = expit(t)``) and ``c < 0``
    (``c = -exp(t)``) are searched separately and the larger value is kept.
    """

    def G(c):
        m = scale_ext(1.0 / c, log_power_moment(P, tau, c))
        r = renyi_divergence(P, Q, 1.0 / (1.0 - c))
        return lower_sub(m, scale_ext(1.0 / (1.0 - c), r) if r != 0 else 0.0)

    pos = _branch(G, lambda t: float(special.expit(t)), _logit_floor(), T_CLAMP, True,
                  lambda t: C_RTOL / max(1.0 - float(special.expit(t)), 1e-300))
    neg = _branch(G, lambda t: -math.exp(t), _t_floor(), T_CLAMP, True, lambda t: C_RTOL)
    return _merge("lower-renyi", [pos, neg], True)


# ---------------------------------------------------------------------------
# relative-entropy comparison bound
# ---------------------------------------------------------------------------

def _gibbs_search(cgf: Callable[[float], float], eta: float, kind: str) -> BoundResult:
    def F(c):
        return upper_add(cgf(c), eta) / c

    parts = [_branch(F, math.exp, _t_floor(), T_CLAMP, False, lambda t: C_RTOL)]
    if eta == 0:
        # the infimum is the c -> 0 limit E_P[f]; Richardson removes the O(c) bias
        lim = 2.0 * F(C_MIN / 2.0) - F(C_MIN)
        if math.isfinite(lim):
            parts.append((lim, 0.0, [], False))
    res = _merge(kind, parts, False)
    if not math.isfinite(res.value):
        res.diagnostic = "cumulant generating function is infinite for every c > 0"
    return res


def gibbs_bound(P: Distribution, f: QoI, eta: float, sign: int = +1) -> BoundResult:
    """Relative-entropy bound ``+-E_Q[f] <= inf_{c>0} (Lambda_P^f(+-c) + eta) / c``.

    ``eta`` bounds ``KL(Q||P)``. With ``sign=-1`` the returned value bounds
    ``-E_Q[f]``. Heavy-tailed ``f`` (no finite MGF) gives ``+inf``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return _gibbs_search(lambda c: log_mgf(P, f, sign * c), float(eta),
                         "gibbs-upper" if sign > 0 else "gibbs-lower")


# ---------------------------------------------------------------------------
# rare events
# ---------------------------------------------------------------------------

@dataclass
class RareEventResult:
    """Both bounds on ``log Q(A)`` for an event with baseline probability ``p0``."""

    p0: float
    risk_sensitive: float
    gibbs: float
    crossover: bool
    c_risk: float
    c_gibbs: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _indicator_cgf(p0: float):
    lp, lq = math.log(p0), (math.log1p(-p0) if p0 < 1 else -INF)
    return lambda c: float(np.logaddexp(lq, c + lp))


def rare_event_bounds(p0: float, lb: LambdaBound) -> RareEventResult:
    """Risk-sensitive and relative-entropy bounds on ``log Q(A)`` given ``P(A) = p0``.

    The relative-entropy bound uses ``eta = lb.kl_cap`` and is reported as the
    log of its ``Q(A)`` value so the two are directly comparable. Both are
    capped at ``log 1 = 0``.
    """
    if not 0 < p0 <= 1:
        raise ValueError("p0 must lie in (0, 1]")
    lp = math.log(p0)
    rs = _upper_lambda_from_moments(lambda c: lp, lb, INF, lambda: lp)
    gb = _gibbs_search(_indicator_cgf(p0), lb.eta, "gibbs-upper")
    g_log = math.log(gb.value) if gb.value > 0 else -INF
    # Q(A) <= 1 caps both; once both are trivial neither is tighter
    risk, gibbs = min(rs.value, 0.0), min(g_log, 0.0)
    return RareEventResult(p0, risk, gibbs, risk < gibbs, rs.c_star, gb.c_star)


def rare_event_crossover(lb: LambdaBound, p_grid) -> float:
    """Largest ``p*`` on ``p_grid`` such that the risk-sensitive bound wins for every
    grid ``p0 <= p*``. Returns ``nan`` if it does not win at the smallest ``p0``.
    """
    ps = np.sort(np.asarray(p_grid, dtype=float))
    best = math.nan
    for p in ps:
        if rare_event_bounds(float(p), lb).crossover:
            best = float(p)
        else:
            break
    return best


# ---------------------------------------------------------------------------
# goal-oriented divergences
# ---------------------------------------------------------------------------

def _as_observable(g) -> QoI:
    if isinstance(g, QoI):
        return g
    return QoI.function(g, label="g")


def goal_oriented_xi(Q: Distribution, P: Distribution, g, gamma: float, sign: int) -> float:
    """Goal-oriented Renyi divergence ``Xi_+^gamma`` (sign +1) or ``Xi_-^gamma`` (-1).

    ``Xi_+`` is an infimum over ``beta > gamma`` and ``Xi_-`` a supremum over
    ``beta < gamma`` (``beta != 0`` in both) and they bracket the normalized
    log-MGF difference ``(1/gamma)(log E_Q e^{gamma g} - log E_P e^{gamma g})``.
    """
    gamma = float(gamma)
    if gamma == 0:
        raise ValueError("gamma must be nonzero")
    f = _as_observable(g)
    base = log_mgf(P, f, gamma) / gamma

    if sign > 0:
        def obj(beta):
            r = renyi_divergence(Q, P, beta / (beta - gamma))
            return upper_add(scale_ext(1.0 / beta, log_mgf(P, f, beta)), -base,
                             scale_ext(1.0 / (beta - gamma), r) if r != 0 else 0.0)
        branches = []
        if gamma > 0:
            branches.append((lambda t: gamma + math.exp(t), -T_CLAMP))
        else:
            branches.append((lambda t: gamma * float(special.expit(t)), _logit_floor(gamma)))
            branches.append((math.exp, _t_floor()))
        parts = [_branch(obj, b, lo, T_CLAMP, False, lambda t: C_RTOL) for b, lo in branches]
        return _merge("xi-plus", parts, False).value
    if sign < 0:
        def obj(beta):
            r = renyi_divergence(P, Q, gamma / (gamma - beta))
            m = scale_ext(1.0 / beta, log_mgf(P, f, beta))
            return lower_sub(m - base if math.isfinite(m) else m,
                             scale_ext(1.0 / (gamma - beta), r) if r != 0 else 0.0)
        branches = []
        if gamma < 0:
            branches.append((lambda t: gamma - math.exp(t), -T_CLAMP))
        else:
            branches.append((lambda t: gamma * float(special.expit(t)), _logit_floor(gamma)))
            branches.append((lambda t: -math.exp(t), _t_floor()))
        parts = [_branch(obj, b, lo, T_CLAMP, True, lambda t: C_RTOL) for b, lo in branches]
        return _merge("xi-minus", parts, True).value
    raise ValueError("sign must be +1 or -1")


# ---------------------------------------------------------------------------
# tightness
# ---------------------------------------------------------------------------

def q_gamma_tilt(P: Distribution, tau: QoI, gamma: float) -> Distribution:
    """Power tilt ``dQ_gamma = tau^gamma dP / E_P[tau^gamma]``.

    Conjugate families are returned in closed form: gamma and exponential
    baselines under power observables, normal baselines under exp-linear ones.
    Finite-discrete baselines are tilted exactly; anything else is reweighted
    with a quadrature normalizer.
    """
    gamma = float(gamma)
    if gamma == 0:
        return P
    log_z = log_power_moment(P, tau, gamma)
    if not math.isfinite(log_z):
        raise ValueError(f"E_P[tau^gamma] is not finite and positive (log = {log_z})")
    if isinstance(P, FiniteDiscrete):
        lw = np.array([gamma * tau.log(float(x)) if p > 0 else -INF
                       for x, p in zip(P.points, P.probs)])
        with np.errstate(divide="ignore"):
            lw = lw + np.log(P.probs)
        w = np.exp(lw - special.logsumexp(lw))
        w = w / w.sum()
        return FiniteDiscrete(P.points, w)
    if tau.form == "power":
        s = gamma * tau.params[0]
        if isinstance(P, Gamma):
            return Gamma(P.a + s, P.b)
        if isinstance(P, Exponential):
            return Gamma(1.0 + s, 1.0 / P.rate)
    if tau.form == "exp-linear" and isinstance(P, Normal):
        return Normal(P.mu + gamma * float(tau.params[0]) * P.sigma ** 2, P.sigma)
    return Reweighted(P, lambda x: gamma * tau.log(x), log_z, label="power-tilt")


@dataclass
class TightnessReport:
    """Outcome of a tightness check: the optimized bound against its exact target."""

    case: str
    parameter: float
    bound: float
    target: float
    c_star: float
    c_expected: float
    value_tol: float = 1e-7
    c_tol: float = 1e-4

    @property
    def value_error(self) -> float:
        return abs(self.bound - self.target)

    @property
    def c_error(self) -> float:
        return abs(self.c_star - self.c_expected)

    @property
    def passed(self) -> bool:
        return self.value_error < self.value_tol and self.c_error < self.c_tol

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(value_error=self.value_error, c_error=self.c_error, passed=self.passed)
        return d


def _expectation_log(Q: Distribution, tau: QoI) -> float:
    return log_power_moment(Q, tau, 1.0)


def tightness_check(P: Distribution, tau: QoI, gamma: float) -> TightnessReport:
    """Check that the Renyi bound is attained by the power tilt ``Q_gamma`` at ``c = gamma + 1``.

    ``gamma > 0`` exercises the upper bound, ``gamma in (-1, 0)`` and
    ``gamma < -1`` the lower bound.
    """
    gamma = float(gamma)
    if gamma == 0 or gamma == -1:
        raise ValueError("gamma must differ from 0 and -1")
    Qg = q_gamma_tilt(P, tau, gamma)
    target = _expectation_log(Qg, tau)
    res = uq_upper_renyi(P, Qg, tau) if gamma > 0 else uq_lower_renyi(P, Qg, tau)
    case = "upper" if gamma > 0 else ("lower-(-1,0)" if gamma > -1 else "lower-(<-1)")
    return TightnessReport(case, gamma, res.value, target, res.c_star, gamma + 1.0)


def _ratio_power_qoi(Q: FiniteDiscrete, P: FiniteDiscrete, nu: float, inverse: bool) -> QoI:
    pts = P.points
    if not np.array_equal(pts, Q.points):
        raise ValueError("likelihood-power checks need Q and P on the same support")
    with np.errstate(divide="ignore"):
        lr = np.log(Q.probs) - np.log(P.probs)
    if inverse:
        lr = -lr
    table = dict(zip(pts.tolist(), (nu * lr).tolist()))

    def f(x):
        v = table[float(x)]
        return math.exp(v) if v > -INF else 0.0

    return QoI.function(f, label="likelihood-power")


def likelihood_power_check(Q: FiniteDiscrete, P: FiniteDiscrete, nu: float,
                           kind: str = "phi") -> TightnessReport:
    """Tightness over QoIs that are powers of the likelihood ratio.

    ``kind="phi"``: ``tau = (dQ/dP)^nu`` (``nu > 0``); the upper bound equals
    ``nu (1 + nu) R_{1+nu}(Q||P)`` at ``c = 1 + 1/nu``.
    ``kind="rho"``: ``tau = (dP/dQ)^nu`` (``nu > 0``, ``nu != 1``); the lower
    bound equals ``nu (nu - 1) R_nu(P||Q)`` at ``c = 1 - 1/nu``.
    """
    nu = float(nu)
    if nu <= 0:
        raise ValueError("nu must be positive")
    if kind == "phi":
        tau = _ratio_power_qoi(Q, P, nu, inverse=False)
        target = nu * (1.0 + nu) * renyi_divergence(Q, P, 1.0 + nu)
        res = uq_upper_renyi(P, Q, tau)
        return TightnessReport("phi", nu, res.value, target, res.c_star, 1.0 + 1.0 / nu)
    if kind == "rho":
        if nu == 1:
            raise ValueError("nu = 1 is excluded for rho checks")
        tau = _ratio_power_qoi(Q, P, nu, inverse=True)
        target = nu * (nu - 1.0) * renyi_divergence(P, Q, nu)
        res = uq_lower_renyi(P, Q, tau)
        return TightnessReport("rho", nu, res.value, target, res.c_star, 1.0 - 1.0 / nu)
    raise ValueError("kind must be 'phi' or 'rho'")


# ---------------------------------------------------------------------------
# rate functions
# ---------------------------------------------------------------------------

def renyi_profile_from_lambda(lb: LambdaBound) -> Callable[[float], float]:
    """``h(alpha) = Lambda(alpha - 1) / (alpha (alpha - 1))`` for ``alpha > 1``."""

    def h(alpha: float) -> float:
        if alpha <= 1:
            raise ValueError("the profile is defined for alpha > 1")
        return float(lb(alpha - 1.0)) / (alpha * (alpha - 1.0))

    return h


def bennett_renyi_profile(b: float, eta: float, sigma2: float) -> Callable[[float], float]:
    """Renyi upper profile for ``|log dQ/dP| <= b`` with mean ``eta`` and variance ``sigma2``."""
    from .ambiguity import classical_lambda

    return renyi_profile_from_lambda(
        classical_lambda("bennett", b=b, eta=eta, sigma=math.sqrt(sigma2)))


def gaussian_rate_function(Sigma) -> Callable[[np.ndarray], float]:
    """Cramer rate function ``x' Sigma^{-1} x / 2`` of a centered normal."""
    S = np.atleast_2d(np.asarray(Sigma, dtype=float))
    chol = np.linalg.cholesky(S)

    def I(x):
        z = np.linalg.solve(chol, np.atleast_1d(np.asarray(x, dtype=float)))
        return 0.5 * float(z @ z)

    return I


@dataclass
class RateBounds:
    lower: float
    upper: float
    naive: float
    c_lower: float = math.nan
    c_upper: float = math.nan


def rate_function_bounds(I_P, renyi_profile: Callable[[float], float] | None, x=None, *,
                         reverse_profile: Callable[[float], float] | None = None,
                         log_ratio_bound: float | None = None) -> RateBounds:
    """Bounds on the rate function ``I_Q(x)`` from ``I_P(x)`` and Renyi profiles.

    Parameters
    ----------
    I_P : callable or float
        Baseline rate function (evaluated at ``x``) or its value.
    renyi_profile : callable or None
        ``alpha -> h(alpha) >= R_alpha(Q||P)`` for ``alpha > 1``; gives the lower bound.
    x : array_like, optional
        Evaluation point when ``I_P`` is callable.
    reverse_profile : callable, optional
        ``alpha -> R_alpha(P||Q)`` upper bound for ``alpha > 1``; gives the upper bound.
    log_ratio_bound : float, optional
        ``b`` with ``|log dQ/dP| <= b``; gives the naive bound ``max(I_P - b, 0)``.
    """
    I = float(I_P(x)) if callable(I_P) else float(I_P)
    if I < 0:
        raise ValueError("rate functions are nonnegative")
    lower, c_lo = 0.0, math.nan
    if renyi_profile is not None and I > 0:
        def lo_obj(c):
            r = renyi_profile(c / (c - 1.0))
            return lower_sub(I / c, scale_ext(1.0 / (c - 1.0), r) if r != 0 else 0.0)
        v, c_lo, _, _ = _branch(lo_obj, lambda t: 1.0 + math.exp(t), -T_CLAMP, T_CLAMP, True,
                                lambda t: C_RTOL * (1.0 + math.exp(-t)))
        lower = max(0.0, v)
    upper, c_up = INF, math.nan
    if reverse_profile is not None:
        def up_obj(c):
            r = reverse_profile(1.0 / (1.0 - c))
            return upper_add(I / c, scale_ext(1.0 / (1.0 - c), r) if r != 0 else 0.0)
        upper, c_up, _, _ = _branch(up_obj, lambda t: float(special.expit(t)), -T_CLAMP,
                                    T_CLAMP, False, lambda t: C_RTOL)
    naive = max(I - log_ratio_bound, 0.0) if log_ratio_bound is not None else math.nan
    return RateBounds(lower, upper, naive, c_lo, c_up)
