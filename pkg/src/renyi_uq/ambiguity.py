"""Ambiguity sets described by CGF-dominating functions.

A :class:`LambdaBound` is a function ``Lambda: [0, inf) -> [0, inf]`` with
``Lambda(0) = 0`` that bounds the cumulant generating function of the
log-likelihood ``log dQ/dP`` under ``Q``. The set of all such ``Q`` is the
ambiguity set around a baseline ``P``.

Three sources of ``Lambda`` are provided:

* classical bounded-perturbation families (sub-Gaussian, Bernstein, worst-case
  regret, two Bennett variants, Hoeffding);
* two-sided tail builders (sub-exponential and sub-Gaussian tails);
* tail profiles: a mean-one measure ``mu`` on ``[0, inf)`` describing how fast
  ``P(dQ/dP >= r)`` may decay, with
  ``Lambda_mu(l) = log((l + 1) int_0^inf G_mu(z) z^l dz)`` and
  ``G_mu(r) = mu([r, inf))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from ._numerics import INF, log_integrate, log_sum_exp, scan_refine_minimize
from .dist import Distribution, FiniteDiscrete, Reweighted, edge_root

# ---------------------------------------------------------------------------
# LambdaBound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaBound:
    """CGF-dominating function with its finiteness domain and slope at zero.

    Parameters
    ----------
    func : callable
        Scalar ``lambda -> Lambda(lambda)`` valid on ``[0, lambda_max)``.
    lambda_max : float
        Open right end of the finiteness domain (may be ``inf``).
    kl_cap : float or None
        Right derivative at 0; bounds ``KL(Q||P)`` for every member. ``None``
        computes it numerically (see :func:`kl_cap`).
    label : str
        Family tag.
    """

    func: Callable[[float], float] = field(compare=False)
    lambda_max: float
    kl_cap: float | None
    label: str
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lambda_max > 0:
            raise ValueError("Lambda must be finite on a neighbourhood of 0")
        if self.kl_cap is None:
            object.__setattr__(self, "kl_cap", right_derivative(self.func, self.lambda_max))

    def _eval(self, lam: float) -> float:
        if lam < 0:
            raise ValueError("Lambda is defined for lambda >= 0")
        if lam == 0:
            return 0.0
        if lam >= self.lambda_max:
            return INF
        v = float(self.func(lam))
        return INF if math.isnan(v) else v

    def __call__(self, lam):
        if np.ndim(lam) == 0:
            return self._eval(float(lam))
        arr = np.asarray(lam, dtype=float)
        return np.array([self._eval(float(v)) for v in arr.ravel()]).reshape(arr.shape)

    @property
    def eta(self) -> float:
        return self.kl_cap


def right_derivative(func: Callable[[float], float], lambda_max: float = INF,
                     h: float = 1e-6) -> float:
    """Right derivative at 0 of ``func`` with ``func(0) = 0``.

    One-sided difference quotients at ``h`` and ``h/2`` combined by a
    Richardson step, which cancels the leading curvature error.
    """
    h = min(h, 0.25 * lambda_max)
    f1, f2 = float(func(h)), float(func(h / 2))
    if not (math.isfinite(f1) and math.isfinite(f2)):
        raise ValueError("Lambda is not finite arbitrarily near 0")
    return 2.0 * (f2 / (h / 2)) - f1 / h


def kl_cap(lb: LambdaBound) -> float:
    """KL budget ``eta = Lambda'(0+)`` implied by a CGF bound."""
    return float(lb.kl_cap)


def zero_lambda() -> LambdaBound:
    """``Lambda = 0``: the ambiguity set containing only ``P`` itself."""
    return LambdaBound(lambda lam: 0.0, INF, 0.0, "delta")


# ---------------------------------------------------------------------------
# classical families
# ---------------------------------------------------------------------------

def _require(cond: bool, message: str):
    if not cond:
        raise ValueError(message)


def _bennett_ab(a, b, eta):
    wa = (b - eta) / (b - a)
    wb = (eta - a) / (b - a)
    la, lb = (math.log(wa) if wa > 0 else -INF), (math.log(wb) if wb > 0 else -INF)

    def f(lam):
        return lam * b + float(np.logaddexp(la - lam * (b - a), lb))

    return f


def _bennett(b, eta, sigma):
    d = b - eta
    s2 = sigma ** 2
    la = math.log(d * d / (d * d + s2))
    lb = math.log(s2 / (d * d + s2))
    rate = s2 / d + d

    def f(lam):
        return lam * b + float(np.logaddexp(la - lam * rate, lb))

    return f


def classical_lambda(kind: str, **params) -> LambdaBound:
    """Classical bounded-perturbation CGF bound.

    Kinds and parameters:

    ``sub_gaussian(eta, sigma)``
        ``eta l + sigma^2 l^2 / 2``.
    ``hoeffding(a, b, eta)``
        sub-Gaussian with ``sigma = (b - a) / 2``.
    ``bernstein(eta, sigma, M)``
        ``eta l + (sigma^2 / 2) l^2 / (1 - M l)`` for ``l < 1/M``.
    ``wcr(b)``
        ``b l``.
    ``bennett_ab(a, b, eta)``
        CGF of the two-point law on ``{a, b}`` with mean ``eta``.
    ``bennett(b, eta, sigma)``
        CGF of the two-point law with mean ``eta``, variance ``sigma^2`` and
        top atom at ``b``.
    """
    kind = kind.replace("-", "_").lower()
    p = {k: float(v) for k, v in params.items()}
    try:
        if kind == "sub_gaussian":
            eta, sigma = p["eta"], p["sigma"]
            _require(sigma >= 0, "sub_gaussian needs sigma >= 0")
            _require(eta >= 0, "sub_gaussian needs eta >= 0")
            return LambdaBound(lambda l: eta * l + 0.5 * sigma ** 2 * l * l, INF, eta,
                               "sub_gaussian", p)
        if kind == "hoeffding":
            a, b, eta = p["a"], p["b"], p["eta"]
            _require(a < b, "hoeffding needs a < b")
            _require(0 <= eta <= b, "hoeffding needs 0 <= eta <= b")
            s = 0.5 * (b - a)
            return LambdaBound(lambda l: eta * l + 0.5 * s * s * l * l, INF, eta, "hoeffding", p)
        if kind == "bernstein":
            eta, sigma, M = p["eta"], p["sigma"], p["M"]
            _require(M > 0, "bernstein needs M > 0")
            _require(sigma >= 0, "bernstein needs sigma >= 0")
            _require(eta >= 0, "bernstein needs eta >= 0")
            return LambdaBound(lambda l: eta * l + 0.5 * sigma ** 2 * l * l / (1 - M * l),
                               1.0 / M, eta, "bernstein", p)
        if kind == "wcr":
            b = p["b"]
            _require(b >= 0, "wcr needs b >= 0")
            return LambdaBound(lambda l: b * l, INF, b, "wcr", p)
        if kind == "bennett_ab":
            a, b, eta = p["a"], p["b"], p["eta"]
            _require(a < b, "bennett_ab needs a < b")
            _require(a <= eta <= b, "bennett_ab needs a <= eta <= b")
            _require(eta >= 0, "bennett_ab needs eta >= 0")
            return LambdaBound(_bennett_ab(a, b, eta), INF, eta, "bennett_ab", p)
        if kind == "bennett":
            b, eta, sigma = p["b"], p["eta"], p["sigma"]
            _require(sigma > 0, "bennett needs sigma > 0")
            _require(eta < b, "bennett needs eta < b")
            _require(eta >= 0, "bennett needs eta >= 0")
            return LambdaBound(_bennett(b, eta, sigma), INF, eta, "bennett", p)
    except KeyError as e:
        raise ValueError(f"{kind} is missing parameter {e.args[0]}") from None
    raise ValueError(f"unknown classical family {kind!r}")


def two_sided_tail_lambda(kind: str, **params) -> LambdaBound:
    """CGF bounds from two-sided tail bounds on ``log dQ/dP - KL(Q||P)``.

    ``sub_exponential_tail(C, beta, KL, loose=False)``
        ``KL l + log(1 + C (l/beta)^2 / (1 - l/beta))`` for ``l < beta``; with
        ``loose=True`` the logarithm is dropped (weaker, classical form).
    ``sub_gaussian_tail(KL, c=..., | tau=..., c_mult=..., | a=...)``
        ``KL l + beta^2 l^2`` with ``beta = 3/sqrt(2c)`` for tail ``2 exp(-c r^2)``,
        ``beta = c_mult * tau`` for a Gaussian-comparison tail, or
        ``beta = sqrt(3/(2a))`` for an exponential-square moment condition.
    """
    kind = kind.replace("-", "_").lower()
    if kind == "sub_exponential_tail":
        C, beta, kl = float(params["C"]), float(params["beta"]), float(params["KL"])
        loose = bool(params.get("loose", False))
        _require(C > 0, "sub_exponential_tail needs C > 0")
        _require(beta > 0, "sub_exponential_tail needs beta > 0")
        _require(kl >= 0, "sub_exponential_tail needs KL >= 0")

        def f(l):
            x = C * (l / beta) ** 2 / (1 - l / beta)
            return kl * l + (x if loose else math.log1p(x))

        return LambdaBound(f, beta, kl, "sub_exponential_tail",
                           {"C": C, "beta": beta, "KL": kl, "loose": loose})
    if kind == "sub_gaussian_tail":
        kl = float(params["KL"])
        _require(kl >= 0, "sub_gaussian_tail needs KL >= 0")
        if "c" in params:
            c = float(params["c"])
            _require(c > 0, "sub_gaussian_tail needs c > 0")
            beta = 3.0 / math.sqrt(2.0 * c)
        elif "tau" in params:
            tau, cm = float(params["tau"]), float(params.get("c_mult", 1.0))
            _require(tau > 0 and cm >= 1, "sub_gaussian_tail needs tau > 0 and c_mult >= 1")
            beta = cm * tau
        elif "a" in params:
            a = float(params["a"])
            _require(a > 0, "sub_gaussian_tail needs a > 0")
            beta = math.sqrt(3.0 / (2.0 * a))
        else:
            raise ValueError("sub_gaussian_tail needs one of c, tau or a")
        return LambdaBound(lambda l: kl * l + beta * beta * l * l, INF, kl,
                           "sub_gaussian_tail", {"KL": kl, "beta": beta})
    raise ValueError(f"unknown two-sided tail family {kind!r}")


# ---------------------------------------------------------------------------
# inverse complementary error function in log space
# ---------------------------------------------------------------------------

def _log_erfc(x: float) -> float:
    return math.log(2.0) + float(special.log_ndtr(-math.sqrt(2.0) * x))


def erfcinv_log(logy: float) -> float:
    """Solve ``log erfc(x) = logy`` for ``x`` (``logy <= log 2``).

    Seeded by ``scipy.special.erfcinv`` (or the large-argument asymptote when
    ``exp(logy)`` underflows) and polished by Newton steps on ``log erfc``.
    """
    if logy >= math.log(2.0):
        return -INF
    if logy == -INF:
        return INF
    if logy > -700:
        x = float(special.erfcinv(math.exp(logy)))
    else:
        L = -logy
        x = math.sqrt(max(L - 0.5 * math.log(math.pi * L), 1.0))
    for _ in range(50):
        lf = _log_erfc(x)
        # d/dx log erfc(x) = -2/sqrt(pi) exp(-x^2 - log erfc(x))
        d = -2.0 / math.sqrt(math.pi) * math.exp(-x * x - lf)
        step = (lf - logy) / d
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


# ---------------------------------------------------------------------------
# tail profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailMeasure:
    """Mean-one measure ``mu`` on ``[0, inf)`` given by its tail function.

    Attributes
    ----------
    family : str
        ``"power-law"``, ``"sub-exp"``, ``"gaussian"``, ``"delta"`` or ``"step"``.
    params : dict
        Family parameters.
    r0 : float
        Plateau end: ``G = 1`` on ``[0, r0]``.
    lambda_max : float
        Open end of the domain where ``Lambda_mu`` is finite.
    """

    family: str
    params: dict
    r0: float
    lambda_max: float
    _log_G: Callable[[float], float] = field(repr=False, compare=False)
    _log_H_of_log: Callable[[float], float] = field(repr=False, compare=False)
    _Lambda: Callable[[float], float] | None = field(default=None, repr=False, compare=False)
    _kl_cap: float | None = field(default=None, repr=False)
    continuous: bool = True

    def log_G(self, r: float) -> float:
        if r <= self.r0:
            return 0.0
        return self._log_G(r)

    def G(self, r):
        """``mu([r, inf))``."""
        if np.ndim(r) == 0:
            v = self.log_G(float(r))
            return math.exp(v) if v > -INF else 0.0
        arr = np.asarray(r, dtype=float)
        return np.array([self.G(float(v)) for v in arr.ravel()]).reshape(arr.shape)

    def log_G_inv_of_log(self, logy: float) -> float:
        """``log H_mu(exp(logy))`` for ``logy <= 0``; ``+inf`` at ``logy = -inf``."""
        if logy > 0:
            raise ValueError("H_mu is defined on (0, 1]")
        if logy == -INF:
            return INF
        return self._log_H_of_log(logy)

    def G_inv(self, y):
        """Generalized inverse ``H_mu(y) = sup{r : G_mu(r) >= y}`` on ``(0, 1]``."""
        if np.ndim(y) == 0:
            y = float(y)
            if y <= 0:
                return INF
            v = self.log_G_inv_of_log(math.log(y))
            return math.exp(v) if v > -INF else 0.0
        arr = np.asarray(y, dtype=float)
        return np.array([self.G_inv(float(v)) for v in arr.ravel()]).reshape(arr.shape)

    # -- integrals of G ------------------------------------------------------
    def _tail_scale(self) -> float:
        return max(1.0 - self.r0, 1e-3)

    def Lambda(self, lam: float) -> float:
        """``Lambda_mu(lam)``; ``+inf`` outside the finiteness domain."""
        if lam == 0:
            return 0.0
        if lam >= self.lambda_max:
            return INF
        if self._Lambda is not None:
            return self._Lambda(lam)
        # integrate over u = log z, centred on the peak of the integrand
        u0 = math.log(self.r0) if self.r0 > 0 else -INF

        def fu(u):
            z = math.exp(u)
            return self._log_G(z) + (lam + 1.0) * u if z > self.r0 else -INF

        u_pk, width = _log_peak(fu, u0, math.log(self.r0 + self._tail_scale()))
        if lam > LAPLACE_LAMBDA:
            # the peak value is so large that rounding noise defeats quadrature
            lt = fu(u_pk) + 0.5 * math.log(2.0 * math.pi) + math.log(width)
        else:
            lt = log_integrate(fu, u0, INF, center=u_pk, scale=width)
        head = (lam + 1) * math.log(self.r0) if self.r0 > 0 else -INF
        return float(np.logaddexp(head, math.log(lam + 1) + lt))

    @property
    def kl_cap(self) -> float:
        """``1 + int_0^inf G(z) log z dz``, the slope of ``Lambda_mu`` at 0."""
        if self._kl_cap is not None:
            return self._kl_cap
        r0 = self.r0
        head = 1.0 + (r0 * math.log(r0) - r0 if r0 > 0 else 0.0)

        sc = self._tail_scale()
        # split at z = 1 where log z changes sign; each part in log space
        pos = log_integrate(
            lambda z: self._log_G(z) + math.log(math.log(z)) if z > 1 else -INF,
            max(r0, 1.0), INF, center=max(r0, 1.0) + sc, scale=sc)
        neg = -INF
        if r0 < 1.0:
            neg = log_integrate(
                lambda z: self._log_G(z) + math.log(-math.log(z)) if 0 < z < 1 else -INF,
                r0, 1.0, center=r0 + 0.5 * (1 - r0), scale=sc)
        tail = (math.exp(pos) if pos > -INF else 0.0) - (math.exp(neg) if neg > -INF else 0.0)
        return head + tail


# above this order Lambda_mu is evaluated by Laplace's method
LAPLACE_LAMBDA = 1e8


def _log_peak(f: Callable[[float], float], lo: float, start: float) -> tuple[float, float]:
    """Location and curvature width of the maximum of a unimodal log-integrand on ``(lo, inf)``."""
    step = 1.0
    a, b = start, start + step
    while f(b) > f(a) and b < 1e4:
        a, b = b, b + step
        step *= 2.0
    left = max(a - step, lo + 1e-12) if math.isfinite(lo) else a - step
    res = optimize.minimize_scalar(lambda u: -f(u), bounds=(left, b), method="bounded",
                                   options={"xatol": 1e-10})
    u = float(res.x)
    width = 1.0
    h = 1e-4 * max(1.0, abs(u))
    for _ in range(3):
        curv = -(f(u + h) - 2 * f(u) + f(u - h)) / (h * h)
        if not (curv > 0 and math.isfinite(curv)):
            break
        width = min(1.0 / math.sqrt(curv), 1.0)
        h = max(0.1 * width, 1e-7 * max(1.0, abs(u)))
    return u, width


def power_law_mu(r0: float) -> TailMeasure:
    """Pareto-type profile ``G(r) = (r/r0)^(-1/(1-r0))`` for ``r > r0``."""
    if not 0 < r0 < 1:
        raise ValueError("power-law profile needs 0 < r0 < 1")
    p = 1.0 / (1.0 - r0)
    lr0 = math.log(r0)
    L = r0 / (1.0 - r0)

    def lam_fn(lam):
        return lam * lr0 + math.log1p(lam / (L - lam))

    return TailMeasure(
        "power-law", {"r0": r0}, r0, L,
        _log_G=lambda r: -p * (math.log(r) - lr0),
        _log_H_of_log=lambda ly: lr0 - (1.0 - r0) * ly,
        _Lambda=lam_fn,
        _kl_cap=lr0 + 1.0 / r0 - 1.0,
    )


def sub_exp_mu(r0: float, kappa: float) -> TailMeasure:
    """Shifted-Weibull profile ``G(r) = exp(-eta (r - r0)^kappa)`` for ``r > r0``.

    ``eta = (Gamma(1 + 1/kappa) / (1 - r0))^kappa`` makes the mean one.
    """
    if not 0 <= r0 < 1:
        raise ValueError("sub-exp profile needs 0 <= r0 < 1")
    if not kappa > 0:
        raise ValueError("sub-exp profile needs kappa > 0")
    eta = (math.gamma(1.0 + 1.0 / kappa) / (1.0 - r0)) ** kappa

    def log_G(r):
        return -eta * (r - r0) ** kappa

    def log_H(ly):
        return math.log(r0 + (-ly / eta) ** (1.0 / kappa)) if (r0 > 0 or ly < 0) else -INF

    return TailMeasure("sub-exp", {"r0": r0, "kappa": kappa, "eta": eta}, r0, INF,
                       _log_G=log_G, _log_H_of_log=log_H)


def gaussian_mu(r0: float) -> TailMeasure:
    """Log-normal-type profile ``G(r) = erfc(sqrt(log(r/r0) / (1 - r0^2)))``."""
    if not 0 < r0 < 1:
        raise ValueError("gaussian profile needs 0 < r0 < 1")
    lr0 = math.log(r0)
    s = 1.0 - r0 * r0
    k = 1.0 / (r0 ** -2 - 1.0)

    def log_G(r):
        return _log_erfc(math.sqrt(max(math.log(r) - lr0, 0.0) / s))

    def log_H(ly):
        if ly >= 0:
            return lr0
        x = erfcinv_log(ly)
        return lr0 + s * x * x

    return TailMeasure(
        "gaussian", {"r0": r0}, r0, k,
        _log_G=log_G, _log_H_of_log=log_H,
        _Lambda=lambda lam: lam * lr0 - 0.5 * math.log1p(-lam / k),
        _kl_cap=lr0 + 0.5 * (r0 ** -2 - 1.0),
    )


def point_mass_mu() -> TailMeasure:
    """``mu = delta_1``: no perturbation, ``Lambda = 0``."""
    return TailMeasure("delta", {}, 1.0, INF,
                       _log_G=lambda r: -INF, _log_H_of_log=lambda ly: 0.0,
                       _Lambda=lambda lam: 0.0, _kl_cap=0.0, continuous=False)


def step_mu(values, weights) -> TailMeasure:
    """Discrete profile ``mu = sum_j w_j delta_{v_j}`` with mean one.

    Its tail function is a step function, so the construction uses the
    generalized inverse ``H(rho) = max{v_j : G(v_j) >= rho}``.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1 or v.size == 0:
        raise ValueError("values and weights must be 1-D of equal length")
    if np.any(v < 0) or np.any(w <= 0):
        raise ValueError("step profile needs v >= 0 and w > 0")
    if abs(w.sum() - 1) > 1e-12 or abs(w @ v - 1) > 1e-10:
        raise ValueError("step profile must be a probability measure with mean 1")
    order = np.argsort(v)
    v, w = v[order], w[order]
    tail = np.cumsum(w[::-1])[::-1]  # tail[j] = G(v_j)
    r0 = float(v[0])

    def log_G(r):
        i = int(np.searchsorted(v, r, side="left"))
        return math.log(tail[i]) if i < v.size else -INF

    def log_H(ly):
        y = math.exp(ly)
        ok = np.nonzero(tail >= y * (1 - 1e-12))[0]
        vv = v[ok[-1]]
        return math.log(vv) if vv > 0 else -INF

    def lam_fn(lam):
        m = v > 0
        return log_sum_exp((lam + 1) * np.log(v[m]), w[m])

    m = v > 0
    kl = float(np.sum(w[m] * v[m] * np.log(v[m])))
    return TailMeasure("step", {"values": v.tolist(), "weights": w.tolist()}, r0, INF,
                       _log_G=log_G, _log_H_of_log=log_H, _Lambda=lam_fn, _kl_cap=kl,
                       continuous=False)


def lambda_from_mu(mu: TailMeasure) -> LambdaBound:
    """``Lambda_mu`` as a :class:`LambdaBound` (closed form or quadrature)."""
    probe = mu.Lambda(min(1e-3, 0.5 * mu.lambda_max))
    if not math.isfinite(probe):
        raise ValueError("int G(z) z^lambda dz diverges near lambda = 0; no valid ambiguity set")
    return LambdaBound(mu.Lambda, mu.lambda_max, mu.kl_cap, mu.family, dict(mu.params))


_PROFILES = {
    "power-law": lambda r0, kw: power_law_mu(r0),
    "gaussian": lambda r0, kw: gaussian_mu(r0),
    "sub-exp": lambda r0, kw: sub_exp_mu(r0, kw.get("kappa", 1.0)),
}


def make_profile(family: str, r0: float, **kw) -> TailMeasure:
    try:
        return _PROFILES[family](r0, kw)
    except KeyError:
        raise ValueError(f"unknown profile family {family!r}") from None


def solve_r0_for_kl(family: str, eta: float, *, kappa: float = 1.0,
                    tol: float = 1e-10) -> float:
    """Plateau end ``r0`` whose profile has KL cap ``eta``.

    The cap decreases monotonically in ``r0`` and vanishes as ``r0 -> 1``, so
    the root is found by bisection (``scipy.optimize.brentq``).
    """
    if family not in _PROFILES:
        raise ValueError(f"unknown profile family {family!r}")
    lo = 0.0 if family == "sub-exp" else 1e-12
    hi = 1.0 - 1e-9

    def cap(r0):
        return make_profile(family, r0, kappa=kappa).kl_cap

    cap_lo, cap_hi = cap(lo), cap(hi)
    if not (cap_hi < eta < cap_lo):
        raise ValueError(f"eta={eta} is outside the achievable range ({cap_hi:.3g}, {cap_lo:.6g})")
    return optimize.brentq(lambda r: cap(r) - eta, lo, hi, xtol=tol * 1e-4, rtol=1e-15,
                           maxiter=500)


# ---------------------------------------------------------------------------
# tail bounds and inclusion
# ---------------------------------------------------------------------------

def chernoff_tail(lb: LambdaBound, r: float) -> float:
    """Chernoff bound ``exp(-sup_{l>0} ((l + 1) r - Lambda(l)))`` on ``P(dQ/dP >= r)``."""
    t_hi = math.log(lb.lambda_max) - 1e-12 if math.isfinite(lb.lambda_max) else 30.0

    def neg(t):
        lam = math.exp(t)
        v = lb(lam)
        return INF if math.isinf(v) else -((lam + 1) * r - v)

    res = scan_refine_minimize(neg, -30.0, t_hi, n_scan=128,
                               xtol=lambda m: 1e-12 * max(1.0, abs(m)))
    best = max(-res.value, r)
    if math.isfinite(lb.lambda_max):
        best = max(best, -neg(t_hi))
    return math.exp(-best) if best < 745 else 0.0


def _inclusion_grid(mu1: TailMeasure, mu2: TailMeasure, n: int = 512) -> np.ndarray:
    r_lo = 1e-4 * max(min(mu1.r0, mu2.r0), 1e-6)
    r_hi = max(r for r in (_G_below(mu1, 1e-10), _G_below(mu2, 1e-10)))
    return np.geomspace(r_lo, r_hi, n)


def _G_below(mu: TailMeasure, level: float) -> float:
    h = mu.G_inv(level)
    return max(h * 1.0001, mu.r0 * 1.0001 + 1e-9) if math.isfinite(h) else 1e6


def inclusion_check(mu1: TailMeasure, mu2: TailMeasure, grid: np.ndarray | None = None) -> str:
    """Grid test of sufficient conditions for ``U^mu1(P) subset U^mu2(P)``.

    Returns ``"included"`` if either the single-crossing condition
    (``G1 >= G2`` then ``G1 <= G2``) or the integrated condition
    (``int_0^r G2 <= int_0^r G1`` for all ``r``) holds on the grid, otherwise
    ``"inconclusive"``. The conditions are sufficient only, so "not included"
    is never reported.
    """
    r = _inclusion_grid(mu1, mu2) if grid is None else np.asarray(grid, dtype=float)
    g1 = np.asarray(mu1.G(r))
    g2 = np.asarray(mu2.G(r))
    d = g1 - g2
    tol = 1e-12
    # single crossing: once d < -tol, it never returns above +tol
    neg = np.nonzero(d < -tol)[0]
    single = True
    if neg.size:
        single = not np.any(d[neg[0]:] > tol)
    if single:
        return "included"
    # integrated criterion by cumulative trapezoid from 0
    rr = np.concatenate([[0.0], r])
    c1 = np.concatenate([[0.0], np.cumsum(0.5 * (np.r_[1.0, g1][1:] + np.r_[1.0, g1][:-1]) * np.diff(rr))])
    c2 = np.concatenate([[0.0], np.cumsum(0.5 * (np.r_[1.0, g2][1:] + np.r_[1.0, g2][:-1]) * np.diff(rr))])
    if np.all(c2 <= c1 + 1e-10):
        return "included"
    return "inconclusive"


# ---------------------------------------------------------------------------
# membership
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Exceedance:
    """Estimated ``P(dQ/dP >= r)`` on a grid with its uncertainty."""

    r: np.ndarray
    value: np.ndarray
    tol: np.ndarray
    method: str


def _discrete_ratio(Q: FiniteDiscrete, P: FiniteDiscrete):
    from .renyi import _as_common_discrete

    _, q, p = _as_common_discrete(Q, P)
    if np.any((q > 0) & (p == 0)):
        raise ValueError("Q is not absolutely continuous with respect to P")
    m = p > 0
    return q[m] / p[m], p[m]


def _level_root(log_ratio, P: Distribution, m: float, log_r: float, side: int) -> float:
    """Outermost point on ``side`` of ``m`` with ``log_ratio >= log_r`` beyond it."""
    lo, hi = P.support
    edge = lo if side < 0 else hi
    h = lambda z: log_ratio(z) - log_r  # noqa: E731
    if math.isfinite(edge):
        if m == edge:
            return edge
        return edge_root(lambda z: -h(z), edge, m, side)
    else:
        step = P.scale
        far = m + side * step
        while h(far) < 0:
            step *= 2.0
            far = m + side * step
            tail = P._logcdf(far) if side < 0 else P._logsf(far)
            if tail < -745 or abs(far) > 1e300:
                return edge
    a, b = (far, m) if side < 0 else (m, far)
    return optimize.brentq(h, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def level_set_exceedance(log_ratio: Callable[[float], float], P: Distribution,
                         argmin: float, r: float) -> float:
    """``P(ratio >= r)`` for a ratio non-increasing left of ``argmin`` and
    non-decreasing right of it."""
    if r <= 0:
        return 1.0
    lr = math.log(r)
    if log_ratio(argmin) >= lr:
        return 1.0
    xl = _level_root(log_ratio, P, argmin, lr, -1)
    xr = _level_root(log_ratio, P, argmin, lr, +1)
    left = math.exp(P._logcdf(xl)) if xl > P.support[0] else 0.0
    right = math.exp(P._logsf(xr)) if xr < P.support[1] else 0.0
    return left + right


def exceedance(Q, P, r_grid, *, n_mc: int = 100_000, seed: int = 0) -> Exceedance:
    """Estimate ``P(dQ/dP >= r)`` on ``r_grid``.

    Exact for finite-discrete pairs, level-set quadrature for valley-shaped
    ratios (reweighted models with a known ratio minimizer), Monte Carlo under
    ``P`` otherwise (with three standard errors as tolerance).
    """
    r = np.asarray(r_grid, dtype=float)
    if isinstance(Q, FiniteDiscrete) and isinstance(P, FiniteDiscrete):
        ratio, p = _discrete_ratio(Q, P)
        vals = np.array([p[ratio >= rr * (1 - 1e-12)].sum() for rr in r])
        return Exceedance(r, vals, np.full(r.size, 1e-12), "exact")
    if isinstance(Q, Reweighted) and Q.ratio_argmin is not None and Q.base == P:
        lr = lambda x: Q.log_ratio(x) - Q.log_norm  # noqa: E731
        vals = np.array([level_set_exceedance(lr, P, Q.ratio_argmin, rr) for rr in r])
        return Exceedance(r, vals, np.full(r.size, 1e-7), "level-set")
    rng = np.random.default_rng(seed)
    x = P.sample(n_mc, rng)
    lq = np.asarray(Q.logpdf(x), dtype=float)
    lp = np.asarray(P.logpdf(x), dtype=float)
    ratio = np.exp(lq - lp)
    vals = np.array([np.mean(ratio >= rr) for rr in r])
    se = np.sqrt(vals * (1 - vals) / n_mc)
    return Exceedance(r, vals, 3 * se + 1.0 / n_mc, "monte-carlo")


def default_r_grid(mu: TailMeasure, n: int = 64) -> np.ndarray:
    hi = _G_below(mu, 1e-8)
    lo = max(1e-4 * mu.r0, 1e-6) if mu.r0 > 0 else 1e-6
    return np.geomspace(lo, hi, n)


def membership_check(Q, P, mu: TailMeasure, r_grid=None, *, n_mc: int = 100_000,
                     seed: int = 0) -> str:
    """Check the single-crossing sufficient condition for ``Q`` in ``U^mu(P)``.

    ``P(dQ/dP >= r) >= G_mu(r)`` must hold up to some ``r*`` and
    ``P(dQ/dP >= r) <= G_mu(r)`` beyond it, at every grid point with a margin
    covering the estimator tolerance. Returns ``"member"`` or ``"unresolved"``.
    """
    r = default_r_grid(mu) if r_grid is None else np.asarray(r_grid, dtype=float)
    ex = exceedance(Q, P, r, n_mc=n_mc, seed=seed)
    g = np.asarray(mu.G(r))
    d = ex.value - g
    below = np.nonzero(d < -ex.tol)[0]
    if below.size == 0:
        return "member"
    k = below[0]
    return "member" if not np.any(d[k:] > ex.tol[k:]) else "unresolved"
