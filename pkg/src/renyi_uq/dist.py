"""Probability models, observables and density-level helpers.

The distributions here are small immutable value objects with scalar-fast
log-density, CDF and quantile routines. They expose the two extra pieces of
structure the rest of the package relies on:

* ``log_psi_at(x)``: ``log P(p <= p(x))``, the baseline mass of the density
  sub-level set through ``x``.
* hints (``center``, ``scale``, ``breakpoints``) that guide quadrature.

Power moments ``log E_P[tau^c]`` of an observable are computed by
:func:`log_power_moment`, in closed form where one exists.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize, special

from ._numerics import INF, log_integrate, log_sum_exp

LOG_2PI = math.log(2.0 * math.pi)


class UnsupportedShapeError(ValueError):
    """The density shape is not covered by the level-set solvers."""


def _vectorize(fn: Callable[[float], float], x):
    if np.ndim(x) == 0:
        return fn(float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)


def _log_diff_exp(a: float, b: float) -> float:
    """``log(exp(a) - exp(b))`` for ``a >= b``."""
    if b == -INF:
        return a
    if b >= a:
        return -INF
    return a + math.log(-math.expm1(b - a))


# ---------------------------------------------------------------------------
# base class
# ---------------------------------------------------------------------------

class Distribution:
    """Interface shared by every probability model.

    Subclasses implement the scalar primitives ``_logpdf``, ``_logcdf`` and
    ``_logsf`` and the attributes ``support``, ``mode``, ``center`` and
    ``scale``. Array inputs are handled by the public wrappers.
    """

    kind: str = "abstract"
    discrete: bool = False
    unimodal: bool = True

    # -- scalar primitives -------------------------------------------------
    def _logpdf(self, x: float) -> float:
        raise NotImplementedError

    def _logcdf(self, x: float) -> float:
        lo, _ = self.support
        if x <= lo:
            return -INF
        return log_integrate(self._logpdf, lo, x, center=min(self.center, x),
                             scale=self.scale, points=self._points_below(x))

    def _logsf(self, x: float) -> float:
        _, hi = self.support
        if x >= hi:
            return -INF
        return log_integrate(self._logpdf, x, hi, center=max(self.center, x),
                             scale=self.scale, points=self._points_above(x))

    def _ppf(self, u: float) -> float:
        if u <= 0.0:
            return self.support[0]
        if u >= 1.0:
            return self.support[1]
        lo, hi = self.support
        a = self.center - self.scale
        b = self.center + self.scale
        step = self.scale
        while self.cdf(a) > u:
            step *= 2.0
            a = max(self.center - step, lo) if math.isfinite(lo) else self.center - step
            if a == lo:
                break
        step = self.scale
        while self.cdf(b) < u:
            step *= 2.0
            b = min(self.center + step, hi) if math.isfinite(hi) else self.center + step
            if b == hi:
                break
        return optimize.brentq(lambda z: self.cdf(z) - u, a, b, xtol=1e-13, rtol=1e-13)

    # -- public API --------------------------------------------------------
    support: tuple[float, float]
    mode: float
    center: float
    scale: float

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.mode,)

    def _points_below(self, x):
        return tuple(p for p in self.breakpoints if p < x)

    def _points_above(self, x):
        return tuple(p for p in self.breakpoints if p > x)

    def logpdf(self, x):
        """Log-density, ``-inf`` off the support."""
        return _vectorize(self._logpdf, x)

    def pdf(self, x):
        """Density."""
        return np.exp(self.logpdf(x))

    def logcdf(self, x):
        return _vectorize(self._logcdf, x)

    def logsf(self, x):
        return _vectorize(self._logsf, x)

    def cdf(self, x):
        return np.exp(self.logcdf(x))

    def sf(self, x):
        return np.exp(self.logsf(x))

    def ppf(self, u):
        return _vectorize(self._ppf, u)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` samples by inverse-CDF unless a subclass does better."""
        return np.asarray(self.ppf(rng.random(n)), dtype=float)

    @property
    def max_logpdf(self) -> float:
        return self._logpdf(self.mode)

    # -- density level sets ------------------------------------------------
    def _partner(self, logy: float, side: int) -> float:
        """Point on ``side`` (-1 left, +1 right) of the mode where log p = logy.

        Returns the support edge on that side if the density never drops to
        ``exp(logy)`` there.
        """
        m = self.mode
        edge = self.support[0] if side < 0 else self.support[1]
        if m == edge:
            return edge
        h = lambda z: self._logpdf(z) - logy  # noqa: E731
        if math.isfinite(edge):
            return edge_root(h, edge, m, side)
        else:
            step = self.scale
            far = m + side * step
            while h(far) >= 0:
                step *= 2.0
                far = m + side * step
                if abs(far) > 1e300:
                    return edge
        a, b = (far, m) if side < 0 else (m, far)
        return optimize.brentq(h, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                               maxiter=500)

    def log_psi_level(self, logy: float) -> float:
        """``log P(p <= y)`` for ``y = exp(logy)``."""
        if not self.unimodal:
            raise UnsupportedShapeError(
                f"level sets of a {self.kind} density are not supported (not unimodal)")
        if logy >= self.max_logpdf:
            return 0.0
        if logy == -INF:
            return -INF
        xl = self._partner(logy, -1)
        xr = self._partner(logy, +1)
        return float(np.logaddexp(self._logcdf(xl), self._logsf(xr)))

    def log_psi_at(self, x: float) -> float:
        """``log P(p <= p(x))``, using ``x`` itself as one of the level roots."""
        if not self.unimodal:
            raise UnsupportedShapeError(
                f"level sets of a {self.kind} density are not supported (not unimodal)")
        lp = self._logpdf(x)
        if lp == -INF:
            return -INF
        if x == self.mode or lp >= self.max_logpdf:
            return 0.0
        if x < self.mode:
            return float(np.logaddexp(self._logcdf(x), self._logsf(self._partner(lp, +1))))
        return float(np.logaddexp(self._logcdf(self._partner(lp, -1)), self._logsf(x)))

    def density_range_ok(self) -> bool:
        """Whether ``psi`` maps onto all of ``(0, 1)`` (continuous level sets)."""
        return True


def _nudge(x: float, direction: int) -> float:
    return float(np.nextafter(x, INF if direction > 0 else -INF))


def edge_root(h: Callable[[float], float], edge: float, m: float, side: int) -> float:
    """Root of ``h`` between ``m`` (where ``h >= 0``) and a finite support edge.

    The search runs in ``u = log|x - edge|`` so roots packed against the edge
    (e.g. ``1e-200`` next to 0) are reached in a few dozen steps. Returns
    ``edge`` if ``h`` stays nonnegative up to the edge.
    """
    span = abs(m - edge)
    u_lo = math.log(max(np.finfo(float).tiny, span * 1e-300))
    x_of = lambda u: edge - side * math.exp(u)  # noqa: E731
    if h(x_of(u_lo)) >= 0:
        return edge
    g = lambda u: h(x_of(u))  # noqa: E731
    u = optimize.brentq(g, u_lo, math.log(span), xtol=1e-15, rtol=4 * np.finfo(float).eps,
                        maxiter=500)
    return x_of(u)


# ---------------------------------------------------------------------------
# parametric families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gamma(Distribution):
    """Gamma law with shape ``a`` and scale ``b``."""

    a: float
    b: float
    kind = "gamma"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("gamma needs a > 0 and b > 0")

    @property
    def support(self):
        return (0.0, INF)

    @property
    def mode(self):
        return (self.a - 1.0) * self.b if self.a > 1 else 0.0

    @property
    def mean(self):
        return self.a * self.b

    @property
    def var(self):
        return self.a * self.b ** 2

    @property
    def center(self):
        return self.mean

    @property
    def scale(self):
        return math.sqrt(self.var)

    @property
    def _lognorm(self):
        return self.a * math.log(self.b) + math.lgamma(self.a)

    def _logpdf(self, x):
        if x < 0:
            return -INF
        if x == 0:
            if self.a > 1:
                return -INF
            return -math.log(self.b) if self.a == 1 else INF
        return (self.a - 1.0) * math.log(x) - x / self.b - self._lognorm

    def _logcdf(self, x):
        if x <= 0:
            return -INF
        z = x / self.b
        v = special.gammainc(self.a, z)
        if v > 1e-300:
            return math.log(v)
        # series lead term when the regularized function underflows
        return (self.a * math.log(z) - z - math.lgamma(self.a + 1.0)
                + math.log1p(z / (self.a + 1.0)))

    def _logsf(self, x):
        if x <= 0:
            return 0.0
        z = x / self.b
        v = special.gammaincc(self.a, z)
        if v > 1e-300:
            return math.log(v)
        return ((self.a - 1.0) * math.log(z) - z - math.lgamma(self.a)
                + math.log1p((self.a - 1.0) / z))

    def _ppf(self, u):
        return float(self.b * special.gammaincinv(self.a, u))

    def sample(self, n, rng):
        return rng.gamma(self.a, self.b, size=n)


@dataclass(frozen=True)
class Normal(Distribution):
    """Normal law with mean ``mu`` and standard deviation ``sigma``."""

    mu: float
    sigma: float
    kind = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("normal needs sigma > 0")

    support = (-INF, INF)

    @property
    def mode(self):
        return self.mu

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return self.sigma ** 2

    @property
    def center(self):
        return self.mu

    @property
    def scale(self):
        return self.sigma

    def _logpdf(self, x):
        z = (x - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * LOG_2PI

    def _logcdf(self, x):
        return float(special.log_ndtr((x - self.mu) / self.sigma))

    def _logsf(self, x):
        return float(special.log_ndtr((self.mu - x) / self.sigma))

    def _ppf(self, u):
        return float(self.mu + self.sigma * special.ndtri(u))

    def sample(self, n, rng):
        return rng.normal(self.mu, self.sigma, size=n)

    def log_psi_at(self, x):
        # {p <= p(x)} is the complement of a symmetric interval
        return math.log(2.0) + float(special.log_ndtr(-abs(x - self.mu) / self.sigma))

    def log_psi_level(self, logy):
        if logy >= self.max_logpdf:
            return 0.0
        d = self.sigma * math.sqrt(2.0 * (self.max_logpdf - logy))
        return self.log_psi_at(self.mu + d)


@dataclass(frozen=True)
class Exponential(Distribution):
    """Exponential law with rate ``rate``."""

    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential needs rate > 0")

    support = (0.0, INF)
    mode = 0.0

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def var(self):
        return 1.0 / self.rate ** 2

    @property
    def center(self):
        return self.mean

    @property
    def scale(self):
        return self.mean

    def _logpdf(self, x):
        return math.log(self.rate) - self.rate * x if x >= 0 else -INF

    def _logcdf(self, x):
        if x <= 0:
            return -INF
        return math.log(-math.expm1(-self.rate * x))

    def _logsf(self, x):
        return -self.rate * x if x > 0 else 0.0

    def _ppf(self, u):
        return -math.log1p(-u) / self.rate

    def sample(self, n, rng):
        return rng.exponential(1.0 / self.rate, size=n)

    def log_psi_at(self, x):
        return -self.rate * x if x >= 0 else -INF

    def log_psi_level(self, logy):
        return min(logy - math.log(self.rate), 0.0)


@dataclass(frozen=True)
class Pareto(Distribution):
    """Pareto law with tail index ``alpha`` and minimum ``xm``."""

    alpha: float
    xm: float
    kind = "pareto"

    def __post_init__(self):
        if not (self.alpha > 0 and self.xm > 0):
            raise ValueError("pareto needs alpha > 0 and xm > 0")

    @property
    def support(self):
        return (self.xm, INF)

    @property
    def mode(self):
        return self.xm

    @property
    def mean(self):
        return self.alpha * self.xm / (self.alpha - 1) if self.alpha > 1 else INF

    @property
    def center(self):
        return self.xm * 2.0 ** (1.0 / self.alpha)

    @property
    def scale(self):
        return self.xm

    def _logpdf(self, x):
        if x < self.xm:
            return -INF
        return math.log(self.alpha) + self.alpha * math.log(self.xm) - (self.alpha + 1) * math.log(x)

    def _logcdf(self, x):
        if x <= self.xm:
            return -INF
        return math.log(-math.expm1(self.alpha * math.log(self.xm / x)))

    def _logsf(self, x):
        return self.alpha * math.log(self.xm / x) if x > self.xm else 0.0

    def _ppf(self, u):
        return self.xm * (1.0 - u) ** (-1.0 / self.alpha)


@dataclass(frozen=True)
class ShiftedWeibull(Distribution):
    """Weibull law with shape ``k`` and scale ``lam``, shifted right by ``shift``."""

    k: float
    lam: float
    shift: float = 0.0
    kind = "shifted-weibull"

    def __post_init__(self):
        if not (self.k > 0 and self.lam > 0):
            raise ValueError("shifted-weibull needs k > 0 and lam > 0")

    @property
    def support(self):
        return (self.shift, INF)

    @property
    def mode(self):
        if self.k > 1:
            return self.shift + self.lam * ((self.k - 1) / self.k) ** (1 / self.k)
        return self.shift

    @property
    def mean(self):
        return self.shift + self.lam * math.gamma(1 + 1 / self.k)

    @property
    def center(self):
        return self.mean

    @property
    def scale(self):
        return self.lam * math.sqrt(max(math.gamma(1 + 2 / self.k) - math.gamma(1 + 1 / self.k) ** 2, 1e-12))

    def _logpdf(self, x):
        z = (x - self.shift) / self.lam
        if z < 0:
            return -INF
        if z == 0:
            if self.k > 1:
                return -INF
            return math.log(self.k / self.lam) if self.k == 1 else INF
        return math.log(self.k / self.lam) + (self.k - 1) * math.log(z) - z ** self.k

    def _logcdf(self, x):
        z = (x - self.shift) / self.lam
        if z <= 0:
            return -INF
        return math.log(-math.expm1(-z ** self.k))

    def _logsf(self, x):
        z = (x - self.shift) / self.lam
        return -z ** self.k if z > 0 else 0.0

    def _ppf(self, u):
        return self.shift + self.lam * (-math.log1p(-u)) ** (1 / self.k)


@dataclass(frozen=True)
class MultivariateNormal:
    """Multivariate normal law; used for exp-linear moments and rate functions."""

    mean: np.ndarray
    cov: np.ndarray
    kind = "mv-normal"

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (m.size, m.size):
            raise ValueError("covariance shape does not match mean")
        np.linalg.cholesky(c)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.mean
        sol = np.linalg.solve(self.cov, d.T).T
        _, logdet = np.linalg.slogdet(self.cov)
        return -0.5 * np.sum(d * sol, axis=-1) - 0.5 * (logdet + self.mean.size * LOG_2PI)

    def sample(self, n, rng):
        return rng.multivariate_normal(self.mean, self.cov, size=n)


# ---------------------------------------------------------------------------
# finite discrete and empirical models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteDiscrete(Distribution):
    """Distribution on finitely many points with probabilities ``probs``."""

    points: np.ndarray
    probs: np.ndarray
    kind = "finite-discrete"
    discrete = True
    unimodal = False

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.points, dtype=float))
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if x.shape != p.shape:
            raise ValueError("points and probs must have the same length")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum():.15g}, not 1")
        if np.unique(x).size != x.size:
            raise ValueError("support points must be distinct")
        order = np.argsort(x)
        object.__setattr__(self, "points", x[order])
        object.__setattr__(self, "probs", p[order])

    @property
    def support(self):
        return (float(self.points[0]), float(self.points[-1]))

    @property
    def mode(self):
        return float(self.points[np.argmax(self.probs)])

    @property
    def mean(self):
        return float(np.dot(self.points, self.probs))

    @property
    def center(self):
        return self.mean

    @property
    def scale(self):
        return float(np.sqrt(np.dot(self.probs, (self.points - self.mean) ** 2))) or 1.0

    def _index(self, x):
        i = int(np.searchsorted(self.points, x))
        if i < self.points.size and self.points[i] == x:
            return i
        return -1

    def _logpdf(self, x):
        i = self._index(x)
        return math.log(self.probs[i]) if i >= 0 and self.probs[i] > 0 else -INF

    def pmf(self, x):
        return np.exp(self.logpdf(x))

    def _logcdf(self, x):
        s = self.probs[self.points <= x].sum()
        return math.log(s) if s > 0 else -INF

    def _logsf(self, x):
        s = self.probs[self.points > x].sum()
        return math.log(s) if s > 0 else -INF

    def _ppf(self, u):
        cum = np.cumsum(self.probs)
        return float(self.points[min(int(np.searchsorted(cum, u)), self.points.size - 1)])

    def sample(self, n, rng):
        return rng.choice(self.points, size=n, p=self.probs)

    def expect(self, values: np.ndarray) -> float:
        return float(np.dot(self.probs, values))

    def log_psi_level(self, logy):
        y = math.exp(logy) if logy > -INF else 0.0
        # tolerate the exp(log p) round trip when y is itself an atom's mass
        s = self.probs[self.probs <= y * (1.0 + 1e-12)].sum()
        return math.log(s) if s > 0 else -INF

    def log_psi_at(self, x):
        lp = self._logpdf(x)
        return self.log_psi_level(lp)

    def density_range_ok(self):
        return False


@dataclass(frozen=True)
class KDE(Distribution):
    """Gaussian-kernel density estimate over ``data`` with bandwidth ``h``."""

    data: np.ndarray
    h: float
    kind = "kde"
    unimodal = False

    def __post_init__(self):
        object.__setattr__(self, "data", np.sort(np.asarray(self.data, dtype=float)))
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")

    support = (-INF, INF)

    @property
    def mode(self):
        return float(np.median(self.data))

    @property
    def mean(self):
        return float(self.data.mean())

    @property
    def center(self):
        return self.mean

    @property
    def scale(self):
        return float(math.sqrt(self.data.var() + self.h ** 2))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.data) / self.h
        out = special.logsumexp(-0.5 * z * z, axis=-1)
        return out - math.log(self.data.size * self.h) - 0.5 * LOG_2PI

    def _logpdf(self, x):
        return float(self.logpdf(np.float64(x)))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.ndtr((x[..., None] - self.data) / self.h).mean(axis=-1)

    def _logcdf(self, x):
        return float(special.logsumexp(special.log_ndtr((x - self.data) / self.h))
                     - math.log(self.data.size))

    def _logsf(self, x):
        return float(special.logsumexp(special.log_ndtr((self.data - x) / self.h))
                     - math.log(self.data.size))

    def sample(self, n, rng):
        return rng.choice(self.data, size=n) + self.h * rng.standard_normal(n)


@dataclass(frozen=True)
class Reweighted(Distribution):
    """Continuous model ``q(x) = p(x) exp(log_ratio(x) - log_norm)`` over a base law.

    Used for power tilts and constructed alternatives. ``ratio_argmin`` marks
    where the likelihood ratio is smallest when it is valley shaped (ratio
    non-increasing left of it and non-decreasing right of it).
    """

    base: Distribution
    log_ratio: Callable[[float], float]
    log_norm: float = 0.0
    label: str = "tilted"
    ratio_argmin: float | None = None
    kind = "tilted"
    unimodal = False

    @property
    def support(self):
        return self.base.support

    @property
    def mode(self):
        return self.base.mode

    @property
    def center(self):
        return self.base.center

    @property
    def scale(self):
        return self.base.scale

    @property
    def breakpoints(self):
        pts = set(self.base.breakpoints)
        if self.ratio_argmin is not None:
            pts.add(self.ratio_argmin)
        return tuple(sorted(pts))

    def _logpdf(self, x):
        lp = self.base._logpdf(x)
        if lp == -INF:
            return -INF
        return lp + self.log_ratio(x) - self.log_norm


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QoI:
    """Nonnegative observable ``tau``.

    ``form`` is one of ``"indicator"`` (``params=(lo, hi)``, closed interval),
    ``"power"`` (``params=(k,)``, ``x**k``), ``"exp-linear"`` (``params=(v,)``,
    ``exp(v x)``) or ``"function"`` (explicit ``func`` returning ``tau(x)``).
    """

    form: str
    params: tuple = ()
    func: Callable[[float], float] | None = field(default=None, compare=False)
    label: str = ""

    @classmethod
    def indicator(cls, lo: float, hi: float = INF) -> "QoI":
        return cls("indicator", (float(lo), float(hi)), label=f"1[{lo},{hi}]")

    @classmethod
    def power(cls, k: float) -> "QoI":
        return cls("power", (float(k),), label=f"x^{k:g}")

    @classmethod
    def one(cls) -> "QoI":
        return cls.power(0.0)

    @classmethod
    def exp_linear(cls, v) -> "QoI":
        return cls("exp-linear", (v,), label="exp(v.x)")

    @classmethod
    def function(cls, func: Callable[[float], float], label: str = "f") -> "QoI":
        return cls("function", (), func=func, label=label)

    def log(self, x: float) -> float:
        """``log tau(x)``, extended real."""
        if self.form == "indicator":
            lo, hi = self.params
            return 0.0 if lo <= x <= hi else -INF
        if self.form == "power":
            k = self.params[0]
            if k == 0:
                return 0.0
            if x < 0:
                return math.nan
            if x == 0:
                return -INF if k > 0 else INF
            return k * math.log(x)
        if self.form == "exp-linear":
            return float(np.dot(self.params[0], x))
        v = float(self.func(x))
        if v < 0:
            return math.nan
        return math.log(v) if v > 0 else -INF

    def __call__(self, x):
        if np.ndim(x) == 0:
            return math.exp(self.log(float(x))) if self.log(float(x)) > -INF else 0.0
        return np.array([self(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def kinks(self) -> tuple[float, ...]:
        if self.form == "indicator":
            return tuple(p for p in self.params if math.isfinite(p))
        return ()


def _prob_interval(P: Distribution, lo: float, hi: float) -> float:
    if isinstance(P, FiniteDiscrete):
        m = (P.points >= lo) & (P.points <= hi)
        return float(P.probs[m].sum())
    a = float(P.cdf(lo)) if math.isfinite(lo) else 0.0
    b = float(P.cdf(hi)) if math.isfinite(hi) else 1.0
    return max(b - a, 0.0)


def log_power_moment(P, tau: QoI, c: float) -> float:
    """``log E_P[tau^c]`` as an extended real.

    Uses closed forms for gamma, exponential and Pareto power moments, normal
    exp-linear moments and indicators, an exact sum for finite-discrete models
    and adaptive quadrature otherwise. Returns ``+inf`` for divergent moments.
    """
    c = float(c)
    if c == 0.0:
        return 0.0
    if tau.form == "power" and tau.params[0] == 0.0:
        return 0.0
    if isinstance(P, FiniteDiscrete):
        terms = []
        for x, p in zip(P.points.tolist(), P.probs.tolist()):
            if p == 0:
                continue
            lt = tau.log(x)
            if math.isnan(lt):
                raise ValueError("QoI is negative on the support")
            if math.isinf(lt):
                if (lt > 0) == (c > 0):
                    return INF
                continue
            terms.append(c * lt + math.log(p))
        return log_sum_exp(terms)
    if tau.form == "indicator":
        lo, hi = tau.params
        pa = _prob_interval(P, lo, hi)
        if c > 0:
            return math.log(pa) if pa > 0 else -INF
        return INF if pa < 1.0 - 1e-15 else 0.0
    if tau.form == "power":
        s = c * tau.params[0]
        if isinstance(P, Gamma):
            if P.a + s <= 0:
                return INF
            return s * math.log(P.b) + math.lgamma(P.a + s) - math.lgamma(P.a)
        if isinstance(P, Exponential):
            if s <= -1:
                return INF
            return math.lgamma(1.0 + s) - s * math.log(P.rate)
        if isinstance(P, Pareto):
            if s >= P.alpha:
                return INF
            return math.log(P.alpha / (P.alpha - s)) + s * math.log(P.xm)
    if tau.form == "exp-linear":
        v = tau.params[0]
        if isinstance(P, Normal):
            v = float(v)
            return c * v * P.mu + 0.5 * (c * v * P.sigma) ** 2
        if isinstance(P, MultivariateNormal):
            v = np.asarray(v, dtype=float)
            return float(c * v @ P.mean + 0.5 * c * c * v @ P.cov @ v)
        if isinstance(P, Gamma):
            t = c * float(v) * P.b
            return INF if t >= 1 else -P.a * math.log1p(-t)
    if isinstance(P, MultivariateNormal):
        raise ValueError("only exp-linear observables are supported for multivariate normals")

    def integrand(x):
        lt = tau.log(x)
        if lt == -INF:
            return -INF if c > 0 else INF
        if lt == INF:
            return INF if c > 0 else -INF
        return c * lt + P._logpdf(x)

    lo, hi = P.support
    return log_integrate(integrand, lo, hi, center=P.center, scale=P.scale,
                         points=tuple(P.breakpoints) + tau.kinks())


def moment_c_sup(P, tau: QoI) -> float:
    """Supremum of ``c > 0`` for which ``E_P[tau^c]`` is finite."""
    if isinstance(P, FiniteDiscrete) or tau.form == "indicator":
        return INF
    if tau.form == "power":
        k = tau.params[0]
        if k == 0:
            return INF
        if isinstance(P, Gamma):
            return P.a / -k if k < 0 else INF
        if isinstance(P, Exponential):
            return 1.0 / -k if k < 0 else INF
        if isinstance(P, Pareto):
            return P.alpha / k if k > 0 else INF
    if tau.form == "exp-linear":
        if isinstance(P, (Normal, MultivariateNormal)):
            return INF
        if isinstance(P, Gamma):
            v = float(tau.params[0])
            return 1.0 / (v * P.b) if v > 0 else INF
    finite = 1.0
    c = 2.0
    while c <= 2.0 ** 12:
        if math.isinf(log_power_moment(P, tau, c)):
            break
        finite = c
        c *= 2.0
    else:
        return INF
    lo, hi = finite, c
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if math.isinf(log_power_moment(P, tau, mid)):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9 * hi:
            break
    return lo


def log_mgf(P, f: QoI, c: float) -> float:
    """``log E_P[exp(c f)]`` for an observable ``f`` (not necessarily positive)."""
    c = float(c)
    if c == 0.0:
        return 0.0
    if isinstance(P, FiniteDiscrete):
        vals = np.array([math.exp(f.log(float(x))) if f.form != "function" else float(f.func(x))
                         for x in P.points])
        return log_sum_exp(c * vals, P.probs)
    if f.form == "indicator":
        p = _prob_interval(P, *f.params)
        # log(1 + p (e^c - 1)) without cancellation
        return float(np.logaddexp(math.log1p(-p) if p < 1 else -INF, c + math.log(p) if p > 0 else -INF))
    if f.form == "power" and f.params[0] == 1.0:
        if isinstance(P, Normal):
            return c * P.mu + 0.5 * (c * P.sigma) ** 2
        if isinstance(P, Gamma):
            return INF if c * P.b >= 1 else -P.a * math.log1p(-c * P.b)
        if isinstance(P, Exponential):
            return INF if c >= P.rate else math.log(P.rate / (P.rate - c))
    if f.form == "power" and f.params[0] < 0 and c > 0 and isinstance(P, (Gamma, Exponential)):
        # exp(c x^k) outgrows any power of x near 0
        return INF

    def fval(x):
        if f.form == "function":
            return float(f.func(x))
        lv = f.log(x)
        return math.exp(lv) if lv < 700 else INF

    def integrand(x):
        v = fval(x)
        if math.isinf(v):
            return INF if (v > 0) == (c > 0) else -INF
        return c * v + P._logpdf(x)

    lo, hi = P.support
    return log_integrate(integrand, lo, hi, center=P.center, scale=P.scale,
                         points=tuple(P.breakpoints) + f.kinks())


# ---------------------------------------------------------------------------
# density sub-level mass
# ---------------------------------------------------------------------------

def density_psi(P: Distribution, y: float) -> float:
    """Baseline mass ``P(p <= y)`` of the density sub-level set at level ``y``.

    Exponential and normal laws use closed forms; other unimodal densities
    solve ``p(x) = y`` on each side of the mode and combine CDF values.
    Finite-discrete laws sum the atoms with probability at most ``y``.

    Raises
    ------
    UnsupportedShapeError
        For densities that are not declared unimodal.
    """
    if y < 0:
        raise ValueError("density level must be nonnegative")
    logy = math.log(y) if y > 0 else -INF
    if isinstance(P, FiniteDiscrete):
        return math.exp(P.log_psi_level(logy))
    if logy == -INF:
        return 0.0
    return math.exp(P.log_psi_level(logy))


# ---------------------------------------------------------------------------
# fitting and estimation
# ---------------------------------------------------------------------------

class ConvergenceError(RuntimeError):
    """Iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3g})")
        self.residual = residual


def gamma_mle(samples: Sequence[float], max_iter: int = 100, tol: float = 1e-12) -> tuple[float, float]:
    """Maximum-likelihood shape and scale of a gamma law.

    Solves ``log a - digamma(a) = log(mean) - mean(log)`` by Newton steps
    safeguarded with a bisection bracket, starting from ``0.5 / s``; the
    scale is then ``mean / a``.

    Parameters
    ----------
    samples : sequence of float
        Positive observations with at least two distinct values.

    Returns
    -------
    (a, b) : tuple of float
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2 or np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("gamma MLE needs at least two finite positive samples")
    mean = x.mean()
    s = math.log(mean) - np.log(x).mean()
    if not s > 1e-14:
        raise ValueError("samples have (numerically) zero spread; gamma MLE diverges")

    def resid(a):
        return math.log(a) - special.digamma(a) - s

    # resid is decreasing in a; build a bracket
    lo, hi = 1e-300, 0.5 / s + 1.0
    while resid(hi) > 0:
        hi *= 2.0
    a = 0.5 / s
    for _ in range(max_iter):
        r = resid(a)
        if abs(r) < tol * max(1.0, s):
            return float(a), float(mean / a)
        if r > 0:
            lo = a
        else:
            hi = a
        step = r / (1.0 / a - special.polygamma(1, a))
        a_new = a - step
        if not (lo < a_new < hi):
            a_new = 0.5 * (lo + hi) if lo > 1e-300 else 0.5 * hi
        a = a_new
    raise ConvergenceError("gamma MLE Newton iteration did not converge", abs(resid(a)))


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


def scott_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return 1.06 * x.std(ddof=1) * x.size ** (-0.2)


BANDWIDTH_RULES = {"silverman": silverman_bandwidth, "scott": scott_bandwidth}


def kde_fit(samples: Iterable[float], bandwidth_rule: str | float = "silverman") -> KDE:
    """Gaussian-kernel density estimate.

    ``bandwidth_rule`` is ``"silverman"`` (default), ``"scott"`` or a
    positive number used as the bandwidth directly.
    """
    x = np.asarray(list(samples), dtype=float)
    if x.size < 5:
        raise ValueError("kde_fit needs at least 5 samples")
    if not np.all(np.isfinite(x)) or x.std() == 0.0:
        raise ValueError("samples are degenerate (zero variance)")
    if isinstance(bandwidth_rule, str):
        try:
            h = BANDWIDTH_RULES[bandwidth_rule](x)
        except KeyError:
            raise ValueError(f"unknown bandwidth rule {bandwidth_rule!r}") from None
    else:
        h = float(bandwidth_rule)
    return KDE(x, h)


def read_samples_csv(path: str) -> np.ndarray:
    """Read one column of positive reals, with an optional ``lifetime`` header."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            cell = row[0].strip()
            if i == 0 and cell.lower() == "lifetime":
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(f"line {i + 1}: cannot parse {cell!r} as a number") from None
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"line {i + 1}: sample {v} is not a positive real")
            out.append(v)
    if not out:
        raise ValueError("no samples found")
    return np.asarray(out)
