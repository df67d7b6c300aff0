"""End-to-end workflows: failure-rate stress test, rate-function robustness, option pricing.

Each workflow returns plain dataclasses whose ``rows`` are lists of dicts
ready for CSV output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import lambda_from_mu, make_profile, point_mass_mu, solve_r0_for_kl
from .bounds import bennett_renyi_profile, gaussian_rate_function, rate_function_bounds, uq_upper_lambda
from .dist import Gamma, QoI, gamma_mle, log_power_moment
from .renyi import kl_bootstrap_estimate

# ---------------------------------------------------------------------------
# battery failure-rate stress test
# ---------------------------------------------------------------------------

BATTERY_ETA = 0.074
BATTERY_FAMILIES = ("power-law",)


@dataclass
class BatteryReport:
    """Baseline failure rate and per-family worst-case bounds on ``E_Q[1/T]``."""

    a: float
    b: float
    baseline: float
    eta: float
    eta_source: str
    families: list[dict] = field(default_factory=list)
    sweep: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "baseline": self.baseline, "eta": self.eta,
                "eta_source": self.eta_source, "families": self.families}


def _family_bound(P: Gamma, tau: QoI, family: str, *, eta=None, r0=None, kappa=1.0) -> dict:
    if r0 is None:
        if eta == 0:
            mu = point_mass_mu()
            r0 = 1.0
        else:
            r0 = solve_r0_for_kl(family, eta, kappa=kappa)
            mu = make_profile(family, r0, kappa=kappa)
    else:
        mu = make_profile(family, r0, kappa=kappa)
    res = uq_upper_lambda(P, tau, lambda_from_mu(mu))
    return {"family": family, "r0": float(r0), "eta": float(mu.kl_cap),
            "bound": res.exp_value, "log_bound": res.value, "c_star": res.c_star,
            "multimodal": res.multimodal}


def battery_workflow(samples=None, *, a: float | None = None, b: float | None = None,
                     eta: float | None = None, r0: float | None = None,
                     families=BATTERY_FAMILIES, kappa: float = 1.0, r0_grid=None,
                     n_boot: int = 200, seed: int = 0) -> BatteryReport:
    """Stress test of the mean failure rate ``E[1/T]`` of a gamma lifetime model.

    Parameters
    ----------
    samples : array_like, optional
        Positive lifetimes. When given, the gamma baseline is fitted by maximum
        likelihood and, if ``eta`` is not supplied, the KL budget is estimated
        by bootstrapped KDE-vs-baseline divergence.
    a, b : float, optional
        Gamma shape and scale when no samples are given. ``a > 1`` is required
        for ``E[1/T]`` to be finite.
    eta : float, optional
        KL budget; each family's ``r0`` is solved so the profile saturates it.
        Defaults to 0.074 when no samples are given.
    r0 : float, optional
        Use this ``r0`` directly instead of solving from ``eta``.
    families : sequence of str
        Tail families (``power-law``, ``sub-exp``, ``gaussian``).
    r0_grid : array_like, optional
        Sweep of ``r0`` values; one row per family and grid value.
    """
    if samples is not None:
        P = Gamma(*gamma_mle(np.asarray(samples, dtype=float)))
        if eta is None and r0 is None:
            eta, _ = kl_bootstrap_estimate(samples, P, n_boot=n_boot, seed=seed)
            source = "bootstrap"
        else:
            source = "given"
    else:
        if a is None or b is None:
            raise ValueError("either samples or both a and b are required")
        P = Gamma(float(a), float(b))
        source = "given"
        if eta is None and r0 is None:
            eta = BATTERY_ETA
            source = "default"
    if P.a <= 1:
        raise ValueError(f"E_P[1/T] is infinite for gamma shape a={P.a:g} <= 1")
    tau = QoI.power(-1.0)
    baseline = math.exp(log_power_moment(P, tau, 1.0))
    rows = [_family_bound(P, tau, fam, eta=eta, r0=r0, kappa=kappa) for fam in families]
    sweep = []
    if r0_grid is not None:
        for fam in families:
            for r in np.asarray(r0_grid, dtype=float):
                sweep.append(_family_bound(P, tau, fam, r0=float(r), kappa=kappa))
    eta_out = float(eta) if eta is not None else float(rows[0]["eta"])
    return BatteryReport(P.a, P.b, baseline, eta_out, source, rows, sweep)


# ---------------------------------------------------------------------------
# rate-function robustness
# ---------------------------------------------------------------------------

def rate_demo(Sigma, b: float, eta_list, sigma2_list, x_grid) -> list[dict]:
    """Lower bounds on the rate function of a bounded perturbation of ``N(0, Sigma)``.

    ``x_grid`` holds Mahalanobis radii ``s = |Sigma^{-1/2} x|``; points are
    placed along the first Cholesky direction so that ``I_P(x) = s^2 / 2``.
    Returns one row per ``(eta, sigma2, s)``.
    """
    S = np.atleast_2d(np.asarray(Sigma, dtype=float))
    I_P = gaussian_rate_function(S)
    direction = np.linalg.cholesky(S)[:, 0]
    if len(eta_list) != len(sigma2_list):
        raise ValueError("eta_list and sigma2_list must have equal length")
    rows = []
    for eta, s2 in zip(eta_list, sigma2_list):
        h = bennett_renyi_profile(b, eta, s2)
        for s in np.asarray(x_grid, dtype=float):
            x = s * direction
            rb = rate_function_bounds(I_P, h, x, log_ratio_bound=b)
            rows.append({"eta": float(eta), "sigma2": float(s2), "radius": float(s),
                         "I_P": I_P(x), "naive": rb.naive, "lower": rb.lower,
                         "c_star": rb.c_lower})
    return rows


# ---------------------------------------------------------------------------
# perpetual American put
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptionSpec:
    """Perpetual put under geometric Brownian motion with a risk-aversion exponent.

    ``r`` interest rate, ``sigma`` volatility, ``K`` strike, ``X0`` initial
    price, ``gamma`` negative risk-aversion parameter.
    """

    r: float
    sigma: float
    K: float
    X0: float
    gamma: float

    @property
    def mu(self) -> float:
        return self.r / self.sigma - self.sigma / 2.0

    def validate(self) -> None:
        if not (self.r > 0 and self.sigma > 0 and self.K > 0 and self.X0 > 0):
            raise ValueError("r, sigma, K and X0 must be positive")
        if not self.K < self.X0:
            raise ValueError("need K < X0")
        if not self.mu < 0:
            raise ValueError("need drift mu = r/sigma - sigma/2 < 0, i.e. sigma^2 > 2r")
        if not self.gamma < 0:
            raise ValueError("gamma must be negative")
        if not self.gamma > -self.mu ** 2 / (2.0 * self.r):
            raise ValueError("need gamma > -mu^2/(2r)")
        if self.gamma == -1:
            raise ValueError("gamma = -1 is excluded")

    def a_L(self, L: float) -> float:
        if not 0 < L <= self.X0:
            raise ValueError("stopping level must satisfy 0 < L <= X0")
        return -math.log(self.X0 / L) / self.sigma


def d_gamma(spec: OptionSpec) -> float:
    """Exponent rate ``sqrt(mu^2 + 2r(1+gamma)) - sqrt(mu^2 + 2r gamma)``."""
    m2 = spec.mu ** 2
    return math.sqrt(m2 + 2 * spec.r * (1 + spec.gamma)) - math.sqrt(m2 + 2 * spec.r * spec.gamma)


def option_tilted_value(spec: OptionSpec, L: float) -> float:
    """``E_{Q_gamma}[V_L] = (K - L) (L/X0)^{d_gamma/sigma}``."""
    return (spec.K - L) * (L / spec.X0) ** (d_gamma(spec) / spec.sigma)


def option_optimal_level(spec: OptionSpec) -> tuple[float, float, float]:
    """Return ``(L_star, E_{Q_gamma}[V_{L_star}], d_gamma)``."""
    spec.validate()
    d = d_gamma(spec)
    L = d * spec.K / (d + spec.sigma)
    return L, option_tilted_value(spec, L), d


def option_discounted_mgf(spec: OptionSpec, L: float, lam: float) -> float:
    """``E_P[exp(-lam tau_L)] = exp(a_L mu - |a_L| sqrt(mu^2 + 2 lam))`` for ``lam > -mu^2/2``."""
    if not lam > -spec.mu ** 2 / 2.0:
        raise ValueError("need lam > -mu^2/2")
    a = spec.a_L(L)
    return math.exp(a * spec.mu - abs(a) * math.sqrt(spec.mu ** 2 + 2.0 * lam))


def option_ambiguity_radius(spec: OptionSpec, L: float) -> float:
    """``R_{1+1/gamma}(Q_gamma || P)`` at stopping level ``L``.

    Equals ``-(g/(g+1)) a mu - (g^2/(g+1)) |a| s1 + g |a| s0`` with
    ``s1 = sqrt(mu^2 + 2(g+1) r)`` and ``s0 = sqrt(mu^2 + 2 g r)``.
    """
    spec.validate()
    g, mu, r = spec.gamma, spec.mu, spec.r
    a = spec.a_L(L)
    s1 = math.sqrt(mu * mu + 2.0 * (g + 1.0) * r)
    s0 = math.sqrt(mu * mu + 2.0 * g * r)
    return -(g / (g + 1.0)) * a * mu - (g * g / (g + 1.0)) * abs(a) * s1 + g * abs(a) * s0


def girsanov_divergence_bound(spec: OptionSpec, delta_r_sup: float, T_horizon: float) -> float:
    """``|Delta r|_inf^2 T / (2 sigma^2)``, bounding every ``R_alpha(Q||P)`` with ``alpha > 1``."""
    return delta_r_sup ** 2 * T_horizon / (2.0 * spec.sigma ** 2)


def girsanov_member_check(spec: OptionSpec, L: float, delta_r_sup: float,
                          T_horizon: float) -> str:
    """``member`` when the drift-perturbed model is certified inside the ambiguity set."""
    if delta_r_sup < 0 or T_horizon < 0:
        raise ValueError("delta_r_sup and T_horizon must be nonnegative")
    lhs = girsanov_divergence_bound(spec, delta_r_sup, T_horizon)
    return "member" if lhs <= option_ambiguity_radius(spec, L) else "not-certified"
