"""Tests for CGF bounds, tail profiles, inclusion and membership checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from renyi_uq.ambiguity import (LambdaBound, chernoff_tail, classical_lambda, erfcinv_log,
                                gaussian_mu, inclusion_check, kl_cap, lambda_from_mu,
                                make_profile, membership_check, point_mass_mu, power_law_mu,
                                right_derivative, solve_r0_for_kl, step_mu, sub_exp_mu,
                                two_sided_tail_lambda, zero_lambda)
from renyi_uq.construct import construct_saturating
from renyi_uq.dist import Exponential, FiniteDiscrete, Normal

PROFILES = [power_law_mu(0.7), power_law_mu(0.4), sub_exp_mu(0.75, 1.0), sub_exp_mu(0.5, 0.5),
            sub_exp_mu(0.0, 1.0), sub_exp_mu(0.6, 2.0), gaussian_mu(0.85), gaussian_mu(0.5)]
PROFILE_IDS = [f"{m.family}-{m.r0}-{m.params.get('kappa', '')}" for m in PROFILES]

CLASSICAL = [
    classical_lambda("sub_gaussian", eta=0.5, sigma=1.0),
    classical_lambda("hoeffding", a=-1.0, b=1.0, eta=0.5),
    classical_lambda("bernstein", eta=0.5, sigma=1.0, M=1.0),
    classical_lambda("wcr", b=2.0),
    classical_lambda("bennett_ab", a=-1.0, b=1.0, eta=0.5),
    classical_lambda("bennett", b=1.0, eta=0.5, sigma=0.3),
]


def convex_on(f, grid):
    v = np.array([f(x) for x in grid])
    v = v[np.isfinite(v)]
    return np.all(v[:-2] + v[2:] - 2 * v[1:-1] >= -1e-9 * (1 + np.abs(v[1:-1])))


class TestClassicalLambda:
    def test_sub_gaussian_formula(self):
        lb = classical_lambda("sub_gaussian", eta=0.5, sigma=2.0)
        assert lb(1.5) == pytest.approx(0.75 + 4.0 * 2.25 / 2)

    def test_wcr_linear(self):
        assert classical_lambda("wcr", b=0.7)(2.0) == pytest.approx(1.4)

    def test_bennett_ab_value(self):
        """lambda b + log((b-eta)/(b-a) e^{-lambda(b-a)} + (eta-a)/(b-a)) at lambda=1."""
        lb = classical_lambda("bennett_ab", a=-1.0, b=1.0, eta=0.5)
        assert lb(1.0) == pytest.approx(1 + math.log(0.25 * math.exp(-2) + 0.75), rel=1e-14)

    def test_bennett_is_two_point_cgf(self):
        """Two-point law with mean eta, variance sigma^2 and top atom b."""
        b, eta, s = 1.0, 0.5, 0.3
        lo = eta - s * s / (b - eta)
        w_b = s * s / ((b - eta) ** 2 + s * s)
        lam = 1.7
        cgf = math.log(w_b * math.exp(lam * b) + (1 - w_b) * math.exp(lam * lo))
        assert classical_lambda("bennett", b=b, eta=eta, sigma=s)(lam) == pytest.approx(cgf)

    @pytest.mark.parametrize("lb", CLASSICAL, ids=lambda lb: lb.label)
    def test_zero_at_origin_and_slope(self, lb):
        assert lb(0.0) == 0.0
        assert right_derivative(lb.func, lb.lambda_max) == pytest.approx(lb.kl_cap, abs=1e-6)
        grid = np.linspace(0, min(5.0, 0.99 * lb.lambda_max), 60)
        assert np.all(lb(grid) >= lb.kl_cap * grid - 1e-12)
        assert convex_on(lb, grid)

    def test_beyond_domain_is_infinite(self):
        lb = classical_lambda("bernstein", eta=0.5, sigma=1.0, M=2.0)
        assert lb(0.5) == math.inf
        assert lb(10.0) == math.inf

    @pytest.mark.parametrize("kind,params,needle", [
        ("hoeffding", dict(a=1.0, b=0.0, eta=0.5), "a < b"),
        ("bennett_ab", dict(a=-1.0, b=1.0, eta=2.0), "eta <= b"),
        ("bennett", dict(b=1.0, eta=0.5, sigma=0.0), "sigma > 0"),
        ("bernstein", dict(eta=0.5, sigma=1.0, M=0.0), "M > 0"),
    ])
    def test_constraint_messages(self, kind, params, needle):
        with pytest.raises(ValueError, match=needle):
            classical_lambda(kind, **params)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            classical_lambda("nope", b=1.0)


class TestDominance:
    """Pointwise inclusions between classical families on lambda grids."""

    grid = np.linspace(0.0, 0.95, 200)

    def test_sub_gaussian_below_bernstein(self):
        sg = classical_lambda("sub_gaussian", eta=0.3, sigma=0.8)
        be = classical_lambda("bernstein", eta=0.3, sigma=0.8, M=1.0)
        assert np.all(sg(self.grid) <= be(self.grid) + 1e-14)

    @pytest.mark.parametrize("a,b,eta", [(-1.0, 1.0, 0.5), (-2.0, 0.5, 0.1), (0.0, 3.0, 1.0)])
    def test_bennett_ab_below_wcr_and_hoeffding(self, a, b, eta):
        grid = np.linspace(0, 8, 200)
        ba = classical_lambda("bennett_ab", a=a, b=b, eta=eta)(grid)
        wcr = classical_lambda("wcr", b=b)(grid)
        sg = classical_lambda("sub_gaussian", eta=eta, sigma=(b - a) / 2)(grid)
        assert np.all(ba <= np.minimum(wcr, sg) + 1e-12)

    def test_bennett_below_bennett_ab(self):
        a, b, eta = -1.0, 1.0, 0.5
        sigma = math.sqrt((b - eta) * (eta - a))
        grid = np.linspace(0, 8, 200)
        for s in (0.3 * sigma, sigma):
            bn = classical_lambda("bennett", b=b, eta=eta, sigma=s)(grid)
            ba = classical_lambda("bennett_ab", a=a, b=b, eta=eta)(grid)
            assert np.all(bn <= ba + 1e-12)


class TestTwoSidedTails:
    def test_sub_exponential_example(self):
        lb = two_sided_tail_lambda("sub_exponential_tail", C=1.0, beta=2.0, KL=0.0)
        assert lb(1.0) == pytest.approx(math.log(1.5))

    def test_loose_form_dominates(self):
        tight = two_sided_tail_lambda("sub_exponential_tail", C=1.0, beta=2.0, KL=0.1)
        loose = two_sided_tail_lambda("sub_exponential_tail", C=1.0, beta=2.0, KL=0.1, loose=True)
        grid = np.linspace(0, 1.9, 50)
        assert np.all(tight(grid) <= loose(grid) + 1e-15)
        assert tight(2.0) == math.inf

    @pytest.mark.parametrize("params,beta", [
        (dict(KL=0.0, c=1.0), 3 / math.sqrt(2)),
        (dict(KL=0.0, tau=0.5, c_mult=2.0), 1.0),
        (dict(KL=0.0, a=1.5), 1.0),
    ])
    def test_sub_gaussian_variants(self, params, beta):
        lb = two_sided_tail_lambda("sub_gaussian_tail", **params)
        assert lb.params["beta"] == pytest.approx(beta)
        assert lb(1.0) == pytest.approx(beta ** 2)

    def test_zero_at_origin(self):
        for lb in (two_sided_tail_lambda("sub_exponential_tail", C=2.0, beta=1.0, KL=0.3),
                   two_sided_tail_lambda("sub_gaussian_tail", KL=0.3, c=2.0)):
            assert lb(0.0) == 0.0
            assert lb.kl_cap == 0.3

    def test_invalid(self):
        with pytest.raises(ValueError):
            two_sided_tail_lambda("sub_exponential_tail", C=-1.0, beta=2.0, KL=0.0)
        with pytest.raises(ValueError):
            two_sided_tail_lambda("sub_gaussian_tail", KL=0.0)


class TestTailProfiles:
    @pytest.mark.parametrize("mu", PROFILES, ids=PROFILE_IDS)
    def test_tail_function_shape(self, mu):
        r = np.linspace(0, 10, 400)
        G = mu.G(r)
        assert G[0] == 1.0
        assert np.all(np.diff(G) <= 1e-15)
        assert mu.G(1e4) < 1e-6
        assert mu.G(mu.r0) == 1.0

    @pytest.mark.parametrize("mu", PROFILES, ids=PROFILE_IDS)
    def test_mean_one(self, mu):
        tail, _ = integrate.quad(mu.G, mu.r0, np.inf, limit=400, epsabs=1e-13)
        assert mu.r0 + tail == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("mu", PROFILES, ids=PROFILE_IDS)
    def test_kl_cap_integral(self, mu):
        """1 + int G log z dz."""
        f = lambda z: mu.G(z) * math.log(z)  # noqa: E731
        head = mu.r0 * math.log(mu.r0) - mu.r0 if mu.r0 > 0 else 0.0
        tail, _ = integrate.quad(f, mu.r0, np.inf, limit=400, epsabs=1e-13)
        assert mu.kl_cap == pytest.approx(1 + head + tail, abs=1e-6)

    @pytest.mark.parametrize("mu", PROFILES, ids=PROFILE_IDS)
    def test_generalized_inverse(self, mu):
        r = np.linspace(mu.r0 + 0.01, mu.r0 + 4, 30)
        for rr in r:
            g = mu.G(rr)
            if g > 1e-300:
                assert mu.G_inv(g) == pytest.approx(rr, rel=1e-8)
        assert mu.G_inv(1.0) == pytest.approx(mu.r0, abs=1e-12)

    def test_power_law_kl_cap(self):
        assert power_law_mu(0.7).kl_cap == pytest.approx(math.log(0.7) + 1 / 0.7 - 1)
        assert power_law_mu(0.7).kl_cap == pytest.approx(0.0719, abs=1e-4)

    def test_gaussian_kl_cap(self):
        assert gaussian_mu(0.5).kl_cap == pytest.approx(math.log(0.5) + 1.5)
        assert gaussian_mu(0.5).kl_cap == pytest.approx(0.8069, abs=1e-4)

    def test_parameter_ranges(self):
        for bad in (lambda: power_law_mu(1.0), lambda: sub_exp_mu(1.0, 1.0),
                    lambda: sub_exp_mu(0.5, 0.0), lambda: gaussian_mu(0.0)):
            with pytest.raises(ValueError):
                bad()

    def test_step_profile_validation(self):
        with pytest.raises(ValueError):
            step_mu([0.5, 2.0], [0.5, 0.5])
        mu = step_mu([0.5, 1.5], [0.5, 0.5])
        assert mu.G(0.5) == 1.0 and mu.G(1.0) == 0.5 and mu.G(1.6) == 0.0
        assert mu.kl_cap == pytest.approx(0.25 * math.log(0.5) + 0.75 * math.log(1.5))


class TestLambdaFromMu:
    def test_power_law_closed_form(self):
        lb = lambda_from_mu(power_law_mu(0.5))
        for lam in (0.2, 0.5, 0.9):
            assert lb(lam) == pytest.approx(lam * math.log(0.5) + math.log1p(lam / (1 - lam)))
        assert lb(0.0) == 0.0
        assert lb(1.0) == math.inf

    def test_point_mass(self):
        lb = lambda_from_mu(point_mass_mu())
        assert lb(3.0) == 0.0 and lb.kl_cap == 0.0

    @pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 40.0])
    def test_sub_exp_gamma_function_oracle(self, kappa, lam):
        """With r0 = 0, (l+1) int exp(-eta z^k) z^l dz = Gamma(1 + (l+1)/k) eta^{-(l+1)/k}."""
        mu = sub_exp_mu(0.0, kappa)
        eta = mu.params["eta"]
        expect = special.gammaln(1 + (lam + 1) / kappa) - (lam + 1) / kappa * math.log(eta)
        assert mu.Lambda(lam) == pytest.approx(expect, rel=1e-9)

    def test_sub_exp_quadrature_with_plateau(self):
        mu = sub_exp_mu(0.6, 1.5)
        lam = 1.3
        f = lambda z: (lam + 1) * mu.G(z) * z ** lam  # noqa: E731
        val = integrate.quad(f, 0, 0.6)[0] + integrate.quad(f, 0.6, np.inf, limit=400)[0]
        assert mu.Lambda(lam) == pytest.approx(math.log(val), rel=1e-9)

    def test_gaussian_against_quadrature(self):
        mu = gaussian_mu(0.7)
        lam = 0.5 * mu.lambda_max
        f = lambda z: (lam + 1) * mu.G(z) * z ** lam  # noqa: E731
        val = integrate.quad(f, 0, 0.7)[0] + integrate.quad(f, 0.7, np.inf, limit=400)[0]
        assert mu.Lambda(lam) == pytest.approx(math.log(val), rel=1e-9)

    @pytest.mark.parametrize("mu", PROFILES, ids=PROFILE_IDS)
    def test_lambda_invariants(self, mu):
        lb = lambda_from_mu(mu)
        assert lb(0.0) == 0.0
        hi = min(10.0, 0.95 * lb.lambda_max)
        grid = np.linspace(0, hi, 40)
        assert np.all(lb(grid) >= lb.kl_cap * grid - 1e-9)
        assert convex_on(lb, grid)
        assert right_derivative(lb.func, lb.lambda_max, h=1e-5) == pytest.approx(lb.kl_cap, abs=1e-5)


class TestKlCap:
    def test_numeric_fallback(self):
        lb = LambdaBound(lambda l: 0.3 * l + l ** 3, math.inf, None, "custom")
        assert kl_cap(lb) == pytest.approx(0.3, abs=1e-9)

    def test_analytic_values(self):
        assert kl_cap(lambda_from_mu(power_law_mu(0.7))) == pytest.approx(0.0719, abs=1e-4)
        assert kl_cap(zero_lambda()) == 0.0
        assert kl_cap(classical_lambda("bennett", b=2.0, eta=0.4, sigma=0.5)) == 0.4

    def test_not_finite_near_zero(self):
        with pytest.raises(ValueError):
            LambdaBound(lambda l: math.inf, 1.0, None, "bad")


class TestSolveR0:
    def test_battery_budget(self):
        r0 = solve_r0_for_kl("power-law", 0.074)
        assert r0 == pytest.approx(0.70, abs=0.01)
        assert power_law_mu(r0).kl_cap == pytest.approx(0.074, abs=1e-10)

    def test_gaussian_inverse(self):
        assert solve_r0_for_kl("gaussian", math.log(0.5) + 1.5) == pytest.approx(0.5, abs=1e-9)

    def test_small_budget_limit(self):
        for fam in ("power-law", "gaussian"):
            assert solve_r0_for_kl(fam, 1e-8) > 0.999

    @settings(max_examples=20, deadline=None)
    @given(eta=st.floats(1e-3, 0.4))
    def test_sub_exp_roundtrip(self, eta):
        r0 = solve_r0_for_kl("sub-exp", eta, kappa=1.0)
        assert make_profile("sub-exp", r0, kappa=1.0).kl_cap == pytest.approx(eta, abs=1e-9)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="achievable"):
            solve_r0_for_kl("sub-exp", 50.0)


class TestChernoff:
    def test_wcr_beyond_b(self):
        assert chernoff_tail(classical_lambda("wcr", b=1.0), 1.5) == 0.0

    def test_sub_gaussian(self):
        lb = classical_lambda("sub_gaussian", eta=0.0, sigma=1.0)
        assert chernoff_tail(lb, 2.0) == pytest.approx(math.exp(-4.0), rel=1e-9)

    def test_power_law_grid_oracle(self):
        lb = lambda_from_mu(power_law_mu(0.5))
        r = math.log(4.0)
        lam = np.linspace(0, 1, 2_000_001)[1:-1]
        vals = (lam + 1) * r - (lam * math.log(0.5) + np.log1p(lam / (1 - lam)))
        assert -math.log(chernoff_tail(lb, r)) == pytest.approx(max(vals.max(), r), abs=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(r=st.floats(0.0, 20.0))
    def test_at_most_one(self, r):
        assert chernoff_tail(lambda_from_mu(gaussian_mu(0.6)), r) <= 1.0


class TestInclusion:
    def test_identical(self):
        assert inclusion_check(power_law_mu(0.5), power_law_mu(0.5)) == "included"

    def test_power_law_nesting(self):
        assert inclusion_check(power_law_mu(0.6), power_law_mu(0.5)) == "included"

    def test_heavier_into_lighter_is_inconclusive(self):
        assert inclusion_check(power_law_mu(0.5), sub_exp_mu(0.5, 1.0)) == "inconclusive"
        assert inclusion_check(sub_exp_mu(0.5, 1.0), power_law_mu(0.5)) == "included"


class TestMembership:
    def test_baseline_is_member(self):
        P = Normal(0.0, 1.0)
        for mu in (power_law_mu(0.6), gaussian_mu(0.8), point_mass_mu()):
            assert membership_check(P, P, mu) == "member"

    def test_saturating_model_is_member(self):
        P = Exponential(1.0)
        mu = power_law_mu(0.5)
        Q = construct_saturating(P, mu).distribution
        assert membership_check(Q, P, mu) == "member"

    def test_closed_form_exponential_is_member(self):
        """Exp(r0) against Exp(1) saturates the power-law profile."""
        P, mu = Exponential(1.0), power_law_mu(0.5)
        assert membership_check(Exponential(0.5), P, mu, n_mc=200_000) == "member"

    def test_too_heavy_unresolved(self):
        P, mu = Exponential(1.0), power_law_mu(0.8)
        assert membership_check(Exponential(0.3), P, mu) == "unresolved"

    def test_discrete_exact(self):
        P = FiniteDiscrete([0, 1], [0.5, 0.5])
        mu = step_mu([0.5, 1.5], [0.5, 0.5])
        assert membership_check(FiniteDiscrete([0, 1], [0.25, 0.75]), P, mu) == "member"
        assert membership_check(FiniteDiscrete([0, 1], [0.05, 0.95]), P, mu) == "unresolved"


class TestErfcinv:
    @settings(max_examples=40, deadline=None)
    @given(y=st.floats(1e-300, 1.99))
    def test_matches_scipy(self, y):
        x = erfcinv_log(math.log(y))
        assert special.erfc(x) == pytest.approx(y, rel=1e-12)

    def test_deep_tail(self):
        for ly in (-800.0, -5000.0, -1e5):
            x = erfcinv_log(ly)
            lf = math.log(2.0) + float(special.log_ndtr(-math.sqrt(2.0) * x))
            assert abs(lf - ly) < 1e-12 * abs(ly)
