"""Tests for saturating constructions, their verification and sandwich members."""

import math

import numpy as np
import pytest
from scipy import integrate, special

from conftest import random_discrete
from renyi_uq.ambiguity import (gaussian_mu, membership_check, point_mass_mu, power_law_mu,
                                step_mu, sub_exp_mu)
from renyi_uq.construct import (aligned_step_profile, construct_saturating, sandwich_member,
                                sandwich_weights, verify_saturation)
from renyi_uq.dist import KDE, Exponential, FiniteDiscrete, Gamma, Normal, UnsupportedShapeError
from renyi_uq.renyi import kl_divergence

BASELINES = [Exponential(1.0), Normal(0.0, 1.0), Gamma(3.0, 2.0)]
PROFILES = [power_law_mu(0.75), sub_exp_mu(0.75, 0.5), sub_exp_mu(0.75, 1.0),
            sub_exp_mu(0.75, 2.0), gaussian_mu(0.85)]


class TestClosedForms:
    def test_exponential_power_law(self):
        """Exp(1) with a power-law profile becomes Exp(r0)."""
        model = construct_saturating(Exponential(1.0), power_law_mu(0.5))
        Q = model.distribution
        assert isinstance(Q, Exponential) and Q.rate == pytest.approx(0.5)
        t = np.linspace(0, 10, 7)
        np.testing.assert_allclose(model.ratio(t), 0.5 * np.exp(0.5 * t), rtol=1e-10)

    def test_exponential_sub_exp(self):
        """phi(p(t)) = r0 + (rate t / eta)^(1/kappa)."""
        P, mu = Exponential(2.0), sub_exp_mu(0.6, 1.5)
        model = construct_saturating(P, mu)
        t = np.linspace(0.01, 6, 25)
        expect = 0.6 + (2.0 * t / mu.params["eta"]) ** (1 / 1.5)
        np.testing.assert_allclose(model.ratio(t), expect, rtol=1e-9)

    def test_normal_sub_exp_density(self):
        """Density against the erfc expression, and unit mass by quadrature."""
        P, mu = Normal(0.0, 1.0), sub_exp_mu(0.75, 2.0)
        eta = mu.params["eta"]
        model = construct_saturating(P, mu)

        def q_oracle(x):
            log_psi = math.log(2.0) + special.log_ndtr(-abs(x))
            return (0.75 + (-log_psi / eta) ** 0.5) * math.exp(-x * x / 2) / math.sqrt(2 * math.pi)

        x = np.linspace(-6, 6, 61)
        np.testing.assert_allclose(model.density(x), [q_oracle(v) for v in x], rtol=1e-9)
        mass, _ = integrate.quad(q_oracle, -np.inf, np.inf, limit=200)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_point_mass_is_identity(self):
        P = Gamma(3.0, 2.0)
        model = construct_saturating(P, point_mass_mu())
        assert model.distribution is P
        assert model.ratio(1.7) == 1.0
        assert verify_saturation(model).passed


class TestSaturationMatrix:
    @pytest.mark.parametrize("P", BASELINES, ids=lambda P: type(P).__name__)
    @pytest.mark.parametrize("mu", PROFILES,
                             ids=lambda m: f"{m.family}-{m.params.get('kappa', '')}")
    def test_verify_passes(self, P, mu):
        rep = verify_saturation(construct_saturating(P, mu))
        assert rep.mass_ok and rep.g_ok and rep.lambda_ok and rep.kl_ok, rep.as_dict()
        assert rep.kl == pytest.approx(mu.kl_cap, abs=1e-5)

    @pytest.mark.parametrize("P", BASELINES, ids=lambda P: type(P).__name__)
    def test_minimum_ratio_at_mode(self, P):
        model = construct_saturating(P, gaussian_mu(0.85))
        assert model.ratio(P.mode) == pytest.approx(0.85, abs=1e-6)
        lo, hi = P.ppf(1e-6), P.ppf(1 - 1e-6)
        x = np.linspace(lo, hi, 301)
        assert np.min(model.ratio(x)) >= 0.85 - 1e-9

    def test_phi_non_increasing(self):
        P = Gamma(3.0, 2.0)
        model = construct_saturating(P, sub_exp_mu(0.5, 1.0))
        y = np.linspace(1e-6, float(P.pdf(P.mode)), 80)
        phi = model.phi(y)
        assert np.all(np.diff(phi) <= 1e-12)

    def test_fig4_grid(self):
        model = construct_saturating(Normal(0.0, 1.0), sub_exp_mu(0.75, 2.0))
        grid = np.geomspace(0.75 * 1e-4, 5.0, 64)
        assert verify_saturation(model, r_grid=grid).passed


class TestDiscreteConstruction:
    def test_random_aligned_profiles(self, rng):
        for _ in range(25):
            P = random_discrete(rng)
            mu = aligned_step_profile(P, rng)
            model = construct_saturating(P, mu)
            rep = verify_saturation(model)
            assert rep.passed, rep.as_dict()

    def test_misaligned_profile_rejected(self):
        P = FiniteDiscrete([0, 1, 2], [0.1, 0.2, 0.7])
        with pytest.raises(ValueError):
            construct_saturating(P, step_mu([0.5, 1.5], [0.5, 0.5]))


class TestErrors:
    def test_multimodal_baseline(self):
        K = KDE(np.array([-5.0, -4.9, 5.0, 5.1, 0.0]), 0.3)
        with pytest.raises(UnsupportedShapeError):
            construct_saturating(K, power_law_mu(0.7))

    def test_step_profile_on_continuous(self):
        with pytest.raises(ValueError):
            construct_saturating(Normal(0, 1), step_mu([0.5, 1.5], [0.5, 0.5]))


class TestSandwich:
    def test_theta_one_recovers_q0(self):
        P = Normal(0.0, 1.0)
        Q0 = construct_saturating(P, power_law_mu(0.7))
        Q = sandwich_member(P, Q0, 1.0, 1.0)
        x = np.linspace(-4, 4, 17)
        np.testing.assert_allclose(Q.pdf(x), Q0.density(x), rtol=1e-9)

    @pytest.mark.parametrize("theta", [0.0, 0.3, 0.7])
    def test_gray_region(self, theta):
        """With r0 = 1 the member sits between min(q0, p) and max(q0, p)."""
        P = Normal(0.0, 1.0)
        Q0 = construct_saturating(P, sub_exp_mu(0.75, 1.0))
        Q = sandwich_member(P, Q0, 1.0, theta)
        x = np.linspace(-5, 5, 201)
        q, q0, p = Q.pdf(x), Q0.density(x), P.pdf(x)
        assert np.all(q >= np.minimum(q0, p) * (1 - 1e-9))
        assert np.all(q <= np.maximum(q0, p) * (1 + 1e-9))
        mass, _ = integrate.quad(Q.pdf, -np.inf, np.inf, limit=200)
        assert mass == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("r0,theta", [(0.9, 0.3), (1.0, 0.0), (1.5, 0.5)])
    def test_exponential_member(self, r0, theta):
        P, mu = Exponential(1.0), power_law_mu(0.75)
        Q0 = construct_saturating(P, mu)
        Q = sandwich_member(P, Q0, r0, theta)
        assert membership_check(Q, P, mu) == "member"
        assert kl_divergence(Q, P) <= mu.kl_cap + 1e-9

    def test_discrete_members(self, rng):
        for _ in range(20):
            P = random_discrete(rng)
            mu = aligned_step_profile(P, rng)
            Q0 = construct_saturating(P, mu).distribution
            v = np.asarray(mu.params["values"])
            Q = sandwich_member(P, Q0, rng.uniform(v.min(), v.max()), rng.uniform())
            assert Q.probs.sum() == pytest.approx(1.0, abs=1e-12)
            assert membership_check(Q, P, mu) == "member"

    def test_weight_validation(self):
        P = Normal(0.0, 1.0)
        Q0 = construct_saturating(P, power_law_mu(0.7))
        with pytest.raises(ValueError):
            sandwich_weights(P, Q0, 1.0, 1.5)
        with pytest.raises(ValueError):
            sandwich_weights(P, Q0, 0.0, 0.5)
