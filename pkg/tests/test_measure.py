"""Moment functionals and small-x asymptotics of mixture measures."""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import linregress

from coalcol.errors import DomainError, UnsupportedMeasure
from coalcol.measure import (
    Atom,
    BetaDensity,
    GeneralDensity,
    LambdaMeasure,
    asymptotics_of,
    beta_measure,
    beta_unit_atom_mixture,
    kingman,
    lebesgue,
    measure_from_json,
    measure_to_json,
    nu,
    nu_array,
    truncated_moment,
)

HALF_THREEHALF = beta_measure(0.5, 1.5)


class TestConstruction:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(DomainError):
            LambdaMeasure((BetaDensity(1.0, 1.0, 0.5),))

    def test_negative_weight_rejected(self):
        with pytest.raises(DomainError):
            LambdaMeasure((BetaDensity(1.0, 1.0, 1.5), Atom(0.5, -0.5)))

    def test_atom_outside_unit_interval_rejected(self):
        with pytest.raises(DomainError):
            LambdaMeasure((Atom(1.5, 1.0),))

    def test_bad_beta_parameters_rejected(self):
        with pytest.raises(DomainError):
            LambdaMeasure((BetaDensity(0.0, 1.0, 1.0),))

    def test_mixture_alpha_out_of_range(self):
        with pytest.raises(DomainError):
            beta_unit_atom_mixture(1.0)

    def test_json_round_trip(self):
        m = beta_unit_atom_mixture(0.5)
        again = measure_from_json(measure_to_json(m))
        assert again == m

    def test_json_unknown_kind(self):
        with pytest.raises(DomainError):
            measure_from_json({"components": [{"kind": "cauchy", "weight": 1.0}]})

    def test_general_density_not_serializable(self):
        m = LambdaMeasure((GeneralDensity(lambda x: 1.0, 1.0),))
        with pytest.raises(UnsupportedMeasure):
            measure_to_json(m)


class TestNu:
    def test_kingman_all_ones(self):
        assert nu(kingman(), 5) == 1.0

    def test_unit_atom(self):
        m = LambdaMeasure((Atom(1.0, 1.0),))
        assert nu(m, 3) == 0.0
        assert nu(m, 0) == 1.0

    def test_beta_half_threehalf_first_moment(self):
        # B(1/2, 5/2) / B(1/2, 3/2) = 3/4
        assert nu(HALF_THREEHALF, 1) == pytest.approx(0.75, rel=1e-12)

    def test_lebesgue_closed_form(self):
        for b in range(6):
            assert nu(lebesgue(), b) == pytest.approx(1.0 / (b + 1), rel=1e-12)

    def test_negative_order_rejected(self):
        with pytest.raises(DomainError):
            nu(lebesgue(), -1)

    @pytest.mark.parametrize(
        "m",
        [kingman(), lebesgue(), HALF_THREEHALF, beta_unit_atom_mixture(0.3)],
        ids=["kingman", "lebesgue", "beta", "mixture"],
    )
    def test_normalization(self, m):
        assert nu(m, 0) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize(
        "m",
        [lebesgue(), HALF_THREEHALF, beta_unit_atom_mixture(0.7)],
        ids=["lebesgue", "beta", "mixture"],
    )
    def test_completely_monotone(self, m):
        # nu is a moment sequence of a [0,1] variable: finite differences
        # alternate in sign at every order we care about.
        vals = nu_array(m, 202)
        d1 = np.diff(vals)
        d2 = np.diff(d1)
        assert np.all(d1 <= 1e-15)
        assert np.all(d2 >= -1e-15)

    def test_nu_array_matches_scalar(self):
        vals = nu_array(HALF_THREEHALF, 50)
        for b in (0, 1, 7, 50):
            assert vals[b] == pytest.approx(nu(HALF_THREEHALF, b), rel=1e-13)

    def test_general_density_matches_closed_form(self):
        # same beta(1/2, 3/2) law fed through the quadrature path
        const = 1.0 / math.pi * 2.0  # 1/B(1/2,3/2) = 2/pi
        rho = lambda x: const * x ** (-0.5) * (1.0 - x) ** 0.5
        m = LambdaMeasure((GeneralDensity(rho, 1.0, alpha=0.5),))
        for b in (0, 1, 4, 25):
            assert nu(m, b) == pytest.approx(nu(HALF_THREEHALF, b), rel=1e-9)

    def test_tail_residual_decays_at_declared_rate(self):
        # |nu_n * n^alpha - A Gamma(1+alpha)| should fall like n^(-varsigma')
        m = HALF_THREEHALF
        asym = asymptotics_of(m)
        limit = asym.amplitude * math.gamma(1.0 + asym.alpha)

        def residual(n):
            return abs(nu(m, n) * n**asym.alpha - limit)

        ns = np.array([100, 200, 400, 1000])
        fit = linregress(np.log(ns), np.log([residual(n) for n in ns]))
        c = math.exp(fit.intercept)
        predicted = c * 10_000.0 ** (-asym.varsigma_prime)
        assert residual(10_000) < 10.0 * predicted
        assert fit.slope == pytest.approx(-asym.varsigma_prime, abs=0.15)


class TestTruncatedMoment:
    def test_unit_atom(self):
        m = LambdaMeasure((Atom(1.0, 1.0),))
        assert truncated_moment(m, 0.5, -2) == 1.0
        assert truncated_moment(m, 1.0, -1) == 1.0

    def test_lebesgue_closed_form(self):
        # integral of y^-2 over [1/2, 1] is 1/0.5 - 1 = 1
        assert truncated_moment(lebesgue(), 0.5, -2) == pytest.approx(1.0, rel=1e-10)

    def test_beta_closed_form_against_quadrature(self):
        m = HALF_THREEHALF
        for x, order in [(0.3, -1), (0.7, -2), (1e-3, -1)]:
            direct, _ = integrate.quad(
                lambda y: y**order * (2.0 / math.pi) * y**-0.5 * (1.0 - y) ** 0.5, x, 1.0
            )
            assert truncated_moment(m, x, order) == pytest.approx(direct, rel=1e-8)

    def test_divergence_rate_near_zero(self):
        # G_{-2}(x) ~ (A alpha / (2 - alpha)) x^(alpha - 2) as x -> 0
        m = HALF_THREEHALF
        asym = asymptotics_of(m)
        x = 1e-4
        predicted = asym.amplitude * asym.alpha / (2.0 - asym.alpha) * x ** (asym.alpha - 2.0)
        assert truncated_moment(m, x, -2) == pytest.approx(predicted, rel=0.05)

    def test_nonpositive_cut_rejected(self):
        with pytest.raises(DomainError):
            truncated_moment(lebesgue(), 0.0, -2)

    def test_unsupported_order_rejected(self):
        with pytest.raises(DomainError):
            truncated_moment(lebesgue(), 0.5, -3)


class TestAsymptotics:
    def test_beta_half_threehalf(self):
        asym = asymptotics_of(HALF_THREEHALF)
        assert asym.alpha == 0.5
        # A = 1 / (alpha * B(1/2, 3/2)) = 1 / (0.5 * pi/2) = 4/pi
        assert asym.amplitude == pytest.approx(4.0 / math.pi, rel=1e-12)
        assert asym.varsigma == 1.0
        assert asym.varsigma_prime == 1.0

    def test_amplitude_matches_distribution_function_fit(self):
        asym = asymptotics_of(HALF_THREEHALF)
        for x in (1e-5, 1e-7):
            mass, _ = integrate.quad(
                lambda y: (2.0 / math.pi) * y**-0.5 * (1.0 - y) ** 0.5, 0.0, x
            )
            assert mass / x**asym.alpha == pytest.approx(asym.amplitude, rel=1e-3)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
    def test_unit_atom_mixture(self, alpha):
        asym = asymptotics_of(beta_unit_atom_mixture(alpha))
        assert asym.alpha == alpha
        assert asym.amplitude == pytest.approx(1.0 - alpha / 2.0, rel=1e-12)

    def test_kingman_unsupported(self):
        with pytest.raises(UnsupportedMeasure):
            asymptotics_of(kingman())

    def test_lebesgue_unsupported(self):
        # exponent 1 is outside the open interval
        with pytest.raises(UnsupportedMeasure):
            asymptotics_of(lebesgue())

    def test_two_beta_mixture_correction_gap(self):
        m = LambdaMeasure((BetaDensity(0.3, 1.0, 0.5), BetaDensity(0.8, 1.5, 0.5)))
        asym = asymptotics_of(m)
        assert asym.alpha == 0.3
        assert asym.varsigma == pytest.approx(0.5)

    def test_general_density_requires_declared_asymptotics(self):
        m = LambdaMeasure((GeneralDensity(lambda x: 1.0, 1.0),))
        with pytest.raises(UnsupportedMeasure):
            asymptotics_of(m)
