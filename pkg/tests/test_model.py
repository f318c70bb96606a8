import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from banksim import (
    ContagionFamily,
    DefaultRateFamily,
    DistFamily,
    ModelSpec,
    RateFamily,
    Scaling,
    eval_rates,
    model_spec_from_dict,
    model_spec_to_dict,
    sample_dist,
)
from banksim.model import DomainError
from banksim.rng import RngStream


def make_spec(**kw):
    base = dict(
        r=0.05,
        sigma=0.2,
        birth_rate=RateFamily("constant", 1.0),
        default_rate=DefaultRateFamily("hyperbolic", a=0.2, b=0.01),
        birth_size=DistFamily("exponential", rate=1.0),
        contagion=ContagionFamily("uniform_over_count", d=1.0),
        scaling=Scaling(1),
    )
    base.update(kw)
    return ModelSpec(**base)


class TestEvalRates:
    def test_hyperbolic_kappa_at_figure_values(self):
        # kappa = 0.2 n / (0.01 + x) at n=5, x=0.99 gives exactly 1.0
        spec = make_spec()
        lam, kap = eval_rates(spec, 5, 12.3, 0.99)
        assert lam == 1.0
        assert kap == pytest.approx(1.0, abs=1e-15)

    def test_zero_constant_birth_rate(self):
        spec = make_spec(birth_rate=RateFamily("constant", 0.0))
        lam, _ = eval_rates(spec, 3, 7.0, 1.0)
        assert lam == 0.0

    def test_linear_birth_rate(self):
        spec = make_spec(birth_rate=RateFamily("linear_in_n", 0.2))
        lam, _ = eval_rates(spec, 100, 0.0, 1.0)
        assert lam == 20.0

    def test_kappa_clamped_at_cap(self):
        spec = make_spec(default_rate=DefaultRateFamily("hyperbolic", a=0.2, b=0.01, cap=10.0))
        _, kap = eval_rates(spec, 50, 1.0, 1e-6)
        assert kap == 10.0

    def test_negative_inputs_rejected(self):
        spec = make_spec()
        with pytest.raises(DomainError):
            eval_rates(spec, -1, 0.0, 1.0)
        with pytest.raises(DomainError):
            eval_rates(spec, 1, -0.5, 1.0)
        with pytest.raises(DomainError):
            eval_rates(spec, 1, 0.5, 0.0)

    def test_linear_in_n0_needs_scaling(self):
        spec = make_spec(
            birth_rate=RateFamily("linear_in_n0", 0.2),
            scaling=Scaling(2, n0=100),
        )
        lam, _ = eval_rates(spec, 37, 0.0, 1.0)
        assert lam == 20.0

    @given(n1=st.integers(0, 50), n2=st.integers(0, 50), s=st.floats(0, 100))
    @settings(max_examples=50)
    def test_linear_in_n_monotone(self, n1, n2, s):
        fam = RateFamily("linear_in_n", 0.3)
        lo, hi = sorted((n1, n2))
        assert fam.rate(lo, s) <= fam.rate(hi, s)

    @given(n=st.integers(0, 100), s=st.floats(0, 1000))
    @settings(max_examples=50)
    def test_birth_rate_linear_bound(self, n, s):
        # every family satisfies rate <= C (n + s + 1) with C the coefficient
        for fam in (RateFamily("constant", 0.7),
                    RateFamily("linear_in_n", 0.7),
                    RateFamily("linear_in_s", 0.7)):
            assert fam.rate(n, s) <= 0.7 * (n + s + 1) + 1e-12


class TestSampleDist:
    def test_dirac(self):
        rng = RngStream(1)
        assert sample_dist(DistFamily("dirac", v=0.7), rng) == 0.7

    def test_uniform_over_count_moment(self):
        # Uniform(0, 1/4) has mean 1/8 and variance (1/4)^2/12
        fam = ContagionFamily("uniform_over_count", d=1.0)
        rng = RngStream(7)
        draws = fam.sample(4, rng, size=100_000)
        assert np.all((draws > 0) & (draws < 0.25))
        se = (0.25 / math.sqrt(12)) / math.sqrt(draws.size)
        assert abs(draws.mean() - 0.125) < 3 * se

    def test_exponential_unit_mean(self):
        fam = DistFamily("exponential", rate=1.0)
        rng = RngStream(11)
        draws = fam.sample(rng, size=100_000)
        se = 1.0 / math.sqrt(draws.size)
        assert abs(draws.mean() - 1.0) < 3 * se

    def test_reproducible(self):
        fam = DistFamily("lognormal", mu=0.0, s=1.0)
        a = sample_dist(fam, RngStream(5, 3))
        b = sample_dist(fam, RngStream(5, 3))
        assert a == b

    def test_supports(self):
        rng = RngStream(2)
        for fam in (DistFamily("exponential", rate=2.0),
                    DistFamily("lognormal"),
                    DistFamily("uniform", lo=0.5, hi=2.0),
                    DistFamily("dirac", v=3.0)):
            draws = np.atleast_1d(fam.sample(rng, size=1000))
            assert np.all(draws > 0)


class TestMoments:
    def test_exponential_moments(self):
        fam = DistFamily("exponential", rate=2.0)
        assert fam.mean() == 0.5
        assert fam.moment(2) == pytest.approx(2 / 4)  # Gamma(3)/rate^2
        assert fam.moment(1) == pytest.approx(fam.mean())

    def test_lognormal_mean(self):
        fam = DistFamily("lognormal", mu=0.0, s=1.0)
        assert fam.mean() == pytest.approx(math.exp(0.5))
        assert fam.moment(2) == pytest.approx(math.exp(2.0))

    def test_uniform_moment(self):
        fam = DistFamily("uniform", lo=1.0, hi=3.0)
        assert fam.mean() == 2.0
        # (27 - 1) / (3 * 2)
        assert fam.moment(2) == pytest.approx(26 / 6)

    def test_contagion_scaled_mean(self):
        fam = ContagionFamily("uniform_over_count", d=1.0)
        # n * Uniform(0, 1/n) is Uniform(0, 1): scaled mean 0.5 at any n
        assert fam.mean_scaled() == 0.5
        assert fam.mean(10) == pytest.approx(0.05)


class TestValidation:
    def test_sigma_positive(self):
        with pytest.raises(ValueError):
            make_spec(sigma=0.0)

    def test_contagion_bounds(self):
        with pytest.raises(ValueError):
            ContagionFamily("constant", v=1.0)
        with pytest.raises(ValueError):
            ContagionFamily("uniform_over_count", d=1.5)

    def test_setting2_requires_n0(self):
        with pytest.raises(ValueError):
            Scaling(2)

    def test_bad_forms(self):
        with pytest.raises(ValueError):
            RateFamily("quadratic", 1.0)
        with pytest.raises(ValueError):
            DistFamily("cauchy")


class TestConfigRoundTrip:
    def test_round_trip(self):
        spec = make_spec()
        again = model_spec_from_dict(model_spec_to_dict(spec))
        assert again == spec

    def test_round_trip_setting2(self):
        spec = make_spec(
            birth_rate=RateFamily("linear_in_n0", 0.2),
            default_rate=DefaultRateFamily("constant", c=0.1),
            contagion=ContagionFamily("uniform_over_n0", d=1.0),
            birth_size=DistFamily("uniform", lo=0.1, hi=0.9),
            scaling=Scaling(2, n0=50),
        )
        assert model_spec_from_dict(model_spec_to_dict(spec)) == spec
