import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sas_bayes.datagen import Dataset
from sas_bayes.errors import ConfigError, DomainError
from sas_bayes.forward import SphereConstants, SphereModel
from sas_bayes.inference import (GammaPrior, PriorSpec, Target, cost_E, log_factorial_sum,
                                 log_prior, log_tempered_posterior, prior_rows)

# goldens from tests/oracles/compute_goldens.py (mpmath loggamma at 40 digits)
LOG_1000_FACT = 5912.128178488163
LOG_5_FACT = 4.787491742782046

NM = SphereConstants(1.0, 1e-4, 6.3e-4, intensity_scale=1.0)
MONO = SphereModel("mono", NM)


def _poisson_product(lam, y):
    mpmath.mp.dps = 50
    p = mpmath.mpf(1)
    for l, k in zip(lam, y):
        l = mpmath.mpf(float(l))
        p *= l ** int(k) * mpmath.exp(-l) / mpmath.factorial(int(k))
    return p


class TestLogFactorial:
    def test_small(self):
        assert log_factorial_sum(0) == 0.0
        assert log_factorial_sum(1) == 0.0
        assert log_factorial_sum(5) == pytest.approx(LOG_5_FACT, rel=1e-15)

    def test_large(self):
        assert log_factorial_sum(1000) == pytest.approx(LOG_1000_FACT, rel=1e-14)

    def test_table_boundary(self):
        for y in (255, 256, 257, 258):
            assert log_factorial_sum(y) == pytest.approx(math.lgamma(y + 1), rel=1e-13)

    def test_vector(self):
        y = np.array([0, 3, 300])
        np.testing.assert_allclose(log_factorial_sum(y), [math.lgamma(v + 1) for v in y], rtol=1e-13)

    def test_negative(self):
        with pytest.raises(DomainError):
            log_factorial_sum(-1)


class TestCost:
    def test_zero_counts_finite(self):
        d = Dataset(np.linspace(0.5, 3.0, 10), np.zeros(10, dtype=int))
        c = cost_E({"R": 10, "b": 0.01, "t": 10}, d, MONO)
        lam = MONO.intensity(d.q, [10, 0.01, 10])[0]
        assert math.isfinite(c.E)
        assert c.E == pytest.approx(lam.mean(), rel=1e-13)
        assert c.N == 10

    def test_perfect_fit_constant(self):
        # y = I exactly: E = mean(I - I log I + log I!)
        q = np.array([0.0])
        lam = MONO.intensity(q, [10, 0.01, 10])[0][0]
        y = round(lam)
        c = cost_E([10, 0.01, 10], Dataset([0.0], [y]), MONO)
        assert c.E == pytest.approx(lam - y * math.log(lam) + math.lgamma(y + 1), rel=1e-12)

    def test_likelihood_identity(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            q = np.sort(rng.uniform(0.01, 3.0, 10))
            theta = [rng.uniform(2, 20), rng.uniform(0.01, 2), rng.uniform(0.5, 20)]
            lam = MONO.intensity(q, theta)[0]
            y = rng.poisson(lam)
            d = Dataset(q, y)
            c = cost_E(theta, d, MONO)
            ours = mpmath.exp(-c.N * mpmath.mpf(c.E))
            ref = _poisson_product(lam, y)
            assert abs(ours / ref - 1) < 1e-10

    def test_five_point_identity(self):
        q = np.array([0.05, 0.3, 0.8, 1.5, 2.9])
        theta = [6.0, 0.5, 4.0]
        lam = MONO.intensity(q, theta)[0]
        y = np.array([3, 0, 2, 1, 5])
        c = cost_E(theta, Dataset(q, y), MONO)
        assert abs(mpmath.exp(-c.N * mpmath.mpf(c.E)) / _poisson_product(lam, y) - 1) < 1e-12

    def test_rejects_non_positive(self):
        d = Dataset([0.1], [1])
        with pytest.raises(DomainError):
            cost_E([10, 0.0, 1.0], d, MONO)


class TestPrior:
    @given(st.floats(0.2, 5.0), st.floats(0.1, 500.0), st.floats(1e-3, 2000.0))
    @settings(max_examples=80, deadline=None)
    def test_matches_scipy(self, a, s, x):
        assert GammaPrior(a, s).logpdf(x) == pytest.approx(stats.gamma(a, scale=s).logpdf(x), rel=1e-9, abs=1e-9)

    def test_support(self):
        assert GammaPrior(1.8, 1.0).logpdf(0.0) == -math.inf
        assert GammaPrior(1.8, 1.0).logpdf(-1.0) == -math.inf

    def test_modes(self):
        assert GammaPrior(1.5, 100).mode() == pytest.approx(50.0)
        assert GammaPrior(1.8, 50).mode() == pytest.approx(40.0)
        assert GammaPrior(1.8, 1).mode() == pytest.approx(0.8)
        assert GammaPrior(1.1, 500).mode() == pytest.approx(50.0)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            GammaPrior(0.0, 1.0)

    def test_sum(self):
        spec = PriorSpec.default(["R", "b", "t"])
        theta = {"R": 10.0, "b": 0.01, "t": 10.0}
        expect = sum(stats.gamma(spec[n].shape, scale=spec[n].scale).logpdf(v) for n, v in theta.items())
        assert log_prior(theta, spec) == pytest.approx(expect, rel=1e-12)
        rows = prior_rows(spec, ["R", "b", "t"], [[10.0, 0.01, 10.0], [10.0, -1.0, 10.0]])
        assert rows[0] == pytest.approx(expect, rel=1e-12)
        assert rows[1] == -math.inf

    def test_round_trip(self):
        spec = PriorSpec.default(["R", "sigma", "b", "t"])
        assert PriorSpec.from_dict(spec.to_dict()) == spec

    def test_missing_field(self):
        with pytest.raises(ConfigError) as exc:
            PriorSpec.from_dict({"R": {"shape": 1.0}})
        assert exc.value.field == "prior.R"


class TestTemperedPosterior:
    def setup_method(self):
        self.d = Dataset(np.linspace(0.1, 2.0, 10), np.arange(10))
        self.spec = PriorSpec.default(["R", "b", "t"])
        self.theta = {"R": 8.0, "b": 0.2, "t": 3.0}

    def test_beta_zero_is_prior(self):
        v = log_tempered_posterior(self.theta, 0.0, self.d, self.spec, MONO)
        assert v == log_prior(self.theta, self.spec)

    def test_beta_one(self):
        c = cost_E(self.theta, self.d, MONO)
        v = log_tempered_posterior(self.theta, 1.0, self.d, self.spec, MONO)
        assert v == pytest.approx(-10 * c.E + log_prior(self.theta, self.spec), rel=1e-13)

    def test_outside_support(self):
        bad = dict(self.theta, b=-0.1)
        assert log_tempered_posterior(bad, 0.5, self.d, self.spec, MONO) == -math.inf

    def test_beta_range(self):
        with pytest.raises(DomainError):
            log_tempered_posterior(self.theta, 1.5, self.d, self.spec, MONO)

    def test_target_batch(self):
        t = Target(self.d, MONO, self.spec)
        rows = np.array([[8.0, 0.2, 3.0], [12.0, 0.05, 1.0]])
        E = t.energy_rows(rows)
        for r, e in zip(rows, E):
            assert e == pytest.approx(cost_E(r, self.d, MONO).E, rel=1e-13)

    def test_target_requires_full_prior(self):
        with pytest.raises(ConfigError):
            Target(self.d, MONO, PriorSpec.default(["R", "b"]))
