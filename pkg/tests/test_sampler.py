import math
import sys
from pathlib import Path

import numpy as np
import pytest

from sas_bayes.datagen import Dataset, generate_dataset, make_q_grid
from sas_bayes.errors import ChainFileError, ConfigError
from sas_bayes.forward import SphereConstants, SphereModel
from sas_bayes.inference import PriorSpec, Target
from sas_bayes.sampler import (ReplicaState, SamplerConfig, build_ladder, default_step_sizes,
                               exchange_pass, load_samples, metropolis_sweep, run_emc, save_samples,
                               step_size_adapt)

sys.path.insert(0, str(Path(__file__).parent / "oracles"))
from grid_oracle import two_replica_swap_rate  # noqa: E402

# 1.7 ** -30 in double precision
BETA2_32_17 = 1.2204847539049903e-07

MONO_C = SphereConstants(1.0, 1e-4, 6.3e-4)


def _toy(n=50, seed=7):
    d = generate_dataset("mono", {"R": 10.0, "b": 0.01, "t": 10.0}, MONO_C, make_q_grid(0.01, 3.0, n), seed)
    model = SphereModel("mono", MONO_C, fixed={"b": 0.01, "t": 10.0})
    return d, model, PriorSpec.default(["R"])


class TestLadder:
    def test_forty(self):
        lad = build_ladder(40, 2.2)
        assert lad.L == 40
        assert lad.betas[0] == 0.0 and lad.betas[-1] == 1.0
        assert lad.betas[-2] == pytest.approx(1 / 2.2, rel=1e-15)

    def test_two(self):
        assert build_ladder(2, 10).betas == (0.0, 1.0)

    def test_thirty_two(self):
        lad = build_ladder(32, 1.7)
        assert len(lad.betas) == 32
        assert lad.betas[1] == pytest.approx(BETA2_32_17, rel=1e-15)

    @pytest.mark.parametrize("args", [(1, 2.0), (10, 1.0), (10, 0.5)])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            build_ladder(*args)


class TestMetropolis:
    def setup_method(self):
        self.d = Dataset(np.linspace(0.1, 2.0, 10), np.arange(10))
        self.model = SphereModel("mono", MONO_C)
        self.target = Target(self.d, self.model, PriorSpec.default(self.model.free_names))
        theta = np.array([[8.0, 0.2, 3.0], [12.0, 0.05, 1.0]])
        self.state = ReplicaState(theta, self.target.energy_rows(theta), self.target.log_prior_rows(theta),
                                  np.array([0.0, 1.0]))

    def test_zero_step_always_accepted(self):
        u = np.full((2, 4), 0.999999)
        new, acc = metropolis_sweep(self.state, self.target, np.zeros((2, 3)), u)
        assert acc.all()
        np.testing.assert_array_equal(new.theta, self.state.theta)

    def test_negative_background_rejected(self):
        steps = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        u = np.zeros((2, 4))  # proposal b - 1 < 0, accept draw 0
        u[:, 3] = 1e-300
        new, acc = metropolis_sweep(self.state, self.target, steps, u)
        assert not acc.any()
        np.testing.assert_array_equal(new.theta, self.state.theta)
        np.testing.assert_array_equal(new.E, self.state.E)

    def test_rejection_leaves_state(self):
        steps = np.full((2, 3), 5.0)
        u = np.full((2, 4), 0.99)
        u[:, 3] = 1.0 - 1e-16
        new, acc = metropolis_sweep(self.state, self.target, steps, u)
        for l in range(2):
            if not acc[l]:
                np.testing.assert_array_equal(new.theta[l], self.state.theta[l])


class TestExchange:
    def _state(self, E, betas=(0.0, 0.5, 1.0)):
        L = len(E)
        theta = np.arange(L, dtype=float)[:, None]
        return ReplicaState(theta, np.array(E, dtype=float), np.zeros(L), np.array(betas))

    def test_equal_energy_swaps(self):
        st = self._state([2.0, 2.0, 2.0])
        flags = exchange_pass(st, 10, np.full(2, 0.999999))
        assert flags.all()
        # ascending pass carries the first payload to the top
        np.testing.assert_array_equal(st.theta[:, 0], [1.0, 2.0, 0.0])
        np.testing.assert_array_equal(st.betas, [0.0, 0.5, 1.0])

    def test_swap_probability(self):
        # E_{l+1} < E_l: W = exp(N dbeta dE) < 1
        n, e_lo, e_hi = 10, 1.0, 1.2
        w = math.exp(n * 1.0 * (e_lo - e_hi))
        st = self._state([e_hi, e_lo], betas=(0.0, 1.0))
        assert not exchange_pass(st, n, np.array([w * 1.001]))[0]
        st = self._state([e_hi, e_lo], betas=(0.0, 1.0))
        assert exchange_pass(st, n, np.array([w * 0.999]))[0]
        np.testing.assert_array_equal(st.E, [e_lo, e_hi])

    def test_worse_state_at_high_beta_always_swaps(self):
        st = self._state([1.0, 5.0], betas=(0.0, 1.0))
        assert exchange_pass(st, 3, np.array([0.999999]))[0]

    def test_two_replica_rate_matches_integral(self):
        # low-count data keep the posterior broad enough for frequent swaps
        c = SphereConstants(1.0, 1e-4, 6.3e-4, intensity_scale=1.0)
        d = generate_dataset("mono", {"R": 10.0, "b": 0.01, "t": 10.0}, c, make_q_grid(0.01, 1.0, 20), 3)
        model = SphereModel("mono", c, fixed={"b": 0.01, "t": 10.0})
        expected, _ = two_replica_swap_rate(d.q, d.y.astype(float), 0.01, 10.0, 1.0, r_max=2000.0, m=100_000)
        rates = [run_emc(model, d, PriorSpec.default(["R"]),
                         SamplerConfig(build_ladder(2, 2.0), 5000, 20000, seed=s)).exchange_rates()[0]
                 for s in range(10)]
        se = np.std(rates, ddof=1) / math.sqrt(len(rates))
        assert abs(np.mean(rates) - expected) < 2 * se


class TestAdapt:
    def test_fixed_point(self):
        steps = np.array([[1.0, 2.0]])
        np.testing.assert_array_equal(step_size_adapt(np.array([0.3]), steps), steps)

    def test_grows_when_accepting(self):
        steps = np.array([[1.0, 2.0]])
        assert np.all(step_size_adapt(np.array([1.0]), steps) > steps)
        assert np.all(step_size_adapt(np.array([0.0]), steps) < steps)

    def test_spread_reshapes_ratios(self):
        steps = np.array([[1.0, 1.0]])
        new = step_size_adapt(np.array([0.3]), steps, spread=np.array([[4.0, 1.0]]))
        assert new[0, 0] / new[0, 1] == pytest.approx(4.0)
        assert math.sqrt(new[0, 0] * new[0, 1]) == pytest.approx(1.0)

    def test_spread_change_limited(self):
        new = step_size_adapt(np.array([0.3]), np.array([[1.0, 1.0]]), spread=np.array([[1e6, 1.0]]))
        assert new[0, 0] == pytest.approx(10.0) and new[0, 1] == pytest.approx(0.1)

    def test_zero_spread_keeps_ratios(self):
        new = step_size_adapt(np.array([0.3]), np.array([[1.0, 3.0]]), spread=np.array([[0.0, 1.0]]))
        np.testing.assert_array_equal(new, [[1.0, 3.0]])

    def test_default_steps(self):
        prior = PriorSpec.default(["R", "b"])
        np.testing.assert_allclose(default_step_sizes(prior, ["R", "b"]), [0.05 * 150, 0.05 * 1.8])


class TestRun:
    def test_shapes_single_sample(self):
        d, model, prior = _toy()
        s = run_emc(model, d, prior, SamplerConfig(build_ladder(2, 2.0), 0, 1, seed=1))
        assert s.chains.shape == (2, 1, 1)
        assert s.energies.shape == (2, 1)
        assert s.exchange_accepted.shape == (1,)

    def test_sample_count_and_slots(self):
        d, model, prior = _toy()
        cfg = SamplerConfig(build_ladder(4, 2.0), 300, 250, seed=1, debug=True)
        s = run_emc(model, d, prior, cfg)
        assert s.chains.shape == (4, 250, 1)
        np.testing.assert_array_equal(s.betas, cfg.ladder.betas)
        assert s.exchange_attempted == 250

    def test_cached_energy_consistent(self):
        d, model, prior = _toy()
        s = run_emc(model, d, prior, SamplerConfig(build_ladder(3, 2.0), 100, 100, seed=4))
        t = Target(d, model, prior)
        for l in range(3):
            np.testing.assert_allclose(t.energy_rows(s.chains[l][-5:]), s.energies[l][-5:], rtol=1e-12)

    def test_deterministic(self):
        d, model, prior = _toy()
        cfg = SamplerConfig(build_ladder(4, 2.0), 200, 200, seed=9)
        a = run_emc(model, d, prior, cfg)
        b = run_emc(model, d, prior, cfg)
        np.testing.assert_array_equal(a.chains, b.chains)
        np.testing.assert_array_equal(a.energies, b.energies)
        c = run_emc(model, d, prior, SamplerConfig(build_ladder(4, 2.0), 200, 200, seed=10))
        assert not np.array_equal(a.chains, c.chains)

    def test_thread_count_identical(self):
        c = SphereConstants(0.01, 1e-4, 6.3e-4)
        theta = {"R": 10.0, "sigma": 2.0, "b": 0.001, "t": 100.0}
        d = generate_dataset("poly", theta, c, make_q_grid(0.01, 7.0, 42), 56)
        model = SphereModel("poly", c)
        prior = PriorSpec.default(model.free_names)
        runs = [run_emc(model, d, prior, SamplerConfig(build_ladder(6, 1.7), 100, 100, seed=3, threads=n))
                for n in (1, 2, 4)]
        for r in runs[1:]:
            np.testing.assert_array_equal(runs[0].chains, r.chains)
            np.testing.assert_array_equal(runs[0].energies, r.energies)

    def test_toy_adapted_acceptance(self):
        # default steps start ~300x too wide; at most exp(-0.3) per window, so
        # the burn-in must allow ~20 windows
        d, model, prior = _toy()
        s = run_emc(model, d, prior, SamplerConfig(build_ladder(8, 2.2), 30_000, 5_000, seed=1))
        assert np.all((0.15 <= s.move_rates()) & (s.move_rates() <= 0.5))

    def test_exchange_leaves_marginals(self):
        # only b free: intensity is linear in b, so every tempered posterior is
        # log-concave and each slot mixes without exchanges too
        c = SphereConstants(1.0, 1e-4, 6.3e-4, intensity_scale=1.0)
        d = generate_dataset("mono", {"R": 10.0, "b": 0.01, "t": 10.0}, c, make_q_grid(0.01, 1.0, 20), 3)
        model = SphereModel("mono", c, fixed={"R": 10.0, "t": 10.0})
        out = []
        for ex in (True, False):
            cfg = SamplerConfig(build_ladder(4, 3.0), 10_000, 40_000, seed=5, exchange=ex)
            out.append(run_emc(model, d, PriorSpec.default(["b"]), cfg).chains[:, :, 0])
        for l in range(4):
            a, b = out[0][l], out[1][l]
            # batch-means standard error of the difference of means
            se = math.sqrt(sum(np.var(c.reshape(50, -1).mean(axis=1), ddof=1) / 50 for c in (a, b)))
            assert abs(a.mean() - b.mean()) < 4 * se, l

    def test_fixed_kernel_matches_grid_oracle(self):
        # no adaptation, symmetric uniform proposal of fixed width
        from grid_oracle import toy_moments
        d, model, prior = _toy()
        mean, var, _ = toy_moments(d.q, d.y.astype(float), 0.01, 10.0)
        cfg = SamplerConfig(build_ladder(8, 2.2), 100_000, 100_000, seed=1, step_sizes={"R": 0.02},
                            adapt_burn_in=False)
        chain = run_emc(model, d, prior, cfg).target_chain[:, 0]
        assert abs(chain.mean() / mean - 1) < 0.02
        assert abs(chain.var() / var - 1) < 0.05

    def test_missing_step_size(self):
        d, model, prior = _toy()
        with pytest.raises(ConfigError):
            run_emc(model, d, prior, SamplerConfig(build_ladder(2, 2.0), 1, 1, step_sizes={"b": 1.0}))

    @pytest.mark.parametrize("kw", [dict(burn_in=-1), dict(samples=0), dict(threads=0), dict(seed=-2)])
    def test_config_validation(self, kw):
        base = dict(ladder=build_ladder(2, 2.0), burn_in=1, samples=1)
        base.update(kw)
        with pytest.raises(ConfigError):
            SamplerConfig(**base).validate()


class TestPersistence:
    def test_round_trip(self, tmp_path):
        d, model, prior = _toy()
        s = run_emc(model, d, prior, SamplerConfig(build_ladder(3, 2.0), 50, 40, seed=2))
        save_samples(s, tmp_path)
        assert (tmp_path / "replica_1.csv").read_text().splitlines()[0] == "R,E"
        back, summary = load_samples(tmp_path)
        np.testing.assert_array_equal(back.chains, s.chains)
        np.testing.assert_array_equal(back.energies, s.energies)
        assert summary["exchange_attempted"] == 40
        assert len(summary["exchange_acceptance"]) == 2

    def test_truncated_file(self, tmp_path):
        d, model, prior = _toy()
        s = run_emc(model, d, prior, SamplerConfig(build_ladder(2, 2.0), 5, 10, seed=2))
        save_samples(s, tmp_path)
        p = tmp_path / "replica_2.csv"
        p.write_text("\n".join(p.read_text().splitlines()[:5]) + "\n")
        with pytest.raises(ChainFileError, match="expected 10 rows"):
            load_samples(tmp_path)

    def test_missing_summary(self, tmp_path):
        with pytest.raises(ChainFileError):
            load_samples(tmp_path)
