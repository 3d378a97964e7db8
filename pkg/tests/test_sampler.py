import math

import numpy as np
import pytest
from conftest import interior_point, random_dataset, random_params
from scipy import stats

from copula_selection.likelihood import ParameterSet, log_likelihood
from copula_selection.sampler import (
    MalaConfig,
    MalaState,
    PosteriorChain,
    PriorSpec,
    SamplerError,
    log_posterior,
    log_posterior_gradient,
    log_prior,
    log_prior_gradient,
    mala_step,
    posterior_summary,
    read_chain_csv,
    run_chain,
    sample_mala,
    write_chain_csv,
)
from copula_selection.simulate import acceptance_design, simulate_dataset, substream


def std_normal(dim=1, scale=1.0):
    def target(x):
        return -0.5 * float(x @ x) / scale**2, -x / scale**2
    return target


class TestPrior:
    def test_single_coefficient_density(self):
        # one gamma coefficient, everything else fixed; the gamma term alone
        spec = PriorSpec()
        base = ParameterSet([0.0], [0.0], [0.0])
        shifted = ParameterSet([1.0], [0.0], [0.0])
        per_coef = -math.log(100 * math.sqrt(2 * math.pi))
        # exact value -5.524109; the published figure is truncated
        assert per_coef == pytest.approx(-5.5240, abs=5e-4)
        # difference isolates the gamma term: log N(1) - log N(0) = -1/(2*100^2)
        assert log_prior(shifted, spec) - log_prior(base, spec) == pytest.approx(-0.5e-4)
        # full value: 3 coefficients + alpha2 + w2 at 0, w1 at its mean, theta_tilde at 0.1
        w1_term = -math.log(0.5 * math.sqrt(2 * math.pi))
        tt_term = per_coef - 0.5 * (0.1 / 100) ** 2
        assert log_prior(base, spec) == pytest.approx(5 * per_coef + w1_term + tt_term, abs=1e-12)

    def test_hierarchical_term(self):
        term = -math.log(0.25 * math.sqrt(2 * math.pi))
        # exact value 0.467356; the published figure is 0.4672
        assert term == pytest.approx(0.4672, abs=5e-4)
        p = ParameterSet([0.0], [1.0], [0.0, 0.0])
        flat = log_prior(p, PriorSpec())
        hier = log_prior(p, PriorSpec(instrument_index=1))
        per_coef = -math.log(100 * math.sqrt(2 * math.pi))
        assert hier - flat == pytest.approx(term - per_coef, abs=1e-12)

    def test_domain_rejection(self):
        p = ParameterSet([0.0], [1.0], [0.0], theta_tilde=math.sqrt(0.4) - 1.0)
        assert p.theta == pytest.approx(-0.6)
        assert log_prior(p, PriorSpec()) == -np.inf
        zero_scale = ParameterSet([0.0], [0.0], [0.0])
        assert log_prior(zero_scale, PriorSpec(instrument_index=0)) == -np.inf

    @pytest.mark.parametrize("g,a", [(0.3, 1.2), (-0.5, -0.7), (0.05, 2.0)])
    def test_hierarchical_cross_gradient(self, g, a):
        delta = 0.25
        p = ParameterSet([0.0], [a, 0.2], [0.1, g])
        spec = PriorSpec(delta=delta, instrument_index=1)
        grad = log_prior_gradient(p, spec)
        i_alpha, i_g = 1, 4
        assert grad[i_alpha] == pytest.approx(g**2 / (delta**2 * a**3) - 1 / a - a / 100**2, rel=1e-12)
        assert grad[i_g] == pytest.approx(-g / (delta * a) ** 2, rel=1e-12)
        h = 1e-6
        x = p.flatten()
        for j in (i_alpha, i_g):
            e = np.zeros_like(x)
            e[j] = h
            fd = (log_prior(ParameterSet.unflatten(x + e, p.dims), spec)
                  - log_prior(ParameterSet.unflatten(x - e, p.dims), spec)) / (2 * h)
            assert grad[j] == pytest.approx(fd, rel=1e-6)

    def test_posterior_gradient_finite_differences(self, rng):
        dims = (3, 2, 3)
        spec = PriorSpec(instrument_index=2)
        worst = 0.0
        for _ in range(50):
            data, p = interior_point(rng, n=80, dims=dims)
            if abs(p.alpha1[0]) < 0.1:
                p.alpha1[0] = 0.3
            x = p.flatten()
            g = log_posterior_gradient(data, p, spec)
            h = 1e-5
            for j in range(x.size):
                e = np.zeros_like(x)
                e[j] = h
                fd = (log_posterior(data, ParameterSet.unflatten(x + e, dims), spec)
                      - log_posterior(data, ParameterSet.unflatten(x - e, dims), spec)) / (2 * h)
                worst = max(worst, abs(g[j] - fd) / max(abs(fd), 1.0))
        assert worst < 1e-6

    def test_flat_prior_limit(self, rng):
        data = random_dataset(rng, n=100)
        p, q = random_params(rng, theta=0.5), random_params(rng, theta=1.5)
        spec = PriorSpec(default_sd=1e12, w1_sd=1e12, theta_tilde_sd=1e12)
        lhs = log_posterior(data, p, spec) - log_posterior(data, q, spec)
        rhs = log_likelihood(data, p) - log_likelihood(data, q)
        assert lhs == pytest.approx(rhs, abs=1e-8)


class TestMalaStep:
    def test_stationary_point_zero_noise(self):
        target = std_normal()
        state = MalaState(np.zeros(1), *target(np.zeros(1)))
        res = mala_step(state, 0.7, np.random.default_rng(0), target, noise=np.zeros(1))
        assert res.proposal[0] == 0.0
        assert res.accept_prob == 1.0
        assert res.accepted

    def test_hand_evaluated_acceptance(self):
        target = std_normal()
        x = np.array([3.0])
        state = MalaState(x, *target(x))
        res = mala_step(state, 1.0, np.random.default_rng(0), target, noise=np.zeros(1))
        assert res.proposal[0] == pytest.approx(1.5)
        # log pi ratio (9 - 2.25)/2; reverse proposal residual 3 - 1.5 - 0.5*(-1.5) = 2.25;
        # forward residual 1.5 - 3 + 1.5 = 0
        log_ratio = (9 - 2.25) / 2 + (-(2.25**2) / 2) - 0.0
        assert log_ratio == pytest.approx(0.84375)
        assert res.accept_prob == min(1.0, math.exp(log_ratio)) == 1.0

    def test_rejecting_case_matches_formula(self):
        target = std_normal()
        x, step, xi = np.array([0.2]), 1.5, np.array([1.3])
        state = MalaState(x, *target(x))
        res = mala_step(state, step, np.random.default_rng(0), target, noise=xi)
        y = x + 0.5 * step**2 * (-x) + step * xi
        fwd = y - x - 0.5 * step**2 * (-x)
        rev = x - y - 0.5 * step**2 * (-y)
        log_ratio = (-0.5 * y @ y + 0.5 * x @ x) - (rev @ rev) / (2 * step**2) + (fwd @ fwd) / (2 * step**2)
        assert res.proposal == pytest.approx(y)
        assert res.accept_prob == pytest.approx(min(1.0, math.exp(log_ratio)), rel=1e-12)
        assert 0.0 <= res.accept_prob <= 1.0

    def test_out_of_support_proposal_rejected(self):
        def target(x):
            return (-0.5 * float(x @ x), -x) if x[0] > 0 else (-np.inf, None)
        x = np.array([0.1])
        state = MalaState(x, *target(x))
        res = mala_step(state, 1.0, np.random.default_rng(0), target, noise=np.array([-5.0]))
        assert not res.accepted and res.state is state

    def test_deterministic(self):
        target = std_normal()
        x = np.array([0.4, -1.0])
        a = mala_step(MalaState(x, *target(x)), 0.9, np.random.default_rng(5), target)
        b = mala_step(MalaState(x, *target(x)), 0.9, np.random.default_rng(5), target)
        np.testing.assert_array_equal(a.proposal, b.proposal)
        assert a.accepted == b.accepted


class TestSampleMala:
    def test_two_dimensional_normal(self):
        cfg = MalaConfig(iterations=5000, seed=1, initial_step=0.5)
        chain = sample_mala(std_normal(2), np.zeros(2), cfg)
        kept = chain.kept(0.5)
        assert np.all(np.abs(kept.mean(axis=0)) < 0.1)
        assert np.all(np.abs(kept.std(axis=0) - 1.0) < 0.15)
        assert abs(chain.acceptance_rate_after(cfg.adapt_until) - 0.574) < 0.08

    def test_step_frozen_after_adaptation(self):
        cfg = MalaConfig(iterations=600, seed=2, adapt_until=200)
        chain = sample_mala(std_normal(2), np.zeros(2), cfg)
        assert np.all(chain.step_sizes[200:] == chain.step_sizes[200])
        assert not np.all(chain.step_sizes[:200] == chain.step_sizes[0])

    def test_same_seed_identical(self):
        cfg = MalaConfig(iterations=500, seed=3)
        a = sample_mala(std_normal(3), np.ones(3), cfg)
        b = sample_mala(std_normal(3), np.ones(3), cfg)
        np.testing.assert_array_equal(a.draws, b.draws)
        np.testing.assert_array_equal(a.accept_flags, b.accept_flags)

    def test_ks_against_target(self):
        passes = 0
        reps = 40
        for seed in range(reps):
            cfg = MalaConfig(iterations=4000, seed=seed)
            chain = sample_mala(std_normal(1), np.zeros(1), cfg)
            thinned = chain.kept(0.5)[::10, 0]
            passes += stats.kstest(thinned, "norm").pvalue > 0.01
        assert passes >= 0.95 * reps

    def test_abort_when_everything_rejected(self):
        def target(x):
            return (0.0, np.zeros_like(x)) if np.all(x == 0) else (-np.inf, None)
        with pytest.raises(SamplerError, match="first 200"):
            sample_mala(target, np.zeros(1), MalaConfig(iterations=300))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MalaConfig(iterations=10, adapt_until=20)
        with pytest.raises(ValueError):
            MalaConfig(burn_in_fraction=1.0)


class TestModelChain:
    @pytest.fixture(scope="class")
    @classmethod
    def small_fit(cls):
        params, spec = acceptance_design(3000, seed=5)
        data = simulate_dataset(params, spec)
        prior = PriorSpec(instrument_index=spec.x2.index(spec.instrument))
        cfg = MalaConfig(iterations=300, seed=4)
        return data, prior, cfg, run_chain(data, prior, cfg)

    def test_draws_respect_domain(self, small_fit):
        chain = small_fit[3]
        theta = (chain.draws[:, -1] + 1) ** 2 - 1
        assert np.all(theta > -0.5)
        assert chain.draws.shape == (300, 21)
        assert chain.names[0] == "gamma[const]" and chain.names[-1] == "theta_tilde"

    def test_bit_identical_rerun(self, small_fit):
        data, prior, cfg, chain = small_fit
        again = run_chain(data, prior, cfg)
        np.testing.assert_array_equal(chain.draws, again.draws)
        np.testing.assert_array_equal(chain.log_posteriors, again.log_posteriors)

    def test_empty_dataset(self, small_fit):
        data, prior, cfg, _ = small_fit
        with pytest.raises(ValueError, match="empty"):
            run_chain(data.subset(np.zeros(len(data), dtype=bool)), prior, cfg)

    def test_csv_roundtrip(self, small_fit, tmp_path):
        chain = small_fit[3]
        write_chain_csv(chain, tmp_path / "chain.csv")
        back = read_chain_csv(tmp_path / "chain.csv", chain.dims)
        np.testing.assert_array_equal(back.draws, chain.draws)
        np.testing.assert_array_equal(back.accept_flags, chain.accept_flags)
        np.testing.assert_array_equal(back.step_sizes, chain.step_sizes)
        assert back.names == chain.names


class TestSummary:
    def _chain(self, col):
        draws = np.column_stack([np.full(col.size, 2.5), col])
        n = col.size
        return PosteriorChain(draws, np.ones(n, bool), np.ones(n), np.zeros(n), ["c", "theta_tilde"])

    def test_constant_and_theta_transform(self):
        tt = np.tile([-1.0, 0.0, 1.0], 34)
        s = posterior_summary(self._chain(tt), burn_in_fraction=0.0)
        assert s.mean[0] == 2.5 and s.sd[0] == 0.0
        assert s.theta_mean == pytest.approx(2 / 3, abs=1e-15)
        # transforming the mean instead would give 0
        assert s.mean[1] == pytest.approx(0.0)

    def test_draw_wise_transform_exact(self, rng):
        tt = rng.normal(0.2, 0.3, 400)
        s = posterior_summary(self._chain(tt), 0.5)
        theta = (tt[200:] + 1) ** 2 - 1
        assert s.theta_mean == theta.mean()
        assert s.theta_sd == theta.std(ddof=1)

    def test_insufficient_draws(self):
        with pytest.raises(ValueError, match="need at least 100"):
            posterior_summary(self._chain(np.zeros(150)), 0.5)


def test_substreams_independent_of_order():
    a = substream(7, "mala").random(3)
    substream(7, "errors").random(10)
    b = substream(7, "mala").random(3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, substream(7, "errors").random(3))
