import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_markov
from mgp.core import FomgModel, ModelClass, PomgModel, Trajectory
from mgp.envs import gen_tabular_fomg, gen_tabular_pomg, model_class_around
from mgp.fomg import nash_plan, simulate
from mgp.matrix_game import DEFAULT_TOL
from mgp.planning import ClassPlanner
from mgp.pomg import trajectory_likelihood
from mgp.posterior import (
    PosteriorState,
    RealizabilityError,
    class_logliks,
    default_gamma,
    episode_loglik_fomg,
    episode_loglik_pomg,
    exploiter_optimism,
    posterior_weights,
    sample_model,
)


def deterministic_fomg(H=2, S=3):
    P = np.zeros((H, S, 1, 1, S))
    for s in range(S):
        P[:, s, 0, 0, (s + 1) % S] = 1.0
    return FomgModel(P, np.zeros((H, S, 1, 1)))


def state_from(log_prior, cum):
    return PosteriorState(np.asarray(log_prior, float), np.asarray(cum, float))


class TestFomgLikelihood:
    def test_consistent_deterministic_model(self):
        m = deterministic_fomg()
        traj = Trajectory((0, 0), (0, 0), (0.0, 0.0), states=(0, 1, 2))
        assert episode_loglik_fomg(m, traj, 0.5) == 0.0

    def test_zero_probability_transition(self):
        m = deterministic_fomg()
        traj = Trajectory((0, 0), (0, 0), (0.0, 0.0), states=(0, 2, 0))
        assert episode_loglik_fomg(m, traj, 0.5) == -math.inf

    def test_uniform_kernel(self):
        m = FomgModel(np.full((3, 4, 1, 1, 4), 0.25), np.zeros((3, 4, 1, 1)))
        traj = Trajectory((0,) * 3, (0,) * 3, (0.0,) * 3, states=(0, 3, 1, 2))
        assert episode_loglik_fomg(m, traj, 0.5) == pytest.approx(-math.log(8), abs=1e-14)

    def test_class_vectorization_matches_scalar(self):
        g = np.random.default_rng(0)
        f = gen_tabular_fomg((3, 3, 2, 2), g, sparsity=2)
        mc = model_class_around(f, 6, 0.5, g)
        pi = random_markov(g, 3, 3, 2)
        for _ in range(20):
            traj = simulate(f, pi, pi, g)
            expected = [episode_loglik_fomg(m, traj, 0.5) for m in mc.models]
            np.testing.assert_allclose(class_logliks(mc, traj, 0.5), expected, rtol=1e-14)


class TestPomgLikelihood:
    def test_single_state_deterministic_emission(self):
        base = gen_tabular_pomg((3, 1, 2, 2, 2), np.random.default_rng(0))
        E = np.zeros((3, 1, 2))
        E[..., 1] = 1.0
        m = PomgModel(base.mu1, base.transition, E, base.reward)
        traj = Trajectory((0, 1, 0), (1, 1, 0), (0.0,) * 3, observations=(1, 1, 1))
        assert episode_loglik_pomg(m, traj, 0.5) == 0.0

    def test_prefix_sum_uses_joint_prefix_probabilities(self):
        g = np.random.default_rng(1)
        m = gen_tabular_pomg((2, 2, 2, 2, 2), g)
        traj = Trajectory((0, 1), (1, 0), (0.0, 0.0), observations=(1, 0))
        p1, p2 = trajectory_likelihood(m, traj, 1), trajectory_likelihood(m, traj, 2)
        assert episode_loglik_pomg(m, traj, 0.5) == pytest.approx(0.5 * (math.log(p1) + math.log(p2)), abs=1e-13)
        assert episode_loglik_pomg(m, traj, 0.5, "final") == pytest.approx(0.5 * math.log(p2), abs=1e-13)

    def test_half_and_quarter_example(self):
        # P(tau_1) = 0.5 and P(tau_2) = 0.25: two equiprobable observations per step, one state
        m = PomgModel(np.ones(1), np.ones((2, 1, 1, 1, 1)), np.full((2, 1, 2), 0.5), np.zeros((2, 2, 1, 1)))
        traj = Trajectory((0, 0), (0, 0), (0.0, 0.0), observations=(0, 1))
        assert episode_loglik_pomg(m, traj, 0.5) == pytest.approx(0.5 * (math.log(0.5) + math.log(0.25)), abs=1e-15)

    def test_impossible_observation(self):
        m = PomgModel(np.ones(1), np.ones((2, 1, 1, 1, 1)), np.array([[[1.0, 0.0]], [[1.0, 0.0]]]),
                      np.zeros((2, 2, 1, 1)))
        traj = Trajectory((0, 0), (0, 0), (0.0, 0.0), observations=(0, 1))
        assert episode_loglik_pomg(m, traj, 0.5) == -math.inf

    def test_eta_must_be_positive(self):
        m = deterministic_fomg()
        with pytest.raises(ValueError):
            episode_loglik_fomg(m, Trajectory((0, 0), (0, 0), (0.0, 0.0), states=(0, 1, 2)), 0.0)


class TestPosteriorWeights:
    def test_no_data_no_optimism_gives_prior(self):
        prior = np.array([0.1, 0.6, 0.3])
        w = posterior_weights(state_from(np.log(prior), np.zeros(3)), 0.0, np.zeros(3))
        np.testing.assert_allclose(w, prior, atol=1e-15)

    def test_identical_models_equal_weight(self):
        g = np.random.default_rng(2)
        f = gen_tabular_fomg((2, 3, 2, 2), g)
        mc = ModelClass.uniform([f, f], 0)
        st_ = PosteriorState.from_class(mc)
        pi = random_markov(g, 2, 3, 2)
        for _ in range(30):
            st_.update(mc, simulate(f, pi, pi, g))
        w = posterior_weights(st_, 0.0, np.zeros(2))
        assert w[0] == w[1] == 0.5

    def test_softmax_example(self):
        w = posterior_weights(state_from(np.log(np.full(3, 1 / 3)), np.zeros(3)), 1.0, np.array([0.2, 0.5, 0.9]))
        e = np.exp([0.2, 0.5, 0.9])
        np.testing.assert_allclose(w, e / e.sum(), atol=1e-15)
        np.testing.assert_allclose(w, [0.22917, 0.30934, 0.46149], atol=5e-6)

    def test_negative_sign(self):
        w = posterior_weights(state_from(np.zeros(2), np.zeros(2)), 2.0, np.array([0.0, 1.0]), -1)
        assert w[0] == pytest.approx(1 / (1 + math.exp(-2.0)), abs=1e-15)

    def test_dead_models_get_zero(self):
        w = posterior_weights(state_from(np.zeros(3), [0.0, -np.inf, -1.0]), 1.0, np.array([0.0, np.nan, 0.0]))
        assert w[1] == 0.0 and w.sum() == pytest.approx(1.0, abs=1e-15)

    def test_all_dead_raises(self):
        with pytest.raises(RealizabilityError):
            posterior_weights(state_from(np.zeros(2), [-np.inf, -np.inf]), 0.0, np.zeros(2))

    def test_extreme_logits_stable(self):
        w = posterior_weights(state_from(np.zeros(3), [-1e6, -1e6 + 1, -2e6]), 0.0, np.zeros(3))
        np.testing.assert_allclose(w, [1 / (1 + math.e), math.e / (1 + math.e), 0.0], atol=1e-15)

    @given(st.integers(2, 8), st.integers(0, 10**6), st.floats(1e-3, 1e3), st.floats(-50, 50))
    @settings(max_examples=200, deadline=None)
    def test_prior_scale_and_optimism_shift_invariance(self, n, seed, scale, shift):
        g = np.random.default_rng(seed)
        prior = g.dirichlet(np.ones(n))
        cum = g.normal(scale=5, size=n)
        opt = g.uniform(0, 3, size=n)
        gamma = float(g.uniform(0, 10))
        w = posterior_weights(state_from(np.log(prior), cum), gamma, opt)
        w_scaled = posterior_weights(state_from(np.log(prior * scale), cum), gamma, opt)
        w_shift = posterior_weights(state_from(np.log(prior), cum), gamma, opt + shift)
        np.testing.assert_allclose(w_scaled, w, atol=1e-12)
        np.testing.assert_allclose(w_shift, w, atol=1e-12)

    def test_order_invariance(self):
        g = np.random.default_rng(3)
        f = gen_tabular_fomg((3, 3, 2, 2), g)
        mc = model_class_around(f, 5, 0.4, g)
        pi = random_markov(g, 3, 3, 2)
        trajs = [simulate(f, pi, pi, g) for _ in range(40)]
        a, b = PosteriorState.from_class(mc), PosteriorState.from_class(mc)
        for tr in trajs:
            a.update(mc, tr)
        for k in g.permutation(len(trajs)):
            b.update(mc, trajs[k])
        np.testing.assert_allclose(a.cum_loglik, b.cum_loglik, rtol=0, atol=1e-12)
        opt = np.arange(5.0)
        np.testing.assert_allclose(posterior_weights(a, 1.0, opt), posterior_weights(b, 1.0, opt), atol=1e-12)

    def test_snapshot_exports_dead_as_null(self):
        snap = state_from(np.zeros(2), [0.0, -np.inf]).snapshot()
        assert snap["cum_loglik"] == [0.0, None] and snap["weights"] == [1.0, 0.0]


class TestSampling:
    def test_point_mass(self):
        g = np.random.default_rng(0)
        assert all(sample_model(np.array([0.0, 0.0, 1.0]), g) == 2 for _ in range(1000))

    def test_uniform_frequencies(self):
        g = np.random.default_rng(1)
        draws = np.array([sample_model(np.full(4, 0.25), g) for _ in range(10**5)])
        freq = np.bincount(draws, minlength=4) / 10**5
        np.testing.assert_array_less(np.abs(freq - 0.25), 3 * math.sqrt(0.25 * 0.75 / 10**5))
        # chi-square with 3 degrees of freedom; 11.34 is the 99% quantile
        chi2 = np.sum((freq * 10**5 - 25000) ** 2 / 25000)
        assert chi2 < 11.34

    def test_reproducible(self):
        w = np.random.default_rng(2).dirichlet(np.ones(6))
        s1 = [sample_model(w, np.random.default_rng(9)) for _ in range(1)]
        a = np.random.default_rng(9)
        b = np.random.default_rng(9)
        assert [sample_model(w, a) for _ in range(100)] == [sample_model(w, b) for _ in range(100)]
        assert s1[0] == sample_model(w, np.random.default_rng(9))


class TestExploiterOptimism:
    def test_singleton_class(self):
        g = np.random.default_rng(0)
        f = gen_tabular_fomg((2, 2, 2, 2), g)
        mc = ModelClass.uniform([f], 0)
        planner = ClassPlanner(mc.models)
        pi = random_markov(g, 2, 2, 2)
        from mgp.fomg import best_response

        opt = exploiter_optimism(mc, pi, planner)
        assert opt.shape == (1,) and opt[0] == best_response(f, pi, "min")[0]

    def test_nash_fixed_point(self):
        g = np.random.default_rng(1)
        f = gen_tabular_fomg((3, 3, 2, 2), g)
        mc = model_class_around(f, 4, 0.5, g)
        planner = ClassPlanner(mc.models)
        for i, m in enumerate(mc.models):
            plan = nash_plan(m)
            assert exploiter_optimism(mc, plan.pi_star, planner)[i] == pytest.approx(plan.nash_value, abs=2 * DEFAULT_TOL)

    def test_bounded_by_nash_values(self):
        g = np.random.default_rng(2)
        f = gen_tabular_fomg((3, 3, 2, 2), g)
        mc = model_class_around(f, 6, 0.5, g)
        planner = ClassPlanner(mc.models)
        v = planner.nash_values()
        for _ in range(10):
            assert np.all(exploiter_optimism(mc, random_markov(g, 3, 3, 2), planner) <= v + 2 * DEFAULT_TOL)


class TestConsistency:
    def test_true_model_weight_grows(self):
        w10, w500 = [], []
        for seed in range(20):
            g = np.random.default_rng(seed)
            f = gen_tabular_fomg((2, 3, 2, 2), g)
            mc = model_class_around(f, 5, 0.5, g)
            st_ = PosteriorState.from_class(mc)
            pi = random_markov(g, 2, 3, 2)
            for t in range(1, 501):
                st_.update(mc, simulate(f, pi, pi, g))
                if t in (10, 500):
                    (w10 if t == 10 else w500).append(posterior_weights(st_, 0.0, np.zeros(5))[mc.true_index])
        assert np.median(w500) > np.median(w10)


def test_default_gamma():
    assert default_gamma(20, 2000, 108) == pytest.approx(2 * math.sqrt(math.log(20) * 2000 / 108))
    with pytest.raises(ValueError):
        default_gamma(20, 2000, 0)
