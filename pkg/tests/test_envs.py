import numpy as np
import pytest

from mgp.core import FomgModel, ModelClass, PomgModel
from mgp.diagnostics import fomg_distance
from mgp.envs import (
    InfeasibleSpecError,
    LinearMixtureSpec,
    RevealingSpec,
    emission_matrix,
    gen_decodable_pomg,
    gen_linear_mixture,
    gen_tabular_fomg,
    gen_tabular_pomg,
    gen_weakly_revealing_pomg,
    is_decodable,
    linear_mixture_class_around,
    model_class_around,
    revealing_alpha,
    smallest_singular_value,
)


class TestTabular:
    def test_sparsity_one_is_deterministic(self):
        m = gen_tabular_fomg((3, 4, 2, 2), np.random.default_rng(0), sparsity=1)
        assert np.all(np.isin(m.transition, (0.0, 1.0)))
        np.testing.assert_array_equal(m.transition.max(axis=-1), 1.0)

    def test_sparsity_support_size(self):
        m = gen_tabular_fomg((2, 5, 2, 2), np.random.default_rng(1), sparsity=2)
        assert np.all((m.transition > 0).sum(axis=-1) <= 2)

    def test_reproducible(self):
        a = gen_tabular_fomg((3, 4, 2, 2), np.random.default_rng(7))
        b = gen_tabular_fomg((3, 4, 2, 2), np.random.default_rng(7))
        assert a.digest() == b.digest()

    def test_rows_sum_to_one(self):
        m = gen_tabular_pomg((3, 3, 2, 2, 4), np.random.default_rng(2))
        np.testing.assert_allclose(m.transition.sum(-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(m.emission.sum(-1), 1.0, atol=1e-12)
        assert 0 <= m.reward.min() and m.reward.max() <= 1

    def test_stationary_flag(self):
        m = gen_tabular_pomg((3, 2, 2, 2, 3), np.random.default_rng(3), stationary=True)
        assert np.all(m.transition == m.transition[0]) and np.all(m.emission == m.emission[0])


class TestLinearMixture:
    def test_single_feature_is_that_kernel(self):
        g = np.random.default_rng(0)
        phi = g.dirichlet(np.ones(3), size=(1, 3, 2, 2))
        m, spec = gen_linear_mixture(LinearMixtureSpec(1, 3, 2, 2, 2, features=phi), g)
        np.testing.assert_array_equal(spec.theta, 1.0)
        np.testing.assert_allclose(m.transition, np.repeat(phi, 2, axis=0), atol=1e-15)

    def test_two_deterministic_kernels(self):
        S = 3
        phi = np.zeros((2, S, 1, 1, S))
        for s in range(S):
            phi[0, s, 0, 0, s] = 1.0
            phi[1, s, 0, 0, (s + 1) % S] = 1.0
        theta = np.array([[0.3, 0.7], [0.3, 0.7]])
        m, _ = gen_linear_mixture(LinearMixtureSpec(2, S, 1, 1, 2, features=phi, theta=theta), np.random.default_rng(0))
        for s in range(S):
            expected = np.zeros(S)
            expected[s], expected[(s + 1) % S] = 0.3, 0.7
            np.testing.assert_allclose(m.transition[:, s, 0, 0], np.tile(expected, (2, 1)), atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_norm_bound_and_reconstruction(self, seed):
        m, spec = gen_linear_mixture(LinearMixtureSpec(3, 3, 2, 2, 3, bound=1.0), np.random.default_rng(seed))
        assert np.all(np.linalg.norm(spec.theta, axis=1) <= spec.bound + 1e-12)
        assert np.max(np.abs(spec.kernel() - m.transition)) <= 1e-12

    def test_infeasible_dimension(self):
        with pytest.raises(InfeasibleSpecError):
            gen_linear_mixture(LinearMixtureSpec(1000, 2, 2, 2, 2), np.random.default_rng(0))

    def test_infeasible_theta_projected(self):
        # an off-simplex theta is projected back, giving a valid kernel
        theta = np.array([[1.5, -0.2]])
        m, spec = gen_linear_mixture(LinearMixtureSpec(2, 2, 1, 1, 1, theta=theta), np.random.default_rng(1))
        np.testing.assert_allclose(spec.theta.sum(axis=1), 1.0)
        assert np.all(spec.theta >= 0)

    def test_class_shares_features(self):
        g = np.random.default_rng(2)
        f, spec = gen_linear_mixture(LinearMixtureSpec(2, 3, 2, 2, 2), g)
        mc = linear_mixture_class_around(spec, f, 5, 0.3, g)
        assert mc.true_model is f and len(mc) == 5
        for m in mc.models:
            np.testing.assert_array_equal(m.reward, f.reward)


class TestModelClassAround:
    def test_singleton(self):
        f = gen_tabular_fomg((2, 2, 2, 2), np.random.default_rng(0))
        mc = model_class_around(f, 1, 0.5, np.random.default_rng(1))
        assert len(mc) == 1 and mc.true_model is f and mc.true_index == 0

    def test_small_perturbation_is_close(self):
        g = np.random.default_rng(2)
        f = gen_tabular_fomg((3, 4, 2, 2), g)
        mc = model_class_around(f, 10, 1e-5, g)
        assert max(fomg_distance(f, m) for m in mc.models) <= 0.01

    def test_uniform_prior(self):
        g = np.random.default_rng(3)
        f = gen_tabular_fomg((2, 2, 2, 2), g)
        mc = model_class_around(f, 7, 0.2, g)
        np.testing.assert_allclose(mc.prior, 1 / 7, atol=1e-15)
        assert isinstance(mc, ModelClass)

    def test_accept_filter_and_validation(self):
        g = np.random.default_rng(4)
        f = gen_weakly_revealing_pomg(RevealingSpec(0.3, 2, 3, 2, 2, 2), g)
        mc = model_class_around(f, 6, 0.2, g, accept=lambda m: revealing_alpha(m) >= 0.3)
        assert all(revealing_alpha(m) >= 0.3 for m in mc.models)
        assert all(isinstance(m, PomgModel) for m in mc.models)

    def test_bad_arguments(self):
        f = gen_tabular_fomg((2, 2, 2, 2), np.random.default_rng(0))
        with pytest.raises(ValueError):
            model_class_around(f, 0, 0.5, np.random.default_rng(0))
        with pytest.raises(ValueError):
            model_class_around(f, 3, 0.0, np.random.default_rng(0))


class TestRevealing:
    def test_identity_emission(self):
        assert smallest_singular_value(np.eye(3)) == pytest.approx(1.0, abs=1e-12)

    def test_duplicate_state_columns_rank_deficient(self):
        M = np.array([[0.5, 0.5], [0.3, 0.3], [0.2, 0.2]])
        assert smallest_singular_value(M) == pytest.approx(0.0, abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_generator_meets_alpha_and_eigen_oracle(self, seed):
        m = gen_weakly_revealing_pomg(RevealingSpec(0.3, 2, 3, 2, 2, 2), np.random.default_rng(seed))
        assert revealing_alpha(m) >= 0.3
        for h in range(1, m.H + 1):
            M = emission_matrix(m, h)
            lam = np.linalg.eigvalsh(M.T @ M)  # ascending
            assert smallest_singular_value(M) ** 2 == pytest.approx(lam[0], abs=1e-10)
            assert smallest_singular_value(M) == pytest.approx(np.linalg.svd(M, compute_uv=False)[-1], abs=1e-10)

    def test_overcomplete_rejected(self):
        with pytest.raises(InfeasibleSpecError):
            gen_weakly_revealing_pomg(RevealingSpec(0.3, 3, 2, 2, 2, 2), np.random.default_rng(0))

    def test_alpha_above_one_infeasible(self):
        with pytest.raises(InfeasibleSpecError):
            gen_weakly_revealing_pomg(RevealingSpec(1.5, 2, 3, 2, 2, 2), np.random.default_rng(0))


class TestDecodable:
    def test_single_state_constant_decoder(self):
        m, dec = gen_decodable_pomg((2, 1, 2, 2, 3), np.random.default_rng(0))
        np.testing.assert_array_equal(dec, 0)

    def test_partition_readback(self):
        m, dec = gen_decodable_pomg((2, 2, 2, 2, 4), np.random.default_rng(1))
        np.testing.assert_array_equal(dec, [0, 0, 1, 1])

    @pytest.mark.parametrize("seed", range(3))
    def test_disjoint_supports(self, seed):
        m, dec = gen_decodable_pomg((3, 3, 2, 2, 5), np.random.default_rng(seed))
        assert is_decodable(m)
        for h in range(3):
            for o in range(5):
                support = np.where(m.emission[h, :, o] > 0)[0]
                assert len(support) <= 1 and (len(support) == 0 or support[0] == dec[o])

    def test_generic_pomg_not_decodable(self):
        assert not is_decodable(gen_tabular_pomg((2, 2, 2, 2, 3), np.random.default_rng(0)))


def test_generators_pass_core_validation():
    g = np.random.default_rng(9)
    for m in (gen_tabular_fomg((2, 3, 2, 2), g), gen_linear_mixture(LinearMixtureSpec(2, 3, 2, 2, 2), g)[0]):
        FomgModel(m.transition, m.reward, m.initial_state)
    for m in (gen_tabular_pomg((2, 2, 2, 2, 3), g), gen_weakly_revealing_pomg(RevealingSpec(0.2, 2, 3, 2, 2, 2), g),
              gen_decodable_pomg((2, 2, 2, 2, 3), g)[0]):
        PomgModel(m.mu1, m.transition, m.emission, m.reward)
