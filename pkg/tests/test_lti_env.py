import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import partial_sum_h
from dynbandit.lti_env import (
    DlbSystem,
    HardInstanceParams,
    SimState,
    cumulative_markov,
    finite_horizon_optimal,
    hard_instance,
    hard_instance_h,
    load_fixture,
    make_ar1_instance,
    make_composite_instance,
    make_delayed_instance,
    markov_parameter,
    markov_sequence,
    random_stable_system,
    save_system,
    simulate,
    spectral_stats,
    steady_state,
    steady_state_reward,
    step,
    truncated_cumulative_markov,
)
from dynbandit.action_space import ActionSet

SCALAR = DlbSystem([[0.5]], [[1.0]], [1.0], [0.0])


class TestSystem:
    def test_validation(self):
        with pytest.raises(ValueError):
            DlbSystem([[1.0]], [[1.0]], [1.0], [0.0])
        with pytest.raises(ValueError):
            DlbSystem([[0.5]], [[1.0, 2.0]], [1.0], [0.0])
        with pytest.raises(ValueError):
            DlbSystem([[0.5]], [[1.0]], [1.0], [0.0], sigma=-1)

    def test_arrays_are_read_only(self):
        with pytest.raises(ValueError):
            SCALAR.A[0, 0] = 0.9

    def test_dict_round_trip(self, advertising):
        system, _ = advertising
        again = DlbSystem.from_dict(json.loads(json.dumps(system.to_dict())))
        for name in ("A", "B", "omega", "theta", "x1"):
            np.testing.assert_array_equal(getattr(again, name), getattr(system, name))
        assert again.sigma == system.sigma

    def test_save_and_reload(self, tmp_path, synthetic):
        system, extras = synthetic
        path = tmp_path / "s.json"
        save_system(system, path, **extras)
        again, extras2 = load_fixture(path)
        np.testing.assert_array_equal(again.A, system.A)
        assert extras2 == extras

    def test_missing_fixture_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope"):
            load_fixture(tmp_path / "nope.json")

    def test_fixture_dir_env(self, tmp_path, monkeypatch, synthetic):
        save_system(synthetic[0], tmp_path / "mine.json")
        monkeypatch.setenv("DYNBANDIT_FIXTURES", str(tmp_path))
        system, _ = load_fixture("mine")
        np.testing.assert_array_equal(system.B, synthetic[0].B)


class TestStep:
    def test_zero_state_reward_is_theta(self, synthetic):
        system = synthetic[0].with_sigma(0)
        state, y = step(system, SimState.initial(system), [1, 0, 0])
        assert y == system.theta[0]
        np.testing.assert_array_equal(state.x, system.B[:, 0])
        assert state.t == 2

    def test_scalar(self):
        state, y = step(SCALAR, SimState(1, np.array([2.0])), [0.0])
        assert y == 2.0 and state.x[0] == 1.0

    def test_bad_action(self):
        with pytest.raises(ValueError):
            step(SCALAR, SimState.initial(SCALAR), [1.0, 2.0])

    def test_paper_h_steady_state(self, synthetic):
        # the reward converges to the formula steady state; with the paper's
        # weights that value is 0.81
        system = synthetic[0].with_sigma(0)
        u = np.array([1.0, 0.5, 0.0])
        ys, _ = simulate(system, np.tile(u, (60, 1)))
        assert ys[-1] == pytest.approx(steady_state_reward(cumulative_markov(system), u), abs=1e-12)
        assert steady_state_reward(synthetic[1]["paper_h"], u) == pytest.approx(0.81)

    def test_simulate_matches_step(self, rng):
        system = random_stable_system(rng, 3, 2, 0.8, sigma=0.1)
        U = rng.uniform(-1, 1, (25, 2))
        ys, xs = simulate(system, U, np.random.default_rng(7))
        state = SimState.initial(system, 7)
        for t in range(25):
            np.testing.assert_allclose(state.x, xs[t])
            state, y = step(system, state, U[t])
            assert y == pytest.approx(ys[t], abs=1e-12)

    def test_noise_needs_rng(self, synthetic):
        with pytest.raises(ValueError):
            simulate(synthetic[0], np.zeros((3, 3)))


class TestMarkov:
    def test_examples(self, synthetic):
        system = synthetic[0]
        np.testing.assert_array_equal(markov_parameter(system, 0), system.theta)
        assert markov_parameter(SCALAR, 3)[0] == pytest.approx(0.25)
        np.testing.assert_allclose(markov_parameter(system, 1), [0.25, 0, 0.01])

    def test_sequence_matches_parameter(self, advertising):
        system = advertising[0]
        seq = markov_sequence(system, 12)
        for s in range(12):
            np.testing.assert_allclose(seq[s], markov_parameter(system, s), atol=1e-14)

    def test_cumulative(self, synthetic):
        np.testing.assert_allclose(cumulative_markov(SCALAR), [2.0])
        system = DlbSystem([[0.3]], [[1.0, 2.0]], [0.0], [0.4, -0.1])
        np.testing.assert_array_equal(cumulative_markov(system), system.theta)
        np.testing.assert_allclose(cumulative_markov(synthetic[0]), [0.3125, 0.5, 1 / 9], atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 4), st.floats(0.0, 0.9))
    def test_cumulative_matches_partial_sum(self, seed, n, d, rho):
        system = random_stable_system(np.random.default_rng(seed), n, d, rho)
        h = cumulative_markov(system)
        np.testing.assert_allclose(h, partial_sum_h(system, 600), rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(truncated_cumulative_markov(system, 600), h, rtol=1e-8, atol=1e-8)

    def test_steady_state_fixed_point(self, advertising):
        system = advertising[0]
        u = np.array([0.5, 1.0, 0.0])
        x = steady_state(system, u)
        np.testing.assert_allclose(system.A @ x + system.B @ u, x, atol=1e-12)
        assert system.omega @ x + system.theta @ u == pytest.approx(cumulative_markov(system) @ u)

    def test_reward_helpers(self):
        assert steady_state_reward([0.56, 0.5, 0.11], [0.5, 1, 0]) == pytest.approx(0.78)
        assert steady_state_reward([0.3, -2, 4], [0, 0, 0]) == 0
        with pytest.raises(ValueError):
            steady_state_reward([1, 2], [1, 2, 3])


class TestSpectral:
    def test_diagonal(self, synthetic):
        stats = spectral_stats(synthetic[0])
        assert stats.rho == pytest.approx(0.2) and stats.phi == pytest.approx(1.0)

    def test_zero(self):
        stats = spectral_stats(np.zeros((3, 3)))
        assert stats.rho == 0 and stats.phi == 1

    def test_advertising(self, advertising):
        assert 0.66 <= spectral_stats(advertising[0]).rho <= 0.68

    def test_non_normal_phi(self):
        # Jordan block: ||A^k|| / rho^k = sqrt-ish growth in k/rho
        A = np.array([[0.5, 1.0], [0.0, 0.5]])
        stats = spectral_stats(A, 50)
        brute = max(np.linalg.norm(np.linalg.matrix_power(A, k), 2) / 0.5**k for k in range(51))
        assert stats.phi == pytest.approx(brute, rel=1e-10)


def brute_force_hard(params):
    system, _, _ = hard_instance(params)
    h = cumulative_markov(system)
    best = max(itertools.product([-1.0, 1.0], repeat=params.d), key=lambda u: h @ np.array(u))
    return h, np.array(best), float(h @ np.array(best))


class TestHardInstance:
    def test_zero_eps(self):
        params = HardInstanceParams(3, 0.5, 0.0, (0.5, 0.5, 0.5))
        system, u, J = hard_instance(params)
        np.testing.assert_allclose(cumulative_markov(system), 0, atol=1e-15)
        assert J == 0

    def test_one_dim(self):
        params = HardInstanceParams(1, 0.5, 0.25, (0.5,))
        system, u, J = hard_instance(params)
        np.testing.assert_allclose(cumulative_markov(system), [1 / 6])
        assert J == pytest.approx(1 / 6)

    def test_two_dim(self):
        params = HardInstanceParams(2, 0.5, 0.25, (0.5, 0.25))
        system, u, J = hard_instance(params)
        h, best, J_brute = brute_force_hard(params)
        np.testing.assert_array_equal(u, best)
        assert J == pytest.approx(1 / 3) and J_brute == pytest.approx(1 / 3)

    def test_closed_form_h(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 7))
            rho = float(rng.uniform(0.05, 0.95))
            eps = float(rng.uniform(0, rho))
            a = tuple(rng.choice([rho, rho - eps], d))
            params = HardInstanceParams(d, rho, eps, a)
            np.testing.assert_allclose(hard_instance_h(params), cumulative_markov(hard_instance(params)[0]),
                                       atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            HardInstanceParams(2, 0.5, 0.6, (0.5, 0.5))
        with pytest.raises(ValueError):
            HardInstanceParams(2, 0.5, 0.1, (0.5, 0.3))
        with pytest.raises(ValueError):
            HardInstanceParams(2, 0.5, 0.1, (0.5,))


class TestReductions:
    def test_delay_one(self):
        system = make_delayed_instance([0.3, 0.7], 1)
        ys, _ = simulate(system, [[0, 1], [0, 0]])
        assert ys[0] == 0 and ys[1] == pytest.approx(0.7)

    def test_delay_three_constant(self):
        system = make_delayed_instance([1.0], 3)
        ys, _ = simulate(system, np.ones((20, 1)))
        np.testing.assert_array_equal(ys[:3], 0)
        np.testing.assert_allclose(ys[3:], 1.0)

    def test_composite_spread(self):
        system = make_composite_instance([1.0], [0.5, 0.5])
        ys, _ = simulate(system, [[1.0], [0.0], [0.0], [0.0]])
        np.testing.assert_allclose(ys, [0, 0.5, 0.5, 0])

    def test_ar1(self):
        system = make_ar1_instance([1.0], 0.5)
        ys, _ = simulate(system, [[1.0], [0.0], [0.0], [0.0]])
        np.testing.assert_allclose(ys, [0, 1, 0.5, 0.25])
        ys, _ = simulate(system, np.ones((80, 1)))
        assert ys[-1] == pytest.approx(2.0)
        np.testing.assert_allclose(cumulative_markov(make_ar1_instance([0.2, 1.0], 0.5)), [0.4, 2.0])

    def test_invalid(self):
        with pytest.raises(ValueError):
            make_delayed_instance([1.0], 0)
        with pytest.raises(ValueError):
            make_ar1_instance([1.0], 1.0)


class TestFiniteHorizon:
    def test_last_round_is_myopic(self, synthetic):
        system, extras = synthetic
        actions = ActionSet.budget_box(3, 1.5)
        u = finite_horizon_optimal(system, 10, actions, 10)
        np.testing.assert_array_equal(u, [0, 1, 0.5])

    def test_long_horizon_matches_infinite(self, advertising):
        system = advertising[0]
        actions = ActionSet.budget_box(3, 1.5)
        h = cumulative_markov(system)
        expected = actions.vectors[int(np.argmax(actions.vectors @ h))]
        np.testing.assert_array_equal(finite_horizon_optimal(system, 500, actions, 1), expected)

    def test_paper_h_long_horizon(self, synthetic):
        # with the stated steady-state weights the optimum is (1, 0.5, 0)
        h = np.array(synthetic[1]["paper_h"])
        system = DlbSystem(np.zeros((1, 1)), np.zeros((1, 3)), [0.0], h)
        actions = ActionSet.budget_box(3, 1.5)
        np.testing.assert_array_equal(finite_horizon_optimal(system, 100, actions, 1), [1, 0.5, 0])

    def test_bad_round(self, synthetic):
        with pytest.raises(ValueError):
            finite_horizon_optimal(synthetic[0], 5, [[1, 0, 0]], 6)
