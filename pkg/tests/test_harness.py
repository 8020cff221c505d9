import copy
import json
import math

import numpy as np
import pytest

from dynbandit.action_space import ActionSet
from dynbandit.harness import (
    ConfigError,
    PolicySpec,
    aggregate,
    apply_overrides,
    default_checkpoints,
    lemma_gap_bound,
    oracle,
    oracle_bounds,
    parse_config,
    read_aggregate_csv,
    read_config,
    read_traces_csv,
    run_all,
    run_one,
    run_sweep,
    sublinearity_statistic,
    write_aggregate_csv,
    write_traces_csv,
)
from dynbandit.lti_env import DlbSystem, HardInstanceParams, cumulative_markov, hard_instance

BASE = {
    "schema": 1,
    "system": {"fixture": "synthetic"},
    "action_set": {"kind": "budget_box", "d": 3, "budget": 1.5},
    "horizon": 200,
    "seed": 0,
    "n_seeds": 2,
    "bounds": {"oracle": True, "lambda": "logT"},
    "policies": [{"name": "dynlin_ucb", "rho_bar": 0.2}],
}


def config(**changes):
    raw = copy.deepcopy(BASE)
    raw.update(changes)
    return parse_config(raw)


class TestOracle:
    def test_paper_h(self, synthetic):
        system, extras = synthetic
        res = oracle(system, ActionSet.budget_box(3, 1.5), extras["paper_h"])
        np.testing.assert_array_equal(res.u_star, [1, 0.5, 0])
        assert res.J_star == pytest.approx(0.81) and res.gap == pytest.approx(0.03)

    def test_formula_h(self, synthetic):
        res = oracle(synthetic[0], ActionSet.budget_box(3, 1.5))
        np.testing.assert_array_equal(res.u_star, [0.5, 1, 0])
        assert res.J_star == pytest.approx(0.65625)

    def test_single_action(self, synthetic):
        res = oracle(synthetic[0], ActionSet.explicit([[1, 0, 0]]))
        assert math.isinf(res.gap)

    def test_hard_instance(self):
        system, _, _ = hard_instance(HardInstanceParams(2, 0.5, 0.25, (0.5, 0.25)))
        assert oracle(system, ActionSet.signs(2)).J_star == pytest.approx(1 / 3)

    def test_bounds_are_true_quantities(self, advertising):
        system = advertising[0]
        b = oracle_bounds(system, ActionSet.budget_box(3, 1.5), 1000)
        assert 0.66 < b.rho_bar < 0.68 and b.phi_bar >= 1
        assert b.omega_bound == pytest.approx(np.linalg.norm(system.omega))
        assert b.delta == pytest.approx(1e-3)


class TestConfig:
    def test_parse(self):
        cfg = config()
        assert cfg.seeds == [0, 1] and cfg.horizon == 200
        assert cfg.bounds.lam == pytest.approx(math.log(200))
        assert cfg.policies[0].label == "dynlin_ucb(rho_bar=0.2)"
        assert cfg.checkpoints == default_checkpoints(200)

    def test_explicit_seeds(self):
        assert config(seeds=[5, 9]).seeds == [5, 9]

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match="'horizonn'"):
            config(horizonn=3)
        with pytest.raises(ConfigError, match="'gama'"):
            config(policies=[{"name": "dlinucb", "gama": 0.9}])
        with pytest.raises(ConfigError, match="'rho'"):
            config(bounds={"rho": 0.3})

    def test_schema(self):
        with pytest.raises(ConfigError, match="schema"):
            config(schema=2)

    def test_missing_seed(self):
        raw = copy.deepcopy(BASE)
        del raw["seed"]
        with pytest.raises(ConfigError, match="'seed'"):
            parse_config(raw)

    def test_rho_bar_below_spectral_radius(self):
        with pytest.raises(ConfigError, match="rho"):
            config(bounds={"oracle": True, "rho_bar": 0.1})

    def test_overrides(self):
        raw = apply_overrides(BASE, ["horizon=1000", "policies.0.rho_bar=0.4", "bounds.lambda=2.5"])
        assert raw["horizon"] == 1000 and raw["policies"][0]["rho_bar"] == 0.4
        assert raw["bounds"]["lambda"] == 2.5 and BASE["horizon"] == 200
        with pytest.raises(ConfigError):
            apply_overrides(BASE, ["nokey"])

    def test_read_config_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_config(tmp_path / "none.json")
        bad = tmp_path / "bad.json"
        bad.write_text('{\n  "schema": 1,\n  "horizon": ,\n}')
        with pytest.raises(ConfigError, match="line 3"):
            read_config(bad)

    def test_generator(self):
        cfg = config(system={"generator": {"kind": "ar1", "mu": [0.2, 1.0], "gamma": 0.5}}, action_set=None)
        assert cfg.actions.size == 2

    def test_generator_errors(self):
        with pytest.raises(ConfigError):
            config(system={"generator": {"kind": "hard", "rho": 0.5, "eps": 0.7, "a": [0.5]}})
        with pytest.raises(ConfigError):
            config(system={"generator": {"kind": "spiral"}})

    def test_paper_h_flag(self):
        cfg = config(use_paper_h=True)
        np.testing.assert_allclose(cfg.h_for_regret, [0.56, 0.5, 0.11])
        assert cfg.oracle().J_star == pytest.approx(0.81)

    def test_checkpoints(self):
        assert default_checkpoints(10) == [1, 2, 4, 5, 8, 10]
        with pytest.raises(ConfigError):
            config(checkpoints=[0, 5])


class TestRuns:
    def test_optimal_constant_zero_offline(self):
        cfg = config(policies=[{"name": "constant", "action": "optimal"}], sigma=0.0)
        tr = run_one(cfg, cfg.policies[0], 0)
        np.testing.assert_array_equal(tr.offline, 0)
        X = float(np.linalg.norm(cfg.system.x1))
        assert np.all(np.abs(tr.online) <= lemma_gap_bound(cfg.system, cfg.actions, X) + 1e-12)

    def test_suboptimal_constant_linear(self):
        cfg = config(policies=[{"name": "constant", "action": [1, 0.5, 0]}], sigma=0.0)
        tr = run_one(cfg, cfg.policies[0], 0)
        gap = cfg.oracle().J_star - cumulative_markov(cfg.system) @ np.array([1, 0.5, 0])
        np.testing.assert_allclose(tr.offline, tr.checkpoints * gap, rtol=1e-12)

    def test_deterministic(self):
        cfg = config(policies=["dynlin_ucb", "exp3", "dlinucb", "batch_exp3", "linucb"])
        for spec in cfg.policies:
            a, b = run_one(cfg, spec, 3), run_one(cfg, spec, 3)
            np.testing.assert_array_equal(a.online, b.online)
            np.testing.assert_array_equal(a.offline, b.offline)

    def test_parallel_matches_serial(self):
        cfg = config(policies=["dynlin_ucb", "exp3"])
        serial = run_all(cfg, 1)
        parallel = run_all(cfg, 2)
        for a, b in zip(serial, parallel):
            assert (a.policy, a.seed) == (b.policy, b.seed)
            np.testing.assert_array_equal(a.online, b.online)

    def test_mirrored_noise(self):
        cfg = config(policies=[{"name": "constant", "action": [1, 0.5, 0]}], sigma=0.2)
        spec = cfg.policies[0]
        plus, minus = run_one(cfg, spec, 4), run_one(cfg, spec, 4, noise_sign=-1.0)
        clean = run_one(config(policies=[{"name": "constant", "action": [1, 0.5, 0]}], sigma=0.0), spec, 4)
        mean_online = (plus.online + minus.online) / 2
        np.testing.assert_allclose(mean_online, clean.online, atol=1e-9)
        bound = lemma_gap_bound(cfg.system, cfg.actions, 0.0)
        assert np.all(np.abs(mean_online - plus.offline) <= bound + 1e-9)


class TestAggregate:
    def test_independent_recomputation(self):
        cfg = config(n_seeds=3, policies=["dynlin_ucb", "exp3"])
        traces, rows = run_sweep(cfg)
        for row in rows:
            vals = [tr.offline[list(tr.checkpoints).index(row.checkpoint)]
                    for tr in traces if tr.policy == row.policy]
            assert row.mean_offline == pytest.approx(np.mean(vals))
            assert row.std_offline == pytest.approx(np.std(vals, ddof=1))
            assert row.n_seeds == 3

    def test_single_seed_std_zero(self):
        cfg = config(n_seeds=1)
        _, rows = run_sweep(cfg)
        assert all(r.std_online == 0 and r.std_offline == 0 for r in rows)

    def test_csv_round_trip(self, tmp_path):
        cfg = config(policies=["linucb"])
        traces, rows = run_sweep(cfg)
        write_traces_csv(tmp_path / "t.csv", traces)
        write_aggregate_csv(tmp_path / "a.csv", rows)
        again = read_traces_csv(tmp_path / "t.csv")
        for a, b in zip(traces, again):
            np.testing.assert_array_equal(a.online, b.online)
            np.testing.assert_array_equal(a.offline, b.offline)
            assert a.actions == b.actions
        assert read_aggregate_csv(tmp_path / "a.csv") == rows


class TestSublinearity:
    def test_linear(self):
        cps = [1, 50, 100]
        assert sublinearity_statistic([1, 50, 100], cps) == pytest.approx(2.0)

    def test_sqrt(self):
        cps = [50, 100]
        assert sublinearity_statistic([math.sqrt(50), math.sqrt(100)], cps) == pytest.approx(math.sqrt(2))

    def test_undefined(self):
        assert math.isnan(sublinearity_statistic([0.0, 1.0], [5, 10]))
        with pytest.raises(ValueError):
            sublinearity_statistic([1.0, 2.0], [3, 10])
