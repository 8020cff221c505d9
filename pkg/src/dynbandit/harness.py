"""Seeded regret experiments: configs, the exact oracle, runs, sweeps and CSV output."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .action_space import ActionSet, argmax_linear
from .lti_env import (
    DlbSystem,
    HardInstanceParams,
    cumulative_markov,
    hard_instance,
    load_fixture,
    make_ar1_instance,
    make_composite_instance,
    make_delayed_instance,
    spectral_stats,
)
from .policies import (
    BatchExp3,
    BoundsConfig,
    ConstantPolicy,
    DLinUCB,
    DynLinUCB,
    Exp3,
    LinUCB,
    Policy,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
POLICY_NAMES = ("dynlin_ucb", "linucb", "dlinucb", "exp3", "batch_exp3", "constant")

TRACE_COLUMNS = ["policy", "seed", "checkpoint", "online_regret", "offline_regret", "chosen_action_json"]
AGGREGATE_COLUMNS = ["policy", "checkpoint", "mean_online", "std_online",
                     "mean_offline", "std_offline", "n_seeds"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# oracle


@dataclass(frozen=True)
class OracleResult:
    u_star: np.ndarray
    J_star: float
    gap: float
    h: np.ndarray


def oracle(system: DlbSystem, actions: ActionSet, h=None) -> OracleResult:
    """Best constant action, its value, and the gap to the best suboptimal action.

    ``h`` replaces the formula-derived steady-state weights when given.
    The gap is ``inf`` when every action is optimal.
    """
    h = cumulative_markov(system) if h is None else np.asarray(h, dtype=float)
    u_star, J_star = argmax_linear(h, actions)
    values = actions.vectors @ h
    tol = 1e-12 * max(1.0, abs(J_star))
    worse = values[values < J_star - tol]
    gap = float(J_star - worse.max()) if worse.size else math.inf
    return OracleResult(u_star.copy(), J_star, gap, h)


def oracle_bounds(system: DlbSystem, actions: ActionSet, T: int, power_cutoff: int = 200) -> BoundsConfig:
    """Bounds filled with the true system quantities.

    The state bound is the noise-free envelope ``Phi (||x1|| + B U / (1 - rho))``.
    """
    stats = spectral_stats(system, power_cutoff)
    B = float(np.linalg.norm(system.B, 2))
    U = actions.U
    X = stats.phi * (float(np.linalg.norm(system.x1)) + B * U / (1 - stats.rho))
    return BoundsConfig(
        rho_bar=stats.rho, phi_bar=stats.phi,
        theta_bound=float(np.linalg.norm(system.theta)),
        omega_bound=float(np.linalg.norm(system.omega)),
        input_matrix_bound=B, action_bound=U, state_bound=X,
        sigma=system.sigma, lam=1.0, delta=1.0 / T if T > 1 else 0.5,
    )


def lemma_gap_bound(system: DlbSystem, actions_or_U, X: float | None = None,
                    power_cutoff: int = 200) -> float:
    """Constant bounding ``|sum_t J(u_t) - E y_t|`` for any action sequence."""
    stats = spectral_stats(system, power_cutoff)
    U = actions_or_U.U if isinstance(actions_or_U, ActionSet) else float(actions_or_U)
    X = float(np.linalg.norm(system.x1)) if X is None else X
    Omega = float(np.linalg.norm(system.omega))
    B = float(np.linalg.norm(system.B, 2))
    one_minus = 1 - stats.rho
    return Omega * stats.phi * B * U / one_minus**2 + Omega * stats.phi * X / one_minus


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PolicySpec:
    name: str
    params: dict = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.name!r}; expected one of {', '.join(POLICY_NAMES)}")
        if self.label is None:
            inner = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
            self.label = f"{self.name}({inner})" if inner else self.name


def _fmt(value) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + " ".join(_fmt(v) for v in value) + "]"
    return str(value)


@dataclass
class ExperimentConfig:
    system: DlbSystem
    actions: ActionSet
    policies: list[PolicySpec]
    horizon: int
    seeds: list[int]
    bounds: BoundsConfig
    checkpoints: list[int] | None = None
    output: str | None = None
    use_paper_h: bool = False
    reference_h: np.ndarray | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.actions.d != self.system.d:
            raise ConfigError(
                f"action dimension {self.actions.d} does not match system input dimension {self.system.d}")
        if self.use_paper_h and self.reference_h is None:
            raise ConfigError("use_paper_h is set but the system fixture has no paper_h")
        if self.checkpoints is None:
            self.checkpoints = default_checkpoints(self.horizon)
        else:
            bad = [c for c in self.checkpoints if not 1 <= c <= self.horizon]
            if bad:
                raise ConfigError(f"checkpoints outside [1, horizon]: {bad}")
            self.checkpoints = sorted(set(int(c) for c in self.checkpoints))

    @property
    def h_for_regret(self) -> np.ndarray:
        if self.use_paper_h:
            return np.asarray(self.reference_h, dtype=float)
        return cumulative_markov(self.system)

    def oracle(self) -> OracleResult:
        return oracle(self.system, self.actions, self.h_for_regret)


def default_checkpoints(T: int) -> list[int]:
    """Powers of two up to T, plus T/2 and T."""
    points = {T, max(1, T // 2)}
    c = 1
    while c <= T:
        points.add(c)
        c *= 2
    return sorted(points)


_TOP_KEYS = {"schema", "system", "action_set", "policies", "horizon", "seed", "n_seeds", "seeds",
             "bounds", "checkpoints", "output", "use_paper_h", "sigma", "description"}
_SYSTEM_KEYS = {"fixture", "file", "generator"}
_ACTION_KEYS = {"kind", "d", "budget", "actions", "file"}
_BOUND_KEYS = {"oracle", "rho_bar", "phi_bar", "theta_bound", "omega_bound", "input_matrix_bound",
               "action_bound", "state_bound", "sigma", "lambda", "delta", "power_cutoff"}
_POLICY_KEYS = {
    "dynlin_ucb": {"rho_bar", "lambda", "delta", "phi_bar"},
    "linucb": {"lambda", "delta"},
    "dlinucb": {"gamma", "lambda", "delta"},
    "exp3": {"rate"},
    "batch_exp3": {"rho_bar", "k"},
    "constant": {"action"},
}


def _reject_unknown(section: dict, allowed: Iterable[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as JSON when possible."""
    data = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if part.isdigit() and isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
        last = parts[-1]
        if isinstance(node, list) and last.isdigit():
            node[int(last)] = value
        else:
            node[last] = value
    return data


def read_config(path: str | Path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(apply_overrides(raw, overrides), base_dir=path.parent)


def _resolve(base_dir: Path | None, name: str) -> Path:
    p = Path(name)
    if not p.is_absolute() and base_dir is not None and (base_dir / p).exists():
        return base_dir / p
    return p


def build_system(spec: dict, base_dir: Path | None = None) -> tuple[DlbSystem, dict]:
    _reject_unknown(spec, _SYSTEM_KEYS, "system")
    if len(spec) != 1:
        raise ConfigError("system needs exactly one of 'fixture', 'file', 'generator'")
    if "fixture" in spec:
        return load_fixture(spec["fixture"])
    if "file" in spec:
        return load_fixture(_resolve(base_dir, spec["file"]))
    return generate_instance(spec["generator"])


def generate_instance(gen: dict) -> tuple[DlbSystem, dict]:
    """Build a special instance from ``{"kind": ..., params}``."""
    gen = dict(gen)
    kind = gen.pop("kind", None)
    sigma = float(gen.pop("sigma", 0.0))
    allowed = {
        "hard": {"d", "rho", "eps", "a"},
        "delayed": {"mu", "tau"},
        "composite": {"mu", "weights"},
        "ar1": {"mu", "gamma"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown generator kind {kind!r}; expected one of {', '.join(allowed)}")
    _reject_unknown(gen, allowed[kind], f"generator ({kind})")
    missing = [k for k in allowed[kind] if k not in gen and not (kind == "hard" and k == "d")]
    if missing:
        raise ConfigError(f"generator ({kind}) is missing {', '.join(sorted(missing))}")
    try:
        extras: dict[str, Any] = {"name": kind}
        if kind == "hard":
            a = list(gen["a"])
            params = HardInstanceParams(int(gen.get("d", len(a))), float(gen["rho"]), float(gen["eps"]), tuple(a))
            system, u_star, J_star = hard_instance(params)
            extras.update(u_star=u_star.tolist(), J_star=J_star,
                          action_set={"kind": "signs", "d": params.d})
        elif kind == "delayed":
            system = make_delayed_instance(gen["mu"], int(gen["tau"]))
            extras["action_set"] = {"kind": "basis", "d": len(gen["mu"])}
        elif kind == "composite":
            system = make_composite_instance(gen["mu"], gen["weights"])
            extras["action_set"] = {"kind": "basis", "d": len(gen["mu"])}
        else:
            system = make_ar1_instance(gen["mu"], float(gen["gamma"]))
            extras["action_set"] = {"kind": "basis", "d": len(gen["mu"])}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"generator ({kind}): {exc}") from exc
    return system.with_sigma(sigma), extras


def build_action_set(spec: dict, base_dir: Path | None = None) -> ActionSet:
    _reject_unknown(spec, _ACTION_KEYS, "action_set")
    kind = spec.get("kind")
    if kind == "budget_box":
        return ActionSet.budget_box(int(spec["d"]), float(spec["budget"]))
    if kind == "signs":
        return ActionSet.signs(int(spec["d"]))
    if kind == "basis":
        return ActionSet.explicit(np.eye(int(spec["d"])))
    if kind == "explicit":
        if "file" in spec:
            return ActionSet.from_json(_resolve(base_dir, spec["file"]))
        return ActionSet.explicit(spec["actions"])
    raise ConfigError(f"unknown action_set kind {kind!r}")


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")
    if raw.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {raw.get('schema')!r}; expected {SCHEMA_VERSION}")
    for key in ("system", "policies", "horizon", "seed"):
        if key not in raw:
            raise ConfigError(f"missing required field {key!r}")

    system, extras = build_system(raw["system"], base_dir)
    if "sigma" in raw:
        system = system.with_sigma(float(raw["sigma"]))
    action_spec = raw.get("action_set") or extras.get("action_set")
    if action_spec is None:
        raise ConfigError("no action_set given and the system does not provide one")
    actions = build_action_set(action_spec, base_dir)

    T = int(raw["horizon"])
    if "seeds" in raw:
        seeds = [int(s) for s in raw["seeds"]]
    else:
        seeds = [int(raw["seed"]) + i for i in range(int(raw.get("n_seeds", 1)))]

    bounds = parse_bounds(raw.get("bounds", {"oracle": True}), system, actions, T)

    policies = []
    for entry in raw["policies"]:
        if isinstance(entry, str):
            entry = {"name": entry}
        entry = dict(entry)
        name = entry.pop("name", None)
        label = entry.pop("label", None)
        if name not in _POLICY_KEYS:
            raise ConfigError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")
        _reject_unknown(entry, _POLICY_KEYS[name], f"policy {name}")
        policies.append(PolicySpec(name, entry, label))
    if not policies:
        raise ConfigError("policies must be a nonempty list")

    ref = extras.get("paper_h")
    return ExperimentConfig(
        system=system, actions=actions, policies=policies, horizon=T, seeds=seeds, bounds=bounds,
        checkpoints=raw.get("checkpoints"), output=raw.get("output"),
        use_paper_h=bool(raw.get("use_paper_h", False)),
        reference_h=None if ref is None else np.asarray(ref, dtype=float), raw=raw,
    )


def _lambda_value(value, T: int) -> float:
    if isinstance(value, str):
        if value.lower() in ("logt", "log_t", "log(t)"):
            return math.log(T)
        raise ConfigError(f"lambda must be a number or 'logT', got {value!r}")
    return float(value)


def parse_bounds(spec: dict, system: DlbSystem, actions: ActionSet, T: int) -> BoundsConfig:
    _reject_unknown(spec, _BOUND_KEYS, "bounds")
    spec = dict(spec)
    use_oracle = bool(spec.pop("oracle", True))
    cutoff = int(spec.pop("power_cutoff", 200))
    changes = {}
    for key, value in spec.items():
        if key == "lambda":
            changes["lam"] = _lambda_value(value, T)
        elif key == "delta":
            changes["delta"] = float(value) if value is not None else 1.0 / T
        else:
            changes[key] = float(value)
    try:
        if use_oracle:
            bounds = oracle_bounds(system, actions, T, cutoff).replace(**changes)
            rho = spectral_stats(system, cutoff).rho
            if bounds.rho_bar < rho - 1e-12:
                raise ConfigError(f"bounds.rho_bar={bounds.rho_bar} is below rho(A)={rho:.6g}")
            return bounds
        required = {"rho_bar", "phi_bar", "theta_bound", "omega_bound", "input_matrix_bound",
                    "action_bound", "state_bound", "sigma"}
        missing = required - set(changes)
        if missing:
            raise ConfigError(f"bounds without oracle need: {', '.join(sorted(missing))}")
        changes.setdefault("delta", 1.0 / T if T > 1 else 0.5)
        return BoundsConfig(**changes)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bounds: {exc}") from exc


# ---------------------------------------------------------------------------
# running


def build_policy(spec: PolicySpec, config: ExperimentConfig) -> Policy:
    p = spec.params
    T = config.horizon
    bounds = config.bounds
    if "lambda" in p:
        bounds = bounds.replace(lam=_lambda_value(p["lambda"], T))
    if "delta" in p:
        bounds = bounds.replace(delta=float(p["delta"]))
    if "phi_bar" in p:
        bounds = bounds.replace(phi_bar=float(p["phi_bar"]))
    if spec.name == "dynlin_ucb":
        if "rho_bar" in p:
            bounds = bounds.replace(rho_bar=float(p["rho_bar"]))
        return DynLinUCB(config.actions, bounds, T)
    if spec.name == "linucb":
        return LinUCB(config.actions, bounds, T)
    if spec.name == "dlinucb":
        return DLinUCB(config.actions, bounds, T, float(p.get("gamma", 0.999)))
    if spec.name == "exp3":
        return Exp3(config.actions, bounds.xi, T, p.get("rate"))
    if spec.name == "batch_exp3":
        rho_bar = float(p.get("rho_bar", bounds.rho_bar))
        xi = bounds.xi
        if "k" in p:
            return BatchExp3(config.actions, xi, T, int(p["k"]))
        if rho_bar <= 0:
            return BatchExp3(config.actions, xi, T, 1)
        return BatchExp3.from_rho(config.actions, xi, T, rho_bar)
    action = p.get("action", "optimal")
    if action == "optimal":
        action = config.oracle().u_star
    return ConstantPolicy(action, config.actions)


@dataclass
class RegretTrace:
    policy: str
    seed: int
    checkpoints: np.ndarray
    online: np.ndarray
    offline: np.ndarray
    actions: list
    J_star: float
    gap: float
    clip_count: int = 0

    def rows(self) -> list[list]:
        return [
            [self.policy, self.seed, int(c), repr(float(on)), repr(float(off)), json.dumps(list(map(float, a)))]
            for c, on, off, a in zip(self.checkpoints, self.online, self.offline, self.actions)
        ]

    def final_action(self) -> np.ndarray:
        return np.asarray(self.actions[-1])


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (state noise, reward noise, policy) generators for one run."""
    state_ss, reward_ss, policy_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(state_ss), np.random.default_rng(reward_ss),
            np.random.default_rng(policy_ss))


_CHUNK = 1 << 14


def run_one(config: ExperimentConfig, spec: PolicySpec, seed: int, noise_sign: float = 1.0) -> RegretTrace:
    """One seeded run of ``config.horizon`` rounds.

    ``noise_sign=-1`` replays the same seed with mirrored noise.
    """
    system = config.system
    orc = config.oracle()
    h = orc.h
    policy = build_policy(spec, config)
    state_rng, reward_rng, policy_rng = _streams(seed)
    policy.reset(policy_rng.integers(2**63))

    A, B, omega, theta = system.A, system.B, system.omega, system.theta
    sigma = system.sigma * noise_sign
    n = system.n
    x = system.x1.copy()
    T = config.horizon
    checkpoints = np.array(config.checkpoints, dtype=np.int64)
    online = np.empty(len(checkpoints))
    offline = np.empty(len(checkpoints))
    actions: list = []
    next_cp = 0
    cum_y = 0.0
    cum_J = 0.0
    t = 1
    while t <= T:
        size = min(_CHUNK, T - t + 1)
        if sigma != 0.0:
            eta = sigma * reward_rng.standard_normal(size)
            eps = sigma * state_rng.standard_normal((size, n))
        else:
            eta = np.zeros(size)
            eps = None
        for i in range(size):
            u = policy.choose(t)
            if u.shape != (system.d,):
                raise ValueError(f"policy {spec.label} returned an action of shape {u.shape}")
            y = float(omega @ x + theta @ u) + eta[i]
            x = A @ x + B @ u
            if eps is not None:
                x += eps[i]
            policy.observe(t, u, y)
            cum_y += y
            cum_J += float(h @ u)
            if t == checkpoints[next_cp]:
                online[next_cp] = t * orc.J_star - cum_y
                offline[next_cp] = t * orc.J_star - cum_J
                actions.append(np.array(u, dtype=float).tolist())
                next_cp = min(next_cp + 1, len(checkpoints) - 1)
            t += 1
    return RegretTrace(spec.label, seed, checkpoints, online, offline, actions, orc.J_star, orc.gap,
                       getattr(policy, "clip_count", 0))


def _run_job(args):
    config, spec, seed = args
    return run_one(config, spec, seed)


def run_all(config: ExperimentConfig, parallel: int = 1) -> list[RegretTrace]:
    """Every (policy, seed) run, in config order."""
    jobs = [(config, spec, seed) for spec in config.policies for seed in config.seeds]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_run_job, jobs))
    traces = []
    for job in jobs:
        log.info("running %s seed=%d", job[1].label, job[2])
        traces.append(_run_job(job))
    return traces


@dataclass
class AggregateRow:
    policy: str
    checkpoint: int
    mean_online: float
    std_online: float
    mean_offline: float
    std_offline: float
    n_seeds: int

    def as_list(self) -> list:
        return [self.policy, self.checkpoint, repr(self.mean_online), repr(self.std_online),
                repr(self.mean_offline), repr(self.std_offline), self.n_seeds]


def aggregate(traces: Sequence[RegretTrace]) -> list[AggregateRow]:
    """Mean and sample std (ddof=1, 0 for one seed) per policy and checkpoint."""
    by_policy: dict[str, list[RegretTrace]] = {}
    for tr in traces:
        by_policy.setdefault(tr.policy, []).append(tr)
    rows = []
    for name, group in by_policy.items():
        group = sorted(group, key=lambda tr: tr.seed)
        cps = group[0].checkpoints
        on = np.array([tr.online for tr in group])
        off = np.array([tr.offline for tr in group])
        k = len(group)
        ddof = 1 if k > 1 else 0
        for j, c in enumerate(cps):
            rows.append(AggregateRow(
                name, int(c),
                float(on[:, j].mean()), float(on[:, j].std(ddof=ddof)),
                float(off[:, j].mean()), float(off[:, j].std(ddof=ddof)), k,
            ))
    return rows


def run_sweep(config: ExperimentConfig, parallel: int = 1) -> tuple[list[RegretTrace], list[AggregateRow]]:
    traces = run_all(config, parallel)
    return traces, aggregate(traces)


def sublinearity_statistic(means: Sequence[float], checkpoints: Sequence[int], T: int | None = None) -> float:
    """``R(T) / R(T/2)``: about sqrt(2) for sqrt-T regret, 2 for linear; nan if undefined."""
    cps = list(checkpoints)
    T = cps[-1] if T is None else T
    try:
        r_full = means[cps.index(T)]
        r_half = means[cps.index(max(1, T // 2))]
    except ValueError:
        raise ValueError("checkpoints must include T and T/2") from None
    if r_half <= 0:
        return math.nan
    return float(r_full / r_half)


def policy_rows(rows: Sequence[AggregateRow], policy: str) -> list[AggregateRow]:
    return [r for r in rows if r.policy == policy]


# ---------------------------------------------------------------------------
# persistence


def write_traces_csv(path: str | Path, traces: Sequence[RegretTrace]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for tr in traces:
            w.writerows(tr.rows())


def write_aggregate_csv(path: str | Path, rows: Sequence[AggregateRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for r in rows:
            w.writerow(r.as_list())


def read_traces_csv(path: str | Path) -> list[RegretTrace]:
    groups: dict[tuple[str, int], list[dict]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            groups.setdefault((row["policy"], int(row["seed"])), []).append(row)
    traces = []
    for (name, seed), rows in groups.items():
        traces.append(RegretTrace(
            name, seed,
            np.array([int(r["checkpoint"]) for r in rows]),
            np.array([float(r["online_regret"]) for r in rows]),
            np.array([float(r["offline_regret"]) for r in rows]),
            [json.loads(r["chosen_action_json"]) for r in rows],
            math.nan, math.nan,
        ))
    return traces


def read_aggregate_csv(path: str | Path) -> list[AggregateRow]:
    with open(path, newline="") as fh:
        return [
            AggregateRow(r["policy"], int(r["checkpoint"]), float(r["mean_online"]), float(r["std_online"]),
                         float(r["mean_offline"]), float(r["std_offline"]), int(r["n_seeds"]))
            for r in csv.DictReader(fh)
        ]
