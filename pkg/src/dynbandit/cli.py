"""Command-line front end.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import ConfigError
from .lti_env import load_fixture, save_system, spectral_stats
from .sysid import (
    DegenerateRealizationError,
    UnstableSystemError,
    default_history,
    identified_h,
    identify,
    read_trajectory_csv,
)

log = logging.getLogger("dynbandit")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DEFAULT_RHO_BARS = (0.0, 0.05, 0.1, 0.2, 0.4)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parse_kv(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        key, text = item.split("=", 1)
        try:
            out[key] = json.loads(text)
        except json.JSONDecodeError:
            out[key] = text
    return out


def _load_config(args) -> harness.ExperimentConfig:
    config = harness.read_config(args.config, args.override or [])
    if args.seeds is not None:
        if args.seeds < 1:
            raise UsageError("--seeds must be >= 1")
        base = config.seeds[0]
        config.seeds = list(range(base, base + args.seeds))
    return config


def _out_dir(args, config) -> Path:
    out = Path(args.out or config.output or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary(config, traces, rows) -> dict:
    orc = config.oracle()
    policies = {}
    for spec in config.policies:
        prs = harness.policy_rows(rows, spec.label)
        cps = [r.checkpoint for r in prs]
        stat = harness.sublinearity_statistic([r.mean_offline for r in prs], cps, config.horizon)
        finals = [tr.final_action().tolist() for tr in traces if tr.policy == spec.label]
        policies[spec.label] = {
            "mean_final_online": prs[-1].mean_online,
            "mean_final_offline": prs[-1].mean_offline,
            "sublinearity_offline": None if math.isnan(stat) else stat,
            "final_actions": finals,
        }
    return {
        "horizon": config.horizon,
        "seeds": config.seeds,
        "u_star": orc.u_star.tolist(),
        "J_star": orc.J_star,
        "gap": None if math.isinf(orc.gap) else orc.gap,
        "h": orc.h.tolist(),
        "policies": policies,
    }


def _write_results(out: Path, config, traces, rows) -> None:
    harness.write_traces_csv(out / "traces.csv", traces)
    harness.write_aggregate_csv(out / "aggregate.csv", rows)
    with open(out / "summary.json", "w") as fh:
        json.dump(_summary(config, traces, rows), fh, indent=2)
        fh.write("\n")
    print(f"wrote {out / 'traces.csv'}, {out / 'aggregate.csv'}, {out / 'summary.json'}")


def cmd_run(args) -> int:
    config = _load_config(args)
    traces, rows = harness.run_sweep(config, args.parallel)
    _write_results(_out_dir(args, config), config, traces, rows)
    return EXIT_OK


def cmd_sweep_rho(args) -> int:
    config = _load_config(args)
    rho_bars = DEFAULT_RHO_BARS if args.rho_bars is None else [float(v) for v in args.rho_bars.split(",")]
    base = next((p.params for p in config.policies if p.name == "dynlin_ucb"), {})
    extra = {k: v for k, v in base.items() if k != "rho_bar"}
    specs = []
    for rho in rho_bars:
        if not 0 <= rho < 1:
            raise ConfigError(f"rho_bar values must lie in [0, 1), got {rho}")
        specs.append(harness.PolicySpec("dynlin_ucb", {"rho_bar": rho, **extra}))
    config.policies = specs
    traces, rows = harness.run_sweep(config, args.parallel)
    _write_results(_out_dir(args, config), config, traces, rows)
    return EXIT_OK


def cmd_sysid(args) -> int:
    path = Path(args.trajectory)
    if not path.exists():
        raise FileNotFoundError(f"trajectory not found: {path}")
    try:
        traj = read_trajectory_csv(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    H = args.history if args.history is not None else default_history(args.rho_bar, len(traj))
    if H >= len(traj):
        raise ConfigError(f"history {H} must be smaller than the trajectory length {len(traj)}")
    try:
        real, est = identify(traj, H, args.order, args.lam)
    except DegenerateRealizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    result = {
        "A": real.A.tolist(), "B": real.B.tolist(), "C": real.C.tolist(), "D": real.D.tolist(),
        "order": real.order, "history": H, "lambda": args.lam,
        "singular_values": real.singular_values.tolist(),
    }
    try:
        result["h"] = np.atleast_1d(identified_h(real)).tolist()
        result["rho"] = spectral_stats(real.A).rho
    except UnstableSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_make_instance(args) -> int:
    params = _parse_kv(args.param)
    params["kind"] = args.kind
    system, extras = harness.generate_instance(params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_system(system, out, **extras)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.config:
        config = harness.read_config(args.config, args.override or [])
        if args.use_paper_h:
            config.use_paper_h = True
            if config.reference_h is None:
                raise ConfigError("the system has no paper_h")
        orc = config.oracle()
    else:
        system, extras = load_fixture(args.fixture)
        spec = extras.get("action_set")
        if spec is None:
            raise ConfigError(f"fixture {args.fixture} has no action_set; use --config")
        actions = harness.build_action_set(spec)
        h = None
        if args.use_paper_h:
            if "paper_h" not in extras:
                raise ConfigError(f"fixture {args.fixture} has no paper_h")
            h = extras["paper_h"]
        orc = harness.oracle(system, actions, h)
    print(json.dumps({
        "u_star": orc.u_star.tolist(), "J_star": orc.J_star,
        "gap": None if math.isinf(orc.gap) else orc.gap, "h": orc.h.tolist(),
    }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynbandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def experiment_flags(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--override", action="append", metavar="KEY=VALUE")
        p.add_argument("--seeds", type=int, help="number of seeds, counted from the config's seed")
        p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("run", help="run every policy of a config")
    experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-rho", help="run the epoch-based agent over several rho_bar values")
    experiment_flags(p)
    p.add_argument("--rho-bars", help="comma-separated list (default 0,0.05,0.1,0.2,0.4)")
    p.set_defaults(func=cmd_sweep_rho)

    p = sub.add_parser("sysid", help="identify a system from a trajectory CSV")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--order", type=int)
    p.add_argument("--history", type=int)
    p.add_argument("--rho-bar", type=float, default=0.9, help="used to pick the default history")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sysid)

    p = sub.add_parser("make-instance", help="write a special-instance fixture")
    p.add_argument("--kind", required=True, choices=["hard", "delayed", "composite", "ar1"])
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_instance)

    p = sub.add_parser("oracle", help="print the optimal constant action")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config")
    group.add_argument("--fixture")
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.add_argument("--use-paper-h", action="store_true")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
