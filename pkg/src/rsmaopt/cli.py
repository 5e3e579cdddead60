"""Command-line entry point: config-driven experiment runs and diagnostics.

One config file (TOML or JSON, by extension) describes one experiment;
sweeps are arrays inside it.  Results land in --output-dir as results.csv
plus manifest.json.  Exit codes: 0 success, 1 config/#IO errors, 2 when any
strategy had more than half of its blocks skipped as QoS-infeasible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from rsmaopt.experiments import (
    AGGREGATE,
    ExperimentSpec,
    StrategyRun,
    estimate_dof,
    mulp_dof_target,
    records_to_csv,
    region_weight_grid,
    rs_dof_target,
    run_esr_curve,
    run_multicast_study,
    run_rate_region,
    spec_manifest,
    write_outputs,
)
from rsmaopt.optimizer import AoConfig
from rsmaopt.strategy import Strategy

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_QOS_DOMINATED = 2


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    if path.endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    if path.endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    raise ConfigError(f"config must be .toml or .json, got: {path}")


def _apply_overrides(config: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got: {item}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through non-table key {part}")
        node[parts[-1]] = value
    return config


def _parse_strategies(raw) -> tuple[StrategyRun, ...]:
    runs = []
    for entry in raw:
        if isinstance(entry, str):
            runs.append(StrategyRun(strategy=Strategy(entry)))
            continue
        name = entry["name"]
        groups = entry.get("groups")
        order = entry.get("order")
        runs.append(
            StrategyRun(
                strategy=Strategy(name),
                groups=tuple(tuple(g) for g in groups) if groups else None,
                order_override=tuple(order) if order else None,
            )
        )
    return tuple(runs)


def build_spec(config: dict, seed: int | None, threads: int | None) -> ExperimentSpec:
    try:
        ao_raw = config.get("ao", {})
        ao = AoConfig(
            epsilon=float(ao_raw.get("epsilon", 1e-4)),
            max_iters=int(ao_raw.get("max_iters", 100)),
            num_inits=int(ao_raw.get("num_inits", 1)),
            solver_tol=float(ao_raw.get("solver_tol", 1e-7)),
            solver_max_iters=int(ao_raw.get("solver_max_iters", 200)),
            accelerate=bool(ao_raw.get("accelerate", True)),
        )
        qos_by_alpha = None
        if "qos_by_alpha" in config:
            qos_by_alpha = {float(k): tuple(float(x) for x in v) for k, v in config["qos_by_alpha"].items()}
        weight_grid = None
        if "weight_grid" in config:
            weight_grid = tuple(tuple(float(x) for x in w) for w in config["weight_grid"])
        spec = ExperimentSpec(
            user_variances=tuple(float(v) for v in config["user_variances"]),
            num_tx_antennas=int(config["num_tx_antennas"]),
            snr_db_list=tuple(float(s) for s in config["snr_db"]),
            alpha_list=tuple(float(a) for a in config["alpha"]),
            strategies=_parse_strategies(config["strategies"]),
            num_blocks=int(config.get("blocks", 20)),
            num_samples=int(config.get("samples", 200)),
            weight_grid=weight_grid,
            qos=tuple(float(x) for x in config["qos_r_th"]) if "qos_r_th" in config else None,
            qos_by_alpha=qos_by_alpha,
            multicast=bool(config.get("multicast", False)),
            multicast_threshold=float(config.get("multicast_r0_th", 0.0)),
            ao=ao,
            seed=int(config.get("seed", 0)) if seed is None else seed,
            threads=threads if threads is not None else int(config.get("threads", 1)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return spec


def _qos_dominated(records, spec: ExperimentSpec) -> bool:
    for run in spec.strategies:
        blocks = [r for r in records if r.strategy == run.label and r.block_id != AGGREGATE]
        if blocks and sum(r.skipped for r in blocks) * 2 > len(blocks):
            return True
    return False


def _spec_echo(spec: ExperimentSpec) -> str:
    return json.dumps(spec_manifest(spec, "")["spec"], indent=2, sort_keys=True)


def cmd_validate(spec: ExperimentSpec) -> int:
    print("config ok; resolved experiment:")
    print(_spec_echo(spec))
    return EXIT_OK


def cmd_run(spec: ExperimentSpec, output_dir: str) -> int:
    records = run_multicast_study(spec) if spec.multicast else run_esr_curve(spec)
    csv_path, manifest_path = write_outputs(spec, records, output_dir)
    print(f"wrote {csv_path} and {manifest_path}")
    return EXIT_QOS_DOMINATED if _qos_dominated(records, spec) else EXIT_OK


def cmd_region(spec: ExperimentSpec, output_dir: str) -> int:
    if spec.weight_grid is None:
        spec = replace(spec, weight_grid=tuple((1.0, u2) for u2 in region_weight_grid()))
    records = run_rate_region(spec)
    csv_path, manifest_path = write_outputs(spec, records, output_dir)
    print(f"wrote {csv_path} and {manifest_path}")
    return EXIT_QOS_DOMINATED if _qos_dominated(records, spec) else EXIT_OK


def cmd_dof(spec: ExperimentSpec, output_dir: str, window: tuple[float, float] | None) -> int:
    records = run_esr_curve(spec)
    write_outputs(spec, records, output_dir)
    slopes = estimate_dof(records, window)
    k = spec.num_users
    print(f"{'strategy':>18s} {'alpha':>6s} {'slope':>8s} {'common-stream target':>21s} {'private-only target':>20s}")
    for (strategy, alpha), slope in sorted(slopes.items()):
        print(
            f"{strategy:>18s} {alpha:6.2f} {slope:8.3f} "
            f"{rs_dof_target(k, alpha):21.3f} {mulp_dof_target(k, alpha):20.3f}"
        )
    return EXIT_OK


def cmd_dump_problem(spec: ExperimentSpec, output_dir: str) -> int:
    """Assemble the first subproblem of the first setting and dump it as JSON."""
    import numpy as np

    from rsmaopt import qcqp
    from rsmaopt.channel import ChannelConfig, draw_saa_samples, generate_block
    from rsmaopt.optimizer import AoState, StrategySpec, assemble_subproblem, init_precoders, update_g, update_w
    from rsmaopt.strategy import enumerate_orders

    run = spec.strategies[0]
    snr, alpha = spec.snr_db_list[0], spec.alpha_list[0]
    config = ChannelConfig(
        num_users=spec.num_users,
        num_tx_antennas=spec.num_tx_antennas,
        user_variances=spec.user_variances,
        csit_alpha=alpha,
        snr_db=snr,
        rng_seed=spec.seed,
    )
    block = generate_block(config, 0)
    samples = draw_saa_samples(block, config, spec.num_samples)
    strategy_spec = StrategySpec(
        strategy=run.strategy,
        groups=run.groups,
        qos=spec.qos_for_alpha(alpha),
        multicast=spec.multicast,
        multicast_threshold=spec.multicast_threshold,
        order_override=run.order_override,
    )
    pi, pi_prime = enumerate_orders(run.strategy, spec.num_users)[0]
    layout = strategy_spec.layout_for(spec.num_users, pi, pi_prime, block)
    state = AoState(precoders=init_precoders(layout, block, config.power_linear, 0, alpha))
    update_g(state, layout, samples)
    update_w(state, layout, samples)
    problem = assemble_subproblem(state, layout, samples, spec.ao, config.power_linear)
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "problem.json")
    qcqp.dump_problem(problem, path)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsmaopt",
        description="Precoder optimization studies for the multi-antenna broadcast channel",
    )
    parser.add_argument("command", choices=["run", "region", "dof", "validate", "dump-problem"])
    parser.add_argument("--config", required=True, help="experiment config (.toml or .json)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: config, RSMA_OPT_THREADS, or cores)")
    parser.add_argument("--output-dir", default="results", help="directory for results.csv/manifest.json")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="config override, value parsed as JSON (repeatable)")
    parser.add_argument("--dof-window", nargs=2, type=float, default=None, metavar=("LO_DB", "HI_DB"),
                        help="SNR window for the dof fit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if threads is None and "RSMA_OPT_THREADS" in os.environ:
        try:
            threads = int(os.environ["RSMA_OPT_THREADS"])
        except ValueError:
            print("RSMA_OPT_THREADS must be an integer", file=sys.stderr)
            return EXIT_ERROR
    if threads is None:
        threads = os.cpu_count() or 1

    try:
        config = _apply_overrides(_load_config(args.config), args.override)
        spec = build_spec(config, args.seed, threads)
    except (ConfigError, json.JSONDecodeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    try:
        if args.command == "validate":
            return cmd_validate(spec)
        if args.command == "run":
            return cmd_run(spec, args.output_dir)
        if args.command == "region":
            return cmd_region(spec, args.output_dir)
        if args.command == "dof":
            window = tuple(args.dof_window) if args.dof_window else None
            return cmd_dof(spec, args.output_dir, window)
        if args.command == "dump-problem":
            return cmd_dump_problem(spec, args.output_dir)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
