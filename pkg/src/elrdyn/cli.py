"""Command-line entry point.

    elrdyn simulate <config.json>   deterministic trajectory + summary
    elrdyn compare  <config.json>   one trajectory per schedule + ranking
    elrdyn mc       <config.json>   Monte Carlo ensemble + deviation report

Exit codes: 0 success, 1 configuration error, 2 numerical failure (partial
output written), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import ConfigurationError, ContractViolation, ModelConfig, SimulationOverflow
from .io import write_ensemble_csv, write_json, write_trajectory_csv
from .metrics import spread_report
from .profiles import ProfileSpec, build_profile
from .schedulers import Schedule, Trajectory, schedule_from_dict, simulate
from .stochastic import ConstrainPolicy, McConfig, deviation_report, mc_ensemble

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

SCHEMA_VERSION = 1

DEFAULT_OUTPUTS = {
    "simulate": {"trajectory_csv": "trajectory.csv", "summary_json": "summary.json"},
    "compare": {"trajectory_csv": "{name}.csv", "comparison_json": "comparison.json"},
    "mc": {"ensemble_csv": "ensemble.csv", "summary_json": "deviation.json"},
}


@dataclass
class ScenarioConfig:
    profile: ProfileSpec
    steps: int
    schedule: Schedule | None = None
    schedules: dict[str, Schedule] = field(default_factory=dict)
    model_config: ModelConfig = field(default_factory=ModelConfig)
    mc: McConfig | None = None
    outputs: dict[str, str] = field(default_factory=dict)
    record_every: int = 1
    convergence_tolerance: float = 1e-9


def _field(d: dict, key: str, where: str, required: bool = True, default=None):
    if key not in d:
        if required:
            raise ConfigurationError(f"{where}: missing required field '{key}'")
        return default
    return d[key]


def _sub(fn, where: str, *args):
    try:
        return fn(*args)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def _profile(d: dict) -> ProfileSpec:
    if not isinstance(d, dict):
        raise ConfigurationError("expected an object")
    return ProfileSpec(**d)


def _mc(d: dict) -> McConfig:
    d = dict(d)
    constrain = d.pop("constrain", None)
    if constrain is not None:
        constrain = ConstrainPolicy(**constrain)
    return McConfig(constrain=constrain, **d)


def parse_config(raw: dict[str, Any]) -> ScenarioConfig:
    """Validate a decoded JSON config; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config: top level must be a JSON object")
    schema = raw.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigurationError(f"schema: expected {SCHEMA_VERSION}, got {schema!r}")
    profile = _sub(_profile, "profile", _field(raw, "profile", "config"))
    steps = _field(raw, "steps", "config")
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        raise ConfigurationError(f"steps: must be a positive integer, got {steps!r}")
    schedule = None
    if "schedule" in raw:
        schedule = _sub(schedule_from_dict, "schedule", raw["schedule"])
    schedules: dict[str, Schedule] = {}
    for n, entry in enumerate(raw.get("schedules", [])):
        where = f"schedules[{n}]"
        name = _field(entry, "name", where)
        if not isinstance(name, str) or not name or "/" in name:
            raise ConfigurationError(f"{where}.name: must be a non-empty string without '/'")
        if name in schedules:
            raise ConfigurationError(f"{where}.name: duplicate schedule name {name!r}")
        schedules[name] = _sub(schedule_from_dict, where, entry)
    model = _sub(lambda d: ModelConfig(**d), "model_config", raw.get("model_config", {}))
    mc = _sub(_mc, "mc", raw["mc"]) if raw.get("mc") is not None else None
    outputs = raw.get("outputs", {})
    if not isinstance(outputs, dict) or not all(isinstance(v, str) for v in outputs.values()):
        raise ConfigurationError("outputs: must map output names to path strings")
    record_every = raw.get("record_every", 1)
    if not isinstance(record_every, int) or record_every < 1:
        raise ConfigurationError("record_every: must be a positive integer")
    tol = raw.get("convergence_tolerance", 1e-9)
    if not isinstance(tol, (int, float)) or not tol > 0:
        raise ConfigurationError("convergence_tolerance: must be positive")
    return ScenarioConfig(profile, steps, schedule, schedules, model, mc, dict(outputs), record_every, float(tol))


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)


def _outputs(cfg: ScenarioConfig, command: str, out_dir: Path) -> dict[str, Path]:
    merged = {**DEFAULT_OUTPUTS[command], **cfg.outputs}
    return {k: out_dir / v for k, v in merged.items()}


def _summary(traj: Trajectory, cfg: ScenarioConfig) -> dict:
    final = traj.final_state()
    return {
        "schema": SCHEMA_VERSION,
        "status": "ok" if traj.failure is None else "overflow",
        "failure": traj.failure,
        "steps_requested": cfg.steps,
        "steps_completed": traj.steps_completed,
        "convergence_tolerance": cfg.convergence_tolerance,
        "convergence_horizon": traj.convergence_horizon(cfg.convergence_tolerance),
        "total_flips": traj.total_flips,
        "flip_steps": traj.flip_steps,
        "supercritical_steps": [int(i) for i, s in enumerate(traj.supercritical_full) if s],
        "final_spread": spread_report(final).to_dict(),
        "mean_s_rel": float(sum(traj.s_rel) / len(traj.s_rel)),
    }


def _run_deterministic(cfg: ScenarioConfig, schedule: Schedule) -> Trajectory:
    initial = build_profile(cfg.profile)
    try:
        return simulate(initial, schedule, cfg.steps, cfg.record_every, cfg.model_config)
    except SimulationOverflow as exc:
        return exc.partial


def cmd_simulate(cfg: ScenarioConfig, out_dir: Path, log) -> int:
    if cfg.schedule is None:
        raise ConfigurationError("schedule: required for 'simulate'")
    paths = _outputs(cfg, "simulate", out_dir)
    traj = _run_deterministic(cfg, cfg.schedule)
    summary = _summary(traj, cfg)
    write_trajectory_csv(traj, paths["trajectory_csv"])
    write_json(summary, paths["summary_json"])
    log(f"simulate: {summary['steps_completed']} steps, flips={summary['total_flips']}, "
        f"horizon={summary['convergence_horizon']}")
    return EXIT_OK if traj.failure is None else EXIT_NUMERIC


def _rank_key(item):
    horizon = item["convergence_horizon"]
    return (math.inf if horizon is None else horizon, item["total_flips"])


def cmd_compare(cfg: ScenarioConfig, out_dir: Path, log) -> int:
    if len(cfg.schedules) < 2:
        raise ConfigurationError("schedules: 'compare' needs at least two named schedules")
    paths = _outputs(cfg, "compare", out_dir)
    pattern = str(paths["trajectory_csv"])
    if "{name}" not in pattern:
        raise ConfigurationError("outputs.trajectory_csv: must contain '{name}' for 'compare'")
    results = []
    failed = False
    for name, schedule in cfg.schedules.items():
        traj = _run_deterministic(cfg, schedule)
        failed |= traj.failure is not None
        write_trajectory_csv(traj, pattern.format(name=name))
        entry = {"name": name, "schedule": schedule.to_dict(), **_summary(traj, cfg)}
        entry.pop("schema")
        results.append(entry)
    ranking = [r["name"] for r in sorted(results, key=_rank_key)]
    write_json({"schema": SCHEMA_VERSION, "ranking": ranking, "schedules": results}, paths["comparison_json"])
    log("compare: " + " < ".join(ranking))
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_montecarlo(cfg: ScenarioConfig, out_dir: Path, log) -> int:
    if cfg.mc is None:
        raise ConfigurationError("mc: required for 'mc'")
    if cfg.schedule is None:
        raise ConfigurationError("schedule: required for 'mc'")
    paths = _outputs(cfg, "mc", out_dir)
    initial = build_profile(cfg.profile)
    try:
        ens = mc_ensemble(initial, cfg.schedule, cfg.steps, cfg.mc)
    except SimulationOverflow as exc:
        write_json({"schema": SCHEMA_VERSION, "status": "overflow", "excluded_trials": exc.partial},
                   paths["summary_json"])
        log("mc: every trial overflowed")
        return EXIT_NUMERIC
    try:
        model = simulate(initial, cfg.schedule, cfg.steps, 1, cfg.model_config)
        report = deviation_report(ens, model)
    except SimulationOverflow as exc:
        report = {"model_failure": exc.partial.failure}
    report.update(schema=SCHEMA_VERSION, status="ok", steps=cfg.steps, seed=cfg.mc.seed,
                  trials_requested=cfg.mc.trials)
    if cfg.mc.constrain is not None:
        goal = cfg.mc.constrain.e_goal
        rel = abs(ens.mean_elr[1:] - goal) / goal
        report["elr_goal"] = goal
        report["max_relative_elr_goal_deviation"] = float(rel.max())
    write_ensemble_csv(ens, paths["ensemble_csv"], cfg.record_every)
    write_json(report, paths["summary_json"])
    log(f"mc: {ens.n_trials} trials, excluded={len(ens.excluded_trials)}, "
        f"max relative deviation={report.get('max_relative_deviation')}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "mc": cmd_montecarlo}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elrdyn", description="Simulate ELR dynamics of normalized networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run the deterministic model"),
        ("compare", "compare several schedules"),
        ("mc", "run a Monte Carlo ensemble"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="scenario config (JSON, schema 1)")
        p.add_argument("--seed", type=int, default=None, help="override mc.seed")
        p.add_argument("--out-dir", default=".", help="directory for relative output paths")
        p.add_argument("--record-every", type=int, default=None, help="keep every n-th row in CSV output")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg))
    try:
        cfg = load_config(args.config)
        if args.record_every is not None:
            if args.record_every < 1:
                raise ConfigurationError("--record-every: must be a positive integer")
            cfg.record_every = args.record_every
        if args.seed is not None and cfg.mc is not None:
            cfg.mc = _sub(lambda: McConfig(**{**cfg.mc.__dict__, "seed": args.seed}), "--seed")
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir, log)
    except (ConfigurationError, ContractViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
