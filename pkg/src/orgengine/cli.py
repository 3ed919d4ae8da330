"""Command-line entry point.

Exit codes: 0 ok, 1 configuration error, 2 runtime error, 3 report check
failure. Every command writes its documented outputs plus a manifest.json
into the output directory. Manifests carry logical tick counts instead of
wall-clock times so reruns of the same (scenario, seed) produce identical
output trees.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bandit import BanditConfig, linear_context_env, run_synthetic
from .config import (
    bundled_scenario_path,
    config_hash,
    ingest_config,
    robustness_config_from,
)
from .ctmdp import greedy_policy, solve_value_iteration, validate_model
from .errors import ConfigError, OrgEngineError
from .events import EventLog
from .game import solve_spe, verify_spe
from .infotheory import Distribution, generalized_entropy, measure_speedup, renyi_divergence
from .orchestrator import plan_to_json_str, report_chain, run_episode
from .robustness import baseline_policy, run_trials, welch_t_test, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3


@dataclass
class RunManifest:
    scenario: str | None
    seed: int | None
    command: str
    output_directory: str
    version: str
    config_hash: str
    start_tick: int
    end_tick: int

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        (out_dir / "manifest.json").write_text(payload, encoding="utf-8")


def _manifest(command: str, scenario, seed, out, end_tick: int, raw_hash: str) -> None:
    RunManifest(
        scenario=str(scenario) if scenario else None,
        seed=seed,
        command=command,
        output_directory=str(out),
        version=__version__,
        config_hash=raw_hash,
        start_tick=0,
        end_tick=end_tick,
    ).write(Path(out))


def _load(scenario_path: str):
    sc = ingest_config(scenario_path)
    return sc


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__)
def main():
    """Organizational decision engine."""


def _scenario_option(required=True):
    return click.option(
        "--scenario",
        "scenario_path",
        required=required,
        type=click.Path(),
        help="Scenario config file (YAML).",
    )


@main.command("solve-ctmdp")
@_scenario_option()
@click.option("--tol", default=1e-10, show_default=True, type=float)
@click.option("--out", default="out", show_default=True, type=click.Path())
def solve_ctmdp_cmd(scenario_path, tol, out):
    """Solve every role's decision model and export values and policies."""
    try:
        sc = _load(scenario_path)
        results = {}
        for role in sc.roles:
            report = validate_model(role.model)
            if not report.ok:
                _fail(EXIT_CONFIG, f"role {role.label!r}: " + "; ".join(report.issues))
            v = solve_value_iteration(role.model, tol=tol)
            policy = greedy_policy(role.model, v)
            results[role.label] = {
                "beta": report.beta,
                **v.to_json(role.model.states),
                "policy": policy.to_json(role.model.states, role.model.actions),
            }
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "values.json").write_text(
            json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _manifest("solve-ctmdp", scenario_path, None, out, len(sc.roles), sc.scenario_hash)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except OrgEngineError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(f"solved {scenario_path} -> {out}/values.json")


@main.command("equilibrium")
@_scenario_option()
@click.option("--out", default="out", show_default=True, type=click.Path())
def equilibrium_cmd(scenario_path, out):
    """Solve the hierarchy game and verify the equilibrium path."""
    try:
        sc = _load(scenario_path)
        path = solve_spe(sc.game)
        report = verify_spe(sc.game, path)
        payload = path.to_json(sc.game)
        payload["verified"] = report.ok
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "equilibrium.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _manifest("equilibrium", scenario_path, None, out, len(sc.game.contexts), sc.scenario_hash)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except OrgEngineError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(f"equilibrium written -> {out}/equilibrium.json")


@main.command("brainstorm")
@_scenario_option()
@click.option("--seed", required=True, type=int)
@click.option("--trials", default=None, type=int, help="Override the configured trial count.")
@click.option("--out", default="out", show_default=True, type=click.Path())
def brainstorm_cmd(scenario_path, seed, trials, out):
    """Evaluate the configured divergence gate and search-speedup block."""
    try:
        sc = _load(scenario_path)
        block = sc.extras.get("brainstorm_eval")
        if not block:
            _fail(EXIT_CONFIG, "scenario has no brainstorm_eval section")
        labels = tuple(sorted(block["prior"]))
        if tuple(sorted(block["posterior"])) != labels:
            _fail(EXIT_CONFIG, "brainstorm_eval prior/posterior outcome sets differ")
        prior = Distribution.normalized([block["prior"][k] for k in labels], labels)
        posterior = Distribution.normalized([block["posterior"][k] for k in labels], labels)
        alpha = float(block.get("alpha", sc.brainstorm.alpha))
        divergence = renyi_divergence(posterior, prior, alpha)
        entropy = generalized_entropy(posterior, prior, alpha)
        report = measure_speedup(
            prior,
            posterior,
            target=str(block["target"]),
            trials=int(trials or block.get("trials", 100_000)),
            seed=seed,
            epsilon_bits=float(block.get("epsilon_bits", divergence)),
        )
        payload = {
            "alpha": alpha,
            "divergence_bits": divergence,
            "generalized_entropy_bits": entropy,
            "speedup": asdict(report),
        }
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "brainstorm.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _manifest("brainstorm", scenario_path, seed, out, report.trials, sc.scenario_hash)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except (OrgEngineError, ValueError, KeyError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(f"brainstorm report -> {out}/brainstorm.json")


@main.command("bandit")
@_scenario_option()
@click.option("--seed", required=True, type=int)
@click.option("--out", default="out", show_default=True, type=click.Path())
def bandit_cmd(scenario_path, seed, out):
    """Run the configured synthetic bandit and export the regret ledger."""
    try:
        sc = _load(scenario_path)
        block = sc.extras.get("bandit_synthetic")
        if not block:
            _fail(EXIT_CONFIG, "scenario has no bandit_synthetic section")
        arms = block["arms"]
        env = linear_context_env(
            [a["weights"] for a in arms], [a["intercept"] for a in arms]
        )
        cfg = BanditConfig(
            num_arms=env.num_arms,
            context_dim=env.context_dim,
            length_scale=sc.bandit_cfg.length_scale,
            signal_var=sc.bandit_cfg.signal_var,
            obs_noise=sc.bandit_cfg.obs_noise,
            jitter=sc.bandit_cfg.jitter,
        )
        rounds = int(block.get("rounds", 2000))
        ledger = run_synthetic(env, rounds, cfg, seed)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "regret.csv").write_text(ledger.to_csv(), encoding="utf-8")
        summary = {
            "rounds": rounds,
            "total_regret": ledger.total_regret,
            "gamma_hat": ledger.gamma_hat(cfg.num_arms),
            "arm_counts": [ledger.arms_chosen.count(k) for k in range(cfg.num_arms)],
        }
        (out_dir / "bandit.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _manifest("bandit", scenario_path, seed, out, rounds, sc.scenario_hash)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except (OrgEngineError, ValueError, KeyError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(f"bandit outputs -> {out}/regret.csv")


@main.command("orchestrate")
@_scenario_option()
@click.option("--seed", required=True, type=int)
@click.option("--max-rounds", default=None, type=int, help="Override the configured limit.")
@click.option("--out", default="out", show_default=True, type=click.Path())
def orchestrate_cmd(scenario_path, seed, max_rounds, out):
    """Run a full episode and export the plan, event log, and delegation tree."""
    try:
        sc = _load(scenario_path)
        if max_rounds is not None:
            from dataclasses import replace

            sc = replace(sc, max_rounds=max_rounds)
        plan, log = run_episode(sc, seed)
        tree = report_chain(log)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        log.dump(out_dir / "events.jsonl")
        (out_dir / "plan.json").write_text(plan_to_json_str(plan), encoding="utf-8")
        (out_dir / "delegation_tree.json").write_text(
            json.dumps(tree.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out_dir / "delegation_tree.txt").write_text(tree.to_text(), encoding="utf-8")
        _manifest("orchestrate", scenario_path, seed, out, plan.rounds, sc.scenario_hash)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except OrgEngineError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(
        f"episode {'converged' if plan.converged else 'stopped'} after {plan.rounds} rounds -> {out}/"
    )


@main.command("robustness")
@click.option("--seed", required=True, type=int)
@click.option("--trials", default=30, show_default=True, type=int)
@_scenario_option(required=False)
@click.option("--out", default="out", show_default=True, type=click.Path())
def robustness_cmd(seed, trials, scenario_path, out):
    """Run the trust/ivf delegation experiment plus the baseline comparison."""
    try:
        sc = _load(scenario_path) if scenario_path else None
        cfg = robustness_config_from(sc)
        _, summary = run_trials(cfg, n_trials=trials, seed=seed)
        _, baseline_summary = baseline_policy(cfg, n_trials=trials, seed=seed + 1)
        welch = welch_t_test(summary.overall_means, baseline_summary.overall_means)
        write_outputs(out, summary, baseline_summary, welch, cfg)
        raw_hash = sc.scenario_hash if sc else config_hash(b"")
        _manifest("robustness", scenario_path, seed, out, trials, raw_hash)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except (OrgEngineError, ValueError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(f"robustness outputs -> {out}/ (t={welch.t:.2f}, p={welch.p:.3g})")


@main.command("report")
@click.option("--log", "log_path", required=True, type=click.Path(exists=False))
@click.option("--out", default="out", show_default=True, type=click.Path())
def report_cmd(log_path, out):
    """Rebuild the delegation tree from an event log; exit 3 on open reports."""
    try:
        if not Path(log_path).exists():
            _fail(EXIT_CONFIG, f"event log not found: {log_path}")
        log = EventLog.load(log_path)
        tree = report_chain(log)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "delegation_tree.json").write_text(
            json.dumps(tree.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out_dir / "delegation_tree.txt").write_text(tree.to_text(), encoding="utf-8")
        _manifest("report", None, log.seed, out, len(log), log.scenario_hash)
    except (OrgEngineError, ValueError, KeyError) as exc:
        _fail(EXIT_RUNTIME, str(exc))
    if not tree.all_closed():
        click.echo("open delegations remain", err=True)
        sys.exit(EXIT_CHECK_FAILED)
    click.echo(f"delegation tree -> {out}/delegation_tree.txt (all reports closed)")


@main.command("scenarios")
def scenarios_cmd():
    """List the bundled example scenarios."""
    for name in ("minimal", "translation_startup", "product_launch"):
        click.echo(bundled_scenario_path(name))


if __name__ == "__main__":
    main()
