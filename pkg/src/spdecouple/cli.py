"""Command-line entry points for the coupling experiment harness."""

from __future__ import annotations

import json
import os
import sys

import click

from .config import ConfigError, ExperimentConfig, load_config
from .harness import run_experiment


def _load(config_path, experiment, seed):
    cfg = load_config(config_path) if config_path else ExperimentConfig(experiment=experiment)
    if cfg.experiment != experiment:
        raise ConfigError(
            f"config requests experiment {cfg.experiment!r}, command is {experiment!r}")
    if seed is not None:
        cfg.seed = seed
    return cfg


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="Experiment config file (key = value lines).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override master seed.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), default="out",
                      help="Output directory for CSV artifacts and summary.json.")(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="Worker count (default: HARNESS_THREADS or config).")(fn)
    return fn


def _execute(experiment, config_path, seed, out_dir, threads):
    try:
        cfg = _load(config_path, experiment, seed)
        bundle = run_experiment(cfg, out_dir, threads)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {os.path.join(bundle.out_dir, 'summary.json')}")
    for p in bundle.csv_paths:
        click.echo(f"wrote {p}")
    return bundle


@click.group()
def main():
    """Simulation and verification harness for reflection-coupled stochastic PDEs."""


@main.command("lyapunov")
@_common
def lyapunov_cmd(config_path, seed, out_dir, threads):
    """Build the Lyapunov table and report its diagnostics."""
    _execute("lyapunov_build", config_path, seed, out_dir, threads)


@main.command("rd-couple")
@_common
def rd_couple_cmd(config_path, seed, out_dir, threads):
    """Reflection-couple a reaction-diffusion pair ensemble."""
    _execute("rd_couple", config_path, seed, out_dir, threads)


@main.command("burgers-staged")
@_common
def burgers_staged_cmd(config_path, seed, out_dir, threads):
    """Run the staged Burgers coupling over k_max blocks."""
    _execute("burgers_staged", config_path, seed, out_dir, threads)


@main.command("calibrate")
@_common
def calibrate_cmd(config_path, seed, out_dir, threads):
    """Monte Carlo calibration of the staged-coupling constants."""
    _execute("calibrate", config_path, seed, out_dir, threads)


@main.command("ou-validate")
@_common
def ou_validate_cmd(config_path, seed, out_dir, threads):
    """Compare the stepper with the exact linear spectral sampler."""
    bundle = _execute("ou_validate", config_path, seed, out_dir, threads)
    if not bundle.summary["all_ok"]:
        sys.exit(1)


@main.command("generator-check")
@_common
def generator_check_cmd(config_path, seed, out_dir, threads):
    """One-step generator identity check for the coupled difference norm."""
    _execute("generator_check", config_path, seed, out_dir, threads)


@main.command("report")
@click.option("--summary", "summary_path", type=click.Path(exists=True), required=True,
              help="summary.json produced by an experiment run.")
def report_cmd(summary_path):
    """Print a human-readable digest of a run summary."""
    with open(summary_path) as fh:
        summary = json.load(fh)
    cfg = summary.get("config", {})
    click.echo(f"experiment: {cfg.get('experiment', '?')}  seed: {cfg.get('seed', '?')}")
    for key in ("tau", "bounds", "fit", "checks", "calibration", "generator_check",
                "Lambda", "tv_violations", "all_ok", "p_uncoupled"):
        if key in summary:
            click.echo(f"{key}: {json.dumps(summary[key], default=str)}")
    t = summary.get("timings", {}).get("wall_seconds")
    if t is not None:
        click.echo(f"wall_seconds: {t:.2f}")


if __name__ == "__main__":
    main()
