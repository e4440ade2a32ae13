"""Command-line entry point.

Six subcommands, one per study kind, sharing the same flags::

    virovec simulate    --config study.toml [--seed N] [--out DIR]
    virovec ide1        --config study.toml ...
    virovec ide2        --config study.toml ...
    virovec convergence --config study.toml ...
    virovec extinction  --config study.toml ...
    virovec persistence --config study.toml ...

Exit codes: 0 success, 2 config/validation failure, 3 numerical failure.
"""

from __future__ import annotations

import sys

import click

from .experiments import parse_config, run_study
from .model import ConfigError, NumericalError

_EXIT_CONFIG = 2
_EXIT_NUMERICAL = 3


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="Study config (TOML).")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Master seed (overrides the config).")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output directory (overrides the config).")(fn)
    fn = click.option("--replicates", type=int, default=None,
                      help="Replicate count (overrides the config).")(fn)
    fn = click.option("--horizon", type=float, default=None,
                      help="Time horizon T (overrides the config).")(fn)
    return fn


def _run(kind: str, config_path, seed, out, replicates, horizon) -> None:
    try:
        cfg = parse_config(
            config_path, kind=kind, seed=seed, out=out,
            replicates=replicates, horizon=horizon,
        )
        for note in cfg.diagnostics:
            click.echo(f"note: {note}", err=True)
        manifest = run_study(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(_EXIT_CONFIG)
    except NumericalError as exc:
        click.echo(f"numerical error: {exc}", err=True)
        sys.exit(_EXIT_NUMERICAL)
    for entry in manifest["files"]:
        click.echo(f"wrote {cfg.out_dir}/{entry['name']} ({entry['rows']} rows)")
    click.echo(f"wrote {cfg.out_dir}/manifest.json")


@click.group()
def main() -> None:
    """Stochastic vector-borne virus simulator and its scaling limits."""


def _register(kind: str, doc: str) -> None:
    @main.command(name=kind, help=doc)
    @_common_options
    def _cmd(config_path, seed, out, replicates, horizon, _kind=kind):
        _run(_kind, config_path, seed, out, replicates, horizon)


_register("simulate", "Exact particle trajectories, one CSV pair per replicate.")
_register("ide1", "Moderate-vector limit equations (regime 1): mass paths and final fields.")
_register("ide2", "Fast-vector limit equations (regime 2): mass paths and final fields.")
_register("convergence", "Particle ladder in K against the matching limit solution.")
_register("extinction", "Replicated extinction fractions with Wilson intervals.")
_register("persistence", "Net-invasion-rate table over plants and traits.")


if __name__ == "__main__":
    main()
