"""Command-line interface: five verbs over one config and output directory.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
failure, 5 evaluation failure.
"""

import sys

import click

from .config import load_config
from .errors import TsgenError
from .pipeline import cmd_evaluate, cmd_generate, cmd_prepare, cmd_report, cmd_train


def _load(config_path, seed):
    config = load_config(config_path)
    if seed is not None:
        config.seed = int(seed)
        config.validate()
    return config


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except TsgenError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


def _common(fn):
    fn = click.option("--seed", type=int, default=None, help="Override the master seed.")(fn)
    fn = click.option(
        "--out",
        "out_dir",
        required=True,
        type=click.Path(file_okay=False),
        help="Output directory for run artifacts.",
    )(fn)
    fn = click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(dir_okay=False),
        help="Path to the run configuration file.",
    )(fn)
    return fn


@click.group()
def main():
    """Train, sample, and score generative models of time series."""


@main.command()
@_common
def prepare(config_path, out_dir, seed):
    """Fit the schema and encode the train/test splits."""
    config = _run(_load, config_path, seed)
    paths = _run(cmd_prepare, config, out_dir)
    click.echo(f"prepared {paths['train']}")


@main.command()
@_common
@click.option("--resume", is_flag=True, help="Continue from existing checkpoints.")
def train(config_path, out_dir, seed, resume):
    """Train the autoencoder and the latent-space generator."""
    config = _run(_load, config_path, seed)
    bundle = _run(cmd_train, config, out_dir, resume=resume)
    click.echo(f"bundle written to {bundle}")


@main.command()
@_common
@click.option("--count", type=int, default=None, help="Number of instances to sample.")
def generate(config_path, out_dir, seed, count):
    """Sample synthetic instances from a trained bundle."""
    config = _run(_load, config_path, seed)
    path = _run(cmd_generate, config, out_dir, count=count, seed=seed)
    click.echo(f"synthetic data written to {path}")


@main.command()
@_common
def evaluate(config_path, out_dir, seed):
    """Score the synthetic data and render the report."""
    config = _run(_load, config_path, seed)
    written = _run(cmd_evaluate, config, out_dir)
    click.echo(f"report rendered: {len(written)} files under {written[0].parent}")


@main.command()
@_common
def report(config_path, out_dir, seed):
    """Re-render tables and figures from a saved report."""
    config = _run(_load, config_path, seed)
    written = _run(cmd_report, config, out_dir)
    click.echo(f"report rendered: {len(written)} files under {written[0].parent}")


if __name__ == "__main__":
    main()
