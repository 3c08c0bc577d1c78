"""Command-line pipeline driver.

Stages run in order (ingest -> preprocess -> train -> explain -> report)
against one output directory; `synth` generates a self-contained synthetic
dataset for desk-scale runs. Failures print a single machine-parsable line
``ERROR <category>: <message>`` on stderr and exit nonzero.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import RunConfig, load_config
from .errors import PipelineError
from .pipeline import run_explain, run_ingest, run_preprocess, run_report, run_train
from .synthetic import SyntheticSpec, generate_dataset


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="Run configuration YAML (defaults apply when omitted).")
@click.option("--data", "data_root", type=click.Path(path_type=Path), default=None,
              help="Dataset root; overrides the config's dataset_root.")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
              help="Output directory; overrides the config's output_dir.")
@click.option("--seed", type=int, default=None,
              help="Override the run seed (also reseeds model and training).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker threads for I/O-bound stages.")
@click.pass_context
def main(ctx, config_path, data_root, out_dir, seed, jobs):
    """csPCa classification pipeline with attention-map auditing."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        config_path=config_path, data_root=data_root, out_dir=out_dir, seed=seed, jobs=jobs
    )


def _fail(exc: PipelineError):
    click.echo(f"ERROR {exc.category}: {exc}", err=True)
    sys.exit(1)


def _build_config(obj) -> RunConfig:
    config = load_config(obj["config_path"]) if obj["config_path"] else RunConfig()
    if obj["data_root"] is not None:
        config.dataset_root = Path(obj["data_root"])
    if obj["out_dir"] is not None:
        config.output_dir = Path(obj["out_dir"])
    if obj["seed"] is not None:
        config.seed = obj["seed"]
        config.model.seed = obj["seed"]
        config.train.seed = obj["seed"]
    return config


@main.command()
@click.option("--n", "n_patients", type=int, default=24, show_default=True)
@click.option("--positive-fraction", type=float, default=0.5, show_default=True)
@click.option("--grid-size", type=int, default=64, show_default=True)
@click.option("--slices", "n_slices", type=int, default=16, show_default=True)
@click.option("--noise", type=float, default=0.03, show_default=True)
@click.pass_context
def synth(ctx, n_patients, positive_fraction, grid_size, n_slices, noise):
    """Generate a synthetic dataset under --out."""
    obj = ctx.obj
    out = obj["out_dir"]
    if out is None:
        raise click.UsageError("synth needs --out <directory>")
    try:
        spec = SyntheticSpec(
            n_patients=n_patients,
            positive_fraction=positive_fraction,
            grid_size=grid_size,
            n_slices=n_slices,
            noise=noise,
            seed=obj["seed"] if obj["seed"] is not None else 0,
        )
        root = generate_dataset(spec, out)
    except PipelineError as exc:
        _fail(exc)
    click.echo(
        f"wrote {spec.n_patients} patients ({spec.n_positive} positive) to {root}"
    )


@main.command()
@click.pass_context
def ingest(ctx):
    """Catalog and validate the dataset."""
    try:
        config = _build_config(ctx.obj)
        catalog = run_ingest(config, jobs=ctx.obj["jobs"])
    except PipelineError as exc:
        _fail(exc)
    for w in catalog.warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(
        f"ingested {len(catalog)} records "
        f"({catalog.n_positive} positive / {catalog.n_negative} negative)"
    )


@main.command()
@click.pass_context
def preprocess(ctx):
    """Build composite volumes from the ingested catalog."""
    try:
        config = _build_config(ctx.obj)
        done = run_preprocess(config, jobs=ctx.obj["jobs"])
    except PipelineError as exc:
        _fail(exc)
    click.echo(f"preprocessed {len(done)} patients -> {config.output_dir / 'composites'}")


@main.command()
@click.pass_context
def train(ctx):
    """Run leave-one-out training and write fold results + metrics."""
    try:
        config = _build_config(ctx.obj)
        doc = run_train(config)
    except PipelineError as exc:
        _fail(exc)
    m = doc["metrics"]
    click.echo(
        f"LOOCV over {doc['n_folds']} folds: "
        f"Acc {100 * m['accuracy']:.1f}% Sen {100 * m['sensitivity']:.1f}% "
        f"Spec {100 * m['specificity']:.1f}% F1 {100 * m['f1']:.1f}%"
    )


@main.command()
@click.pass_context
def explain(ctx):
    """Compute attention maps, per-category sums, and mask-overlap table."""
    try:
        config = _build_config(ctx.obj)
        doc = run_explain(config)
    except PipelineError as exc:
        _fail(exc)
    click.echo(
        f"wrote {doc['n_maps']} attention maps; categories: {', '.join(doc['categories'])}"
    )


@main.command()
@click.pass_context
def report(ctx):
    """Emit the final metrics table and overlay panels."""
    try:
        config = _build_config(ctx.obj)
        report_dir = run_report(config)
    except PipelineError as exc:
        _fail(exc)
    click.echo(f"report written to {report_dir}")


if __name__ == "__main__":
    main()
