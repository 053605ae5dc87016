"""Command-line front end.

    dcacal train --config exp.yaml
    dcacal evaluate --predictions preds.jsonl --bins 15 --out report/
    dcacal calibrate --fit val.jsonl --apply test.jsonl --out cal/
    dcacal toy-experiment --out toy/
    dcacal sweep-beta --betas 1,5,10,15,20,25
    dcacal compare --methods uncalibrated,temperature,dca
"""
from __future__ import annotations

import dataclasses
import functools
import logging
import sys
from pathlib import Path

import click

from . import harness, io
from .data import load_csv
from .errors import InvalidInput
from .losses import LossKind, LossSpec
from .nn import forward
from .posthoc import fit_temperature


def _fail(msg: str):
    raise click.ClickException(msg)


def experiment_options(f):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML experiment config.")
    @click.option("--bins", type=int, help="Number of equal-width confidence bins.")
    @click.option("--seed", type=int, help="Run a single seed instead of the config's seed list.")
    @click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
    @click.option("--beta", type=float, help="Auxiliary loss weight.")
    @click.option("--loss", "loss_kind", type=click.Choice([k.value for k in LossKind]), help="Training objective.")
    @functools.wraps(f)
    def wrapper(config_path, bins, seed, out, beta, loss_kind, **kwargs):
        try:
            cfg = harness.load_config(config_path) if config_path else harness.ExperimentConfig()
            changes = {}
            if bins is not None:
                changes["bins"] = bins
            if seed is not None:
                changes["seeds"] = [seed]
            if out is not None:
                changes["out"] = out
            if beta is not None or loss_kind is not None:
                loss = cfg.loss
                changes["loss"] = LossSpec(
                    loss_kind or loss.kind,
                    beta=loss.beta if beta is None else beta,
                    alpha=loss.alpha,
                    kernel_width=loss.kernel_width,
                    entropy_sign=loss.entropy_sign,
                )
            cfg = dataclasses.replace(cfg, **changes)
        except InvalidInput as exc:
            _fail(str(exc))
        try:
            return f(cfg, **kwargs)
        except InvalidInput as exc:
            _fail(str(exc))
        except OSError as exc:
            _fail(f"I/O error: {exc}")

    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    """Calibration experiments: DCA loss, ECE/MCE reporting and temperature scaling."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@experiment_options
def train(cfg):
    """Train one model per seed; write checkpoints, traces and calibration reports."""
    results = harness.cmd_train(cfg)
    for r in results:
        click.echo(f"seed {r.seed}: ece={r.report.ece:.4f} mce={r.report.mce:.4f} acc={r.report.accuracy:.4f} -> {r.directory}")


@main.command()
@click.option("--predictions", type=click.Path(exists=True, dir_okay=False), help="JSON-lines prediction log.")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), help="Model checkpoint.")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), help="Dataset CSV (with --checkpoint).")
@click.option("--use-temperature", is_flag=True, help="Apply the checkpoint's fitted temperature.")
@click.option("--bins", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="evaluation", show_default=True)
def evaluate(predictions, checkpoint, dataset, use_temperature, bins, out):
    """Calibration report (JSON), reliability table (CSV) and diagram (SVG)."""
    try:
        if predictions and not checkpoint:
            logits, labels = io.read_prediction_log(predictions)
            t = None
            source = {"predictions": Path(predictions).name}
        elif checkpoint and dataset and not predictions:
            model, t_ckpt, _ = io.load_checkpoint(checkpoint)
            data = load_csv(dataset, k=model.class_count)
            logits, labels = forward(model, data.inputs), data.labels
            if use_temperature and t_ckpt is None:
                _fail(f"{checkpoint}: no fitted temperature stored")
            t = t_ckpt if use_temperature else None
            source = {"checkpoint": Path(checkpoint).name, "dataset": Path(dataset).name}
        else:
            _fail("give either --predictions, or --checkpoint together with --dataset")
        report = harness.evaluate_predictions(logits, labels, bins, t)
        harness.write_report_bundle(out, report, dict(source, temperature=t, bins=bins))
    except InvalidInput as exc:
        _fail(str(exc))
    click.echo(f"ece={report.ece:.4f} mce={report.mce:.4f} acc={report.accuracy:.4f} nll={report.nll:.4f} -> {out}")


@main.command()
@click.option("--fit", "fit_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Prediction log used to fit the temperature.")
@click.option("--apply", "apply_path", type=click.Path(exists=True, dir_okay=False),
              help="Prediction log to calibrate (defaults to the fitting log).")
@click.option("--objective", type=click.Choice(["nll", "ece"]), default="nll", show_default=True)
@click.option("--bins", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="calibration", show_default=True)
def calibrate(fit_path, apply_path, objective, bins, out):
    """Fit a temperature on one prediction log and apply it to another."""
    try:
        z_fit, y_fit = io.read_prediction_log(fit_path)
        scaler = fit_temperature(z_fit, y_fit, objective=objective, m_bins=bins)
        z, y = io.read_prediction_log(apply_path) if apply_path else (z_fit, y_fit)
        if z.shape[1] != z_fit.shape[1]:
            raise InvalidInput(f"class count mismatch: fit log K={z_fit.shape[1]}, apply log K={z.shape[1]}")
        before = harness.evaluate_predictions(z, y, bins)
        after = harness.evaluate_predictions(z, y, bins, scaler.t)
        harness.write_report_bundle(out, after, {
            "temperature": scaler.t, "objective": objective, "fit_nll": scaler.fit_nll, "bins": bins,
            "uncalibrated": before.to_dict(),
        }, title=f"T={scaler.t:.3f}")
        io.write_json(Path(out) / "temperature.json", {"t": scaler.t, "t_hex": float(scaler.t).hex(),
                                                       "objective": objective, "fit_nll": scaler.fit_nll})
    except InvalidInput as exc:
        _fail(str(exc))
    click.echo(f"T={scaler.t:.4f} ece {before.ece:.4f} -> {after.ece:.4f} -> {out}")


@main.command("toy-experiment")
@click.option("--grid-points", type=int, default=81, show_default=True)
@experiment_options
def toy_experiment(cfg, grid_points):
    """Recover p(y=1|x) on the 1-D task with uncalibrated, temperature-scaled and DCA models."""
    if cfg.dataset.kind != "toy1d":
        _fail("toy-experiment needs dataset.kind = toy1d")
    s = harness.cmd_toy_experiment(cfg, grid_points)
    for m, v in s["median_score"].items():
        click.echo(f"{m:>13}: median curve MAD={v:.4f} median ECE={s['median_ece'][m]:.4f}")


def _parse_betas(ctx, param, value):
    if value is None:
        return list(harness.DEFAULT_BETAS)
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter("betas must be comma-separated numbers")


@main.command("sweep-beta")
@click.option("--betas", callback=_parse_betas, help="Comma-separated DCA weights (default 1,5,10,15,20,25).")
@experiment_options
def sweep_beta(cfg, betas):
    """Train DCA models over a grid of weights; report ECE per weight."""
    s = harness.cmd_sweep_beta(cfg, betas)
    for row in s["table"]:
        click.echo(f"beta={row['beta']:g}: median ECE={row['median_ece']:.4f} median acc={row['median_accuracy']:.4f}")


@main.command()
@click.option("--methods", default="uncalibrated,temperature,dca", show_default=True,
              help="Comma-separated methods; 'name:beta=..' or 'name:alpha=..' sets weights. Separate with ';' "
                   "when parameters are given.")
@experiment_options
def compare(cfg, methods):
    """Run several methods per seed and tabulate ECE/accuracy with relative ECE reduction."""
    items = methods.split(";") if ";" in methods else methods.split(",")
    r = harness.cmd_compare(cfg, [m for m in items if m.strip()])
    click.echo(harness.compare_markdown(r["columns"], cfg.seeds))


if __name__ == "__main__":
    sys.exit(main())
