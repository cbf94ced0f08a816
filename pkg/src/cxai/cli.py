"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

import functools
import json
import logging
import os
import sys

import click

from . import harness
from .config import ExperimentConfig, format_config, load_config
from .contrastive import RelevanceRange
from .data import SynthSpec, save_dataset, synthesize_dataset
from .errors import ConfigError, CxaiError


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CxaiError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
    return wrapper


def _config(path, seed, out):
    cfg = load_config(path) if path else ExperimentConfig()
    return cfg.with_overrides(seed=seed, out_dir=out)


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                             help="key = value experiment config")
seed_option = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), help="global seed override")
out_option = click.option("--out", type=click.Path(file_okay=False), help="output directory override")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="log training progress")
def main(verbose):
    """Concept-based contrastive explanations for a binary image classifier."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command("train")
@config_option
@seed_option
@out_option
@_handle_errors
def train_cmd(config_path, seed, out):
    """Train (or fine-tune) the model and write <out>/weights.cxw."""
    cfg = _config(config_path, seed, out)
    path, train_acc, test_acc = harness.run_train(cfg)
    with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg.with_overrides(weights=path)))
    click.echo(f"weights: {path}\ntrain accuracy: {train_acc:.4f}\ntest accuracy: {test_acc:.4f}")


@main.command("explain")
@config_option
@seed_option
@out_option
@click.option("--target", required=True, help="test instance id")
@click.option("--range", "range_name", default="very_strong", show_default=True,
              type=click.Choice([r.value for r in RelevanceRange]))
@click.option("--json", "as_json", is_flag=True, help="emit a single JSON object")
@_handle_errors
def explain_cmd(config_path, seed, out, target, range_name, as_json):
    """Explain why TARGET got its class rather than the other one."""
    cfg = _config(config_path, seed, out)
    info = harness.explain_one(cfg, target, RelevanceRange.parse(range_name))
    click.echo(json.dumps(info, indent=2) if as_json else harness.format_explanation(info))


@main.command("r1")
@config_option
@seed_option
@out_option
@_handle_errors
def r1_cmd(config_path, seed, out):
    """Explanation length across relevance ranges (ANOVA)."""
    cfg = _config(config_path, seed, out)
    result = harness.run_r1(cfg)
    med = result.medians()
    click.echo(f"test accuracy {result.test_accuracy:.4f}; "
               f"{len(result.records) // 4} instances, {len(result.dropped)} dropped")
    click.echo("median length: " + ", ".join(f"{r.value}={m:g}" for r, m in med.items()))
    if result.anova is None:
        click.echo("ANOVA n/a (no within-range variance)")
    else:
        click.echo(f"ANOVA F={result.anova.statistic:.4f} df={result.anova.df} p={result.anova.p_value:.4g}")
    click.echo(f"wrote {cfg.out_dir}/r1_lengths.csv, r1_anova.csv, r1_summary.csv")


@main.command("r2")
@config_option
@seed_option
@out_option
@_handle_errors
def r2_cmd(config_path, seed, out):
    """Explanation length under augmentations (paired t-tests)."""
    cfg = _config(config_path, seed, out)
    result = harness.run_r2(cfg)
    for row in result.rows:
        t = "n/a" if row.test is None else f"t={row.test.statistic:.4f} p={row.test.p_value:.4f}"
        click.echo(f"{row.range.value:12s} {row.augmentation:10s} {t:24s} n={row.n}")
    click.echo(f"wrote {cfg.out_dir}/r2_table.csv, r2_lengths.csv, r2_summary.csv")


@main.command("synth")
@config_option
@seed_option
@out_option
@_handle_errors
def synth_cmd(config_path, seed, out):
    """Write the synthetic dataset as PGM files under <out>/train and <out>/test."""
    cfg = _config(config_path, seed, out)
    if cfg.input_shape[0] != 1:
        raise ConfigError("the synthetic generator produces single-channel images")
    for split, n in (("train", cfg.synth_train_per_class), ("test", cfg.synth_test_per_class)):
        data = synthesize_dataset(SynthSpec(n, cfg.synth_image_size, cfg.seed_for("synth"), split,
                                            tuple(cfg.class_names)))
        save_dataset(data, os.path.join(cfg.out_dir, split))
        click.echo(f"{split}: {len(data)} images -> {os.path.join(cfg.out_dir, split)}")


if __name__ == "__main__":
    main()
