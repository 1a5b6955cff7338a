"""Command-line surface: reproducible generation runs and analysis reports.

Exit codes are documented in the group help so scripts can branch on failure
class without parsing messages.
"""

from __future__ import annotations

import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import migl
from .config import (
    PRESETS,
    SchedulerConfig,
    load_config,
    preset,
    with_overrides,
)
from .consistency import noisy_score_correlation, score_curve
from .denoisers import drift_denoiser, make_target_walk, perfect_target_denoiser
from .errors import ConfigError, FormatError, LqeError, ParameterError
from .generators import frames_array, generate, make_sampler, targets_needed
from .plotting import plot_correlation, plot_score_curve
from .schedule import build_schedule
from .trace import save_metrics, summarize

log = logging.getLogger("lqe")

EXIT_BAD_INPUT = 3   # invalid config, parameters, or file format
EXIT_ENGINE = 4      # engine/state error during a run
EXIT_IO = 5          # filesystem failure

_EPILOG = """\b
Exit codes:
  0  success
  2  command-line usage error
  3  invalid config, parameter, or input file format
  4  engine error during a run
  5  filesystem failure
"""


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, FormatError, ParameterError) as exc:
        _fail(EXIT_BAD_INPUT, str(exc))
    except LqeError as exc:
        _fail(EXIT_ENGINE, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))


@click.group(epilog=_EPILOG)
def main():
    """Latent-queue engine: diagonal-denoising scheduler with toy oracles."""
    logging.basicConfig(level=os.environ.get("LQE_LOG", "WARNING").upper())


def _load(config_path: str | None, preset_name: str) -> SchedulerConfig:
    if config_path:
        return load_config(config_path)
    return preset(preset_name)


def _build_denoiser(config: SchedulerConfig, kind: str, drift_prob: float, drift_scale: float):
    targets = make_target_walk(
        targets_needed(config), config.l, config.d, seed=config.seed
    )
    schedule = build_schedule(config.T, config.beta_min, config.beta_max)
    if kind == "drift":
        return drift_denoiser(targets, schedule, drift_prob, drift_scale, config.seed)
    return perfect_target_denoiser(targets, schedule)


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _run_one(config: SchedulerConfig, kind: str, drift_prob: float,
             drift_scale: float, out: str, plot: bool) -> str:
    den = _build_denoiser(config, kind, drift_prob, drift_scale)
    outputs, trace = generate(config, den)
    frames = frames_array(outputs)
    migl.write_latents(f"{out}.migl", frames)
    trace.save(f"{out}.trace.jsonl")
    save_metrics(f"{out}.metrics.json", summarize(trace))
    if plot:
        rows = score_curve(frames) if frames.shape[0] >= 12 else []
        _write_csv(f"{out}.scores.csv", ["position", "score"], rows)
        plot_score_curve(rows, f"{out}.scores.png")
    return out


@main.command("generate")
@click.option("--config", "config_path", type=click.Path(), help="Config file (key = value lines).")
@click.option("--preset", "preset_name", default="videocrafter2-like",
              type=click.Choice(sorted(PRESETS)), show_default=True)
@click.option("--out", required=True, help="Output path prefix.")
@click.option("--mode", type=click.Choice(["fifo", "tta", "tta+dce", "stage2-only"]))
@click.option("--seed", "seeds", type=int, multiple=True,
              help="Seed override; repeat for independent runs.")
@click.option("--n", type=int, help="Frame-count override.")
@click.option("--denoiser", "kind", default="perfect",
              type=click.Choice(["perfect", "drift"]), show_default=True)
@click.option("--drift-prob", default=0.05, show_default=True)
@click.option("--drift-scale", default=8.0, show_default=True)
@click.option("--jobs", default=1, show_default=True,
              help="Parallel workers across seeds.")
@click.option("--plot", is_flag=True, help="Also render the score-curve report.")
def generate_cmd(config_path, preset_name, out, mode, seeds, n, kind,
                 drift_prob, drift_scale, jobs, plot):
    """Run one generation per seed; writes latents, trace, and metrics."""
    base = _guarded(_load, config_path, preset_name)
    seeds = seeds or (base.seed,)
    runs = []
    for s in seeds:
        cfg = _guarded(with_overrides, base, mode=mode, seed=s, N=n)
        suffix = f"-s{s}" if len(seeds) > 1 else ""
        runs.append((cfg, kind, drift_prob, drift_scale, f"{out}{suffix}", plot))
    if jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, *r) for r in runs]
            for f in futures:
                done = _guarded(f.result)
                click.echo(f"wrote {done}.migl")
    else:
        for r in runs:
            done = _guarded(_run_one, *r)
            click.echo(f"wrote {done}.migl")


@main.command()
@click.argument("latents", type=click.Path(exists=True))
@click.option("--f-eval", default=4, show_default=True)
@click.option("--f-ref", default=8, show_default=True)
@click.option("--out", help="CSV output path (default: stdout).")
@click.option("--plot", is_flag=True, help="Render the curve next to the CSV (needs --out).")
def score(latents, f_eval, f_ref, out, plot):
    """Sliding consistency-score table for a latent file."""
    frames = _guarded(migl.read_latents, latents)
    if frames.shape[0] < f_eval + f_ref:
        click.echo(
            f"warning: {frames.shape[0]} frames < f_eval + f_ref; empty table",
            err=True,
        )
        rows = []
    else:
        rows = _guarded(score_curve, frames, f_eval, f_ref)
    if out:
        _guarded(_write_csv, out, ["position", "score"], rows)
        if plot:
            png = str(Path(out).with_suffix(".png"))
            _guarded(plot_score_curve, rows, png)
            click.echo(f"wrote {png}")
    else:
        if plot:
            _fail(EXIT_BAD_INPUT, "--plot requires --out")
        click.echo("position,score")
        for pos, s in rows:
            click.echo(f"{pos},{s}")


@main.command()
@click.argument("targets", required=False, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(), help="Config file for ladder/shape settings.")
@click.option("--preset", "preset_name", default="videocrafter2-like",
              type=click.Choice(sorted(PRESETS)), show_default=True)
@click.option("--level", "levels", type=int, multiple=True,
              help="Noise levels; default 0.2/0.5/0.8 of T.")
@click.option("--trials", default=20, show_default=True)
@click.option("--frames", default=64, show_default=True,
              help="Synthetic sequence length when no target file is given.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, help="CSV output path.")
@click.option("--plot", is_flag=True, help="Render the per-level distribution.")
def correlate(targets, config_path, preset_name, levels, trials, frames, seed, out, plot):
    """Noisy-vs-clean score-curve correlation, per level, over trials."""
    cfg = _guarded(_load, config_path, preset_name)
    sampler = _guarded(make_sampler, cfg)
    levels = list(levels) or [round(f * cfg.T) for f in (0.2, 0.5, 0.8)]
    fixed = _guarded(migl.read_latents, targets) if targets else None

    def run():
        rows = []
        for t in range(trials):
            seq = fixed if fixed is not None else make_target_walk(
                frames, cfg.l, cfg.d, seed=seed + t
            ).targets
            corr = noisy_score_correlation(
                seq, levels, sampler, seed=seed + t,
                f_eval=cfg.f_eval, f_ref=cfg.f_ref,
            )
            rows.extend((lv, t, corr[lv]) for lv in levels)
        return rows

    rows = _guarded(run)
    _guarded(_write_csv, out, ["level", "trial", "r"], rows)
    for lv in levels:
        med = float(np.median([r for level, _, r in rows if level == lv]))
        click.echo(f"level {lv}: median r = {med:.4f}")
    if plot:
        png = str(Path(out).with_suffix(".png"))
        _guarded(plot_correlation, rows, png)
        click.echo(f"wrote {png}")


if __name__ == "__main__":
    main()
