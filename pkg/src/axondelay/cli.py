"""Command-line experiment runner.

Subcommands: train, eval, generate, ablate, memory-bound, analyze.
Exit codes: 0 success, 1 validation error, 2 runtime divergence,
3 I/O or ingestion error.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import experiment
from .analysis import spike_rate_spectrum, write_spectrum_csv
from .config import ConfigError, config_hash, read_config, write_config
from .errors import ConvergenceError, DivergenceError, IngestionError
from .network import read_run_file, write_raster_csv
from .neuron import memory_bound_table

# the spec'd exit code for validation problems is 1, not click's default 2
click.UsageError.exit_code = 1

EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (DivergenceError, ConvergenceError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DIVERGENCE)
        except (IngestionError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
def main():
    """Train and analyze delayed recurrent spiking networks."""


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (default: runs/<run name>).")
@click.option("--assert-invariants", is_flag=True,
              help="Check the zero-diagonal and tau-clamp invariants after every batch.")
@click.option("--grad-dump", is_flag=True,
              help="Also write per-parameter-group gradient norms per step to CSV.")
@_guarded
def train(config_path, out_dir, assert_invariants, grad_dump):
    """Train a network from CONFIG_PATH and write metrics, checkpoint, report."""
    cfg = read_config(config_path)
    out = Path(out_dir) if out_dir else Path("runs") / cfg.name
    report = experiment.run_experiment(
        cfg, out, assert_invariants=assert_invariants, grad_dump=grad_dump
    )
    write_config(out / "config.ini", cfg)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


def _write_rows(out, rows, fieldnames, cfg):
    header = f"# config_hash={config_hash(cfg)} root_seed={cfg.seed}\n"
    if out == "-":
        sys.stdout.write(header)
        writer = csv.DictWriter(sys.stdout, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(header)
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--wait-ms", "waits", multiple=True, type=float,
              help="Evaluate at these fixed wait times (repeatable).")
@click.option("--n-cues", "cue_counts", multiple=True, type=int,
              help="Evaluate at these cue counts (repeatable); adds the last-7 baseline column.")
@click.option("--samples", default=512, show_default=True)
@click.option("--out", default="-", show_default=True, help="CSV path or - for stdout.")
@_guarded
def eval_cmd(checkpoint, config_path, waits, cue_counts, samples, out):
    """Sweep task variants with a trained checkpoint and emit long-format CSV."""
    cfg = read_config(config_path)
    if waits and cue_counts:
        raise ValueError("pass either --wait-ms or --n-cues sweeps, not both")
    if cfg.task_kind != "cue":
        raise ValueError("eval sweeps apply to the cue task only")
    if waits:
        rows = experiment.wait_sweep(checkpoint, cfg, list(waits), samples)
        _write_rows(out, rows, ["wait_ms", "accuracy", "n_samples"], cfg)
    elif cue_counts:
        rows = experiment.ncue_sweep(checkpoint, cfg, list(cue_counts), samples)
        _write_rows(out, rows, ["n_cues", "accuracy", "baseline", "n_samples"], cfg)
    else:
        acc = experiment.eval_checkpoint_on_cue_task(
            checkpoint, cfg, samples, "eval-standard"
        )
        _write_rows(
            out,
            [{"variant": "standard", "accuracy": acc, "n_samples": samples}],
            ["variant", "accuracy", "n_samples"],
            cfg,
        )


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--count", default=128, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n-cues", type=int, default=None, help="Override the cue count.")
@click.option("--wait-ms", type=float, default=None, help="Fix the wait duration.")
@click.option("--raster", is_flag=True, help="Also export each episode as raster CSV.")
@_guarded
def generate(config_path, count, out_dir, n_cues, wait_ms, raster):
    """Write COUNT episodes plus a manifest for exact regeneration."""
    from .tasks import generate_dataset, read_episode_file, write_episode_raster_csv

    cfg = read_config(config_path)
    if cfg.task_kind != "cue":
        raise ValueError("generate applies to the cue task only")
    paths = generate_dataset(
        out_dir, cfg.task, count, cfg.seed, n_cues=n_cues, wait_ms=wait_ms
    )
    if raster:
        for path in paths:
            write_episode_raster_csv(
                path.with_suffix(".csv"), read_episode_file(path)
            )
    click.echo(f"wrote {len(paths)} episodes to {out_dir}")


@main.command()
@click.argument("config_path", type=click.Path())
@click.option("--no-delays", is_flag=True, help="Zero every transmission delay.")
@click.option("--no-bf", is_flag=True, help="Drop the branching-factor regularizer.")
@click.option("--no-recurrence", is_flag=True, help="Freeze a zero recurrent matrix.")
@click.option("--long-tau", is_flag=True,
              help="Start tau_r at 2000 ms and widen the clamp to allow it.")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--skip-baseline", is_flag=True,
              help="Train only the ablated network (no side-by-side baseline run).")
@_guarded
def ablate(config_path, no_delays, no_bf, no_recurrence, long_tau, out_dir, skip_baseline):
    """Train an ablated variant and report accuracy next to the baseline."""
    cfg = read_config(config_path)
    ablated_cfg = experiment.apply_ablation(
        cfg,
        no_delays=no_delays,
        no_bf=no_bf,
        no_recurrence=no_recurrence,
        long_tau=long_tau,
    )
    out = Path(out_dir) if out_dir else Path("runs") / f"{cfg.name}-ablation"
    ablated = experiment.run_experiment(ablated_cfg, out / "ablated")
    comparison = {
        "ablation": {
            "no_delays": no_delays,
            "no_bf": no_bf,
            "no_recurrence": no_recurrence,
            "long_tau": long_tau,
        },
        "ablated_accuracy": ablated["accuracy"],
    }
    if not skip_baseline:
        baseline = experiment.run_experiment(cfg, out / "baseline")
        comparison["baseline_accuracy"] = baseline["accuracy"]
    (out / "comparison.json").write_text(json.dumps(comparison, indent=2, sort_keys=True))
    click.echo(json.dumps(comparison, indent=2, sort_keys=True))


@main.command("memory-bound")
@click.option("--bits", required=True, help="Comma-separated bit widths, e.g. 4,8,16.")
@click.option("--tau", "taus", required=True, help="Comma-separated tau values in ms.")
@click.option("--dt", default=1.0, show_default=True)
@click.option("--out", default="-", show_default=True, help="CSV path or - for stdout.")
@_guarded
def memory_bound(bits, taus, dt, out):
    """Analytical vs empirical maximum sequence length per (bits, tau)."""
    bit_list = [int(v) for v in bits.split(",") if v.strip()]
    tau_list = [float(v) for v in taus.split(",") if v.strip()]
    if not bit_list or not tau_list:
        raise ValueError("--bits and --tau must each list at least one value")
    rows = memory_bound_table(bit_list, tau_list, dt)
    fieldnames = ["n_bits", "tau_ms", "analytical_ms", "empirical_ms"]
    target = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        writer = csv.DictWriter(target, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if target is not sys.stdout:
            target.close()


@main.command()
@click.argument("run_file", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--window", default="rect", show_default=True,
              type=click.Choice(["rect", "hann"]))
@_guarded
def analyze(run_file, out_dir, window):
    """Raster + spike-rate spectrum (CSV and PNG) from a saved run file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    trace = read_run_file(run_file)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_raster_csv(out / "raster.csv", trace.spikes)
    spectrum = spike_rate_spectrum(trace.spikes, trace.dt, window=window)
    write_spectrum_csv(out / "spectrum.csv", spectrum)

    ts, neurons = trace.spikes.nonzero()
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.scatter(ts * trace.dt, neurons, s=1.5, marker="|", color="black")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("neuron")
    fig.tight_layout()
    fig.savefig(out / "raster.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(spectrum.frequencies, spectrum.magnitudes, lw=0.8)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("|rate spectrum|")
    fig.tight_layout()
    fig.savefig(out / "spectrum.png", dpi=150)
    plt.close(fig)
    click.echo(f"wrote raster and spectrum artifacts to {out}")


if __name__ == "__main__":
    main()
