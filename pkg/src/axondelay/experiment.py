"""Experiment orchestration: config -> components -> training -> artifacts.

Everything here is deterministic per (config, seed): sample streams, delay
assignment and initialization all derive from the root seed with fixed role
strings, and every output file is stamped with the config hash and root
seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import spectral_radius
from .config import ExperimentConfig, config_hash
from .errors import ConvergenceError
from .network import NetworkParams
from .seeding import derive_seed
from .tasks import CueTaskSampler, FixedDatasetSampler, load_psmnist
from .topology import (
    DelaySchedule,
    assign_delays_by_fraction,
    assign_delays_by_radius,
    make_schedule,
    place_neurons,
)
from .training import (
    Sample,
    TrainConfig,
    TrainResult,
    evaluate,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)

METRICS_COLUMNS = (
    "epoch",
    "train_loss",
    "train_acc",
    "test_acc",
    "mean_spike_rate",
    "bf_loss",
)


def build_delays(cfg: ExperimentConfig) -> DelaySchedule:
    spec = cfg.delays
    n = cfg.network.n_hidden
    dt = cfg.task.dt if cfg.task_kind == "cue" else cfg.psmnist.dt
    if spec.mode == "zero":
        return make_schedule(np.zeros(n), dt)
    if spec.mode == "fraction":
        return assign_delays_by_fraction(
            n, spec.fractions, spec.values_ms, derive_seed(cfg.seed, "delays"), dt
        )
    positions = place_neurons(n, derive_seed(cfg.seed, "positions"))
    return assign_delays_by_radius(positions, spec.radius_fracs, spec.values_ms, dt)


def build_sampler(cfg: ExperimentConfig):
    """Return (sampler, n_in, n_out) for the configured task."""
    if cfg.task_kind == "cue":
        sampler = CueTaskSampler(cfg.task, derive_seed(cfg.seed, "task"))
        return sampler, cfg.task.n_channels, 2
    data = load_psmnist(
        cfg.psmnist.data_dir, derive_seed(cfg.seed, "psmnist-permutation")
    )
    subset = min(cfg.psmnist.subset, len(data))
    samples = [data.sample(i, cfg.psmnist.readout_steps) for i in range(subset)]
    sampler = FixedDatasetSampler(samples, derive_seed(cfg.seed, "psmnist-shuffle"))
    return sampler, 1, cfg.psmnist.n_classes


def build_params(cfg: ExperimentConfig, n_in: int, n_out: int) -> NetworkParams:
    net = cfg.network
    return init_params(
        n_in=n_in,
        n_hidden=net.n_hidden,
        n_out=n_out,
        seed=derive_seed(cfg.seed, "init"),
        tau_r=net.tau_r_init,
        tau_o=net.tau_o_init,
        u_th=net.u_th_init,
        w_in_gain=net.w_in_gain,
        recurrent=net.recurrent,
    )


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        samples_per_epoch=cfg.samples_per_epoch,
        batch_size=cfg.batch_size,
        loss=cfg.loss,
        optimizer=cfg.optimizer,
        tau_clamp=cfg.network.tau_clamp,
        probe_samples=cfg.probe_samples,
        early_stop_acc=cfg.early_stop_acc,
        frozen=() if cfg.network.recurrent else ("w_rec",),
        dt=cfg.task.dt if cfg.task_kind == "cue" else cfg.psmnist.dt,
        reset_mode=cfg.network.reset_mode,
    )


def write_metrics_csv(path, cfg: ExperimentConfig, history) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash(cfg)} root_seed={cfg.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in history:
            writer.writerow(
                [
                    row.epoch,
                    repr(row.train_loss),
                    repr(row.train_acc),
                    repr(row.test_acc),
                    repr(row.mean_spike_rate),
                    repr(row.bf_loss),
                ]
            )


def run_experiment(
    cfg: ExperimentConfig,
    out_dir,
    assert_invariants: bool = False,
    grad_dump: bool = False,
) -> dict:
    """Train per config, write metrics.csv / checkpoint.bin / report.json.

    Returns the report dict. Artifacts land in ``out_dir``; the final
    evaluation runs on ``cfg.eval_samples`` freshly generated samples for
    the cue task (for fixed datasets it reuses the training set).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sampler, n_in, n_out = build_sampler(cfg)
    delays = build_delays(cfg)
    params = build_params(cfg, n_in, n_out)
    tcfg = train_config(cfg)

    dump_rows = []

    def dump(step, norms):
        dump_rows.append({"step": step, **norms})

    result: TrainResult = train(
        params,
        delays,
        sampler,
        tcfg,
        assert_invariants=assert_invariants,
        grad_dump=dump if grad_dump else None,
        divergence_checkpoint=out_dir / "diverged.ckpt",
    )
    eval_samples = sampler("eval-final", cfg.eval_samples)
    accuracy = evaluate(result.params, delays, eval_samples, tcfg.lif_config())

    try:
        radius = spectral_radius(result.params.w_rec)
    except ConvergenceError as exc:
        radius = exc.estimate if exc.estimate is not None else float("nan")

    write_metrics_csv(out_dir / "metrics.csv", cfg, result.history)
    save_checkpoint(
        out_dir / "checkpoint.bin",
        result.params,
        result.optimizer,
        meta={"config_hash": config_hash(cfg), "root_seed": cfg.seed},
    )
    (out_dir / "delays.json").write_text(delays.to_json())
    if grad_dump and dump_rows:
        with open(out_dir / "grad_norms.csv", "w", newline="") as fh:
            fh.write(f"# config_hash={config_hash(cfg)} root_seed={cfg.seed}\n")
            writer = csv.DictWriter(fh, fieldnames=list(dump_rows[0].keys()))
            writer.writeheader()
            writer.writerows(dump_rows)
    report = {
        "name": cfg.name,
        "config_hash": config_hash(cfg),
        "root_seed": cfg.seed,
        "accuracy": accuracy,
        "tau_r_ms": result.params.tau_r,
        "tau_o_ms": result.params.tau_o,
        "u_th": result.params.u_th,
        "spectral_radius": float(radius),
        "epochs_run": len(result.history),
        "batches_checked": result.batches_checked,
        "final_train_loss": result.history[-1].train_loss if result.history else None,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report


def eval_checkpoint_on_cue_task(
    checkpoint_path,
    cfg: ExperimentConfig,
    n_samples: int,
    seed_role: str,
    n_cues: int | None = None,
    wait_ms: float | None = None,
) -> float:
    """Accuracy of a saved checkpoint on a cue-task variant, fresh samples."""
    params, _, _ = load_checkpoint(checkpoint_path)
    delays = build_delays(cfg)
    sampler = CueTaskSampler(
        cfg.task, derive_seed(cfg.seed, seed_role), n_cues=n_cues, wait_ms=wait_ms
    )
    samples = sampler("eval", n_samples)
    return evaluate(params, delays, samples, train_config(cfg).lif_config())


def wait_sweep(checkpoint_path, cfg: ExperimentConfig, waits_ms, n_samples: int):
    """Rows of (wait_ms, accuracy, n_samples) for a trained checkpoint."""
    rows = []
    for wait in waits_ms:
        acc = eval_checkpoint_on_cue_task(
            checkpoint_path, cfg, n_samples, f"eval-wait-{wait}", wait_ms=wait
        )
        rows.append({"wait_ms": float(wait), "accuracy": acc, "n_samples": n_samples})
    return rows


def ncue_sweep(checkpoint_path, cfg: ExperimentConfig, cue_counts, n_samples: int):
    """Rows of (n_cues, accuracy, baseline, n_samples); baseline = last-7 observer."""
    from .tasks import probabilistic_baseline_accuracy

    rows = []
    for n_cues in cue_counts:
        acc = eval_checkpoint_on_cue_task(
            checkpoint_path, cfg, n_samples, f"eval-ncues-{n_cues}", n_cues=n_cues
        )
        rows.append(
            {
                "n_cues": int(n_cues),
                "accuracy": acc,
                "baseline": probabilistic_baseline_accuracy(n_cues),
                "n_samples": n_samples,
            }
        )
    return rows


def apply_ablation(
    cfg: ExperimentConfig,
    no_delays: bool = False,
    no_bf: bool = False,
    no_recurrence: bool = False,
    long_tau: bool = False,
) -> ExperimentConfig:
    """Derive the ablated configuration for the comparison runs.

    ``no_delays`` zeroes the delay schedule (standard 1-step transmission),
    ``no_bf`` removes the branching-factor term, ``no_recurrence`` freezes a
    zero recurrent matrix, and ``long_tau`` starts tau_r at 2000 ms with the
    clamp widened to allow it (the feed-forward comparison mode).
    """
    if not (no_delays or no_bf or no_recurrence or long_tau):
        raise ValueError("nothing to ablate: pass at least one ablation flag")
    if no_delays and no_recurrence:
        raise ValueError(
            "contradictory flags: delays are irrelevant without recurrence"
        )
    out = cfg
    if no_delays:
        out = replace(out, delays=replace(out.delays, mode="zero"))
    if no_bf:
        out = replace(out, loss=replace(out.loss, beta=0.0))
    if no_recurrence:
        out = replace(out, network=replace(out.network, recurrent=False))
    if long_tau:
        out = replace(
            out,
            network=replace(
                out.network,
                tau_r_init=2000.0,
                tau_clamp=(out.network.tau_clamp[0], 2000.0),
            ),
        )
    return out
