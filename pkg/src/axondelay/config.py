"""Experiment configuration: dataclasses, the INI file format, and hashing.

The config file is a versioned, human-readable key/value format (configparser
INI). Every random stream in a run derives from the single root seed in
[run] via hash(root_seed, role), so results are reproducible from the file
alone; the config hash stamped into output files is computed over the
canonical key/value content, not the file bytes.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .tasks import CueTaskConfig
from .training import LossConfig, MadgradConfig

FORMAT_VERSION = 1


@dataclass(frozen=True)
class PsmnistTaskSpec:
    """Permuted sequential MNIST ingestion: IDX directory and subset size."""

    data_dir: str = "data/mnist"
    subset: int = 1000
    readout_steps: int = 56
    n_classes: int = 10
    dt: float = 1.0


@dataclass(frozen=True)
class NetworkSpec:
    n_hidden: int = 125
    tau_r_init: float = 20.0
    tau_o_init: float = 5.0
    u_th_init: float = 1.0
    w_in_gain: float = 1.0
    recurrent: bool = True
    reset_mode: str = "soft_subtract"
    tau_clamp: tuple[float, float] = (0.1, 50.0)

    def __post_init__(self):
        lo, hi = self.tau_clamp
        if not (0 < lo <= hi):
            raise ValueError(f"tau_clamp must satisfy 0 < lo <= hi, got {self.tau_clamp}")


@dataclass(frozen=True)
class DelaySpec:
    """How per-neuron delays are assigned: exact fractions, 3-d geometry, or none."""

    mode: str = "fraction"  # fraction | radius | zero
    values_ms: tuple = (0.0, 80.0, 100.0)
    fractions: tuple = (0.176, 0.424, 0.400)
    radius_fracs: tuple = (0.2, 0.3)

    def __post_init__(self):
        if self.mode not in ("fraction", "radius", "zero"):
            raise ValueError(f"delay mode must be fraction|radius|zero, got {self.mode!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    seed: int = 0
    epochs: int = 40
    samples_per_epoch: int = 256
    batch_size: int = 32
    eval_samples: int = 512
    probe_samples: int = 128
    early_stop_acc: float | None = None
    task_kind: str = "cue"
    task: CueTaskConfig = field(default_factory=CueTaskConfig)
    psmnist: PsmnistTaskSpec = field(default_factory=PsmnistTaskSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    delays: DelaySpec = field(default_factory=DelaySpec)
    optimizer: MadgradConfig = field(default_factory=MadgradConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.task_kind not in ("cue", "psmnist"):
            raise ValueError(f"task kind must be cue|psmnist, got {self.task_kind!r}")


def as_flat_dict(cfg: ExperimentConfig) -> dict:
    """Canonical section.key -> string mapping (also the hash input)."""
    t = cfg.task
    p = cfg.psmnist
    n = cfg.network
    d = cfg.delays
    flat = {
        "run.format_version": FORMAT_VERSION,
        "run.name": cfg.name,
        "run.seed": cfg.seed,
        "run.epochs": cfg.epochs,
        "run.samples_per_epoch": cfg.samples_per_epoch,
        "run.batch_size": cfg.batch_size,
        "run.eval_samples": cfg.eval_samples,
        "run.probe_samples": cfg.probe_samples,
        "run.early_stop_acc": "" if cfg.early_stop_acc is None else cfg.early_stop_acc,
        "task.kind": cfg.task_kind,
        "task.n_cues": t.n_cues,
        "task.cue_ms": t.cue_ms,
        "task.pause_ms": t.pause_ms,
        "task.wait_min_ms": t.wait_range_ms[0],
        "task.wait_max_ms": t.wait_range_ms[1],
        "task.recall_ms": t.recall_ms,
        "task.channels_per_group": t.channels_per_group,
        "task.cue_hz": t.cue_hz,
        "task.noise_hz": t.noise_hz,
        "task.recall_hz": t.recall_hz,
        "task.dt": t.dt,
        "task.data_dir": p.data_dir,
        "task.subset": p.subset,
        "task.readout_steps": p.readout_steps,
        "task.n_classes": p.n_classes,
        "network.n_hidden": n.n_hidden,
        "network.tau_r_init": n.tau_r_init,
        "network.tau_o_init": n.tau_o_init,
        "network.u_th_init": n.u_th_init,
        "network.w_in_gain": n.w_in_gain,
        "network.recurrent": n.recurrent,
        "network.reset_mode": n.reset_mode,
        "network.tau_clamp_lo": n.tau_clamp[0],
        "network.tau_clamp_hi": n.tau_clamp[1],
        "delays.mode": d.mode,
        "delays.values_ms": ",".join(repr(float(v)) for v in d.values_ms),
        "delays.fractions": ",".join(repr(float(v)) for v in d.fractions),
        "delays.radius_fracs": ",".join(repr(float(v)) for v in d.radius_fracs),
        "optimizer.lr": cfg.optimizer.lr,
        "optimizer.momentum": cfg.optimizer.momentum,
        "optimizer.eps": cfg.optimizer.eps,
        "loss.beta": cfg.loss.beta,
        "loss.clip_max_norm": cfg.loss.clip_max_norm,
        "loss.bf_per_neuron": cfg.loss.bf_per_neuron,
        "loss.bf_time_mean": cfg.loss.bf_time_mean,
    }
    return {k: str(v) for k, v in flat.items()}


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(as_flat_dict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]


def write_config(path, cfg: ExperimentConfig) -> None:
    parser = configparser.ConfigParser()
    for key, value in as_flat_dict(cfg).items():
        section, option = key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value)
    with open(path, "w") as fh:
        parser.write(fh)


class ConfigError(ValueError):
    """Config file failed validation; message names the offending section.key."""


class _SectionReader:
    def __init__(self, parser: configparser.ConfigParser, section: str):
        self.parser = parser
        self.section = section

    def _fetch(self, key, default, conv, required=False):
        where = f"{self.section}.{key}"
        if not self.parser.has_option(self.section, key):
            if required:
                raise ConfigError(f"{where}: missing required option")
            return default
        raw = self.parser.get(self.section, key).strip()
        if raw == "":
            return default
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: cannot parse {raw!r} ({exc})") from exc

    def str(self, key, default=None, required=False):
        return self._fetch(key, default, str, required)

    def int(self, key, default=None, required=False):
        return self._fetch(key, default, int, required)

    def float(self, key, default=None, required=False):
        return self._fetch(key, default, float, required)

    def bool(self, key, default=None):
        def conv(raw):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")

        return self._fetch(key, default, conv)

    def floats(self, key, default=None):
        return self._fetch(
            key, default, lambda raw: tuple(float(v) for v in raw.split(","))
        )


def read_config(path) -> ExperimentConfig:
    """Parse and validate an INI config; raises ConfigError naming section.key."""
    path = Path(path)
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    run = _SectionReader(parser, "run")
    version = run.int("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ConfigError(
            f"run.format_version: unsupported version {version} "
            f"(this build reads {FORMAT_VERSION})"
        )
    task = _SectionReader(parser, "task")
    net = _SectionReader(parser, "network")
    dl = _SectionReader(parser, "delays")
    opt = _SectionReader(parser, "optimizer")
    loss = _SectionReader(parser, "loss")

    def build(section, key, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from exc

    kind = task.str("kind", "cue")
    cue_defaults = CueTaskConfig()
    task_cfg = build(
        "task",
        "*",
        lambda: CueTaskConfig(
            n_cues=task.int("n_cues", cue_defaults.n_cues),
            cue_ms=task.float("cue_ms", cue_defaults.cue_ms),
            pause_ms=task.float("pause_ms", cue_defaults.pause_ms),
            wait_range_ms=(
                task.float("wait_min_ms", cue_defaults.wait_range_ms[0]),
                task.float("wait_max_ms", cue_defaults.wait_range_ms[1]),
            ),
            recall_ms=task.float("recall_ms", cue_defaults.recall_ms),
            channels_per_group=task.int(
                "channels_per_group", cue_defaults.channels_per_group
            ),
            cue_hz=task.float("cue_hz", cue_defaults.cue_hz),
            noise_hz=task.float("noise_hz", cue_defaults.noise_hz),
            recall_hz=task.float("recall_hz", cue_defaults.recall_hz),
            dt=task.float("dt", cue_defaults.dt),
        ),
    )
    ps_defaults = PsmnistTaskSpec()
    psmnist = build(
        "task",
        "*",
        lambda: PsmnistTaskSpec(
            data_dir=task.str("data_dir", ps_defaults.data_dir),
            subset=task.int("subset", ps_defaults.subset),
            readout_steps=task.int("readout_steps", ps_defaults.readout_steps),
            n_classes=task.int("n_classes", ps_defaults.n_classes),
            dt=task.float("dt", ps_defaults.dt),
        ),
    )
    net_defaults = NetworkSpec()
    network = build(
        "network",
        "tau_clamp",
        lambda: NetworkSpec(
            n_hidden=net.int("n_hidden", net_defaults.n_hidden),
            tau_r_init=net.float("tau_r_init", net_defaults.tau_r_init),
            tau_o_init=net.float("tau_o_init", net_defaults.tau_o_init),
            u_th_init=net.float("u_th_init", net_defaults.u_th_init),
            w_in_gain=net.float("w_in_gain", net_defaults.w_in_gain),
            recurrent=net.bool("recurrent", net_defaults.recurrent),
            reset_mode=net.str("reset_mode", net_defaults.reset_mode),
            tau_clamp=(
                net.float("tau_clamp_lo", net_defaults.tau_clamp[0]),
                net.float("tau_clamp_hi", net_defaults.tau_clamp[1]),
            ),
        ),
    )
    delay_defaults = DelaySpec()
    delays = build(
        "delays",
        "mode",
        lambda: DelaySpec(
            mode=dl.str("mode", delay_defaults.mode),
            values_ms=dl.floats("values_ms", delay_defaults.values_ms),
            fractions=dl.floats("fractions", delay_defaults.fractions),
            radius_fracs=dl.floats("radius_fracs", delay_defaults.radius_fracs),
        ),
    )
    opt_defaults = MadgradConfig()
    optimizer = build(
        "optimizer",
        "*",
        lambda: MadgradConfig(
            lr=opt.float("lr", opt_defaults.lr),
            momentum=opt.float("momentum", opt_defaults.momentum),
            eps=opt.float("eps", opt_defaults.eps),
        ),
    )
    loss_defaults = LossConfig()
    loss_cfg = build(
        "loss",
        "*",
        lambda: LossConfig(
            beta=loss.float("beta", loss_defaults.beta),
            clip_max_norm=loss.float("clip_max_norm", loss_defaults.clip_max_norm),
            bf_per_neuron=loss.bool("bf_per_neuron", loss_defaults.bf_per_neuron),
            bf_time_mean=loss.bool("bf_time_mean", loss_defaults.bf_time_mean),
        ),
    )
    return build(
        "run",
        "*",
        lambda: ExperimentConfig(
            name=run.str("name", "run"),
            seed=run.int("seed", 0),
            epochs=run.int("epochs", 40),
            samples_per_epoch=run.int("samples_per_epoch", 256),
            batch_size=run.int("batch_size", 32),
            eval_samples=run.int("eval_samples", 512),
            probe_samples=run.int("probe_samples", 128),
            early_stop_acc=run.float("early_stop_acc", None),
            task_kind=kind,
            task=task_cfg,
            psmnist=psmnist,
            network=network,
            delays=delays,
            optimizer=optimizer,
            loss=loss_cfg,
        ),
    )
