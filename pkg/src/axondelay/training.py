"""Losses, activity regularization, MADGRAD optimization, and the epoch loop.

The training objective is a cross-entropy term on the recall-window readout
plus a branching-factor regularizer that penalizes change in the pool's
total spike count between consecutive steps, pushing the network toward the
critical regime where each transmitted spike produces about one spike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _binio
from .bptt import Gradients, backward, clip_gradient_norm
from .errors import DivergenceError
from .network import (
    NetworkParams,
    PARAM_FIELDS,
    forward,
    readout_logits,
)
from .neuron import LifConfig
from .topology import DelaySchedule
from .validation import check_binary_spikes, check_positive_int

CHECKPOINT_MAGIC = b"AXCK"
CHECKPOINT_VERSION = 1

DEFAULT_TAU_CLAMP = (0.1, 50.0)


@dataclass(frozen=True)
class LossConfig:
    """Loss weights: branching-factor strength and the gradient clip norm.

    ``bf_time_mean`` divides the branching-factor term by the episode length
    before weighting, so beta prices the average squared count change per
    step instead of the episode total (useful when episode lengths vary and
    the summed term would dwarf the classification loss).
    """

    beta: float = 0.001
    clip_max_norm: float = 0.01
    bf_per_neuron: bool = False
    bf_time_mean: bool = False

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.clip_max_norm <= 0:
            raise ValueError("clip_max_norm must be positive")


def branching_factor_loss(spikes, per_neuron: bool = False) -> float:
    """Sum over time of the squared change in total spike count.

    The count before the episode starts is defined as zero, so onset
    activity is penalized like any other change and an all-silent train
    scores zero. ``per_neuron`` switches to summing squared per-neuron
    changes instead of squaring the pooled change.
    """
    spikes = check_binary_spikes("spikes", spikes)
    return _bf_loss_unchecked(spikes, per_neuron)


def _bf_loss_unchecked(spikes: np.ndarray, per_neuron: bool) -> float:
    if per_neuron:
        d = np.diff(spikes, axis=0, prepend=0.0)
    else:
        n_total = spikes.sum(axis=1)
        d = np.diff(n_total, prepend=0.0)
    return float(np.sum(d * d))


def branching_factor_grad(
    spikes: np.ndarray, per_neuron: bool = False
) -> tuple[float, np.ndarray]:
    """Return (loss, d loss / d spikes); spikes are trusted to be binary."""
    if per_neuron:
        d = np.diff(spikes, axis=0, prepend=0.0)
        loss = float(np.sum(d * d))
        grad = 2.0 * (d - np.vstack([d[1:], np.zeros((1, spikes.shape[1]))]))
    else:
        n_total = spikes.sum(axis=1)
        d = np.diff(n_total, prepend=0.0)
        loss = float(np.sum(d * d))
        # each spike contributes to the change at its own step and the next
        per_step = 2.0 * (d - np.append(d[1:], 0.0))
        grad = np.broadcast_to(per_step[:, None], spikes.shape).copy()
    return loss, grad


def total_loss(net_loss: float, bf_loss: float, cfg: LossConfig) -> float:
    return net_loss + cfg.beta * bf_loss


def cross_entropy(logits, label: int) -> float:
    return cross_entropy_grad(logits, label)[0]


def cross_entropy_grad(logits, label: int) -> tuple[float, np.ndarray]:
    """Stabilized -log softmax(logits)[label] and its gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    if not 0 <= int(label) < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    log_z = math.log(np.sum(np.exp(shifted)))
    loss = log_z - float(shifted[label])
    grad = np.exp(shifted - log_z)
    grad[label] -= 1.0
    return loss, grad


def uniform_fanin_init(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """i.i.d. uniform in (-sqrt(6)/N, sqrt(6)/N) with N the fan-in."""
    bound = math.sqrt(6.0) / shape[1]
    return rng.uniform(-bound, bound, size=shape)


def kaiming_uniform_recurrent_init(n: int, seed: int) -> np.ndarray:
    """Recurrent matrix init: uniform within +-sqrt(6)/n, zero diagonal."""
    n = check_positive_int("n", n)
    rng = np.random.default_rng(seed)
    w = uniform_fanin_init(rng, (n, n))
    np.fill_diagonal(w, 0.0)
    return w


def init_params(
    n_in: int,
    n_hidden: int,
    n_out: int,
    seed: int,
    tau_r: float = 20.0,
    tau_o: float = 5.0,
    u_th: float = 1.0,
    w_in_gain: float = 1.0,
    recurrent: bool = True,
) -> NetworkParams:
    """Fresh parameters; all three matrices use the same uniform fan-in scheme.

    ``w_in_gain`` scales the input matrix only (useful when the input drive
    must clear the threshold early in training). ``recurrent=False`` zeroes
    the recurrent matrix for feed-forward ablations.
    """
    rng = np.random.default_rng(seed)
    w_in = w_in_gain * uniform_fanin_init(rng, (n_hidden, n_in))
    w_rec = uniform_fanin_init(rng, (n_hidden, n_hidden))
    np.fill_diagonal(w_rec, 0.0)
    if not recurrent:
        w_rec = np.zeros_like(w_rec)
    w_out = uniform_fanin_init(rng, (n_out, n_hidden))
    return NetworkParams(
        w_in=w_in, w_rec=w_rec, w_out=w_out, tau_r=tau_r, tau_o=tau_o, u_th=u_th
    )


@dataclass(frozen=True)
class MadgradConfig:
    lr: float = 0.01
    momentum: float = 0.9  # weight on the dual-averaging iterate z
    eps: float = 1e-6

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.momentum <= 1.0:
            raise ValueError("momentum must be in (0, 1]")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")


@dataclass
class OptimizerState:
    """Dual-averaging accumulators per parameter, anchored at the initial point."""

    config: MadgradConfig
    k: int
    s: dict
    nu: dict
    x0: dict


def _param_arrays(params: NetworkParams) -> dict:
    return {name: np.asarray(getattr(params, name), dtype=np.float64)
            for name in PARAM_FIELDS}


def madgrad_init(params: NetworkParams, config: MadgradConfig) -> OptimizerState:
    x = _param_arrays(params)
    return OptimizerState(
        config=config,
        k=0,
        s={name: np.zeros_like(v) for name, v in x.items()},
        nu={name: np.zeros_like(v) for name, v in x.items()},
        x0={name: v.copy() for name, v in x.items()},
    )


def madgrad_step(
    state: OptimizerState, params: NetworkParams, grads: Gradients
) -> NetworkParams:
    """One dual-averaged step:

        lam = lr * sqrt(k + 1)
        s  += lam * g          nu += lam * g*g
        z   = x0 - s / (cbrt(nu) + eps)
        x   = (1 - c) * x + c * z

    Mutates ``state`` and ``params`` in place and returns ``params``.
    """
    cfg = state.config
    lam = cfg.lr * math.sqrt(state.k + 1)
    c = cfg.momentum
    for name in PARAM_FIELDS:
        g = np.asarray(getattr(grads, name), dtype=np.float64)
        state.s[name] += lam * g
        state.nu[name] += lam * g * g
        z = state.x0[name] - state.s[name] / (np.cbrt(state.nu[name]) + cfg.eps)
        x = np.asarray(getattr(params, name), dtype=np.float64)
        # (1-c)*x + c*z, written so z == x is an exact fixed point
        new = x + c * (z - x)
        if new.ndim == 0:
            setattr(params, name, float(new))
        else:
            getattr(params, name)[...] = new
    state.k += 1
    return params


def apply_constraints(
    params: NetworkParams, clamp: tuple[float, float] = DEFAULT_TAU_CLAMP
) -> NetworkParams:
    """Clamp both time constants into ``clamp`` (ms) and re-zero the w_rec diagonal."""
    lo, hi = clamp
    params.tau_r = min(max(params.tau_r, lo), hi)
    params.tau_o = min(max(params.tau_o, lo), hi)
    np.fill_diagonal(params.w_rec, 0.0)
    return params


@dataclass
class Sample:
    """One training episode: inputs, target class and where to read the answer."""

    inputs: np.ndarray  # (T, n_in)
    label: int
    recall_window: tuple[int, int]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    samples_per_epoch: int = 256
    batch_size: int = 64
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: MadgradConfig = field(default_factory=MadgradConfig)
    tau_clamp: tuple[float, float] = DEFAULT_TAU_CLAMP
    probe_samples: int = 128  # per-epoch fresh-sample evaluation size
    early_stop_acc: float | None = None
    frozen: tuple[str, ...] = ()  # parameter fields excluded from updates
    dt: float = 1.0
    reset_mode: str = "soft_subtract"

    def lif_config(self) -> LifConfig:
        return LifConfig(dt=self.dt, reset_mode=self.reset_mode)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    mean_spike_rate: float
    bf_loss: float


@dataclass
class TrainResult:
    params: NetworkParams
    optimizer: OptimizerState
    history: list[EpochStats]
    batches_checked: int  # invariant assertions performed (0 if not requested)


def _sample_gradients(
    params: NetworkParams,
    delays: DelaySchedule,
    sample: Sample,
    loss_cfg: LossConfig,
    lif_cfg: LifConfig,
):
    trace = forward(params, delays, sample.inputs, lif_cfg)
    logits = readout_logits(trace.u_out, sample.recall_window)
    ce, d_logits = cross_entropy_grad(logits, sample.label)
    d_uout = np.zeros_like(trace.u_out)
    start, stop = sample.recall_window
    d_uout[start:stop] = d_logits / (stop - start)
    if loss_cfg.beta != 0.0:
        bf, d_bf = branching_factor_grad(trace.spikes, loss_cfg.bf_per_neuron)
        scale = loss_cfg.beta / (trace.n_steps if loss_cfg.bf_time_mean else 1.0)
        d_spikes = scale * d_bf
    else:
        bf = _bf_loss_unchecked(trace.spikes, loss_cfg.bf_per_neuron)
        d_spikes = None
    grads = backward(trace, params, delays, d_uout, d_spikes)
    predicted = int(np.argmax(logits))
    bf_weighted = bf / trace.n_steps if loss_cfg.bf_time_mean else bf
    return grads, ce, bf, bf_weighted, predicted, float(trace.spikes.sum()), trace.n_steps


def evaluate(
    params: NetworkParams,
    delays: DelaySchedule,
    samples: list[Sample],
    lif_cfg: LifConfig | None = None,
) -> float:
    """Fraction of samples whose recall-window decision matches the label."""
    lif_cfg = lif_cfg or LifConfig()
    correct = 0
    for sample in samples:
        trace = forward(params, delays, sample.inputs, lif_cfg)
        logits = readout_logits(trace.u_out, sample.recall_window)
        correct += int(np.argmax(logits)) == sample.label
    return correct / len(samples)


def _check_invariants(params: NetworkParams, clamp: tuple[float, float]) -> None:
    if np.any(np.diag(params.w_rec) != 0.0):
        raise AssertionError("invariant violated: w_rec diagonal must stay zero")
    lo, hi = clamp
    if not (lo <= params.tau_r <= hi and lo <= params.tau_o <= hi):
        raise AssertionError(
            f"invariant violated: tau_r={params.tau_r}, tau_o={params.tau_o} "
            f"outside clamp [{lo}, {hi}]"
        )


def train(
    params: NetworkParams,
    delays: DelaySchedule,
    sampler,
    cfg: TrainConfig,
    assert_invariants: bool = False,
    grad_dump=None,
    divergence_checkpoint=None,
) -> TrainResult:
    """Run the epoch loop, mutating ``params`` in place.

    ``sampler(role, count)`` must return ``count`` Sample objects,
    deterministically for a given role string. Gradients are averaged over
    each batch in sample order, clipped, then applied; the constraint pass
    runs after every optimizer step. A NaN loss aborts with a
    DivergenceError after checkpointing the last finite state to
    ``divergence_checkpoint`` (if given).

    ``grad_dump``: optional callable(step, norms_dict) fed the clipped
    per-group gradient norms after every batch.
    """
    opt = madgrad_init(params, cfg.optimizer)
    history: list[EpochStats] = []
    batches_checked = 0
    step = 0
    stop = False
    for epoch in range(cfg.epochs):
        samples = sampler(f"train-epoch{epoch:04d}", cfg.samples_per_epoch)
        losses, bf_losses = [], []
        correct = 0
        spike_count = 0.0
        step_count = 0
        for lo in range(0, len(samples), cfg.batch_size):
            batch = samples[lo : lo + cfg.batch_size]
            last_good = params.copy()
            acc = Gradients.zeros_like(params)
            batch_loss = 0.0
            try:
                for sample in batch:
                    g, ce, bf, bf_weighted, pred, n_spk, n_steps = _sample_gradients(
                        params, delays, sample, cfg.loss, cfg.lif_config()
                    )
                    acc.iadd(g)
                    loss = total_loss(ce, bf_weighted, cfg.loss)
                    batch_loss += loss
                    losses.append(loss)
                    bf_losses.append(bf)
                    correct += pred == sample.label
                    spike_count += n_spk
                    step_count += n_steps
                if not math.isfinite(batch_loss):
                    raise DivergenceError("non-finite training loss")
            except DivergenceError as exc:
                if divergence_checkpoint is not None:
                    save_checkpoint(
                        divergence_checkpoint, last_good, opt,
                        meta={"aborted_epoch": epoch, "reason": str(exc)},
                    )
                raise
            mean = acc.scaled(1.0 / len(batch))
            for name in cfg.frozen:
                g = getattr(mean, name)
                if isinstance(g, np.ndarray):
                    g[...] = 0.0
                else:
                    setattr(mean, name, 0.0)
            clipped = clip_gradient_norm(mean, cfg.loss.clip_max_norm)
            madgrad_step(opt, params, clipped)
            apply_constraints(params, cfg.tau_clamp)
            if assert_invariants:
                _check_invariants(params, cfg.tau_clamp)
                batches_checked += 1
            if grad_dump is not None:
                grad_dump(step, clipped.group_norms())
            step += 1
        n_hidden = params.n_hidden
        rate_hz = spike_count / max(step_count, 1) / n_hidden / (cfg.dt / 1000.0)
        if cfg.probe_samples > 0:
            probe = sampler(f"probe-epoch{epoch:04d}", cfg.probe_samples)
            test_acc = evaluate(params, delays, probe, cfg.lif_config())
        else:
            test_acc = float("nan")
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(losses)) if losses else float("nan"),
                train_acc=correct / max(len(samples), 1),
                test_acc=test_acc,
                mean_spike_rate=rate_hz,
                bf_loss=float(np.mean(bf_losses)) if bf_losses else float("nan"),
            )
        )
        if cfg.early_stop_acc is not None and test_acc >= cfg.early_stop_acc:
            stop = True
        if stop:
            break
    return TrainResult(
        params=params, optimizer=opt, history=history, batches_checked=batches_checked
    )


def save_checkpoint(
    path, params: NetworkParams, optimizer: OptimizerState | None = None, meta=None
) -> None:
    """Serialize parameters (and optionally optimizer state) with a version header."""
    meta = dict(meta or {})
    meta.update(
        {
            "tau_r": params.tau_r,
            "tau_o": params.tau_o,
            "u_th": params.u_th,
            "has_optimizer": optimizer is not None,
        }
    )
    arrays = {
        "w_in": params.w_in,
        "w_rec": params.w_rec,
        "w_out": params.w_out,
    }
    if optimizer is not None:
        meta["opt_k"] = optimizer.k
        meta["opt_lr"] = optimizer.config.lr
        meta["opt_momentum"] = optimizer.config.momentum
        meta["opt_eps"] = optimizer.config.eps
        for name in PARAM_FIELDS:
            arrays[f"opt_s:{name}"] = np.asarray(optimizer.s[name])
            arrays[f"opt_nu:{name}"] = np.asarray(optimizer.nu[name])
            arrays[f"opt_x0:{name}"] = np.asarray(optimizer.x0[name])
    _binio.write_record(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, meta, arrays)


def load_checkpoint(path) -> tuple[NetworkParams, OptimizerState | None, dict]:
    version, meta, arrays = _binio.read_record(path, CHECKPOINT_MAGIC)
    params = NetworkParams(
        w_in=arrays["w_in"],
        w_rec=arrays["w_rec"],
        w_out=arrays["w_out"],
        tau_r=float(meta["tau_r"]),
        tau_o=float(meta["tau_o"]),
        u_th=float(meta["u_th"]),
    )
    optimizer = None
    if meta.get("has_optimizer"):
        optimizer = OptimizerState(
            config=MadgradConfig(
                lr=meta["opt_lr"], momentum=meta["opt_momentum"], eps=meta["opt_eps"]
            ),
            k=int(meta["opt_k"]),
            s={n: arrays[f"opt_s:{n}"] for n in PARAM_FIELDS},
            nu={n: arrays[f"opt_nu:{n}"] for n in PARAM_FIELDS},
            x0={n: arrays[f"opt_x0:{n}"] for n in PARAM_FIELDS},
        )
    return params, optimizer, meta
