"""Forward simulation of the delayed recurrent spiking network.

Three layers: input weights drive a pool of LIF neurons whose recurrent
input is read through per-neuron transmission delays, and a non-spiking
leaky-integrator readout smooths the pool's spikes. The simulation records
everything the backward pass needs.

Delay semantics: a spike emitted at step t by neuron j reaches postsynaptic
membranes at step t + max(d_j, 1). Delays of one step or more arrive exactly
d_j steps later; a zero delay means the standard single-step transmission of
a clocked recurrent network (same-step delivery is not causal here), so a
schedule of all zeros reproduces the classic buffer-free simulation
bit-exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _binio
from .errors import DivergenceError
from .neuron import SOFT_SUBTRACT, LifConfig, decay_factor
from .topology import DelaySchedule
from .validation import check_finite, check_positive

RUN_MAGIC = b"AXRN"
RUN_VERSION = 1

PARAM_FIELDS = ("w_in", "w_rec", "w_out", "tau_r", "tau_o", "u_th")


@dataclass
class SpikeTrain:
    """Binary activity matrix, time-major (T, n_channels), with its timestep."""

    data: np.ndarray
    dt: float = 1.0


@dataclass
class NetworkParams:
    """All trainable state: three weight matrices and three shared scalars."""

    w_in: np.ndarray
    w_rec: np.ndarray
    w_out: np.ndarray
    tau_r: float
    tau_o: float
    u_th: float

    @property
    def n_in(self) -> int:
        return self.w_in.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w_rec.shape[0]

    @property
    def n_out(self) -> int:
        return self.w_out.shape[0]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            w_in=self.w_in.copy(),
            w_rec=self.w_rec.copy(),
            w_out=self.w_out.copy(),
            tau_r=self.tau_r,
            tau_o=self.tau_o,
            u_th=self.u_th,
        )

    def validate(self) -> None:
        check_finite("w_in", self.w_in)
        check_finite("w_rec", self.w_rec)
        check_finite("w_out", self.w_out)
        if self.w_rec.shape[0] != self.w_rec.shape[1]:
            raise ValueError("w_rec must be square")
        if self.w_in.shape[0] != self.n_hidden or self.w_out.shape[1] != self.n_hidden:
            raise ValueError("weight matrix shapes are inconsistent")
        if np.any(np.diag(self.w_rec) != 0.0):
            raise ValueError("w_rec must have a zero diagonal (no self-connections)")
        check_positive("tau_r", self.tau_r)
        check_positive("tau_o", self.tau_o)


class SpikeBuffer:
    """Ring buffer of recent spike vectors, capacity = max delay in steps + 1.

    ``write(t, spikes)`` stores step t's spikes; ``read(t, lags)`` returns,
    for each neuron j, its spike from step t - lags[j] (zero before the
    episode starts). Reads at step t happen before that step's write, so the
    smallest usable lag is 1.
    """

    def __init__(self, n: int, max_delay_steps: int):
        self.capacity = int(max_delay_steps) + 1
        self._buf = np.zeros((self.capacity, n))
        self._cols = np.arange(n)

    def write(self, t: int, spikes: np.ndarray) -> None:
        self._buf[t % self.capacity] = spikes

    def read(self, t: int, lags: np.ndarray) -> np.ndarray:
        src = t - lags
        out = self._buf[src % self.capacity, self._cols]
        if t < self.capacity:
            out = np.where(src >= 0, out, 0.0)
        return out


@dataclass
class ForwardTrace:
    """Per-timestep record of a forward run, consumed by the backward pass."""

    u: np.ndarray  # (T, n_hidden) membrane potentials
    spikes: np.ndarray  # (T, n_hidden) binary
    delayed: np.ndarray  # (T, n_hidden) delayed-spike view feeding w_rec
    inputs: np.ndarray  # (T, n_in)
    u_out: np.ndarray  # (T, n_out) readout membranes
    dt: float = 1.0
    reset_mode: str = SOFT_SUBTRACT
    rates: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.u.shape[0]


def effective_lags(delays: DelaySchedule) -> np.ndarray:
    """Transmission lag per neuron in steps: max(delay_steps, 1)."""
    return np.maximum(delays.delay_steps, 1)


def _first_bad_step(*arrays) -> int:
    bad = ~np.all([np.isfinite(a).all(axis=1) for a in arrays], axis=0)
    return int(np.argmax(bad))


def forward(
    params: NetworkParams,
    delays: DelaySchedule,
    inputs,
    cfg: LifConfig | None = None,
) -> ForwardTrace:
    """Simulate an episode and return the full trace.

    ``inputs`` is a SpikeTrain or a (T, n_in) array (binary spikes or analog
    currents). ``cfg`` supplies the timestep and reset mode; the membrane
    constants and threshold come from ``params``, which are the trained
    quantities.
    """
    if cfg is None:
        cfg = LifConfig()  # only dt and reset_mode are read below
    x = inputs.data if isinstance(inputs, SpikeTrain) else inputs
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_in:
        raise ValueError(
            f"inputs must be (T, {params.n_in}), got shape {x.shape}"
        )
    if len(delays) != params.n_hidden:
        raise ValueError(
            f"delay schedule covers {len(delays)} neurons, network has "
            f"{params.n_hidden}"
        )
    T = x.shape[0]
    n_hidden, n_out = params.n_hidden, params.n_out
    alpha_r = decay_factor(params.tau_r, cfg.dt)
    alpha_o = decay_factor(params.tau_o, cfg.dt)
    u_th = params.u_th
    soft = cfg.reset_mode == SOFT_SUBTRACT
    lags = effective_lags(delays)

    drive_in = x @ params.w_in.T  # (T, n_hidden), one GEMM for the whole episode
    U = np.empty((T, n_hidden))
    S = np.zeros((T, n_hidden))  # gathered before being written; must start clean
    D = np.empty((T, n_hidden))
    w_rec = params.w_rec

    # Per-step gather realizing the SpikeBuffer reads on the spike history:
    # D[t, j] = S[t - lags[j], j], zero before episode start. Only the first
    # max(lags) steps can reach before the episode, so the in-bounds mask is
    # applied there and skipped afterwards.
    cols = np.arange(n_hidden)
    base = cols - lags * n_hidden  # flat index of (t - lag_j, j) minus t*n_hidden
    masked_head = int(min(lags.max(initial=1), T))
    head_bounds = (np.arange(masked_head)[:, None] - lags[None, :] >= 0).astype(
        np.float64
    )
    s_flat = S.ravel()
    idx = np.empty(n_hidden, dtype=np.int64)

    rec = np.empty(n_hidden)
    reset = np.empty(n_hidden)
    fired = np.empty(n_hidden, dtype=bool)
    for t in range(T):
        d_t = D[t]
        np.add(base, t * n_hidden, out=idx)
        if t < masked_head:
            np.take(s_flat, idx, out=d_t, mode="wrap")
            d_t *= head_bounds[t]
        else:
            np.take(s_flat, idx, out=d_t)
        np.matmul(w_rec, d_t, out=rec)
        u_t = U[t]
        if t == 0:
            np.add(drive_in[0], rec, out=u_t)
        elif soft:
            np.multiply(U[t - 1], alpha_r, out=u_t)
            u_t += drive_in[t]
            u_t += rec
            np.multiply(S[t - 1], u_th, out=reset)
            u_t -= reset
        else:
            np.subtract(1.0, S[t - 1], out=reset)
            reset *= U[t - 1]
            np.multiply(reset, alpha_r, out=u_t)
            u_t += drive_in[t]
            u_t += rec
        np.greater_equal(u_t, u_th, out=fired)
        S[t] = fired

    proj = S @ params.w_out.T  # (T, n_out)
    U_out = np.empty((T, n_out))
    u_out = np.zeros(n_out)
    for t in range(T):
        u_out = alpha_o * u_out + proj[t]
        U_out[t] = u_out

    if not (np.isfinite(U).all() and np.isfinite(U_out).all()):
        t_bad = _first_bad_step(U, U_out)
        raise DivergenceError(
            f"non-finite membrane potential at timestep {t_bad}", timestep=t_bad
        )
    return ForwardTrace(
        u=U, spikes=S, delayed=D, inputs=x, u_out=U_out, dt=cfg.dt,
        reset_mode=cfg.reset_mode,
    )


def readout_decision(trace: ForwardTrace, recall_window: tuple[int, int]) -> int:
    """Class = argmax over output neurons of mean u_out inside the window.

    ``recall_window`` is (start, stop), half-open in steps. Ties break toward
    the lower index.
    """
    return int(np.argmax(readout_logits(trace.u_out, recall_window)))


def readout_logits(u_out: np.ndarray, recall_window: tuple[int, int]) -> np.ndarray:
    start, stop = int(recall_window[0]), int(recall_window[1])
    if not (0 <= start < stop <= u_out.shape[0]):
        raise ValueError(
            f"recall window [{start}, {stop}) is empty or outside the "
            f"{u_out.shape[0]}-step trace"
        )
    return u_out[start:stop].mean(axis=0)


def write_raster_csv(path, spikes: np.ndarray) -> None:
    """Export spike events as (t, neuron, spike) rows, one row per spike."""
    ts, neurons = np.nonzero(spikes)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "neuron", "spike"])
        for t, i in zip(ts, neurons):
            writer.writerow([int(t), int(i), 1])


def write_run_file(path, trace: ForwardTrace) -> None:
    """Compact binary dump of a run: header + membranes + bit-packed spikes."""
    T, n_hidden = trace.spikes.shape
    meta = {
        "T": T,
        "n_hidden": n_hidden,
        "n_out": trace.u_out.shape[1],
        "dt": trace.dt,
        "reset_mode": trace.reset_mode,
    }
    arrays = {
        "u": trace.u,
        "u_out": trace.u_out,
        "packed:spikes": _binio.pack_spikes(trace.spikes),
    }
    _binio.write_record(path, RUN_MAGIC, RUN_VERSION, meta, arrays)


def read_run_file(path) -> ForwardTrace:
    version, meta, arrays = _binio.read_record(path, RUN_MAGIC)
    shape = (meta["T"], meta["n_hidden"])
    spikes = _binio.unpack_spikes(arrays["packed:spikes"], shape)
    return ForwardTrace(
        u=arrays["u"],
        spikes=spikes,
        delayed=np.zeros(shape),
        inputs=np.zeros((meta["T"], 0)),
        u_out=arrays["u_out"],
        dt=meta["dt"],
        reset_mode=meta.get("reset_mode", SOFT_SUBTRACT),
    )
