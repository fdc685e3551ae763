"""Leaky integrate-and-fire membrane dynamics.

Discrete-time LIF update with a configurable reset rule, the wide clamped
surrogate derivative used during backpropagation, and the digital
memory-bound analysis relating membrane bit width, leak time constant and
the longest sequence a decaying potential can span.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .validation import check_positive, check_positive_int, check_vector

SOFT_SUBTRACT = "soft_subtract"
HARD_ZERO = "hard_zero"
RESET_MODES = (SOFT_SUBTRACT, HARD_ZERO)


@dataclass(frozen=True)
class LifConfig:
    """Shared LIF constants: leak time constant, threshold, timestep, reset rule.

    All times are in milliseconds. ``reset_mode`` selects what happens to the
    membrane on the step after a spike: ``soft_subtract`` removes ``u_th``,
    ``hard_zero`` restarts the decay from zero.
    """

    tau: float = 20.0
    u_th: float = 1.0
    dt: float = 1.0
    reset_mode: str = SOFT_SUBTRACT

    def __post_init__(self):
        check_positive("tau", self.tau)
        check_positive("u_th", self.u_th)
        check_positive("dt", self.dt)
        if self.reset_mode not in RESET_MODES:
            raise ValueError(
                f"reset_mode must be one of {RESET_MODES}, got {self.reset_mode!r}"
            )

    @property
    def alpha(self) -> float:
        return decay_factor(self.tau, self.dt)


@dataclass
class MembraneState:
    """Per-neuron membrane potentials and the previous step's spikes."""

    u: np.ndarray
    last_spike: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "MembraneState":
        return cls(u=np.zeros(n), last_spike=np.zeros(n))


def decay_factor(tau: float, dt: float) -> float:
    """Per-step membrane decay exp(-dt/tau), strictly inside (0, 1)."""
    tau = check_positive("tau", tau)
    dt = check_positive("dt", dt)
    return math.exp(-dt / tau)


def surrogate_derivative(u, u_th):
    """Wide surrogate for the spike derivative: clamp(u - u_th + 1, 0, 1).

    Equals 1 at threshold and anywhere above, decays linearly below, and
    reaches 0 only once the membrane is a full unit under threshold, so a
    gradient passes backward unless the neuron is strongly inhibited.
    Accepts scalars or arrays.
    """
    return np.clip(np.asarray(u, dtype=np.float64) - u_th + 1.0, 0.0, 1.0)


def lif_step(
    state: MembraneState, input_current, cfg: LifConfig
) -> tuple[MembraneState, np.ndarray]:
    """Advance the membrane by one timestep and emit spikes.

    Decay and integration happen first, then the threshold test; the reset
    uses the previous step's spikes. A membrane exactly at threshold fires.
    """
    x = check_vector("input_current", input_current, length=state.u.shape[0])
    alpha = cfg.alpha
    if cfg.reset_mode == SOFT_SUBTRACT:
        u = alpha * state.u + x - cfg.u_th * state.last_spike
    else:
        u = alpha * state.u * (1.0 - state.last_spike) + x
    spikes = (u >= cfg.u_th).astype(np.float64)
    return MembraneState(u=u, last_spike=spikes), spikes


def max_sequence_length(
    n_bits: int, tau: float, dt: float = 1.0, mode: str = "analytical"
) -> float:
    """Longest duration (ms) a decaying integer membrane can bridge.

    A membrane stored on ``n_bits`` starts at its largest value 2^n - 1 and
    decays by exp(-dt/tau) per step; the usable memory span ends when it
    reaches the smallest non-zero value 1.

    ``analytical`` returns the continuous solution tau * ln(2^n - 1).
    ``empirical`` simulates the decay with the integer cast applied every
    step (a flooring operation) and returns dt times the number of steps
    until the value is <= 1. The cast only loses value, so the empirical
    span never exceeds the analytical one.
    """
    n_bits = check_positive_int("n_bits", n_bits)
    tau = check_positive("tau", tau)
    dt = check_positive("dt", dt)
    if mode == "analytical":
        # tau * ln(2^n - 1), written to stay finite for large n
        return tau * (n_bits * math.log(2.0) + math.log1p(-(2.0 ** -n_bits)))
    if mode == "empirical":
        if n_bits > 52:
            raise ValueError("empirical mode supports n_bits <= 52 (float mantissa)")
        alpha = math.exp(-dt / tau)
        u = (1 << n_bits) - 1
        steps = 0
        while u > 1:
            u = math.floor(alpha * u)
            steps += 1
        return steps * dt
    raise ValueError(f"mode must be 'analytical' or 'empirical', got {mode!r}")


def memory_bound_table(bits, taus, dt: float = 1.0) -> list[dict]:
    """Analytical and empirical memory spans for each (n_bits, tau) pair."""
    rows = []
    for n_bits in bits:
        for tau in taus:
            rows.append(
                {
                    "n_bits": int(n_bits),
                    "tau_ms": float(tau),
                    "analytical_ms": max_sequence_length(n_bits, tau, dt, "analytical"),
                    "empirical_ms": max_sequence_length(n_bits, tau, dt, "empirical"),
                }
            )
    return rows


def write_memory_bound_csv(path, bits, taus, dt: float = 1.0) -> None:
    rows = memory_bound_table(bits, taus, dt)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["n_bits", "tau_ms", "analytical_ms", "empirical_ms"]
        )
        writer.writeheader()
        writer.writerows(rows)
