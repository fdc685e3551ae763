"""Spatial layout of the recurrent pool and per-neuron transmission delays.

Neurons sit on a noisy cubic lattice; each neuron's distance from the cloud
centroid buckets it into a delay band. A second assignment mode skips the
geometry and reproduces exact population fractions per band, which is what
the experiment configurations use.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .validation import check_positive, check_positive_int


@dataclass(frozen=True)
class NeuronPositions:
    """n lattice positions with in-cell noise; unused lattice sites stay empty."""

    coords: np.ndarray  # (n, 3)
    lattice_side: int


@dataclass(frozen=True)
class DelaySchedule:
    """One transmission delay per neuron, stored both in ms and in timesteps."""

    delay_ms: np.ndarray
    delay_steps: np.ndarray
    dt: float

    def __post_init__(self):
        if np.any(self.delay_steps < 0):
            raise ValueError("delay_steps must be non-negative")

    def __len__(self) -> int:
        return self.delay_steps.shape[0]

    @property
    def max_steps(self) -> int:
        return int(self.delay_steps.max(initial=0))

    def to_json(self) -> str:
        return json.dumps(
            {
                "dt_ms": self.dt,
                "delays_ms": [float(v) for v in self.delay_ms],
                "delay_steps": [int(v) for v in self.delay_steps],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DelaySchedule":
        obj = json.loads(text)
        return cls(
            delay_ms=np.asarray(obj["delays_ms"], dtype=np.float64),
            delay_steps=np.asarray(obj["delay_steps"], dtype=np.int64),
            dt=float(obj["dt_ms"]),
        )


def delay_to_steps(delay_ms, dt: float) -> np.ndarray:
    """ms -> timesteps, rounding half away from zero (exact for multiples of dt)."""
    dt = check_positive("dt", dt)
    ms = np.asarray(delay_ms, dtype=np.float64)
    if np.any(ms < 0):
        raise ValueError("delays must be non-negative")
    return np.floor(ms / dt + 0.5).astype(np.int64)


def make_schedule(delay_ms, dt: float = 1.0) -> DelaySchedule:
    ms = np.asarray(delay_ms, dtype=np.float64)
    return DelaySchedule(delay_ms=ms, delay_steps=delay_to_steps(ms, dt), dt=float(dt))


def lattice_side(n: int) -> int:
    """Smallest integer side s with s**3 >= n, computed without float cube roots."""
    s = max(1, int(round(n ** (1.0 / 3.0))))
    while s**3 < n:
        s += 1
    while s > 1 and (s - 1) ** 3 >= n:
        s -= 1
    return s


def place_neurons(n: int, seed: int) -> NeuronPositions:
    """Fill a cubic lattice in row-major order, jittering each site by U[0, 0.5)."""
    n = check_positive_int("n", n)
    side = lattice_side(n)
    idx = np.arange(n)
    base = np.stack(
        [idx // (side * side), (idx // side) % side, idx % side], axis=1
    ).astype(np.float64)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(0.0, 0.5, size=(n, 3))
    return NeuronPositions(coords=base + noise, lattice_side=side)


def assign_delays_by_radius(
    pos: NeuronPositions,
    radius_fracs=(0.2, 0.3),
    delays_ms=(0.0, 80.0, 100.0),
    dt: float = 1.0,
) -> DelaySchedule:
    """Bucket neurons into delay bands by distance from the cloud centroid.

    Band k holds neurons with distance <= radius_fracs[k] * max_radius
    (upper boundary inclusive); everything beyond the last fraction falls in
    the final band. Deterministic given the positions.
    """
    fracs = np.asarray(radius_fracs, dtype=np.float64)
    delays = np.asarray(delays_ms, dtype=np.float64)
    if fracs.shape[0] != delays.shape[0] - 1:
        raise ValueError("need one more delay value than radius fractions")
    if np.any(np.diff(fracs) <= 0):
        raise ValueError("radius_fracs must be strictly increasing")
    coords = np.asarray(pos.coords, dtype=np.float64)
    if coords.size == 0:
        raise ValueError("positions are empty")
    center = coords.mean(axis=0)
    dist = np.linalg.norm(coords - center, axis=1)
    max_radius = dist.max()
    band = np.searchsorted(fracs * max_radius, dist, side="left")
    return make_schedule(delays[band], dt)


def assign_delays_by_fraction(
    n: int, fracs, delays_ms, seed: int, dt: float = 1.0
) -> DelaySchedule:
    """Assign floor(frac_k * n) neurons to band k, remainder to the last band.

    The band-to-neuron mapping is shuffled deterministically by ``seed``.
    Used when exact population ratios matter more than geometry.
    """
    n = check_positive_int("n", n)
    fracs = np.asarray(fracs, dtype=np.float64)
    delays = np.asarray(delays_ms, dtype=np.float64)
    if fracs.shape != delays.shape:
        raise ValueError("fracs and delays_ms must have the same length")
    if abs(fracs.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fracs.sum()!r}")
    counts = np.floor(fracs * n).astype(np.int64)
    counts[-1] = n - counts[:-1].sum()
    assignment = np.repeat(delays, counts)
    rng = np.random.default_rng(seed)
    rng.shuffle(assignment)
    return make_schedule(assignment, dt)


def write_positions_csv(path, pos: NeuronPositions, schedule: DelaySchedule) -> None:
    """Export (x, y, z, delay_ms) rows for 3D plotting of the delay layout."""
    if len(schedule) != pos.coords.shape[0]:
        raise ValueError("schedule length does not match position count")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "delay_ms"])
        for (x, y, z), d in zip(pos.coords, schedule.delay_ms):
            writer.writerow([repr(x), repr(y), repr(z), repr(float(d))])
