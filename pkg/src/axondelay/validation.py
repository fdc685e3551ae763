"""Input validation helpers.

Small, reusable checks used by the core operations and the estimator so that
bad inputs fail early with a readable message instead of deep inside a loop.
"""

from __future__ import annotations

import numpy as np


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_non_negative(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be non-negative and finite, got {value!r}")
    return value


def check_positive_int(name: str, value: int) -> int:
    if int(value) != value or int(value) < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_vector(name: str, x, length: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {x.shape[0]}")
    return x


def check_matrix(name: str, x, shape: tuple[int, int] | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {x.shape}")
    if shape is not None and x.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {x.shape}")
    return x


def check_square(name: str, x) -> np.ndarray:
    x = check_matrix(name, x)
    if x.shape[0] != x.shape[1]:
        raise ValueError(f"{name} must be square, got shape {x.shape}")
    return x


def check_finite(name: str, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return x


def check_binary_spikes(name: str, x) -> np.ndarray:
    """Validate a (T, n) spike matrix: entries must be exactly 0 or 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a (T, n) matrix, got shape {x.shape}")
    bad = (x != 0.0) & (x != 1.0)
    if bad.any():
        t, i = np.argwhere(bad)[0]
        raise ValueError(
            f"{name} must be binary; entry [{t}, {i}] = {x[t, i]!r}"
        )
    return x


def check_episode_list(name: str, episodes) -> list[np.ndarray]:
    """Validate a sequence of time-major (T_i, n_channels) input arrays.

    All episodes must share the channel count; lengths may differ.
    """
    if isinstance(episodes, np.ndarray) and episodes.ndim == 3:
        episodes = list(episodes)
    out = []
    n_channels = None
    for i, ep in enumerate(episodes):
        ep = np.asarray(ep, dtype=np.float64)
        if ep.ndim != 2 or ep.shape[0] < 1:
            raise ValueError(
                f"{name}[{i}] must be a non-empty (T, n_channels) array, "
                f"got shape {ep.shape}"
            )
        if not np.all(np.isfinite(ep)):
            raise ValueError(f"{name}[{i}] contains NaN or Inf entries")
        if n_channels is None:
            n_channels = ep.shape[1]
        elif ep.shape[1] != n_channels:
            raise ValueError(
                f"{name}[{i}] has {ep.shape[1]} channels, expected {n_channels}"
            )
        out.append(ep)
    if not out:
        raise ValueError(f"{name} must contain at least one episode")
    return out
