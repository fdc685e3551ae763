"""Post-hoc diagnostics: spike-rate spectrum and spectral radius.

A trained network that stores information in self-sustained activity shows
oscillations at delay- and loop-dependent frequencies; the spectrum makes
those visible. The spectral radius of the recurrent matrix measures
per-hop amplification of that activity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .validation import check_binary_spikes, check_positive, check_square


@dataclass(frozen=True)
class Spectrum:
    """DFT magnitude of the mean-subtracted total spike rate, centered at 0 Hz."""

    frequencies: np.ndarray  # Hz
    magnitudes: np.ndarray


def spike_rate_spectrum(spikes, dt: float = 1.0, window: str = "rect") -> Spectrum:
    """Spectrum of the pooled spike count N[t] = sum_i n_i[t].

    The DC component vanishes by mean subtraction. ``window`` is "rect"
    (raw, the default) or "hann". ``dt`` is in ms; frequencies come out
    in Hz.
    """
    spikes = check_binary_spikes("spikes", spikes)
    dt = check_positive("dt", dt)
    T = spikes.shape[0]
    if T < 2:
        raise ValueError(f"need at least 2 timesteps, got {T}")
    signal = spikes.sum(axis=1)
    signal = signal - signal.mean()
    if window == "hann":
        signal = signal * np.hanning(T)
    elif window != "rect":
        raise ValueError(f"window must be 'rect' or 'hann', got {window!r}")
    mags = np.abs(np.fft.fft(signal))
    freqs = np.fft.fftfreq(T, d=dt / 1000.0)
    order = np.fft.fftshift(np.arange(T))
    return Spectrum(frequencies=freqs[order], magnitudes=mags[order])


def write_spectrum_csv(path, spectrum: Spectrum) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frequency_hz", "magnitude"])
        for f, m in zip(spectrum.frequencies, spectrum.magnitudes):
            writer.writerow([repr(float(f)), repr(float(m))])


def spectral_radius(
    w, rel_tol: float = 1e-8, max_iter: int = 10_000
) -> float:
    """Largest eigenvalue modulus of a real square matrix.

    Uses the norm growth rate ||W^k||^(1/k), evaluated along k = 2^m by
    repeated squaring of a norm-rescaled power, with one Richardson
    extrapolation step on the log estimates. This converges to the modulus
    for any real matrix, including complex-pair dominant spectra where a
    plain power iteration would circle forever, and needs no complex
    arithmetic.
    """
    w = check_square("w", w)
    if not np.all(np.isfinite(w)):
        raise ValueError("w contains NaN or Inf entries")
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        return 0.0
    # log ||W^(2^m)||_F tracked as log_total; a stays unit Frobenius norm
    a = w / norm
    log_total = math.log(norm)
    prev_est = log_total  # m = 0 estimate of log rho
    prev_extrap = None
    for m in range(1, max_iter + 1):
        a = a @ a
        step_norm = float(np.linalg.norm(a))
        if step_norm == 0.0:
            return 0.0  # nilpotent: some power vanished exactly
        log_total = 2.0 * log_total + math.log(step_norm)
        a = a / step_norm
        est = log_total / 2.0**m
        # ||W^k||^(1/k) >= rho with error ~ c/k: extrapolate the halving tail
        extrap = 2.0 * est - prev_est
        if prev_extrap is not None:
            # difference of log estimates = relative difference of the radius
            if abs(extrap - prev_extrap) <= rel_tol:
                return math.exp(extrap)
            if not math.isfinite(extrap):
                break
        prev_est = est
        prev_extrap = extrap
    raise ConvergenceError(
        f"spectral radius did not converge within {max_iter} squarings",
        estimate=math.exp(prev_extrap) if prev_extrap is not None else None,
    )
