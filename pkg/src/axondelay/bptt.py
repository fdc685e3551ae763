"""Reverse-mode gradients through the unrolled delayed recurrent network.

Two paths carry the gradient backward in time: the membrane leak (scaled by
the decay factor each step) and the recurrent connections (scaled by the
surrogate spike derivative and routed through each presynaptic neuron's
transmission delay, so a delayed synapse links timesteps that many steps
apart). The shared scalars tau_r, tau_o and u_th receive gradients through
every occurrence of their decay factors, the soft-reset subtraction and the
threshold inside the surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .network import ForwardTrace, NetworkParams, effective_lags
from .neuron import SOFT_SUBTRACT, decay_factor, surrogate_derivative
from .topology import DelaySchedule


@dataclass
class Gradients:
    """Same shapes as NetworkParams; the w_rec diagonal is forced to zero."""

    w_in: np.ndarray
    w_rec: np.ndarray
    w_out: np.ndarray
    tau_r: float
    tau_o: float
    u_th: float

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "Gradients":
        return cls(
            w_in=np.zeros_like(params.w_in),
            w_rec=np.zeros_like(params.w_rec),
            w_out=np.zeros_like(params.w_out),
            tau_r=0.0,
            tau_o=0.0,
            u_th=0.0,
        )

    def iadd(self, other: "Gradients") -> "Gradients":
        self.w_in += other.w_in
        self.w_rec += other.w_rec
        self.w_out += other.w_out
        self.tau_r += other.tau_r
        self.tau_o += other.tau_o
        self.u_th += other.u_th
        return self

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            w_in=self.w_in * factor,
            w_rec=self.w_rec * factor,
            w_out=self.w_out * factor,
            tau_r=self.tau_r * factor,
            tau_o=self.tau_o * factor,
            u_th=self.u_th * factor,
        )

    def global_norm(self) -> float:
        # prescaled to survive entries near the float overflow threshold
        peak = max(
            float(np.max(np.abs(self.w_in), initial=0.0)),
            float(np.max(np.abs(self.w_rec), initial=0.0)),
            float(np.max(np.abs(self.w_out), initial=0.0)),
            abs(self.tau_r),
            abs(self.tau_o),
            abs(self.u_th),
        )
        if peak == 0.0:
            return 0.0
        sq = (
            float(np.sum((self.w_in / peak) ** 2))
            + float(np.sum((self.w_rec / peak) ** 2))
            + float(np.sum((self.w_out / peak) ** 2))
            + (self.tau_r / peak) ** 2
            + (self.tau_o / peak) ** 2
            + (self.u_th / peak) ** 2
        )
        return peak * math.sqrt(sq)

    def group_norms(self) -> dict:
        return {
            "w_in": float(np.linalg.norm(self.w_in)),
            "w_rec": float(np.linalg.norm(self.w_rec)),
            "w_out": float(np.linalg.norm(self.w_out)),
            "tau_r": abs(self.tau_r),
            "tau_o": abs(self.tau_o),
            "u_th": abs(self.u_th),
        }


def d_decay_d_tau(tau: float, dt: float) -> float:
    """d/dtau of exp(-dt/tau): (dt / tau^2) * exp(-dt/tau)."""
    return (dt / tau**2) * math.exp(-dt / tau)


def backward(
    trace: ForwardTrace,
    params: NetworkParams,
    delays: DelaySchedule,
    d_loss_d_uout: np.ndarray,
    d_loss_d_spikes: np.ndarray | None = None,
) -> Gradients:
    """Accumulate adjoints backward through one recorded episode.

    ``d_loss_d_uout`` holds the explicit per-step loss derivative w.r.t. the
    readout membranes, shape (T, n_out). ``d_loss_d_spikes`` optionally seeds
    the hidden spikes directly (shape (T, n_hidden)); activity regularizers
    differentiate w.r.t. the spikes themselves, so they enter here.
    """
    T = trace.n_steps
    n_hidden = params.n_hidden
    dt = trace.dt
    soft = trace.reset_mode == SOFT_SUBTRACT
    alpha_r = decay_factor(params.tau_r, dt)
    alpha_o = decay_factor(params.tau_o, dt)
    u_th = params.u_th
    U, S, X = trace.u, trace.spikes, trace.inputs
    U_out = trace.u_out
    d_uout = np.asarray(d_loss_d_uout, dtype=np.float64)
    if d_uout.shape != U_out.shape:
        raise ValueError(
            f"d_loss_d_uout must match the readout trace shape {U_out.shape}, "
            f"got {d_uout.shape}"
        )
    Hp = surrogate_derivative(U, u_th)  # (T, n_hidden)
    lags = effective_lags(delays)
    cols = np.arange(n_hidden)

    # Readout adjoints: lam_out[t] = d_uout[t] + alpha_o * lam_out[t+1]
    lam_out = np.empty_like(U_out)
    acc = np.zeros(params.n_out)
    for t in range(T - 1, -1, -1):
        acc = d_uout[t] + alpha_o * acc
        lam_out[t] = acc

    # Spike adjoint contributions known up front: readout plus explicit seed.
    G0 = lam_out @ params.w_out  # (T, n_hidden)
    if d_loss_d_spikes is not None:
        G0 = G0 + np.asarray(d_loss_d_spikes, dtype=np.float64)

    lam_u = np.zeros((T, n_hidden))
    G = np.empty((T, n_hidden))  # complete spike adjoints, kept for d u_th
    R = np.zeros((T, n_hidden))  # R[t] = w_rec.T @ lam_u[t]; gathered before write
    w_rec_t = np.ascontiguousarray(params.w_rec.T)

    # Delay routing: neuron j's spike at t enters membranes at t + lags[j],
    # so its adjoint comes back from that step's membrane adjoint. Only the
    # final max(lags) steps can reach past the episode end; the out-of-range
    # mask is applied there and skipped elsewhere.
    base = cols + lags * n_hidden  # flat index of (t + lag_j, j) minus t*n_hidden
    max_lag = int(lags.max(initial=1))
    tail_start = max(T - max_lag, 0)
    tail_bounds = (
        np.arange(tail_start, T)[:, None] + lags[None, :] < T
    ).astype(np.float64)
    r_flat = R.ravel()
    idx = np.empty(n_hidden, dtype=np.int64)

    scratch = np.empty(n_hidden)
    lam_next = np.zeros(n_hidden)
    for t in range(T - 1, -1, -1):
        g_t = G[t]
        np.add(base, t * n_hidden, out=idx)
        if t >= tail_start:
            np.take(r_flat, idx, out=g_t, mode="wrap")
            g_t *= tail_bounds[t - tail_start]
        else:
            np.take(r_flat, idx, out=g_t)
        g_t += G0[t]
        lam_t = lam_u[t]
        if soft:
            np.multiply(lam_next, u_th, out=scratch)
            g_t -= scratch
            np.multiply(Hp[t], g_t, out=lam_t)
            np.multiply(lam_next, alpha_r, out=scratch)
            lam_t += scratch
        else:
            np.multiply(lam_next, alpha_r * U[t], out=scratch)
            g_t -= scratch
            np.multiply(Hp[t], g_t, out=lam_t)
            np.subtract(1.0, S[t], out=scratch)
            scratch *= lam_next
            scratch *= alpha_r
            lam_t += scratch
        np.matmul(w_rec_t, lam_t, out=R[t])
        lam_next = lam_t

    if not (np.isfinite(lam_u).all() and np.isfinite(lam_out).all()):
        bad = ~(np.isfinite(lam_u).all(axis=1) & np.isfinite(lam_out).all(axis=1))
        t_bad = int(np.argmax(bad))
        raise DivergenceError(
            f"non-finite adjoint at timestep {t_bad}", timestep=t_bad
        )

    dw_in = lam_u.T @ X
    dw_rec = lam_u.T @ trace.delayed
    np.fill_diagonal(dw_rec, 0.0)
    dw_out = lam_out.T @ S

    if soft:
        d_alpha_r = float(np.sum(lam_u[1:] * U[:-1]))
        d_u_th = -float(np.sum(lam_u[1:] * S[:-1])) - float(np.sum(G * Hp))
    else:
        d_alpha_r = float(np.sum(lam_u[1:] * (U[:-1] * (1.0 - S[:-1]))))
        d_u_th = -float(np.sum(G * Hp))
    d_alpha_o = float(np.sum(lam_out[1:] * U_out[:-1]))

    return Gradients(
        w_in=dw_in,
        w_rec=dw_rec,
        w_out=dw_out,
        tau_r=d_alpha_r * d_decay_d_tau(params.tau_r, dt),
        tau_o=d_alpha_o * d_decay_d_tau(params.tau_o, dt),
        u_th=d_u_th,
    )


def clip_gradient_norm(grads: Gradients, max_norm: float) -> Gradients:
    """Scale all gradients so the global L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm!r}")
    norm = grads.global_norm()
    if norm <= max_norm:
        return grads
    return grads.scaled(max_norm / norm)
