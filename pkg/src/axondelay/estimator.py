"""Scikit-learn style wrapper around the spiking network trainer.

Episodes are variable-length time-major arrays, so X is a list (or 3-d
array) of (T_i, n_channels) inputs rather than a flat feature matrix; apart
from that the estimator follows the usual fit/predict/score conventions and
clones cleanly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .network import forward, readout_logits
from .neuron import LifConfig
from .seeding import derive_seed
from .tasks import FixedDatasetSampler
from .topology import assign_delays_by_fraction
from .training import (
    LossConfig,
    MadgradConfig,
    Sample,
    TrainConfig,
    init_params,
    train,
)
from .validation import check_episode_list


class RecurrentSpikingClassifier(ClassifierMixin, BaseEstimator):
    """Classify episodes with a recurrent pool of delayed LIF neurons.

    The decision is the argmax of the readout membrane averaged over each
    episode's recall window (by default the final ``readout_steps`` steps).

    Parameters mirror the training configuration: network size, the delay
    set and its population fractions, loss weights (``beta`` scales the
    branching-factor regularizer), optimizer hyperparameters and the
    time-constant clamp applied after every batch.
    """

    def __init__(
        self,
        n_hidden: int = 125,
        delays_ms: tuple = (0.0, 80.0, 100.0),
        delay_fractions: tuple = (0.176, 0.424, 0.400),
        tau_r: float = 20.0,
        tau_o: float = 5.0,
        u_th: float = 1.0,
        w_in_gain: float = 1.0,
        beta: float = 0.001,
        clip_max_norm: float = 0.01,
        bf_per_neuron: bool = False,
        lr: float = 0.01,
        momentum: float = 0.9,
        eps: float = 1e-6,
        epochs: int = 10,
        batch_size: int = 64,
        readout_steps: int = 150,
        tau_clamp: tuple = (0.1, 50.0),
        reset_mode: str = "soft_subtract",
        dt: float = 1.0,
        recurrent: bool = True,
        random_state: int = 0,
    ):
        self.n_hidden = n_hidden
        self.delays_ms = delays_ms
        self.delay_fractions = delay_fractions
        self.tau_r = tau_r
        self.tau_o = tau_o
        self.u_th = u_th
        self.w_in_gain = w_in_gain
        self.beta = beta
        self.clip_max_norm = clip_max_norm
        self.bf_per_neuron = bf_per_neuron
        self.lr = lr
        self.momentum = momentum
        self.eps = eps
        self.epochs = epochs
        self.batch_size = batch_size
        self.readout_steps = readout_steps
        self.tau_clamp = tau_clamp
        self.reset_mode = reset_mode
        self.dt = dt
        self.recurrent = recurrent
        self.random_state = random_state

    def _window(self, episode: np.ndarray, override) -> tuple[int, int]:
        if override is not None:
            return (int(override[0]), int(override[1]))
        T = episode.shape[0]
        return (max(0, T - int(self.readout_steps)), T)

    def fit(self, X, y, recall_windows=None):
        """Train on a fixed dataset, shuffled each epoch.

        ``recall_windows`` optionally gives one (start, stop) step window per
        episode; otherwise the final ``readout_steps`` steps are read out.
        """
        episodes = check_episode_list("X", X)
        y = np.asarray(y)
        if y.shape[0] != len(episodes):
            raise ValueError(
                f"X has {len(episodes)} episodes but y has {y.shape[0]} labels"
            )
        if recall_windows is not None and len(recall_windows) != len(episodes):
            raise ValueError("recall_windows must match X in length")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least two classes")
        self.n_channels_in_ = episodes[0].shape[1]

        samples = [
            Sample(
                inputs=ep,
                label=int(lab),
                recall_window=self._window(
                    ep, None if recall_windows is None else recall_windows[i]
                ),
            )
            for i, (ep, lab) in enumerate(zip(episodes, encoded))
        ]
        seed = int(self.random_state)
        self.params_ = init_params(
            n_in=self.n_channels_in_,
            n_hidden=self.n_hidden,
            n_out=self.classes_.shape[0],
            seed=derive_seed(seed, "init"),
            tau_r=self.tau_r,
            tau_o=self.tau_o,
            u_th=self.u_th,
            w_in_gain=self.w_in_gain,
            recurrent=self.recurrent,
        )
        self.delays_ = assign_delays_by_fraction(
            self.n_hidden,
            self.delay_fractions,
            self.delays_ms,
            seed=derive_seed(seed, "delays"),
            dt=self.dt,
        )
        cfg = TrainConfig(
            epochs=self.epochs,
            samples_per_epoch=len(samples),
            batch_size=self.batch_size,
            loss=LossConfig(
                beta=self.beta,
                clip_max_norm=self.clip_max_norm,
                bf_per_neuron=self.bf_per_neuron,
            ),
            optimizer=MadgradConfig(lr=self.lr, momentum=self.momentum, eps=self.eps),
            tau_clamp=tuple(self.tau_clamp),
            probe_samples=0,
            frozen=() if self.recurrent else ("w_rec",),
            dt=self.dt,
            reset_mode=self.reset_mode,
        )
        sampler = FixedDatasetSampler(samples, derive_seed(seed, "fit-shuffle"))
        result = train(self.params_, self.delays_, sampler, cfg)
        self.history_ = result.history
        return self

    def decision_function(self, X, recall_windows=None):
        """Recall-window mean readout membrane per class, shape (n, n_classes)."""
        self._check_fitted()
        episodes = check_episode_list("X", X)
        if episodes[0].shape[1] != self.n_channels_in_:
            raise ValueError(
                f"X has {episodes[0].shape[1]} channels, fitted with "
                f"{self.n_channels_in_}"
            )
        lif = LifConfig(dt=self.dt, reset_mode=self.reset_mode)
        rows = []
        for i, ep in enumerate(episodes):
            window = self._window(
                ep, None if recall_windows is None else recall_windows[i]
            )
            trace = forward(self.params_, self.delays_, ep, lif)
            rows.append(readout_logits(trace.u_out, window))
        return np.vstack(rows)

    def predict(self, X, recall_windows=None):
        scores = self.decision_function(X, recall_windows)
        return self.classes_[np.argmax(scores, axis=1)]

    def predict_proba(self, X, recall_windows=None):
        scores = self.decision_function(X, recall_windows)
        shifted = scores - scores.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise RuntimeError("estimator is not fitted; call fit first")
