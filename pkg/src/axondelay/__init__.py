"""Delayed recurrent spiking networks: simulation, training, analysis."""

from .analysis import Spectrum, spectral_radius, spike_rate_spectrum
from .bptt import Gradients, backward, clip_gradient_norm
from .errors import ConvergenceError, DivergenceError, IngestionError
from .network import (
    ForwardTrace,
    NetworkParams,
    SpikeBuffer,
    SpikeTrain,
    forward,
    readout_decision,
)
from .neuron import (
    LifConfig,
    MembraneState,
    decay_factor,
    lif_step,
    max_sequence_length,
    surrogate_derivative,
)
from .tasks import (
    CueSample,
    CueTaskConfig,
    CueTaskSampler,
    generate_cue_sample,
    generate_ncue_variant,
    generate_wait_variant,
    load_psmnist,
    probabilistic_baseline_accuracy,
)
from .topology import (
    DelaySchedule,
    NeuronPositions,
    assign_delays_by_fraction,
    assign_delays_by_radius,
    place_neurons,
)
from .training import (
    LossConfig,
    MadgradConfig,
    OptimizerState,
    Sample,
    TrainConfig,
    apply_constraints,
    branching_factor_loss,
    cross_entropy,
    init_params,
    kaiming_uniform_recurrent_init,
    madgrad_init,
    madgrad_step,
    total_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
