"""Point-process filtering with Gaussian assumed-density filters.

Simulate diffusion states observed through populations of Gaussian-tuned
sensors, decode them with closed-form Gaussian filters, check the filters
against a particle filter, and run Monte-Carlo encoding sweeps.
"""

__version__ = "0.1.0"

from .adf import (  # noqa: E402
    BeliefTrajectory,
    continuous_step,
    expected_rate,
    expected_rate_pop,
    filter_run,
    gain_S,
    interval_terms,
    prior_step,
    spike_update,
)
from .errors import ConfigError, NumericalError, PPADFError, SPDError, ValidationError, WeightUnderflowError  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .model import (  # noqa: E402
    Component,
    GaussianBelief,
    GaussianPop,
    IntervalUniform,
    LinearDynamics,
    Mixture,
    SensorShape,
    Single,
    SpikeEvent,
    UniformAll,
    steady_state_prior,
    validate,
)
from .simulate import generate_observations, integrate_state, sample_mark, total_rate  # noqa: E402

__all__ = [
    "BACKEND",
    "BeliefTrajectory",
    "Component",
    "ConfigError",
    "GaussianBelief",
    "GaussianPop",
    "IntervalUniform",
    "LinearDynamics",
    "Mixture",
    "NumericalError",
    "PPADFError",
    "SPDError",
    "SensorShape",
    "Single",
    "SpikeEvent",
    "UniformAll",
    "ValidationError",
    "WeightUnderflowError",
    "continuous_step",
    "expected_rate",
    "expected_rate_pop",
    "filter_run",
    "gain_S",
    "generate_observations",
    "integrate_state",
    "interval_terms",
    "prior_step",
    "sample_mark",
    "spike_update",
    "steady_state_prior",
    "total_rate",
    "validate",
]
