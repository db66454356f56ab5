"""Brain-swarm interface: biosignal decoding driving a potential-field swarm.

Signal traces (EOG electrode potentials + EEG-derived performance metrics)
are decoded into a two-state thought estimate (Gaussian HMM) and discrete
eye-movement commands, which together set the gains and drive vector of a
simulated robot swarm.
"""

__version__ = "0.1.0"

from .errors import (
    AmbiguousTrainingError,
    ConfigurationError,
    DegenerateInputError,
    NumericalError,
    SimulationError,
    TraceParseError,
    ValidationError,
)

__all__ = [
    "AmbiguousTrainingError",
    "ConfigurationError",
    "DegenerateInputError",
    "NumericalError",
    "SimulationError",
    "TraceParseError",
    "ValidationError",
    "__version__",
]
