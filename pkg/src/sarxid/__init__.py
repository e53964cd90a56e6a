"""Online identification of switched ARX systems with certified error bounds."""
from .bound import UNBOUNDED, BoundComputation, McSchedule, exact_upper_bound, monte_carlo_upper_bound
from .errors import (
    ConfigError,
    DegenerateRegressor,
    ExactModeTooLarge,
    IllConditioned,
    InstabilityError,
    NumericalError,
    PoleDegeneracy,
    SarxError,
    SizingError,
)
from .evaluation import ExperimentSetup, RealizationSummary, compute_metrics, relabel, run_realizations
from .identify import (
    ExactBound,
    Identifier,
    IdentifierConfig,
    MonteCarloBound,
    MultiWindowBound,
    NoBound,
    StepResult,
    init_identifier,
    run,
)
from .model import (
    FastSwitching,
    MinDwell,
    NoiseModel,
    SarxSystem,
    SlowSwitching,
    SystemOrder,
    Trajectory,
    simulate,
)
from .theory import SpectralConstants, TheoryInputs, constants_from_correlation, partial_bound_curves

__version__ = "0.1.0"
