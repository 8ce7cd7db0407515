"""Information-spectrum toolkit for joint source-channel coding."""

__version__ = "0.1.0"

from .errors import (
    CapExceededError,
    ConfigError,
    InfoSpecError,
    InvariantViolationError,
    MarginalUnavailableError,
    ModelValidationError,
    ScheduleError,
    TailBudgetError,
    UndefinedDensityError,
    ZeroProbabilityError,
)
from .models import (
    ChannelModel,
    FiniteDistribution,
    InputCoupling,
    SourceModel,
    build_channel,
    build_coupling,
    build_source,
    joint_support,
    validate_model,
)
from .spectra import (
    Spectrum,
    SpectralSummary,
    entropy_density,
    exact_spectrum,
    information_density,
    mc_spectrum,
    output_marginal,
    plim_estimate,
    spectrum_query,
)
