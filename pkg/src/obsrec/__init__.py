"""Recurrence rates and pointwise dimensions of observed dynamical systems."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AllocationLimitError,
    ConfigError,
    DimensionMismatch,
    InsufficientDataError,
    InvariantViolation,
    NotFoundError,
    ObsrecError,
    PhaseSpaceMismatch,
    UndefinedRatioError,
)
from .dynamics import SystemSpec, sample_ensemble, sample_invariant, step  # noqa: E402
from .observables import jacobian_rank, make_observable  # noqa: E402
from .recurrence import recurrence_rate, return_profile, return_time  # noqa: E402
from .dimension import PointCloud, local_dimension, pushforward_cloud  # noqa: E402
from .correlations import decay_profile, fit_ratio, superpoly_check  # noqa: E402
from .diophantine import RotationNumber, approx_exponent, k0_scan, m_n_eps  # noqa: E402

__all__ = [
    "__version__",
    "ObsrecError", "PhaseSpaceMismatch", "AllocationLimitError", "InsufficientDataError",
    "UndefinedRatioError", "NotFoundError", "InvariantViolation", "ConfigError",
    "DimensionMismatch",
    "SystemSpec", "sample_ensemble", "sample_invariant", "step",
    "make_observable", "jacobian_rank",
    "return_time", "return_profile", "recurrence_rate",
    "PointCloud", "pushforward_cloud", "local_dimension",
    "decay_profile", "fit_ratio", "superpoly_check",
    "RotationNumber", "approx_exponent", "k0_scan", "m_n_eps",
]
