"""Path-integral simulation of a quantum system coupled to two harmonic baths
through non-commuting operators."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    PAULI,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DephasingConditionError,
    DiscreteModes,
    Ohmic,
    SystemSpec,
    Tabulated,
    ValidationError,
    eigenbasis,
    tls,
)
from .kernels import QuadratureConfig, QuadratureError, ThermalBath  # noqa: E402
from .propagator import (  # noqa: E402
    Trajectory,
    brute_force,
    evolve_single_bath,
    evolve_two_bath,
    o_pm_operator,
)

__all__ = [
    "PAULI", "SIGMA_X", "SIGMA_Y", "SIGMA_Z", "DephasingConditionError", "DiscreteModes", "Ohmic",
    "SystemSpec", "Tabulated", "ValidationError", "eigenbasis", "tls", "QuadratureConfig",
    "QuadratureError", "ThermalBath", "Trajectory", "brute_force", "evolve_single_bath",
    "evolve_two_bath", "o_pm_operator",
]
