"""Matrosov-type Lyapunov certificates for uncertain ODEs: gauges, simulation,
pointwise and scalar condition checking, and sampled-contraction verification."""

from .certificate import (GeneralCertificate, LinearRateCertificate, classical_completion,
                          contraction_time, linear_rate_from)
from .checker import CheckReport, Verdict, certify
from .discretize import decay_envelope, exponential_constants, run_contraction
from .sampling import Sampling
from .simulate import Trajectory, integrate
from .system import DisturbanceSignal, UncertainSystem

__version__ = "0.1.0"

__all__ = [
    "CheckReport", "DisturbanceSignal", "GeneralCertificate", "LinearRateCertificate", "Sampling",
    "Trajectory", "UncertainSystem", "Verdict", "certify", "classical_completion", "contraction_time",
    "decay_envelope", "exponential_constants", "integrate", "linear_rate_from", "run_contraction",
]
