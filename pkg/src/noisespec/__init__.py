"""Qubit-probe spectroscopy of classical dephasing noise.

A single qubit accumulates phase from a classical noise process coupled to
sigma_z.  This package simulates that experiment (free-evolution chains for
the slow part of the spectrum, dynamical-decoupling sequences for the fast
part) and reconstructs the noise correlation function from the recorded
measurement outcomes.
"""

from noisespec.noise import Fluctuator, NoiseModel, NoiseTrajectory
from noisespec.sequences import (
    FilterFunctionCurve,
    OverlapMatrix,
    PulseSequence,
    free_evolution,
    hahn_echo,
    udd,
)
from noisespec.simulator import CoherenceEstimate, MeasurementRecord

__version__ = "0.1.0"

__all__ = [
    "CoherenceEstimate",
    "FilterFunctionCurve",
    "Fluctuator",
    "MeasurementRecord",
    "NoiseModel",
    "NoiseTrajectory",
    "OverlapMatrix",
    "PulseSequence",
    "free_evolution",
    "hahn_echo",
    "udd",
    "__version__",
]
