"""Ergotropy decomposition, random-state ensembles and cavity charging for quantum batteries."""

__version__ = "0.1.0"

from .core import BatteryHamiltonian, QuantumState, dephase, partial_trace, passive_state  # noqa: E402
from .metrics import (  # noqa: E402
    ErgotropyReport,
    StageLabel,
    classify_stage,
    coherent_ergotropy,
    ergotropy,
    ergotropy_report,
    evaluate_batch,
    incoherent_ergotropy,
)
from .validation import DimensionMismatchError, ValidationError  # noqa: E402

__all__ = [
    "BatteryHamiltonian",
    "DimensionMismatchError",
    "ErgotropyReport",
    "QuantumState",
    "StageLabel",
    "ValidationError",
    "classify_stage",
    "coherent_ergotropy",
    "dephase",
    "ergotropy",
    "ergotropy_report",
    "evaluate_batch",
    "incoherent_ergotropy",
    "partial_trace",
    "passive_state",
]
