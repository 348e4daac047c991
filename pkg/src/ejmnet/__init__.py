"""Bilocality with generalised elegant joint measurements.

Quantum statistics of the two-source network, bilocal models, a heuristic
bilocal-model search, network Bell inequalities and a measurement circuit.
"""

__version__ = "0.1.0"

from .correlators import CorrelatorSet, TripartiteDistribution, correlators_to_distribution, distribution_to_correlators
from .errors import DomainError, EjmError, NumericalError, SignallingError, UsageError, ValidityError, VerificationFailure
from .quantum import closed_form_correlators, ejm_basis, network_distribution, werner
from .bilocal import BilocalModel, SymmetricModelParams, bsm_bilocal_model, eval_bilocal

__all__ = [
    "__version__",
    "CorrelatorSet",
    "TripartiteDistribution",
    "correlators_to_distribution",
    "distribution_to_correlators",
    "EjmError",
    "DomainError",
    "UsageError",
    "ValidityError",
    "SignallingError",
    "NumericalError",
    "VerificationFailure",
    "closed_form_correlators",
    "ejm_basis",
    "network_distribution",
    "werner",
    "BilocalModel",
    "SymmetricModelParams",
    "bsm_bilocal_model",
    "eval_bilocal",
]
