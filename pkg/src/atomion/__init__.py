"""Quasienergy spectra and micromotion couplings for trapped atom-ion systems."""

from .config import (
    DimensionlessParams,
    TrapConfig,
    ba_rb_reference,
    characteristic_distance,
    gamma_factor,
    load_config,
    q_for_secular_frequency,
    secular_frequency,
)
from .errors import (
    AtomIonError,
    ConfigError,
    ConsistencyError,
    NumericalError,
    ScopeError,
    UnstableTrapError,
)
from .numerov import (
    UnperturbedBasis,
    basis_for,
    find_r_min,
    harmonic_basis,
    matrix_elements,
    solve_unperturbed,
)

__version__ = "0.1.0"
