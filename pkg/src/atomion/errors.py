"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
NumericalError -> 3, ScopeError -> 4.
"""


class AtomIonError(Exception):
    pass


class ConfigError(AtomIonError):
    """Invalid or inconsistent input parameters."""


class UnstableTrapError(ConfigError):
    """Trap parameters outside the stable (real secular frequency) region."""


class NumericalError(AtomIonError):
    """A numerical routine failed to converge or lost accuracy."""


class ConsistencyError(NumericalError):
    """Two redundant computation routes disagree beyond tolerance."""


class ScopeError(AtomIonError):
    """Requested quantity is outside the computed basis or model range."""
