"""One-period time propagator as the independent quasienergy engine.

U(T, 0) is accumulated step by step from U <- exp(-i Hbar) U, where Hbar is
the exact time integral of H(t) over the step (the cos/sin envelopes are
integrated analytically, keeping the local error at third order).  The
eigenphases of U(T, 0) give one quasienergy per physical state, already
reduced to a single zone.
"""

import dataclasses
import math

import numpy as np

from .errors import ConfigError, NumericalError
from .floquet import zone_reduce

DEFAULT_STEP_FRACTION = 1e-3


def _expi_hermitian(h):
    """exp(-i h) for Hermitian h via its eigendecomposition (unitary)."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w)) @ v.conj().T


@dataclasses.dataclass
class PropagatorResult:
    """One-period propagator with its eigenphase quasienergies.

    quasienergies are sorted ascending in the zone [-omega/2, omega/2);
    basis_labels[i] is the basis state with the largest overlap against
    eigenvector i (overlap recorded alongside).
    """

    u: np.ndarray
    eigenphases: np.ndarray
    quasienergies: np.ndarray
    vectors: np.ndarray
    basis_labels: np.ndarray
    basis_overlaps: np.ndarray
    unitarity_residual: float
    omega: float
    dt: float

    def labeled_quasienergy(self, n):
        """Quasienergy of the class overlapping basis state ``n`` most."""
        hits = np.nonzero(self.basis_labels == n)[0]
        if hits.size == 0:
            raise ConfigError(f"no propagator class maps onto basis state {n}")
        best = hits[np.argmax(self.basis_overlaps[hits])]
        return self.quasienergies_by_vector[best]

    @property
    def quasienergies_by_vector(self):
        return zone_reduce(-np.angle(self.eigenphases) / (2.0 * np.pi / self.omega),
                           self.omega)


def propagate_one_period(h0, omega, cos_terms=None, sin_terms=None,
                         step_fraction=DEFAULT_STEP_FRACTION,
                         unitarity_tol=1e-6):
    """Second-order stepping of U over one drive period.

    ``step_fraction`` is dt/T and must divide the period evenly; the
    envelope integrals over each step are exact.  A unitarity residual of
    U(T,0) above ``unitarity_tol`` raises with a suggested smaller step.
    """
    h0 = np.asarray(h0, dtype=complex)
    n = h0.shape[0]
    steps = int(round(1.0 / step_fraction))
    if not math.isclose(steps * step_fraction, 1.0, rel_tol=1e-9):
        raise ConfigError("step_fraction must divide the period")
    period = 2.0 * np.pi / omega
    dt = period * step_fraction
    cos_terms = {s: np.asarray(c, dtype=complex)
                 for s, c in (cos_terms or {}).items()}
    sin_terms = {s: np.asarray(c, dtype=complex)
                 for s, c in (sin_terms or {}).items()}

    u = np.eye(n, dtype=complex)
    t = 0.0
    for _ in range(steps):
        t2 = t + dt
        hbar = h0 * dt
        for s, c in cos_terms.items():
            sw = s * omega
            hbar = hbar + c * ((math.sin(sw * t2) - math.sin(sw * t)) / sw)
        for s, c in sin_terms.items():
            sw = s * omega
            hbar = hbar + c * ((math.cos(sw * t) - math.cos(sw * t2)) / sw)
        u = _expi_hermitian(hbar) @ u
        t = t2

    residual = float(np.max(np.abs(u.conj().T @ u - np.eye(n))))
    if residual > unitarity_tol:
        raise NumericalError(
            f"unitarity residual {residual:g} after one period; reduce the "
            f"step to {step_fraction / 4:g} or below"
        )
    lam, vecs = np.linalg.eig(u)
    quasi = zone_reduce(-np.angle(lam) / period, omega)
    overlaps = np.abs(vecs) ** 2
    labels = np.argmax(overlaps, axis=0)
    return PropagatorResult(
        u=u,
        eigenphases=lam,
        quasienergies=np.sort(quasi),
        vectors=vecs,
        basis_labels=labels,
        basis_overlaps=np.max(overlaps, axis=0),
        unitarity_residual=residual,
        omega=omega,
        dt=dt,
    )


def atom_ion_propagator(h0, v1, v2, omega, step_fraction=DEFAULT_STEP_FRACTION):
    """Drive with V1 at twice the rf frequency and V2 at the rf frequency."""
    return propagate_one_period(h0, omega, cos_terms={2: v1},
                                sin_terms={1: v2}, step_fraction=step_fraction)


def quasienergies_from_eigenphases(u, omega):
    """Zone-reduced quasienergies from a unitary's eigenphases, sorted."""
    u = np.asarray(u)
    lam = np.linalg.eigvals(u)
    bad = np.max(np.abs(np.abs(lam) - 1.0))
    if bad > 1e-8:
        raise NumericalError(f"input is not unitary: |lambda|-1 up to {bad:g}")
    period = 2.0 * np.pi / omega
    return np.sort(zone_reduce(-np.angle(lam) / period, omega))
