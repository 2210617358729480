"""Truncated Floquet-Hamiltonian engine.

A periodically driven Hamiltonian H(t) = H0 + sum_s C_s cos(s w t)
+ sum_s S_s sin(s w t) acting on an N_e-dimensional basis is lifted to the
extended space of Fourier modes k = -N_f..N_f.  Ordering puts all basis
states of one mode together ("n runs before k"), so the drive harmonics
appear as constant block off-diagonals: cos terms contribute C_s/2 at block
offset +-s, sin terms -+ i S_s/2.  Diagonalizing the truncated matrix gives
the quasienergies; every physical state appears once per mode (a class),
and members of one class differ by a rigid block shift of their coefficient
vectors.
"""

import dataclasses
import warnings

import numpy as np

from .errors import ConfigError, NumericalError


def zone_reduce(eps, omega, center=0.0):
    """Map quasienergies into [center - omega/2, center + omega/2)."""
    return (np.asarray(eps) - center + 0.5 * omega) % omega - 0.5 * omega + center


def circular_distance(a, b, omega):
    """Distance between quasienergies modulo one zone width."""
    d = (np.asarray(a) - np.asarray(b)) % omega
    return np.minimum(d, omega - d)


def floquet_matrix(h0, omega, n_f, cos_terms=None, sin_terms=None):
    """Assemble the truncated Floquet matrix for the given drive harmonics.

    ``cos_terms`` and ``sin_terms`` map positive harmonic numbers to
    N_e x N_e matrices.  The result is complex Hermitian of linear size
    N_e * (2 n_f + 1); assembly asymmetry beyond 1e-12 is an error.
    """
    h0 = np.asarray(h0)
    n_e = h0.shape[0]
    if h0.shape != (n_e, n_e):
        raise ConfigError("h0 must be square")
    if omega <= 0.0 or n_f < 0:
        raise ConfigError("need omega > 0 and n_f >= 0")
    n_blocks = 2 * n_f + 1
    n = n_e * n_blocks
    out = np.zeros((n, n), dtype=complex)
    for kb in range(n_blocks):
        sl = slice(kb * n_e, (kb + 1) * n_e)
        out[sl, sl] = h0 + (kb - n_f) * omega * np.eye(n_e)
    def _add_block(kb, jb, mat):
        if 0 <= jb < n_blocks:
            out[kb * n_e:(kb + 1) * n_e, jb * n_e:(jb + 1) * n_e] += mat
    for s, c in (cos_terms or {}).items():
        if s <= 0:
            raise ConfigError("harmonic numbers must be positive")
        c = np.asarray(c)
        for kb in range(n_blocks):
            _add_block(kb, kb + s, 0.5 * c)
            _add_block(kb, kb - s, 0.5 * c)
    for s, smat in (sin_terms or {}).items():
        if s <= 0:
            raise ConfigError("harmonic numbers must be positive")
        smat = np.asarray(smat)
        for kb in range(n_blocks):
            _add_block(kb, kb + s, 0.5j * smat)   # e^{-i s w t} side
            _add_block(kb, kb - s, -0.5j * smat)  # e^{+i s w t} side
    residual = np.max(np.abs(out - out.conj().T))
    if residual > 1e-12 * max(1.0, np.max(np.abs(out))):
        raise NumericalError(f"Floquet matrix not Hermitian: residual {residual:g}")
    return out


def build_floquet_matrix(h0, v1, v2, omega, n_f):
    """Atom-ion drive: V1 at twice the rf frequency, V2 at the rf frequency.

    Produces the block-pentadiagonal structure with +-iV2/2 on the first
    block off-diagonals and V1/2 on the second; V2 is the Hermitian
    (purely imaginary) sin-drive matrix.
    """
    return floquet_matrix(h0, omega, n_f, cos_terms={2: np.asarray(v1)},
                          sin_terms={1: np.asarray(v2)})


def cosine_floquet_matrix(h0, v, omega, n_f):
    """Single-harmonic cosine drive: V/2 on the first block off-diagonals."""
    return floquet_matrix(h0, omega, n_f, cos_terms={1: np.asarray(v)})


@dataclasses.dataclass
class FloquetSpectrum:
    """Quasienergies reduced to one zone plus (n, k) coefficient vectors.

    ``vectors[:, i]`` is the i-th eigenvector over the (mode, state) layout;
    ``dominant_block`` holds the mode index (0 = most negative) carrying the
    largest weight, and class representatives are the central-mode-dominant
    members.  ``edge_weight`` is the per-state weight in the outermost
    modes, a direct truncation residual.
    """

    omega: float
    n_e: int
    n_f: int
    zone_center: float
    energies_raw: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    block_weights: np.ndarray
    dominant_block: np.ndarray
    edge_weight: np.ndarray
    meta: dict = dataclasses.field(default_factory=dict)

    @property
    def representative_mask(self):
        return self.dominant_block == self.n_f

    @property
    def class_energies(self):
        """Zone-reduced quasienergies, one per physical class."""
        return np.sort(self.energies[self.representative_mask])

    def class_vectors(self):
        return self.vectors[:, self.representative_mask]


def diagonalize_floquet(matrix, n_e, n_f, omega, zone_center=0.0):
    """Dense Hermitian diagonalization plus zone reduction and class tags."""
    n_blocks = 2 * n_f + 1
    if matrix.shape != (n_e * n_blocks, n_e * n_blocks):
        raise ConfigError("matrix size does not match n_e, n_f")
    evals, vecs = np.linalg.eigh(matrix)
    w = np.abs(vecs) ** 2
    block_weights = w.reshape(n_blocks, n_e, -1).sum(axis=1).T
    dominant = np.argmax(block_weights, axis=1)
    edge = block_weights[:, 0] + block_weights[:, -1] if n_f > 0 else \
        np.zeros(evals.size)
    return FloquetSpectrum(
        omega=omega, n_e=n_e, n_f=n_f, zone_center=zone_center,
        energies_raw=evals,
        energies=zone_reduce(evals, omega, zone_center),
        vectors=vecs,
        block_weights=block_weights,
        dominant_block=dominant,
        edge_weight=edge,
        meta={"dimension": int(evals.size)},
    )


def shift_blocks(vector, n_e, n_f, shift):
    """Translate a coefficient vector by ``shift`` Floquet modes."""
    blocks = vector.reshape(2 * n_f + 1, n_e)
    out = np.zeros_like(blocks)
    if shift >= 0:
        out[shift:] = blocks[:2 * n_f + 1 - shift]
    else:
        out[:shift] = blocks[-shift:]
    return out.ravel()


def classify_members(spectrum, tol=1e-6):
    """Group eigenstates into physical classes by reduced energy + shift.

    Two members belong to one class when their reduced quasienergies agree
    modulo the zone and their coefficient vectors match after a rigid block
    shift.  Returns a list of index arrays.
    """
    order = np.argsort(spectrum.energies)
    eps = spectrum.energies[order]
    groups = []
    start = 0
    for i in range(1, eps.size + 1):
        if i == eps.size or eps[i] - eps[i - 1] > tol:
            groups.append(order[start:i])
            start = i
    classes = []
    n_e, n_f, omega = spectrum.n_e, spectrum.n_f, spectrum.omega
    for grp in groups:
        remaining = list(grp)
        while remaining:
            seed = remaining.pop(0)
            members = [seed]
            vseed = spectrum.vectors[:, seed]
            eseed = spectrum.energies_raw[seed]
            rest = []
            for j in remaining:
                s = int(round((spectrum.energies_raw[j] - eseed) / omega))
                ov = abs(np.vdot(shift_blocks(vseed, n_e, n_f, s),
                                 spectrum.vectors[:, j]))
                if ov > 0.9:
                    members.append(j)
                else:
                    rest.append(j)
            remaining = rest
            classes.append(np.array(members))
    return classes


def match_quasienergies(a, b, n, omega):
    """Greedy circular matching of the n lowest-|eps| values of two spectra.

    Returns the maximum matched circular distance; used to compare engines.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    sel = a[np.argsort(np.abs(a))[:n]]
    pool = list(b[np.argsort(np.abs(b))[:min(b.size, n + 5)]])
    worst = 0.0
    for x in np.sort(sel):
        dists = [circular_distance(x, y, omega) for y in pool]
        j = int(np.argmin(dists))
        worst = max(worst, dists[j])
        pool.pop(j)
    return worst


# ---- perturbative routes ---------------------------------------------------


@dataclasses.dataclass
class PerturbationResult:
    """Second-order quasienergy shifts for a single-cosine drive.

    epsilon2[n] is the shift of state n (identical for every mode member);
    u1[(n, m, sign)] the first-order coefficient on state m, mode k+sign.
    validity is max |V_mn|^2 / |dE^2 - w^2| over pairs, small when the
    perturbative route is trustworthy.
    """

    epsilon2: np.ndarray
    u1: dict
    validity: float
    worst_pair: tuple


def rs_perturbation(energies, v, omega, warn_ratio=0.1):
    """Stationary perturbation series generalized to one-zone Floquet states.

    For H(t) = H0 + V cos(w t): the first-order energy shift vanishes and
    epsilon2_n = sum_m |V_mn|^2/2 * dE_nm / (dE_nm^2 - w^2),
    with dE_nm = E_n - E_m.  Requires |V_mn|^2 << |dE_nm^2 - w^2| for every
    pair; a ratio above ``warn_ratio`` triggers a near-resonance warning.
    """
    energies = np.asarray(energies, dtype=float)
    v = np.asarray(v)
    n = energies.size
    de = energies[:, None] - energies[None, :]
    denom = de**2 - omega**2
    vv = np.abs(v) ** 2
    off = ~np.eye(n, dtype=bool)
    ratios = np.zeros((n, n))
    ratios[off] = vv[off] / np.abs(denom[off])
    worst = np.unravel_index(np.argmax(ratios), ratios.shape)
    validity = float(ratios[worst])
    if validity > warn_ratio:
        warnings.warn(
            f"near-resonant pair {worst}: |V|^2/|dE^2-w^2| = {validity:.3g}"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = 0.5 * vv * de / denom
    terms[~off] = 0.0
    epsilon2 = terms.sum(axis=1)
    u1 = {}
    for nn in range(n):
        for m in range(n):
            if m == nn:
                continue
            for sign in (+1, -1):
                u1[(nn, m, sign)] = 0.5 * v[m, nn] / (de[nn, m] - sign * omega)
    return PerturbationResult(epsilon2=epsilon2, u1=u1, validity=validity,
                              worst_pair=tuple(int(i) for i in worst))


def two_level_submatrix(eps1, eps2, coupling):
    """Almost-degenerate pair: eigensolution of [[e1, c], [c*, e2]]."""
    h = np.array([[eps1, coupling], [np.conj(coupling), eps2]])
    return np.linalg.eigh(h)


def two_level_model(omega0, eta):
    """Driven two-level benchmark: H0 = (w0/2) sigma_z, V = eta sigma_x."""
    h0 = 0.5 * omega0 * np.diag([1.0, -1.0])
    v = eta * np.array([[0.0, 1.0], [1.0, 0.0]])
    return h0, v
