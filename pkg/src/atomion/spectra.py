"""Distance-resolved spectra and micromotion coupling strengths.

Everything here works in the zero-distance eigenbasis: the trap-distance
Hamiltonian is assembled from the stored energies and X / X^2 matrices and
diagonalized per distance.  Level identity across distances follows the
asymptotic (large-separation) naming: the curve that joins the oscillator
ground level is 0, excited trap levels are positive, bound atom-ion levels
are negative, ordered downward.
"""

import dataclasses
import json
import warnings

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .errors import ConfigError, ConsistencyError, ScopeError
from .numerov import momentum_elements

OVERLAP_THRESHOLD = 0.5
RESONANCE_TOL = 1e-3


# ---- operator assembly ---------------------------------------------------


def build_h0(basis, d, field_shift=0.0):
    """Trap Hamiltonian at separation ``d`` in the d=0 basis [hbar*omega0].

    (H0)_nm = [E_n(0) + d^2/2] delta_nm - d <n|X|m>, plus, for a stray dc
    field expressed as the length ``field_shift`` = e*E_dc/(m_i omega0^2 l_i),
    the linear term -field_shift * (X - d).
    """
    if d < 0.0:
        raise ConfigError("trap distance must be non-negative")
    h = np.diag(basis.energies + 0.5 * d * d) - d * basis.x_elems
    if field_shift:
        h = h - field_shift * (basis.x_elems - d * np.eye(basis.size))
    return h


def shifted_x2(basis, d):
    """<n|(X - d)^2|m> from the stored (quadrature) X and X^2 matrices."""
    return (basis.x2_elems - 2.0 * d * basis.x_elems
            + d * d * np.eye(basis.size))


def projected_shifted_x2(basis, d):
    """(X - d)^2 as a polynomial in the basis-projected X matrix.

    Differs from the quadrature route only through states outside the
    basis window; taking the square inside the projection keeps the
    energy-weighted anticommutator identity exact in the truncated model.
    """
    xm = basis.x_elems
    return xm @ xm - 2.0 * d * xm + d * d * np.eye(basis.size)


def micromotion_operators(basis, d, gamma):
    """V1 (cos 2wt) and V2 (sin wt) matrices in the d=0 basis [hbar*omega0].

    V1 = -gamma^2 (X-d)^2.  V2 = -gamma {X-d, P} follows from V1 through
    the commutator identity with H0(0), which fixes (V2)_nm =
    i [E_n(0)-E_m(0)] (V1)_nm / gamma; the matrix is Hermitian with purely
    imaginary entries.  The square in V1 is taken inside the basis
    projection so that identity closes exactly.
    """
    v1 = -gamma * gamma * projected_shifted_x2(basis, d)
    de = basis.energies[:, None] - basis.energies[None, :]
    v2 = 1j * de * v1 / gamma
    return v1, v2


def excess_field_operators(basis, d, gamma, omega_ratio, l_ac):
    """V3 (sin 2wt) and V4 (cos wt) of the ac stray-field drive.

    V3 = gamma*(l_ac/l_i)*(X-d), V4 = -(l_ac/l_i)*P, both in hbar*omega0.
    """
    v3 = gamma * l_ac * (basis.x_elems - d * np.eye(basis.size))
    v4 = -l_ac * momentum_elements(basis)
    return v3, v4


def dc_offset_operators(basis, d_eff, gamma, delta_d):
    """Extra drive terms from re-centering a dc-shifted trap.

    Returns the cos(2wt) matrix -2 gamma^2 delta_d (X - d_eff) and the
    sin(wt) matrix -2 gamma delta_d P.
    """
    c2 = -2.0 * gamma * gamma * delta_d * (basis.x_elems
                                           - d_eff * np.eye(basis.size))
    s1 = -2.0 * gamma * delta_d * momentum_elements(basis)
    return c2, s1


def drive_terms(basis, d, gamma, delta_d=0.0, l_ac=0.0):
    """Full periodic drive as {harmonic: matrix} maps for the engines.

    Keys are multiples of the rf frequency; cos and sin parts are returned
    separately.  ``delta_d`` re-centers the trap (d_eff = d + delta_d) and
    adds the corresponding offset drive.
    """
    d_eff = d + delta_d
    v1, v2 = micromotion_operators(basis, d_eff, gamma)
    cos_terms = {2: v1}
    sin_terms = {1: v2}
    if delta_d:
        c2, s1 = dc_offset_operators(basis, d_eff, gamma, delta_d)
        cos_terms[2] = cos_terms[2] + c2
        sin_terms[1] = sin_terms[1] + s1
    if l_ac:
        v3, v4 = excess_field_operators(basis, d_eff, gamma, 0.0, l_ac)
        sin_terms[2] = v3
        cos_terms[1] = v4
    return cos_terms, sin_terms


# ---- distance scans with level tracking -----------------------------------


@dataclasses.dataclass
class StaticSpectrum:
    """Eigenvalues on a distance grid with continuity-tracked labels.

    energies[j, i] is the i-th (ascending) eigenvalue at distances[j];
    labels[j, i] its asymptotic-level label.  ``crossings`` records steps
    where overlap continuation dropped below threshold.
    """

    distances: np.ndarray
    energies: np.ndarray
    labels: np.ndarray
    crossings: list
    meta: dict = dataclasses.field(default_factory=dict)

    def curve(self, label):
        """(distances, energies) of one labeled level; NaN where absent."""
        e = np.full(self.distances.size, np.nan)
        for j in range(self.distances.size):
            hit = np.nonzero(self.labels[j] == label)[0]
            if hit.size:
                e[j] = self.energies[j, hit[0]]
        return self.distances, e

    @property
    def label_set(self):
        return sorted(set(self.labels.ravel().tolist()))


def classify_levels(basis, d, vecs):
    """Labels from local character at one separation.

    A level is molecular (atom-ion bound pair) when its weight on the
    bound zero-distance basis states exceeds one half; this is immune to
    the poorly converged superpositions near the basis edge.  Molecular
    levels get negative labels ordered downward in energy, trap levels get
    0, 1, 2, ... upward.  Only meaningful at separations comfortably beyond
    the characteristic distance, where hybridization is weak.
    """
    mol_basis = basis.energies < 0.0
    w_mol = np.sum(vecs[mol_basis] ** 2, axis=0)
    labels = np.empty(vecs.shape[1], dtype=np.int64)
    mol = np.nonzero(w_mol > 0.5)[0]
    vib = np.nonzero(w_mol <= 0.5)[0]
    labels[vib] = np.arange(vib.size)  # eigenvalues ascend already
    labels[mol[::-1]] = -1 - np.arange(mol.size)
    return labels


def _match_step(prev_vecs, vecs):
    """Column assignment by overlap; returns (perm, worst_overlap)."""
    overlap = np.abs(prev_vecs.T @ vecs)
    guess = np.argmax(overlap, axis=0)
    if np.unique(guess).size == guess.size:
        perm = guess
    else:
        rows, cols = linear_sum_assignment(-overlap)
        perm = np.empty_like(rows)
        perm[cols] = rows
    worst = float(np.min(overlap[perm, np.arange(vecs.shape[1])]))
    return perm, worst


def scan_spectrum(basis, d_grid, field_shift=0.0):
    """Eigen-decomposition per distance with continuity labeling.

    Tracking runs from the largest separation (where labels are anchored by
    local character) down to the smallest; an overlap below the 0.5
    threshold is recorded as a crossing instead of silently relabeled.
    """
    d_grid = np.asarray(d_grid, dtype=float)
    if d_grid.ndim != 1 or d_grid.size < 2 or np.any(np.diff(d_grid) <= 0):
        raise ConfigError("d_grid must be an ascending 1-D array")
    nd, ns = d_grid.size, basis.size
    energies = np.empty((nd, ns))
    labels = np.empty((nd, ns), dtype=np.int64)
    crossings = []

    prev_vecs = None
    prev_labels = None
    for j in range(nd - 1, -1, -1):
        evals, vecs = np.linalg.eigh(build_h0(basis, d_grid[j], field_shift))
        energies[j] = evals
        if prev_vecs is None:
            labels[j] = classify_levels(basis, d_grid[j], vecs)
        else:
            perm, worst = _match_step(prev_vecs, vecs)
            labels[j] = prev_labels[perm]
            if worst < OVERLAP_THRESHOLD:
                crossings.append({
                    "d": float(d_grid[j]),
                    "worst_overlap": worst,
                })
        prev_vecs, prev_labels = vecs, labels[j]
    return StaticSpectrum(
        distances=d_grid, energies=energies, labels=labels,
        crossings=crossings,
        meta={"field_shift": field_shift, "n_states": ns},
    )


# ---- resonances -----------------------------------------------------------


@dataclasses.dataclass
class Resonance:
    distance: float
    levels: tuple
    order: int
    coupling: float | None = None
    low_confidence: bool = False

    def to_dict(self):
        return {
            "distance": self.distance,
            "levels": list(self.levels),
            "order": self.order,
            "coupling": self.coupling,
            "low_confidence": self.low_confidence,
        }


@dataclasses.dataclass
class ResonanceList:
    records: list
    omega_ratio: float
    meta: dict = dataclasses.field(default_factory=dict)

    def count(self, order):
        return sum(1 for r in self.records if r.order == order)

    def to_json(self):
        return json.dumps(
            {
                "omega_ratio": self.omega_ratio,
                "counts": {"omega": self.count(1), "two_omega": self.count(2)},
                "records": [r.to_dict() for r in self.records],
                "meta": self.meta,
            },
            indent=2, sort_keys=True,
        )


def _curve_gap_roots(d, gap, offset, tol):
    """Root locations of gap(d) = offset on a piecewise-linear curve."""
    roots = []
    good = np.isfinite(gap)
    f = gap - offset
    for j in range(d.size - 1):
        if not (good[j] and good[j + 1]):
            continue
        a, b = f[j], f[j + 1]
        if a == 0.0:
            roots.append((d[j], j == 0))
            continue
        if a * b < 0.0:
            lo, hi = d[j], d[j + 1]
            fa, fb = a, b
            root = brentq(lambda x: fa + (fb - fa) * (x - lo) / (hi - lo),
                          lo, hi, xtol=tol * (hi - lo))
            roots.append((root, j == 0 or j == d.size - 2))
    return roots


def find_resonances(spec, omega_ratio, d_range=None, orders=(1, 2),
                    tol=RESONANCE_TOL, basis=None, gamma=None):
    """Distances where an excited level sits k*omega above the ground level.

    Root-finds E_n(d) - E_0(d) = k * omega_ratio on the tracked curves for
    k in ``orders``.  With ``basis`` (and ``gamma``) supplied, the coupling
    strength |<0|V2|n>| is evaluated at each crossing.
    """
    d, e0 = spec.curve(0)
    sel = np.ones(d.size, dtype=bool)
    if d_range is not None:
        sel = (d >= d_range[0]) & (d <= d_range[1])
    records = []
    pos_labels = [l for l in spec.label_set if l > 0]
    for n in pos_labels:
        _, en = spec.curve(n)
        gap = en - e0
        for order in orders:
            for root, edge in _curve_gap_roots(d[sel], gap[sel],
                                               order * omega_ratio, tol):
                coupling = None
                if basis is not None and gamma is not None:
                    coupling = _coupling_at(spec, basis, gamma, root, n)
                records.append(Resonance(
                    distance=float(root), levels=(0, n), order=order,
                    coupling=coupling, low_confidence=bool(edge),
                ))
    records.sort(key=lambda r: (r.order, r.distance))
    return ResonanceList(records=records, omega_ratio=omega_ratio,
                         meta={"orders": list(orders), "tol": tol})


def _interp_curve(spec, label, d):
    dd, e = spec.curve(label)
    good = np.isfinite(e)
    return float(np.interp(d, dd[good], e[good]))


def _coupling_at(spec, basis, gamma, d, n):
    """|<0|V2|n>| at one distance, states picked by energy proximity."""
    evals, vecs = np.linalg.eigh(build_h0(basis, d))
    try:
        e0 = _interp_curve(spec, 0, d)
        en = _interp_curve(spec, n, d)
    except ValueError:
        return None
    i0 = int(np.argmin(np.abs(evals - e0)))
    i1 = int(np.argmin(np.abs(evals - en)))
    v1, _ = micromotion_operators(basis, d, gamma)
    el1 = float(vecs[:, i0] @ v1 @ vecs[:, i1])
    return abs(evals[i1] - evals[i0]) / gamma * abs(el1)


# ---- coupling strengths ----------------------------------------------------


@dataclasses.dataclass
class CouplingTable:
    """|<0|V_j|n>| against separation, ground level tracked asymptotically.

    v2 carries the energy-difference route; v2_operator the direct operator
    route (both in hbar*omega0).  v3/v4 are present when an ac field is on.
    """

    distances: np.ndarray
    n_values: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v2_operator: np.ndarray
    v3: np.ndarray | None = None
    v4: np.ndarray | None = None
    meta: dict = dataclasses.field(default_factory=dict)

    def max_v2(self, n_min=3):
        """Strongest V2 coupling per distance over levels n >= n_min.

        The oscillator-allowed n <= 2 elements are excluded by default:
        they are O(hbar*omega0) at every separation but never come into
        resonance with the drive.
        """
        cols = self.n_values >= n_min
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmax(self.v2[:, cols], axis=1)


def coupling_strengths(basis, d_grid, gamma, n_max=110, delta_d=0.0,
                       l_ac=0.0, consistency_tol=1e-6):
    """Micromotion coupling strengths of the asymptotic ground level.

    Walks the separation grid from the far side, tracking the ground level
    by overlap, and evaluates |<0|V1|n>| and |<0|V2|n>| (plus the stray-field
    operators when ``l_ac`` is set) for excited levels n = 1..n_max counted
    from the ground level upward.  V2 is computed along two routes; a
    relative disagreement above ``consistency_tol`` raises ConsistencyError.
    """
    d_grid = np.asarray(d_grid, dtype=float)
    if np.any(np.diff(d_grid) <= 0):
        raise ConfigError("d_grid must ascend")
    nd = d_grid.size
    ns = basis.size
    n_max = min(n_max, ns - 1)
    nv = np.arange(1, n_max + 1)
    shape = (nd, nv.size)
    v1_tab = np.full(shape, np.nan)
    v2_tab = np.full(shape, np.nan)
    v2_op_tab = np.full(shape, np.nan)
    want_fields = l_ac != 0.0
    v3_tab = np.full(shape, np.nan) if want_fields else None
    v4_tab = np.full(shape, np.nan) if want_fields else None

    e0_basis = basis.energies
    de_basis = e0_basis[:, None] - e0_basis[None, :]
    p_mat = momentum_elements(basis) / 1j  # real antisymmetric content

    prev_vecs = None
    prev_labels = None
    for j in range(nd - 1, -1, -1):
        d = float(d_grid[j])
        d_eff = d + delta_d
        evals, vecs = np.linalg.eigh(build_h0(basis, d, field_shift=delta_d))
        if prev_vecs is None:
            lab = classify_levels(basis, d_eff if delta_d else d, vecs)
        else:
            perm, _ = _match_step(prev_vecs, vecs)
            lab = prev_labels[perm]
        prev_vecs, prev_labels = vecs, lab

        hit = np.nonzero(lab == 0)[0]
        if hit.size == 0:
            continue
        i0 = int(hit[0])
        c0 = vecs[:, i0]

        v1_mat = -gamma * gamma * projected_shifted_x2(basis, d_eff)
        k_mat = de_basis * v1_mat / gamma  # V2 = i*K, K real
        row1 = c0 @ v1_mat
        row2 = c0 @ k_mat
        if want_fields:
            row3 = gamma * l_ac * (c0 @ basis.x_elems - d_eff * c0)
            row4 = -l_ac * (c0 @ p_mat)

        for col, n in enumerate(nv):
            hit_n = np.nonzero(lab == n)[0]
            if hit_n.size == 0:
                continue
            i_n = int(hit_n[0])
            cn = vecs[:, i_n]
            el1 = float(row1 @ cn)
            v1_tab[j, col] = abs(el1)
            v2_tab[j, col] = abs(evals[i_n] - evals[i0]) / gamma * abs(el1)
            v2_op_tab[j, col] = abs(float(row2 @ cn))
            if want_fields:
                v3_tab[j, col] = abs(float(row3 @ cn))
                v4_tab[j, col] = abs(float(row4 @ cn))

    scale = np.nanmax(v2_op_tab)
    gap = np.nanmax(np.abs(v2_tab - v2_op_tab))
    if scale > 0.0 and gap > consistency_tol * scale:
        raise ConsistencyError(
            f"V2 routes disagree by {gap / scale:.2e} (relative); basis "
            "truncation is unhealthy for the requested levels"
        )
    return CouplingTable(
        distances=d_grid, n_values=nv, v1=v1_tab, v2=v2_tab,
        v2_operator=v2_op_tab, v3=v3_tab, v4=v4_tab,
        meta={
            "gamma": gamma, "delta_d": delta_d, "l_ac": l_ac,
            "route_disagreement": float(gap / scale) if scale else 0.0,
        },
    )


def detect_dmm(table, threshold=0.05, n_min=3, n_cap=25):
    """Onset separation of the collective V2 coupling rise.

    Returns the largest separation where the median of |<0|V2|n>| over the
    resonance-capable levels n in [n_min, n_cap] crosses ``threshold`` from
    below as the separation decreases, or None when it never does.  The
    median keeps one accidentally hybridized level (a bound level running
    quasi-parallel to a trap level) from masking the collective onset.
    """
    d = table.distances
    cols = (table.n_values >= n_min) & (table.n_values <= n_cap)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = np.nanmedian(table.v2[:, cols], axis=1)
    good = np.isfinite(m)
    if not (good[0] and m[0] >= threshold):
        return None
    j = 0
    while j + 1 < m.size and good[j + 1] and m[j + 1] >= threshold:
        j += 1
    if j + 1 >= m.size:
        return None  # above threshold everywhere: no onset inside the grid
    frac = (m[j] - threshold) / (m[j] - m[j + 1])
    return float(d[j] + frac * (d[j + 1] - d[j]))


# ---- field-driven transition and mode decomposition ------------------------


@dataclasses.dataclass
class FieldCoupling:
    omega_f: float        # transition frequency [omega0]
    rabi: float           # Rabi frequency [rad/s]
    x_element: float      # |<0|X|-3>| [l_i]
    levels: tuple


def field_coupling(basis, d, e0_field, cfg, molecular_label=-3):
    """Frequency and Rabi rate of the bound-state transfer at separation d.

    The transition couples the asymptotic ground level to the molecular
    level ``molecular_label``; the dipole-gradient part of the coupling is
    dropped (negligible at the separations where the transfer is driven),
    so Rabi = e*E0*|<0|X|mol>|/hbar.
    """
    evals, vecs = np.linalg.eigh(build_h0(basis, d))
    lab = classify_levels(basis, d, vecs)
    hit0 = np.nonzero(lab == 0)[0]
    hitm = np.nonzero(lab == molecular_label)[0]
    if hit0.size == 0 or hitm.size == 0:
        raise ScopeError(
            f"level {molecular_label} not present in the basis window at d={d}"
        )
    i0, im = int(hit0[0]), int(hitm[0])
    omega_f = float(evals[i0] - evals[im])
    x_el = abs(float(vecs[:, i0] @ basis.x_elems @ vecs[:, im]))
    from .config import E_CHARGE, HBAR
    rabi = E_CHARGE * e0_field * x_el * cfg.l_ion / HBAR
    return FieldCoupling(omega_f=omega_f, rabi=rabi, x_element=x_el,
                         levels=(0, molecular_label))


def cm_couplings(gamma, n_cm, n):
    """Analytic center-of-mass drive couplings from the oscillator ground.

    Returns (quadratic term, anticommutator term) in hbar*omega0:
    M(gamma w0)^2 |<0,0|Xcm^2|n_cm,n>| and gamma w0 |<0,0|{Xcm,Pcm}|n_cm,n>|.
    Both vanish unless the relative mode stays in its ground state.
    """
    if n != 0:
        return 0.0, 0.0
    ladder = (np.sqrt(2.0) if n_cm == 2 else 0.0) + (1.0 if n_cm == 0 else 0.0)
    quad = 0.5 * gamma * gamma * ladder
    anti = 0.5 * gamma * n_cm * ladder
    return quad, anti


def sideband_resonance_distances(spec, omega_ratio, tol=RESONANCE_TOL):
    """Separations with E_n - E_0 = omega - omega0 (one cm quantum exchanged).

    Applies in the equal-trap-frequency regime, where the mode-coupling
    drive needs one center-of-mass quantum; energies are in hbar*omega0, so
    the offset is omega_ratio - 1.
    """
    d, e0 = spec.curve(0)
    out = []
    for n in [l for l in spec.label_set if l > 0]:
        _, en = spec.curve(n)
        for root, edge in _curve_gap_roots(d, en - e0, omega_ratio - 1.0, tol):
            out.append(Resonance(distance=float(root), levels=(0, n), order=1,
                                 low_confidence=bool(edge)))
    out.sort(key=lambda r: r.distance)
    return out
