"""Unperturbed 1-D eigenproblem for the trapped ion next to a fixed atom.

Solves, in dimensionless units (lengths in l_i, energies in hbar*omega0),

    -1/2 psi'' + [x^2/2 - (r_i^2/2)/x^4] psi = E psi     on (r_min, x_max)

with Dirichlet walls at both ends.  The short-range physics enters only
through the inner boundary r_min, chosen as a node of the known inner form
x*sin(r_i/x + phi_s).

The working coordinate is u(x) = -A/x + B*x, which makes the local phase
advance per grid step roughly uniform: near the origin the -1/x^4 well
oscillates with wavelength ~ x^2/r_i and the 1/x branch of the map absorbs
it, while the linear branch resolves the trap region.  The wave equation is
solved in u with the standard amplitude substitution psi = sqrt(dx/du) * chi,
which adds the closed-form correction Q(u) = 3AB / (x^4 * u'(x)^4) to the
effective potential and leaves no first-derivative term.

Eigenvalues come from node-count bisection on a renormalized shooting
recursion (ratio variables, no overflow in deep classically-forbidden
regions); eigenfunctions from a two-sided sweep matched at the outermost
classical turning point.
"""

import dataclasses
import hashlib
import json
import math
import warnings
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import ConfigError, NumericalError

DEFAULT_ENERGY_WINDOW = (-5000.0, 300.0)
DEFAULT_PHASE_PER_STEP = 0.0125
DEFAULT_X_MAX = 15.0


class RMinNode(NamedTuple):
    value: float
    node_index: int


def find_r_min(phi_s, r_i, target=None, a0=None):
    """Inner boundary: largest node of sin(r_i/x + phi_s) below ``target``.

    Nodes sit at x_k = r_i / (k*pi - phi_s).  The default target 0.008*r_i
    places the boundary deep inside the region where the inner wave form is
    valid while keeping the grid affordable.  ``a0`` (Bohr radius in l_i
    units), when given, guards the lower validity limit.
    """
    if r_i <= 0.0:
        raise ConfigError("find_r_min needs a positive interaction length")
    if target is None:
        target = 0.008 * r_i
    if not 0.0 < target < 0.5 * r_i:
        raise ConfigError("r_min target must lie in (0, 0.5*r_i)")
    k = math.ceil((r_i / target + phi_s) / math.pi)
    x = r_i / (k * math.pi - phi_s)
    if x > target:  # guard against ceil landing exactly on the target
        k += 1
        x = r_i / (k * math.pi - phi_s)
    if not x < 0.5 * r_i:
        raise ConfigError("no boundary node found below 0.5*r_i")
    if a0 is not None and not x > 10.0 * a0:
        raise ConfigError(
            f"boundary node {x:g} is not well above the short-range scale"
        )
    return RMinNode(x, k)


# ---- graded grid ---------------------------------------------------------


@dataclasses.dataclass
class RadialGrid:
    """Strictly increasing position grid with quadrature weights.

    x        grid points [l_i]
    u        uniform working coordinate, u = -A/x + B*x
    h        spacing in u
    gprime   dx/du at the nodes
    weights  trapezoid weights for integrals dx (= h * gprime, halved at ends)
    """

    x: np.ndarray
    u: np.ndarray
    h: float
    gprime: np.ndarray
    weights: np.ndarray
    inverse_strength: float
    linear_strength: float
    phase_per_step: float
    full_line: bool = False

    def __post_init__(self):
        if not np.all(np.diff(self.x) > 0.0):
            raise ConfigError("grid points must be strictly increasing")

    @property
    def r_min(self):
        return float(self.x[0])

    @property
    def x_max(self):
        return float(self.x[-1])

    @property
    def size(self):
        return self.x.size

    def correction(self):
        """Amplitude-substitution term Q(u) added to the wave equation."""
        a, b = self.inverse_strength, self.linear_strength
        if a == 0.0:
            return np.zeros_like(self.x)
        uprime = a / self.x**2 + b
        return 3.0 * a * b / (self.x**4 * uprime**4)

    def descriptor(self):
        return {
            "r_min": self.r_min,
            "x_max": self.x_max,
            "points": int(self.size),
            "inverse_strength": self.inverse_strength,
            "linear_strength": self.linear_strength,
            "phase_per_step": self.phase_per_step,
            "full_line": self.full_line,
        }


def _map_x(u, a, b):
    if a == 0.0:
        return u / b
    return (u + np.sqrt(u * u + 4.0 * a * b)) / (2.0 * b)


def _map_u(x, a, b):
    return -a / x + b * x


def _trapezoid_weights(h, gprime):
    w = h * gprime.copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def graded_grid(r_min, x_max, r_i, e_cap, phase_per_step=DEFAULT_PHASE_PER_STEP,
                inverse_strength=None):
    """Half-line grid on [r_min, x_max] adapted to the -1/x^4 well."""
    if r_min <= 0.0 or x_max <= r_min:
        raise ConfigError("need 0 < r_min < x_max")
    a = r_i if inverse_strength is None else float(inverse_strength)
    b = math.sqrt(2.0 * max(e_cap, 1.0))
    u_lo = _map_u(r_min, a, b)
    u_hi = _map_u(x_max, a, b)
    # probe the local wavenumber in u to fix the step
    xs = np.geomspace(r_min, x_max, 4001)
    v = 0.5 * xs**2 - 0.5 * r_i**2 / xs**4
    k_x = np.sqrt(np.maximum(2.0 * (max(e_cap, 1.0) - v), 0.0))
    k_u = k_x / (a / xs**2 + b)
    h = phase_per_step / max(k_u.max(), 1e-12)
    n = int(math.ceil((u_hi - u_lo) / h)) + 1
    u = np.linspace(u_lo, u_hi, n)
    h = u[1] - u[0]
    x = _map_x(u, a, b)
    gprime = 1.0 / (a / x**2 + b)
    return RadialGrid(x, u, h, gprime, _trapezoid_weights(h, gprime), a, b,
                      phase_per_step)


def symmetric_grid(x_max, e_cap, phase_per_step=DEFAULT_PHASE_PER_STEP):
    """Uniform full-line grid on [-x_max, x_max] (interaction off)."""
    b = math.sqrt(2.0 * max(e_cap, 1.0))
    h = phase_per_step  # k_u <= 1 by construction of b
    n = int(math.ceil(2.0 * b * x_max / h)) + 1
    u = np.linspace(-b * x_max, b * x_max, n)
    h = u[1] - u[0]
    x = u / b
    gprime = np.full_like(x, 1.0 / b)
    return RadialGrid(x, u, h, gprime, _trapezoid_weights(h, gprime), 0.0, b,
                      phase_per_step, full_line=True)


def potential(x, r_i):
    """Trap plus induced-dipole attraction at zero trap distance."""
    v = 0.5 * x * x
    if r_i > 0.0:
        v = v - 0.5 * r_i * r_i / x**4
    return v


def _effective_arrays(grid, r_i, extra_potential=None):
    """F(E) = f0 - b*E for the transformed equation chi'' = F chi."""
    v = potential(grid.x, r_i)
    if extra_potential is not None:
        v = v + extra_potential(grid.x)
    gsq = grid.gprime**2
    f0 = 2.0 * gsq * v + grid.correction()
    return f0, 2.0 * gsq


# ---- shooting kernels ----------------------------------------------------


@njit(cache=True)
def _count_nodes(f0, b, h, energy):
    """Eigenvalues below ``energy`` via sign changes of the shooting ratio."""
    n = f0.shape[0]
    t = h * h / 12.0
    count = 0
    f = f0[1] - b[1] * energy
    r = (2.0 + 10.0 * t * f) / (1.0 - t * f)
    if r < 0.0:
        count += 1
    for j in range(2, n - 1):
        f = f0[j] - b[j] * energy
        u = (2.0 + 10.0 * t * f) / (1.0 - t * f)
        if r == 0.0:
            r = 1e-300
        r = u - 1.0 / r
        if r < 0.0:
            count += 1
    return count


@njit(cache=True)
def _eigenfunction(f0, b, h, energy):
    """Two-sided renormalized sweep, matched at the outer turning point."""
    n = f0.shape[0]
    t = h * h / 12.0
    u_arr = np.empty(n)
    f_arr = np.empty(n)
    for j in range(n):
        f_arr[j] = f0[j] - b[j] * energy
        u_arr[j] = (2.0 + 10.0 * t * f_arr[j]) / (1.0 - t * f_arr[j])
    # outermost classically allowed point
    m = -1
    for j in range(n - 3, 1, -1):
        if f_arr[j] < 0.0:
            m = j
            break
    if m < 2:
        m = n // 2
    # outward ratios r[j] = w[j+1]/w[j], j = 1..m-1
    r = np.empty(n)
    r[1] = u_arr[1]
    for j in range(2, m):
        prev = r[j - 1]
        if prev == 0.0:
            prev = 1e-300
        r[j] = u_arr[j] - 1.0 / prev
    w = np.zeros(n)
    w[m] = 1.0
    for j in range(m, 1, -1):
        rj = r[j - 1]
        if rj == 0.0:
            rj = 1e-300
        w[j - 1] = w[j] / rj
        if abs(w[j - 1]) > 1e280:  # rescale left tail to avoid overflow
            scale = 1.0 / abs(w[j - 1])
            for i in range(j - 1, m + 1):
                w[i] *= scale
    # inward ratios l[j] = w[j]/w[j+1], from the right Dirichlet wall
    inv_l = 0.0  # 1/l at j = n-2
    l = np.empty(n)
    l[n - 2] = 1e300
    for j in range(n - 2, m, -1):
        lj = u_arr[j] - inv_l
        l[j - 1] = lj
        if lj == 0.0:
            lj = 1e-300
        inv_l = 1.0 / lj
    scale = w[m]
    for j in range(m, n - 1):
        lj = l[j]
        if lj == 0.0:
            lj = 1e-300
        if abs(lj) == np.inf:
            scale = 0.0
        else:
            scale = scale / lj
        w[j + 1] = scale
    # back to chi
    chi = np.empty(n)
    for j in range(n):
        chi[j] = w[j] / (1.0 - t * f_arr[j])
    chi[0] = 0.0
    chi[n - 1] = 0.0
    return chi


@njit(cache=True)
def _bisect_levels(f0, b, h, e_lo, e_hi, first_index, n_levels, iters):
    """Lockstep bisection for eigenvalues ``first_index .. +n_levels-1``."""
    out = np.empty(n_levels)
    for i in range(n_levels):
        target = first_index + i + 1  # want count(E) >= target
        lo = e_lo
        hi = e_hi
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if _count_nodes(f0, b, h, mid) >= target:
                hi = mid
            else:
                lo = mid
        out[i] = 0.5 * (lo + hi)
    return out


# ---- basis ---------------------------------------------------------------


@dataclasses.dataclass
class UnperturbedBasis:
    """Eigenpairs of the zero-distance Hamiltonian plus X, X^2 matrices.

    energies     ascending eigenvalues [hbar*omega0]
    states       normalized wavefunctions on the grid (rows), or None for
                 analytic bases
    x_elems      <n|X|m>  [l_i]
    x2_elems     <n|X^2|m>  [l_i^2]
    node_counts  interior node count of each state (global quantum number)
    """

    energies: np.ndarray
    x_elems: np.ndarray
    x2_elems: np.ndarray
    node_counts: np.ndarray
    states: np.ndarray | None = None
    grid: RadialGrid | None = None
    meta: dict = dataclasses.field(default_factory=dict)

    @property
    def size(self):
        return self.energies.size

    def truncate(self, n):
        """Keep the ``n`` lowest states (reduced-size engine runs)."""
        if n > self.size:
            raise ConfigError(f"cannot truncate to {n} > {self.size} states")
        return UnperturbedBasis(
            energies=self.energies[:n].copy(),
            x_elems=self.x_elems[:n, :n].copy(),
            x2_elems=self.x2_elems[:n, :n].copy(),
            node_counts=self.node_counts[:n].copy(),
            states=None if self.states is None else self.states[:n],
            grid=self.grid,
            meta=dict(self.meta, truncated_to=n),
        )

    def orthonormality_residual(self):
        if self.states is None or self.grid is None:
            return 0.0
        overlaps = (self.states * self.grid.weights) @ self.states.T
        return float(np.max(np.abs(overlaps - np.eye(self.size))))


def matrix_elements(states, grid, operator="x"):
    """Quadrature matrix of X or X^2 for states sharing one grid."""
    states = np.asarray(states)
    if states.ndim != 2 or states.shape[1] != grid.size:
        raise ConfigError("states do not match the grid")
    if operator == "x":
        fx = grid.x
    elif operator in ("x2", "xx"):
        fx = grid.x**2
    else:
        raise ConfigError(f"unknown operator {operator!r}")
    m = (states * (grid.weights * fx)) @ states.T
    return 0.5 * (m + m.T)


def solve_unperturbed(params, grid=None, energy_window=DEFAULT_ENERGY_WINDOW,
                      n_states=None, extra_potential=None,
                      phase_per_step=DEFAULT_PHASE_PER_STEP, x_max=None,
                      r_min_target=None):
    """All eigenpairs with E in ``energy_window``, plus X and X^2 matrices.

    ``params`` is a DimensionlessParams (or any object with r_i / phi_s
    attributes).  With r_i == 0 the interaction is off and the problem is the
    plain oscillator on the full line.
    """
    r_i = params.r_i
    e_lo, e_hi = energy_window
    if not e_hi > e_lo:
        raise ConfigError("empty energy window")
    if grid is None:
        cap = max(e_hi, 1.0)
        top = max(DEFAULT_X_MAX if x_max is None else x_max,
                  math.sqrt(2.0 * cap) + 4.0)
        if r_i > 0.0:
            r_min = find_r_min(params.phi_s, r_i, target=r_min_target).value
            grid = graded_grid(r_min, top, r_i, cap, phase_per_step)
        else:
            grid = symmetric_grid(top, cap, phase_per_step)
    f0, b = _effective_arrays(grid, r_i, extra_potential)
    peak = np.max(np.abs(f0 - b * e_lo)) * grid.h**2 / 12.0
    if peak >= 1.0:
        raise NumericalError(
            f"grid too coarse: |h^2 F/12| reaches {peak:g}; refine the grid"
        )

    n_below = _count_nodes(f0, b, grid.h, e_lo)
    n_total = _count_nodes(f0, b, grid.h, e_hi) - n_below
    if n_total <= 0:
        raise NumericalError("energy window contains no states")
    if n_states is not None and n_total > n_states:
        warnings.warn(
            f"window holds {n_total} states; truncating to n_states={n_states}"
        )
        n_total = n_states

    iters = max(60, int(math.ceil(math.log2((e_hi - e_lo) / 1e-11))))
    energies = _bisect_levels(f0, b, grid.h, e_lo, e_hi, n_below, n_total, iters)

    states = np.empty((n_total, grid.size))
    nodes = np.empty(n_total, dtype=np.int64)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for i, e in enumerate(energies):
            chi = _eigenfunction(f0, b, grid.h, e)
            psi = np.sqrt(grid.gprime) * chi
            norm = math.sqrt(float(np.sum(grid.weights * psi * psi)))
            if not norm > 0.0:
                raise NumericalError(f"state {i} has zero norm; shooting failed")
            psi /= norm
            # deterministic sign: outermost lobe positive (Hermite convention)
            big = np.nonzero(np.abs(psi) > 0.01 * np.max(np.abs(psi)))[0]
            if psi[big[-1]] < 0.0:
                psi = -psi
            states[i] = psi
            sgn = np.sign(psi[1:-1])
            sgn = sgn[sgn != 0.0]
            nodes[i] = int(np.count_nonzero(sgn[1:] != sgn[:-1]))

    if np.any(np.diff(energies) <= 0.0):
        raise NumericalError("eigenvalues not strictly ascending")

    tail = np.max(np.abs(states[:, -max(2, grid.size // 200):]), axis=1)
    clipped = np.nonzero(tail > 1e-8 * np.max(np.abs(states), axis=1))[0]
    if clipped.size:
        warnings.warn(
            f"{clipped.size} state(s) reach the outer wall above the 1e-8 "
            "tail level; increase x_max if they matter"
        )

    basis = UnperturbedBasis(
        energies=energies,
        x_elems=matrix_elements(states, grid, "x"),
        x2_elems=matrix_elements(states, grid, "x2"),
        node_counts=nodes,
        states=states,
        grid=grid,
        meta={
            "r_i": r_i,
            "phi_s": getattr(params, "phi_s", None),
            "energy_window": [e_lo, e_hi],
            "states_below_window": int(n_below),
            "grid": grid.descriptor(),
        },
    )
    basis.meta["orthonormality_residual"] = basis.orthonormality_residual()
    return basis


def basis_for(cfg, energy_window=DEFAULT_ENERGY_WINDOW, n_states=None,
              phase_per_step=DEFAULT_PHASE_PER_STEP, x_max=None):
    """Convenience wrapper accepting a TrapConfig."""
    params = cfg.dimensionless() if hasattr(cfg, "dimensionless") else cfg
    return solve_unperturbed(params, energy_window=energy_window,
                             n_states=n_states, phase_per_step=phase_per_step,
                             x_max=x_max)


# ---- verification routes -------------------------------------------------


def finite_difference_energies(grid, r_i, energy_window, extra_potential=None):
    """Independent oracle: dense second-order FD diagonalization.

    Discretizes the same transformed equation with the plain three-point
    Laplacian and solves the symmetric tridiagonal eigenproblem with LAPACK
    bisection, sharing nothing with the shooting recursion.
    """
    from scipy.linalg import eigh_tridiagonal

    f0, b = _effective_arrays(grid, r_i, extra_potential)
    h2 = grid.h**2
    fi, bi = f0[1:-1], b[1:-1]
    diag = (2.0 / h2 + fi) / bi
    off = -1.0 / (h2 * np.sqrt(bi[:-1] * bi[1:]))
    vals = eigh_tridiagonal(diag, off, select="v", select_range=energy_window,
                            eigvals_only=True)
    return vals


def momentum_elements(basis):
    """<n|P|m> from the commutator identity with H0 (exact for eigenstates).

    p_nm = i * (E_n - E_m) * x_nm in units hbar/l_i.
    """
    de = basis.energies[:, None] - basis.energies[None, :]
    return 1j * de * basis.x_elems


def grid_momentum_elements(basis):
    """<n|P|m> from fourth-order grid derivatives (verification route)."""
    if basis.states is None or basis.grid is None:
        raise ConfigError("grid momentum route needs grid wavefunctions")
    g = basis.grid
    dpsi_du = np.empty_like(basis.states)
    s = basis.states
    h = g.h
    dpsi_du[:, 2:-2] = (-s[:, 4:] + 8.0 * s[:, 3:-1] - 8.0 * s[:, 1:-3]
                        + s[:, :-4]) / (12.0 * h)
    dpsi_du[:, :2] = (s[:, 1:3] - s[:, 0:2]) / h
    dpsi_du[:, -2:] = (s[:, -2:] - s[:, -3:-1]) / h
    dpsi_dx = dpsi_du / g.gprime
    raw = (s * g.weights) @ dpsi_dx.T
    return -1j * 0.5 * (raw - raw.T)


# ---- analytic harmonic basis --------------------------------------------


def harmonic_basis(n_states):
    """Exact oscillator basis (interaction off): the alpha = 0 limit."""
    n = np.arange(n_states)
    energies = n + 0.5
    x = np.zeros((n_states, n_states))
    idx = np.arange(n_states - 1)
    x[idx, idx + 1] = np.sqrt((idx + 1) / 2.0)
    x[idx + 1, idx] = x[idx, idx + 1]
    x2 = np.zeros((n_states, n_states))
    x2[n, n] = n + 0.5
    idx = np.arange(n_states - 2)
    x2[idx, idx + 2] = 0.5 * np.sqrt((idx + 1.0) * (idx + 2.0))
    x2[idx + 2, idx] = x2[idx, idx + 2]
    return UnperturbedBasis(
        energies=energies.astype(float),
        x_elems=x,
        x2_elems=x2,
        node_counts=n.copy(),
        meta={"analytic": "harmonic-oscillator"},
    )


# ---- disk cache ----------------------------------------------------------


def basis_cache_key(cfg, energy_window, phase_per_step, x_max=None):
    payload = json.dumps(
        {
            "config": {k: v for k, v in sorted(cfg.to_dict().items())
                       if isinstance(v, (int, float)) or v is None},
            "window": list(energy_window),
            "phase_per_step": phase_per_step,
            "x_max": x_max,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_basis(basis, path):
    if basis.states is None or basis.grid is None:
        raise ConfigError("only grid-backed bases can be cached")
    g = basis.grid
    np.savez_compressed(
        path,
        energies=basis.energies,
        x_elems=basis.x_elems,
        x2_elems=basis.x2_elems,
        node_counts=basis.node_counts,
        states=basis.states,
        grid_x=g.x,
        grid_u=g.u,
        grid_gprime=g.gprime,
        grid_weights=g.weights,
        grid_scalars=np.array([g.h, g.inverse_strength, g.linear_strength,
                               g.phase_per_step, float(g.full_line)]),
        meta=np.frombuffer(json.dumps(basis.meta).encode(), dtype=np.uint8),
    )


def load_basis(path):
    with np.load(path) as data:
        h, a, b, pps, full = data["grid_scalars"]
        grid = RadialGrid(
            x=data["grid_x"], u=data["grid_u"], h=float(h),
            gprime=data["grid_gprime"], weights=data["grid_weights"],
            inverse_strength=float(a), linear_strength=float(b),
            phase_per_step=float(pps), full_line=bool(full),
        )
        meta = json.loads(bytes(data["meta"]).decode())
        return UnperturbedBasis(
            energies=data["energies"], x_elems=data["x_elems"],
            x2_elems=data["x2_elems"], node_counts=data["node_counts"],
            states=data["states"], grid=grid, meta=meta,
        )
