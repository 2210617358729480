"""Trap, drive and species parameters with all derived scales.

Unit policy: everything the numerical modules consume is dimensionless.
Lengths are measured in the ion harmonic-oscillator length l_i, energies in
hbar*omega0, and time in tau = omega0*t.  SI enters and leaves only through
:class:`TrapConfig`.
"""

import dataclasses
import math
import warnings

from scipy import constants as _const

from .errors import ConfigError, UnstableTrapError

HBAR = _const.hbar
E_CHARGE = _const.e
ATOMIC_MASS = _const.physical_constants["atomic mass constant"][0]
BOHR_RADIUS = _const.physical_constants["Bohr radius"][0]


def secular_frequency(a, q, omega):
    """Effective harmonic frequency of the time-averaged ion motion.

    omega0 = (omega/2) * sqrt(a + q**2/2).  Raises UnstableTrapError when
    a + q**2/2 < 0 (no real secular frequency); a + q**2/2 == 0 gives the
    free-particle limit omega0 = 0.
    """
    s = a + 0.5 * q * q
    if s < 0.0:
        raise UnstableTrapError(
            f"a + q^2/2 = {s:g} < 0: no stable secular motion for a={a}, q={q}"
        )
    return 0.5 * omega * math.sqrt(s)


def gamma_factor(a, q):
    """Micromotion coupling prefactor gamma = 1/sqrt(2*(1 + 2a/q^2))."""
    if q == 0.0:
        raise ConfigError("gamma factor undefined for q = 0")
    arg = 2.0 * (1.0 + 2.0 * a / (q * q))
    if arg <= 0.0:
        raise ConfigError(f"1 + 2a/q^2 = {arg / 2.0:g} <= 0: gamma undefined")
    return 1.0 / math.sqrt(arg)


def q_for_secular_frequency(omega0, omega, a=0.0):
    """Invert the secular-frequency relation: q needed to realize omega0."""
    s = (2.0 * omega0 / omega) ** 2 - a
    if s < 0.0:
        raise ConfigError("requested secular frequency unreachable for given a")
    return math.sqrt(2.0 * s)


@dataclasses.dataclass(frozen=True)
class DimensionlessParams:
    """Scale-free parameter bundle consumed by the numerical modules.

    r_i       interaction length R_i in units of l_i
    omega     rf drive frequency in units of omega0
    gamma     micromotion prefactor
    phi_s     short-range phase [rad] (None when the interaction is off)
    delta_d   static-field trap-distance shift in units of l_i
    l_ac      ac-field micromotion length in units of l_i
    """

    r_i: float
    omega: float
    gamma: float
    phi_s: float | None = None
    delta_d: float = 0.0
    l_ac: float = 0.0


@dataclasses.dataclass(frozen=True)
class TrapConfig:
    """Physical trap/species parameters (SI units).

    a, q                  dimensionless trap (Mathieu) parameters
    omega                 rf drive angular frequency [rad/s]
    m_ion, m_atom         masses [kg]
    polarizability_term   grouped interaction constant alpha*e^2 [J m^4];
                          0 switches the atom-ion interaction off
    e_dc, e_ac            stray static / ac field amplitudes [V/m]
    short_range_phase     phi_s [rad], or give scattering_length [m] instead;
                          one determines the other via cot(phi_s) = -b/R_i
    """

    a: float
    q: float
    omega: float
    m_ion: float
    m_atom: float
    polarizability_term: float
    e_dc: float = 0.0
    e_ac: float = 0.0
    short_range_phase: float | None = None
    scattering_length: float | None = None

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ConfigError("omega must be positive")
        if self.m_ion <= 0.0 or self.m_atom <= 0.0:
            raise ConfigError("masses must be positive")
        if self.polarizability_term < 0.0:
            raise ConfigError("polarizability_term must be non-negative")
        # stability first: raises for a + q^2/2 < 0
        w0 = secular_frequency(self.a, self.q, self.omega)
        if w0 >= self.omega:
            raise ConfigError(
                "derived secular frequency is not below the drive frequency"
            )
        # typicality of the operating regime is a warning, not an error
        if abs(self.q) >= 1.0:
            warnings.warn(f"|q| = {abs(self.q):g} >= 1: outside the typical regime")
        if self.q != 0.0 and abs(self.a) >= self.q * self.q:
            warnings.warn(
                f"|a| = {abs(self.a):g} >= q^2 = {self.q**2:g}: outside the "
                "typical regime"
            )
        if self.short_range_phase is not None and self.scattering_length is not None:
            raise ConfigError(
                "give either short_range_phase or scattering_length, not both"
            )
        if self.scattering_length is not None:
            # canonical internal representation is the phase
            if self.polarizability_term == 0.0:
                raise ConfigError(
                    "scattering_length needs a non-zero polarizability_term"
                )
            # cot(phi) = -b/R_i  ->  phi = atan2(R_i, -b), branch in (0, pi)
            phi = math.atan2(self.r_ion, -self.scattering_length)
            object.__setattr__(self, "short_range_phase", phi)
        if self.polarizability_term > 0.0 and self.short_range_phase is None:
            raise ConfigError(
                "an interacting configuration needs a short-range phase or "
                "scattering length"
            )

    # ---- derived scales (SI) -------------------------------------------

    @property
    def omega0(self):
        return secular_frequency(self.a, self.q, self.omega)

    @property
    def gamma(self):
        return gamma_factor(self.a, self.q)

    @property
    def l_ion(self):
        """Ion harmonic-oscillator length sqrt(hbar / (m_i omega0)) [m]."""
        w0 = self.omega0
        if w0 <= 0.0:
            raise ConfigError("l_ion undefined at zero secular frequency")
        return math.sqrt(HBAR / (self.m_ion * w0))

    @property
    def r_ion(self):
        """Interaction length with the ion mass convention [m]."""
        return math.sqrt(self.m_ion * self.polarizability_term) / HBAR

    @property
    def m_reduced(self):
        return self.m_ion * self.m_atom / (self.m_ion + self.m_atom)

    @property
    def l_reduced(self):
        """Oscillator length of the relative mode (reduced mass) [m]."""
        w0 = self.omega0
        if w0 <= 0.0:
            raise ConfigError("l_reduced undefined at zero secular frequency")
        return math.sqrt(HBAR / (self.m_reduced * w0))

    @property
    def r_star(self):
        """Interaction length with the reduced-mass convention [m].

        The relative-mode analysis uses this scale; single-ion distance
        scans use r_ion.
        """
        return math.sqrt(self.m_reduced * self.polarizability_term) / HBAR

    @property
    def delta_d(self):
        """Trap-distance shift e*E_dc/(m_i omega0^2) from a dc field [m]."""
        return E_CHARGE * self.e_dc / (self.m_ion * self.omega0**2)

    @property
    def l_ac(self):
        """Length scale e*E_ac/(m_i omega omega0) of the ac-field drive [m]."""
        return E_CHARGE * self.e_ac / (self.m_ion * self.omega * self.omega0)

    @property
    def omega_ratio(self):
        return self.omega / self.omega0

    @property
    def r_over_l(self):
        return self.r_ion / self.l_ion

    def derived_lengths(self):
        """All derived length scales [m], keyed by name."""
        return {
            "l_i": self.l_ion,
            "R_i": self.r_ion,
            "l_rel": self.l_reduced,
            "l_ac": self.l_ac,
            "delta_d": self.delta_d,
        }

    def characteristic_distance(self):
        """Separation where the interaction rivals the trap, in l_i units.

        d_c = 2 * R_i^(1/3) * l_i^(2/3), i.e. 2 * (R_i/l_i)^(1/3) in l_i.
        """
        return 2.0 * self.r_over_l ** (1.0 / 3.0)

    def dimensionless(self):
        phi = self.short_range_phase if self.polarizability_term > 0.0 else None
        return DimensionlessParams(
            r_i=self.r_over_l if self.polarizability_term > 0.0 else 0.0,
            omega=self.omega_ratio,
            gamma=self.gamma,
            phi_s=phi,
            delta_d=self.delta_d / self.l_ion,
            l_ac=self.l_ac / self.l_ion,
        )

    def to_dict(self):
        """Input fields plus derived quantities, for output metadata blocks."""
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out.update(
            omega0=self.omega0,
            gamma=self.gamma,
            l_ion=self.l_ion,
            r_ion=self.r_ion,
            l_reduced=self.l_reduced,
            r_star=self.r_star,
            delta_d=self.delta_d,
            l_ac_length=self.l_ac,
            omega_ratio=self.omega_ratio,
            characteristic_distance=self.characteristic_distance(),
        )
        return out


def characteristic_distance(cfg):
    return cfg.characteristic_distance()


def ba_rb_reference(omega0_hz=1.0e5, omega_hz=1.27e6, r_i_bohr=8927.0,
                    b_over_ri=0.9, e_dc=0.0, e_ac=0.0):
    """Ba-135 ion / Rb-87 atom reference configuration.

    The drive ratio gives omega/omega0 = 12.7 with a = 0 (gamma = 1/sqrt(2)).
    The interaction constant is fixed so the ion-mass interaction length
    equals ``r_i_bohr`` Bohr radii; the short-range boundary comes from a
    scattering length b = ``b_over_ri`` * R_i.
    """
    m_ion = 134.905688 * ATOMIC_MASS
    m_atom = 86.909180 * ATOMIC_MASS
    omega = 2.0 * math.pi * omega_hz
    omega0 = 2.0 * math.pi * omega0_hz
    q = q_for_secular_frequency(omega0, omega, a=0.0)
    r_i = r_i_bohr * BOHR_RADIUS
    alpha_e2 = (r_i * HBAR) ** 2 / m_ion
    return TrapConfig(
        a=0.0,
        q=q,
        omega=omega,
        m_ion=m_ion,
        m_atom=m_atom,
        polarizability_term=alpha_e2,
        e_dc=e_dc,
        e_ac=e_ac,
        scattering_length=b_over_ri * r_i,
    )


# ---- plain-text config files -------------------------------------------

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(TrapConfig)}


def parse_config_text(text):
    """Parse ``key = value`` lines (# comments allowed) into a dict."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad number {val.strip()!r}") from exc
    return values


def load_config(path, overrides=None):
    """Build a TrapConfig from a key=value file plus optional overrides."""
    with open(path, "r", encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    if overrides:
        for key, val in overrides.items():
            if key not in _CONFIG_FIELDS:
                raise ConfigError(f"unknown override key {key!r}")
            values[key] = float(val)
    missing = {"a", "q", "omega", "m_ion", "m_atom", "polarizability_term"} - set(values)
    if missing:
        raise ConfigError(f"missing required keys: {sorted(missing)}")
    try:
        return TrapConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_text(cfg):
    """Serialize a TrapConfig back to the key=value format."""
    lines = []
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        lines.append(f"{f.name} = {val!r}")
    return "\n".join(lines) + "\n"
