"""Parameter records, Hilbert-space layout and Hamiltonians.

Layout conventions (frozen, the oracle tests depend on them):

* ring basis index ``b = sum_i bit_i * 2**i`` (little-endian in the site
  index); ``bit_i = 1`` means site ``i`` carries an exciton;
* composite space is ``ring (x) trap`` with the trap factor last, so the
  composite index is ``2 * ring_index + trap_bit`` (``np.kron`` order);
* three-level ring: base-3 digits per site, ``0 = G, 1 = E, 2 = D``,
  little-endian in the site index.

Units: hbar = 1, energies and rates in eV, temperatures in K.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

K_B = 8.617333262e-5  # eV / K
HZ_PER_UEV = 1.52e9  # 1 ueV of rate corresponds to 1.52e9 Hz
DEFAULT_BRIGHT_ENERGY = 1.8  # eV, top of the single-exciton band
DEFAULT_HOPPING = 0.02
DEFAULT_GAMMA_O = 1e-6
MAX_TWO_LEVEL_SITES = 12
MAX_THREE_LEVEL_SITES = 8


class ScenarioKind(str, enum.Enum):
    RATCHETS = "ratchets"
    NO_PHONONS = "np"
    FORCED_DARK = "fd"

    @classmethod
    def parse(cls, value) -> "ScenarioKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "ratchets": cls.RATCHETS, "ratchet": cls.RATCHETS, "r": cls.RATCHETS,
            "np": cls.NO_PHONONS, "no_phonons": cls.NO_PHONONS, "nophonons": cls.NO_PHONONS,
            "fd": cls.FORCED_DARK, "forced_dark": cls.FORCED_DARK, "forceddark": cls.FORCED_DARK,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown scenario {value!r}") from None


def default_site_energy(hopping: float = DEFAULT_HOPPING) -> float:
    """Bare site energy that pins the bright single-exciton level at 1.8 eV."""
    return DEFAULT_BRIGHT_ENERGY - 2.0 * hopping


@dataclass(frozen=True)
class RingSpec:
    n_sites: int = 4
    site_energies: Optional[tuple] = None
    hopping: float = DEFAULT_HOPPING

    def __post_init__(self):
        # n_sites = 1 is a lone emitter (no bonds), used as a thermal reference
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError(f"n_sites must be a positive integer, got {self.n_sites}")
        if self.site_energies is None:
            energies = (default_site_energy(self.hopping),) * self.n_sites
        else:
            energies = tuple(float(e) for e in self.site_energies)
        if len(energies) != self.n_sites:
            raise ValueError(
                f"site_energies has {len(energies)} entries for {self.n_sites} sites")
        if not all(np.isfinite(e) and e > 0 for e in energies):
            raise ValueError("site energies must be finite and positive")
        if not np.isfinite(self.hopping):
            raise ValueError("hopping must be finite")
        object.__setattr__(self, "site_energies", energies)

    @classmethod
    def uniform(cls, n_sites: int = 4, omega: Optional[float] = None,
                hopping: float = DEFAULT_HOPPING) -> "RingSpec":
        if omega is None:
            omega = default_site_energy(hopping)
        return cls(n_sites, (float(omega),) * n_sites, hopping)

    @property
    def is_uniform(self) -> bool:
        e = np.asarray(self.site_energies)
        return bool(np.all(e == e[0]))

    @property
    def omega(self) -> float:
        """Mean site energy (the bare transition energy for a clean ring)."""
        return float(np.mean(self.site_energies))

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites


@dataclass(frozen=True)
class BathSpec:
    gamma_o: float = DEFAULT_GAMMA_O
    T_o: float = 5800.0
    gamma_p: float = 1000.0 * DEFAULT_GAMMA_O
    T_p: float = 300.0

    def __post_init__(self):
        for name in ("gamma_o", "gamma_p"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("T_o", "T_p"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class SingleSite:
    site: int = 0


@dataclass(frozen=True)
class Collective:
    pass


@dataclass(frozen=True)
class TrapSpec:
    """Trap site; ``omega_t=None`` lets the scenario pick its resonance."""

    omega_t: Optional[float] = None
    gamma_t: float = 0.0
    gamma_x: float = 0.1 * DEFAULT_GAMMA_O
    extraction: object = field(default_factory=SingleSite)

    def __post_init__(self):
        if self.omega_t is not None and not self.omega_t >= 0:
            raise ValueError("omega_t must be >= 0")
        if not self.gamma_t >= 0:
            raise ValueError("gamma_t must be >= 0")
        if not self.gamma_x >= 0:
            raise ValueError("gamma_x must be >= 0")
        if not isinstance(self.extraction, (SingleSite, Collective)):
            raise TypeError("extraction must be SingleSite(i) or Collective()")


@dataclass(frozen=True)
class ImperfectionSpec:
    gamma_nr: float = 0.0
    gamma_eea: float = 0.0

    def __post_init__(self):
        if not self.gamma_nr >= 0:
            raise ValueError("gamma_nr must be >= 0")
        if not self.gamma_eea >= 0:
            raise ValueError("gamma_eea must be >= 0")


def default_trap_energy(scenario: ScenarioKind, ring: RingSpec) -> float:
    """Trap resonance: bottom of band 1 (ratchets/FD) or bright state (NP).

    Offsets are taken from the mean site energy so that disordered rings keep
    the clean-ring trap.
    """
    sign = 1.0 if ScenarioKind.parse(scenario) is ScenarioKind.NO_PHONONS else -1.0
    return ring.omega + sign * 2.0 * abs(ring.hopping)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def _check_sites(n_sites: int, limit: int = MAX_TWO_LEVEL_SITES):
    if n_sites > limit:
        raise ValueError(
            f"N={n_sites} exceeds the dense-matrix limit of {limit} sites "
            f"(dimension would be {2 ** n_sites if limit == MAX_TWO_LEVEL_SITES else 3 ** n_sites})")


def _states(n_sites: int) -> np.ndarray:
    return np.arange(2 ** n_sites)


def sigma_minus(n_sites: int, site: int) -> np.ndarray:
    """Lowering operator on ``site`` of a bare ring (no trap factor)."""
    _check_sites(n_sites)
    if not 0 <= site < n_sites:
        raise IndexError(f"site {site} out of range for N={n_sites}")
    dim = 2 ** n_sites
    op = np.zeros((dim, dim))
    src = _states(n_sites)
    src = src[(src >> site) & 1 == 1]
    op[src ^ (1 << site), src] = 1.0
    return op


def sigma_plus(n_sites: int, site: int) -> np.ndarray:
    return sigma_minus(n_sites, site).T.copy()


def site_number(n_sites: int, site: int) -> np.ndarray:
    return np.diag(((_states(n_sites) >> site) & 1).astype(float))


def sigma_z(n_sites: int, site: int) -> np.ndarray:
    """``|e><e| - |g><g|`` on ``site``."""
    return np.diag(2.0 * ((_states(n_sites) >> site) & 1) - 1.0)


def excitation_counts(n_sites: int) -> np.ndarray:
    s = _states(n_sites)
    return np.array([bin(x).count("1") for x in s])


def number_operator(n_sites: int) -> np.ndarray:
    return np.diag(excitation_counts(n_sites).astype(float))


def with_trap(ring_op: np.ndarray) -> np.ndarray:
    """Embed a ring operator into ``ring (x) trap``."""
    return np.kron(ring_op, np.eye(2))


def trap_operator(trap_op: np.ndarray, ring_dim: int) -> np.ndarray:
    """Embed a 2x2 trap operator into ``ring (x) trap``."""
    return np.kron(np.eye(ring_dim), trap_op)


TRAP_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])  # |beta><alpha|, index 1 = alpha
TRAP_RAISE = TRAP_LOWER.T.copy()
TRAP_EXCITED = np.diag([0.0, 1.0])


def build_ring_hamiltonian(spec: RingSpec) -> np.ndarray:
    """Ring Hamiltonian with periodic nearest-neighbour hopping (ring factor only)."""
    n = spec.n_sites
    _check_sites(n)
    dim = 2 ** n
    states = _states(n)
    bits = (states[:, None] >> np.arange(n)[None, :]) & 1
    H = np.diag(bits @ np.asarray(spec.site_energies, dtype=float))
    bonds = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    if n == 2:
        bonds = bonds[:1]  # the two bonds of a 2-ring coincide
    for i, j in bonds:
        # sigma_i^+ sigma_j^- : moves an exciton from j to i
        movable = states[(((states >> j) & 1) == 1) & (((states >> i) & 1) == 0)]
        target = movable ^ (1 << j) ^ (1 << i)
        H[target, movable] += spec.hopping
        H[movable, target] += spec.hopping
    return H.astype(complex)


def build_collective_dipole(spec: RingSpec, direction: str = "raise") -> np.ndarray:
    """``J^+`` or ``J^-`` summed over all ring sites (ring factor only)."""
    n = spec.n_sites
    _check_sites(n)
    J = sum(sigma_minus(n, i) for i in range(n))
    if direction in ("raise", "+", "plus"):
        return J.T.copy()
    if direction in ("lower", "-", "minus"):
        return J
    raise ValueError(f"direction must be 'raise' or 'lower', got {direction!r}")


def build_trap_hamiltonian(spec: TrapSpec) -> np.ndarray:
    """``omega_t sigma_t^+ sigma_t^-`` on the trap factor (2x2)."""
    if spec.omega_t is None:
        raise ValueError("trap energy unresolved; use resolve_trap() first")
    return spec.omega_t * TRAP_EXCITED.astype(complex)


def resolve_trap(trap: TrapSpec, scenario: ScenarioKind, ring: RingSpec) -> TrapSpec:
    if trap.omega_t is not None:
        return trap
    return replace(trap, omega_t=default_trap_energy(scenario, ring))


def composite_hamiltonian(ring: RingSpec, trap: TrapSpec) -> np.ndarray:
    H_s = build_ring_hamiltonian(ring)
    return with_trap(H_s) + trap_operator(build_trap_hamiltonian(trap), H_s.shape[0])


# ---------------------------------------------------------------------------
# Three-level (G, E, D) ring for the annihilation analysis
# ---------------------------------------------------------------------------

def _digits3(n_sites: int) -> np.ndarray:
    states = np.arange(3 ** n_sites)
    return (states[:, None] // 3 ** np.arange(n_sites)[None, :]) % 3


def three_level_counts(n_sites: int) -> np.ndarray:
    """Weighted excitation count per basis state (``D`` counts as two)."""
    _check_sites(n_sites, MAX_THREE_LEVEL_SITES)
    return _digits3(n_sites).sum(axis=1)


def three_level_ladder(n_sites: int, site: int, upper: bool) -> np.ndarray:
    """``sigma_i^-`` (``E -> G``) when ``upper`` is False, ``eta_i^-`` (``D -> E``) otherwise."""
    _check_sites(n_sites, MAX_THREE_LEVEL_SITES)
    digits = _digits3(n_sites)
    src_level = 2 if upper else 1
    src = np.nonzero(digits[:, site] == src_level)[0]
    dim = 3 ** n_sites
    op = np.zeros((dim, dim))
    op[src - 3 ** site, src] = 1.0
    return op


def build_three_level_hamiltonian(spec: RingSpec) -> np.ndarray:
    """Ring with a doubly excited level ``D`` per site, energy ``2 eps_i``.

    Hopping ``S`` moves single excitations ``E_i G_{i+1} <-> G_i E_{i+1}`` and
    fuses neighbouring pairs onto either site, ``E_i E_{i+1} <-> G_i D_{i+1}``
    and ``E_i E_{i+1} <-> D_i G_{i+1}``.
    """
    n = spec.n_sites
    _check_sites(n, MAX_THREE_LEVEL_SITES)
    digits = _digits3(n)
    eps = np.asarray(spec.site_energies, dtype=float)
    H = np.diag(digits @ eps).astype(complex)  # E counts eps, D counts 2 eps
    bonds = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    if n == 2:
        bonds = bonds[:1]
    for i, j in bonds:
        sm = [three_level_ladder(n, k, False) for k in (i, j)]
        em = [three_level_ladder(n, k, True) for k in (i, j)]
        # sigma_i^+ sigma_j^- + sigma_i^+ eta_j^- + eta_i^+ sigma_j^-
        hop = sm[0].T @ sm[1] + sm[0].T @ em[1] + em[0].T @ sm[1]
        H += spec.hopping * (hop + hop.T)
    return H


def three_level_number_operator(n_sites: int) -> np.ndarray:
    return np.diag(three_level_counts(n_sites).astype(float))


def d_character_projector(n_sites: int) -> np.ndarray:
    """Diagonal mask of three-level basis states holding at least one ``D``."""
    return np.any(_digits3(n_sites) == 2, axis=1)


def is_hermitian(op: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) < atol)


def site_energies_from(values: Sequence[float]) -> tuple:
    return tuple(float(v) for v in values)
