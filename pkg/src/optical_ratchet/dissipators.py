"""Superoperators: Bloch-Redfield baths and Lindblad channels.

All superoperators act on column-stacked density matrices,
``vec(rho)[i + j * d] = rho[i, j]``, expressed in the composite eigenbasis of
``H_s + H_t`` (ring eigenvectors (x) trap basis).  Working in the eigenbasis
keeps the coherent part diagonal, so the large ``~ omega`` entries of
``-i[H, .]`` only meet the tiny inter-band coherences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import model
from .model import (K_B, BathSpec, Collective, ImperfectionSpec, RingSpec,
                    ScenarioKind, SingleSite, TrapSpec)
from .spectral import (BRIGHT, RATCHET, EigenSystem, analytic_spectrum,
                       classify_states, momentum_state, numeric_diagonalize)

ZERO_FREQUENCY = 1e-10  # eV; transitions closer than this count as degenerate


def bose_einstein(omega, T):
    """Thermal occupancy ``1 / (exp(omega / k_B T) - 1)``; zero at ``T = 0``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("bose_einstein needs omega > 0")
    if T < 0:
        raise ValueError("temperature must be >= 0")
    if T == 0:
        return np.zeros_like(omega)[()]
    with np.errstate(over="ignore"):  # exp overflow means zero occupancy
        return (1.0 / np.expm1(omega / (K_B * T)))[()]


@dataclass(frozen=True)
class PowerSpectrum:
    """Flat bath spectrum weighted by Bose-Einstein occupancy.

    ``omega > 0`` is emission (system loses energy), ``omega < 0`` absorption.
    """

    gamma: float
    T: float

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        out = np.zeros_like(w)
        if self.gamma == 0:
            return out[()]
        pos = w > ZERO_FREQUENCY
        neg = w < -ZERO_FREQUENCY
        if np.any(pos):
            out[pos] = self.gamma * (bose_einstein(w[pos], self.T) + 1.0)
        if np.any(neg):
            out[neg] = self.gamma * bose_einstein(-w[neg], self.T)
        return out[()]


@dataclass(frozen=True)
class ZeroFrequencyProbe:
    """Spectral weight ``gamma`` on degenerate transitions only.

    Redfield terms are linear in the spectrum, so a channel built with this
    probe is the derivative of that channel with respect to ``S(0)``.
    """

    gamma: float

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        return np.where(np.abs(w) <= ZERO_FREQUENCY, self.gamma, 0.0)[()]


@dataclass
class Superoperator:
    matrix: np.ndarray
    source: str = ""

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = rho.shape[0]
        return (self.matrix @ rho.reshape(-1, order="F")).reshape(d, d, order="F")

    def __add__(self, other: "Superoperator") -> "Superoperator":
        src = "+".join(s for s in (self.source, other.source) if s)
        return Superoperator(self.matrix + other.matrix, src)

    def scaled(self, factor: float) -> "Superoperator":
        return Superoperator(factor * self.matrix, self.source)


def zero_superoperator(d: int, source: str = "") -> Superoperator:
    return Superoperator(np.zeros((d * d, d * d), dtype=complex), source)


# ---------------------------------------------------------------------------
# vectorisation helpers
# ---------------------------------------------------------------------------

def vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return v.reshape(d, d, order="F")


def spre(A: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(A.shape[0]), A)


def spost(B: np.ndarray) -> np.ndarray:
    return np.kron(B.T, np.eye(B.shape[0]))


def sprepost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of ``rho -> A rho B``."""
    return np.kron(B.T, A)


def commutator_superop(H: np.ndarray) -> np.ndarray:
    """``-i [H, .]``."""
    return -1j * (spre(H) - spost(H))


def lindblad_superop(A: np.ndarray, rate: float, source: str = "lindblad") -> Superoperator:
    """``rate * (A rho A^+ - {A^+ A, rho} / 2)``."""
    d = A.shape[0]
    if rate < 0:
        raise ValueError("Lindblad rate must be >= 0")
    if rate == 0:
        return zero_superoperator(d, source)
    Ad = A.conj().T
    AdA = Ad @ A
    L = sprepost(A, Ad) - 0.5 * spre(AdA) - 0.5 * spost(AdA)
    return Superoperator(rate * L, source)


# ---------------------------------------------------------------------------
# composite eigenbasis
# ---------------------------------------------------------------------------

@dataclass
class RedfieldContext:
    """Ring eigensystem lifted to ``ring (x) trap``.

    ``vectors`` maps composite eigenbasis coordinates to the site basis;
    ``energies[m]`` is the composite eigenvalue, ``omega_ab = E_a - E_b``.
    With ``omega_t=None`` the trap factor is left out entirely (trapless
    runs, where a decoupled trap would make the steady state ambiguous).
    """

    ring: RingSpec
    eigensystem: EigenSystem
    omega_t: Optional[float]
    energies: np.ndarray = field(init=False)
    vectors: np.ndarray = field(init=False)
    ring_index: np.ndarray = field(init=False)
    trap_index: np.ndarray = field(init=False)

    def __post_init__(self):
        es = self.eigensystem
        trap_levels = np.array([0.0]) if self.omega_t is None else np.array([0.0, self.omega_t])
        k = len(trap_levels)
        self.energies = (es.energies[:, None] + trap_levels[None, :]).ravel()
        self.vectors = np.kron(es.vectors, np.eye(k))
        self.ring_index = np.repeat(np.arange(es.dim), k)
        self.trap_index = np.tile(np.arange(k), es.dim)

    @property
    def has_trap(self) -> bool:
        return self.omega_t is not None

    @property
    def trap_dim(self) -> int:
        return 2 if self.has_trap else 1

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def total_excitations(self) -> np.ndarray:
        return self.eigensystem.bands[self.ring_index] + self.trap_index

    @property
    def frequencies(self) -> np.ndarray:
        return self.energies[:, None] - self.energies[None, :]

    def to_eigenbasis(self, op_site: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ op_site @ self.vectors

    def to_site_basis(self, op_eig: np.ndarray) -> np.ndarray:
        return self.vectors @ op_eig @ self.vectors.conj().T

    def lift_ring_eig(self, op_ring_eig: np.ndarray) -> np.ndarray:
        """Ring operator already in the ring eigenbasis -> composite eigenbasis."""
        return np.kron(op_ring_eig, np.eye(self.trap_dim))

    def ring_site_to_eig(self, op_ring_site: np.ndarray) -> np.ndarray:
        return self.lift_ring_eig(self.eigensystem.to_eigenbasis(op_ring_site))

    def hamiltonian_superop(self) -> Superoperator:
        """``-i[H_s + H_t, .]`` (diagonal in this basis)."""
        e = self.energies
        diag = -1j * (e[:, None] - e[None, :]).reshape(-1, order="F")
        return Superoperator(np.diag(diag), "hamiltonian")


def clean_ring_eigensystem(ring: RingSpec) -> EigenSystem:
    """Momentum eigenbasis of a uniform ring.

    The Jordan-Wigner states fix a canonical basis inside degenerate levels,
    which the per-state ratchet labels (and therefore forced-dark) rely on.
    Energies come from the numeric Hamiltonian so both routes agree exactly.
    """
    if not ring.is_uniform:
        raise ValueError("momentum eigenbasis needs a uniform ring")
    H = model.build_ring_hamiltonian(ring)
    vecs, bands, labels = [], [], []
    for n, pairs in enumerate(analytic_spectrum(ring.n_sites, ring.site_energies[0], ring.hopping)):
        for K, _ in pairs:
            vecs.append(momentum_state(K))
            bands.append(n)
            labels.append(K)
    V = np.array(vecs).T
    energies = np.real(np.einsum("im,ij,jm->m", V.conj(), H, V))
    resid = np.max(np.abs(H @ V - V * energies[None, :]))
    if resid > 1e-10:
        raise RuntimeError(f"momentum states are not eigenstates (residual {resid:.2e})")
    # ascending energy within each band, ties broken by construction order
    order = np.lexsort((np.arange(len(bands)), np.round(energies, 12), bands))
    return EigenSystem(energies[order], V[:, order], np.array(bands)[order],
                       k_sets=[labels[i] for i in order])


def system_eigensystem(ring: RingSpec) -> EigenSystem:
    """Eigenbasis used by the dynamics: momentum states when clean, numeric otherwise."""
    if ring.is_uniform:
        es = clean_ring_eigensystem(ring)
    else:
        es = numeric_diagonalize(model.build_ring_hamiltonian(ring),
                                 model.number_operator(ring.n_sites))
    classify_states(es, model.build_collective_dipole(ring, "raise"))
    return es


# ---------------------------------------------------------------------------
# Bloch-Redfield
# ---------------------------------------------------------------------------

def redfield_terms(A: np.ndarray, energies: np.ndarray, spectrum) -> np.ndarray:
    """Non-secular Redfield superoperator for one Hermitian coupling ``A``.

    With ``X_ac = A_ac S(E_c - E_a)`` the dissipator is
    ``(X rho A + A rho X^+ - A X rho - rho X^+ A) / 2``.  Lamb-shift terms are
    dropped.
    """
    W = energies[None, :] - energies[:, None]  # W[a, c] = E_c - E_a
    X = A * spectrum(W)
    Xd = X.conj().T
    return 0.5 * (sprepost(X, A) + sprepost(A, Xd) - spre(A @ X) - spost(Xd @ A))


def build_redfield(context: RedfieldContext,
                   spectra: Sequence[Tuple[np.ndarray, PowerSpectrum]],
                   source: str = "redfield") -> Superoperator:
    """Sum of Redfield channels; couplings are given in the composite eigenbasis."""
    d = context.dim
    total = np.zeros((d * d, d * d), dtype=complex)
    for A, spectrum in spectra:
        if A.shape != (d, d):
            raise ValueError(f"coupling operator shape {A.shape} does not match dimension {d}")
        if np.max(np.abs(A - A.conj().T)) > 1e-12:
            raise ValueError("coupling operator must be Hermitian")
        if spectrum.gamma == 0:
            continue
        total += redfield_terms(A, context.energies, spectrum)
    return Superoperator(total, source)


def optical_coupling(context: RedfieldContext, forced_dark: bool = False) -> np.ndarray:
    """``J^+ + J^-`` in the ring eigenbasis, optionally with ratchet-upward elements removed."""
    es = context.eigensystem
    ring = context.ring
    Jp = model.build_collective_dipole(ring, "raise")
    A = es.to_eigenbasis(Jp + Jp.T)
    if forced_dark:
        A = forced_dark_coupling(A, es)
    return A


def forced_dark_coupling(A_ring_eig: np.ndarray, es: EigenSystem) -> np.ndarray:
    """Zero every element between a ratchet and the band above it (both directions)."""
    if es.labels is None:
        raise ValueError("eigensystem must be classified first")
    A = A_ring_eig.copy()
    for r, label in enumerate(es.labels):
        if label != RATCHET:
            continue
        upper = es.band(es.bands[r] + 1)
        A[r, upper] = 0.0
        A[upper, r] = 0.0
    return A


def optical_dissipator(context: RedfieldContext, bath: BathSpec,
                       forced_dark: bool = False) -> Superoperator:
    A = context.lift_ring_eig(optical_coupling(context, forced_dark))
    return build_redfield(context, [(A, PowerSpectrum(bath.gamma_o, bath.T_o))],
                          "optical_fd" if forced_dark else "optical")


def apply_forced_dark(context: RedfieldContext, bath: BathSpec) -> Superoperator:
    return optical_dissipator(context, bath, forced_dark=True)


def phonon_dissipator(context: RedfieldContext, bath: BathSpec) -> Superoperator:
    """One independent ``sigma_i^z`` Redfield channel per site."""
    n = context.ring.n_sites
    spectrum = PowerSpectrum(bath.gamma_p, bath.T_p)
    channels = [(context.ring_site_to_eig(model.sigma_z(n, i)), spectrum) for i in range(n)]
    return build_redfield(context, channels, "phonon")


def phonon_zero_frequency(context: RedfieldContext, bath: BathSpec) -> Superoperator:
    """Phonon channels evaluated with weight ``gamma_p`` at zero frequency only.

    Not part of any Liouvillian: it is the direction in which ``S(0) = 0`` is
    approached, used to pick the physical state when that choice leaves the
    stationary state degenerate.
    """
    n = context.ring.n_sites
    probe = ZeroFrequencyProbe(bath.gamma_p)
    channels = [(context.ring_site_to_eig(model.sigma_z(n, i)), probe) for i in range(n)]
    return build_redfield(context, channels, "phonon_zero_frequency")


# ---------------------------------------------------------------------------
# Lindblad channels
# ---------------------------------------------------------------------------

def _require_trap(context: RedfieldContext):
    if not context.has_trap:
        raise ValueError("this channel needs the trap factor")


def trap_decay(context: RedfieldContext, gamma_t: float) -> Superoperator:
    _require_trap(context)
    A = model.trap_operator(model.TRAP_LOWER, context.eigensystem.dim)
    return lindblad_superop(context.to_eigenbasis(A), gamma_t, "trap_decay")


def single_site_extraction(context: RedfieldContext, trap: TrapSpec) -> Superoperator:
    """``gamma_x D[sigma_i^- sigma_t^+]``."""
    if not isinstance(trap.extraction, SingleSite):
        raise ValueError("trap is not configured for single-site extraction")
    _require_trap(context)
    n = context.ring.n_sites
    site = trap.extraction.site
    if not 0 <= site < n:
        raise ValueError(f"extraction site {site} out of range for N={n}")
    A = np.kron(model.sigma_minus(n, site), model.TRAP_RAISE)
    return lindblad_superop(context.to_eigenbasis(A), trap.gamma_x, "extraction")


def _extremal_states(es: EigenSystem, band: int, highest: bool) -> np.ndarray:
    idx = es.band(band)
    e = es.energies[idx]
    target = e.max() if highest else e.min()
    return idx[np.abs(e - target) < 1e-9]


def collective_extraction(context: RedfieldContext, scenario: ScenarioKind,
                          trap: TrapSpec) -> Superoperator:
    """Eigenstate-to-eigenstate extraction ``|target_{n-1}><source_n| (x) sigma_t^+``.

    Sources/targets are the lowest states of each band (ratchets, FD) or the
    highest (NP).  A degenerate source level contributes one channel per
    member; a degenerate target level uses its first member.
    """
    if not context.ring.is_uniform:
        raise ValueError("collective extraction requires a uniform ring")
    _require_trap(context)
    es = context.eigensystem
    highest = ScenarioKind.parse(scenario) is ScenarioKind.NO_PHONONS
    d = context.dim
    total = zero_superoperator(d, "extraction_collective")
    if trap.gamma_x == 0:
        return total
    for n in range(1, es.n_bands):
        target = _extremal_states(es, n - 1, highest)[0]
        for source in _extremal_states(es, n, highest):
            C = np.zeros((es.dim, es.dim))
            C[target, source] = 1.0
            A = np.kron(C, model.TRAP_RAISE)
            total = total + lindblad_superop(A, trap.gamma_x, "extraction_collective")
    return total


def extraction_dissipator(context: RedfieldContext, scenario: ScenarioKind,
                          trap: TrapSpec) -> Superoperator:
    if isinstance(trap.extraction, Collective):
        return collective_extraction(context, scenario, trap)
    return single_site_extraction(context, trap)


def non_radiative_dissipator(context: RedfieldContext,
                             imperfections: ImperfectionSpec) -> Superoperator:
    n = context.ring.n_sites
    d = context.dim
    total = zero_superoperator(d, "non_radiative")
    if imperfections.gamma_nr == 0:
        return total
    for i in range(n):
        A = context.ring_site_to_eig(model.sigma_minus(n, i))
        total = total + lindblad_superop(A, imperfections.gamma_nr, "non_radiative")
    return total


def eea_dissipator(context: RedfieldContext, imperfections: ImperfectionSpec) -> Superoperator:
    """One-way channels from every state with two or more excitons to the band-1 top."""
    es = context.eigensystem
    d = context.dim
    total = zero_superoperator(d, "eea")
    if imperfections.gamma_eea == 0:
        return total
    bright = _extremal_states(es, 1, highest=True)[0]
    for m in np.nonzero(es.bands >= 2)[0]:
        C = np.zeros((es.dim, es.dim))
        C[bright, m] = 1.0
        total = total + lindblad_superop(context.lift_ring_eig(C), imperfections.gamma_eea, "eea")
    return total


def optical_ladder(es: EigenSystem, A_ring_eig: np.ndarray, tol: float = 1e-12) -> List[int]:
    """Eigenstates reachable from the ground state through nonzero optical elements."""
    reach = {int(es.band(0)[0])}
    frontier = list(reach)
    while frontier:
        a = frontier.pop()
        for b in np.nonzero(np.abs(A_ring_eig[:, a]) > tol)[0]:
            if int(b) not in reach:
                reach.add(int(b))
                frontier.append(int(b))
    return sorted(reach)
