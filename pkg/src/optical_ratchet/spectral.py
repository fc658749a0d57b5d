"""Band structure, optical transition weights and ratchet classification.

The closed-form machinery (k-sets, band energies, the Slater-determinant
transition formula) assumes a translation-invariant ring; disordered rings go
through :func:`numeric_diagonalize` and :func:`transition_rate_numeric` only.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import (RingSpec, build_collective_dipole, build_ring_hamiltonian,
                    excitation_counts, number_operator, sigma_plus)

RATCHET_THRESHOLD = 1e-9
BAND_TOLERANCE = 1e-6
TWO_PI = 2.0 * np.pi

GROUND, BRIGHT, RATCHET, DARK = "ground", "bright", "ratchet", "dark"


@dataclass(frozen=True)
class KSet:
    """Occupied single-exciton phases of a clean-ring eigenstate."""

    ks: Tuple[float, ...]
    n_sites: int

    @property
    def n(self) -> int:
        return len(self.ks)

    @property
    def parity(self) -> str:
        return "odd" if self.n % 2 else "even"

    @property
    def total(self) -> float:
        return float(np.mod(sum(self.ks), TWO_PI))

    def energy(self, omega: float, hopping: float) -> float:
        return sum(omega + 2.0 * hopping * np.cos(k) for k in self.ks)


@dataclass
class EigenSystem:
    """Eigen-decomposition of a band-conserving Hamiltonian.

    States are ordered by band, then by ascending energy within the band.
    ``vectors[:, m]`` is eigenstate ``m``.
    """

    energies: np.ndarray
    vectors: np.ndarray
    bands: np.ndarray
    k_sets: Optional[List[KSet]] = None
    labels: Optional[List[str]] = None

    @property
    def dim(self) -> int:
        return len(self.energies)

    def band(self, n: int) -> np.ndarray:
        return np.nonzero(self.bands == n)[0]

    @property
    def n_bands(self) -> int:
        return int(self.bands.max()) + 1

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ op @ self.vectors

    def from_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors @ op @ self.vectors.conj().T


@dataclass
class TransitionTable:
    """Upward weights ``|<b|J+|a>|^2`` between adjacent bands, plus aggregates."""

    weights: np.ndarray  # weights[a, b] = |<b|J+|a>|^2, nonzero only for band(b) = band(a) + 1
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray

    def rate(self, a: int, b: int) -> float:
        return float(self.weights[a, b])


# ---------------------------------------------------------------------------
# Closed-form spectrum
# ---------------------------------------------------------------------------

def k_values(n_sites: int, n_excitons: int) -> np.ndarray:
    """Allowed single-exciton phases for the parity sector of ``n_excitons``.

    Odd exciton number gives periodic phases ``2 pi j / N``, even exciton
    number anti-periodic phases ``pi (2 j + 1) / N``.
    """
    if not 0 <= n_excitons <= n_sites:
        raise ValueError(f"n_excitons={n_excitons} outside [0, {n_sites}]")
    j = np.arange(n_sites)
    if n_excitons % 2:
        return TWO_PI * j / n_sites
    return np.pi * (2 * j + 1) / n_sites


def k_sets(n_sites: int, n_excitons: int) -> List[KSet]:
    ks = k_values(n_sites, n_excitons)
    return [KSet(tuple(c), n_sites) for c in itertools.combinations(ks, n_excitons)]


def analytic_spectrum(n_sites: int, omega: float, hopping: float) -> List[List[Tuple[KSet, float]]]:
    """All ``2**N`` ``(KSet, energy)`` pairs grouped by band, ascending energy."""
    bands = []
    for n in range(n_sites + 1):
        pairs = [(K, K.energy(omega, hopping)) for K in k_sets(n_sites, n)]
        pairs.sort(key=lambda p: p[1])
        bands.append(pairs)
    return bands


def jordan_wigner_creation(n_sites: int, site: int) -> np.ndarray:
    """Fermionic ``c_site^dagger`` with the string over lower-indexed sites."""
    dim = 2 ** n_sites
    states = np.arange(dim)
    lower = states & ((1 << site) - 1)
    string = np.array([(-1) ** bin(x).count("1") for x in lower], dtype=float)
    return sigma_plus(n_sites, site) * string[None, :]


def momentum_state(K: KSet) -> np.ndarray:
    """Build ``c_{k_1}^dagger ... c_{k_n}^dagger |0>`` as a normalised vector."""
    N = K.n_sites
    creators = [jordan_wigner_creation(N, j) for j in range(N)]
    vec = np.zeros(2 ** N, dtype=complex)
    vec[0] = 1.0
    for k in reversed(K.ks):
        ck = sum(np.exp(1j * k * (j + 1)) * creators[j] for j in range(N)) / np.sqrt(N)
        vec = ck @ vec
    return vec / np.linalg.norm(vec)


# ---------------------------------------------------------------------------
# Numeric diagonalisation
# ---------------------------------------------------------------------------

def numeric_diagonalize(H: np.ndarray, number_op: np.ndarray) -> EigenSystem:
    """Hermitian eigen-decomposition carried out band by band.

    The number operator is diagonalised first, ``H`` is then diagonalised
    inside each integer eigenspace, so degenerate levels never mix bands.
    """
    if H.shape != number_op.shape:
        raise ValueError(f"shape mismatch: H {H.shape} vs number operator {number_op.shape}")
    if np.max(np.abs(H - H.conj().T)) > 1e-12:
        raise ValueError("Hamiltonian is not Hermitian")
    if np.max(np.abs(H @ number_op - number_op @ H)) > 1e-10:
        raise ValueError("Hamiltonian does not conserve the supplied number operator")

    if np.count_nonzero(number_op - np.diag(np.diag(number_op))) == 0:
        counts = np.real(np.diag(number_op))
        basis = np.eye(len(counts), dtype=complex)
    else:
        counts, basis = np.linalg.eigh(number_op)
    labels = np.rint(counts)
    if np.max(np.abs(counts - labels), initial=0.0) > BAND_TOLERANCE:
        raise ValueError("number operator eigenvalues are not integers")
    labels = labels.astype(int)

    energies, vectors, bands = [], [], []
    for n in np.unique(labels):
        sub = basis[:, labels == n]
        e, v = np.linalg.eigh(sub.conj().T @ H @ sub)
        energies.append(e)
        vectors.append(sub @ v)
        bands.append(np.full(len(e), n))
    vecs = np.hstack(vectors)
    bands = np.concatenate(bands)

    expect = np.real(np.einsum("im,ij,jm->m", vecs.conj(), number_op, vecs))
    if np.max(np.abs(expect - bands)) > BAND_TOLERANCE:
        raise ValueError("band assignment failed: number expectation not integral")
    return EigenSystem(np.concatenate(energies), vecs, bands)


def ring_eigensystem(ring: RingSpec) -> EigenSystem:
    """Numeric eigensystem of the ring, with k-set labels when the ring is clean."""
    es = numeric_diagonalize(build_ring_hamiltonian(ring), number_operator(ring.n_sites))
    if ring.is_uniform:
        es.k_sets = _match_k_sets(es, ring)
    return es


def _match_k_sets(es: EigenSystem, ring: RingSpec) -> Optional[List[KSet]]:
    # Labels only; inside degenerate subspaces the pairing is arbitrary.
    spectrum = analytic_spectrum(ring.n_sites, ring.site_energies[0], ring.hopping)
    labels: List[KSet] = []
    for n, pairs in enumerate(spectrum):
        idx = es.band(n)
        if len(idx) != len(pairs):
            return None
        labels.extend(K for K, _ in pairs)
    return labels


# ---------------------------------------------------------------------------
# Transition weights
# ---------------------------------------------------------------------------

def transition_rate_analytic(K: KSet, K_prime: KSet) -> float:
    """``|<K'|J+|K>|^2`` from the Slater-determinant closed form.

    Products are accumulated as a sum of logarithms of moduli so that many
    small factors do not underflow for larger rings.
    """
    N = K.n_sites
    if K_prime.n_sites != N:
        raise ValueError("k-sets belong to different rings")
    n = K.n
    if K_prime.n != n + 1:
        raise ValueError(f"|K'| must be |K| + 1, got {K.n} -> {K_prime.n}")
    diff = np.mod(sum(K_prime.ks) - sum(K.ks), TWO_PI)
    if min(diff, TWO_PI - diff) > 1e-9:
        return 0.0

    k = np.asarray(K.ks)
    kp = np.asarray(K_prime.ks)
    log_mag = n * np.log(2.0) + (0.5 - n) * np.log(N)
    for a, b in itertools.combinations(range(n), 2):
        log_mag += np.log(abs(np.exp(1j * k[b]) - np.exp(1j * k[a])))
    for a, b in itertools.combinations(range(n + 1), 2):
        log_mag += np.log(abs(np.exp(-1j * kp[b]) - np.exp(-1j * kp[a])))
    for ki in k:
        for kj in kp:
            denom = abs(1.0 - np.exp(1j * (kj - ki)))
            if denom < 1e-12:
                raise ZeroDivisionError(
                    f"singular factor for k={ki}, k'={kj}; "
                    "k-sets must come from opposite parity sectors")
            log_mag -= np.log(denom)
    # a vanishing numerator factor would already have given log(0) = -inf
    return float(np.exp(2.0 * log_mag))


def transition_rate_numeric(es: EigenSystem, J_plus: np.ndarray, a: int, b: int) -> float:
    """``|<b|J+|a>|^2`` from eigenvectors."""
    amp = es.vectors[:, b].conj() @ J_plus @ es.vectors[:, a]
    return float(abs(amp) ** 2)


def transition_table(es: EigenSystem, J_plus: np.ndarray) -> TransitionTable:
    amp = es.to_eigenbasis(J_plus)  # amp[b, a] = <b|J+|a>
    weights = np.abs(amp.T) ** 2
    adjacent = es.bands[None, :] == es.bands[:, None] + 1
    weights = np.where(adjacent, weights, 0.0)
    return TransitionTable(weights, weights.sum(axis=1), weights.sum(axis=0))


def classify_states(es: EigenSystem, J_plus: np.ndarray,
                    threshold: float = RATCHET_THRESHOLD) -> Tuple[List[str], TransitionTable]:
    """Label every eigenstate ground / bright / ratchet / dark.

    A ratchet cannot decay optically (``Gamma^- < threshold``) but can absorb
    (``Gamma^+ > threshold``).
    """
    table = transition_table(es, J_plus)
    labels = []
    for m in range(es.dim):
        if es.bands[m] == 0:
            labels.append(GROUND)
        elif table.gamma_minus[m] >= threshold:
            labels.append(BRIGHT)
        elif table.gamma_plus[m] > threshold:
            labels.append(RATCHET)
        else:
            labels.append(DARK)
    es.labels = labels
    return labels, table


def ring_classification(ring: RingSpec) -> Tuple[EigenSystem, List[str], TransitionTable]:
    es = ring_eigensystem(ring)
    labels, table = classify_states(es, build_collective_dipole(ring, "raise"))
    return es, labels, table


def spectrum_rows(ring: RingSpec) -> List[Dict]:
    """Per-state rows for the ``spectrum`` CSV."""
    es, labels, table = ring_classification(ring)
    return [
        {"band": int(es.bands[m]), "energy_eV": float(es.energies[m]),
         "gamma_plus": float(table.gamma_plus[m]), "gamma_minus": float(table.gamma_minus[m]),
         "label": labels[m]}
        for m in range(es.dim)
    ]
