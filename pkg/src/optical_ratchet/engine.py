"""Liouvillian assembly, steady states and photocell figures of merit."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from . import dissipators as dis
from . import model
from .model import (K_B, BathSpec, Collective, ImperfectionSpec, RingSpec,
                    ScenarioKind, TrapSpec)

log = logging.getLogger(__name__)

POSITIVITY_FLOOR = -1e-8
CLAMP_FLOOR = 1e-300
AMBIGUITY_FACTOR = 1e3
# numerical-rank threshold for the row-equilibrated even block
KERNEL_RTOL = 1e-12


class SolverError(RuntimeError):
    """Steady-state solve failed or produced an unphysical state."""


@dataclass
class Liouvillian:
    """``L = -i[H_s + H_t, .] + sum of dissipators`` in the composite eigenbasis.

    The trap-decay channel is kept separate (``trap_unit`` at unit rate) so a
    sweep over ``gamma_t`` reuses everything else.
    """

    context: dis.RedfieldContext
    components: Dict[str, dis.Superoperator]
    trap_unit: Optional[dis.Superoperator]
    gamma_t: float
    scenario: ScenarioKind = ScenarioKind.RATCHETS
    bath: Optional[BathSpec] = None
    trap: Optional[TrapSpec] = None
    _base: Optional[np.ndarray] = field(default=None, repr=False)
    # d L / d S(0) of the phonon bath; only used to resolve degenerate kernels
    probe: Optional[dis.Superoperator] = field(default=None, repr=False)
    # shared by every member of a gamma_t family (conserved-quantity basis)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.context.dim

    @property
    def base(self) -> np.ndarray:
        if self._base is None:
            d = self.dim
            total = np.zeros((d * d, d * d), dtype=complex)
            for sop in self.components.values():
                total += sop.matrix
            self._base = total
        return self._base

    @property
    def matrix(self) -> np.ndarray:
        if self.gamma_t == 0:
            return self.base
        return self.base + self.gamma_t * self.trap_unit.matrix

    def with_trap_rate(self, gamma_t: float) -> "Liouvillian":
        if self.trap_unit is None:
            raise ValueError("Liouvillian was assembled without a trap")
        if gamma_t < 0:
            raise ValueError("gamma_t must be >= 0")
        trap = replace(self.trap, gamma_t=gamma_t) if self.trap is not None else None
        return Liouvillian(self.context, self.components, self.trap_unit, gamma_t,
                           self.scenario, self.bath, trap, self.base, self.probe, self.cache)

    def apply(self, rho_eig: np.ndarray) -> np.ndarray:
        return dis.unvec(self.matrix @ dis.vec(rho_eig))

    def parity_blocks(self) -> Tuple[np.ndarray, np.ndarray]:
        """Vector indices with even / odd excitation-number difference.

        Every channel changes ``n_a - n_b`` by 0 or +-2, so the two sets never
        mix and the stationary state lives in the even block.
        """
        n = self.context.total_excitations
        diff = (n[:, None] - n[None, :]).reshape(-1, order="F")
        even = np.nonzero(diff % 2 == 0)[0]
        odd = np.nonzero(diff % 2 == 1)[0]
        return even, odd


def assemble_liouvillian(scenario, ring: RingSpec, bath: BathSpec, trap: Optional[TrapSpec],
                         imperfections: Optional[ImperfectionSpec] = None,
                         eigensystem=None) -> Liouvillian:
    """Scenario Liouvillian.

    NP drops the phonon bath and moves the trap to the bright state, FD swaps in
    the forced-dark optical tensor.  A trap energy given in ``trap`` overrides
    the scenario default.  ``trap=None`` builds the bare ring (no trap factor).
    """
    scenario = ScenarioKind.parse(scenario)
    imperfections = imperfections or ImperfectionSpec()
    if trap is not None and isinstance(trap.extraction, Collective) and not ring.is_uniform:
        raise ValueError("collective extraction needs a uniform (disorder-free) ring")
    if scenario is ScenarioKind.FORCED_DARK and not ring.is_uniform:
        raise ValueError("forced-dark is undefined for a disordered ring")
    if trap is not None:
        trap = model.resolve_trap(trap, scenario, ring)
    if scenario is ScenarioKind.NO_PHONONS:
        bath = replace(bath, gamma_p=0.0)

    es = eigensystem if eigensystem is not None else dis.system_eigensystem(ring)
    ctx = dis.RedfieldContext(ring, es, None if trap is None else trap.omega_t)
    components = {"hamiltonian": ctx.hamiltonian_superop(),
                  "optical": dis.optical_dissipator(
                      ctx, bath, forced_dark=scenario is ScenarioKind.FORCED_DARK)}
    if bath.gamma_p > 0:
        components["phonon"] = dis.phonon_dissipator(ctx, bath)
    if trap is not None and trap.gamma_x > 0:
        components["extraction"] = dis.extraction_dissipator(ctx, scenario, trap)
    if imperfections.gamma_nr > 0:
        components["non_radiative"] = dis.non_radiative_dissipator(ctx, imperfections)
    if imperfections.gamma_eea > 0:
        components["eea"] = dis.eea_dissipator(ctx, imperfections)
    probe = dis.phonon_zero_frequency(ctx, bath) if bath.gamma_p > 0 else None
    if trap is None:
        return Liouvillian(ctx, components, None, 0.0, scenario, bath, None, probe=probe)
    return Liouvillian(ctx, components, dis.trap_decay(ctx, 1.0), trap.gamma_t,
                       scenario, bath, trap, probe=probe)


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------

@dataclass
class SteadyState:
    rho: np.ndarray  # composite eigenbasis
    context: dis.RedfieldContext
    residual: float
    trace_error: float
    hermiticity_error: float
    uniqueness_gap: float
    positivity_deficit: float
    flags: List[str] = field(default_factory=list)

    @property
    def rho_site(self) -> np.ndarray:
        return self.context.to_site_basis(self.rho)

    @property
    def is_ambiguous(self) -> bool:
        return "ambiguous" in self.flags

    def trap_populations(self) -> Tuple[float, float]:
        """``(rho_alpha, rho_beta)``: trap excited and ground populations."""
        p = np.real(np.diag(self.rho))
        t = self.context.trap_index
        return float(p[t == 1].sum()), float(p[t == 0].sum())

    def exciton_number(self) -> float:
        p = np.real(np.diag(self.rho))
        bands = self.context.eigensystem.bands[self.context.ring_index]
        return float(p @ bands)

    def band_populations(self) -> np.ndarray:
        p = np.real(np.diag(self.rho))
        bands = self.context.eigensystem.bands[self.context.ring_index]
        return np.bincount(bands, weights=p)

    def ring_populations(self) -> np.ndarray:
        """Eigenstate populations of the ring (trap traced out)."""
        p = np.real(np.diag(self.rho))
        return np.bincount(self.context.ring_index, weights=p)

    def clamped(self) -> np.ndarray:
        """Positive part of ``rho`` renormalised (reporting only)."""
        if self.positivity_deficit >= 0:
            return self.rho
        w, v = np.linalg.eigh(self.rho)
        w = np.clip(w, 0.0, None)
        rho = (v * w) @ v.conj().T
        return rho / np.trace(rho).real


def _smallest_singular_estimate(lu, n: int, iterations: int = 8) -> float:
    """Inverse iteration for the smallest singular value of an LU-factored matrix."""
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    sigma = np.inf
    for _ in range(iterations):
        y = sla.lu_solve(lu, x)
        z = sla.lu_solve(lu, y, trans=2)
        norm = np.linalg.norm(z)
        if norm == 0 or not np.isfinite(norm):
            return 0.0
        sigma = 1.0 / math.sqrt(norm)
        x = z / norm
    return float(sigma)


def _conserved_functionals(M: np.ndarray, row_scale: np.ndarray, tol: float,
                           cache: Optional[dict]):
    """Conserved linear functionals of the unscaled block, one per row.

    ``M`` is the row-equilibrated block ``C / row_scale``; a left null vector
    ``l`` of ``M`` gives the functional ``l / row_scale`` annihilating ``C``.
    Conserved quantities are structural, so a basis cached from another
    member of the same ``gamma_t`` family is reused after re-checking it
    against the current block.  Returns ``(functionals, singular values or None)``.
    """
    cached = cache.get("conserved") if cache is not None else None
    if cached is not None and cached.shape[1] == M.shape[0]:
        left = cached * row_scale[None, :]
        left /= np.linalg.norm(left, axis=1, keepdims=True)
        if np.max(np.abs(left @ M), initial=0.0) < tol:
            return cached, None
    U, s, _ = sla.svd(M)
    fun = (U[:, s < tol] / row_scale[:, None]).T
    fun /= np.max(np.abs(fun), axis=1, keepdims=True)
    if cache is not None:
        cache["conserved"] = fun
    return fun, s


def _selection_functionals(M: np.ndarray, row_scale: np.ndarray, probe: np.ndarray,
                           row: int, tol: float):
    """Constraints picking the stationary state reached as ``S(0) -> 0+``.

    With kernel bases ``F`` (left, biorthogonal) and ``N`` (right), a small
    zero-frequency coupling ``eps P`` moves kernel coordinates by
    ``eps K c`` with ``K = F P N``; the limit state has ``c`` in the kernel of
    ``K``.  Directions ``K`` leaves undetermined are fixed by their value in
    the ground state.  Returns ``(functionals, values, singular values,
    leftover)`` where ``leftover`` is the number of such directions beyond the
    trace.
    """
    U, s, Vh = sla.svd(M)
    null = s < tol
    W = U[:, null]
    N = Vh[null].T
    F = (W / row_scale[:, None]).T
    F = np.linalg.solve(F @ N, F)  # biorthogonal: F N = I
    K = F @ probe @ N
    uk, sk, _ = sla.svd(K)
    rank = int(np.sum(sk > 1e-8 * max(sk.max(initial=0.0), 1e-300)))
    select = uk[:, :rank].T @ F @ probe
    keep = uk[:, rank:].T @ F
    fun = np.vstack([select, keep])
    values = np.concatenate([np.zeros(rank), keep[:, row]])
    scale = np.max(np.abs(fun), axis=1)
    return fun / scale[:, None], values / scale, s, max(keep.shape[0] - 1, 0)


def _bordered_solve(M: np.ndarray, functionals: np.ndarray, values: np.ndarray,
                    rows: np.ndarray, refine: int):
    bordered = M.copy()
    rhs = np.zeros(M.shape[0])
    bordered[rows, :] = functionals
    rhs[rows] = values
    try:
        with np.errstate(all="raise"), warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)  # zero pivots handled below
            lu = sla.lu_factor(bordered, check_finite=True)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise SolverError(f"singular steady-state system: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) == 0:
        raise SolverError("singular steady-state system (zero pivot)")
    x = sla.lu_solve(lu, rhs)
    for _ in range(refine):
        x = x + sla.lu_solve(lu, rhs - bordered @ x)
    return x, lu


def hermitian_coordinates(d: int, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unitary map from real coordinates to the vec entries listed in ``indices``.

    ``indices`` must be closed under transposition ``(a, b) -> (b, a)``.
    Coordinates are ``rho_aa`` and ``sqrt(2) Re/Im rho_ab`` for ``a < b``, so a
    Hermitian-preserving superoperator becomes a real matrix.  Also returns
    the coordinate positions of the diagonal entries.
    """
    pos = {int(v): i for i, v in enumerate(indices)}
    n = len(indices)
    T = np.zeros((n, n), dtype=complex)
    col = 0
    diag = []
    h = 1.0 / math.sqrt(2.0)
    for v in indices:
        a, b = int(v) % d, int(v) // d
        if a == b:
            T[pos[int(v)], col] = 1.0
            diag.append(col)
            col += 1
        elif a < b:
            p, q = pos[int(v)], pos[b + d * a]
            T[p, col], T[q, col] = h, h
            T[p, col + 1], T[q, col + 1] = 1j * h, -1j * h
            col += 2
    return T, np.array(diag)


def _real_block(L: Liouvillian):
    """Even block in real Hermitian coordinates, cached per ``gamma_t`` family."""
    cache = L.cache
    if "real_block" not in cache:
        d = L.dim
        even, _ = L.parity_blocks()
        T, diag = hermitian_coordinates(d, even)
        Th = T.conj().T

        def project(mat):
            C = Th @ mat[np.ix_(even, even)] @ T
            leak = float(np.max(np.abs(C.imag), initial=0.0))
            if leak > 1e-9 * max(np.max(np.abs(C.real), initial=0.0), 1.0):
                raise SolverError(
                    f"Liouvillian does not preserve Hermiticity (imaginary part {leak:.2e})")
            return np.ascontiguousarray(C.real)

        base = project(L.base)
        trap = project(L.trap_unit.matrix) if L.trap_unit is not None else None
        probe = project(L.probe.matrix) if L.probe is not None else None
        if probe is not None and not np.any(probe):
            probe = None
        cache["real_block"] = (even, T, diag, base, trap, probe)
    even, T, diag, base, trap, probe = cache["real_block"]
    C = base if L.gamma_t == 0 or trap is None else base + L.gamma_t * trap
    return even, T, diag, C, probe


def _trap_balance(L: Liouvillian):
    """Exact trap-population balance row, ``d/dt P_alpha = inflow - gamma_t P_alpha``.

    Summed over the trap-excited populations every ring channel cancels in
    exact arithmetic, but in floating point it leaves noise of order
    ``eps * gamma_p``, which swamps a current ``gamma_t P_alpha`` when
    ``gamma_t`` is tiny.  Building the summed row from the extraction and
    trap-decay channels alone removes that noise.  Returns ``(coordinate of
    the |ground, alpha> population, all trap-excited population coordinates,
    row)`` or ``None`` without a trap.
    """
    if L.trap_unit is None:
        return None
    cache = L.cache
    if "trap_balance" not in cache:
        ctx = L.context
        even, T, diag = cache["real_block"][:3]
        Th = T.conj().T
        # composite state behind each population coordinate
        states = even[np.argmax(np.abs(T[:, diag]), axis=0)] % L.dim
        alpha = diag[ctx.trap_index[states] == 1]
        ground = ctx.eigensystem.bands[ctx.ring_index[states]] == 0
        target = int(diag[(ctx.trap_index[states] == 1) & ground][0])

        def summed(sop):
            if sop is None:
                return np.zeros(len(even))
            C = Th[alpha] @ sop.matrix[np.ix_(even, even)] @ T
            return np.real(C.sum(axis=0))

        cache["trap_balance"] = (target, alpha, summed(L.components.get("extraction")),
                                 summed(L.trap_unit))
    target, alpha, extraction, decay = cache["trap_balance"]
    return target, alpha, extraction + L.gamma_t * decay


def _with_balance(M: np.ndarray, balance, rows: np.ndarray) -> np.ndarray:
    if balance is None:
        return M
    # the summed row equals the target row plus the other trap-excited rows,
    # which is an equivalent system only if none of those rows was replaced
    target, alpha, row = balance
    scale = np.max(np.abs(row), initial=0.0)
    if scale == 0 or np.isin(alpha, rows).any():
        return M
    out = M.copy()
    out[target] = row / scale
    return out


def steady_state(L: Liouvillian, exact_gap: bool = True, refine: int = 2,
                 check_positivity: bool = True) -> SteadyState:
    """Solve ``L rho = 0`` with ``tr rho = 1`` by a dense direct solve.

    Only the even excitation-difference block is solved, written in real
    Hermitian coordinates so that the result is Hermitian by construction.
    Rows are equilibrated, then the ground-state population row is replaced
    by the trace constraint and one trap-excited population row by the exact
    trap balance (see ``_trap_balance``) whenever that keeps the system
    equivalent.  ``uniqueness_gap`` is the second-smallest
    singular value of the equilibrated block when ``exact_gap`` is set,
    otherwise an inverse-iteration estimate of the smallest singular value of
    the bordered system.

    When the kernel is degenerate (extra conserved quantities, e.g. total
    momentum without phonons) the state returned is the long-time limit from
    the joint ground state: each conserved functional replaces one row and is
    pinned to its ground-state value.  Such states carry the
    ``degenerate_kernel`` flag.
    """
    d = L.dim
    even, T, diag, C, probe = _real_block(L)
    M = C.copy()
    n = len(even)
    # Row equilibration: coherence rows carry eV-scale frequencies, population
    # rows carry rates many orders smaller.  Unscaled, the slow modes are
    # resolved only to ~eps * |L| / gap.
    row_scale = np.max(np.abs(M), axis=1)
    row_scale[row_scale == 0] = 1.0
    M /= row_scale[:, None]
    trace_row = np.zeros(n)
    trace_row[diag] = 1.0
    row = int(diag[0])  # composite ground population
    tol = KERNEL_RTOL

    flags: List[str] = []
    balance = _trap_balance(L)
    try:
        x, lu = _bordered_solve(_with_balance(M, balance, np.array([row])), trace_row[None, :],
                                np.ones(1), np.array([row]), refine)
        estimate = _smallest_singular_estimate(lu, n)
    except SolverError:
        estimate = 0.0  # exactly singular: resolved below
    singular_values = None
    if estimate < tol:
        if probe is None:
            fun, singular_values = _conserved_functionals(M, row_scale, tol, L.cache)
            values = fun[:, row]
        else:
            fun, values, singular_values, leftover = _selection_functionals(
                M, row_scale, probe, row, tol)
            if leftover:
                flags.append("ground_limit")
        if fun.shape[0] >= len(diag):
            # populations do not relax at all; the answer is just the reference state
            flags.append("ambiguous")
        if fun.shape[0] > 1:
            flags.append("degenerate_kernel")
            # rows with an invertible minor of the null combinations can be dropped
            _, _, piv = sla.qr(fun * row_scale[None, :], pivoting=True, mode="economic")
            rows = np.sort(piv[: fun.shape[0]])
            x, lu = _bordered_solve(_with_balance(M, balance, rows), fun, values, rows, refine)
            estimate = _smallest_singular_estimate(lu, n)

    v = np.zeros(d * d, dtype=complex)
    v[even] = T @ x
    raw = dis.unvec(v)
    herm_err = float(np.max(np.abs(raw - raw.conj().T)))
    rho = 0.5 * (raw + raw.conj().T)
    norm = np.trace(rho).real
    rho /= norm
    trace_err = abs(np.trace(rho) - 1.0)
    # L maps the even block into itself, so this is the full residual
    residual = float(np.max(np.abs(T @ (C @ (x / norm)))))

    if exact_gap:
        sv = singular_values if singular_values is not None else sla.svdvals(M)
        gap = float(np.sort(sv)[1]) if len(sv) > 1 else float("inf")
    else:
        gap = estimate
    if (not np.isfinite(residual) or estimate < tol) and "ambiguous" not in flags:
        flags.append("ambiguous")

    evals = np.linalg.eigvalsh(rho)
    deficit = float(min(evals.min(), 0.0))
    if check_positivity and deficit < POSITIVITY_FLOOR:
        raise SolverError(
            f"steady state has eigenvalue {evals.min():.3e} below {POSITIVITY_FLOOR:g}")
    if deficit < 0:
        flags.append("negative_eigenvalue")
    return SteadyState(rho, L.context, residual, float(trace_err), herm_err, gap, deficit, flags)


def power_iteration_steady_state(L: Liouvillian, tol: float = 1e-13,
                                 max_doublings: int = 200) -> np.ndarray:
    """Cross-check solver: propagate to long times by repeated squaring.

    The propagator ``exp(L dt)`` over one coherent period is squared until
    the state stops changing, so the result is ``exp(L t) rho_0`` for very
    large ``t``.  Only practical for small systems; used in tests.
    """
    full = L.matrix
    d = L.dim
    scale = max(np.max(np.abs(full)), 1e-300)
    step = sla.expm(full / scale)
    v = dis.vec(np.eye(d, dtype=complex) / d)
    for _ in range(max_doublings):
        new = step @ v
        if np.max(np.abs(new - v)) < tol:
            v = new
            break
        v = new
        step = step @ step
    rho = dis.unvec(v)
    return rho / np.trace(rho)


def expectation(rho: np.ndarray, op: np.ndarray) -> float:
    if rho.shape != op.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape}, operator {op.shape}")
    val = np.trace(op @ rho)
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


# ---------------------------------------------------------------------------
# photocell metrics
# ---------------------------------------------------------------------------

@dataclass
class PhotocellMetrics:
    """Operating point; rates and currents in eV (hbar = 1), voltage in V."""

    gamma_t: float
    current: float
    voltage: float
    rho_alpha: float
    rho_beta: float
    gamma_o: float = model.DEFAULT_GAMMA_O
    flags: List[str] = field(default_factory=list)

    @property
    def power(self) -> float:
        return self.current * self.voltage

    @property
    def current_gamma_o(self) -> float:
        return self.current / self.gamma_o

    @property
    def power_gamma_o_eV(self) -> float:
        return self.power / self.gamma_o

    @property
    def current_amperes(self) -> float:
        """Absolute current via ``1 ueV = 1.52e9 Hz``."""
        return self.current / 1e-6 * model.HZ_PER_UEV * 1.602176634e-19


def photocell_metrics(ss: SteadyState, trap: TrapSpec, bath: BathSpec) -> PhotocellMetrics:
    """``I = e gamma_t rho_alpha`` and ``eV = omega_t + k_B T_p ln(rho_alpha / rho_beta)``."""
    if trap.omega_t is None:
        raise ValueError("trap energy unresolved")
    rho = ss.clamped() if ss.positivity_deficit < 0 else ss.rho
    p = np.real(np.diag(rho))
    t = ss.context.trap_index
    alpha, beta = float(p[t == 1].sum()), float(p[t == 0].sum())
    flags = list(ss.flags)
    if beta <= 0.0:
        flags.append("voltage_undefined")
    if alpha < CLAMP_FLOOR or beta < CLAMP_FLOOR:
        flags.append("clamped")
    a = max(alpha, CLAMP_FLOOR)
    b = max(beta, CLAMP_FLOOR)
    voltage = trap.omega_t + K_B * bath.T_p * (math.log(a) - math.log(b))
    current = trap.gamma_t * max(alpha, 0.0)
    return PhotocellMetrics(trap.gamma_t, current, voltage, alpha, beta, bath.gamma_o, flags)


def extraction_flux(L: Liouvillian, ss: SteadyState) -> float:
    """Net rate at which the extraction channel fills the trap excited state."""
    if "extraction" not in L.components:
        return 0.0
    drho = L.components["extraction"].apply(ss.rho)
    return float(np.real(np.diag(drho))[ss.context.trap_index == 1].sum())


def kirchhoff_error(L: Liouvillian, ss: SteadyState) -> float:
    """Relative mismatch between trap output current and extraction inflow."""
    out = L.gamma_t * ss.trap_populations()[0]
    inflow = extraction_flux(L, ss)
    scale = max(abs(out), abs(inflow))
    if scale == 0:
        return 0.0
    return abs(out - inflow) / scale


# ---------------------------------------------------------------------------
# trap-rate optimisation
# ---------------------------------------------------------------------------

@dataclass
class OptimumResult:
    gamma_t: float
    metrics: PhotocellMetrics
    grid: List[PhotocellMetrics]
    evaluations: int
    flags: List[str] = field(default_factory=list)


def evaluate_point(L: Liouvillian, gamma_t: float, bath: BathSpec,
                   exact_gap: bool = False) -> Tuple[PhotocellMetrics, SteadyState]:
    Lg = L.with_trap_rate(gamma_t)
    ss = steady_state(Lg, exact_gap=exact_gap)
    return photocell_metrics(ss, Lg.trap, bath), ss


def golden_section_max(f, lo: float, hi: float, rtol: float = 1e-4,
                       max_iter: int = 100) -> Tuple[float, float, int]:
    """Maximise a unimodal ``f`` on ``[lo, hi]``.

    Stops once successive best values differ by less than ``rtol`` relative
    and the bracket has shrunk below ``1e-3`` of its start width.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    calls = 2
    best = max(fc, fd)
    width0 = b - a
    for _ in range(max_iter):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        calls += 1
        new = max(fc, fd)
        change = abs(new - best) / max(abs(new), abs(best), 1e-300)
        best = max(best, new)
        if change < rtol and (b - a) < 1e-3 * width0:
            break
    x = c if fc >= fd else d
    return x, max(fc, fd), calls


POWER_ROUNDOFF = 1e-12


def optimize_trap_rate(L: Liouvillian, bath: BathSpec,
                       search: Tuple[float, float] = None, n_grid: int = 31,
                       rtol: float = 1e-4) -> OptimumResult:
    """Maximise output power over ``gamma_t``.

    Coarse logarithmic grid first, then golden-section refinement in
    ``log10 gamma_t`` between the neighbours of the best grid point.  The
    objective is ``max(P, 0)``; raw values are kept in the records.
    """
    if search is None:
        search = (1e-6 * bath.gamma_o, 1e4 * bath.gamma_o)
    if n_grid < 25:
        raise ValueError("coarse grid needs at least 25 points")
    lo, hi = np.log10(search[0]), np.log10(search[1])
    grid_x = np.linspace(lo, hi, n_grid)
    cache: Dict[float, PhotocellMetrics] = {}

    def metrics_at(x: float) -> PhotocellMetrics:
        if x not in cache:
            cache[x] = evaluate_point(L, 10.0 ** x, bath)[0]
        return cache[x]

    grid = [metrics_at(x) for x in grid_x]
    powers = np.array([max(m.power, 0.0) for m in grid])
    flags: List[str] = []
    i = int(np.argmax(powers))
    # powers below round-off of the rate scale count as zero
    floor = POWER_ROUNDOFF * bath.gamma_o * max(L.trap.omega_t or 1.0, 1.0)
    if powers[i] <= floor or np.ptp(powers) <= 1e-12 * powers[i]:
        flags.append("flat_objective")
        return OptimumResult(10.0 ** grid_x[i], grid[i], grid, len(cache), flags)
    if i in (0, n_grid - 1):
        flags.append("boundary_optimum")
        return OptimumResult(10.0 ** grid_x[i], grid[i], grid, len(cache), flags)

    x, _, _ = golden_section_max(lambda x: max(metrics_at(x).power, 0.0),
                                 grid_x[i - 1], grid_x[i + 1], rtol=rtol)
    best = metrics_at(x)
    if best.power < grid[i].power:
        x, best = grid_x[i], grid[i]
    return OptimumResult(10.0 ** x, best, grid, len(cache), flags)
