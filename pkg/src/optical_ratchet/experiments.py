"""Figure-level experiments: temperature maps, power surfaces, P-V curves,
disorder ensembles, imperfection sweeps and the EEA structural analysis.

Every grid is enumerated in full and returned as flat records in cell order.
Cells are independent, so they can be farmed out to a process pool; results
are collected in submission order, which keeps output independent of the
scheduler.
"""
from __future__ import annotations

import logging
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model
from .engine import (SolverError, assemble_liouvillian, optimize_trap_rate,
                     photocell_metrics, steady_state)
from .model import (BathSpec, ImperfectionSpec, RingSpec, ScenarioKind, TrapSpec,
                    build_three_level_hamiltonian, d_character_projector,
                    three_level_ladder, three_level_number_operator)
from .spectral import numeric_diagonalize

log = logging.getLogger(__name__)

K_SOLAR = 5800.0
RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence.spawn"
POWER_FLOOR = 1e-12  # relative to the largest power on the denominator surface
SCENARIO_ORDER = ("ratchets", "fd", "np")
DIAGNOSTIC_KEYS = ("residual", "trace_error", "hermiticity_error",
                   "uniqueness_gap", "positivity_deficit")


# ---------------------------------------------------------------------------
# grids and parallel execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    name: str
    values: Tuple[float, ...]
    scale: str = "log"

    def __post_init__(self):
        if self.scale not in ("log", "linear"):
            raise ValueError(f"axis {self.name}: scale must be 'log' or 'linear'")
        if not self.values:
            raise ValueError(f"axis {self.name} has no points")

    @classmethod
    def log(cls, name: str, lo: float, hi: float, points: int) -> "Axis":
        return cls(name, tuple(float(v) for v in np.geomspace(lo, hi, points)), "log")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class SweepGrid:
    """Fully enumerated 2-D grid, one record per (scenario, cell).

    Failed cells keep their record with the quantity set to ``None`` and a
    ``failed`` flag; nothing is interpolated.
    """

    axes: Tuple[Axis, Axis]
    scenarios: Tuple[str, ...]
    quantity: str
    records: List[dict] = field(default_factory=list)

    def values(self, scenario: str, key: Optional[str] = None) -> np.ndarray:
        key = key or self.quantity
        out = np.full((len(self.axes[0]), len(self.axes[1])), np.nan)
        for r in self.records:
            if r["scenario"] == scenario and r.get(key) is not None:
                out[r["i"], r["j"]] = r[key]
        return out

    def flags(self, scenario: str) -> List[List[str]]:
        out = [[[] for _ in self.axes[1].values] for _ in self.axes[0].values]
        for r in self.records:
            if r["scenario"] == scenario:
                out[r["i"]][r["j"]] = list(r["flags"])
        return out

    def failed(self) -> List[dict]:
        return [r for r in self.records if "failed" in r["flags"]]


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.environ.get("RATCHET_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def parallel_map(fn: Callable, tasks: Sequence, threads: Optional[int] = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally on a process pool, in task order."""
    threads = resolve_threads(threads)
    if threads == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    methods = multiprocessing.get_all_start_methods()
    ctx = multiprocessing.get_context("fork" if "fork" in methods else None)
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks)), mp_context=ctx) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _diagnostics(ss) -> dict:
    return {k: float(getattr(ss, k)) for k in DIAGNOSTIC_KEYS}


def _failed_diagnostics() -> dict:
    return {k: None for k in DIAGNOSTIC_KEYS}


# ---------------------------------------------------------------------------
# temperature maps
# ---------------------------------------------------------------------------

def default_temperature_axes(points: int = 12) -> Tuple[Axis, Axis]:
    """``T_o`` from 10^-0.75 to 100 solar units (hits 1 exactly), ``T_p`` from 58 K to 5.8e5 K."""
    t_o = K_SOLAR * 10.0 ** np.linspace(-0.75, 2.0, points)
    t_p = K_SOLAR * 10.0 ** np.linspace(-2.0, 2.0, points)
    return (Axis("T_o_K", tuple(t_o)), Axis("T_p_K", tuple(t_p)))


def _exciton_cell(task) -> dict:
    scenario, ring, bath = task
    try:
        ss = steady_state(assemble_liouvillian(scenario, ring, bath, None), exact_gap=False)
    except SolverError as exc:
        return {"exciton_number": None, **_failed_diagnostics(), "flags": ["failed"],
                "error": str(exc)}
    flags = list(ss.flags)
    if ss.is_ambiguous:
        flags.append("failed")
    return {"exciton_number": ss.exciton_number(), **_diagnostics(ss), "flags": flags}


def temperature_map(ring: RingSpec, axes: Optional[Tuple[Axis, Axis]] = None,
                    scenarios: Sequence[str] = SCENARIO_ORDER, bath: Optional[BathSpec] = None,
                    threads: Optional[int] = 1) -> SweepGrid:
    """Steady-state exciton number without a trap over a ``(T_o, T_p)`` grid."""
    axes = axes or default_temperature_axes()
    bath = bath or BathSpec()
    scenarios = tuple(ScenarioKind.parse(s).value for s in scenarios)
    tasks, keys = [], []
    for s in scenarios:
        for i, t_o in enumerate(axes[0].values):
            for j, t_p in enumerate(axes[1].values):
                tasks.append((s, ring, replace(bath, T_o=t_o, T_p=t_p)))
                keys.append({"scenario": s, "i": i, "j": j, axes[0].name: t_o, axes[1].name: t_p})
    results = parallel_map(_exciton_cell, tasks, threads)
    grid = SweepGrid(axes, scenarios, "exciton_number")
    grid.records = [{**k, **r} for k, r in zip(keys, results)]
    return grid


def ratio_map(grid: SweepGrid, numerator: str, denominator: str,
              key: Optional[str] = None) -> np.ndarray:
    num = grid.values(numerator, key)
    den = grid.values(denominator, key)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(den) > 0, num / den, np.nan)


# ---------------------------------------------------------------------------
# P-V curves
# ---------------------------------------------------------------------------

@dataclass
class PVPoint:
    gamma_t: float
    voltage: Optional[float]
    current: Optional[float]
    power: Optional[float]
    power_limit: Optional[float]
    flags: List[str] = field(default_factory=list)


@dataclass
class PVCurve:
    scenario: str
    points: List[PVPoint]
    gamma_o: float

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(p, name) is None else getattr(p, name)
                         for p in self.points], dtype=float)

    @property
    def peak_power(self) -> float:
        return float(np.nanmax(self.column("power")))


def default_gamma_t_grid(gamma_o: float = model.DEFAULT_GAMMA_O, points: int = 61) -> np.ndarray:
    return np.geomspace(1e-6 * gamma_o, 1e4 * gamma_o, points)


def pv_curve(scenario, ring: RingSpec, bath: BathSpec, trap: TrapSpec,
             imperfections: Optional[ImperfectionSpec] = None,
             gamma_t_grid: Optional[Sequence[float]] = None) -> PVCurve:
    """Current, voltage and power along a ``gamma_t`` sweep.

    The reference ``power_limit = I (omega + 2S)`` is the current times the
    largest voltage the trap could deliver.
    """
    scenario = ScenarioKind.parse(scenario)
    grid = default_gamma_t_grid(bath.gamma_o) if gamma_t_grid is None else np.asarray(gamma_t_grid)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("gamma_t grid must be positive and strictly increasing")
    L = assemble_liouvillian(scenario, ring, bath, trap, imperfections)
    v_max = ring.omega + 2.0 * abs(ring.hopping)
    points = []
    for gt in grid:
        Lg = L.with_trap_rate(float(gt))
        try:
            ss = steady_state(Lg, exact_gap=False)
        except SolverError as exc:
            log.warning("P-V point %s at gamma_t=%g failed: %s", scenario.value, gt, exc)
            points.append(PVPoint(float(gt), None, None, None, None, ["failed"]))
            continue
        m = photocell_metrics(ss, Lg.trap, bath)
        points.append(PVPoint(float(gt), m.voltage, m.current, m.power, m.current * v_max,
                              list(m.flags)))
    return PVCurve(scenario.value, points, bath.gamma_o)


# ---------------------------------------------------------------------------
# power surfaces and enhancement maps
# ---------------------------------------------------------------------------

def default_surface_axes(points: int = 15) -> Tuple[Axis, Axis]:
    return (Axis.log("hopping_eV", 5e-3, 0.2, points), Axis.log("gamma_x_eV", 1e-8, 1e-3, points))


def _power_cell(task) -> dict:
    scenario, n_sites, hopping, bath, trap, imperfections, n_grid = task
    if hopping == 0:
        return {"power": None, "gamma_t": None, "voltage": None, "current": None,
                "flags": ["degenerate_hopping", "failed"]}
    ring = RingSpec.uniform(n_sites, hopping=hopping)
    try:
        L = assemble_liouvillian(scenario, ring, bath, trap, imperfections)
        opt = optimize_trap_rate(L, bath, n_grid=n_grid)
    except SolverError as exc:
        return {"power": None, "gamma_t": None, "voltage": None, "current": None,
                "flags": ["failed"], "error": str(exc)}
    m = opt.metrics
    return {"power": m.power, "gamma_t": opt.gamma_t, "voltage": m.voltage,
            "current": m.current, "evaluations": opt.evaluations,
            "flags": sorted(set(opt.flags) | set(m.flags))}


def power_surface(scenarios: Sequence[str] = SCENARIO_ORDER, axes: Optional[Tuple[Axis, Axis]] = None,
                  bath: Optional[BathSpec] = None, trap: Optional[TrapSpec] = None,
                  imperfections: Optional[ImperfectionSpec] = None, n_sites: int = 4,
                  n_grid: int = 31, threads: Optional[int] = 1) -> SweepGrid:
    """Optimised output power over a ``(S, gamma_x)`` grid.

    The trap energy follows each scenario's default for the cell's ``S``.
    """
    axes = axes or default_surface_axes()
    bath = bath or BathSpec()
    trap = replace(trap or TrapSpec(), omega_t=None)
    scenarios = tuple(ScenarioKind.parse(s).value for s in scenarios)
    tasks, keys = [], []
    for s in scenarios:
        for i, hop in enumerate(axes[0].values):
            for j, gx in enumerate(axes[1].values):
                tasks.append((s, n_sites, hop, bath, replace(trap, gamma_x=gx), imperfections, n_grid))
                keys.append({"scenario": s, "i": i, "j": j, axes[0].name: hop, axes[1].name: gx})
    results = parallel_map(_power_cell, tasks, threads)
    grid = SweepGrid(axes, scenarios, "power")
    grid.records = [{**k, **r} for k, r in zip(keys, results)]
    return grid


def crossing_locus(grid: SweepGrid, first: str = "ratchets",
                   second: str = "np") -> List[Tuple[float, Optional[float]]]:
    """For each row of the first axis, the second-axis value where ``first`` stops winning.

    The crossing is interpolated linearly in ``log`` of the second axis;
    ``None`` means no sign change along the row.
    """
    a, b = grid.values(first), grid.values(second)
    xs = np.log10(grid.axes[1].values)
    out = []
    for i, row_val in enumerate(grid.axes[0].values):
        diff = a[i] - b[i]
        cross = None
        for j in range(len(xs) - 1):
            d0, d1 = diff[j], diff[j + 1]
            if np.isfinite(d0) and np.isfinite(d1) and d0 > 0 >= d1:
                t = d0 / (d0 - d1)
                cross = float(10.0 ** (xs[j] + t * (xs[j + 1] - xs[j])))
                break
        out.append((float(row_val), cross))
    return out


@dataclass
class EnhancementMaps:
    ratio_np: np.ndarray
    percent_fd: np.ndarray
    max_ratio: float
    max_ratio_at: Tuple[float, float]
    max_percent: float
    max_percent_at: Tuple[float, float]


def _guarded_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    floor = POWER_FLOOR * np.nanmax(np.abs(den)) if np.any(np.isfinite(den)) else np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.abs(den) > floor, num / den, np.nan)


def _argmax_location(grid: SweepGrid, values: np.ndarray) -> Tuple[float, Tuple[float, float]]:
    if not np.any(np.isfinite(values)):
        return float("nan"), (float("nan"), float("nan"))
    i, j = np.unravel_index(np.nanargmax(values), values.shape)
    return float(values[i, j]), (grid.axes[0].values[i], grid.axes[1].values[j])


def relative_enhancement(grid: SweepGrid) -> EnhancementMaps:
    """Ratchets over NP as a factor and over FD as a percentage, with their maxima."""
    ratchets = grid.values("ratchets")
    ratio = _guarded_ratio(ratchets, grid.values("np"))
    percent = 100.0 * (_guarded_ratio(ratchets, grid.values("fd")) - 1.0)
    mr, at_r = _argmax_location(grid, ratio)
    mp, at_p = _argmax_location(grid, percent)
    return EnhancementMaps(ratio, percent, mr, at_r, mp, at_p)


# ---------------------------------------------------------------------------
# disorder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisorderConfig:
    sigma: float
    n_realizations: int = 100
    rng_seed: int = 20240601
    center: Optional[float] = None  # None: the clean site energy 1.8 eV - 2S

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("disorder sigma must be >= 0")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if not 0 <= self.rng_seed < 2 ** 64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")


def disorder_site_energies(config: DisorderConfig, n_sites: int, hopping: float) -> np.ndarray:
    """``(n_realizations, n_sites)`` normal site energies, one child stream per realization."""
    center = model.default_site_energy(hopping) if config.center is None else config.center
    children = np.random.SeedSequence(config.rng_seed).spawn(config.n_realizations)
    out = np.empty((config.n_realizations, n_sites))
    for r, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        out[r] = center + config.sigma * rng.standard_normal(n_sites)
    return out


@dataclass
class DisorderResult:
    scenario: str
    gamma_t: np.ndarray
    mean_current: np.ndarray
    mean_voltage: np.ndarray
    n_used: int
    n_failed: int
    convergence: Dict[int, float]  # sub-ensemble size -> peak of averaged power

    @property
    def mean_power(self) -> np.ndarray:
        return self.mean_current * self.mean_voltage

    @property
    def peak_power(self) -> float:
        return float(np.max(self.mean_power))


def _disorder_realization(task):
    scenario, energies, hopping, bath, trap, grid = task
    ring = RingSpec(len(energies), tuple(float(e) for e in energies), hopping)
    try:
        curve = pv_curve(scenario, ring, bath, trap, gamma_t_grid=grid)
    except (SolverError, ValueError) as exc:
        return None, str(exc)
    if any("failed" in p.flags for p in curve.points):
        return None, "steady-state failure on the gamma_t grid"
    return (curve.column("current"), curve.column("voltage")), None


def _subensemble_sizes(n: int) -> List[int]:
    sizes, m = [], 1
    while m < n:
        sizes.append(m)
        m *= 10
    return sizes + [n]


def disorder_ensemble(config: DisorderConfig, scenarios: Sequence[str] = ("ratchets", "np"),
                      gamma_t_grid: Optional[Sequence[float]] = None,
                      bath: Optional[BathSpec] = None, trap: Optional[TrapSpec] = None,
                      n_sites: int = 4, hopping: float = model.DEFAULT_HOPPING,
                      threads: Optional[int] = 1) -> Dict[str, DisorderResult]:
    """Ensemble-averaged P-V data under Gaussian site-energy disorder.

    Every realization goes through the numeric eigenbasis pipeline.  Trap
    energies stay at their clean-ring values.  Current and voltage are
    averaged separately at each ``gamma_t``.
    """
    bath = bath or BathSpec()
    trap = trap or TrapSpec()
    grid = default_gamma_t_grid(bath.gamma_o, 31) if gamma_t_grid is None else np.asarray(gamma_t_grid)
    clean = RingSpec.uniform(n_sites, hopping=hopping)
    energies = disorder_site_energies(config, n_sites, hopping)
    out = {}
    for s in scenarios:
        kind = ScenarioKind.parse(s)
        if kind is ScenarioKind.FORCED_DARK:
            raise ValueError("forced-dark is undefined for disordered rings")
        fixed = replace(trap, omega_t=model.default_trap_energy(kind, clean)
                        if trap.omega_t is None else trap.omega_t)
        tasks = [(kind.value, e, hopping, bath, fixed, grid) for e in energies]
        results = parallel_map(_disorder_realization, tasks, threads)
        good = [r for r, err in results if r is not None]
        n_failed = len(results) - len(good)
        if n_failed:
            log.warning("%s: %d of %d disorder realizations dropped", kind.value, n_failed, len(results))
        if not good:
            raise SolverError(f"all disorder realizations failed for {kind.value}")
        currents = np.array([c for c, _ in good])
        voltages = np.array([v for _, v in good])
        convergence = {m: float(np.max(currents[:m].mean(axis=0) * voltages[:m].mean(axis=0)))
                       for m in _subensemble_sizes(len(good))}
        out[kind.value] = DisorderResult(kind.value, grid, currents.mean(axis=0),
                                         voltages.mean(axis=0), len(good), n_failed, convergence)
    return out


# ---------------------------------------------------------------------------
# imperfections
# ---------------------------------------------------------------------------

def imperfection_sweep(kind: str, rates: Sequence[float], scenarios: Sequence[str] = SCENARIO_ORDER,
                       ring: Optional[RingSpec] = None, bath: Optional[BathSpec] = None,
                       trap: Optional[TrapSpec] = None,
                       gamma_t_grid: Optional[Sequence[float]] = None) -> Dict[Tuple[str, float], PVCurve]:
    """P-V curve families with non-radiative decay or exciton-exciton annihilation switched on."""
    if kind not in ("non_radiative", "eea"):
        raise ValueError(f"unknown imperfection kind {kind!r}")
    if any(r < 0 for r in rates):
        raise ValueError("imperfection rates must be >= 0")
    ring = ring or RingSpec.uniform()
    bath = bath or BathSpec()
    trap = trap or TrapSpec()
    out = {}
    for s in scenarios:
        s = ScenarioKind.parse(s).value
        for rate in rates:
            imp = ImperfectionSpec(gamma_nr=rate) if kind == "non_radiative" else ImperfectionSpec(gamma_eea=rate)
            out[(s, float(rate))] = pv_curve(s, ring, bath, trap, imp, gamma_t_grid)
    return out


# ---------------------------------------------------------------------------
# EEA structure
# ---------------------------------------------------------------------------

DEGENERACY_TOL = 1e-9
AMPLITUDE_TOL = 1e-9


@dataclass
class EEAReport:
    d_character: float
    dipole_fraction: float  # three-level ring, strongest band-1 target
    dipole_fraction_two_level: float  # same transition without D levels
    n_forbidden_targets: int
    n_allowed_targets: int
    flags: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"d_character": self.d_character, "dipole_fraction": self.dipole_fraction,
                "dipole_fraction_two_level": self.dipole_fraction_two_level,
                "n_forbidden_targets": self.n_forbidden_targets,
                "n_allowed_targets": self.n_allowed_targets, "flags": list(self.flags)}


def _level_groups(energies: np.ndarray, idx: np.ndarray) -> List[np.ndarray]:
    groups: List[List[int]] = []
    for m in idx[np.argsort(energies[idx], kind="stable")]:
        if groups and abs(energies[m] - energies[groups[-1][-1]]) < DEGENERACY_TOL:
            groups[-1].append(int(m))
        else:
            groups.append([int(m)])
    return [np.array(g) for g in groups]


def _band2_to_band1(H: np.ndarray, number_op: np.ndarray, lowering: np.ndarray,
                    projector: Optional[np.ndarray] = None):
    """Amplitudes from the lowest band-2 level into every band-1 level.

    Degenerate levels are handled as subspaces: the amplitude into a level is
    the norm of the projected dipole image, averaged over the source level.
    """
    es = numeric_diagonalize(H, number_op)
    groups2 = _level_groups(es.energies, es.band(2))
    source = groups2[0]
    degenerate = len(source) > 1
    vecs = es.vectors
    image = lowering @ vecs[:, source]  # columns: J- |G2_s>
    amps = []
    for g in _level_groups(es.energies, es.band(1)):
        proj = vecs[:, g].conj().T @ image
        amps.append((g, float(np.sqrt(np.sum(np.abs(proj) ** 2) / len(source)))))
    d_char = None
    if projector is not None:
        weights = np.abs(vecs[:, source]) ** 2
        d_char = float(weights[projector].sum() / len(source))
    return amps, d_char, degenerate


def eea_structural_analysis(ring: Optional[RingSpec] = None) -> EEAReport:
    """Structure of the lowest two-exciton state when sites carry a doubly excited level.

    Reports the weight of doubly excited site configurations in that state,
    the dipole amplitude (unit single-site dipole) into each single-exciton
    level, and the same amplitude in the plain two-level ring.
    """
    ring = ring or RingSpec.uniform()
    n = ring.n_sites
    flags: List[str] = []
    H3 = build_three_level_hamiltonian(ring)
    lower3 = sum(three_level_ladder(n, i, False) + three_level_ladder(n, i, True) for i in range(n))
    amps3, d_char, deg3 = _band2_to_band1(H3, three_level_number_operator(n), lower3,
                                          d_character_projector(n))
    H2 = model.build_ring_hamiltonian(ring)
    lower2 = model.build_collective_dipole(ring, "lower")
    amps2, _, deg2 = _band2_to_band1(H2, model.number_operator(n), lower2)
    if deg3 or deg2:
        flags.append("degenerate_band2_bottom")
    allowed = [(g, a) for g, a in amps3 if a > AMPLITUDE_TOL]
    forbidden = sum(len(g) for g, a in amps3 if a <= AMPLITUDE_TOL)
    n_allowed = sum(len(g) for g, _ in allowed)
    best3 = max(a for _, a in amps3)
    best2 = max(a for _, a in amps2)
    return EEAReport(float(d_char), float(best3), float(best2), int(forbidden), int(n_allowed), flags)
