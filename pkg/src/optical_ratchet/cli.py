"""Command-line front end.

Every run takes one JSON document (all keys optional).  Any key can also be
set from the command line as a dotted flag, e.g. ``--trap.gamma_x 1e-6`` or
``--ring.hopping=0.05``; flags win over the file.  Each subcommand writes CSV
data, a JSON manifest holding the resolved config, and SVG plots on request.

Exit codes: 0 success, 2 config error, 3 solver error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import jsonschema
import numpy as np
import scipy

from . import __version__, experiments, output
from .engine import SolverError, assemble_liouvillian, photocell_metrics, steady_state
from .model import (BathSpec, Collective, ImperfectionSpec, RingSpec, ScenarioKind,
                    SingleSite, TrapSpec)
from .spectral import ring_classification, spectrum_rows

log = logging.getLogger("optical_ratchet")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("spectrum", "steadystate", "iv-curve", "sweep", "tempmap",
               "disorder", "imperfections", "eea")
FATAL_FLAGS = ("failed", "ambiguous")


class ConfigError(ValueError):
    """Bad configuration; the message starts with the offending key path."""


def _range(lo, hi, points):
    return {"min": lo, "max": hi, "points": points}


DEFAULTS: dict = {
    "scenario": "ratchets",
    "seed": 20240601,
    "ring": {"n_sites": 4, "hopping": 0.02, "site_energies": None},
    "bath": {"gamma_o": 1e-6, "T_o": 5800.0, "gamma_p": 1e-3, "T_p": 300.0},
    "trap": {"enabled": True, "omega_t": None, "gamma_t": 1e-6, "gamma_x": 1e-7,
             "extraction": "single_site", "extraction_site": 0},
    "imperfections": {"gamma_nr": 0.0, "gamma_eea": 0.0},
    "experiment": {
        "scenarios": ["ratchets", "fd", "np"],
        "gamma_t_grid": _range(1e-12, 1e-2, 61),
        "optimizer_grid_points": 31,
        "sweep": {"hopping": _range(5e-3, 0.2, 15), "gamma_x": _range(1e-8, 1e-3, 15)},
        "tempmap": {"T_o": _range(5800.0 * 10 ** -0.75, 5800.0 * 100, 12),
                    "T_p": _range(58.0, 5800.0 * 100, 12)},
        "disorder": {"sigma": 0.02, "n_realizations": 100, "center": None,
                     "scenarios": ["ratchets", "np"], "gamma_t_points": 31},
        "imperfections": {"kind": "non_radiative", "rates": [0.0, 1e-7, 1e-6, 1e-5]},
    },
    "output": {"directory": "results"},
}

_RATE = {"type": "number", "minimum": 0}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_SCENARIO = {"type": "string", "enum": ["ratchets", "fd", "np", "no_phonons", "forced_dark"]}
_GRID = {"type": "object", "properties": {"min": _POSITIVE, "max": _POSITIVE,
                                          "points": {"type": "integer", "minimum": 2}}}

SCHEMA = {
    "type": "object",
    "properties": {
        "scenario": _SCENARIO,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "ring": {"type": "object", "properties": {
            "n_sites": {"type": "integer", "minimum": 1, "maximum": 12},
            "hopping": {"type": "number"},
            "site_energies": {"type": ["array", "null"], "items": _POSITIVE},
        }},
        "bath": {"type": "object", "properties": {
            "gamma_o": _RATE, "T_o": _POSITIVE, "gamma_p": _RATE, "T_p": _POSITIVE}},
        "trap": {"type": "object", "properties": {
            "enabled": {"type": "boolean"},
            "omega_t": {"type": ["number", "null"], "minimum": 0},
            "gamma_t": _RATE, "gamma_x": _RATE,
            "extraction": {"type": "string", "enum": ["single_site", "collective"]},
            "extraction_site": {"type": "integer", "minimum": 0},
        }},
        "imperfections": {"type": "object", "properties": {"gamma_nr": _RATE, "gamma_eea": _RATE}},
        "experiment": {"type": "object", "properties": {
            "scenarios": {"type": "array", "items": _SCENARIO, "minItems": 1},
            "gamma_t_grid": _GRID,
            "optimizer_grid_points": {"type": "integer", "minimum": 25},
            "sweep": {"type": "object", "properties": {"hopping": _GRID, "gamma_x": _GRID}},
            "tempmap": {"type": "object", "properties": {"T_o": _GRID, "T_p": _GRID}},
            "disorder": {"type": "object", "properties": {
                "sigma": _RATE, "n_realizations": {"type": "integer", "minimum": 1},
                "center": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "scenarios": {"type": "array", "items": _SCENARIO, "minItems": 1},
                "gamma_t_points": {"type": "integer", "minimum": 2}}},
            "imperfections": {"type": "object", "properties": {
                "kind": {"type": "string", "enum": ["non_radiative", "eea"]},
                "rates": {"type": "array", "items": _RATE, "minItems": 1}}},
        }},
        "output": {"type": "object", "properties": {"directory": {"type": "string", "minLength": 1}}},
    },
}


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _merge(base: dict, update: dict, path: str = "") -> dict:
    """Overlay ``update`` on ``base``, rejecting keys ``base`` does not have."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens: Sequence[str]) -> Dict[str, object]:
    """``["--a.b", "1", "--c=x"]`` -> ``{"a.b": 1, "c": "x"}``."""
    out: Dict[str, object] = {}
    tokens = list(tokens)
    k = 0
    while k < len(tokens):
        tok = tokens[k]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            if k + 1 >= len(tokens):
                raise ConfigError(f"{key}: missing value")
            k += 1
            raw = tokens[k]
        out[key] = _parse_value(raw)
        k += 1
    return out


def _nest(dotted: Dict[str, object]) -> dict:
    tree: dict = {}
    for key, value in dotted.items():
        parts = key.split(".")
        node = tree
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: conflicts with another flag")
        node[parts[-1]] = value
    return tree


def _check_grid(cfg: dict, path: str):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if not node["min"] < node["max"]:
        raise ConfigError(f"{path}.min: must be below {path}.max")


def parse_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None,
                 scenario: Optional[str] = None) -> dict:
    """Resolved config: defaults, then the file, then dotted flags, then ``--scenario``.

    An explicit ``--scenario`` also narrows the multi-scenario experiment lists
    to that one scenario.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError:
            raise
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg = _merge(cfg, doc)
    if overrides:
        cfg = _merge(cfg, _nest(overrides))
    if scenario is not None:
        try:
            scenario = ScenarioKind.parse(scenario).value
        except ValueError as exc:
            raise ConfigError(f"scenario: {exc}") from None
        cfg["scenario"] = scenario
        exp = cfg["experiment"]
        exp["scenarios"] = [scenario]
        exp["disorder"]["scenarios"] = [scenario]

    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}")

    # canonical scenario names and cross-field checks
    cfg["scenario"] = ScenarioKind.parse(cfg["scenario"]).value
    exp = cfg["experiment"]
    exp["scenarios"] = [ScenarioKind.parse(s).value for s in exp["scenarios"]]
    exp["disorder"]["scenarios"] = [ScenarioKind.parse(s).value for s in exp["disorder"]["scenarios"]]
    for g in ("experiment.gamma_t_grid", "experiment.sweep.hopping", "experiment.sweep.gamma_x",
              "experiment.tempmap.T_o", "experiment.tempmap.T_p"):
        _check_grid(cfg, g)
    ring = cfg["ring"]
    if ring["site_energies"] is not None and len(ring["site_energies"]) != ring["n_sites"]:
        raise ConfigError(f"ring.site_energies: expected {ring['n_sites']} entries, "
                          f"got {len(ring['site_energies'])}")
    if cfg["trap"]["extraction_site"] >= ring["n_sites"]:
        raise ConfigError("trap.extraction_site: must be below ring.n_sites")
    if "fd" in exp["disorder"]["scenarios"]:
        raise ConfigError("experiment.disorder.scenarios: forced-dark is undefined under disorder")
    return cfg


# ---------------------------------------------------------------------------
# config -> model objects
# ---------------------------------------------------------------------------

def build_ring(cfg: dict, hopping: Optional[float] = None) -> RingSpec:
    r = cfg["ring"]
    energies = None if r["site_energies"] is None else tuple(r["site_energies"])
    return RingSpec(r["n_sites"], energies, r["hopping"] if hopping is None else hopping)


def build_bath(cfg: dict) -> BathSpec:
    return BathSpec(**cfg["bath"])


def build_trap(cfg: dict) -> Optional[TrapSpec]:
    t = cfg["trap"]
    if not t["enabled"]:
        return None
    extraction = Collective() if t["extraction"] == "collective" else SingleSite(t["extraction_site"])
    return TrapSpec(t["omega_t"], t["gamma_t"], t["gamma_x"], extraction)


def build_imperfections(cfg: dict) -> ImperfectionSpec:
    return ImperfectionSpec(**cfg["imperfections"])


def gamma_t_grid(cfg: dict, points: Optional[int] = None) -> np.ndarray:
    g = cfg["experiment"]["gamma_t_grid"]
    return np.geomspace(g["min"], g["max"], points or g["points"])


def _axis(name: str, g: dict) -> experiments.Axis:
    return experiments.Axis.log(name, g["min"], g["max"], g["points"])


# ---------------------------------------------------------------------------
# subcommands; each returns (files written, summary for the manifest, fatal count)
# ---------------------------------------------------------------------------

def _flags_of(record) -> List[str]:
    return list(record.get("flags") or [])


def _fatal(flags: Sequence[str]) -> bool:
    return any(f in FATAL_FLAGS for f in flags)


def run_spectrum(cfg, out: Path, plot: bool, threads: int):
    ring = build_ring(cfg)
    rows = spectrum_rows(ring)
    files = [output.write_csv(out / "spectrum.csv",
                              ["band", "energy_eV", "gamma_plus", "gamma_minus", "label"], rows)]
    if plot:
        series = {}
        for label in ("ratchet", "bright", "dark", "ground"):
            pts = [(r["band"], r["energy_eV"]) for r in rows if r["label"] == label]
            if pts:
                series[label] = ([p[0] for p in pts], [p[1] for p in pts])
        files.append(output.line_plot(out / "spectrum.svg", series, "band (excitations)",
                                      "energy (eV)", "ring spectrum", markers=True))
    labels = [r["label"] for r in rows]
    summary = {"n_states": len(rows), "n_ratchet": labels.count("ratchet")}
    return files, summary, 0


STEADY_COLUMNS = ["scenario", "gamma_t_eV", "omega_t_eV", "exciton_number", "rho_alpha",
                  "rho_beta", "current_gamma_o", "current_A", "voltage_V", "power_gamma_o_eV",
                  "residual", "trace_error", "hermiticity_error", "uniqueness_gap",
                  "positivity_deficit", "flags"]


def run_steadystate(cfg, out: Path, plot: bool, threads: int):
    ring, bath, trap = build_ring(cfg), build_bath(cfg), build_trap(cfg)
    L = assemble_liouvillian(cfg["scenario"], ring, bath, trap, build_imperfections(cfg))
    ss = steady_state(L)
    row = {"scenario": cfg["scenario"], "exciton_number": ss.exciton_number(),
           **{k: getattr(ss, k) for k in experiments.DIAGNOSTIC_KEYS}}
    flags = list(ss.flags)
    if L.trap is not None:
        m = photocell_metrics(ss, L.trap, bath)
        flags = list(m.flags)
        row.update({"gamma_t_eV": L.trap.gamma_t, "omega_t_eV": L.trap.omega_t,
                    "rho_alpha": m.rho_alpha, "rho_beta": m.rho_beta,
                    "current_gamma_o": m.current_gamma_o, "current_A": m.current_amperes,
                    "voltage_V": m.voltage, "power_gamma_o_eV": m.power_gamma_o_eV})
    row["flags"] = flags
    files = [output.write_csv(out / "steadystate.csv", STEADY_COLUMNS, [row])]

    es, labels, _ = ring_classification(ring)
    pops = ss.ring_populations()
    pop_rows = [{"state": m, "band": int(es.bands[m]), "energy_eV": float(es.energies[m]),
                 "label": labels[m], "population": float(pops[m])} for m in range(es.dim)]
    files.append(output.write_csv(out / "steadystate_populations.csv",
                                  ["state", "band", "energy_eV", "label", "population"], pop_rows))
    if plot:
        files.append(output.line_plot(
            out / "steadystate.svg", {"population": (es.energies, pops)}, "energy (eV)",
            "population", "eigenstate populations", logy=True, markers=True))
    return files, {"exciton_number": row["exciton_number"], "flags": flags}, int(_fatal(flags))


PV_COLUMNS = ["scenario", "gamma_t_eV", "voltage_V", "current_gamma_o", "power_gamma_o_eV",
              "power_limit_gamma_o_eV", "flags"]


def _pv_rows(curve: experiments.PVCurve, extra: Optional[dict] = None) -> List[dict]:
    g = curve.gamma_o
    rows = []
    for p in curve.points:
        rows.append({**(extra or {}), "scenario": curve.scenario, "gamma_t_eV": p.gamma_t,
                     "voltage_V": p.voltage,
                     "current_gamma_o": None if p.current is None else p.current / g,
                     "power_gamma_o_eV": None if p.power is None else p.power / g,
                     "power_limit_gamma_o_eV": None if p.power_limit is None else p.power_limit / g,
                     "flags": p.flags})
    return rows


def _require_trap(cfg) -> TrapSpec:
    trap = build_trap(cfg)
    if trap is None:
        raise ConfigError("trap.enabled: this subcommand needs a trap")
    return trap


def run_iv_curve(cfg, out: Path, plot: bool, threads: int):
    trap = _require_trap(cfg)
    curve = experiments.pv_curve(cfg["scenario"], build_ring(cfg), build_bath(cfg), trap,
                                 build_imperfections(cfg), gamma_t_grid(cfg))
    rows = _pv_rows(curve)
    files = [output.write_csv(out / "iv_curve.csv", PV_COLUMNS, rows)]
    if plot:
        g = curve.gamma_o
        files.append(output.line_plot(
            out / "iv_curve.svg", {curve.scenario: (curve.column("voltage"), curve.column("current") / g)},
            "voltage (V)", "current (e gamma_o)", "I-V curve"))
        files.append(output.line_plot(
            out / "pv_curve.svg", {curve.scenario: (curve.column("voltage"), curve.column("power") / g)},
            "voltage (V)", "power (gamma_o eV)", "P-V curve"))
    fatal = sum(_fatal(p.flags) for p in curve.points)
    return files, {"peak_power_gamma_o_eV": curve.peak_power / curve.gamma_o}, fatal


def run_sweep(cfg, out: Path, plot: bool, threads: int):
    exp = cfg["experiment"]
    trap = _require_trap(cfg)
    if cfg["ring"]["site_energies"] is not None:
        raise ConfigError("ring.site_energies: sweeps vary S and need the uniform ring")
    axes = (_axis("hopping_eV", exp["sweep"]["hopping"]), _axis("gamma_x_eV", exp["sweep"]["gamma_x"]))
    grid = experiments.power_surface(exp["scenarios"], axes, build_bath(cfg), trap,
                                     build_imperfections(cfg), cfg["ring"]["n_sites"],
                                     exp["optimizer_grid_points"], threads)
    g = cfg["bath"]["gamma_o"]
    rows = [{**r, "gamma_t_eV": r.get("gamma_t"), "voltage_V": r.get("voltage"),
             "current_gamma_o": None if r.get("current") is None else r["current"] / g,
             "power_gamma_o_eV": None if r.get("power") is None else r["power"] / g}
            for r in grid.records]
    cols = ["scenario", "i", "j", "hopping_eV", "gamma_x_eV", "gamma_t_eV", "voltage_V",
            "current_gamma_o", "power_gamma_o_eV", "evaluations", "flags"]
    files = [output.write_csv(out / "sweep.csv", cols, rows)]
    summary: dict = {}
    if "ratchets" in grid.scenarios and "np" in grid.scenarios and "fd" in grid.scenarios:
        enh = experiments.relative_enhancement(grid)
        erows = []
        for i, s in enumerate(axes[0].values):
            for j, gx in enumerate(axes[1].values):
                erows.append({"i": i, "j": j, "hopping_eV": s, "gamma_x_eV": gx,
                              "ratio_ratchets_np": enh.ratio_np[i, j],
                              "percent_ratchets_fd": enh.percent_fd[i, j]})
        files.append(output.write_csv(out / "enhancement.csv",
                                      ["i", "j", "hopping_eV", "gamma_x_eV", "ratio_ratchets_np",
                                       "percent_ratchets_fd"], erows))
        summary.update({"max_ratio_ratchets_np": enh.max_ratio,
                        "max_ratio_at": {"hopping_eV": enh.max_ratio_at[0], "gamma_x_eV": enh.max_ratio_at[1]},
                        "max_percent_ratchets_fd": enh.max_percent,
                        "max_percent_at": {"hopping_eV": enh.max_percent_at[0],
                                           "gamma_x_eV": enh.max_percent_at[1]}})
        if plot:
            files.append(output.heatmap(out / "enhancement_np.svg", enh.ratio_np.T, axes[0].values,
                                        axes[1].values, "S (eV)", "gamma_x (eV)", "ratchets / NP"))
            files.append(output.heatmap(out / "enhancement_fd.svg", enh.percent_fd.T, axes[0].values,
                                        axes[1].values, "S (eV)", "gamma_x (eV)", "ratchets vs FD (%)"))
    if "ratchets" in grid.scenarios and "np" in grid.scenarios:
        summary["crossing_ratchets_np"] = [{"hopping_eV": s, "gamma_x_eV": gx}
                                           for s, gx in experiments.crossing_locus(grid)]
    if plot:
        for s in grid.scenarios:
            files.append(output.heatmap(out / f"sweep_{s}.svg", grid.values(s).T / g, axes[0].values,
                                        axes[1].values, "S (eV)", "gamma_x (eV)",
                                        f"{s} optimal power (gamma_o eV)"))
    fatal = sum(_fatal(r["flags"]) for r in grid.records if "degenerate_hopping" not in r["flags"])
    summary["n_failed"] = fatal
    return files, summary, fatal


def run_tempmap(cfg, out: Path, plot: bool, threads: int):
    exp = cfg["experiment"]
    axes = (_axis("T_o_K", exp["tempmap"]["T_o"]), _axis("T_p_K", exp["tempmap"]["T_p"]))
    grid = experiments.temperature_map(build_ring(cfg), axes, exp["scenarios"], build_bath(cfg), threads)
    cols = ["scenario", "i", "j", "T_o_K", "T_p_K", "exciton_number",
            *experiments.DIAGNOSTIC_KEYS, "flags"]
    files = [output.write_csv(out / "tempmap.csv", cols, grid.records)]
    if plot:
        for s in grid.scenarios:
            files.append(output.heatmap(out / f"tempmap_{s}.svg", grid.values(s), axes[1].values,
                                        axes[0].values, "T_p (K)", "T_o (K)", f"{s} exciton number"))
    fatal = sum(_fatal(r["flags"]) for r in grid.records)
    return files, {"n_failed": fatal}, fatal


def run_disorder(cfg, out: Path, plot: bool, threads: int):
    d = cfg["experiment"]["disorder"]
    trap = _require_trap(cfg)
    if cfg["ring"]["site_energies"] is not None:
        raise ConfigError("ring.site_energies: disorder draws its own site energies")
    config = experiments.DisorderConfig(d["sigma"], d["n_realizations"], cfg["seed"], d["center"])
    results = experiments.disorder_ensemble(
        config, d["scenarios"], gamma_t_grid(cfg, d["gamma_t_points"]), build_bath(cfg), trap,
        cfg["ring"]["n_sites"], cfg["ring"]["hopping"], threads)
    g = cfg["bath"]["gamma_o"]
    rows, conv = [], []
    for s, res in results.items():
        for k, gt in enumerate(res.gamma_t):
            rows.append({"scenario": s, "gamma_t_eV": gt,
                         "mean_current_gamma_o": res.mean_current[k] / g,
                         "mean_voltage_V": res.mean_voltage[k],
                         "mean_power_gamma_o_eV": res.mean_power[k] / g})
        for m, peak in res.convergence.items():
            conv.append({"scenario": s, "n_realizations": m, "peak_power_gamma_o_eV": peak / g})
    files = [output.write_csv(out / "disorder.csv", ["scenario", "gamma_t_eV", "mean_current_gamma_o",
                                                     "mean_voltage_V", "mean_power_gamma_o_eV"], rows),
             output.write_csv(out / "disorder_convergence.csv",
                              ["scenario", "n_realizations", "peak_power_gamma_o_eV"], conv)]
    if plot:
        series = {s: (r.mean_voltage, r.mean_power / g) for s, r in results.items()}
        files.append(output.line_plot(out / "disorder.svg", series, "mean voltage (V)",
                                      "mean power (gamma_o eV)", f"disorder sigma = {d['sigma']} eV"))
    summary = {s: {"n_used": r.n_used, "n_failed": r.n_failed,
                   "peak_power_gamma_o_eV": r.peak_power / g} for s, r in results.items()}
    summary["rng_seed"] = cfg["seed"]
    fatal = sum(r.n_failed for r in results.values())
    return files, summary, fatal


def run_imperfections(cfg, out: Path, plot: bool, threads: int):
    imp = cfg["experiment"]["imperfections"]
    trap = _require_trap(cfg)
    curves = experiments.imperfection_sweep(imp["kind"], imp["rates"], cfg["experiment"]["scenarios"],
                                            build_ring(cfg), build_bath(cfg), trap, gamma_t_grid(cfg))
    rows = []
    for (s, rate), curve in curves.items():
        rows += _pv_rows(curve, {"kind": imp["kind"], "rate_eV": rate})
    files = [output.write_csv(out / "imperfections.csv", ["kind", "rate_eV", *PV_COLUMNS], rows)]
    if plot:
        g = cfg["bath"]["gamma_o"]
        series = {f"{s} {rate:g}": (c.column("voltage"), c.column("power") / g)
                  for (s, rate), c in curves.items()}
        files.append(output.line_plot(out / "imperfections.svg", series, "voltage (V)",
                                      "power (gamma_o eV)", f"{imp['kind']} rates"))
    summary = {f"{s}@{rate:g}": c.peak_power / c.gamma_o for (s, rate), c in curves.items()}
    fatal = sum(_fatal(r["flags"]) for r in rows)
    return files, {"peak_power_gamma_o_eV": summary}, fatal


def run_eea(cfg, out: Path, plot: bool, threads: int):
    report = experiments.eea_structural_analysis(build_ring(cfg))
    d = report.as_dict()
    rows = [{"quantity": k, "value": v} for k, v in d.items() if k != "flags"]
    rows.append({"quantity": "flags", "value": ";".join(report.flags)})
    files = [output.write_csv(out / "eea.csv", ["quantity", "value"], rows)]
    return files, d, 0


RUNNERS = {"spectrum": run_spectrum, "steadystate": run_steadystate, "iv-curve": run_iv_curve,
           "sweep": run_sweep, "tempmap": run_tempmap, "disorder": run_disorder,
           "imperfections": run_imperfections, "eea": run_eea}


def manifest(command: str, cfg: dict, files: Sequence[Path], summary: dict, out: Path) -> dict:
    return {"command": command, "config": cfg, "seed": cfg["seed"],
            "rng_algorithm": experiments.RNG_ALGORITHM, "code_version": __version__,
            "python_version": platform.python_version(), "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "outputs": [str(Path(f).relative_to(out)) for f in files], "summary": summary}


def run_subcommand(command: str, cfg: dict, plot: bool = False, strict: bool = False,
                   threads: Optional[int] = None) -> int:
    """Run one subcommand and write its artifacts; returns the exit status."""
    out = Path(cfg["output"]["directory"])
    threads = experiments.resolve_threads(threads)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_IO
    try:
        files, summary, fatal = RUNNERS[command](cfg, out, plot, threads)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        log.error("solver error: %s", exc)
        return EXIT_SOLVER
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    try:
        name = command.replace("-", "_")
        output.write_json(out / f"{name}.manifest.json", manifest(command, cfg, files, summary, out))
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    for f in files:
        log.info("wrote %s", f)
    if fatal:
        log.warning("%d flagged solver failures or ambiguous steady states", fatal)
        if strict:
            return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="optical-ratchet",
        description="Ring-antenna photocell simulator. Any config key may be given as a "
                    "dotted flag, e.g. --trap.gamma_x 1e-6.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--scenario", help="ratchets, fd or np")
    p.add_argument("--out", help="output directory (same as --output.directory)")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    p.add_argument("--strict", action="store_true",
                   help="exit 3 when any cell failed or is ambiguous")
    p.add_argument("--threads", type=int, help="worker processes (default RATCHET_THREADS or CPU count)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = parse_overrides(rest)
        if args.out is not None:
            overrides["output.directory"] = args.out
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads: must be >= 1")
        cfg = parse_config(args.config, overrides, args.scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return run_subcommand(args.command, cfg, args.plot, args.strict, args.threads)


if __name__ == "__main__":
    sys.exit(main())
