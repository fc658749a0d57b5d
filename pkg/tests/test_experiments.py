import numpy as np
import pytest

from optical_ratchet import experiments as ex
from optical_ratchet.model import BathSpec, RingSpec, TrapSpec


def _square(x):
    return x * x


def test_axis_validation():
    with pytest.raises(ValueError):
        ex.Axis("x", ())
    with pytest.raises(ValueError):
        ex.Axis("x", (1.0,), "cubic")
    assert len(ex.Axis.log("x", 1.0, 100.0, 3)) == 3


def test_parallel_map_keeps_order():
    tasks = list(range(7))
    assert ex.parallel_map(_square, tasks, threads=1) == [t * t for t in tasks]
    assert ex.parallel_map(_square, tasks, threads=2) == [t * t for t in tasks]


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("RATCHET_THREADS", "3")
    assert ex.resolve_threads(None) == 3
    assert ex.resolve_threads(0) == 1


def test_default_temperature_axes_hit_solar_point():
    t_o, t_p = ex.default_temperature_axes()
    assert min(abs(np.array(t_o.values) - 5800.0)) < 1e-6
    assert t_p.values[0] == pytest.approx(58.0)
    assert t_p.values[-1] == pytest.approx(5.8e5)


def test_temperature_map_small():
    axes = (ex.Axis("T_o_K", (5800.0, 58000.0)), ex.Axis("T_p_K", (300.0, 3000.0)))
    grid = ex.temperature_map(RingSpec(), axes)
    for s in ("ratchets", "fd", "np"):
        n = grid.values(s)
        assert n.shape == (2, 2) and np.all(np.isfinite(n))
    # no phonons: the phonon temperature cannot matter
    n_np = grid.values("np")
    assert np.allclose(n_np[:, 0], n_np[:, 1], rtol=1e-9)
    ratio = ex.ratio_map(grid, "ratchets", "np")
    assert np.all(ratio > 1)
    assert not grid.failed()


def test_pv_curve_properties():
    grid = np.geomspace(1e-10, 1e-4, 7)
    curve = ex.pv_curve("ratchets", RingSpec(), BathSpec(), TrapSpec(), gamma_t_grid=grid)
    I, V, P = (curve.column(k) for k in ("current", "voltage", "power"))
    assert np.all(np.diff(I) > 0)
    assert np.all(np.diff(V) < 0)
    assert np.allclose(P, I * V)
    assert np.allclose(curve.column("power_limit"), I * 1.84)
    assert curve.peak_power == pytest.approx(P.max())
    with pytest.raises(ValueError):
        ex.pv_curve("ratchets", RingSpec(), BathSpec(), TrapSpec(), gamma_t_grid=[1e-6, 1e-7])


def test_power_surface_small_and_zero_hopping_cell():
    axes = (ex.Axis("hopping_eV", (0.0, 0.02)), ex.Axis("gamma_x_eV", (1e-7,)))
    grid = ex.power_surface(("ratchets", "np"), axes, n_grid=25)
    assert "failed" in grid.flags("ratchets")[0][0]
    assert grid.values("ratchets")[0, 0] != grid.values("ratchets")[0, 0]  # NaN
    p_r, p_np = grid.values("ratchets")[1, 0], grid.values("np")[1, 0]
    assert p_r > p_np > 0
    assert len(grid.failed()) == 2


def test_crossing_locus_interpolates():
    axes = (ex.Axis("a", (1.0,)), ex.Axis("b", (1.0, 10.0, 100.0)))
    grid = ex.SweepGrid(axes, ("ratchets", "np"), "power")
    for j, (r, n) in enumerate([(3.0, 1.0), (1.0, 1.0), (0.5, 1.0)]):
        grid.records.append({"scenario": "ratchets", "i": 0, "j": j, "power": r, "flags": []})
        grid.records.append({"scenario": "np", "i": 0, "j": j, "power": n, "flags": []})
    assert ex.crossing_locus(grid) == [(1.0, pytest.approx(10.0))]


def test_enhancement_guard_against_tiny_denominators():
    axes = (ex.Axis("a", (1.0, 2.0)), ex.Axis("b", (1.0,)))
    grid = ex.SweepGrid(axes, ("ratchets", "fd", "np"), "power")
    for s, vals in (("ratchets", (2.0, 1.0)), ("fd", (1.0, 1.0)), ("np", (1.0, 1e-20))):
        for i, v in enumerate(vals):
            grid.records.append({"scenario": s, "i": i, "j": 0, "power": v, "flags": []})
    maps = ex.relative_enhancement(grid)
    assert maps.max_ratio == pytest.approx(2.0)
    assert np.isnan(maps.ratio_np[1, 0])
    assert maps.max_percent == pytest.approx(100.0)
    assert maps.max_percent_at == (1.0, 1.0)


def test_disorder_energies_reproducible():
    cfg = ex.DisorderConfig(0.02, 5, rng_seed=11)
    a = ex.disorder_site_energies(cfg, 4, 0.02)
    b = ex.disorder_site_energies(cfg, 4, 0.02)
    assert np.array_equal(a, b)
    assert a.shape == (5, 4)
    # a longer ensemble extends the shorter one
    c = ex.disorder_site_energies(ex.DisorderConfig(0.02, 8, rng_seed=11), 4, 0.02)
    assert np.array_equal(a, c[:5])
    with pytest.raises(ValueError):
        ex.DisorderConfig(-0.1)


def test_zero_disorder_reproduces_clean_ring():
    grid = np.geomspace(1e-9, 1e-5, 5)
    res = ex.disorder_ensemble(ex.DisorderConfig(0.0, 2), ("ratchets",), gamma_t_grid=grid)
    clean = ex.pv_curve("ratchets", RingSpec(), BathSpec(), TrapSpec(), gamma_t_grid=grid)
    r = res["ratchets"]
    assert r.n_used == 2 and r.n_failed == 0
    assert np.allclose(r.mean_power, clean.column("power"), rtol=1e-8)
    assert set(r.convergence) == {1, 2}
    with pytest.raises(ValueError):
        ex.disorder_ensemble(ex.DisorderConfig(0.01, 1), ("fd",), gamma_t_grid=grid)


def test_imperfection_sweep():
    grid = np.geomspace(1e-9, 1e-5, 5)
    out = ex.imperfection_sweep("non_radiative", [0.0, 1e-6], ("ratchets",), gamma_t_grid=grid)
    assert out[("ratchets", 1e-6)].peak_power < out[("ratchets", 0.0)].peak_power
    with pytest.raises(ValueError):
        ex.imperfection_sweep("heat", [0.0])
    with pytest.raises(ValueError):
        ex.imperfection_sweep("eea", [-1.0])


def test_eea_structure():
    rep = ex.eea_structural_analysis()
    assert rep.d_character == pytest.approx(1 / 6, abs=1e-9)
    # D admixture weakens the band-2 to band-1 transition; sqrt(2) - 1 without D levels
    assert rep.dipole_fraction_two_level == pytest.approx(np.sqrt(2) - 1, abs=1e-9)
    assert 0 < rep.dipole_fraction < rep.dipole_fraction_two_level
    assert rep.n_allowed_targets >= 1
    assert rep.n_forbidden_targets + rep.n_allowed_targets == 4
    assert set(rep.as_dict()) >= {"d_character", "dipole_fraction", "flags"}
