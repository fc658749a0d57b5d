import json

import pytest

from optical_ratchet import cli, output


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_defaults_resolve():
    cfg = cli.parse_config()
    assert cfg["ring"]["n_sites"] == 4 and cfg["trap"]["gamma_x"] == 1e-7
    assert cfg["experiment"]["scenarios"] == ["ratchets", "fd", "np"]


def test_precedence_file_then_flags_then_scenario(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"ring": {"hopping": 0.05}, "bath": {"T_p": 250.0}, "scenario": "fd"}))
    cfg = cli.parse_config(str(path), cli.parse_overrides(["--bath.T_p", "400", "--ring.n_sites=3"]),
                           "NP")
    assert cfg["ring"]["hopping"] == 0.05
    assert cfg["bath"]["T_p"] == 400
    assert cfg["ring"]["n_sites"] == 3
    assert cfg["scenario"] == "np"
    assert cfg["experiment"]["scenarios"] == ["np"]


@pytest.mark.parametrize("flags, where", [
    (["--trap.gamma_x", "-1"], "trap.gamma_x"),
    (["--trap.foo", "1"], "trap.foo"),
    (["--bath.T_p", "0"], "bath.T_p"),
    (["--ring.site_energies", "[1.7, 1.8]"], "ring.site_energies"),
    (["--experiment.gamma_t_grid.min", "1"], "experiment.gamma_t_grid.min"),
])
def test_config_errors_name_the_key(flags, where):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(None, cli.parse_overrides(flags))
    assert str(info.value).startswith(where)


def test_override_parsing():
    assert cli.parse_overrides(["--a.b", "1e-6", "--c=fd", "--d", "[1, 2]"]) == \
        {"a.b": 1e-6, "c": "fd", "d": [1, 2]}
    with pytest.raises(cli.ConfigError):
        cli.parse_overrides(["--a"])
    with pytest.raises(cli.ConfigError):
        cli.parse_overrides(["loose"])


def test_exit_codes(tmp_path):
    assert run(tmp_path, "spectrum", "--trap.gamma_x", "-1") == cli.EXIT_CONFIG
    assert run(tmp_path, "spectrum", "--config", str(tmp_path / "missing.json")) == cli.EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["spectrum", "--out", str(blocker / "sub")]) == cli.EXIT_IO
    assert run(tmp_path, "iv-curve", "--trap.enabled", "false") == cli.EXIT_CONFIG
    assert run(tmp_path, "spectrum") == cli.EXIT_OK


def test_spectrum_outputs_and_plot(tmp_path):
    assert run(tmp_path, "spectrum", "--plot") == 0
    rows = output.read_csv(tmp_path / "spectrum.csv")
    assert len(rows) == 16
    assert sum(r["label"] == "ratchet" for r in rows) == 3
    assert (tmp_path / "spectrum.svg").exists()
    man = json.loads((tmp_path / "spectrum.manifest.json").read_text())
    assert man["seed"] == 20240601 and man["summary"]["n_ratchet"] == 3
    assert "spectrum.csv" in man["outputs"]


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["iv-curve", "--experiment.gamma_t_grid.points", "4", "--experiment.gamma_t_grid.max", "1e-5"]
    assert cli.main([*args, "--out", str(a)]) == 0
    assert cli.main([*args, "--out", str(b)]) == 0
    for name in ("iv_curve.csv", "iv_curve.manifest.json"):
        if name.endswith(".json"):
            ja, jb = (json.loads((d / name).read_text()) for d in (a, b))
            ja["config"]["output"] = jb["config"]["output"] = None
            assert ja == jb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = output.read_csv(a / "iv_curve.csv")
    g = [float(r["gamma_t_eV"]) for r in rows]
    assert g == sorted(g) and len(g) == 4


def test_steadystate_and_eea(tmp_path):
    assert run(tmp_path, "steadystate", "--scenario", "np") == 0
    row = output.read_csv(tmp_path / "steadystate.csv")[0]
    assert row["scenario"] == "np" and float(row["residual"]) < 1e-16
    assert len(output.read_csv(tmp_path / "steadystate_populations.csv")) == 16
    assert run(tmp_path, "eea") == 0
    vals = {r["quantity"]: r["value"] for r in output.read_csv(tmp_path / "eea.csv")}
    assert float(vals["d_character"]) == pytest.approx(1 / 6)


def test_strict_turns_ambiguity_into_solver_exit(tmp_path):
    flags = ["steadystate", "--bath.gamma_o", "0", "--bath.gamma_p", "0", "--trap.enabled", "false",
             "--ring.n_sites", "3"]
    assert run(tmp_path, *flags) == cli.EXIT_OK
    assert run(tmp_path, *flags, "--strict") == cli.EXIT_SOLVER


@pytest.mark.parametrize("command, flags, files", [
    ("sweep", ["--experiment.sweep.hopping", '{"min": 0.01, "max": 0.02, "points": 2}',
               "--experiment.sweep.gamma_x", '{"min": 1e-8, "max": 1e-7, "points": 2}',
               "--experiment.optimizer_grid_points", "25"], ["sweep.csv", "enhancement.csv"]),
    ("tempmap", ["--experiment.tempmap.T_o", '{"min": 5800, "max": 58000, "points": 2}',
                 "--experiment.tempmap.T_p", '{"min": 300, "max": 3000, "points": 2}'], ["tempmap.csv"]),
    ("disorder", ["--experiment.disorder.n_realizations", "2",
                  "--experiment.disorder.gamma_t_points", "5"],
     ["disorder.csv", "disorder_convergence.csv"]),
    ("imperfections", ["--scenario", "ratchets", "--experiment.gamma_t_grid.points", "5",
                       "--experiment.imperfections.rates", "[0, 1e-6]"], ["imperfections.csv"]),
])
def test_sweep_commands_small(tmp_path, command, flags, files):
    assert run(tmp_path, command, "--threads", "1", "--plot", *flags) == 0
    for name in files:
        assert len(output.read_csv(tmp_path / name)) > 0
    assert list(tmp_path.glob("*.svg"))
    assert (tmp_path / f"{command}.manifest.json").exists()
