"""Driver plumbing: config precedence, serialized outputs, exit codes.

Everything here runs on toy grids and short horizons. The point is the
plumbing contract (merge/env/flag precedence, report schemas, byte-stable
reruns), not solver accuracy; accuracy claims live with the solver tests.
"""

import csv
import json
import math
import os

import numpy as np
import pytest

from contactflow import cli
from contactflow import diagnostics as diag
from contactflow.params import ConstraintError, PhysicalParams

TINY = {
    "grid": {"nx": 16, "ny": 12},
    "time": {"dt": 0.02, "t_end": 0.4, "save_every": 2},
    "initial": {"eta_modes": [[1, 0.01]]},
}


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    # keep runs hermetic even if the shell exports CONTACTFLOW_* vars
    for name in [n for n in os.environ if n.startswith(cli.ENV_PREFIX)]:
        monkeypatch.delenv(name)


def _write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(tmp_path, cfg, out="out", argv=()):
    cfg = dict(cfg)
    outdir = tmp_path / out
    cfg["out"] = str(outdir)
    path = _write_config(tmp_path, cfg, name=out + ".json")
    rc = cli.main(["--config", path, *argv])
    return rc, outdir


def _report(outdir):
    with open(outdir / "report.json") as fh:
        return json.load(fh)


# ------------------------------------------------------------------
# config plumbing
# ------------------------------------------------------------------

def test_default_config_validates():
    cfg = cli.default_config()
    params = cli.validate_config(cfg)
    assert isinstance(params, PhysicalParams)
    assert params.mu == cfg["params"]["mu"]


def test_unknown_keys_rejected(tmp_path):
    path = _write_config(tmp_path, {"nope": 1})
    with pytest.raises(ConstraintError, match="unknown config key: nope"):
        cli.load_config(path, environ={})
    path = _write_config(tmp_path, {"params": {"zap": 1}}, name="n.json")
    with pytest.raises(ConstraintError, match="params.zap"):
        cli.load_config(path, environ={})


def test_scalar_override_for_table_rejected(tmp_path):
    path = _write_config(tmp_path, {"params": 3})
    with pytest.raises(ConstraintError, match="must be a table"):
        cli.load_config(path, environ={})


def test_env_overrides_parse_json_with_string_fallback():
    env = {
        "CONTACTFLOW_PARAMS__MU": "0.5",      # json number
        "CONTACTFLOW_RECENTER": "false",      # json bool
        "CONTACTFLOW_OUT": "runs/elsewhere",  # not json, kept as string
        "UNRELATED": "1",
    }
    cfg = cli.load_config(environ=env)
    assert cfg["params"]["mu"] == 0.5
    assert isinstance(cfg["params"]["mu"], float)
    assert cfg["recenter"] is False
    assert cfg["out"] == "runs/elsewhere"
    # untouched keys keep their defaults
    assert cfg["params"]["k"] == cli.default_config()["params"]["k"]
    with pytest.raises(ConstraintError, match="unknown config key"):
        cli.load_config(environ={"CONTACTFLOW_NOPE": "1"})


def test_precedence_file_env_flags(tmp_path):
    path = _write_config(tmp_path, {"seed": 3, "params": {"mu": 0.9}})
    env = {"CONTACTFLOW_SEED": "5"}
    cfg = cli.load_config(path, environ=env, overrides={"threads": 2})
    assert cfg["seed"] == 5          # env beats file
    assert cfg["params"]["mu"] == 0.9  # file beats defaults
    assert cfg["threads"] == 2
    cfg = cli.load_config(path, environ=env, overrides={"seed": 7})
    assert cfg["seed"] == 7          # explicit flags beat env


BAD_CONFIGS = [
    (("mode",), "warp"),
    (("grid", "nx"), 4),
    (("grid", "ny"), 7),
    (("time", "dt"), 0.0),
    (("time", "t_end"), -1.0),
    (("time", "warmup"), -0.5),
    (("eps",), -0.1),
    (("corner", "omegas"), [3.5]),
    (("corner", "omegas"), [0.0]),
    (("mean_height",), 2.5),
    (("mean_height",), 0.0),
    (("params", "mu"), -1.0),
]


@pytest.mark.parametrize("path,value", BAD_CONFIGS)
def test_validate_config_rejects(path, value):
    cfg = cli.default_config()
    node = cfg
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    with pytest.raises(ConstraintError):
        cli.validate_config(cfg)


# ------------------------------------------------------------------
# output helpers
# ------------------------------------------------------------------

def test_fmt_strips_numpy_wrappers():
    assert cli._fmt(np.float64(0.1)) == repr(0.1)
    assert cli._fmt(0.1) == "0.1"
    assert cli._fmt(None) == ""
    assert cli._fmt(3) == "3"


def test_series_csv_layout_roundtrips(tmp_path):
    ncol = len(diag.SERIES_COLUMNS)
    rows = [[0.1 * i for i in range(ncol)],
            [np.float64(1.0 / 3.0)] + [0.0] * (ncol - 1)]
    path = tmp_path / "series.csv"
    cli.write_series_csv(str(path), rows)
    with open(path, newline="") as fh:
        got = list(csv.reader(fh))
    assert got[0] == list(diag.SERIES_COLUMNS)
    assert len(got) == 3
    # repr serialization is lossless
    assert [float(c) for c in got[1]] == rows[0]
    assert float(got[2][0]) == 1.0 / 3.0


def test_write_json_sorted_and_numpy_safe(tmp_path):
    path = tmp_path / "r.json"
    cli.write_json(str(path), {"b": np.arange(3), "a": np.float64(0.25)})
    text = path.read_text()
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": 0.25, "b": [0, 1, 2]}


# ------------------------------------------------------------------
# initial data recipes
# ------------------------------------------------------------------

def test_initial_eta_sums_zero_mean_modes(grid):
    cfg = {"initial": {"eta_modes": [[1, 0.05], [2, 0.01]]}}
    eta = cli.initial_eta(cfg, grid)
    want = (0.05 * np.cos(math.pi * grid.xc / grid.ell)
            + 0.01 * np.cos(2 * math.pi * grid.xc / grid.ell))
    want -= want.mean()
    assert np.allclose(eta, want, atol=1e-15)
    assert abs(eta.mean()) < 1e-15


def test_initial_velocity_vanishes_on_walls(grid):
    assert cli.initial_velocity({"initial": {"stream_amp": 0.0}}, grid) \
        == (None, None)
    u1, u2 = cli.initial_velocity({"initial": {"stream_amp": 0.3}}, grid)
    assert u1.shape == (grid.nx + 1, grid.ny)
    assert u2.shape == (grid.nx, grid.ny + 1)
    assert np.all(u1[0, :] == 0.0) and np.all(u1[-1, :] == 0.0)
    assert np.all(u2[:, 0] == 0.0)
    assert np.max(np.abs(u1)) > 0.0


def test_initial_theta_shape_and_walls(grid):
    cfg = {"initial": {"theta_amp": 0.0, "theta_mode": 1}}
    assert np.all(cli.initial_theta(cfg, grid) == 0.0)
    cfg = {"initial": {"theta_amp": 0.1, "theta_mode": 2}}
    th = cli.initial_theta(cfg, grid)
    assert th.shape == (grid.nx + 1, grid.ny + 1)
    assert np.max(np.abs(th[0, :])) < 1e-15   # x = -ell
    assert np.max(np.abs(th[-1, :])) < 1e-15  # x = +ell
    assert np.max(np.abs(th[:, 0])) < 1e-15   # bottom
    assert np.max(np.abs(th)) > 0.05


# ------------------------------------------------------------------
# exit codes
# ------------------------------------------------------------------

def test_validate_only_checks_without_writing(tmp_path, capsys):
    rc, outdir = _run(tmp_path, dict(TINY, mode="decay"),
                      argv=("--validate-only",))
    assert rc == 0
    assert "config ok" in capsys.readouterr().out
    assert not outdir.exists()


def test_bad_inputs_exit_two(tmp_path, capsys):
    assert cli.main(["--no-such-flag"]) == 2
    assert cli.main(["warp", "--validate-only"]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 2
    path = _write_config(tmp_path, {"nope": 1})
    assert cli.main(["--config", path]) == 2
    assert cli.main(["--help"]) == 0
    err = capsys.readouterr().err
    assert "config error" in err


def test_runtime_failure_exits_three(tmp_path, capsys):
    # equilibrium surface crests above the channel lid
    cfg = {"mode": "equilibrium", "mean_height": 2.0,
           "params": {"gamma_jump": 0.3}}
    rc, outdir = _run(tmp_path, cfg)
    assert rc == 3
    assert "runtime failure" in capsys.readouterr().err
    assert not (outdir / "report.json").exists()


# ------------------------------------------------------------------
# run modes: report schemas on toy runs
# ------------------------------------------------------------------

def test_equilibrium_mode_outputs(tmp_path):
    cfg = {"mode": "equilibrium", "params": {"gamma_jump": 0.2}}
    rc, outdir = _run(tmp_path, cfg, argv=("--seed", "7"))
    assert rc == 0
    rep = _report(outdir)
    assert rep["mode"] == "equilibrium"
    assert rep["runtime_s"] >= 0.0
    assert abs(rep["omega"] - (math.pi / 2 + math.asin(0.2))) < 1e-10
    assert rep["newton_residual"] < 1e-10
    assert set(rep["exponents"]) >= {"alpha", "eps_minus", "eps_plus",
                                     "q_minus", "q_plus", "q_max"}
    with open(outdir / "surface.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        assert set(reader.fieldnames) == {"x", "zeta0", "dzeta0"}
        assert len(list(reader)) > 10
    with open(outdir / "meta.json") as fh:
        meta = json.load(fh)
    assert meta["columns"] == list(diag.SERIES_COLUMNS)
    assert meta["config"]["seed"] == 7  # flag echoed into the merged config
    assert meta["versions"]["numpy"] == np.__version__


def test_heat_mode_recovers_spectral_decay_rate(tmp_path):
    cfg = dict(TINY, mode="heat")
    cfg["initial"] = {"theta_amp": 0.1}
    rc, outdir = _run(tmp_path, cfg)
    assert rc == 0
    rep = _report(outdir)
    assert rep["expected_rate_E_th_L2"] == 2.0 * rep["lowest_eigenvalue"]
    rel = abs(rep["fitted_rate_E_th_L2"] - rep["expected_rate_E_th_L2"]) \
        / rep["expected_rate_E_th_L2"]
    assert rel < 0.05
    assert rep["fit_r2"] > 0.999


def test_decay_mode_report_and_series(tmp_path):
    rc, outdir = _run(tmp_path, dict(TINY, mode="decay"))
    assert rc == 0
    rep = _report(outdir)
    assert rep["max_div_residual"] < 1e-10
    assert rep["max_recenter_drift"] < 1e-12
    assert len(rep["contact_speeds_final"]) == 2
    fit = rep["decay"]
    assert set(fit) == {"lambda", "r2", "n_used", "C_bound", "E0"}
    assert fit["E0"] > 0.0 and fit["n_used"] >= 3
    with open(outdir / "series.csv", newline="") as fh:
        got = list(csv.reader(fh))
    # header + initial row + one save per save_every (t_end/dt = 20 steps)
    assert got[0] == list(diag.SERIES_COLUMNS)
    assert len(got) == 12
    idx = diag.SERIES_COLUMNS.index("E_total")
    e_first, e_last = float(got[1][idx]), float(got[-1][idx])
    assert 0.0 < e_last < e_first


def test_corner_probe_mode_report(tmp_path):
    om = 3.0 * math.pi / 4.0
    cfg = {"mode": "corner-probe",
           "corner": {"omegas": [om], "qs": [1.2, 1.8], "n": 16,
                      "refine": [1.0, 1.5, 2.0, 3.0], "count": 2}}
    rc, outdir = _run(tmp_path, cfg)
    assert rc == 0
    ent = _report(outdir)["entries"][0]
    assert abs(ent["gamma_mixed"] - 2.0 / 3.0) < 1e-9
    assert abs(ent["gamma_dirichlet"] - 4.0 / 3.0) < 1e-9
    assert abs(ent["q_star"] - 1.5) < 1e-9
    assert ent["q_star_dirichlet"] == 2.0  # capped once the gradient is L^2
    assert abs(ent["eps_max"] - (math.pi / om - 1.0)) < 1e-12
    assert len(ent["eigenvalues_mixed"]) == 2
    verdicts = {p["q"]: p["verdict"] for p in ent["probes"]}
    assert verdicts == {1.2: "bounded", 1.8: "divergent"}
    assert all(len(p["norms"]) == 4 for p in ent["probes"])


def test_epsilon_sweep_mode_report(tmp_path):
    cfg = dict(TINY, mode="epsilon-sweep")
    cfg["sweep"] = {"eps_values": [0.2, 0.1], "t_end": 0.2}
    rc, outdir = _run(tmp_path, cfg)
    assert rc == 0
    rep = _report(outdir)
    assert rep["eps_values"] == [0.2, 0.1]
    # regularized energy exceeds the plain one and scales linearly in eps
    assert all(e > rep["E0_plain"] for e in rep["E0_eps"])
    assert rep["E0_eps"][0] > rep["E0_eps"][1]
    assert abs(rep["linearity_ratios"][0] - 2.0) < 1e-9
    assert len(rep["cauchy_sups"]) == 1
    assert rep["cauchy_sups"][0] > 0.0


def test_serial_rerun_is_byte_identical(tmp_path):
    cfg = dict(TINY, mode="decay", threads=1)
    rc_a, out_a = _run(tmp_path, cfg, out="a")
    rc_b, out_b = _run(tmp_path, cfg, out="b")
    assert rc_a == rc_b == 0
    series_a = (out_a / "series.csv").read_bytes()
    assert series_a == (out_b / "series.csv").read_bytes()
    # the echoed config is a valid input and reproduces the run exactly
    with open(out_a / "meta.json") as fh:
        echoed = json.load(fh)["config"]
    cli.validate_config(echoed)
    rc_c, out_c = _run(tmp_path, echoed, out="c")
    assert rc_c == 0
    assert series_a == (out_c / "series.csv").read_bytes()
