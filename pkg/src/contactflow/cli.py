"""Command-line driver.

Run modes
---------
equilibrium    solve the static meniscus, export surface.csv + report.json
heat           conduction-only run on the fixed equilibrium geometry
coupled        full velocity/pressure/surface/temperature evolution
decay          coupled run plus exponential-decay fit and budget checks
corner-probe   contact-angle spectra and wedge integrability study
epsilon-sweep  regularization study: energy linearity and trajectory Cauchy

Configuration is a JSON file (--config) merged over built-in defaults, then
overridden by CONTACTFLOW_* environment variables (double underscore for
nesting, values parsed as JSON: CONTACTFLOW_PARAMS__MU=0.5) and finally by
the explicit flags. Every run writes meta.json echoing the fully merged
config; feeding that file back through --config reproduces series.csv byte
for byte. Floats are serialized with repr, so round-tripping is exact.

Exit codes: 0 success, 2 invalid configuration, 3 runtime failure
(divergent step, surface spill, solver breakdown).
"""

import argparse
import copy
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time as _time

import numpy as np

from . import corner as corner_mod
from . import diagnostics as diag
from . import equilibrium as eq_mod
from . import flow as flow_mod
from . import geometry
from . import heat as heat_mod
from .params import (ConstraintError, PhysicalParams, compute_eps_max,
                     select_exponents)

ENV_PREFIX = "CONTACTFLOW_"


def default_config():
    return {
        "mode": "decay",
        "seed": 0,
        "threads": 0,
        "out": "runs/out",
        "svg": False,
        "mean_height": 1.0,
        "eps": 0.0,
        "w3": 1.0,
        "recenter": True,
        "params": {
            "mu": 0.35, "k": 0.35, "g": 1.0, "sigma1": 1.0, "sigma2": 0.1,
            "beta": 1.0, "kappa": 1.0, "gamma_jump": 0.0,
            "ell": 1.0, "big_l": 2.0, "depth": 0.5,
        },
        "grid": {"nx": 48, "ny": 32},
        "time": {"dt": 0.02, "t_end": 6.0, "save_every": 5, "warmup": 0.0},
        "initial": {
            "eta_modes": [[1, 0.05]],
            "theta_amp": 0.0,
            "theta_mode": 1,
            "stream_amp": 0.0,
            "consistent_heat": False,
        },
        "corner": {
            "omegas": [math.pi / 2.0, 3.0 * math.pi / 4.0],
            "qs": [1.2, 1.8],
            "n": 40,
            "refine": [1.0, 1.5, 2.0],
            "count": 4,
        },
        "sweep": {"eps_values": [0.4, 0.2, 0.1, 0.05], "t_end": 0.6},
    }


# ============================================================
# config plumbing
# ============================================================

def _merge(base, override, path=""):
    for key, val in override.items():
        if key not in base:
            raise ConstraintError("unknown config key: %s%s" % (path, key))
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConstraintError("config key %s%s must be a table"
                                      % (path, key))
            _merge(base[key], val, path + key + ".")
        else:
            base[key] = val
    return base


def _env_overrides(environ):
    out = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        try:
            val = json.loads(raw)
        except ValueError:
            val = raw
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


def load_config(path=None, environ=None, overrides=None):
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            _merge(cfg, json.load(fh))
    _merge(cfg, _env_overrides(os.environ if environ is None else environ))
    if overrides:
        _merge(cfg, overrides)
    return cfg


def validate_config(cfg):
    """Raise ConstraintError on anything a run would choke on."""
    modes = ("equilibrium", "heat", "coupled", "decay", "corner-probe",
             "epsilon-sweep")
    if cfg["mode"] not in modes:
        raise ConstraintError("mode must be one of %s" % (modes,))
    params = PhysicalParams(**cfg["params"])
    params.require_valid()
    if not 0.0 < cfg["mean_height"] <= params.big_l:
        raise ConstraintError("mean_height must lie in (0, big_l]")
    if cfg["grid"]["nx"] < 8 or cfg["grid"]["ny"] < 8:
        raise ConstraintError("grid must be at least 8x8")
    if cfg["time"]["dt"] <= 0 or cfg["time"]["t_end"] <= 0:
        raise ConstraintError("time.dt and time.t_end must be positive")
    if cfg["time"]["warmup"] < 0:
        raise ConstraintError("time.warmup must be nonnegative")
    if cfg["eps"] < 0:
        raise ConstraintError("eps must be nonnegative")
    for om in cfg["corner"]["omegas"]:
        if not 0.0 < om < math.pi:
            raise ConstraintError("corner omegas must lie in (0, pi)")
    return params


# ============================================================
# output helpers
# ============================================================

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))  # strip numpy scalar wrappers
    return str(v)


def write_series_csv(path, rows):
    """rows: list of lists aligned with diag.SERIES_COLUMNS."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(diag.SERIES_COLUMNS)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(type(obj).__name__)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True,
                  default=_json_default)
        fh.write("\n")


def write_svg(path, times, values, title):
    """Minimal log-scale polyline plot, no third-party plotting."""
    W, Hgt, pad = 640, 400, 50
    pts = [(t, v) for t, v in zip(times, values) if v > 0.0]
    lines = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">'
             % (W, Hgt),
             '<rect width="100%" height="100%" fill="white"/>',
             '<text x="%d" y="20" font-size="14">%s</text>' % (pad, title)]
    if len(pts) >= 2:
        ts = [p[0] for p in pts]
        lv = [math.log10(p[1]) for p in pts]
        t0, t1 = min(ts), max(ts)
        v0, v1 = min(lv), max(lv)
        t1 = t1 if t1 > t0 else t0 + 1.0
        v1 = v1 if v1 > v0 else v0 + 1.0

        def sx(t):
            return pad + (W - 2 * pad) * (t - t0) / (t1 - t0)

        def sy(v):
            return Hgt - pad - (Hgt - 2 * pad) * (v - v0) / (v1 - v0)

        poly = " ".join("%.2f,%.2f" % (sx(t), sy(v))
                        for t, v in zip(ts, lv))
        lines.append('<polyline points="%s" fill="none" stroke="black"/>'
                     % poly)
        for frac in (0.0, 0.5, 1.0):
            tv = t0 + frac * (t1 - t0)
            lines.append('<text x="%.1f" y="%d" font-size="11">t=%.3g</text>'
                         % (sx(tv) - 12, Hgt - pad + 20, tv))
            vv = v0 + frac * (v1 - v0)
            lines.append('<text x="4" y="%.1f" font-size="11">1e%.2f</text>'
                         % (sy(vv) + 4, vv))
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ============================================================
# initial data recipes
# ============================================================

def initial_eta(cfg, grid):
    eta = np.zeros(grid.nx)
    for k, amp in cfg["initial"]["eta_modes"]:
        eta += amp * np.cos(int(k) * math.pi * grid.xc / grid.ell)
    return eta - eta.mean()


def initial_theta(cfg, grid):
    amp = cfg["initial"]["theta_amp"]
    m = int(cfg["initial"]["theta_mode"])
    if amp == 0.0:
        return np.zeros((grid.nx + 1, grid.ny + 1))
    X, S = np.meshgrid(grid.xf, grid.sf, indexing="ij")
    return amp * np.sin(m * math.pi * (X + grid.ell) / (2 * grid.ell)) \
        * np.sin(math.pi * S / 2.0)


def initial_velocity(cfg, grid):
    amp = cfg["initial"]["stream_amp"]
    if amp == 0.0:
        return None, None
    ell = grid.ell

    def psi(x, s):
        return amp * np.sin(math.pi * (x + ell) / ell) * np.sin(math.pi * s)

    ds = 1e-6
    Xf, Sc = np.meshgrid(grid.xf, grid.sc, indexing="ij")
    u1 = (psi(Xf, Sc + ds) - psi(Xf, Sc - ds)) / (2 * ds)
    Xc, Sf = np.meshgrid(grid.xc, grid.sf, indexing="ij")
    u2 = -(psi(Xc + ds, Sf) - psi(Xc - ds, Sf)) / (2 * ds)
    u1[0, :] = 0.0
    u1[-1, :] = 0.0
    u2[:, 0] = 0.0
    return u1, u2


def build_problem(cfg, params):
    surface = eq_mod.solve_equilibrium(params, cfg["mean_height"])
    grid = geometry.make_grid(surface, cfg["grid"]["nx"], cfg["grid"]["ny"],
                              params.depth)
    exps = select_exponents(surface.omega)
    problem = flow_mod.CoupledProblem(params=params, surface=surface,
                                      grid=grid, eps=cfg["eps"],
                                      w3=cfg["w3"],
                                      recenter=cfg["recenter"], exps=exps)
    return problem


# ============================================================
# run modes
# ============================================================

def run_equilibrium(cfg, params, outdir):
    surface = eq_mod.solve_equilibrium(params, cfg["mean_height"])
    eq_mod.export_surface_csv(surface, os.path.join(outdir, "surface.csv"))
    omega = surface.omega
    report = {
        "p0": surface.p0,
        "omega": omega,
        "newton_residual": surface.newton_residual,
        "newton_iters": surface.newton_iters,
        "ode_residual": eq_mod.ode_residual(surface, params),
        "eps_max": compute_eps_max(omega),
        "exponents": vars(select_exponents(omega)),
        "mean_height": cfg["mean_height"],
    }
    return report, None


def _series_loop(cfg, problem, flow_state, heat_state, t_end=None):
    dt = cfg["time"]["dt"]
    t_end = cfg["time"]["t_end"] if t_end is None else t_end
    save_every = max(1, int(cfg["time"]["save_every"]))
    nsteps = int(round(t_end / dt))
    fields = geometry.build_geometry(problem.grid, flow_state.eta,
                                     flow_state.zdot)
    rows = [diag.energy_report(problem, fields, flow_state,
                               heat_state).row()]
    saved = [(flow_state, heat_state)]
    stats = {"max_div": 0.0, "max_recenter": 0.0}
    for step in range(1, nsteps + 1):
        flow_state, heat_state, fields = flow_mod.coupled_step(
            problem, flow_state, heat_state, dt)
        stats["max_div"] = max(stats["max_div"], flow_state.div_residual)
        stats["max_recenter"] = max(stats["max_recenter"],
                                    flow_state.recenter_log)
        if step % save_every == 0 or step == nsteps:
            rows.append(diag.energy_report(problem, fields, flow_state,
                                           heat_state).row())
            saved.append((flow_state, heat_state))
    return rows, saved, stats


def run_heat(cfg, params, outdir):
    problem = build_problem(cfg, params)
    grid = problem.grid
    fields = geometry.build_geometry(grid, np.zeros(grid.nx))
    theta0 = initial_theta(cfg, grid)
    if cfg["initial"]["consistent_heat"]:
        data = heat_mod.construct_heat_initial_data(fields, params.k,
                                                    strict=False)
        theta0 = theta0 + data.theta0
    state = heat_mod.HeatState(theta=theta0)
    dt = cfg["time"]["dt"]
    nsteps = int(round(cfg["time"]["t_end"] / dt))
    save_every = max(1, int(cfg["time"]["save_every"]))
    zero_flow = flow_mod.zero_flow_state(grid)
    rows = [diag.energy_report(problem, fields, zero_flow, state).row()]
    for step in range(1, nsteps + 1):
        state = heat_mod.step_fd(fields, params.k, state, dt)
        if step % save_every == 0 or step == nsteps:
            rows.append(diag.energy_report(problem, fields, zero_flow,
                                           state).row())
    lam = heat_mod.lowest_eigenvalues(fields, params.k, m=1)[0]
    times = [r[0] for r in rows]
    e_th = [r[diag.SERIES_COLUMNS.index("E_th_L2")] for r in rows]
    fit = diag.fit_decay(times, e_th, skip=len(times) // 4)
    report = {
        "lowest_eigenvalue": lam,
        "fitted_rate_E_th_L2": fit.lam,
        "expected_rate_E_th_L2": 2.0 * lam,
        "fit_r2": fit.r2,
    }
    return report, rows


def run_coupled(cfg, params, outdir, fit_report=False):
    problem = build_problem(cfg, params)
    grid = problem.grid
    eta0 = initial_eta(cfg, grid)
    u1r, u2r = initial_velocity(cfg, grid)
    flow_state = flow_mod.construct_flow_initial_data(problem, eta0, u1r,
                                                      u2r)
    heat_state = heat_mod.HeatState(theta=initial_theta(cfg, grid))
    # Optional settling phase: an impulsive start has huge discrete time
    # derivatives (u jumps from rest in one step), which says nothing about
    # the decay of the evolved solution. Integrating through the transient
    # and restarting the clock measures the budget from a state whose
    # histories reflect the actual dynamics.
    warmup_steps = int(round(cfg["time"]["warmup"] / cfg["time"]["dt"]))
    for _ in range(warmup_steps):
        flow_state, heat_state, _ = flow_mod.coupled_step(
            problem, flow_state, heat_state, cfg["time"]["dt"])
    if warmup_steps:
        flow_state = dataclasses.replace(flow_state, time=0.0)
        heat_state = dataclasses.replace(heat_state, time=0.0)
    rows, saved, stats = _series_loop(cfg, problem, flow_state, heat_state)
    times = [r[0] for r in rows]
    e_tot = [r[diag.SERIES_COLUMNS.index("E_total")] for r in rows]
    d_tot = [r[diag.SERIES_COLUMNS.index("D_total")] for r in rows]
    report = {
        "final_E_total": e_tot[-1],
        "max_div_residual": stats["max_div"],
        "max_recenter_drift": stats["max_recenter"],
        "contact_speeds_final": list(saved[-1][0].contact_speeds),
        "omega": problem.surface.omega,
    }
    if fit_report:
        fit = diag.fit_decay(times, e_tot, skip=len(times) // 5)
        report["decay"] = {
            "lambda": fit.lam, "r2": fit.r2, "n_used": fit.n_used,
            "C_bound": diag.cumulative_bound(times, e_tot, d_tot),
            "E0": e_tot[0],
        }
    return report, rows


def run_corner_probe(cfg, params, outdir):
    ccfg = cfg["corner"]
    entries = []
    for om in ccfg["omegas"]:
        mixed = corner_mod.angular_eigenvalues(om, count=ccfg["count"],
                                               boundary="mixed")
        diri = corner_mod.angular_eigenvalues(om, count=ccfg["count"],
                                              boundary="dirichlet")
        probes = []
        for q in ccfg["qs"]:
            rep = corner_mod.wedge_poisson_probe(
                om, q, ccfg["n"], refine=tuple(ccfg["refine"]))
            probes.append({"q": q, "growth_rate": rep.growth_rate,
                           "verdict": rep.verdict,
                           "norms": list(rep.norms)})
        gamma = mixed.eigenvalues[0]
        entries.append({
            "omega": om,
            "eigenvalues_mixed": list(mixed.eigenvalues),
            "eigenvalues_dirichlet": list(diri.eigenvalues),
            "gamma_mixed": gamma,
            "gamma_dirichlet": diri.eigenvalues[0],
            "q_star": corner_mod.regularity_threshold(mixed),
            "q_star_dirichlet": corner_mod.regularity_threshold(diri),
            "eps_max": compute_eps_max(om),
            "probes": probes,
        })
    return {"entries": entries}, None


def run_epsilon_sweep(cfg, params, outdir):
    problem0 = build_problem(cfg, params)
    grid = problem0.grid
    eta0 = initial_eta(cfg, grid)
    eps_values = list(cfg["sweep"]["eps_values"])
    t_end = cfg["sweep"]["t_end"]
    fields_eq = geometry.build_geometry(grid, np.zeros(grid.nx))

    e0_plain = None
    e0_eps, trajectories = [], []
    rows_out = None
    for eps in eps_values:
        problem = flow_mod.CoupledProblem(
            params=params, surface=problem0.surface, grid=grid, eps=eps,
            w3=cfg["w3"], recenter=cfg["recenter"], exps=problem0.exps)
        flow_state = flow_mod.construct_flow_initial_data(problem, eta0)
        heat_state = heat_mod.HeatState(
            theta=initial_theta(cfg, grid))
        rep0 = diag.energy_report(
            problem, geometry.build_geometry(grid, flow_state.eta),
            flow_state, heat_state)
        if e0_plain is None:
            e0_plain = rep0.energy
        e0_eps.append(rep0.energy_eps)
        rows, saved, _ = _series_loop(cfg, problem, flow_state, heat_state,
                                      t_end=t_end)
        trajectories.append([s[0] for s in saved])
        if rows_out is None:
            rows_out = rows

    diffs = [e - e0_plain for e in e0_eps]
    lin_ratios = [diffs[i] / diffs[i + 1] if diffs[i + 1] != 0 else math.nan
                  for i in range(len(diffs) - 1)]

    sups = []
    for a, b in zip(trajectories, trajectories[1:]):
        sup = 0.0
        for sa, sb in zip(a, b):
            d = diag.flow_difference(sa, sb)
            rep = diag.energy_report(problem0, fields_eq, d, None)
            sup = max(sup, rep.energy)
        sups.append(sup)
    cauchy_ratios = [sups[i + 1] / sups[i] if sups[i] > 0 else math.nan
                     for i in range(len(sups) - 1)]
    report = {
        "eps_values": eps_values,
        "E0_plain": e0_plain,
        "E0_eps": e0_eps,
        "linearity_diffs": diffs,
        "linearity_ratios": lin_ratios,
        "cauchy_sups": sups,
        "cauchy_ratios": cauchy_ratios,
    }
    return report, rows_out


# ============================================================
# entry point
# ============================================================

def _apply_threads(n):
    if n and n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="contactflow",
        description="thermal free-boundary simulator with moving contact "
                    "points")
    ap.add_argument("mode", nargs="?", default=None,
                    help="equilibrium | heat | coupled | decay | "
                         "corner-probe | epsilon-sweep")
    ap.add_argument("--config", default=None, help="JSON config file")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--validate-only", action="store_true")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.out is not None:
        overrides["out"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.seed is not None:
        overrides["seed"] = args.seed

    try:
        cfg = load_config(args.config, overrides=overrides)
        params = validate_config(cfg)
    except (ConstraintError, OSError, ValueError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2

    if args.validate_only:
        print("config ok")
        return 0

    _apply_threads(cfg["threads"])
    np.random.seed(cfg["seed"])
    outdir = cfg["out"]
    os.makedirs(outdir, exist_ok=True)

    started = _time.time()
    runners = {
        "equilibrium": run_equilibrium,
        "heat": run_heat,
        "coupled": run_coupled,
        "decay": lambda c, p, o: run_coupled(c, p, o, fit_report=True),
        "corner-probe": run_corner_probe,
        "epsilon-sweep": run_epsilon_sweep,
    }
    try:
        report, rows = runners[cfg["mode"]](cfg, params, outdir)
    except (flow_mod.StabilityError, flow_mod.SpillError,
            eq_mod.EquilibriumError, RuntimeError) as exc:
        print("runtime failure: %s" % exc, file=sys.stderr)
        return 3

    report = {"mode": cfg["mode"], "runtime_s": _time.time() - started,
              **report}
    write_json(os.path.join(outdir, "report.json"), report)
    write_json(os.path.join(outdir, "meta.json"),
               {"config": cfg, "columns": list(diag.SERIES_COLUMNS),
                "versions": {"numpy": np.__version__}})
    if rows is not None:
        write_series_csv(os.path.join(outdir, "series.csv"), rows)
        if cfg["svg"]:
            idx = diag.SERIES_COLUMNS.index("E_total")
            write_svg(os.path.join(outdir, "energy.svg"),
                      [r[0] for r in rows], [r[idx] for r in rows],
                      "total energy, mode=%s" % cfg["mode"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
