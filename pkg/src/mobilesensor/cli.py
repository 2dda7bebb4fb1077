"""Command-line front end: JSON scenario in, JSON/CSV results out."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import control as ctl
from . import mcsim, network, qfi
from .fieldexpr import FieldEvalError, FieldExprError, UnboundParameterError, parse_field
from .l1approx import LPFailure, LPIterationLimit, RankDeficientError
from .serialize import csv_text, dumps
from .trajectory import DependentFieldsError, ParametricPath, WaypointPath, default_grid, make_quadrature

COMMANDS = ("design", "verify", "basis", "qfi", "network", "simulate", "plotdata")

NUMERICAL_ERRORS = (
    RankDeficientError,
    LPFailure,
    LPIterationLimit,
    DependentFieldsError,
    ctl.BisectionError,
    ctl.InfeasibleControlError,
    mcsim.SaturatedStatisticsError,
    FieldEvalError,
    np.linalg.LinAlgError,
)


class ConfigError(ValueError):
    pass


class VerificationFailed(RuntimeError):
    pass


def _need(cfg, key, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return cfg[key]


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def build_path(cfg):
    spec = _need(cfg, "path")
    params = spec.get("params", cfg.get("params", {}))
    if "coords" in spec:
        return ParametricPath(spec["coords"], float(_need(spec, "T", "path")), params)
    if "waypoints" in spec:
        wp = spec["waypoints"]
        return WaypointPath(_need(wp, "times", "path.waypoints"), _need(wp, "positions", "path.waypoints"))
    raise ConfigError("path needs either 'coords' and 'T' or 'waypoints'")


def build_grid(cfg, T, args):
    spec = dict(cfg.get("grid", {}))
    if args.grid_panels is not None:
        spec["panels"] = args.grid_panels
    if args.grid_points is not None:
        spec["points"] = args.grid_points
    if not spec:
        return default_grid(T)
    panels = int(spec.get("panels", max(1, int(np.ceil(64 * T)))))
    points = int(spec.get("points", 8))
    rule = spec.get("rule", "gauss")
    if panels < 1 or points < 1 or rule not in ("gauss", "trapezoid"):
        raise ConfigError("grid needs panels >= 1, points >= 1 and rule 'gauss' or 'trapezoid'")
    return make_quadrature(T, panels, points, rule)


def _fields(cfg):
    params = cfg.get("params", {})
    signal = parse_field(_need(cfg, "signal"), params.keys() if params else None)
    noise = [parse_field(g, params.keys() if params else None) for g in cfg.get("noise", [])]
    return signal, noise, params


def _design(cfg, args):
    path = build_path(cfg)
    grid = build_grid(cfg, path.T, args)
    signal, noise, params = _fields(cfg)
    return ctl.optimal_sign_control(signal, noise, path, grid, params), path, grid, noise, params


def cmd_design(cfg, args):
    design, path, grid, noise, params = _design(cfg, args)
    fine = grid.refined(2)
    residues = ctl.cancellation_residues(design.schedule, noise, path, fine, params)
    threshold = ctl.cancellation_threshold(noise, path, fine, params)
    hr = ctl.hobby_rice_partition(design.schedule, len(noise))
    rec = {
        "schedule": design.schedule.to_record(),
        "sensitivity": design.sensitivity,
        "grid_sensitivity": design.grid_sensitivity,
        "coefficients": design.coefficients,
        "switch_count": hr.switch_count,
        "within_switch_bound": hr.within_bound,
        "residues": residues,
        "threshold": threshold,
    }
    return dumps(rec), None


def _load_schedule(cfg, T):
    if "schedule" in cfg:
        rec = cfg["schedule"]
    elif "schedule_file" in cfg:
        # relative paths are taken from the config file's directory
        rec = _load_json(Path(cfg.get("_base", ".")) / cfg["schedule_file"])
    else:
        raise ConfigError("verify needs 'schedule' or 'schedule_file'")
    if "schedule" in rec and isinstance(rec["schedule"], dict):
        rec = rec["schedule"]
    return ctl.schedule_from_record(rec, T)


def cmd_verify(cfg, args):
    path = build_path(cfg)
    grid = build_grid(cfg, path.T, args)
    params = cfg.get("params", {})
    noise = [parse_field(g) for g in cfg.get("noise", [])]
    sched = _load_schedule(cfg, path.T)
    residues = ctl.cancellation_residues(sched, noise, path, grid, params)
    threshold = ctl.cancellation_threshold(noise, path, grid, params)
    passes = bool(np.all(np.abs(residues) <= threshold))
    rec = {"residues": residues, "max_residue": float(np.max(np.abs(residues), initial=0.0)),
           "threshold": threshold, "passes": passes}
    if "signal" in cfg:
        rec["phase"] = ctl.phase_functional(parse_field(cfg["signal"]), path, sched, grid, params)
    text = dumps(rec)
    if not passes:
        raise VerificationFailed(text)
    return text, None


def cmd_basis(cfg, args):
    spec = _need(cfg, "basis")
    kind = _need(spec, "kind", "basis")
    m = int(_need(spec, "m", "basis"))
    T = float(spec.get("T", 1.0))
    grid_cfg = {k: v for k, v in cfg.items() if k == "grid"}
    if kind == "chebyshev":
        sched, sens = ctl.chebyshev_control(m, float(spec.get("v", 1.0)), T)
        return dumps({"kind": kind, "schedule": sched.to_record(), "sensitivity": sens}), None
    grid = build_grid(grid_cfg, T, args)
    if kind == "legendre":
        sched, gain = ctl.legendre_control(m, T, grid)
    elif kind == "fourier":
        sched, gain = ctl.fourier_control(
            m, float(_need(spec, "P", "basis")), float(spec.get("phase", 0.0)), T, grid, spec.get("control", "cos")
        )
    else:
        raise ConfigError(f"unknown basis kind {kind!r} (chebyshev, legendre, fourier)")
    rec = {"kind": kind, "gain": gain, "schedule": sched.to_record()}
    if "signal" in cfg:
        path = ctl.legendre_path(T) if kind == "legendre" else ctl.fourier_path(float(spec["P"]), T)
        rec["phase"] = ctl.phase_functional(parse_field(cfg["signal"]), path, sched, grid, cfg.get("params", {}))
    return dumps(rec), None


def cmd_qfi(cfg, args):
    spec = _need(cfg, "qfi")
    kind = _need(spec, "kind", "qfi")

    def g(key, default=None):
        if key in spec:
            return float(spec[key])
        if default is not None:
            return default
        return float(_need(spec, key, "qfi"))

    if kind == "spatial_frequency":
        B, v, T = g("B"), g("v"), g("T")
        path = ParametricPath(["v*t"], T, {"v": v})
        gen = qfi.spatial_frequency_generator(B, g("k", 1.0)).derivative("k")
        rep = qfi.qfi_bound(gen.along(path), build_grid(cfg, T, args))
        rec = {"kind": kind, "bound": qfi.qfi_spatial_frequency(B, v, T), "method": "closed-form",
               "quadrature_bound": rep.bound}
    elif kind == "velocity_schedule":
        T = g("T")
        grid = build_grid(cfg, T, args)
        vel = parse_field(_need(spec, "velocity", "qfi"))
        v = np.broadcast_to(vel.evaluate(np.zeros((len(grid.nodes), 0)), grid.nodes, spec.get("params", {})),
                            grid.nodes.shape)
        rec = {"kind": kind, "bound": qfi.qfi_velocity_schedule(v, g("B"), grid), "method": "quadrature"}
    elif kind == "accelerated":
        rec = {"kind": kind, "bound": qfi.qfi_accelerated(g("B"), g("v0"), g("a"), g("T")), "method": "closed-form"}
    elif kind == "fast_relocation":
        rec = {"kind": kind, "bound": qfi.qfi_fast_relocation(g("B"), g("T"), g("L")), "method": "closed-form"}
    elif kind == "moving_general":
        path = build_path(cfg)
        grid = build_grid(cfg, path.T, args)
        b = qfi.qfi_moving_general(_need(cfg, "signal"), path, g("spec_range"), grid, spec.get("param"),
                                   cfg.get("params", {}))
        rec = {"kind": kind, "bound": b, "method": "quadrature"}
    elif kind == "pauli":
        path = build_path(cfg)
        grid = build_grid(cfg, path.T, args)
        gen = qfi.PauliGenerator(_need(spec, "terms", "qfi"), cfg.get("params", {}))
        if spec.get("param"):
            gen = gen.derivative(spec["param"])
        rep = qfi.qfi_bound(gen.along(path), grid)
        rec = {"kind": kind, **rep.to_record()}
    else:
        raise ConfigError(f"unknown qfi kind {kind!r}")
    return dumps(rec), None


def cmd_network(cfg, args):
    spec = _need(cfg, "network")
    T = float(spec.get("T", 1.0))
    if "s" in spec:
        design = network.compare_network(spec["s"], spec.get("G", []), T)
    else:
        signal, noise, params = _fields(cfg)
        design = network.network_from_fields(signal, noise, _need(spec, "positions", "network"), T, params)
    rec = design.to_record()
    rec["noise_phase"] = design.noise_phase()
    return dumps(rec), None


def _scenario(cfg, args):
    spec = _need(cfg, "simulate")
    path = build_path(cfg)
    grid = build_grid(cfg, path.T, args)
    signal, noise, params = _fields(cfg)
    mode = spec.get("control", "optimal")
    if mode == "optimal":
        sched = ctl.optimal_sign_control(signal, noise, path, grid, params).schedule
    elif mode == "constant":
        sched = ctl.SignSwitch(path.T, 1, [])
    else:
        raise ConfigError("simulate.control must be 'optimal' or 'constant'")
    sigmas = spec.get("sigmas", [0.0] * len(noise))
    return spec, mcsim.RamseyScenario.from_design(
        signal, noise, sched, path, grid,
        float(_need(spec, "omega_true", "simulate")),
        mcsim.NoiseModel(tuple(sigmas)),
        float(spec.get("delta", 2.0)),
        float(spec.get("bias_phase", np.pi / 2)),
        params,
    )


def cmd_simulate(cfg, args):
    spec, scen = _scenario(cfg, args)
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    rows = mcsim.sweep(scen, spec.get("shots", [1000, 10000, 100000]), seed,
                       int(spec.get("trials", 0)), int(spec.get("n_boot", 200)))
    return csv_text(("m", "variance", "crb", "ratio"), rows), ("sweep", rows)


def cmd_plotdata(cfg, args):
    design, *_ = _design(cfg, args)
    rows = ctl.control_plot_rows(design, int(cfg.get("plotdata", {}).get("samples", 1001)))
    return csv_text(("t", "f_gamma", "l_star", "control"), rows), ("control", rows)


HANDLERS = {
    "design": cmd_design,
    "verify": cmd_verify,
    "basis": cmd_basis,
    "qfi": cmd_qfi,
    "network": cmd_network,
    "simulate": cmd_simulate,
    "plotdata": cmd_plotdata,
}


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobilesensor", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON scenario file")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--seed", type=int, help="RNG seed for simulate (overrides the config)")
    p.add_argument("--grid-panels", type=int, help="quadrature panels on [0, T]")
    p.add_argument("--grid-points", type=int, help="quadrature points per panel")
    p.add_argument("--figure", help="also render a figure (plotdata, simulate) to this file")
    return p


def run(argv=None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = _load_json(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg["_base"] = str(Path(args.config).resolve().parent)
        text, figure = HANDLERS[args.command](cfg, args)
    except UnboundParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VerificationFailed as exc:
        sys.stdout.write(str(exc))
        print("error: cancellation residues exceed the threshold", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, FieldExprError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.figure:
        if figure is None:
            print("warning: this command has no figure", file=sys.stderr)
        else:
            from . import plotting

            kind, rows = figure
            (plotting.control_figure if kind == "control" else plotting.sweep_figure)(rows, args.figure)
    return 0


def main():
    sys.exit(run())
