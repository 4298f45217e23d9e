"""Command-line surface.

Subcommands: simulate, populations, reconstruct, conditional, calibrate,
fit, orientation, scenario.  Exit codes: 0 success, 2 usage error,
3 numerical failure, 4 invariant violation.  Every artifact starts with a
metadata comment block (# key=value) recording the parameters, the seed and
the artifact version, so identical invocations yield byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    EprSimError,
    FitFailureError,
    IdentifiabilityError,
    InvariantViolationError,
    ModelViolationError,
    DegeneratePolarizationError,
    NoInformationError,
    StatisticsError,
    StiffnessError,
)
from .estimation import (
    CalibrationPoint,
    FitProblem,
    calibrate_pn,
    fit_parameters,
    orientation,
)
from .gaussian_dynamics import NoiseChannels, propagate_moments, trajectory_to_csv
from .light_readout import (
    LossParams,
    apply_detection_loss,
    apply_io_lossy,
    reconstruct_atomic_variance,
)
from .multilevel_rates import (
    PopulationState,
    PumpConfig,
    populations_to_csv,
    propagate_populations,
    transition_rates,
)
from .records import (
    ModeFunctional,
    integrate_mode_batch,
    optimize_gain,
    reconstruct_conditional_xi,
    conditional_variance,
    simulate_batch,
)
from .scenarios import SCENARIO_NAMES, run_scenario, scenario_params
from .spin_model import ModelParams, css_state

ARTIFACT_VERSION = 1

_USAGE_ERRORS = (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError)
_NUMERICAL_ERRORS = (StiffnessError, FitFailureError, IdentifiabilityError,
                     StatisticsError, NoInformationError,
                     ZeroDivisionError, FloatingPointError)
_INVARIANT_ERRORS = (InvariantViolationError, ModelViolationError,
                     DegeneratePolarizationError)


def _metadata_block(params: ModelParams | None, seed: int | None,
                    extra: dict | None = None) -> str:
    lines = [f"# artifact_version={ARTIFACT_VERSION}"]
    if seed is not None:
        lines.append(f"# seed={seed}")
    if params is not None:
        compact = json.dumps(json.loads(params.to_json()), sort_keys=True,
                             separators=(",", ":"))
        lines.append(f"# params={compact}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={v}")
    return "\n".join(lines) + "\n"


def _load_params(args) -> ModelParams:
    if args.params is None:
        return scenario_params("fig2a")
    return ModelParams.from_json(Path(args.params).read_text())


def _parse_grid(spec: str) -> np.ndarray:
    parts = spec.split(",")
    if len(parts) != 3:
        raise ValueError("--grid expects t0,t1,dt")
    t0, t1, dt = (float(p) for p in parts)
    if dt <= 0 or t1 <= t0:
        raise ValueError("--grid requires t1 > t0 and dt > 0")
    return np.arange(t0, t1 + 0.5 * dt, dt)


def _emit(args, name: str, text: str):
    if args.out is None:
        sys.stdout.write(text)
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _emit_report(args, name: str, report: dict, params=None, seed=None):
    if args.format == "json":
        doc = {"artifact_version": ARTIFACT_VERSION, "report": report}
        if seed is not None:
            doc["seed"] = seed
        if params is not None:
            doc["params"] = json.loads(params.to_json())
        _emit(args, name + ".json", json.dumps(doc, indent=2,
                                               sort_keys=True) + "\n")
    else:
        head = _metadata_block(params, seed)
        lines = ["key,value"]
        for k, v in sorted(report.items()):
            lines.append(f"{k},{json.dumps(v)}" if isinstance(v, (dict, list, tuple))
                         else f"{k},{v}")
        _emit(args, name + ".csv", head + "\n".join(lines) + "\n")


def _initial_pop(args) -> PopulationState:
    n44, n43, nh = (float(x) for x in args.pops.split(","))
    return PopulationState(n44=n44, n43=n43, nh=nh)


def _cmd_simulate(args) -> int:
    params = _load_params(args)
    grid = _parse_grid(args.grid)
    rates = transition_rates(params)
    pump = PumpConfig(rate=params.Gamma_pump) if args.pump else None
    pops = propagate_populations(_initial_pop(args), rates, grid, pump=pump)
    noise = NoiseChannels.from_params(params, pump=args.pump)
    traj = propagate_moments(css_state(), params, noise, grid,
                             populations=pops)
    head = _metadata_block(params, args.seed)
    _emit(args, "trajectory.csv", head + trajectory_to_csv(traj))
    return 0


def _cmd_populations(args) -> int:
    params = _load_params(args)
    grid = _parse_grid(args.grid)
    rates = transition_rates(params)
    pump = PumpConfig(rate=params.Gamma_pump) if args.pump else None
    series = propagate_populations(_initial_pop(args), rates, grid, pump=pump)
    head = _metadata_block(params, args.seed)
    _emit(args, "populations.csv", head + populations_to_csv(series))
    return 0


def _cmd_reconstruct(args) -> int:
    params = _load_params(args)
    loss = LossParams(gamma_s=args.gamma_s, gamma_extra=args.gamma_extra,
                      eta=params.eta)
    mu_nu = (params.mu, params.nu)
    T = args.probe_ms
    report = {}
    for label, v in (("css", 1.0), ("steady", params.squeeze_sq)):
        snap = apply_io_lossy((v, v), 1.0, loss, mu_nu, T)
        y = tuple(apply_detection_loss(yv, params.eta) for yv in snap.y_out)
        rec = [reconstruct_atomic_variance(yv, snap.kappa_sq, mu_nu,
                                           eta=params.eta) for yv in y]
        report[f"xi_{label}"] = 0.5 * (rec[0].value + rec[1].value)
        report[f"xi_{label}_true"] = v
    report["kappa_sq"] = apply_io_lossy((1.0, 1.0), 1.0, loss, mu_nu,
                                        T).kappa_sq
    if args.trials > 1:
        duration = T
        dt = args.dt_ms
        mode_c = ModeFunctional(phase="cos", exponent_rate=loss.gamma,
                                direction="falling", window=(0.0, duration))
        mode_s = ModeFunctional(phase="sin", exponent_rate=loss.gamma,
                                direction="falling", window=(0.0, duration))
        for label, v in (("css", 1.0), ("steady", params.squeeze_sq)):
            batch = simulate_batch(args.trials, duration, dt, loss, mu_nu,
                                   args.seed, initial_var=(v, v))
            vc = float(np.var(integrate_mode_batch(batch, mode_c), ddof=1))
            vs = float(np.var(integrate_mode_batch(batch, mode_s), ddof=1))
            rc = reconstruct_atomic_variance(vc, report["kappa_sq"], mu_nu,
                                             eta=params.eta)
            rs = reconstruct_atomic_variance(vs, report["kappa_sq"], mu_nu,
                                             eta=params.eta)
            report[f"xi_{label}_mc"] = 0.5 * (rc.value + rs.value)
    _emit_report(args, "reconstruct", report, params, args.seed)
    return 0


def _cmd_conditional(args) -> int:
    params = _load_params(args)
    loss = LossParams(gamma_s=args.gamma_s, gamma_extra=args.gamma_extra,
                      eta=params.eta)
    mu_nu = (params.mu, params.nu)
    T, probe, dt = args.handover_ms, args.probe_ms, args.dt_ms
    duration = T + probe
    batch = simulate_batch(args.trials, duration, dt, loss, mu_nu, args.seed)
    readout_c = ModeFunctional(phase="cos", exponent_rate=loss.gamma,
                               direction="falling", window=(T, duration))
    readout_s = ModeFunctional(phase="sin", exponent_rate=loss.gamma,
                               direction="falling", window=(T, duration))
    grid = np.arange(args.gm_min, args.gm_max + 1e-12, args.gm_step)
    alpha, gamma_m, cv_cos = optimize_gain(batch, readout_c, grid)
    feed_s = ModeFunctional(phase="sin", exponent_rate=gamma_m,
                            direction="rising", window=(0.0, T))
    cv_sin = conditional_variance(batch, readout_s, feed_s, alpha)
    s = params.mu - params.nu
    kappa_sq = ((1.0 - loss.epsilon_sq)
                * -math.expm1(-2.0 * loss.gamma * probe) / s**2)
    xi_cond = reconstruct_conditional_xi(cv_cos, cv_sin, kappa_sq, mu_nu,
                                         eta=loss.eta)
    report = {
        "alpha_star": alpha,
        "gamma_m_star": gamma_m,
        "conditional_var_cos": cv_cos,
        "conditional_var_sin": cv_sin,
        "kappa_sq": kappa_sq,
        "xi_conditional": xi_cond,
    }
    _emit_report(args, "conditional", report, params, args.seed)
    return 0


def _cmd_calibrate(args) -> int:
    rows = [ln.split(",") for ln in
            Path(args.points).read_text().splitlines()
            if ln.strip() and not ln.startswith(("#", "theta"))]
    points = [CalibrationPoint(theta=float(r[0]), xi0=float(r[1]),
                               weight=float(r[2]) if len(r) > 2 else 1.0)
              for r in rows]
    a, b, frac = calibrate_pn(points)
    _emit_report(args, "calibrate",
                 {"linear_coeff": a, "quad_coeff": b, "quad_fraction": frac})
    return 0


def _cmd_fit(args) -> int:
    params = _load_params(args)
    rows = [ln.split(",") for ln in
            Path(args.observed).read_text().splitlines()
            if ln.strip() and not ln.startswith(("#", "t"))]
    data = np.array([[float(c) if c else math.nan for c in r] for r in rows])
    if data.shape[1] != 5:
        raise ValueError("observed CSV needs t,xi,xi_err,jx_norm,jx_err")
    problem = FitProblem(times=data[:, 0], xi=data[:, 1], xi_err=data[:, 2],
                         jx_norm=data[:, 3], jx_err=data[:, 4],
                         free=tuple(args.free), fixed=params,
                         initial_pop=_initial_pop(args), pump=args.pump,
                         slope_constraint=args.slope_constraint,
                         slope_obs=args.slope_obs)
    result = fit_parameters(problem)
    report = {
        "free": list(result.free),
        "estimates": {n: getattr(result.params, n) for n in result.free},
        "cost": result.cost,
        "residual_norm": float(np.linalg.norm(result.residuals)),
        "covariance": result.covariance.tolist(),
    }
    _emit_report(args, "fit", report, result.params, args.seed)
    return 0


def _cmd_orientation(args) -> int:
    p = [float(x) for x in args.populations.split(",")]
    o = orientation(p)
    _emit_report(args, "orientation", {"orientation": o})
    return 0


def _cmd_scenario(args) -> int:
    overrides = json.loads(args.overrides) if args.overrides else None
    grid = _parse_grid(args.grid) if args.grid else None
    result = run_scenario(args.name, overrides=overrides, seed=args.seed,
                          grid=grid, trials=args.trials)
    head = _metadata_block(result.params, args.seed,
                           {"scenario": result.name})
    for fname, text in result.artifacts.items():
        _emit(args, fname, head + text)
    _emit_report(args, f"{result.name}_report", result.report,
                 result.params, args.seed)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="eprsim",
        description="Two-ensemble dissipative entanglement simulator",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, grid_default="0,45,0.25"):
        p.add_argument("--params", help="model parameter JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output directory (default: stdout)")
        p.add_argument("--grid", default=grid_default,
                       help="time grid t0,t1,dt in ms")
        p.add_argument("--trials", type=int, default=2000)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("simulate", help="moment-equation trajectory")
    common(p)
    p.add_argument("--pops", default="0.99,0.01,0.0",
                   help="initial populations n44,n43,nh")
    p.add_argument("--pump", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("populations", help="three-level rate model")
    common(p)
    p.add_argument("--pops", default="0.99,0.01,0.0")
    p.add_argument("--pump", action="store_true")
    p.set_defaults(func=_cmd_populations)

    p = sub.add_parser("reconstruct", help="readout round trip")
    common(p)
    p.add_argument("--gamma-s", type=float, default=0.19, dest="gamma_s")
    p.add_argument("--gamma-extra", type=float, default=0.08,
                   dest="gamma_extra")
    p.add_argument("--probe-ms", type=float, default=5.0, dest="probe_ms")
    p.add_argument("--dt-ms", type=float, default=0.1, dest="dt_ms")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("conditional", help="hybrid conditional variance")
    common(p)
    p.add_argument("--gamma-s", type=float, default=0.19, dest="gamma_s")
    p.add_argument("--gamma-extra", type=float, default=0.08,
                   dest="gamma_extra")
    p.add_argument("--handover-ms", type=float, default=20.0,
                   dest="handover_ms")
    p.add_argument("--probe-ms", type=float, default=5.0, dest="probe_ms")
    p.add_argument("--dt-ms", type=float, default=0.1, dest="dt_ms")
    p.add_argument("--gm-min", type=float, default=0.1, dest="gm_min")
    p.add_argument("--gm-max", type=float, default=1.5, dest="gm_max")
    p.add_argument("--gm-step", type=float, default=0.01, dest="gm_step")
    p.set_defaults(func=_cmd_conditional)

    p = sub.add_parser("calibrate", help="projection-noise calibration")
    common(p)
    p.add_argument("points", help="CSV of theta,xi0[,weight]")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("fit", help="rate/dephasing parameter fit")
    common(p)
    p.add_argument("observed", help="CSV of t,xi,xi_err,jx_norm,jx_err")
    p.add_argument("--free", nargs="+", default=["d", "Gamma_col",
                                                 "Gamma_tilde"])
    p.add_argument("--pops", default="0.99,0.01,0.0")
    p.add_argument("--pump", action="store_true")
    p.add_argument("--slope-constraint", action="store_true",
                   dest="slope_constraint")
    p.add_argument("--slope-obs", type=float, default=0.0, dest="slope_obs")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("orientation", help="orientation from populations")
    common(p)
    p.add_argument("populations", help="nine comma-separated p_m, m=-4..4")
    p.set_defaults(func=_cmd_orientation)

    p = sub.add_parser("scenario", help="end-to-end fixture")
    common(p, grid_default=None)
    p.add_argument("name", choices=SCENARIO_NAMES)
    p.add_argument("--overrides", help="JSON object of parameter overrides")
    p.set_defaults(func=_cmd_scenario)
    return ap


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except _INVARIANT_ERRORS as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return 4
    except _NUMERICAL_ERRORS as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except EprSimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
