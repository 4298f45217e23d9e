"""Parameter estimation: rate/dephasing fits to xi(t) and J_x(t) series,
projection-noise calibration, and orientation estimation from quantum-beat
signals.

The forward model couples the three-level population dynamics to the
Gaussian moment engine: the populations throttle the collective rate and
supply the multilevel correction to the witness.  Fitting is weighted least
squares (finite-difference Gauss-Newton via scipy) on at most five physical
parameters with positivity bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, nnls

from .errors import FitFailureError, IdentifiabilityError, NoInformationError
from .gaussian_dynamics import NoiseChannels, propagate_moments
from .multilevel_rates import (
    PopulationState,
    PumpConfig,
    multilevel_xi,
    polarization_slope,
    propagate_populations,
    transition_rates,
)
from .spin_model import ModelParams, css_state

__all__ = [
    "FitProblem",
    "FitResult",
    "CalibrationPoint",
    "BeatModel",
    "FITTABLE",
    "forward_model",
    "fit_parameters",
    "calibrate_pn",
    "orientation",
    "simulate_beat",
    "estimate_orientation",
]

FITTABLE = ("d", "Gamma_col", "Gamma_tilde", "Gamma_L_out", "Gamma_pump")

# F = 4 magnetic sublevels and the ladder coefficients sqrt(F(F+1)-m(m+1))
# weighting each adjacent-level coherence.
_M_VALUES = np.arange(-4, 5)
_LADDER = np.sqrt(4.0 * 5.0 - _M_VALUES[:-1] * (_M_VALUES[:-1] + 1.0))


@dataclass(frozen=True)
class FitProblem:
    """Observed series plus the parameter split for a fit.

    ``observed`` is a structured record of aligned 1-D arrays: t (ms), xi,
    xi_err, jx_norm, jx_err; entries of jx_norm may be NaN where only the
    witness was measured (they are skipped).  ``slope_constraint`` eliminates
    Gamma_L_out through the measured t = 0 polarisation slope
    ``slope_obs`` (ms^-1), reducing the free-parameter count.
    """

    times: np.ndarray
    xi: np.ndarray
    xi_err: np.ndarray
    jx_norm: np.ndarray
    jx_err: np.ndarray
    free: tuple
    fixed: ModelParams
    initial_pop: PopulationState
    pump: bool = False
    slope_constraint: bool = False
    slope_obs: float = 0.0

    def __post_init__(self):
        for name in ("times", "xi", "xi_err", "jx_norm", "jx_err"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        n = self.times.size
        if n == 0:
            raise ValueError("observed series must be nonempty")
        for name in ("xi", "xi_err", "jx_norm", "jx_err"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must be aligned with times")
        unknown = set(self.free) - set(FITTABLE)
        if unknown:
            raise ValueError(f"not fittable: {sorted(unknown)}")
        if len(set(self.free)) != len(self.free):
            raise ValueError("duplicate free parameters")
        if self.slope_constraint and "Gamma_L_out" in self.free:
            raise ValueError(
                "Gamma_L_out is determined by the slope constraint; "
                "remove it from the free set"
            )


@dataclass
class FitResult:
    params: ModelParams
    covariance: np.ndarray
    residuals: np.ndarray
    free: tuple
    cost: float


@dataclass(frozen=True)
class CalibrationPoint:
    """One point of the projection-noise calibration curve."""

    theta: float  # Faraday angle, proportional to J_x
    xi0: float  # reconstructed initial noise in PN units
    weight: float = 1.0

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("Faraday angle must be positive")
        if self.weight <= 0:
            raise ValueError("weight must be positive")


@dataclass(frozen=True)
class BeatModel:
    """Sublevel populations and the second-order Zeeman splitting."""

    populations: tuple  # p_m for m = -4..4
    zeeman_split: float = 20.0  # Hz
    duration: float = 100.0  # ms

    def __post_init__(self):
        p = np.asarray(self.populations, dtype=float)
        if p.shape != (9,):
            raise ValueError("need nine sublevel populations (m = -4..4)")
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("populations must be a distribution")
        if self.zeeman_split <= 0 or self.duration <= 0:
            raise ValueError("splitting and duration must be positive")


def _resolve_gamma_l_out(problem: FitProblem, trial: dict) -> float:
    """Invert the linear t = 0 polarisation-slope identity for Gamma_L_out."""
    p = problem.fixed.replace(**{k: v for k, v in trial.items()
                                 if k != "Gamma_L_out"})
    # slope * jx = -g43 n44 + g34 n43 - g_out jx, linear in g_out.
    r = transition_rates(p)
    pop = problem.initial_pop
    jx = pop.jx_frac
    g_out = (-r.g43 * pop.n44 + r.g34 * pop.n43
             - problem.slope_obs * jx) / jx
    gl = g_out - p.Gamma_col
    if gl < 0:
        raise FitFailureError(
            f"slope constraint forces Gamma_L_out = {gl:.4g} < 0"
        )
    return gl


def forward_model(params: ModelParams, initial_pop: PopulationState, times,
                  pump: bool = False):
    """Predicted (xi_multilevel, jx_norm) series for a parameter set."""
    times = np.asarray(times, dtype=float)
    rates = transition_rates(params)
    pcfg = PumpConfig(rate=params.Gamma_pump) if pump else None
    pops = propagate_populations(initial_pop, rates, times, pump=pcfg)
    noise = NoiseChannels.from_params(params, pump=pump)
    traj = propagate_moments(css_state(), params, noise, times,
                             populations=pops)
    xi_ml = np.array([multilevel_xi(traj.xi_series[k].xi, pops.states[k])
                      for k in range(times.size)])
    jx_norm = pops.jx_frac / pops.jx_frac[0]
    return xi_ml, jx_norm, traj, pops


def fit_parameters(problem: FitProblem) -> FitResult:
    """Weighted least squares over the coupled rate + moment forward model."""
    n_obs = problem.times.size + np.count_nonzero(
        np.isfinite(problem.jx_norm))

    def build(x):
        trial = dict(zip(problem.free, x))
        if problem.slope_constraint:
            trial["Gamma_L_out"] = _resolve_gamma_l_out(problem, trial)
        return problem.fixed.replace(**trial)

    def residuals(x):
        p = build(x)
        xi_m, jx_m, _, _ = forward_model(p, problem.initial_pop,
                                         problem.times, pump=problem.pump)
        res = [(xi_m - problem.xi) / problem.xi_err]
        mask = np.isfinite(problem.jx_norm)
        if mask.any():
            res.append((jx_m[mask] - problem.jx_norm[mask])
                       / problem.jx_err[mask])
        return np.concatenate(res)

    if not problem.free:
        r = residuals(np.empty(0))
        return FitResult(params=build(np.empty(0)),
                         covariance=np.empty((0, 0)), residuals=r,
                         free=(), cost=0.5 * float(r @ r))

    if n_obs < len(problem.free):
        raise ValueError("fewer data points than free parameters")

    x0 = np.array([getattr(problem.fixed, name) for name in problem.free])
    lo = np.array([1.0 if n == "d" else 0.0 for n in problem.free])
    hi = np.array([1e4 if n == "d" else 10.0 for n in problem.free])
    x0 = np.clip(x0, lo + 1e-6, hi - 1e-6)

    # diff_step well above the ODE-solver tolerance keeps the forward
    # finite differences out of the integrator's noise floor.
    sol = least_squares(residuals, x0, bounds=(lo, hi), xtol=1e-15,
                        ftol=1e-15, gtol=1e-15, diff_step=1e-5,
                        x_scale=np.maximum(np.abs(x0), 1e-3))
    if not (sol.success and np.all(np.isfinite(sol.x))):
        raise FitFailureError(f"fit did not converge: {sol.message}",
                              best=build(sol.x))

    jac = sol.jac
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s[0] == 0 or s[-1] / s[0] < 1e-10:
        direction = {name: float(v) for name, v in zip(problem.free, vt[-1])}
        worst = max(direction, key=lambda k: abs(direction[k]))
        raise IdentifiabilityError(
            f"information matrix is singular along a direction dominated by "
            f"{worst}", direction=direction)
    cov = (vt.T / s**2) @ vt
    return FitResult(params=build(sol.x), covariance=cov,
                     residuals=sol.fun, free=tuple(problem.free),
                     cost=float(sol.cost))


def calibrate_pn(points) -> tuple:
    """Fit xi0 = a*theta + b*theta^2; returns (a, b, b/a).

    The linear part defines the projection-noise level; the quadratic part
    captures classical noise growing with atom number.
    """
    points = list(points)
    if len(points) < 3:
        raise ValueError("need at least three calibration points")
    theta = np.array([p.theta for p in points])
    xi0 = np.array([p.xi0 for p in points])
    w = np.sqrt(np.array([p.weight for p in points]))
    design = np.stack([theta, theta**2], axis=1) * w[:, None]
    if np.linalg.matrix_rank(design, tol=1e-12 * np.abs(design).max()) < 2:
        raise FitFailureError("calibration points are collinear in "
                              "(theta, theta^2)")
    coef, *_ = np.linalg.lstsq(design, xi0 * w, rcond=None)
    a, b = (float(c) for c in coef)
    if a == 0.0:
        raise FitFailureError("degenerate calibration: zero linear part")
    return a, b, b / a


def orientation(populations) -> float:
    """Orientation o = (1/4) sum_m m p_m of a sublevel distribution."""
    p = np.asarray(populations, dtype=float)
    if p.shape != (9,):
        raise ValueError("need nine sublevel populations (m = -4..4)")
    if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("populations must be a distribution")
    return float(_M_VALUES @ p) / 4.0


def _beat_amplitudes(populations) -> np.ndarray:
    """Coherence amplitude per adjacent-level transition m <-> m+1."""
    p = np.asarray(populations, dtype=float)
    return _LADDER * 0.5 * (p[:-1] + p[1:])


def simulate_beat(model: BeatModel, dt: float):
    """Transverse-spin beat signal in the frame of the m=3<->4 transition.

    Each transition m <-> m+1 is offset by (3 - m) times the second-order
    splitting; adjacent-level populations weight the component amplitudes.
    Returns (times_ms, X, P) with X(t) = sum_m A_m cos(w_m t) and
    P(t) = sum_m A_m sin(w_m t).
    """
    if dt <= 0 or dt > 1.0:
        raise ValueError("dt must lie in (0, 1] ms to resolve the beat")
    t = np.arange(int(round(model.duration / dt))) * dt
    amps = _beat_amplitudes(model.populations)
    # splitting in cycles/ms; offsets k = 3 - m for m = -4..3
    delta = model.zeeman_split * 1e-3
    k = 3.0 - _M_VALUES[:-1]
    phases = 2.0 * np.pi * delta * np.outer(k, t)
    x = amps @ np.cos(phases)
    p = amps @ np.sin(phases)
    return t, x, p


def estimate_orientation(signal, model: BeatModel) -> float:
    """Recover the orientation from a beat signal.

    ``signal`` is (times, X, P) as produced by :func:`simulate_beat`; the
    template model supplies splitting and the frequency layout.  Component
    amplitudes come from a linear fit, populations from the bidiagonal
    amplitude ladder plus normalisation (non-negative least squares).
    """
    t, x, p = (np.asarray(a, dtype=float) for a in signal)
    if np.max(np.abs(x)) + np.max(np.abs(p)) < 1e-12:
        raise FitFailureError("signal is identically zero; "
                              "orientation is undefined")
    delta = model.zeeman_split * 1e-3
    k = 3.0 - _M_VALUES[:-1]
    phases = 2.0 * np.pi * delta * np.outer(k, t)
    design = np.concatenate([np.cos(phases), np.sin(phases)], axis=1).T
    target = np.concatenate([x, p])
    amps, *_ = np.linalg.lstsq(design, target, rcond=None)
    # A_m = c_m (p_m + p_{m+1}) / 2 plus sum p = 1: a square ladder system.
    ladder = np.zeros((9, 9))
    for i in range(8):
        ladder[i, i] = ladder[i, i + 1] = 0.5 * _LADDER[i]
    ladder[8, :] = 1.0
    rhs = np.concatenate([amps, [1.0]])
    pops, _ = nnls(ladder, rhs)
    total = pops.sum()
    if total <= 0:
        raise FitFailureError("population recovery collapsed to zero")
    return orientation(pops / total)
