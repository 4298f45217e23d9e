"""Three-level rate model: populations, polarisation, slope constraints and
the multilevel entanglement formula.

Atoms live in |4,+/-4> (fraction n44), |4,+/-3> (n43) and a hidden level
|3,+/-3> (nh); both ensembles are treated symmetrically so one state serves
both.  All transitions are linear, so the population dynamics is a 3x3
linear ODE solved exactly by matrix exponential.  Summing pairs of equations
recovers the textbook forms

    dN2/dt       = -(G_out + 2 G_in) N2 + 2 N G_in
    dP2_tilde/dt = -(G_34 + G_43 + G_out) P2_tilde + (G_34 - G_43) N2 / N

with P2_tilde = P2 N2 / N.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DegeneratePolarizationError, InvariantViolationError, ModelViolationError
from .spin_model import ModelParams

__all__ = [
    "PopulationState",
    "RateSet",
    "PumpConfig",
    "PopulationSeries",
    "transition_rates",
    "rate_matrix",
    "propagate_populations",
    "polarization_slope",
    "variance_slope",
    "sm_variance_drift",
    "transverse_decay",
    "multilevel_entanglement",
    "multilevel_xi",
    "populations_to_csv",
]


@dataclass(frozen=True)
class PopulationState:
    """Sublevel population fractions of one ensemble (both are symmetric)."""

    n44: float
    n43: float
    nh: float
    N: float = 1.0

    def __post_init__(self):
        for name in ("n44", "n43", "nh"):
            if getattr(self, name) < -1e-12:
                raise InvariantViolationError(f"population fraction {name} < 0")
        if abs(self.n44 + self.n43 + self.nh - 1.0) > 1e-9:
            raise InvariantViolationError("population fractions must sum to 1")
        if self.N <= 0:
            raise InvariantViolationError("atom number must be positive")

    @property
    def n2_frac(self) -> float:
        return self.n44 + self.n43

    @property
    def N2(self) -> float:
        return self.N * self.n2_frac

    @property
    def p2(self) -> float:
        n2 = self.n2_frac
        if n2 == 0.0:
            return 0.0
        return abs(self.n44 - self.n43) / n2

    @property
    def p2_tilde(self) -> float:
        """P2 N2 / N, the polarisation weighted by two-level occupancy."""
        return abs(self.n44 - self.n43)

    @property
    def jx_frac(self) -> float:
        """<J_x>/N from the magnetic quantum numbers 4 and 3."""
        return 4.0 * self.n44 + 3.0 * self.n43

    @property
    def Jx(self) -> float:
        return self.N * self.jx_frac


@dataclass(frozen=True)
class RateSet:
    """Transition rates of the three-level model (ms^-1)."""

    g34: float  # |4,+/-3> -> |4,+/-4>  (driving-field cooling + collisions)
    g43: float  # |4,+/-4> -> |4,+/-3>  (heating + collisions)
    g_out: float  # either F=4 level -> hidden
    g_in: float  # hidden -> either F=4 level

    def __post_init__(self):
        for name in ("g34", "g43", "g_out", "g_in"):
            if getattr(self, name) < 0:
                raise InvariantViolationError(f"rate {name} must be >= 0")


@dataclass(frozen=True)
class PumpConfig:
    """Incoherent pump: refills the hidden level into F=4 and repolarises.

    ``branching`` is the fraction of refilled atoms landing in |4,+/-4>;
    the split is not pinned down by the physics, equal split is the default.
    """

    rate: float
    branching: float = 0.5

    def __post_init__(self):
        if self.rate < 0 or not 0.0 <= self.branching <= 1.0:
            raise InvariantViolationError("invalid pump configuration")


def transition_rates(params: ModelParams) -> RateSet:
    """Rates from the model parameters; collisions feed every transition."""
    return RateSet(
        g34=params.mu**2 * params.Gamma + params.Gamma_col,
        g43=params.nu**2 * params.Gamma + params.Gamma_col,
        g_out=params.Gamma_L_out + params.Gamma_col,
        g_in=params.Gamma_col,
    )


def rate_matrix(rates: RateSet, pump: PumpConfig | None = None) -> np.ndarray:
    """Generator of the linear population system, ordered (n44, n43, nh)."""
    a = np.array(
        [
            [-(rates.g43 + rates.g_out), rates.g34, rates.g_in],
            [rates.g43, -(rates.g34 + rates.g_out), rates.g_in],
            [rates.g_out, rates.g_out, -2.0 * rates.g_in],
        ]
    )
    if pump is not None and pump.rate > 0:
        p, b = pump.rate, pump.branching
        a += np.array(
            [
                [0.0, p, b * p],
                [0.0, -p, (1.0 - b) * p],
                [0.0, 0.0, -p],
            ]
        )
    return a


@dataclass
class PopulationSeries:
    """Population trajectory; arrays are aligned with ``times``."""

    times: np.ndarray
    states: list
    N: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.n44 = np.array([s.n44 for s in self.states])
        self.n43 = np.array([s.n43 for s in self.states])
        self.nh = np.array([s.nh for s in self.states])
        self.n2_frac = self.n44 + self.n43
        with np.errstate(invalid="ignore", divide="ignore"):
            self.p2 = np.where(self.n2_frac > 0,
                               np.abs(self.n44 - self.n43) / np.where(self.n2_frac > 0, self.n2_frac, 1.0),
                               0.0)
        self.p2_tilde = np.abs(self.n44 - self.n43)
        self.jx_frac = 4.0 * self.n44 + 3.0 * self.n43


def propagate_populations(initial: PopulationState, rates: RateSet, grid,
                          pump: PumpConfig | None = None) -> PopulationSeries:
    """Exact propagation of the linear population system over ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-D array")
    a = rate_matrix(rates, pump)
    n0 = np.array([initial.n44, initial.n43, initial.nh])
    t_rel = grid - grid[0]
    # matrix exponential per point: exact and safe for defective generators
    # (an eigendecomposition breaks down when pump degeneracies make the
    # rate matrix non-diagonalizable)
    sol = np.stack([expm(a * t) @ n0 for t in t_rel], axis=1)
    if sol.min() < -1e-8:
        raise ModelViolationError(
            f"population went negative ({sol.min():.3e}); rates are unphysical"
        )
    sol = np.clip(sol, 0.0, None)
    sol /= sol.sum(axis=0, keepdims=True)
    states = [PopulationState(n44=sol[0, k], n43=sol[1, k], nh=sol[2, k],
                              N=initial.N)
              for k in range(grid.size)]
    return PopulationSeries(times=grid, states=states, N=initial.N)


def polarization_slope(initial: PopulationState, rates: RateSet) -> float:
    """d/dt of P = <J_x(t)>/<J_x(0)> at t = 0 from the rate model."""
    if initial.Jx <= 0:
        raise DegeneratePolarizationError("macroscopic spin must be positive")
    num = (-(rates.g43 + 4.0 * rates.g_out) * initial.n44
           + (rates.g34 - 3.0 * rates.g_out) * initial.n43)
    return num / initial.jx_frac


def variance_slope(initial: PopulationState, params: ModelParams,
                   rates: RateSet) -> float:
    """Initial slope of the normalised variance in the simplified rate model.

    Evaluates the small-time expansion used for the slope constraints, with
    populations as fractions (per-atom normalisation).  The collective term
    vanishes exactly at P2(0) = (mu - nu)^2.
    """
    return sm_variance_drift(initial, params, rates)


def sm_variance_drift(pop: PopulationState, params: ModelParams,
                      rates: RateSet) -> float:
    """Drift term of the rate-model variance series at a given population."""
    s2 = params.squeeze_sq
    p2 = pop.p2
    collective = -4.0 * params.d * params.Gamma * p2 * (1.0 - p2 / s2)
    refill = 7.0 * rates.g_in * p2
    leak = -7.0 * (rates.g_out + rates.g34 - rates.g43) * pop.n43
    return collective + refill + leak


def transverse_decay(jy0: float, params: ModelParams,
                     pop_series: PopulationSeries, t: float) -> float:
    """<J_y(t)> = exp(-(Gamma_tilde + d Gamma P2_tilde(t)) t / 2) <J_y(0)>."""
    times = pop_series.times
    if t < times[0] or t > times[-1]:
        raise ValueError(f"t={t} outside population series span")
    p2t = float(np.interp(t, times, pop_series.p2_tilde))
    rate = params.Gamma_tilde + params.d * params.Gamma * p2t
    return math.exp(-0.5 * rate * t) * jy0


def multilevel_entanglement(sigma_j: float, pop: PopulationState) -> float:
    """xi = (Sigma_J + 14 N_{|4,+/-3>}) / (N2 (P2 + 7)).

    ``sigma_j`` is the EPR spin variance in extensive spin units; the
    |4,+/-3> atoms add excess noise and the denominator renormalises to the
    shrinking two-level subsystem.
    """
    if pop.N2 <= 0:
        raise DegeneratePolarizationError("two-level subsystem is empty")
    n43_atoms = pop.N * pop.n43
    return (sigma_j + 14.0 * n43_atoms) / (pop.N2 * (pop.p2 + 7.0))


def multilevel_xi(xi_gauss: float, pop: PopulationState) -> float:
    """Multilevel witness from the normalised Gaussian witness.

    Uses Sigma_J = 2 |<J_x>| xi_gauss; the atom number cancels.
    """
    sigma_j = 2.0 * pop.Jx * xi_gauss
    return multilevel_entanglement(sigma_j, pop)


def populations_to_csv(series: PopulationSeries, stream=None) -> str:
    """CSV export sharing the trajectory schema (N2, P2 columns)."""
    own = stream is None
    out = io.StringIO() if own else stream
    out.write("time_ms,var_x_minus,var_p_plus,xi,Jx_norm,N2,P2\n")
    jx0 = series.jx_frac[0] if series.jx_frac[0] > 0 else 1.0
    for k, t in enumerate(series.times):
        out.write(f"{t:.17g},,,,{series.jx_frac[k] / jx0:.17g},"
                  f"{series.n2_frac[k]:.17g},{series.p2[k]:.17g}\n")
    return out.getvalue() if own else ""
