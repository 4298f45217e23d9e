"""Second-moment dynamics of the two ensembles under engineered dissipation.

The master equation with the nonlocal jump operators A = mu J-_I - nu J-_II
and B = mu J+_II - nu J+_I becomes, in the Holstein-Primakoff limit, a pair
of bosonic Lindblad channels L1 = mu a - nu b^dag, L2 = mu b - nu a^dag at
the collective rate.  Working out the first and second moments (the drift
matrix is proportional to the identity, so the covariance relaxes uniformly)
gives

    d<r>/dt  = -gamma_c <r>
    dC/dt    = -2 gamma_c (C - C_tms)

where C_tms is the two-mode-squeezed covariance with diagonal mu^2 + nu^2
and cross blocks +/- 2 mu nu.  In the nonlocal basis this is exactly the
relaxation of var((X_I - X_II)/sqrt(2)) and var((P_I + P_II)/sqrt(2)) toward
(mu - nu)^2 at rate 2 gamma_c, with the conjugate combinations anti-squeezed
toward (mu + nu)^2.  The collective rate is

    2 gamma_c = d * Gamma * N2(t) P2(t) / N

so population loss and depolarisation throttle the entangling channel
quasi-statically.  Local dephasing pulls every covariance entry back toward
the CSS identity at rate Gamma_tilde.  These equations are certified against
the exact few-spin Lindblad integrator in ``lindblad_oracle``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    DegeneratePolarizationError,
    InvariantViolationError,
    StiffnessError,
)
from .spin_model import (
    EprReport,
    GaussianState,
    ModelParams,
    epr_variance,
    two_mode_squeezed_cov,
)

__all__ = [
    "NoiseChannels",
    "Trajectory",
    "relaxation_rate",
    "dissipation_target_cov",
    "moment_derivative",
    "propagate_moments",
    "trajectory_to_csv",
]


@dataclass(frozen=True)
class NoiseChannels:
    """Local (single-ensemble) noise processes on top of the engineered bath.

    ``dephasing`` drives every quadrature variance back toward the CSS level;
    ``pump_refill`` is the quadrature-noise side of the incoherent pump and
    has the same CSS-restoring structure.  ``distinguishable`` models emitters
    whose forward-scattered photons carry which-path information: the
    nonlocal interference is lost and each ensemble is damped toward a local
    thermal state instead of the joint EPR state.
    """

    dephasing: float = 0.0
    pump_refill: float = 0.0
    dephasing_enabled: bool = True
    pump_enabled: bool = False
    distinguishable: bool = False

    def __post_init__(self):
        if self.dephasing < 0 or self.pump_refill < 0:
            raise InvariantViolationError("noise rates must be >= 0")

    @property
    def css_rate(self) -> float:
        """Rate of relaxation toward the CSS covariance (pump excluded)."""
        return self.dephasing if self.dephasing_enabled else 0.0

    def pump_noise_rate(self, nh_frac: float = 1.0) -> float:
        """Quadrature-noise rate of the incoherent pump.

        Refilled atoms re-enter the collective mode in a random spin state,
        so the noise injection scales with the refill flux, i.e. with the
        hidden-level fraction -- not with the bare pump rate.
        """
        if not self.pump_enabled:
            return 0.0
        return self.pump_refill * max(0.0, nh_frac)

    @classmethod
    def from_params(cls, params: ModelParams, pump: bool = False) -> "NoiseChannels":
        return cls(dephasing=params.Gamma_tilde, pump_refill=params.Gamma_pump,
                   pump_enabled=pump)


@dataclass
class Trajectory:
    """Time series of Gaussian states with the EPR witness at every step."""

    times: np.ndarray
    states: list
    xi_series: list
    populations: object = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise InvariantViolationError("trajectory times must strictly increase")
        if not (len(self.times) == len(self.states) == len(self.xi_series)):
            raise InvariantViolationError("trajectory series lengths differ")

    @property
    def xi(self) -> np.ndarray:
        return np.array([r.xi for r in self.xi_series])


def relaxation_rate(params: ModelParams, p2_tilde: float = 1.0) -> float:
    """Covariance relaxation rate 2*gamma_c of the engineered dissipation."""
    return params.d * params.Gamma * p2_tilde


def dissipation_target_cov(params: ModelParams, distinguishable: bool = False):
    """Fixed-point covariance of the engineered-dissipation channel alone."""
    if distinguishable:
        # Which-path information removes the nonlocal interference: the same
        # local heating/cooling rates act independently on each ensemble.
        return (params.mu**2 + params.nu**2) * np.eye(4)
    return two_mode_squeezed_cov(params.mu, params.nu)


def moment_derivative(state: GaussianState, params: ModelParams,
                      noise: NoiseChannels, p2_tilde: float = 1.0,
                      nh_frac: float = 0.0):
    """Time derivative (dmean, dcov) of a Gaussian state.

    ``p2_tilde`` = N2 P2 / N throttles the collective rate when the
    population model is coupled in; 1.0 is the fully polarised two-level
    limit.  ``nh_frac`` feeds the pump noise channel when enabled.
    """
    g2 = relaxation_rate(params, p2_tilde)
    css = noise.css_rate + noise.pump_noise_rate(nh_frac)
    target = dissipation_target_cov(params, noise.distinguishable)
    dmean = -(0.5 * g2 + 0.5 * css) * state.mean
    dcov = -g2 * (state.cov - target) - css * (state.cov - np.eye(4))
    return dmean, dcov


def _pack(mean, cov):
    iu = np.triu_indices(4)
    return np.concatenate([mean, cov[iu]])


def _unpack(y):
    mean = y[:4]
    cov = np.zeros((4, 4))
    iu = np.triu_indices(4)
    cov[iu] = y[4:]
    cov = cov + np.triu(cov, 1).T
    return mean, cov


def propagate_moments(initial: GaussianState, params: ModelParams,
                      noise: NoiseChannels, grid, populations=None,
                      jx_mean=None, rtol: float = 1e-10,
                      atol: float = 1e-12) -> Trajectory:
    """Integrate the moment equations over ``grid`` (ms, strictly increasing).

    ``populations`` may be a PopulationSeries (or anything exposing ``times``
    and ``p2_tilde`` arrays); the collective rate then tracks N2(t) P2(t)
    quasi-statically.  The covariance is checked for symmetry, positivity and
    the symplectic bound at every output point.
    """
    grid = np.asarray(grid, dtype=float)
    initial.validate()
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-D array")
    if grid.size == 1 or grid[-1] == grid[0]:
        report = epr_variance(initial)
        return Trajectory(times=grid[:1], states=[initial],
                          xi_series=[report], populations=populations)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must strictly increase")

    if populations is None:
        p2t = lambda t: 1.0
        nht = lambda t: 0.0
    else:
        pt = np.asarray(populations.times, dtype=float)
        pv = np.asarray(populations.p2_tilde, dtype=float)
        p2t = lambda t: float(np.interp(t, pt, pv))
        nh_arr = getattr(populations, "nh", None)
        if nh_arr is None:
            nht = lambda t: 0.0
        else:
            nh_arr = np.asarray(nh_arr, dtype=float)
            nht = lambda t: float(np.interp(t, pt, nh_arr))

    target_cache = {}

    def rhs(t, y):
        mean, cov = _unpack(y)
        g2 = relaxation_rate(params, p2t(t))
        css = noise.css_rate + noise.pump_noise_rate(nht(t))
        key = noise.distinguishable
        if key not in target_cache:
            target_cache[key] = dissipation_target_cov(params, key)
        dcov = -g2 * (cov - target_cache[key]) - css * (cov - np.eye(4))
        dmean = -(0.5 * g2 + 0.5 * css) * mean
        return _pack(dmean, dcov)

    sol = solve_ivp(rhs, (grid[0], grid[-1]), _pack(initial.mean, initial.cov),
                    t_eval=grid, rtol=rtol, atol=atol, method="RK45")
    if not sol.success:
        worst = max(relaxation_rate(params), noise.css_rate)
        raise StiffnessError(
            f"moment integration failed ({sol.message}); "
            f"dominant rate {worst:.4g} ms^-1"
        )

    states, reports = [], []
    jx = initial.jx_mean if jx_mean is None else jx_mean
    for k in range(grid.size):
        mean, cov = _unpack(sol.y[:, k])
        cov = 0.5 * (cov + cov.T)
        st = GaussianState(mean=mean, cov=cov, jx_mean=jx)
        st.validate()
        states.append(st)
        reports.append(epr_variance(st))
    return Trajectory(times=grid, states=states, xi_series=reports,
                      populations=populations)


def trajectory_to_csv(traj: Trajectory, stream=None) -> str:
    """Serialize a trajectory to CSV (shared schema with population series)."""
    own = stream is None
    out = io.StringIO() if own else stream
    out.write("time_ms,var_x_minus,var_p_plus,xi,Jx_norm,N2,P2\n")
    pops = traj.populations
    if pops is not None:
        pt = np.asarray(pops.times, dtype=float)
        jx0 = pops.jx_frac[0]
        if jx0 <= 0.0:
            raise DegeneratePolarizationError(
                "initial mean spin vanishes; Jx_norm is undefined")
    for k, t in enumerate(traj.times):
        r = traj.xi_series[k]
        if pops is None:
            jxn, n2, p2 = 1.0, "", ""
            out.write(f"{t:.17g},{r.var_x_minus:.17g},{r.var_p_plus:.17g},"
                      f"{r.xi:.17g},{jxn:.17g},{n2},{p2}\n")
        else:
            jxn = float(np.interp(t, pt, pops.jx_frac)) / jx0
            n2 = float(np.interp(t, pt, pops.n2_frac))
            p2 = float(np.interp(t, pt, pops.p2))
            out.write(f"{t:.17g},{r.var_x_minus:.17g},{r.var_p_plus:.17g},"
                      f"{r.xi:.17g},{jxn:.17g},{n2:.17g},{p2:.17g}\n")
    return out.getvalue() if own else ""
