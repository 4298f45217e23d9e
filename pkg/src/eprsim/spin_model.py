"""Core domain types: model parameters, Gaussian two-ensemble states and the
EPR entanglement criterion.

Unit conventions used throughout the package:

* Canonical quadratures ``(X_I, P_I, X_II, P_II)`` are scaled so that a
  coherent spin state (CSS) has unit variance per quadrature, i.e. the
  covariance of the CSS is the 4x4 identity.  The commutator is then
  ``[X, P] = 2i`` and symplectic eigenvalues of any physical covariance are
  >= 1.
* The EPR witness is the mean of the two normalised nonlocal variances,

      xi = var((X_I - X_II)/2) + var((P_I + P_II)/2),

  which equals 1 for the CSS and (mu - nu)^2 for the ideal two-mode-squeezed
  steady state of the engineered dissipation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegeneratePolarizationError, InvariantViolationError

__all__ = [
    "ModelParams",
    "GaussianState",
    "EprReport",
    "bogoliubov_amplitudes",
    "holstein_primakoff",
    "epr_variance",
    "coupling_constants",
    "symplectic_eigenvalues",
    "symplectic_check",
    "two_mode_squeezed_cov",
    "css_state",
]

# Symplectic form for (X_I, P_I, X_II, P_II) with [X, P] = 2i.
SYMPLECTIC_FORM = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
)

_JSON_REQUIRED = (
    "d",
    "Gamma",
    "mu",
    "nu",
    "Gamma_col",
    "Gamma_tilde",
    "Gamma_pump",
    "Gamma_L_out",
    "Phi",
    "Omega",
    "N",
    "eta",
)
# Calibration scale for gamma_s; the proportionality constant is not fixed by
# the physics, so it travels with the parameter set but is optional in JSON.
_JSON_OPTIONAL = ("gamma_s_scale",)


def bogoliubov_amplitudes(squeeze: float) -> tuple[float, float]:
    """Return (mu, nu) with mu^2 - nu^2 = 1 and mu - nu = ``squeeze``.

    ``squeeze`` is the amplitude s with s^2 the steady-state EPR variance of
    the engineered dissipation; s = 0.4 gives the nominal (mu-nu)^2 = 0.16.
    """
    if squeeze <= 0:
        raise ValueError("squeeze amplitude must be positive")
    s = squeeze
    return (s + 1.0 / s) / 2.0, (1.0 / s - s) / 2.0


@dataclass(frozen=True)
class ModelParams:
    """All physical rates and coupling coefficients of the two-ensemble model.

    Rates are in ms^-1, Omega in rad/ms, Phi in photons/ms (arbitrary scale),
    d and N dimensionless.
    """

    d: float
    Gamma: float
    mu: float
    nu: float
    Gamma_col: float
    Gamma_tilde: float
    Gamma_pump: float
    Gamma_L_out: float
    Phi: float
    Omega: float
    N: float
    eta: float
    gamma_s_scale: float = 1.0

    def __post_init__(self):
        if self.d < 0:
            raise InvariantViolationError("optical depth d must be >= 0")
        for name in ("Gamma", "Gamma_col", "Gamma_tilde", "Gamma_pump",
                     "Gamma_L_out", "Phi", "gamma_s_scale"):
            if getattr(self, name) < 0:
                raise InvariantViolationError(f"{name} must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise InvariantViolationError("eta must lie in [0, 1]")
        if self.N <= 0:
            raise InvariantViolationError("atom number N must be > 0")
        if not self.mu > self.nu >= 0:
            raise InvariantViolationError("require mu > nu >= 0")
        if abs(self.mu**2 - self.nu**2 - 1.0) > 1e-9:
            raise InvariantViolationError("require mu^2 - nu^2 = 1")
        if (self.mu - self.nu) ** 2 >= 1.0:
            raise InvariantViolationError(
                "(mu - nu)^2 must be < 1 for an entangled steady state"
            )

    @property
    def squeeze_sq(self) -> float:
        """Steady-state EPR variance (mu - nu)^2 of pure engineered dissipation."""
        return (self.mu - self.nu) ** 2

    def replace(self, **kwargs) -> "ModelParams":
        merged = asdict(self)
        merged.update(kwargs)
        return ModelParams(**merged)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ValueError("parameter document must be a JSON object")
        allowed = set(_JSON_REQUIRED) | set(_JSON_OPTIONAL)
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        missing = set(_JSON_REQUIRED) - set(doc)
        if missing:
            raise ValueError(f"missing parameter keys: {sorted(missing)}")
        return cls(**doc)


@dataclass(frozen=True)
class GaussianState:
    """Means and covariance of (X_I, P_I, X_II, P_II) in CSS units."""

    mean: np.ndarray
    cov: np.ndarray
    jx_mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if self.mean.shape != (4,) or self.cov.shape != (4, 4):
            raise InvariantViolationError("mean must be (4,), cov must be (4, 4)")

    def validate(self, atol: float = 1e-8) -> "GaussianState":
        if not np.allclose(self.cov, self.cov.T, atol=atol):
            raise InvariantViolationError("covariance is not symmetric")
        eigs = np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T))
        if eigs.min() < -atol:
            raise InvariantViolationError(
                f"covariance is not PSD (min eigenvalue {eigs.min():.3e})"
            )
        symplectic_check(self.cov, atol=max(atol, 1e-7))
        return self


@dataclass(frozen=True)
class EprReport:
    """EPR witness split into its two nonlocal half-variances."""

    var_x_minus: float
    var_p_plus: float
    xi: float
    entangled: bool


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a 4x4 covariance; >= 1 for physical states."""
    m = 1j * SYMPLECTIC_FORM @ np.asarray(cov, dtype=float)
    vals = np.sort(np.abs(np.linalg.eigvals(m)))
    # Eigenvalues come in +/- pairs of equal modulus; keep one per pair.
    return vals[::2]


def symplectic_check(cov: np.ndarray, atol: float = 1e-7) -> None:
    """Raise if the covariance violates the Heisenberg (symplectic) bound."""
    nus = np.abs(np.linalg.eigvals(1j * SYMPLECTIC_FORM @ np.asarray(cov, float)))
    if nus.min() < 1.0 - atol:
        raise InvariantViolationError(
            f"symplectic eigenvalue {nus.min():.6f} below the Heisenberg bound"
        )


def holstein_primakoff(jy: float, jz: float, jx_mag: float, ensemble: str):
    """Map collective spin components onto canonical quadratures.

    X = J_y / sqrt(|<J_x>|); P = +J_z / sqrt(|<J_x>|) for ensemble I and
    -J_z / sqrt(|<J_x>|) for ensemble II (the sign folds the opposite
    macroscopic orientation of the second ensemble into P).
    """
    if jx_mag <= 0:
        raise DegeneratePolarizationError(
            "macroscopic spin magnitude must be positive"
        )
    if ensemble not in ("I", "II"):
        raise ValueError("ensemble must be 'I' or 'II'")
    root = math.sqrt(jx_mag)
    sign = 1.0 if ensemble == "I" else -1.0
    return jy / root, sign * jz / root


def epr_variance(state: GaussianState) -> EprReport:
    """Evaluate the EPR witness xi for a Gaussian two-ensemble state.

    xi < 1 certifies inseparability; the CSS sits exactly at xi = 1.
    """
    state.validate()
    c = state.cov
    m = state.mean
    # var((X_I - X_II)/2): quadrature indices 0 and 2.
    var_xm = 0.25 * (c[0, 0] + c[2, 2] - 2.0 * c[0, 2])
    # var((P_I + P_II)/2): quadrature indices 1 and 3.
    var_pp = 0.25 * (c[1, 1] + c[3, 3] + 2.0 * c[1, 3])
    # Means contribute nothing to the witness but guard against silent NaNs.
    if not np.all(np.isfinite(m)):
        raise InvariantViolationError("state means are not finite")
    xi = var_xm + var_pp
    return EprReport(var_x_minus=var_xm, var_p_plus=var_pp, xi=xi,
                     entangled=bool(xi < 1.0))


def coupling_constants(params: ModelParams, jx: float, T: float):
    """Collective measurement rate gamma_s and coupling kappa^2 at time T.

    gamma_s = scale * (mu - nu)^2 * J_x * Phi (the proportionality constant
    is a calibration input carried by the parameter set) and
    kappa^2 = (1 - exp(-2 gamma_s T)) / (mu - nu)^2.
    """
    if T < 0:
        raise ValueError("interaction time must be >= 0")
    s = params.mu - params.nu
    if s == 0.0:
        raise ZeroDivisionError("mu - nu = 0: coupling is undefined")
    gamma_s = params.gamma_s_scale * s**2 * jx * params.Phi
    kappa_sq = -math.expm1(-2.0 * gamma_s * T) / s**2
    return gamma_s, kappa_sq


def two_mode_squeezed_cov(mu: float, nu: float) -> np.ndarray:
    """Covariance of the ideal dissipative steady state (pure EPR state)."""
    c = mu**2 + nu**2
    s = 2.0 * mu * nu
    return np.array(
        [
            [c, 0.0, s, 0.0],
            [0.0, c, 0.0, -s],
            [s, 0.0, c, 0.0],
            [0.0, -s, 0.0, c],
        ]
    )


def css_state(jx_mean: float = 0.0) -> GaussianState:
    """Coherent spin state: zero means, identity covariance."""
    return GaussianState(mean=np.zeros(4), cov=np.eye(4), jx_mean=jx_mean)
