"""Input-output relations between atomic quadratures and light modes,
including decoherence, detection loss, and the inversion used for atomic
noise reconstruction.

Variance bookkeeping uses a single unit convention: vacuum/shot-noise
variance is 1 for every light mode and the CSS level is 1 for every atomic
quadrature.  The supplement's two-cell noise operators with var(F) = 1/2
appear here as unit-variance modes; every formula below has been mapped
into this convention once, so no factor-of-2 dictionary leaks into call
sites.

Lossless relations (interaction time T, s = mu - nu):

    atomic_out = exp(-gamma_s T) atomic_in - s^2 kappa y_in
    y_out      = exp(-gamma_s T) y_in      + kappa   atomic_in

with kappa^2 = (1 - exp(-2 gamma_s T)) / s^2.  With extra atomic decay
gamma_extra (total gamma, epsilon^2 = gamma_extra / gamma) the decay becomes
exp(-gamma T), kappa^2 = (1 - epsilon^2)(1 - exp(-2 gamma T)) / s^2, and a
unit-variance noise mode enters with amplitude epsilon sqrt(1-exp(-2 gamma T))
on the atomic side and the commutator-preserving counterpart on the light
side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import InvariantViolationError, NoInformationError
from .spin_model import ModelParams, coupling_constants

__all__ = [
    "LossParams",
    "IoSnapshot",
    "ReconstructedVariance",
    "apply_io",
    "apply_io_lossy",
    "apply_detection_loss",
    "reconstruct_atomic_variance",
]


@dataclass(frozen=True)
class LossParams:
    """Decay budget of the atomic state during readout."""

    gamma_s: float
    gamma_extra: float
    eta: float = 1.0

    def __post_init__(self):
        if self.gamma_s < 0 or self.gamma_extra < 0:
            raise InvariantViolationError("decay rates must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise InvariantViolationError("eta must lie in [0, 1]")

    @property
    def gamma(self) -> float:
        return self.gamma_s + self.gamma_extra

    @property
    def epsilon_sq(self) -> float:
        g = self.gamma
        return 0.0 if g == 0.0 else self.gamma_extra / g


@dataclass(frozen=True)
class IoSnapshot:
    """Variances before/after one application of the input-output map.

    ``atomic_in``/``atomic_out`` hold the (cos, sin) channel pair, i.e. the
    nonlocal X- and P-type combinations; ``y_out`` is the matching pair of
    output light-mode variances for the common input variance ``y_in``.
    """

    atomic_in: tuple
    atomic_out: tuple
    y_in: float
    y_out: tuple
    kappa_sq: float

    def __post_init__(self):
        vals = (*self.atomic_in, *self.atomic_out, self.y_in, *self.y_out)
        if any(v < 0 for v in vals):
            raise InvariantViolationError("variances must be >= 0")


class ReconstructedVariance(NamedTuple):
    """Reconstruction result; negative estimates are flagged, never clamped."""

    value: float
    below_floor: bool


def _io_variances(atomic_in, y_in_var, decay_sq, kappa_sq, s2, eps_sq):
    """Variance-level IO map for both channels, zero input cross-correlation."""
    noise_sq = eps_sq * (1.0 - decay_sq)
    atomic_out = tuple(decay_sq * v + s2**2 * kappa_sq * y_in_var + noise_sq
                       for v in atomic_in)
    # Light-side noise admixture preserves the commutator budget:
    # 1 - kappa^2 s2 - decay_sq = eps^2 (1 - decay_sq) >= 0.  It is exactly
    # this term that makes the reconstruction formula an exact inverse.
    zeta_sq = max(0.0, 1.0 - kappa_sq * s2 - decay_sq)
    y_out = tuple(decay_sq * y_in_var + kappa_sq * v + zeta_sq
                  for v in atomic_in)
    return atomic_out, y_out


def apply_io(atomic_in, y_in_var: float, params: ModelParams, T: float,
             jx: float | None = None,
             gamma_s: float | None = None) -> IoSnapshot:
    """Lossless input-output map at the variance level.

    ``atomic_in`` is the (cos, sin) pair of nonlocal atomic variances (both
    normalised to CSS = 1); the light mode is the matching exponential mode
    with vacuum variance ``y_in_var`` = 1 for shot-noise-limited input.
    """
    if T < 0:
        raise ValueError("interaction time must be >= 0")
    if gamma_s is None:
        if jx is None:
            jx = 4.0 * params.N
        gamma_s, _ = coupling_constants(params, jx, 1.0)
    s2 = params.squeeze_sq
    decay_sq = math.exp(-2.0 * gamma_s * T)
    kappa_sq = (1.0 - decay_sq) / s2
    atomic_out, y_out = _io_variances(tuple(atomic_in), y_in_var,
                                      decay_sq, kappa_sq, s2, 0.0)
    return IoSnapshot(atomic_in=tuple(atomic_in), atomic_out=atomic_out,
                      y_in=y_in_var, y_out=y_out, kappa_sq=kappa_sq)


def apply_io_lossy(atomic_in, y_in_var: float, loss: LossParams,
                   mu_nu: tuple, T: float) -> IoSnapshot:
    """Input-output map with extra atomic decay toward the CSS.

    Reduces exactly to :func:`apply_io` for gamma_extra = 0.
    """
    if T < 0:
        raise ValueError("interaction time must be >= 0")
    mu, nu = mu_nu
    s2 = (mu - nu) ** 2
    eps_sq = loss.epsilon_sq
    decay_sq = math.exp(-2.0 * loss.gamma * T)
    kappa_sq = (1.0 - eps_sq) * (1.0 - decay_sq) / s2
    atomic_out, y_out = _io_variances(tuple(atomic_in), y_in_var,
                                      decay_sq, kappa_sq, s2, eps_sq)
    return IoSnapshot(atomic_in=tuple(atomic_in), atomic_out=atomic_out,
                      y_in=y_in_var, y_out=y_out, kappa_sq=kappa_sq)


def apply_detection_loss(y_var: float, eta: float) -> float:
    """Beam-splitter detection model: eta y + (1 - eta) vacuum."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    return eta * y_var + (1.0 - eta)


def reconstruct_atomic_variance(y_out_var: float, kappa_sq: float,
                                mu_nu: tuple, sigma_in_sq: float = 1.0,
                                eta: float = 1.0) -> ReconstructedVariance:
    """Invert detection loss and the IO map to recover the atomic variance.

    var_atomic = (var(y) - sigma_in^2 (1 - kappa^2 (mu-nu)^2)) / kappa^2
    after undoing the eta beam splitter.  Statistically negative results are
    reported with ``below_floor=True`` -- clamping would bias the witness
    toward entanglement.
    """
    if kappa_sq <= 0:
        raise NoInformationError("kappa^2 = 0 carries no atomic information")
    if eta <= 0 or eta > 1:
        raise ValueError("eta must lie in (0, 1]")
    mu, nu = mu_nu
    s2 = (mu - nu) ** 2
    y_corr = (y_out_var - (1.0 - eta) * sigma_in_sq) / eta
    value = (y_corr - sigma_in_sq * (1.0 - kappa_sq * s2)) / kappa_sq
    return ReconstructedVariance(value=value, below_floor=bool(value < 0.0))
