"""
Single-mode phase-insensitive Gaussian channels sigma -> tau sigma + nu I.

Covers (tau, nu) <-> (T_q, V_q) conversion, the channel taxonomy, Choi states
and the entanglement-of-formation score used for noise suppression.
"""

import enum
import logging
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import special

from errors import AsymmetricStateWarning, NonPhysicalOutputWarning, NonPhysicalStateError
from gaussian_core import (
    PHYSICALITY_TOL,
    EPRSpec,
    GaussianState,
    epr_covariance,
    map_mode,
    partial_transpose,
    symplectic_eigenvalues,
)

logger = logging.getLogger(__name__)

CLASSIFY_TOL = 1e-6
R_CHOI_DEFAULT = 2.0
ASYMMETRY_TOL = 0.01


@dataclass(frozen=True)
class ChannelParams:
    """Transmissivity tau and added noise nu (shot-noise units)."""

    tau: float
    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and math.isfinite(self.nu)):
            raise ValueError(f"tau and nu must be finite, got ({self.tau}, {self.nu})")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")


class ChannelTag(str, enum.Enum):
    PURE_LOSS = "PureLoss"
    THERMAL_LOSS = "ThermalLoss"
    PURE_AMPLIFIER = "PureAmplifier"
    THERMAL_AMPLIFIER = "ThermalAmplifier"
    ADDITIVE_NOISE = "AdditiveNoise"
    IDENTITY = "Identity"
    NON_PHYSICAL = "NonPhysical"


@dataclass(frozen=True)
class ChannelClass:
    tag: ChannelTag
    chi: Optional[float] = None


class SuppressionScore(NamedTuple):
    score: float
    improved: bool


def chi(params: ChannelParams) -> Optional[float]:
    """Noise ratio nu / |1 - tau|; None for tau == 1."""
    gap = abs(1.0 - params.tau)
    if gap == 0.0:
        return None
    return params.nu / gap


def is_physical_channel(params: ChannelParams, tol: float = CLASSIFY_TOL) -> bool:
    return params.nu >= abs(1.0 - params.tau) - tol


def classify(params: ChannelParams, tol: float = CLASSIFY_TOL) -> ChannelClass:
    """Place (tau, nu) in the loss / amplifier / additive-noise taxonomy."""
    if not is_physical_channel(params, tol):
        return ChannelClass(ChannelTag.NON_PHYSICAL, chi(params))
    if abs(params.tau - 1.0) <= tol:
        if params.nu <= tol:
            return ChannelClass(ChannelTag.IDENTITY)
        return ChannelClass(ChannelTag.ADDITIVE_NOISE)

    x = chi(params)
    pure = abs(x - 1.0) <= tol
    if params.tau < 1.0:
        tag = ChannelTag.PURE_LOSS if pure else ChannelTag.THERMAL_LOSS
    else:
        tag = ChannelTag.PURE_AMPLIFIER if pure else ChannelTag.THERMAL_AMPLIFIER
    return ChannelClass(tag, x)


def apply_channel(params: ChannelParams, state: GaussianState, mode: int) -> GaussianState:
    """
    Send `mode` through the channel. Non-physical channels are applied as
    written; a warning is emitted if a physical input comes out non-physical.
    """
    if params.tau <= 0.0:
        raise ValueError(f"tau must be > 0, got {params.tau}")
    out = map_mode(state, mode, params.tau, params.nu)
    if not out.is_physical() and state.is_physical():
        warnings.warn(
            f"channel (tau={params.tau:.6g}, nu={params.nu:.6g}) produced a non-physical state",
            NonPhysicalOutputWarning,
        )
    return out


def compose(first: ChannelParams, second: ChannelParams) -> ChannelParams:
    """`first` followed by `second`."""
    return ChannelParams(first.tau * second.tau, second.tau * first.nu + second.nu)


def tv_to_taunu(t_q: float, v_q: float) -> ChannelParams:
    """nu = sqrt(V_q), tau = T_q sqrt(V_q) / (2 - T_q)."""
    if v_q < 0.0:
        raise ValueError(f"V_q must be >= 0, got {v_q}")
    if t_q <= 0.0:
        raise ValueError(f"T_q must be > 0, got {t_q}")
    if t_q >= 2.0:
        raise ValueError(f"T_q must be < 2 for the (tau, nu) map, got {t_q}")
    nu = math.sqrt(v_q)
    return ChannelParams(t_q * nu / (2.0 - t_q), nu)


def taunu_to_tv(params: ChannelParams) -> Tuple[float, float]:
    """V_q = nu^2, T_q = 2 tau / (tau + nu)."""
    if params.tau + params.nu <= 0.0:
        raise ValueError("tau + nu must be > 0")
    return 2.0 * params.tau / (params.tau + params.nu), params.nu ** 2


def choi_state(params: ChannelParams, r_choi: float = R_CHOI_DEFAULT) -> GaussianState:
    """TMSV at r_choi with its second mode sent through the channel."""
    if r_choi <= 0.0:
        raise ValueError(f"r_choi must be > 0, got {r_choi}")
    return apply_channel(params, epr_covariance(EPRSpec.symmetric(r_choi)), 1)


def _h(x: float) -> float:
    if x >= 1.0 - PHYSICALITY_TOL:
        return 0.0
    c_plus = (x ** -0.5 + x ** 0.5) ** 2 / 4.0
    c_minus = (x ** -0.5 - x ** 0.5) ** 2 / 4.0
    return float((special.xlogy(c_plus, c_plus) - special.xlogy(c_minus, c_minus)) / math.log(2.0))


def min_pt_eigenvalue(state: GaussianState) -> float:
    """Smallest symplectic eigenvalue of the partially transposed state."""
    return float(symplectic_eigenvalues(partial_transpose(state, 1))[0])


def entanglement_of_formation(state: GaussianState) -> float:
    """
    Entanglement of formation from the smallest partial-transpose symplectic
    eigenvalue. Exact for symmetric two-mode states; for reduced modes whose
    determinants differ by more than 1% the same expression is used and an
    AsymmetricStateWarning is issued.

    Args:
        state: Physical two-mode Gaussian state.

    Returns:
        E_F in ebits; exactly 0 when the partial transpose is physical
        within PHYSICALITY_TOL.
    """
    if state.n_modes != 2:
        raise ValueError(f"entanglement_of_formation needs a 2-mode state, got {state.n_modes}")
    if not state.is_physical():
        raise NonPhysicalStateError("entanglement of formation is undefined for a non-physical state")

    det_a = float(np.linalg.det(state.block(0)))
    det_b = float(np.linalg.det(state.block(1)))
    if abs(det_a - det_b) > ASYMMETRY_TOL * max(det_a, det_b):
        warnings.warn(
            f"asymmetric state (det A={det_a:.4g}, det B={det_b:.4g}); E_F is approximate",
            AsymmetricStateWarning,
        )
    return _h(min_pt_eigenvalue(state))


def noise_suppression_score(
    before: ChannelParams, after: ChannelParams, r_choi: float = R_CHOI_DEFAULT
) -> SuppressionScore:
    """Change in Choi-state E_F, and whether tau rose while nu fell."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AsymmetricStateWarning)
        e_before = entanglement_of_formation(choi_state(before, r_choi))
        e_after = entanglement_of_formation(choi_state(after, r_choi))
    improved = before.tau < after.tau and before.nu > after.nu
    logger.debug("E_F %.6f -> %.6f, improved=%s", e_before, e_after, improved)
    return SuppressionScore(e_after - e_before, improved)
