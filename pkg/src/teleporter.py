"""
Analytic model of the heralded CV teleporter.

Mode layout of the three-mode state: 0 is Bob's EPR arm, 1 and 3 are the two
outputs of Alice's 50:50 beamsplitter (her EPR arm mixed with the input).
Alice measures x on mode 3 and y on mode 1; Bob's arm carries the loss.

Post-selection follows the ideal amplification law: the measured quadratures
keep their conditional relation to Bob's mode while their mean and covariance
are scaled by g^2. Bob then displaces by phi times the accepted outcomes.
"""

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from channel import ChannelParams, tv_to_taunu
from errors import ClosedFormMismatchWarning, ConvergenceError, NonPhysicalStateError
from gaussian_core import (
    PHYSICALITY_TOL,
    EPRSpec,
    GaussianState,
    Regression,
    apply_loss,
    beamsplitter,
    combine,
    epr_covariance,
    quadrature_index,
    quadrature_moments,
    regression,
    single_mode,
)

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
MODE_BOB, MODE_1, MODE_3 = 0, 1, 2
BOB_QUADRATURES = (0, 1)
MEASURED_QUADRATURES = (quadrature_index(MODE_3, "x"), quadrature_index(MODE_1, "y"))
CLOSED_FORM_RTOL = 1e-8


@dataclass(frozen=True)
class TeleporterConfig:
    """
    Operating point of the teleporter.

    Args:
        epr:        Squeezing of the EPR resource.
        phi_x:      Electronic feed-forward gain on the x outcome.
        phi_y:      Electronic feed-forward gain on the y outcome.
        g:          MBNLA gain (1 means deterministic operation).
        efficiency: Transmission of Bob's arm including detection.
        input_mean: (<X_in>, <Y_in>).
        input_var:  (<dX_in^2>, <dY_in^2>), (1, 1) for coherent inputs.

    Raises:
        ValueError: g < 1, efficiency outside (0, 1] or an input variance below 1.
    """

    epr: EPRSpec
    phi_x: float = SQRT2
    phi_y: float = SQRT2
    g: float = 1.0
    efficiency: float = 1.0
    input_mean: Tuple[float, float] = (1.0, 1.0)
    input_var: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "input_mean", tuple(float(v) for v in self.input_mean))
        object.__setattr__(self, "input_var", tuple(float(v) for v in self.input_var))
        if len(self.input_mean) != 2 or len(self.input_var) != 2:
            raise ValueError("input_mean and input_var must each have two entries")
        if not math.isfinite(self.g) or self.g < 1.0:
            raise ValueError(f"g must be finite and >= 1, got {self.g}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if min(self.input_var) < 1.0 - PHYSICALITY_TOL:
            raise ValueError(f"input variances must be >= 1, got {self.input_var}")
        for name in ("phi_x", "phi_y"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def symmetric(cls, r: float, phi: float = SQRT2, g: float = 1.0, efficiency: float = 1.0,
                  input_mean: Tuple[float, float] = (1.0, 1.0)) -> "TeleporterConfig":
        return cls(EPRSpec.symmetric(r), phi, phi, g, efficiency, input_mean)

    def replace(self, **changes) -> "TeleporterConfig":
        return dataclasses.replace(self, **changes)

    @property
    def is_symmetric(self) -> bool:
        e = self.epr
        return (self.phi_x == self.phi_y and e.r_ax == e.r_ay == e.r_bx == e.r_by
                and self.input_var == (1.0, 1.0))


@dataclass(frozen=True)
class OutputMoments:
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float

    def __post_init__(self):
        if self.var_x <= 0.0 or self.var_y <= 0.0:
            raise ValueError(f"variances must be > 0, got ({self.var_x}, {self.var_y})")


class TVParameters(NamedTuple):
    t_q: float
    v_q: float


class CurvePoint(NamedTuple):
    axis_value: float
    tv: TVParameters
    params: Optional[ChannelParams]


def input_moments(cfg: TeleporterConfig) -> OutputMoments:
    return OutputMoments(*cfg.input_mean, *cfg.input_var)


def teleporter_state(cfg: TeleporterConfig) -> GaussianState:
    """Three-mode state (Bob, mode 1, mode 3) before Alice's measurement."""
    state = combine(epr_covariance(cfg.epr), single_mode(cfg.input_mean, cfg.input_var))
    state = apply_loss(state, MODE_BOB, cfg.efficiency)
    return beamsplitter(state, 1, 2, 0.5)


def measurement_model(cfg: TeleporterConfig) -> Tuple[Regression, np.ndarray]:
    """
    Regression of Bob's (x, y) on Alice's measured (x3, y1) and the
    pre-filter covariance of the measured pair.
    """
    state = teleporter_state(cfg)
    reg = regression(state, MEASURED_QUADRATURES, BOB_QUADRATURES)
    measured_cov = state.cov[np.ix_(MEASURED_QUADRATURES, MEASURED_QUADRATURES)]
    return reg, measured_cov


def output_state(cfg: TeleporterConfig) -> GaussianState:
    """Bob's single-mode output after post-selection and displacement."""
    reg, measured_cov = measurement_model(cfg)
    g2 = cfg.g ** 2
    phi = np.diag([cfg.phi_x, cfg.phi_y])
    mu_m = reg.mean_measured
    mean = reg.mean_rest + reg.gain @ ((g2 - 1.0) * mu_m) + phi @ (g2 * mu_m)
    w = reg.gain + phi
    cov = reg.cov + g2 * w @ measured_cov @ w.T
    return GaussianState(mean, cov)


def output_moments(cfg: TeleporterConfig) -> OutputMoments:
    return OutputMoments(*quadrature_moments(output_state(cfg), 0))


def conditional_variance_epr(r: float) -> float:
    """Variance of one EPR arm's x given the other's, 1/cosh(2r)."""
    if r < 0.0:
        raise ValueError(f"r must be >= 0, got {r}")
    return 1.0 / math.cosh(2.0 * r)


def fidelity(inp: OutputMoments, out: OutputMoments) -> float:
    """Overlap of two single-mode Gaussian states with diagonal covariances."""
    sx = out.var_x + inp.var_x
    sy = out.var_y + inp.var_y
    expo = -0.5 * ((out.mean_x - inp.mean_x) ** 2 / sx + (out.mean_y - inp.mean_y) ** 2 / sy)
    return 2.0 / math.sqrt(sx * sy) * math.exp(expo)


def transfer_gains(cfg: TeleporterConfig) -> Tuple[float, float]:
    """Per-quadrature amplitude gains k with <q_out> = k <q_in>."""
    unit = output_moments(cfg.replace(input_mean=(1.0, 1.0)))
    return unit.mean_x, unit.mean_y


def conditional_variances(cfg: TeleporterConfig) -> Tuple[float, float]:
    """Input-output conditional variances V_out - k^2 V_in per quadrature."""
    kx, ky = transfer_gains(cfg)
    m = output_moments(cfg)
    vx, vy = cfg.input_var
    return m.var_x - kx * kx * vx, m.var_y - ky * ky * vy


def tv_parameters(cfg: TeleporterConfig, cross_check: bool = False) -> TVParameters:
    """
    Joint signal transfer T_q (sum of output/input SNR ratios) and conditional
    variance product V_q.
    """
    if cfg.input_mean == (0.0, 0.0):
        raise ValueError("T_q is undefined for an input with zero mean in both quadratures")
    kx, ky = transfer_gains(cfg)
    m = output_moments(cfg)
    vx, vy = cfg.input_var
    t_q = kx * kx * vx / m.var_x + ky * ky * vy / m.var_y
    v_q = (m.var_x - kx * kx * vx) * (m.var_y - ky * ky * vy)
    result = TVParameters(t_q, v_q)

    if cross_check:
        _cross_check_closed_forms(cfg, result)
    return result


def _cross_check_closed_forms(cfg: TeleporterConfig, result: TVParameters) -> None:
    if not cfg.is_symmetric:
        logger.debug("closed-form cross-check skipped for an asymmetric configuration")
        return
    r, phi = cfg.epr.r_ax, cfg.phi_x
    if cfg.efficiency == 1.0:
        closed = closed_form_tv(r, cfg.g, phi)
    else:
        closed = closed_form_tv_lossy(r, cfg.g, phi, cfg.efficiency)
    for name, ours, theirs in zip(("T_q", "V_q"), result, closed):
        if not math.isclose(ours, theirs, rel_tol=CLOSED_FORM_RTOL, abs_tol=1e-12):
            msg = f"closed-form {name}={theirs:.10g} differs from covariance pipeline {ours:.10g}"
            logger.info(msg)
            warnings.warn(msg, ClosedFormMismatchWarning)


def closed_form_tv(r: float, g: float, phi: float, x_in: float = 1.0) -> TVParameters:
    """
    Printed lossless closed forms for symmetric operation. They carry a global
    <X_in>^2 factor; x_in=1 gives the dimensionless values.
    """
    x2 = x_in * x_in
    g2 = g * g
    num = x2 * (SQRT2 * g2 * phi - 2.0 * (g2 - 1.0) * math.tanh(r)) ** 2
    den = (g2 * ((phi * phi + 2.0) * math.cosh(2 * r) - 2.0 * SQRT2 * phi * math.sinh(2 * r))
           + g2 * (phi * phi - 2.0) + 2.0)
    inner = (x2 * (SQRT2 * g2 * phi - 2.0 * (g2 - 1.0) * math.tanh(r)) ** 2
             - 4.0 * g2 * (phi * math.cosh(r) - SQRT2 * math.sinh(r)) ** 2
             + 8.0 * math.sinh(r) ** 2 - 4.0 * math.cosh(2 * r))
    return TVParameters(num / den, inner ** 2 / 16.0)


def closed_form_tv_lossy(r: float, g: float, phi: float, efficiency: float, x_in: float = 1.0) -> TVParameters:
    """Printed closed forms including the efficiency of Bob's arm."""
    t = efficiency
    st = math.sqrt(t)
    g2 = g * g
    ch, sh = math.cosh(2 * r), math.sinh(2 * r)
    e = math.exp(-2 * r) - math.exp(2 * r)

    d = 0.5 * st * ch - 0.5 * st + 1.0
    a = e * st / (2.0 * SQRT2 * d) + phi
    num = 2.0 * (g2 * st * x_in * a / SQRT2 - e * t * x_in / (4.0 * d)) ** 2
    den = g2 * d * a * a - e * e * t / (8.0 * d) + 0.5 * (math.exp(-2 * r) + math.exp(2 * r))

    s = st * ch - st + 2.0
    term1 = t * x_in ** 2 * (st * (2.0 * (g2 - 1.0) * sh - SQRT2 * g2 * phi * ch)
                             + SQRT2 * g2 * (st - 2.0) * phi) ** 2 / s ** 2
    term2 = 2.0 * g2 * (st * (SQRT2 * sh - phi * ch) + (st - 2.0) * phi) ** 2 / s
    term3 = 4.0 * t * sh ** 2 / s
    return TVParameters(num / den, (term1 - term2 + term3 - 4.0 * ch) ** 2 / 16.0)


def channel_params(cfg: TeleporterConfig) -> Tuple[ChannelParams, ChannelParams]:
    """Per-quadrature (tau, nu) with tau = k^2 and nu = V_out - k^2 V_in."""
    kx, ky = transfer_gains(cfg)
    vx, vy = conditional_variances(cfg)
    if min(vx, vy) < 0.0:
        raise NonPhysicalStateError(
            f"negative input-output conditional variance ({vx:.6g}, {vy:.6g}); "
            "the ideal amplification law is outside its range of validity here"
        )
    return ChannelParams(kx * kx, vx), ChannelParams(ky * ky, vy)


def _solve_unity(cfg: TeleporterConfig, quadrature: str) -> float:
    index = 0 if quadrature == "x" else 1
    name = f"phi_{quadrature}"

    def residual(phi):
        return transfer_gains(cfg.replace(**{name: phi}))[index] - 1.0

    try:
        return optimize.brentq(residual, 0.0, 2.0 * SQRT2, xtol=1e-14)
    except (ValueError, RuntimeError) as e:
        raise ConvergenceError(f"no unity-gain {name} for g={cfg.g}, efficiency={cfg.efficiency}: {e}") from e


def unity_gain_phis(cfg: TeleporterConfig) -> Tuple[float, float]:
    """(phi_x, phi_y) giving unit amplitude gain in each quadrature of cfg."""
    return _solve_unity(cfg, "x"), _solve_unity(cfg, "y")


def unity_gain_phi(r: float, g: float = 1.0, efficiency: float = 1.0) -> float:
    """Feed-forward gain phi that makes <X_out> = <X_in>."""
    if r < 0.0:
        raise ValueError(f"r must be >= 0, got {r}")
    return _solve_unity(TeleporterConfig.symmetric(r, SQRT2, g, efficiency), "x")


def curve_point(cfg: TeleporterConfig, axis_value: float) -> CurvePoint:
    """T/V and the mapped (tau, nu) of one operating point; params is None off the map's domain."""
    tv = tv_parameters(cfg)
    try:
        params = tv_to_taunu(*tv)
    except ValueError as e:
        logger.debug("no (tau, nu) at axis value %s: %s", axis_value, e)
        params = None
    return CurvePoint(axis_value, tv, params)


def deterministic_curve(r: float, phis: Iterable[float], efficiency: float = 1.0) -> List[CurvePoint]:
    """Channels reached by sweeping the feed-forward gain at g = 1."""
    return [curve_point(TeleporterConfig.symmetric(r, phi, 1.0, efficiency), phi) for phi in phis]


def heralded_curve(r: float, phi: float, gains: Sequence[float], efficiency: float = 1.0) -> List[CurvePoint]:
    """Channels reached by raising the MBNLA gain at fixed feed-forward gain."""
    return [curve_point(TeleporterConfig.symmetric(r, phi, g, efficiency), g) for g in gains]
