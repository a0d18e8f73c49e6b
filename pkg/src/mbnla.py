"""
Measurement-based noiseless linear amplifier (MBNLA).

The filter acts on heterodyne amplitudes alpha_m. Outcomes are expressed in
calibrated units: each component of alpha_m has unit variance before the
filter when the source is standardised (see heterodyne_amplitude). In those
units the filter

    f(alpha) = exp(1/2 (|alpha|^2 - alpha_c^2)(1 - g^-2))   for |alpha| < alpha_c
             = 1                                             otherwise

scales both the mean and the variance of the accepted outcomes by g^2 in the
limit of a large cutoff.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
from scipy import integrate, stats

from errors import ClosedFormMismatchWarning, ConvergenceError
from gaussian_core import GaussianState

logger = logging.getLogger(__name__)

QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-8
MAX_EXPONENT = 700.0
CROSS_CHECK_RTOL = 1e-3


@dataclass(frozen=True)
class FilterSpec:
    """Post-selection filter: MBNLA gain g and cutoff alpha_c (calibrated units)."""

    g: float
    alpha_c: float

    def __post_init__(self):
        if not math.isfinite(self.g) or self.g < 1.0:
            raise ValueError(f"g must be finite and >= 1, got {self.g}")
        if not math.isfinite(self.alpha_c) or self.alpha_c < 0.0:
            raise ValueError(f"alpha_c must be finite and >= 0, got {self.alpha_c}")

    @property
    def exponent_scale(self) -> float:
        return 0.5 * (1.0 - self.g ** -2)


def filter_probability(spec: FilterSpec, alpha: complex) -> float:
    """Acceptance probability for a single heterodyne amplitude."""
    mod2 = abs(alpha) ** 2
    if mod2 >= spec.alpha_c ** 2:
        return 1.0
    return math.exp(spec.exponent_scale * (mod2 - spec.alpha_c ** 2))


def filter_probabilities(spec: FilterSpec, alphas) -> np.ndarray:
    """Vectorised filter_probability over an array of amplitudes."""
    mod2 = np.abs(np.asarray(alphas)) ** 2
    inside = mod2 < spec.alpha_c ** 2
    # exponent is <= 0 inside the disk, outside it is masked
    exponent = np.where(inside, spec.exponent_scale * (mod2 - spec.alpha_c ** 2), 0.0)
    return np.exp(exponent)


def accept(spec: FilterSpec, alpha: complex, uniform_draw: float) -> bool:
    """Keep the outcome iff f(alpha) exceeds the uniform draw."""
    if not 0.0 <= uniform_draw < 1.0:
        raise ValueError(f"uniform_draw must lie in [0, 1), got {uniform_draw}")
    return filter_probability(spec, alpha) > uniform_draw


def postselect(spec: FilterSpec, alphas, draws) -> np.ndarray:
    """Boolean accept mask for arrays of amplitudes and matching uniform draws."""
    draws = np.asarray(draws, dtype=float)
    if draws.size and (draws.min() < 0.0 or draws.max() >= 1.0):
        raise ValueError("uniform draws must lie in [0, 1)")
    return filter_probabilities(spec, alphas) > draws


def heterodyne_amplitude(x_m, y_m, var_x: float = 2.0, var_y: float = 2.0):
    """
    Form alpha_m = (x + i y)/sqrt(2) from dual-homodyne outcomes after rescaling
    each quadrature to variance 2. With the default variances this is the plain
    (x_m + i y_m)/sqrt(2); passing the measured pre-filter variances puts the
    outcomes in the calibrated units the filter expects.
    """
    if var_x <= 0.0 or var_y <= 0.0:
        raise ValueError(f"quadrature variances must be > 0, got ({var_x}, {var_y})")
    x_hat = np.asarray(x_m, dtype=float) * math.sqrt(2.0 / var_x)
    y_hat = np.asarray(y_m, dtype=float) * math.sqrt(2.0 / var_y)
    return (x_hat + 1j * y_hat) / math.sqrt(2.0)


def default_cutoff(input_std: float, k: float = 4.0) -> float:
    """alpha_c = k standard deviations of Alice's measured distribution."""
    if input_std <= 0.0:
        raise ValueError(f"input_std must be > 0, got {input_std}")
    if not 3.0 <= k <= 6.0:
        logger.warning("cutoff multiplier k=%s outside the usual 3-6 range", k)
    return k * input_std


def _tail_probability(x: float, nc: float) -> float:
    """P(chi-square with 2 dof and noncentrality nc > x)."""
    if nc > 0.0:
        return float(stats.ncx2.sf(x, 2, nc))
    return float(stats.chi2.sf(x, 2))


def success_probability(
    spec: FilterSpec,
    alpha_m: complex = 0j,
    source_var: float = 0.5,
    cross_check: bool = False,
) -> float:
    """
    Probability that an outcome drawn from an isotropic Gaussian source centred
    on alpha_m (per-component variance source_var) passes the filter.

    The default source_var of 1/2 is the exp(-|alpha - alpha_m|^2) outcome law;
    Monte Carlo runs in calibrated units use source_var=1.

    Outside the disk f = 1, so the tail is a noncentral chi-square probability;
    only p f over the disk is integrated (adaptive 2D quadrature in polar
    coordinates). Both parts are positive, which keeps small P_s accurate.
    """
    if source_var <= 0.0:
        raise ValueError(f"source_var must be > 0, got {source_var}")
    if spec.g == 1.0 or spec.alpha_c == 0.0:
        return 1.0

    cx, cy = float(np.real(alpha_m)), float(np.imag(alpha_m))
    norm = 1.0 / (2.0 * math.pi * source_var)

    def integrand(theta, rho):
        x, y = rho * math.cos(theta), rho * math.sin(theta)
        p = norm * math.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * source_var))
        f = math.exp(spec.exponent_scale * (rho * rho - spec.alpha_c ** 2))
        return rho * p * f

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            inside, abserr = integrate.dblquad(
                integrand, 0.0, spec.alpha_c, 0.0, 2.0 * math.pi,
                epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
            )
        except integrate.IntegrationWarning as e:
            raise ConvergenceError(f"success probability quadrature did not converge: {e}") from e

    outside = _tail_probability(spec.alpha_c ** 2 / source_var, abs(alpha_m) ** 2 / source_var)
    p_s = min(inside + outside, 1.0)
    logger.debug("P_s(g=%s, alpha_c=%s, alpha_m=%s) = %.6e (+/- %.1e)", spec.g, spec.alpha_c, alpha_m, p_s, abserr)

    if cross_check:
        closed = closed_form_success_probability(spec, alpha_m)
        if not math.isclose(closed, p_s, rel_tol=CROSS_CHECK_RTOL):
            msg = f"closed-form success probability {closed:.6e} differs from quadrature {p_s:.6e}"
            logger.info(msg)
            warnings.warn(msg, ClosedFormMismatchWarning)
    return p_s


def closed_form_success_probability(spec: FilterSpec, alpha_m: complex = 0j) -> float:
    """
    Printed closed form for the success probability:

        e^{(g-1)|a_m|^2} / e^{a_c^2 (1-1/g)} * (1/pi) int_{|a|<a_c} exp(-|a - g a_m|^2 / g)
        + (1/pi) int_{|a|>=a_c} exp(-|a - a_m|^2)

    Both disk integrals are noncentral chi-square probabilities. Only used to
    cross-check the quadrature; its normalisation does not follow from the
    filter definition.
    """
    m2 = abs(alpha_m) ** 2
    g, ac2 = spec.g, spec.alpha_c ** 2
    prefactor = math.exp((g - 1.0) * m2 - ac2 * (1.0 - 1.0 / g))
    # exp(-|a - c|^2 / g) / (pi g) is a Gaussian with per-component variance g/2
    disk = g * stats.ncx2.cdf(2.0 * ac2 / g, 2, 2.0 * g * m2) if m2 > 0 else g * stats.chi2.cdf(2.0 * ac2 / g, 2)
    outside = _tail_probability(2.0 * ac2, 2.0 * m2)
    return float(prefactor * disk + outside)


def nla_transform_coherent(g: float, alpha: complex) -> Tuple[complex, float]:
    """
    Ideal NLA on a coherent state: |alpha> -> |g alpha> with unnormalised
    heralding weight exp((g^2 - 1)|alpha|^2).
    """
    if g < 1.0:
        raise ValueError(f"g must be >= 1, got {g}")
    amplified = g * complex(alpha)
    if abs(amplified) ** 2 > MAX_EXPONENT:
        raise ValueError(f"|g alpha|^2 = {abs(amplified) ** 2:.1f} exceeds {MAX_EXPONENT}; weight would overflow")
    return amplified, math.exp((g * g - 1.0) * abs(alpha) ** 2)


def nla_average_moments(g: float, alpha: complex, p_success: float) -> GaussianState:
    """
    First and second moments of the unheralded NLA output
    P_s |g alpha><g alpha| + (1 - P_s)|0><0|.

    The mixture is not Gaussian; the returned state carries its exact mean
    and covariance. Quadratures follow x = a + a^dagger (vacuum variance 1).
    """
    if not 0.0 <= p_success <= 1.0:
        raise ValueError(f"p_success must lie in [0, 1], got {p_success}")
    amplified, _ = nla_transform_coherent(g, alpha)
    d = np.array([2.0 * amplified.real, 2.0 * amplified.imag])
    mean = p_success * d
    cov = np.eye(2) + p_success * (1.0 - p_success) * np.outer(d, d)
    return GaussianState(mean, cov)


class TmsvAmplification(NamedTuple):
    lam: float
    r: float
    valid: bool


def nla_amplify_tmsv_lambda(lam: float, g: float) -> TmsvAmplification:
    """
    Heralded NLA on one arm of a TMSV with lambda = tanh(r): lambda -> g lambda.
    The result is a normalisable state only while g lambda < 1; otherwise
    r is reported as nan and valid is False.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    if g < 1.0:
        raise ValueError(f"g must be >= 1, got {g}")
    out = g * lam
    if out >= 1.0:
        logger.warning("g*lambda = %.4f >= 1, amplified TMSV is not normalisable", out)
        return TmsvAmplification(out, float("nan"), False)
    return TmsvAmplification(out, math.atanh(out), True)
