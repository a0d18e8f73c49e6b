"""
Gaussian state algebra on n bosonic modes.

Conventions used throughout the simulator:

- quadratures are ordered x1, y1, x2, y2, ... (xpxp ordering);
- the vacuum quadrature variance is 1 (shot-noise units), so a coherent state
  has covariance identity and Omega is built blockwise from [[0, 1], [-1, 0]];
- squeezing in dB converts as r = ln(10) * dB / 20.

Every operation returns a new GaussianState; inputs are never modified.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np
from scipy import linalg

from errors import ConvergenceError, DegenerateMeasurementError

PHYSICALITY_TOL = 1e-9
DEGENERATE_VARIANCE = 1e-12
QUADRATURES = ("x", "y")

_OMEGA_1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def db_to_r(db: float) -> float:
    """Squeezing parameter for a squeezing level given in dB."""
    return math.log(10.0) * db / 20.0


def r_to_db(r: float) -> float:
    """Squeezing level in dB for a squeezing parameter r."""
    return 20.0 * r / math.log(10.0)


def omega(n_modes: int) -> np.ndarray:
    """Symplectic form for n modes in xpxp ordering."""
    return linalg.block_diag(*([_OMEGA_1] * n_modes))


@dataclass(frozen=True)
class GaussianState:
    """
    First and second moments of an n-mode Gaussian state.

    Args:
        mean: Length-2n vector (<x1>, <y1>, ..., <xn>, <yn>).
        cov:  2n-by-2n covariance matrix, symmetrised on construction.

    Both arrays are stored read-only. Physicality is not enforced here because
    heralded channels legitimately produce states outside the physical set;
    use is_physical() where it matters.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size == 0 or mean.size % 2:
            raise ValueError(f"mean must have even, non-zero length, got {mean.size}")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov must be {mean.size}x{mean.size}, got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("mean and cov must be finite")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def block(self, i: int, j: int = None) -> np.ndarray:
        """2x2 covariance block between modes i and j (j defaults to i)."""
        j = i if j is None else j
        return self.cov[2 * i:2 * i + 2, 2 * j:2 * j + 2].copy()

    def is_physical(self, tol: float = PHYSICALITY_TOL) -> bool:
        """True when every symplectic eigenvalue is at least 1 - tol."""
        if np.linalg.eigvalsh(self.cov).min() <= 0.0:
            return False
        return bool(symplectic_eigenvalues(self).min() >= 1.0 - tol)


@dataclass(frozen=True)
class EPRSpec:
    """Squeezing parameters of the two squeezed beams forming the EPR resource."""

    r_ax: float
    r_ay: float
    r_bx: float
    r_by: float

    def __post_init__(self):
        for name in ("r_ax", "r_ay", "r_bx", "r_by"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    @classmethod
    def symmetric(cls, r: float) -> "EPRSpec":
        return cls(r, r, r, r)

    @classmethod
    def from_db(cls, db: float) -> "EPRSpec":
        return cls.symmetric(db_to_r(db))


class Regression(NamedTuple):
    """Gaussian regression of the remaining quadratures on measured ones.

    For outcomes m the conditional mean is mean_rest + gain @ (m - mean_measured)
    and the conditional covariance is cov (independent of m).
    """

    rest: np.ndarray
    measured: np.ndarray
    gain: np.ndarray
    mean_rest: np.ndarray
    mean_measured: np.ndarray
    cov: np.ndarray

    def conditional_mean(self, outcomes) -> np.ndarray:
        outcomes = np.asarray(outcomes, dtype=float)
        return self.mean_rest + (outcomes - self.mean_measured) @ self.gain.T


def quadrature_index(mode: int, quadrature: str) -> int:
    if quadrature not in QUADRATURES:
        raise ValueError(f"quadrature must be one of {QUADRATURES}, got {quadrature!r}")
    return 2 * mode + QUADRATURES.index(quadrature)


def _check_mode(state: GaussianState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise ValueError(f"mode {mode} out of range for a {state.n_modes}-mode state")


def vacuum(n: int) -> GaussianState:
    """n-mode vacuum: zero mean, identity covariance."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return GaussianState(np.zeros(2 * n), np.eye(2 * n))


def coherent_state(x: float = 0.0, y: float = 0.0) -> GaussianState:
    return GaussianState([x, y], np.eye(2))


def single_mode(mean: Sequence[float] = (0.0, 0.0), var: Sequence[float] = (1.0, 1.0)) -> GaussianState:
    """Single-mode state with diagonal covariance diag(var_x, var_y)."""
    return GaussianState(mean, np.diag(np.asarray(var, dtype=float)))


def thermal_state(v: float) -> GaussianState:
    if v < 1.0 - PHYSICALITY_TOL:
        raise ValueError(f"thermal variance must be >= 1, got {v}")
    return single_mode((0.0, 0.0), (v, v))


def epr_covariance(spec: EPRSpec) -> GaussianState:
    """
    Two-mode EPR state built from two squeezed beams.

    The covariance has diagonal blocks diag(C11, C22) and off-diagonal block
    diag(C13, C24) with
        C11 = (e^{-2 r_ax} + e^{2 r_bx}) / 2,  C22 = (e^{-2 r_by} + e^{2 r_ay}) / 2,
        C13 = (e^{2 r_bx} - e^{-2 r_ax}) / 2,  C24 = (e^{-2 r_by} - e^{2 r_ay}) / 2.
    For equal squeezing this is the two-mode squeezed vacuum at r.
    """
    c11 = 0.5 * (math.exp(-2 * spec.r_ax) + math.exp(2 * spec.r_bx))
    c22 = 0.5 * (math.exp(-2 * spec.r_by) + math.exp(2 * spec.r_ay))
    c13 = 0.5 * (math.exp(2 * spec.r_bx) - math.exp(-2 * spec.r_ax))
    c24 = 0.5 * (math.exp(-2 * spec.r_by) - math.exp(2 * spec.r_ay))
    cov = np.array([
        [c11, 0.0, c13, 0.0],
        [0.0, c22, 0.0, c24],
        [c13, 0.0, c11, 0.0],
        [0.0, c24, 0.0, c22],
    ])
    return GaussianState(np.zeros(4), cov)


def combine(*states: GaussianState) -> GaussianState:
    """Direct sum (tensor product of states) in the given mode order."""
    if not states:
        raise ValueError("combine needs at least one state")
    mean = np.concatenate([s.mean for s in states])
    cov = linalg.block_diag(*[s.cov for s in states])
    return GaussianState(mean, cov)


def reduce(state: GaussianState, modes: Sequence[int]) -> GaussianState:
    """Partial trace keeping `modes`, in the order given."""
    for m in modes:
        _check_mode(state, m)
    idx = np.array([2 * m + q for m in modes for q in (0, 1)], dtype=int)
    return GaussianState(state.mean[idx], state.cov[np.ix_(idx, idx)])


def symplectic_transform(state: GaussianState, s: np.ndarray) -> GaussianState:
    return GaussianState(s @ state.mean, s @ state.cov @ s.T)


def beamsplitter(state: GaussianState, mode_i: int, mode_j: int, t: float) -> GaussianState:
    """
    Mix modes i and j on a beamsplitter of power transmissivity t.

    Mode operators transform as a_i -> sqrt(t) a_i + sqrt(1-t) a_j and
    a_j -> -sqrt(1-t) a_i + sqrt(t) a_j. With t = 1/2 and modes (EPR arm, input)
    this yields the combined teleporter covariance with mode i carrying
    +C13/sqrt(2) and mode j carrying -C13/sqrt(2) towards the other EPR arm.
    """
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("beamsplitter needs two distinct modes")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {t}")
    a, b = math.sqrt(t), math.sqrt(1.0 - t)
    s = np.eye(2 * state.n_modes)
    ii = slice(2 * mode_i, 2 * mode_i + 2)
    jj = slice(2 * mode_j, 2 * mode_j + 2)
    s[ii, ii] = a * np.eye(2)
    s[ii, jj] = b * np.eye(2)
    s[jj, ii] = -b * np.eye(2)
    s[jj, jj] = a * np.eye(2)
    return symplectic_transform(state, s)


def map_mode(state: GaussianState, mode: int, tau: float, nu: float) -> GaussianState:
    """
    Phase-insensitive single-mode map: mean -> sqrt(tau) mean,
    own block -> tau * block + nu * I, cross blocks scaled by sqrt(tau).
    """
    _check_mode(state, mode)
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    scale = np.ones(2 * state.n_modes)
    scale[2 * mode:2 * mode + 2] = math.sqrt(tau)
    cov = state.cov * np.outer(scale, scale)
    cov[2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2] += nu * np.eye(2)
    return GaussianState(state.mean * scale, cov)


def apply_loss(state: GaussianState, mode: int, efficiency: float) -> GaussianState:
    """Couple vacuum into `mode` with power efficiency T (pure loss)."""
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError(f"efficiency must lie in [0, 1], got {efficiency}")
    return map_mode(state, mode, efficiency, 1.0 - efficiency)


def regression(state: GaussianState, measured: Sequence[int], rest: Sequence[int] = None) -> Regression:
    """
    Schur-complement regression of quadratures `rest` on quadratures `measured`
    (both given as flat indices into the mean vector).
    """
    measured = np.asarray(measured, dtype=int)
    if rest is None:
        rest = np.setdiff1d(np.arange(state.mean.size), measured)
    rest = np.asarray(rest, dtype=int)
    s_mm = state.cov[np.ix_(measured, measured)]
    if np.linalg.eigvalsh(s_mm).min() < DEGENERATE_VARIANCE:
        raise DegenerateMeasurementError(
            f"measured quadratures {measured.tolist()} have (near) zero variance"
        )
    s_rm = state.cov[np.ix_(rest, measured)]
    gain = linalg.cho_solve(linalg.cho_factor(s_mm), s_rm.T).T
    cov = state.cov[np.ix_(rest, rest)] - gain @ s_rm.T
    return Regression(
        rest=rest,
        measured=measured,
        gain=gain,
        mean_rest=state.mean[rest].copy(),
        mean_measured=state.mean[measured].copy(),
        cov=0.5 * (cov + cov.T),
    )


def condition_on_quadrature(state: GaussianState, mode: int, quadrature: str, outcome: float) -> GaussianState:
    """
    Homodyne measurement of one quadrature of a mode.

    Args:
        state:      State before the measurement.
        mode:       Measured mode; it is removed from the returned state.
        quadrature: "x" or "y".
        outcome:    Measurement result.

    Returns:
        The conditional state of the remaining modes. Its covariance does not
        depend on `outcome`.

    Raises:
        DegenerateMeasurementError: the measured quadrature has zero variance.
    """
    _check_mode(state, mode)
    if state.n_modes < 2:
        raise ValueError("conditioning needs at least one unmeasured mode")
    idx = quadrature_index(mode, quadrature)
    rest = [k for k in range(state.mean.size) if k // 2 != mode]
    reg = regression(state, [idx], rest)
    return GaussianState(reg.conditional_mean([outcome]), reg.cov)


def partial_transpose(state: GaussianState, mode: int) -> GaussianState:
    """Flip the sign of the y quadrature of `mode`."""
    _check_mode(state, mode)
    flip = np.ones(state.mean.size)
    flip[2 * mode + 1] = -1.0
    return GaussianState(state.mean * flip, state.cov * np.outer(flip, flip))


def symplectic_eigenvalues(state: GaussianState) -> np.ndarray:
    """Sorted symplectic eigenvalues (moduli of the eigenvalues of i*Omega*cov)."""
    try:
        ev = np.linalg.eigvals(1j * omega(state.n_modes) @ state.cov)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"symplectic eigenvalue computation failed: {e}") from e
    return np.sort(np.abs(ev))[::2]


def quadrature_moments(state: GaussianState, mode: int) -> Tuple[float, float, float, float]:
    """
    Returns:
        (mean_x, mean_y, var_x, var_y) of `mode`.
    """
    _check_mode(state, mode)
    i = 2 * mode
    return (float(state.mean[i]), float(state.mean[i + 1]),
            float(state.cov[i, i]), float(state.cov[i + 1, i + 1]))
