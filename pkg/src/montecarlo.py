"""
Monte Carlo replica of the heralded teleporter.

Each trial draws Alice's dual-homodyne pair (x3, y1) from the pre-measurement
state, applies the MBNLA filter to the calibrated amplitude, draws Bob's
conditional quadratures and adds the displacement phi * outcome.

Trials are generated in fixed-size shards; shard k uses the Philox stream
seeded with (seed, k), so a batch is identical for any thread count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np

from channel import ChannelParams, tv_to_taunu
from errors import InsufficientSamplesError, SimulationError
from mbnla import FilterSpec, heterodyne_amplitude, postselect, success_probability
from sim_config import thread_count
from teleporter import OutputMoments, TeleporterConfig, TVParameters, measurement_model

logger = logging.getLogger(__name__)

SHARD_SIZE = 1 << 16
MIN_ACCEPTED = 100
BOOTSTRAP_RESAMPLES = 200


@dataclass(frozen=True)
class ChannelEstimate:
    """Empirical estimators of one batch with bootstrap standard errors."""

    moments: OutputMoments
    moments_err: Tuple[float, float, float, float]
    tv: TVParameters
    tv_err: Tuple[float, float]
    params: Optional[ChannelParams]
    tau_err: float
    nu_err: float


@dataclass(frozen=True)
class TrialBatch:
    """
    Seeded record set of one run.

    x_m, y_m, x_out, y_out and accepted hold one row per stored trial; with
    keep_rejected=False only accepted rows are stored. prefilter_mean and
    prefilter_var are the moments of (x_m, y_m) over all requested trials.
    """

    seed: int
    n_requested: int
    n_accepted: int
    x_m: np.ndarray
    y_m: np.ndarray
    accepted: np.ndarray
    x_out: np.ndarray
    y_out: np.ndarray
    prefilter_mean: Tuple[float, float]
    prefilter_var: Tuple[float, float]
    estimate: Optional[ChannelEstimate] = field(default=None, compare=False)

    @property
    def p_success_hat(self) -> float:
        return self.n_accepted / self.n_requested

    def accepted_outputs(self) -> np.ndarray:
        """(n_accepted, 2) array of Bob's (x_out, y_out)."""
        return np.column_stack([self.x_out[self.accepted], self.y_out[self.accepted]])

    def accepted_measurements(self) -> np.ndarray:
        return np.column_stack([self.x_m[self.accepted], self.y_m[self.accepted]])


class _Shard(NamedTuple):
    measured: np.ndarray
    outputs: np.ndarray
    accepted: np.ndarray
    sums: np.ndarray
    sq_sums: np.ndarray
    n: int


def shard_rng(seed: int, shard_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, shard_index])))


def _run_shard(model, spec: FilterSpec, phi: np.ndarray, seed: int, index: int, n: int,
               keep_rejected: bool) -> _Shard:
    reg, measured_cov, measured_chol, bob_chol = model
    rng = shard_rng(seed, index)
    measured = reg.mean_measured + rng.standard_normal((n, 2)) @ measured_chol.T
    draws = rng.random(n)
    bob_noise = rng.standard_normal((n, 2)) @ bob_chol.T

    alphas = heterodyne_amplitude(measured[:, 0], measured[:, 1], measured_cov[0, 0], measured_cov[1, 1])
    accepted = postselect(spec, alphas, draws)
    outputs = reg.conditional_mean(measured) + bob_noise + measured @ phi.T

    sums = measured.sum(axis=0)
    sq_sums = (measured ** 2).sum(axis=0)
    if not keep_rejected:
        measured, outputs, accepted = measured[accepted], outputs[accepted], accepted[accepted]
    return _Shard(measured, outputs, accepted, sums, sq_sums, n)


def run_trials(
    cfg: TeleporterConfig,
    spec: FilterSpec,
    n: int,
    seed: int,
    keep_rejected: bool = True,
    estimate: bool = True,
    resamples: int = BOOTSTRAP_RESAMPLES,
    threads: Optional[int] = None,
) -> TrialBatch:
    """
    Sample Alice's outcomes, apply the filter and form Bob's displaced output.

    Args:
        cfg:           Operating point; cfg.g must equal spec.g.
        spec:          Filter gain and cutoff in calibrated units.
        n:             Number of requested trials.
        seed:          Unsigned 64-bit seed; shard k draws from SeedSequence([seed, k]).
        keep_rejected: Store rejected trials as well as accepted ones.
        estimate:      Attach the channel estimate when enough trials pass.
        resamples:     Bootstrap resamples for the estimator errors.
        threads:       Worker cap, defaults to TELEPORTSIM_THREADS or the CPU count.

    Returns:
        TrialBatch, identical for a given seed whatever the thread count.

    Raises:
        ValueError: n < 1, a seed outside [0, 2^64) or cfg.g != spec.g.
    """
    if cfg.g != spec.g:
        raise ValueError(f"teleporter gain {cfg.g} and filter gain {spec.g} must match")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")

    reg, measured_cov = measurement_model(cfg)
    try:
        model = (reg, measured_cov, np.linalg.cholesky(measured_cov), np.linalg.cholesky(reg.cov))
    except np.linalg.LinAlgError as e:
        raise SimulationError(f"sampling covariance is not positive definite: {e}") from e
    phi = np.diag([cfg.phi_x, cfg.phi_y])

    sizes = [SHARD_SIZE] * (n // SHARD_SIZE) + ([n % SHARD_SIZE] if n % SHARD_SIZE else [])
    workers = max(1, min(threads or thread_count(), len(sizes)))
    logger.debug("running %d trials in %d shards on %d threads", n, len(sizes), workers)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        shards = list(pool.map(
            lambda k: _run_shard(model, spec, phi, seed, k, sizes[k], keep_rejected),
            range(len(sizes)),
        ))

    measured = np.concatenate([s.measured for s in shards])
    outputs = np.concatenate([s.outputs for s in shards])
    accepted = np.concatenate([s.accepted for s in shards])
    sums = sum(s.sums for s in shards)
    sq_sums = sum(s.sq_sums for s in shards)
    pre_mean = sums / n
    pre_var = sq_sums / n - pre_mean ** 2

    batch = TrialBatch(
        seed=seed,
        n_requested=n,
        n_accepted=int(accepted.sum()),
        x_m=measured[:, 0],
        y_m=measured[:, 1],
        accepted=accepted,
        x_out=outputs[:, 0],
        y_out=outputs[:, 1],
        prefilter_mean=(float(pre_mean[0]), float(pre_mean[1])),
        prefilter_var=(float(pre_var[0]), float(pre_var[1])),
    )
    logger.info("trials: %d requested, %d accepted (p=%.4g)", n, batch.n_accepted, batch.p_success_hat)

    if estimate:
        if batch.n_accepted < MIN_ACCEPTED:
            logger.warning("only %d accepted trials; no estimators formed", batch.n_accepted)
        else:
            batch = _with_estimate(batch, estimate_channel(batch, cfg, resamples=resamples, seed=seed))
    return batch


def _with_estimate(batch: TrialBatch, est: ChannelEstimate) -> TrialBatch:
    return replace(batch, estimate=est)


def bootstrap(
    values,
    statistic: Callable[[np.ndarray], object],
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nonparametric bootstrap over the rows of `values`. Returns the statistic on
    the full data and the standard deviation across resamples; resamples on
    which the statistic fails are left out.
    """
    values = np.asarray(values)
    if values.shape[0] == 0:
        raise ValueError("bootstrap needs at least one value")
    if values.shape[0] < 2:
        raise InsufficientSamplesError("bootstrap needs at least two values")

    estimate = np.asarray(statistic(values), dtype=float)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    n = values.shape[0]
    stats = np.full((resamples,) + estimate.shape, np.nan)
    for i in range(resamples):
        idx = rng.integers(0, n, size=n)
        try:
            stats[i] = statistic(values[idx])
        except (ValueError, SimulationError):
            continue
    with np.errstate(invalid="ignore"):
        err = np.nanstd(stats, axis=0, ddof=1)
    return estimate, err


def _tv_from_samples(outputs: np.ndarray, input_mean: np.ndarray, input_var: np.ndarray) -> np.ndarray:
    mean = outputs.mean(axis=0)
    var = outputs.var(axis=0, ddof=1)
    k = mean / input_mean
    t_q = float(np.sum(k * k * input_var / var))
    v_q = float(np.prod(var - k * k * input_var))
    return np.array([mean[0], mean[1], var[0], var[1], t_q, v_q])


def estimate_channel(
    batch: TrialBatch,
    cfg: TeleporterConfig,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> ChannelEstimate:
    """
    Empirical moments, T/V and (tau, nu) from the accepted outputs, with
    bootstrap errors. Gains are read off the output means, so both input
    means must be non-zero.
    """
    if batch.n_accepted < MIN_ACCEPTED:
        raise InsufficientSamplesError(
            f"{batch.n_accepted} accepted trials, at least {MIN_ACCEPTED} are needed"
        )
    input_mean = np.asarray(cfg.input_mean)
    if np.any(input_mean == 0.0):
        raise ValueError(f"empirical gains need non-zero input means, got {cfg.input_mean}")
    input_var = np.asarray(cfg.input_var)

    def statistic(rows):
        moments_tv = _tv_from_samples(rows, input_mean, input_var)
        params = tv_to_taunu(moments_tv[4], moments_tv[5])
        return np.concatenate([moments_tv, [params.tau, params.nu]])

    def moments_only(rows):
        return _tv_from_samples(rows, input_mean, input_var)

    outputs = batch.accepted_outputs()
    base, base_err = bootstrap(outputs, moments_only, resamples, seed)
    moments = OutputMoments(*base[:4])
    tv = TVParameters(float(base[4]), float(base[5]))
    try:
        full, full_err = bootstrap(outputs, statistic, resamples, seed)
        params = ChannelParams(float(full[6]), float(full[7]))
        tau_err, nu_err = float(full_err[6]), float(full_err[7])
    except ValueError as e:
        logger.warning("no (tau, nu) for this batch: %s", e)
        params, tau_err, nu_err = None, math.nan, math.nan

    return ChannelEstimate(
        moments=moments,
        moments_err=tuple(float(e) for e in base_err[:4]),
        tv=tv,
        tv_err=(float(base_err[4]), float(base_err[5])),
        params=params,
        tau_err=tau_err,
        nu_err=nu_err,
    )


def suggest_cutoff(cfg: TeleporterConfig, g: float, k: float = 5.0) -> float:
    """
    Cutoff in calibrated units: k post-filter standard deviations (g) beyond
    the amplified mean g^2 |c|, where c is the pre-filter mean amplitude.
    """
    if g < 1.0:
        raise ValueError(f"g must be >= 1, got {g}")
    return k * g + g * g * abs(prefilter_amplitude(cfg))


def prefilter_amplitude(cfg: TeleporterConfig) -> complex:
    """Mean heterodyne amplitude c of Alice's outcomes in calibrated units."""
    reg, measured_cov = measurement_model(cfg)
    return complex(heterodyne_amplitude(reg.mean_measured[0], reg.mean_measured[1],
                                        measured_cov[0, 0], measured_cov[1, 1]))


def expected_success_probability(cfg: TeleporterConfig, spec: FilterSpec) -> float:
    """Acceptance probability of the filter averaged over Alice's outcome distribution."""
    return success_probability(spec, prefilter_amplitude(cfg), source_var=1.0)
