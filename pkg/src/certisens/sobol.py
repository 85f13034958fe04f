"""Point estimation of first-order sensitivity indices and
bias-corrected percentile bootstrap confidence intervals.

The estimator is the pick-freeze ratio: empirical covariance of the
paired outputs over the empirical variance of the first sample, both
with 1/N normalization. It equals the slope of the least-squares
regression of y' on y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    DegenerateBootstrapError,
    DegenerateSampleError,
    IntervalOrderError,
    OutOfDomainError,
)
from .rng import Role, stream

_MAX_REDRAWS = 100


@dataclass(frozen=True)
class SobolEstimate:
    value: float
    N: int
    i: int | None = None


@dataclass(frozen=True)
class BootstrapReplicates:
    """Estimator replications over with-replacement row resamples.

    Intended use is B >= 100 (enforced where an interval is formed);
    smaller B is allowed here so replicate streams can be probed directly.
    """

    values: np.ndarray
    B: int
    seed: int
    n_redrawn: int = 0


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise IntervalOrderError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


def estimate_sobol(y: np.ndarray, yp: np.ndarray, i: int | None = None) -> SobolEstimate:
    """Pick-freeze index estimate from paired output samples.

    Evaluated in two-pass centered form, mean((y-ybar)(yp-ypbar)) /
    mean((y-ybar)^2), which agrees with the textbook
    (mean(y*yp) - mean(y)mean(yp)) / (mean(y^2) - mean(y)^2)
    in exact arithmetic but avoids the cancellation of the raw moments.
    """
    y = np.asarray(y, dtype=float)
    yp = np.asarray(yp, dtype=float)
    if y.shape != yp.shape or y.ndim != 1:
        raise ValueError("y and yp must be 1-d arrays of equal length")
    N = len(y)
    if N < 2:
        raise DegenerateSampleError(f"need N >= 2 outputs, got {N}")
    cy = y - y.mean()
    den = float(np.mean(cy * cy))
    if den <= 0.0:
        raise DegenerateSampleError("first output sample has zero empirical variance")
    num = float(np.mean(cy * (yp - yp.mean())))
    return SobolEstimate(value=num / den, N=N, i=i)


def std_normal_cdf(z: float) -> float:
    return float(ndtr(z))


def std_normal_quantile(b: float) -> float:
    if not 0.0 < b < 1.0:
        raise OutOfDomainError(f"quantile probability must be in (0, 1), got {b}")
    return float(ndtri(b))


def empirical_quantile(values: np.ndarray, q: float) -> float:
    """Order statistic with 1-based index ceil(q*B), clamped to [1, B].

    Any consistent convention would do; this one is fixed so results are
    bit-reproducible.
    """
    values = np.sort(np.asarray(values, dtype=float))
    B = len(values)
    idx = min(max(math.ceil(q * B), 1), B)
    return float(values[idx - 1])


def resample_indices(seed: int, b: int, N: int) -> np.ndarray:
    """Row index list of replicate b: N draws with replacement.

    Keyed by (seed, bootstrap role, b); every consumer of replicate b
    (plain and combined interval machinery) sees the same list.
    """
    return stream(seed, Role.BOOTSTRAP, b).integers(0, N, size=N)


def bootstrap_replicates(y: np.ndarray, yp: np.ndarray, B: int, seed: int) -> BootstrapReplicates:
    """Estimator replications on B with-replacement resamples.

    Resampled pairs stay paired: one index list addresses both y and yp.
    A resample with zero variance is skipped and redrawn from the same
    substream, up to a fixed cap.
    """
    y = np.asarray(y, dtype=float)
    yp = np.asarray(yp, dtype=float)
    N = len(y)
    values = np.empty(B)
    n_redrawn = 0
    for b in range(B):
        gen = stream(seed, Role.BOOTSTRAP, b)
        for attempt in range(_MAX_REDRAWS + 1):
            idx = gen.integers(0, N, size=N)
            try:
                values[b] = estimate_sobol(y[idx], yp[idx]).value
                break
            except DegenerateSampleError:
                n_redrawn += 1
        else:
            raise DegenerateBootstrapError(
                f"replicate {b} still degenerate after {_MAX_REDRAWS} redraws"
            )
    return BootstrapReplicates(values=values, B=B, seed=seed, n_redrawn=n_redrawn)


def bias_correction_constant(values: np.ndarray, point: float) -> float:
    """z0 = Phi^-1 of the share of replicates at or below the point estimate.

    The share count/B is clamped into [1/(B+1), B/(B+1)] so the quantile
    stays finite when all replicates fall on one side.
    """
    values = np.asarray(values)
    B = len(values)
    prop = np.count_nonzero(values <= point) / B
    prop = min(max(prop, 1.0 / (B + 1)), B / (B + 1.0))
    return std_normal_quantile(prop)


def bc_interval(replicates: BootstrapReplicates, point: SobolEstimate, alpha: float) -> ConfidenceInterval:
    """Bias-corrected percentile interval of level 1 - alpha.

    Quantile levels alpha/2 and 1-alpha/2 are shifted through
    Phi(2*z0 + z_beta) before being read off the replicate order
    statistics.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if replicates.B < 100:
        raise ValueError(f"interval needs B >= 100 replicates, got {replicates.B}")
    values = replicates.values
    if np.all(values == values[0]):
        raise DegenerateBootstrapError("all bootstrap replicates identical")
    z0 = bias_correction_constant(values, point.value)
    q_lo = std_normal_cdf(2.0 * z0 + std_normal_quantile(alpha / 2.0))
    q_hi = std_normal_cdf(2.0 * z0 + std_normal_quantile(1.0 - alpha / 2.0))
    return ConfidenceInterval(
        lo=empirical_quantile(values, q_lo),
        hi=empirical_quantile(values, q_hi),
        level=1.0 - alpha,
    )
