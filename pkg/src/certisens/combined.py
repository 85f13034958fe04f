"""Combined confidence intervals: sampling error and surrogate error
covered simultaneously.

Each bootstrap replicate resamples whole (y, y', eps, eps') quadruples,
recomputes the certified bracket on the resample, and the bias-corrected
percentile machinery is applied separately to the lower-endpoint and
upper-endpoint replicate streams. The reported interval runs from the
corrected alpha/2 quantile of the lower endpoints to the corrected
1 - alpha/2 quantile of the upper endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import BoundPair, MuGrid, SurrogateSample, bound_pair
from .errors import (
    BadEffectivityError,
    DegenerateBootstrapError,
    BoundUnavailableError,
    IntervalOrderError,
    UnreliableReplicationError,
)
from .rng import Role, stream
from .sobol import (
    bias_correction_constant,
    empirical_quantile,
    resample_indices,
    std_normal_cdf,
    std_normal_quantile,
)

_MAX_DROP_SHARE = 0.05


@dataclass(frozen=True)
class EpsilonSamplingPolicy:
    """Optional replicate-wise shrinking of error bounds.

    eta / etap are alleged effectivities in [0, 1], scalar or per point:
    each replicate draws working bounds uniformly from [eta*eps, eps].
    Disabled (the default) reproduces the bounds verbatim.
    """

    enabled: bool = False
    eta: float | np.ndarray = 1.0
    etap: float | np.ndarray = 1.0

    def __post_init__(self):
        for name, val in (("eta", self.eta), ("etap", self.etap)):
            arr = np.asarray(val, dtype=float)
            if np.any(arr < 0.0) or np.any(arr > 1.0):
                raise BadEffectivityError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class QQSummary:
    """Normal quantile pairing of a replicate stream; descriptive only."""

    levels: np.ndarray
    theoretical: np.ndarray
    empirical: np.ndarray
    correlation: float
    degenerate: bool


@dataclass(frozen=True)
class Diagnostics:
    dropped: int
    kept: int
    point_bounds: BoundPair
    qq_lower: QQSummary
    qq_upper: QQSummary


@dataclass(frozen=True)
class CombinedInterval:
    lo: float
    hi: float
    level: float
    diagnostics: Diagnostics

    def __post_init__(self):
        if self.lo > self.hi:
            raise IntervalOrderError(f"combined interval out of order: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


def epsilon_resample(eps: np.ndarray, eta, rng: np.random.Generator) -> np.ndarray:
    """Draw working bounds independently and uniformly from [eta*eps, eps]."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise BadEffectivityError("effectivities must lie in [0, 1]")
    lo = eta * eps
    return lo + rng.random(len(eps)) * (eps - lo)


def replicate_qq_summary(values: np.ndarray, n_levels: int = 99) -> QQSummary:
    """Empirical vs standard-normal quantiles at n_levels probabilities.

    Emits the paired quantiles and their correlation; no pass/fail
    judgment is attached.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 100:
        raise ValueError("quantile summary needs at least 100 replicates")
    levels = np.arange(1, n_levels + 1) / (n_levels + 1.0)
    theo = np.array([std_normal_quantile(q) for q in levels])
    emp = np.array([empirical_quantile(values, q) for q in levels])
    degenerate = bool(np.all(values == values[0]))
    if degenerate or np.std(emp) == 0.0:
        corr = float("nan")
        degenerate = True
    else:
        corr = float(np.corrcoef(theo, emp)[0, 1])
    return QQSummary(levels=levels, theoretical=theo, empirical=emp,
                     correlation=corr, degenerate=degenerate)


def combined_interval(
    s: SurrogateSample,
    B: int,
    alpha: float,
    policy: EpsilonSamplingPolicy = EpsilonSamplingPolicy(),
    grid: MuGrid = MuGrid(),
    seed: int = 0,
) -> CombinedInterval:
    """Level 1 - alpha interval covering sampling and surrogate error.

    Replicate b is fully determined by (seed, b): its row resample comes
    from the shared bootstrap substream (the same lists as the plain
    bootstrap under the same seed) and any effectivity draws come from a
    separate substream, so enabling the policy never perturbs the
    resampling. Replicates whose bracket is unavailable are dropped and
    counted; more than 5% drops aborts the run.
    """
    if B < 100:
        raise ValueError(f"combined interval needs B >= 100, got {B}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    point = bound_pair(s, grid)

    sm_vals, sM_vals = [], []
    dropped = 0
    for b in range(B):
        idx = resample_indices(seed, b, s.N)
        rs = s.take(idx)
        if policy.enabled:
            erng = stream(seed, Role.EPSILON, b)
            eta = np.broadcast_to(np.asarray(policy.eta, dtype=float), (s.N,))[idx]
            etap = np.broadcast_to(np.asarray(policy.etap, dtype=float), (s.N,))[idx]
            rs = SurrogateSample(
                y=rs.y,
                yp=rs.yp,
                eps=epsilon_resample(rs.eps, eta, erng),
                epsp=epsilon_resample(rs.epsp, etap, erng),
            )
        try:
            bp = bound_pair(rs, grid)
        except BoundUnavailableError:
            dropped += 1
            continue
        sm_vals.append(bp.sm)
        sM_vals.append(bp.sM)

    if dropped > _MAX_DROP_SHARE * B:
        raise UnreliableReplicationError(
            f"{dropped} of {B} replicates lost their bracket (> {_MAX_DROP_SHARE:.0%})"
        )
    sm_vals = np.array(sm_vals)
    sM_vals = np.array(sM_vals)
    if np.all(sm_vals == sm_vals[0]) and np.all(sM_vals == sM_vals[0]):
        raise DegenerateBootstrapError("all combined replicates identical")

    z0_m = bias_correction_constant(sm_vals, point.sm)
    z0_M = bias_correction_constant(sM_vals, point.sM)
    q_lo = std_normal_cdf(2.0 * z0_m + std_normal_quantile(alpha / 2.0))
    q_hi = std_normal_cdf(2.0 * z0_M + std_normal_quantile(1.0 - alpha / 2.0))
    diag = Diagnostics(
        dropped=dropped,
        kept=len(sm_vals),
        point_bounds=point,
        qq_lower=replicate_qq_summary(sm_vals),
        qq_upper=replicate_qq_summary(sM_vals),
    )
    return CombinedInterval(
        lo=empirical_quantile(sm_vals, q_lo),
        hi=empirical_quantile(sM_vals, q_hi),
        level=1.0 - alpha,
        diagnostics=diag,
    )
