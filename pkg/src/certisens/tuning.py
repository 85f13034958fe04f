"""Joint choice of bootstrap sample size N and reduced-basis size n.

The mean combined-interval length is modeled as Z/sqrt(N) + C/a^n: a
Monte-Carlo part decaying like 1/sqrt(N) and a surrogate part decaying
geometrically in the basis size. Online work scales like N * n^3, so for
a target mean length P the cheapest admissible pair solves

    minimize N n^3   subject to   Z/sqrt(N) + C/a^n = P.

Eliminating N through the constraint leaves a one-dimensional first-order
condition in n with a unique root right of n_c = ln(C/P)/ln(a), located
by bisection.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import BoundPair
from .combined import CombinedInterval
from .errors import (
    BadDataError,
    NegativeMonteCarloPartWarning,
    NoBracketError,
    NoDecayError,
)

_BISECT_TOL = 1e-12


@dataclass(frozen=True)
class TuningModel:
    """Constants of the interval-length model Z/sqrt(N) + C/a^n."""

    Z: float
    C: float
    a: float

    def __post_init__(self):
        if self.Z <= 0 or self.C <= 0:
            raise ValueError("Z and C must be positive")
        if self.a <= 1.0:
            raise NoDecayError(f"decay base must exceed 1, got {self.a}")


@dataclass(frozen=True)
class TuningSolution:
    """Real-valued optimum plus the rounded integer pair.

    residual / rounded_residual are the constraint defects
    Z/sqrt(N) + C/a^n - P at the real and rounded solutions.
    """

    P: float
    n_star: float
    N_star: float
    residual: float
    n_rounded: int
    N_rounded: int
    rounded_residual: float


def fit_error_decay(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares fit of e(n) = C / a^n through log-linear regression.

    Returns (C, a). Needs at least two pairs with distinct sizes and
    strictly positive errors.
    """
    if len(pairs) < 2:
        raise BadDataError("decay fit needs at least two (n, e) pairs")
    ns = np.array([float(n) for n, _ in pairs])
    es = np.array([float(e) for _, e in pairs])
    if np.any(es <= 0.0):
        raise BadDataError("error values must be strictly positive")
    if len(np.unique(ns)) != len(ns):
        raise BadDataError("basis sizes must be distinct")
    slope, intercept = np.polyfit(ns, np.log(es), 1)
    a = math.exp(-slope)
    if a <= 1.0:
        raise NoDecayError(f"fitted decay base {a:.6g} <= 1")
    return math.exp(intercept), a


def estimate_Z(
    N: int,
    results: Sequence[tuple[BoundPair, CombinedInterval]],
) -> float:
    """Monte-Carlo constant from one or more finished estimation runs.

    The sampling share of each interval is the part of its width not
    explained by the bracket: (hi - sM) + (sm - lo). Z is sqrt(N) times
    the average share over the supplied indices. A negative result (the
    interval narrower than its own bracket, which healthy quantiles never
    produce) is returned as-is with a warning, never folded to positive.
    """
    if not results:
        raise ValueError("need at least one (bounds, interval) result")
    parts = [(ci.hi - bp.sM) + (bp.sm - ci.lo) for bp, ci in results]
    z = math.sqrt(N) * sum(parts) / len(parts)
    if z < 0.0:
        warnings.warn(
            f"negative Monte-Carlo part {z:.3e}; check the interval quantiles",
            NegativeMonteCarloPartWarning,
        )
    return z


def _foc(n: float, model: TuningModel, P: float) -> float:
    return n / (P * model.a ** n - model.C) - 3.0 / (2.0 * model.C * math.log(model.a))


def solve_optimal(model: TuningModel, P: float) -> TuningSolution:
    """Cheapest (n, N) meeting mean interval length P.

    Bisection on the first-order condition over (n_c, L], with the upper
    end doubled from n_c + 1 until the sign flips; no flip within
    L = 10 max(n_c, 1) + 100 raises. N follows from the constraint, so
    the real-valued solution satisfies it to round-off. The rounded pair
    is reported with its own constraint defect; rounding is left to the
    caller's judgment.
    """
    if P <= 0.0:
        raise ValueError(f"target precision must be positive, got {P}")
    ln_a = math.log(model.a)
    n_c = math.log(model.C / P) / ln_a
    lo = n_c + 1e-6
    limit = 10.0 * max(n_c, 1.0) + 100.0
    if not _foc(lo, model, P) > 0.0:
        raise NoBracketError(
            f"optimality condition not positive at n_c + 1e-6 (P={P}); "
            "no interior optimum (is P below the n=0 surrogate error C?)"
        )
    hi = max(n_c + 1.0, 1.0)
    while _foc(hi, model, P) > 0.0:
        hi *= 2.0
        if hi > limit:
            raise NoBracketError(f"no sign change up to n = {limit:.1f}")
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _foc(mid, model, P) > 0.0:
            lo = mid
        else:
            hi = mid
    n_star = 0.5 * (lo + hi)
    N_star = (model.Z / (P - model.C / model.a ** n_star)) ** 2

    def constraint_defect(n: float, N: float) -> float:
        return model.Z / math.sqrt(N) + model.C / model.a ** n - P

    n_rounded = max(int(round(n_star)), 1)
    N_rounded = max(int(round(N_star)), 1)
    return TuningSolution(
        P=P,
        n_star=n_star,
        N_star=N_star,
        residual=constraint_defect(n_star, N_star),
        n_rounded=n_rounded,
        N_rounded=N_rounded,
        rounded_residual=constraint_defect(n_rounded, N_rounded),
    )


def tuning_table(model: TuningModel, precisions: Sequence[float]) -> list[TuningSolution]:
    """solve_optimal over a list of targets, in input order."""
    return [solve_optimal(model, P) for P in precisions]
