"""Exception hierarchy.

Every failure mode that callers are expected to branch on gets its own
class; anything else propagates as whatever the underlying library raised.
"""

from __future__ import annotations


class CertisensError(Exception):
    """Base class for all errors raised by this package."""


class BadDomainError(CertisensError, ValueError):
    """Parameter domain is malformed (empty, or an interval with lo >= hi)."""


class BadIndexError(CertisensError, IndexError):
    """An input-variable or row index is outside its valid 1-based range."""


class DesignTooSmallError(CertisensError, ValueError):
    """Pick-freeze designs need at least two rows."""


class EvaluationError(CertisensError):
    """A model evaluator failed at one design row."""

    def __init__(self, row: int, message: str = ""):
        self.row = row
        super().__init__(message or f"evaluator failed at design row {row}")


class AssemblyError(CertisensError):
    """Assembled full-model matrix is singular or not positive definite."""

    def __init__(self, message: str = "assembled matrix is not SPD", param_index: int | None = None):
        self.param_index = param_index
        if param_index is not None:
            message = f"{message} (snapshot parameter {param_index})"
        super().__init__(message)


class RankDeficientError(CertisensError):
    """Requested basis size exceeds the numerical rank of the snapshot set."""


class BadBasisError(CertisensError):
    """Basis handed to the offline reduction is not orthonormal in the model inner product."""


class ReducedAssemblyError(CertisensError):
    """Reduced system matrix is singular at the requested parameter point."""


class BadCoercivityError(CertisensError):
    """Coercivity lower bound evaluated to a non-positive value."""


class DegenerateSampleError(CertisensError, ValueError):
    """Output sample has zero empirical variance; the index estimator is undefined."""


class OutOfDomainError(CertisensError, ValueError):
    """Normal quantile requested at probability 0 or 1."""


class DegenerateBootstrapError(CertisensError):
    """Bootstrap replicates are all identical, or resampling cannot produce a usable replicate."""


class IntervalOrderError(CertisensError):
    """A confidence interval came out with lo > hi; reported instead of silently swapped."""


class BadNodesError(CertisensError, ValueError):
    """Quadratic fit nodes are not pairwise distinct."""


class BoundUnavailableError(CertisensError):
    """Per-point error bounds are too large relative to the sample spread;
    the estimator bracket cannot be certified."""


class NonQuadraticRegimeError(CertisensError):
    """Envelope values at a held-out node disagree with the three-node quadratic fit."""


class BadEffectivityError(CertisensError, ValueError):
    """Effectivity factors must lie in [0, 1]."""


class UnreliableReplicationError(CertisensError):
    """More than the tolerated share of bootstrap replicates lost their bracket."""


class BadDataError(CertisensError, ValueError):
    """Decay-fit input contains non-positive error values or repeated sizes."""


class NoDecayError(CertisensError):
    """Fitted error model does not decay with basis size (base <= 1)."""


class NoBracketError(CertisensError):
    """Bisection could not bracket a root of the size-tuning optimality condition."""


class TooLargeError(CertisensError, ValueError):
    """Exhaustive grid search would exceed its evaluation budget."""


class NegativeMonteCarloPartWarning(UserWarning):
    """Estimated Monte-Carlo share of the interval width came out negative."""
