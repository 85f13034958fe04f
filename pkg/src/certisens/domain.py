"""Input domains, pick-freeze designs, and model evaluation.

The pick-freeze scheme pairs every draw X^k from sample A with a hybrid
point: sample B's row with coordinate i replaced by A's. The slope-type
variance-ratio estimator applied to the paired outputs estimates the
first-order sensitivity index of input i.

Input indices `i` and row indices `k` are 1-based throughout this module,
matching the usual statement of the scheme.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadDomainError,
    BadIndexError,
    DesignTooSmallError,
    EvaluationError,
)
from .rng import Role, stream


@dataclass(frozen=True)
class ParameterDomain:
    """Product of p closed intervals with independent uniform marginals."""

    ranges: tuple[tuple[float, float], ...]

    def __init__(self, ranges: Sequence[Sequence[float]]):
        rs = tuple((float(lo), float(hi)) for lo, hi in ranges)
        if len(rs) < 1:
            raise BadDomainError("domain needs at least one input variable")
        for j, (lo, hi) in enumerate(rs):
            if not lo < hi:
                raise BadDomainError(f"interval {j + 1} is degenerate: [{lo}, {hi}]")
        object.__setattr__(self, "ranges", rs)

    @property
    def p(self) -> int:
        return len(self.ranges)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.ranges])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.ranges])

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class SurrogateEval:
    """Surrogate output with its certified absolute error bound."""

    value: float
    bound: float

    def __post_init__(self):
        if self.bound < 0:
            raise ValueError(f"error bound must be >= 0, got {self.bound}")


@dataclass(frozen=True)
class PickFreezeDesign:
    """Two independent N x p uniform samples plus the frozen input index."""

    i: int  # 1-based target input
    A: np.ndarray
    B: np.ndarray
    seed: int

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class PickFreezeSample:
    """Paired outputs for one input index.

    For a full model eps/epsp are None; for a surrogate they hold the
    per-point certified error bounds of y and yp respectively.
    """

    i: int
    seed: int
    y: np.ndarray
    yp: np.ndarray
    eps: np.ndarray | None = None
    epsp: np.ndarray | None = None

    @property
    def N(self) -> int:
        return len(self.y)

    @property
    def is_surrogate(self) -> bool:
        return self.eps is not None


def sample_design(domain: ParameterDomain, i: int, N: int, seed: int) -> PickFreezeDesign:
    """Draw the two independent uniform samples for input index i.

    The A and B streams are keyed by (seed, role) only, so designs for
    different target indices share the same underlying draws; this is the
    standard reuse of one sample pair across all p indices.
    """
    if N < 2:
        raise DesignTooSmallError(f"design needs N >= 2 rows, got {N}")
    if not 1 <= i <= domain.p:
        raise BadIndexError(f"input index {i} outside 1..{domain.p}")
    lo, hi = domain.lower, domain.upper
    A = lo + stream(seed, Role.DESIGN_A).random((N, domain.p)) * (hi - lo)
    B = lo + stream(seed, Role.DESIGN_B).random((N, domain.p)) * (hi - lo)
    return PickFreezeDesign(i=i, A=A, B=B, seed=seed)


def freeze_inputs(design: PickFreezeDesign, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (x, x') for row k: x is A's row, x' is B's row with
    coordinate i replaced by A's."""
    if not 1 <= k <= design.N:
        raise BadIndexError(f"row {k} outside 1..{design.N}")
    x = design.A[k - 1].copy()
    xp = design.B[k - 1].copy()
    xp[design.i - 1] = x[design.i - 1]
    return x, xp


def evaluate_pairs(evaluator: Callable, design: PickFreezeDesign, threads: int = 1) -> PickFreezeSample:
    """Tabulate evaluator outputs over all design rows.

    The evaluator receives a p-vector and returns either a float (full
    model) or a SurrogateEval (surrogate with error bound); the kind is
    detected from the first row. Rows are independent, so with threads > 1
    they are fanned out to a pool and written back by row index; results
    do not depend on evaluation order.
    """
    N = design.N
    points = []
    for k in range(1, N + 1):
        x, xp = freeze_inputs(design, k)
        points.append((x, xp))

    def eval_row(k: int):
        x, xp = points[k]
        try:
            return evaluator(x), evaluator(xp)
        except Exception as exc:
            raise EvaluationError(k + 1) from exc

    if threads == 1:
        results = [eval_row(k) for k in range(N)]
    else:
        workers = threads if threads > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(eval_row, range(N)))

    if isinstance(results[0][0], SurrogateEval):
        y = np.array([r[0].value for r in results])
        yp = np.array([r[1].value for r in results])
        eps = np.array([r[0].bound for r in results])
        epsp = np.array([r[1].bound for r in results])
        return PickFreezeSample(i=design.i, seed=design.seed, y=y, yp=yp, eps=eps, epsp=epsp)
    y = np.array([float(r[0]) for r in results])
    yp = np.array([float(r[1]) for r in results])
    return PickFreezeSample(i=design.i, seed=design.seed, y=y, yp=yp)
