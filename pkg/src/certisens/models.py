"""Analytic test models and brute-force validation of the certified
brackets.

The linear model has closed-form first-order indices, the synthetic
surrogate wraps any full model with a controlled lie-free error bound,
and the toy diffusion problem exercises the reduced-basis machinery on a
desk-scale SPD system. brute_force_bounds and anneal_bounds search the
admissible output boxes directly for the extreme values of the index
estimator; they are the oracles the cheap brackets are audited against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .bounds import SurrogateSample
from .domain import ParameterDomain, SurrogateEval
from .errors import TooLargeError
from .rb import AffineEllipticModel, ComponentTheta, ScaledMinTheta
from .rng import Role, stream
from .sobol import estimate_sobol

_BRUTE_BUDGET = 10 ** 7


@dataclass(frozen=True)
class LinearTestModel:
    """f(X) = coeffs . X on independent uniform inputs.

    With uniform marginals of width w_j, the first-order index of input j
    is c_j^2 w_j^2 / sum_l c_l^2 w_l^2 (each input contributes variance
    c_j^2 w_j^2 / 12 and there are no interactions).
    """

    coeffs: tuple[float, ...]
    domain: ParameterDomain

    def __post_init__(self):
        if len(self.coeffs) != self.domain.p:
            raise ValueError("one coefficient per input required")
        if all(c == 0.0 for c in self.coeffs):
            raise ValueError("at least one coefficient must be nonzero")

    def __call__(self, X: np.ndarray) -> float:
        return float(np.dot(self.coeffs, np.asarray(X)))


def analytic_sobol(model: LinearTestModel) -> np.ndarray:
    c = np.asarray(model.coeffs, dtype=float)
    w = model.domain.upper - model.domain.lower
    contrib = (c * w) ** 2
    return contrib / contrib.sum()


@dataclass(frozen=True)
class SyntheticSurrogate:
    """Full model plus a declared perturbation and bound.

    Certification |f - f~| <= bound holds by construction whenever
    |perturb_fn| <= bound_fn pointwise; nothing here re-checks that, which
    is exactly what lets audits plant a lying surrogate on purpose.
    """

    base: Callable[[np.ndarray], float]
    bound_fn: Callable[[np.ndarray], float]
    perturb_fn: Callable[[np.ndarray], float]

    def __call__(self, X: np.ndarray) -> SurrogateEval:
        return SurrogateEval(
            value=self.base(X) + self.perturb_fn(X),
            bound=self.bound_fn(X),
        )


@dataclass(frozen=True)
class ToyDiffusion:
    """1-d two-conductivity diffusion problem with its parameter domain."""

    model: AffineEllipticModel
    domain: ParameterDomain


def build_toy_diffusion(
    dim_f: int = 64,
    cells: int = 24,
    ranges: tuple[tuple[float, float], tuple[float, float]] = ((0.1, 10.0), (0.1, 10.0)),
) -> ToyDiffusion:
    """-(kappa u')' = 1 on (0,1), u(0) = u(1) = 0, P1 elements on a uniform
    grid with dim_f interior nodes.

    kappa alternates between X_1 and X_2 over `cells` equal cells, giving
    two affine stiffness blocks with coefficients theta_q(X) = X_q. (A
    single contiguous block per conductivity would leave the solution
    manifold with numerical rank 4, too poor to exercise basis sizes
    beyond that.) Elements straddling a cell boundary are split exactly
    between the blocks. The output is the mean of the nodal values, the
    inner product is stiffness-at-unit-conductivity plus mass, and the
    coercivity bound is min(X_1, X_2) times the smallest generalized
    eigenvalue of the unit-conductivity stiffness against the inner
    product.
    """
    if cells < 2:
        raise ValueError("need at least two cells to use both conductivities")
    h = 1.0 / (dim_f + 1)
    cell_edges = np.linspace(0.0, 1.0, cells + 1)
    A1 = np.zeros((dim_f, dim_f))
    A2 = np.zeros((dim_f, dim_f))
    M = np.zeros((dim_f, dim_f))
    loc_stiff = np.array([[1.0, -1.0], [-1.0, 1.0]])
    loc_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    for e in range(dim_f + 1):
        xl, xr = e * h, (e + 1) * h
        len1 = len2 = 0.0
        for c in range(cells):
            overlap = max(0.0, min(xr, cell_edges[c + 1]) - max(xl, cell_edges[c]))
            if c % 2 == 0:
                len1 += overlap
            else:
                len2 += overlap
        dofs = (e - 1, e)
        for a in range(2):
            ia = dofs[a]
            if not 0 <= ia < dim_f:
                continue
            for b in range(2):
                ib = dofs[b]
                if not 0 <= ib < dim_f:
                    continue
                A1[ia, ib] += (len1 / h ** 2) * loc_stiff[a, b]
                A2[ia, ib] += (len2 / h ** 2) * loc_stiff[a, b]
                M[ia, ib] += h * loc_mass[a, b]
    psi = np.full(dim_f, h)          # unit load against P1 hats
    out = np.full(dim_f, 1.0 / dim_f)
    Omega = A1 + A2 + M
    lam_min = float(sla.eigh(A1 + A2, Omega, eigvals_only=True, subset_by_index=[0, 0])[0])
    theta = (ComponentTheta(1), ComponentTheta(2))
    model = AffineEllipticModel(
        Aq=(A1, A2),
        psi=psi,
        out=out,
        Omega=Omega,
        theta=theta,
        coercivity_lb=ScaledMinTheta(scale=lam_min, theta=theta),
    )
    return ToyDiffusion(model=model, domain=ParameterDomain(ranges))


def psi_ratio(y) -> float:
    """Index estimator as a function of one stacked vector
    (y_1..y_N, y'_1..y'_N); the objective of the box searches below."""
    y = np.asarray(y, dtype=float)
    N = len(y) // 2
    return estimate_sobol(y[:N], y[N:]).value


def _box_arrays(s: SurrogateSample) -> tuple[np.ndarray, np.ndarray]:
    lo = np.concatenate([s.y - s.eps, s.yp - s.epsp])
    hi = np.concatenate([s.y + s.eps, s.yp + s.epsp])
    return lo, hi


def _psi_rows(pts: np.ndarray, N: int) -> np.ndarray:
    Y, Yp = pts[:, :N], pts[:, N:]
    cy = Y - Y.mean(axis=1, keepdims=True)
    den = np.mean(cy * cy, axis=1)
    num = np.mean(cy * (Yp - Yp.mean(axis=1, keepdims=True)), axis=1)
    return num / den


def brute_force_bounds(s: SurrogateSample, points_per_axis: int) -> tuple[float, float]:
    """Exhaustive extrema of the estimator over a tensor grid of the
    output boxes; the grid includes every box endpoint.

    Only viable for tiny samples: refuses beyond 10^7 grid points.
    """
    if points_per_axis < 2:
        raise ValueError("need at least 2 points per axis")
    dims = 2 * s.N
    total = points_per_axis ** dims
    if total > _BRUTE_BUDGET:
        raise TooLargeError(
            f"{points_per_axis}^{dims} = {total} grid points exceeds the "
            f"{_BRUTE_BUDGET} evaluation budget"
        )
    lo, hi = _box_arrays(s)
    axes = np.linspace(lo, hi, points_per_axis)       # (ppa, dims)
    best_min, best_max = math.inf, -math.inf
    chunk = 10 ** 5
    powers = points_per_axis ** np.arange(dims)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // powers[None, :]) % points_per_axis
        pts = axes[digits, np.arange(dims)[None, :]]
        vals = _psi_rows(pts, s.N)
        best_min = min(best_min, float(vals.min()))
        best_max = max(best_max, float(vals.max()))
    return best_min, best_max


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling; t0 defaults to the objective spread over 50
    random box points."""

    t0: float | None = None
    cooling: float = 0.95
    steps_per_temp: int = 200
    t_floor_ratio: float = 1e-6
    step_fraction: float = 0.25


def _anneal_chain(s: SurrogateSample, sign: float, schedule: AnnealSchedule,
                  seed: int, chain: int) -> float:
    rng = stream(seed, Role.ANNEAL, chain)
    lo, hi = _box_arrays(s)
    width = hi - lo
    N = s.N
    dims = 2 * N

    def objective(pt: np.ndarray) -> float:
        vals = _psi_rows(pt[None, :], N)
        return sign * float(vals[0])

    probes = lo + rng.random((50, dims)) * width
    probe_vals = _psi_rows(probes, N)
    t0 = schedule.t0 if schedule.t0 is not None else float(np.ptp(sign * probe_vals))

    current = lo + rng.random(dims) * width
    f_cur = objective(current)
    best = f_cur
    # hot loop in plain floats: the instances are tiny and per-step numpy
    # dispatch would dominate
    cur = current.tolist()
    lo_l, hi_l = lo.tolist(), hi.tolist()
    sigma = (schedule.step_fraction * width).tolist()
    T = t0
    while T > schedule.t_floor_ratio * t0:
        steps = rng.normal(size=(schedule.steps_per_temp, dims))
        accepts = rng.random(schedule.steps_per_temp)
        for step, u_acc in zip(steps, accepts):
            cand = [min(max(cur[j] + sigma[j] * step[j], lo_l[j]), hi_l[j])
                    for j in range(dims)]
            sy = syp = syy = sy2 = 0.0
            for k in range(N):
                a = cand[k]
                b = cand[N + k]
                sy += a
                syp += b
                syy += a * b
                sy2 += a * a
            den = sy2 / N - (sy / N) ** 2
            if den <= 0.0:
                continue
            f_cand = sign * (syy / N - (sy / N) * (syp / N)) / den
            if f_cand <= f_cur or u_acc < math.exp(-(f_cand - f_cur) / max(T, 1e-300)):
                cur = cand
                f_cur = f_cand
                if f_cur < best:
                    best = f_cur
        T *= schedule.cooling
    return sign * best


def anneal_bounds(s: SurrogateSample, schedule: AnnealSchedule = AnnealSchedule(),
                  seed: int = 0) -> tuple[float, float]:
    """Heuristic extrema of the estimator over the output boxes: one
    annealing chain minimizing, one maximizing, with box-projected
    Gaussian moves. Quality is whatever the schedule buys; nothing is
    guaranteed."""
    amin = _anneal_chain(s, +1.0, schedule, seed, chain=0)
    amax = _anneal_chain(s, -1.0, schedule, seed, chain=1)
    return amin, amax
