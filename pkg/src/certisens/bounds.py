"""Certified bracket [sm, sM] around the full-model index estimator,
computed from surrogate outputs and their per-point error bounds only.

Write d_k = y_k - mu and c_k = y'_k - mu'. For any admissible pair of
output vectors (within the per-point error boxes) the squared-residual
function R(a) = sum_k (c_k - a d_k)^2 is a quadratic in the regression
slope a, and the index estimator is its argmin -beta/(2 alpha) at the
(unknown) true sample means. The bracket combines two ingredients:

* exact ranges of the quadratic coefficients alpha = sum (d_k + u_k)^2
  and beta = -2 sum (d_k + u_k)(c_k + v_k) over the error boxes
  (coordinate-wise extrema, corner products), turned into bounds on the
  argmin by interval division, and
* an outer min/max over a finite grid of candidate means (mu, mu')
  covering the boxes that are guaranteed to contain the true means.

A three-node quadratic interpolation of the pointwise envelope functions
R_inf / R_sup is kept as a diagnostic: the envelopes are quadratic only
piecewise (their summands carry |a| and sign-dependent kinks), so the
interpolation route can silently narrow the bracket; computing the
coefficient ranges exactly avoids that failure mode while keeping the
same failure condition (lower alpha range hitting zero) and the same
collapse to the plain estimate when all error bounds vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import PickFreezeSample
from .errors import BadNodesError, BoundUnavailableError, NonQuadraticRegimeError
from .sobol import estimate_sobol


@dataclass(frozen=True)
class SurrogateSample:
    """Surrogate output pairs with their per-point error bounds."""

    y: np.ndarray
    yp: np.ndarray
    eps: np.ndarray
    epsp: np.ndarray

    def __post_init__(self):
        n = len(self.y)
        if not (len(self.yp) == len(self.eps) == len(self.epsp) == n):
            raise ValueError("all four arrays must have equal length")
        if np.any(self.eps < 0) or np.any(self.epsp < 0):
            raise ValueError("error bounds must be >= 0")

    @classmethod
    def from_pick_freeze(cls, sample: PickFreezeSample) -> "SurrogateSample":
        if not sample.is_surrogate:
            raise ValueError("pick-freeze sample carries no error bounds")
        return cls(y=sample.y, yp=sample.yp, eps=sample.eps, epsp=sample.epsp)

    @property
    def N(self) -> int:
        return len(self.y)

    def take(self, idx: np.ndarray) -> "SurrogateSample":
        """Resample rows, keeping each (y, y', eps, eps') quadruple intact."""
        return SurrogateSample(self.y[idx], self.yp[idx], self.eps[idx], self.epsp[idx])


@dataclass(frozen=True)
class MeanBoxes:
    """Intervals certain to contain the true sample means of y and y'."""

    center: float
    halfwidth: float
    center_p: float
    halfwidth_p: float

    @classmethod
    def from_sample(cls, s: SurrogateSample) -> "MeanBoxes":
        return cls(
            center=float(s.y.mean()),
            halfwidth=float(s.eps.mean()),
            center_p=float(s.yp.mean()),
            halfwidth_p=float(s.epsp.mean()),
        )


@dataclass(frozen=True)
class QuadCoeffs:
    alpha: float
    beta: float
    gamma: float

    def __call__(self, a: float) -> float:
        return (self.alpha * a + self.beta) * a + self.gamma


@dataclass(frozen=True)
class BoundPair:
    sm: float
    sM: float

    def __post_init__(self):
        if self.sm > self.sM:
            raise ValueError(f"bracket out of order: [{self.sm}, {self.sM}]")

    @property
    def width(self) -> float:
        return self.sM - self.sm


@dataclass(frozen=True)
class MuGrid:
    """Tensor grid over the mean boxes; endpoints are always included and
    the center is forced in, so the four corners and the center are
    evaluated regardless of the counts."""

    n_mu: int = 5
    n_mup: int = 5

    def axes(self, boxes: MeanBoxes) -> tuple[np.ndarray, np.ndarray]:
        if self.n_mu < 1 or self.n_mup < 1:
            raise ValueError("grid counts must be >= 1")

        def axis(center: float, halfwidth: float, count: int) -> np.ndarray:
            # offsets are symmetric around 0, so an odd count carries the
            # exact center; an even count gets it appended
            vals = center + np.linspace(-halfwidth, halfwidth, count)
            if count % 2 == 0:
                vals = np.unique(np.append(vals, center))
            return vals

        return (axis(boxes.center, boxes.halfwidth, self.n_mu),
                axis(boxes.center_p, boxes.halfwidth_p, self.n_mup))


def box_square_extrema(m: float, r: float) -> tuple[float, float]:
    """Extrema of w^2 for w ranging over [m - r, m + r], r >= 0."""
    if r < 0:
        raise ValueError(f"half-width must be >= 0, got {r}")
    am = abs(m)
    inf = max(0.0, am - r) ** 2
    sup = (am + r) ** 2
    return inf, sup


def r_inf_sup_at(a: float, s: SurrogateSample, mu: float, mup: float) -> tuple[float, float]:
    """Pointwise envelope values of the squared-residual sum at slope a.

    Each summand (z' - a(z - mu) - mu')^2 ranges, over its error box,
    within the square extrema of an interval centered at
    m_k = y'_k - a (y_k - mu) - mu' with half-width eps'_k + |a| eps_k.
    """
    m = s.yp - a * (s.y - mu) - mup
    r = s.epsp + abs(a) * s.eps
    am = np.abs(m)
    inf = float(np.sum(np.maximum(0.0, am - r) ** 2))
    sup = float(np.sum((am + r) ** 2))
    return inf, sup


def fit_quadratic(a_nodes, values) -> QuadCoeffs:
    """Exact interpolation of three (node, value) pairs by a quadratic."""
    nodes = [float(a) for a in a_nodes]
    vals = [float(v) for v in values]
    if len(nodes) != 3 or len(vals) != 3:
        raise BadNodesError("exactly three nodes and three values required")
    if len(set(nodes)) != 3:
        raise BadNodesError(f"fit nodes must be distinct, got {nodes}")
    coeffs = np.linalg.solve(np.vander(np.array(nodes), 3), np.array(vals))
    return QuadCoeffs(alpha=float(coeffs[0]), beta=float(coeffs[1]), gamma=float(coeffs[2]))


def default_fit_nodes(s: SurrogateSample) -> tuple[float, float, float]:
    """Nodes {0, t, 2t} with t = max(1, |point estimate|): one-signed, so
    the |a| kink at the origin never straddles them."""
    t = max(1.0, abs(estimate_sobol(s.y, s.yp).value))
    return (0.0, t, 2.0 * t)


def check_quadratic_fit(
    s: SurrogateSample,
    mu: float,
    mup: float,
    rtol: float = 1e-6,
) -> tuple[QuadCoeffs, QuadCoeffs]:
    """Fit both envelopes at the default nodes and validate at a held-out
    node (the midpoint of the first gap).

    The envelopes are exactly quadratic only when no summand changes sign
    between the nodes; outside that regime the fit is not trustworthy and
    this check raises instead of reinterpreting the values.
    """
    nodes = default_fit_nodes(s)
    vals = [r_inf_sup_at(a, s, mu, mup) for a in nodes]
    q_inf = fit_quadratic(nodes, [v[0] for v in vals])
    q_sup = fit_quadratic(nodes, [v[1] for v in vals])
    a4 = 0.5 * (nodes[0] + nodes[1])
    ref_inf, ref_sup = r_inf_sup_at(a4, s, mu, mup)
    scale = max(abs(ref_sup), 1e-300)
    tol_inf = rtol * max(abs(ref_inf), 1e-12 * scale)
    if abs(q_inf(a4) - ref_inf) > tol_inf or abs(q_sup(a4) - ref_sup) > rtol * scale:
        raise NonQuadraticRegimeError(
            f"held-out node {a4} off the fitted quadratics: "
            f"inf {q_inf(a4):.6e} vs {ref_inf:.6e}, sup {q_sup(a4):.6e} vs {ref_sup:.6e}"
        )
    return q_inf, q_sup


def bound_pair_at_fitted(s: SurrogateSample, mu: float, mup: float) -> tuple[float, float]:
    """Bracket endpoints from the three-node interpolation route.

    Diagnostic only: valid when the envelopes are genuinely quadratic
    (e.g. all error bounds zero), heuristic otherwise. The production
    path is bound_pair_at.
    """
    nodes = default_fit_nodes(s)
    vals = [r_inf_sup_at(a, s, mu, mup) for a in nodes]
    q_inf = fit_quadratic(nodes, [v[0] for v in vals])
    q_sup = fit_quadratic(nodes, [v[1] for v in vals])
    if q_inf.alpha <= 0.0:
        raise BoundUnavailableError("fitted lower-envelope curvature not positive")
    prod = (q_inf.alpha - q_sup.alpha) * (q_inf.gamma - q_sup.gamma)
    delta = 2.0 * np.sqrt(max(prod, 0.0))  # clamp round-off negatives
    sm = -(q_inf.beta + delta) / (2.0 * q_inf.alpha)
    sM = -(q_sup.beta - delta) / (2.0 * q_sup.alpha)
    return sm, sM


def _coefficient_ranges(s: SurrogateSample, mus: np.ndarray, mups: np.ndarray):
    """Exact ranges of the quadratic coefficients alpha (curvature) and
    beta (linear term) over the error boxes, for every grid pair.

    Returns arrays of shape (len(mus), len(mups)) for beta and
    (len(mus),) for alpha, which does not depend on mu'.
    """
    d = s.y[None, :] - mus[:, None]                      # (Gm, N)
    ad = np.abs(d)
    a_lo = np.sum(np.maximum(0.0, ad - s.eps[None, :]) ** 2, axis=1)
    a_hi = np.sum((ad + s.eps[None, :]) ** 2, axis=1)

    c = s.yp[None, :] - mups[:, None]                    # (Gp, N)
    d_lo = (d - s.eps[None, :])[:, None, :]              # (Gm, 1, N)
    d_hi = (d + s.eps[None, :])[:, None, :]
    c_lo = (c - s.epsp[None, :])[None, :, :]             # (1, Gp, N)
    c_hi = (c + s.epsp[None, :])[None, :, :]
    # (d + u)(c + v) is bilinear, so its range over the box is spanned by
    # the four corner products
    p_min = d_lo * c_lo
    p_max = p_min.copy()
    for corner in (d_lo * c_hi, d_hi * c_lo, d_hi * c_hi):
        np.minimum(p_min, corner, out=p_min)
        np.maximum(p_max, corner, out=p_max)
    b_lo = -2.0 * p_max.sum(axis=2)                      # (Gm, Gp)
    b_hi = -2.0 * p_min.sum(axis=2)
    return a_lo, a_hi, b_lo, b_hi


def bound_pair_at(s: SurrogateSample, mu: float, mup: float) -> tuple[float, float]:
    """Bracket of the argmin slope for one candidate mean pair.

    The argmin -beta/(2 alpha) is monotone in beta and, for fixed beta,
    monotone in alpha, so its range over the exact coefficient rectangle
    is attained at corners. Fails when the curvature range reaches zero,
    i.e. every y-box straddles mu.
    """
    a_lo, a_hi, b_lo, b_hi = _coefficient_ranges(s, np.array([mu]), np.array([mup]))
    if a_lo[0] <= 0.0:
        raise BoundUnavailableError("every output error box straddles the candidate mean")
    sm = min(-b_hi[0, 0] / (2.0 * a_lo[0]), -b_hi[0, 0] / (2.0 * a_hi[0]))
    sM = max(-b_lo[0, 0] / (2.0 * a_lo[0]), -b_lo[0, 0] / (2.0 * a_hi[0]))
    return float(sm), float(sM)


def bound_pair(s: SurrogateSample, grid: MuGrid = MuGrid()) -> BoundPair:
    """Certified bracket: min/max of the local bounds over the mean grid.

    A grid mean whose curvature range hits zero is attainable as the true
    sample mean and admits an admissible output vector with zero variance,
    for which the estimator is undefined; no finite bracket can cover
    that, so any failing grid pair makes the bracket unavailable.
    """
    boxes = MeanBoxes.from_sample(s)
    mus, mups = grid.axes(boxes)
    a_lo, a_hi, b_lo, b_hi = _coefficient_ranges(s, mus, mups)
    if np.any(a_lo <= 0.0):
        raise BoundUnavailableError(
            "error bounds too large relative to the output spread: a candidate "
            "mean is straddled by every output error box"
        )
    sm_each = np.minimum(-b_hi / (2.0 * a_lo[:, None]), -b_hi / (2.0 * a_hi[:, None]))
    sM_each = np.maximum(-b_lo / (2.0 * a_lo[:, None]), -b_lo / (2.0 * a_hi[:, None]))
    return BoundPair(sm=float(sm_each.min()), sM=float(sM_each.max()))
