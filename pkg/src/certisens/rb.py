"""Reduced-basis solver for affinely parametrized symmetric coercive
elliptic systems: full solves, orthogonal snapshot compression, the
offline/online split, and a certified output error bound.

The full model is the linear system sum_q theta_q(X) A_q u = psi with a
scalar output out . u. The offline phase projects everything onto a small
basis that is orthonormal in the Omega inner product and precomputes the
Gram matrix of the Riesz representers of the load and of each A_q column,
after which an online solve plus the residual dual norm — and hence the
output error bound |f - f~| <= ||out||_dual * ||r||_dual / alpha_lb —
costs nothing that grows with the full dimension.

The representer Gram matrix is assembled and applied in extended
precision: the online dual norm is a heavily cancelling quadratic form,
and double-precision assembly caps its accuracy near machine-size
residuals. Negative round-off values under the square root are clamped
to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .domain import SurrogateEval
from .errors import (
    AssemblyError,
    BadBasisError,
    BadCoercivityError,
    RankDeficientError,
    ReducedAssemblyError,
)

_ORTHO_TOL = 1e-8
_RANK_TOL = 1e-12


# ---------------------------------------------------------------------------
# serializable coefficient and coercivity forms

@dataclass(frozen=True)
class ComponentTheta:
    """theta(X) = X[input]; input is 1-based."""

    input: int

    def __call__(self, X: np.ndarray) -> float:
        return float(np.asarray(X)[self.input - 1])

    def to_dict(self) -> dict:
        return {"kind": "component", "input": self.input}


@dataclass(frozen=True)
class ConstantTheta:
    value: float

    def __call__(self, X: np.ndarray) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


def theta_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "component":
        return ComponentTheta(input=int(d["input"]))
    if kind == "constant":
        return ConstantTheta(value=float(d["value"]))
    raise ValueError(f"unknown coefficient form: {kind!r}")


@dataclass(frozen=True)
class ScaledMinTheta:
    """alpha_lb(X) = scale * min_q theta_q(X), for positive coefficient
    functions with positive semidefinite blocks."""

    scale: float
    theta: tuple = ()

    def __call__(self, X: np.ndarray) -> float:
        return self.scale * min(th(X) for th in self.theta)

    def to_dict(self) -> dict:
        return {"kind": "scaled-min-theta", "scale": self.scale,
                "theta": [th.to_dict() for th in self.theta]}


@dataclass(frozen=True)
class MinThetaBound:
    """alpha_lb(X) = alpha_ref * min_q theta_q(X) / theta_q(X_ref).

    Valid when every theta_q is positive on the domain and every A_q is
    positive semidefinite; alpha_ref is the coercivity constant at X_ref.
    """

    alpha_ref: float
    theta_ref: tuple[float, ...]
    x_ref: tuple[float, ...]
    theta: tuple = ()

    def __call__(self, X: np.ndarray) -> float:
        return self.alpha_ref * min(
            th(X) / tr for th, tr in zip(self.theta, self.theta_ref)
        )

    def to_dict(self) -> dict:
        return {"kind": "min-theta", "alpha_ref": self.alpha_ref,
                "theta_ref": list(self.theta_ref), "x_ref": list(self.x_ref),
                "theta": [th.to_dict() for th in self.theta]}


@dataclass(frozen=True)
class ConstantCoercivity:
    value: float

    def __call__(self, X: np.ndarray) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.value}


def coercivity_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "scaled-min-theta":
        return ScaledMinTheta(scale=float(d["scale"]),
                              theta=tuple(theta_from_dict(t) for t in d["theta"]))
    if kind == "min-theta":
        return MinThetaBound(alpha_ref=float(d["alpha_ref"]),
                             theta_ref=tuple(float(t) for t in d["theta_ref"]),
                             x_ref=tuple(float(x) for x in d["x_ref"]),
                             theta=tuple(theta_from_dict(t) for t in d["theta"]))
    if kind == "constant":
        return ConstantCoercivity(value=float(d["value"]))
    raise ValueError(f"unknown coercivity form: {kind!r}")


# ---------------------------------------------------------------------------
# model containers

@dataclass(frozen=True)
class AffineEllipticModel:
    """Affinely parametrized SPD system with a linear scalar output."""

    Aq: tuple[np.ndarray, ...]
    psi: np.ndarray
    out: np.ndarray
    Omega: np.ndarray
    theta: tuple[Callable[[np.ndarray], float], ...]
    coercivity_lb: Callable[[np.ndarray], float]

    def __post_init__(self):
        d = len(self.psi)
        for q, A in enumerate(self.Aq):
            if A.shape != (d, d):
                raise ValueError(f"A_{q + 1} has shape {A.shape}, expected {(d, d)}")
            if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, abs(A).max())):
                raise ValueError(f"A_{q + 1} is not symmetric")
        if self.Omega.shape != (d, d):
            raise ValueError("Omega dimension mismatch")
        if not np.allclose(self.Omega, self.Omega.T, rtol=0,
                           atol=1e-12 * abs(self.Omega).max()):
            raise ValueError("Omega is not symmetric")
        try:
            sla.cholesky(self.Omega, lower=True)
        except sla.LinAlgError as exc:
            raise ValueError("Omega is not positive definite") from exc
        if len(self.theta) != len(self.Aq):
            raise ValueError("one coefficient function per affine block required")

    @property
    def dim_f(self) -> int:
        return len(self.psi)

    @property
    def Q(self) -> int:
        return len(self.Aq)

    def assemble(self, X: np.ndarray) -> np.ndarray:
        K = np.zeros_like(self.Omega)
        for th, A in zip(self.theta, self.Aq):
            K += th(X) * A
        return K


@dataclass(frozen=True)
class SnapshotSet:
    """Full solutions at a batch of parameter points, stored columnwise."""

    params: np.ndarray        # (m, p)
    snapshots: np.ndarray     # (dim_f, m)

    @property
    def m(self) -> int:
        return self.snapshots.shape[1]


@dataclass(frozen=True)
class ReducedModel:
    """Everything the online phase needs; immutable once built."""

    basis: np.ndarray                   # (dim_f, n), Omega-orthonormal
    Aq_red: tuple[np.ndarray, ...]      # Q matrices (n, n)
    psi_red: np.ndarray                 # (n,)
    out_red: np.ndarray                 # (n,)
    riesz_gram: np.ndarray              # (1 + Q n, 1 + Q n), extended precision
    out_norm: float                     # dual norm of the output functional
    theta: tuple[Callable[[np.ndarray], float], ...]
    coercivity_lb: Callable[[np.ndarray], float]

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    @property
    def Q(self) -> int:
        return len(self.Aq_red)


# ---------------------------------------------------------------------------
# extended-precision kernels (the offline Gram is tiny, so a hand-rolled
# Cholesky in longdouble is cheap)

def _cholesky_ld(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.longdouble)
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0:
            raise sla.LinAlgError("matrix not positive definite")
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _solve_lower_ld(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=np.longdouble)
    X = np.zeros_like(B)
    for i in range(L.shape[0]):
        X[i] = (B[i] - L[i, :i] @ X[:i]) / L[i, i]
    return X


# ---------------------------------------------------------------------------
# operations

def full_solve(model: AffineEllipticModel, X: np.ndarray) -> np.ndarray:
    """Dense symmetric solve of the full system at X."""
    K = model.assemble(X)
    try:
        return sla.cho_solve(sla.cho_factor(K), model.psi)
    except sla.LinAlgError as exc:
        raise AssemblyError() from exc


def full_output(model: AffineEllipticModel, X: np.ndarray) -> float:
    return float(model.out @ full_solve(model, X))


def build_snapshots(model: AffineEllipticModel, params: Sequence[np.ndarray]) -> SnapshotSet:
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[0] < 1:
        raise ValueError("need at least one snapshot parameter")
    cols = []
    for j, X in enumerate(params):
        try:
            cols.append(full_solve(model, X))
        except AssemblyError as exc:
            raise AssemblyError(param_index=j + 1) from exc
    return SnapshotSet(params=params, snapshots=np.column_stack(cols))


def pod_basis(snap: SnapshotSet, Omega: np.ndarray, n: int) -> np.ndarray:
    """Top-n orthogonal compression of the snapshot set.

    Eigenvectors of the m-by-m Gram matrix S^T Omega S give the
    combinations; each basis vector is the corresponding snapshot
    combination normalized in the Omega norm, which makes the basis
    Omega-orthonormal by construction.
    """
    S = snap.snapshots
    m = snap.m
    if not 1 <= n <= m:
        raise RankDeficientError(f"basis size {n} outside 1..{m}")
    gram = S.T @ Omega @ S
    w, V = sla.eigh(gram)
    w = w[::-1]
    V = V[:, ::-1]
    if w[0] <= 0.0:
        raise RankDeficientError("snapshot set is numerically zero")
    if w[n - 1] <= _RANK_TOL * w[0]:
        raise RankDeficientError(
            f"eigenvalue {n} at {w[n - 1]:.3e} is below {_RANK_TOL:.0e} of the largest; "
            "snapshot set has lower numerical rank"
        )
    B = S @ (V[:, :n] / np.sqrt(w[:n]))
    # eigenvectors at eigenvalues near the rank tolerance lose Omega-
    # orthogonality; a triangular Gram correction restores it without
    # changing the nested spans of the leading modes
    L = sla.cholesky(B.T @ Omega @ B, lower=True)
    return sla.solve_triangular(L, B.T, lower=True).T


def offline_reduce(model: AffineEllipticModel, basis: np.ndarray) -> ReducedModel:
    """Project the model onto an Omega-orthonormal basis and precompute
    the residual-norm Gram data."""
    B = np.asarray(basis, dtype=float)
    gram_dev = np.abs(B.T @ model.Omega @ B - np.eye(B.shape[1])).max()
    if gram_dev > _ORTHO_TOL:
        raise BadBasisError(f"basis Gram deviates from identity by {gram_dev:.3e}")
    Aq_red = tuple(B.T @ A @ B for A in model.Aq)
    L = _cholesky_ld(model.Omega)
    # functionals whose Riesz representers span the residual: the load,
    # then the columns of each A_q B (ordered block by block)
    W = np.column_stack([model.psi] + [A @ B for A in model.Aq])
    Y = _solve_lower_ld(L, W)
    riesz_gram = Y.T @ Y
    out_norm = float(np.sqrt(np.sum(_solve_lower_ld(L, model.out) ** 2)))
    return ReducedModel(
        basis=B,
        Aq_red=Aq_red,
        psi_red=B.T @ model.psi,
        out_red=B.T @ model.out,
        riesz_gram=riesz_gram,
        out_norm=out_norm,
        theta=model.theta,
        coercivity_lb=model.coercivity_lb,
    )


def online_solve(red: ReducedModel, X: np.ndarray) -> np.ndarray:
    """Solve the n-by-n projected system at X."""
    K = np.zeros_like(red.Aq_red[0])
    for th, A in zip(red.theta, red.Aq_red):
        K += th(X) * A
    try:
        u = sla.solve(K, red.psi_red, assume_a="pos")
    except sla.LinAlgError as exc:
        raise ReducedAssemblyError(f"reduced system singular at X={X}") from exc
    if not np.all(np.isfinite(u)):
        raise ReducedAssemblyError(f"reduced solve produced non-finite values at X={X}")
    return u


def _residual_weights(red: ReducedModel, X: np.ndarray, u_red: np.ndarray) -> np.ndarray:
    w = np.empty(1 + red.Q * red.n, dtype=np.longdouble)
    w[0] = 1.0
    for q, th in enumerate(red.theta):
        w[1 + q * red.n: 1 + (q + 1) * red.n] = -th(X) * np.asarray(u_red, dtype=np.longdouble)
    return w


def residual_dual_norm(red: ReducedModel, X: np.ndarray, u_red: np.ndarray) -> float:
    """Dual norm of the equation residual at (X, u_red), via the
    precomputed representer Gram matrix; cost independent of dim_f."""
    w = _residual_weights(red, X, u_red)
    q = w @ red.riesz_gram @ w
    return float(np.sqrt(max(q, 0.0)))


def residual_dual_norm_reference(
    model: AffineEllipticModel, red: ReducedModel, X: np.ndarray, u_red: np.ndarray
) -> float:
    """Full-space reference for the residual dual norm: assemble the
    residual vector, apply the inverse inner product, take the root.
    Independent of the offline Gram data; used to cross-check it."""
    rho = model.psi - model.assemble(X) @ (red.basis @ np.asarray(u_red, dtype=float))
    e = sla.cho_solve(sla.cho_factor(model.Omega), rho)
    return float(np.sqrt(max(e @ rho, 0.0)))


def surrogate_output(red: ReducedModel, X: np.ndarray) -> SurrogateEval:
    """Online output value with its certified absolute error bound."""
    u = online_solve(red, X)
    alpha = red.coercivity_lb(X)
    if alpha <= 0.0:
        raise BadCoercivityError(f"coercivity lower bound {alpha} <= 0 at X={X}")
    value = float(red.out_red @ u)
    bound = red.out_norm * residual_dual_norm(red, X, u) / alpha
    return SurrogateEval(value=value, bound=bound)


def make_full_evaluator(model: AffineEllipticModel) -> Callable[[np.ndarray], float]:
    return lambda X: full_output(model, X)


def make_surrogate_evaluator(red: ReducedModel) -> Callable[[np.ndarray], SurrogateEval]:
    return lambda X: surrogate_output(red, X)


def min_theta_coercivity(model: AffineEllipticModel, x_ref: np.ndarray) -> MinThetaBound:
    """Coercivity lower bound from a single reference point.

    Requires positive coefficient functions and positive semidefinite
    blocks; then a(v,v;X) >= min_q(theta_q(X)/theta_q(X_ref)) a(v,v;X_ref),
    and the reference coercivity is the smallest generalized eigenvalue of
    the assembled matrix against Omega.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    theta_ref = tuple(th(x_ref) for th in model.theta)
    if min(theta_ref) <= 0.0:
        raise BadCoercivityError("coefficients at the reference point must be positive")
    alpha_ref = float(
        sla.eigh(model.assemble(x_ref), model.Omega, eigvals_only=True,
                 subset_by_index=[0, 0])[0]
    )
    if alpha_ref <= 0.0:
        raise BadCoercivityError("reference matrix is not coercive against Omega")
    return MinThetaBound(alpha_ref=alpha_ref, theta_ref=theta_ref,
                         x_ref=tuple(x_ref), theta=model.theta)


# ---------------------------------------------------------------------------
# serialization (decimal-float JSON friendly dicts)

def _split_ld(a: np.ndarray) -> tuple[list, list]:
    """Split a longdouble array into a double hi/lo pair that reconstructs
    it exactly; JSON carries only doubles."""
    hi = np.asarray(a, dtype=float)
    lo = np.asarray(a - hi, dtype=float)
    return hi.tolist(), lo.tolist()


def _join_ld(hi: list, lo: list) -> np.ndarray:
    return np.asarray(hi, dtype=np.longdouble) + np.asarray(lo, dtype=np.longdouble)


def _forms_to_dicts(forms) -> list[dict]:
    out = []
    for f in forms:
        if not hasattr(f, "to_dict"):
            raise TypeError(
                f"{type(f).__name__} is not a serializable coefficient form; "
                "use the declared form classes for models that go to disk"
            )
        out.append(f.to_dict())
    return out


def model_to_jsonable(model: AffineEllipticModel) -> dict:
    if not hasattr(model.coercivity_lb, "to_dict"):
        raise TypeError("coercivity bound is not a serializable form")
    return {
        "dim_f": model.dim_f,
        "Aq": [A.tolist() for A in model.Aq],
        "psi": model.psi.tolist(),
        "out": model.out.tolist(),
        "Omega": model.Omega.tolist(),
        "theta": _forms_to_dicts(model.theta),
        "coercivity_lb": model.coercivity_lb.to_dict(),
    }


def model_from_jsonable(d: dict) -> AffineEllipticModel:
    return AffineEllipticModel(
        Aq=tuple(np.asarray(A, dtype=float) for A in d["Aq"]),
        psi=np.asarray(d["psi"], dtype=float),
        out=np.asarray(d["out"], dtype=float),
        Omega=np.asarray(d["Omega"], dtype=float),
        theta=tuple(theta_from_dict(t) for t in d["theta"]),
        coercivity_lb=coercivity_from_dict(d["coercivity_lb"]),
    )


def reduced_to_jsonable(red: ReducedModel) -> dict:
    if not hasattr(red.coercivity_lb, "to_dict"):
        raise TypeError("coercivity bound is not a serializable form")
    gram_hi, gram_lo = _split_ld(red.riesz_gram)
    return {
        "n": red.n,
        "basis": red.basis.tolist(),
        "Aq_red": [A.tolist() for A in red.Aq_red],
        "psi_red": red.psi_red.tolist(),
        "out_red": red.out_red.tolist(),
        "riesz_gram_hi": gram_hi,
        "riesz_gram_lo": gram_lo,
        "out_norm": red.out_norm,
        "theta": _forms_to_dicts(red.theta),
        "coercivity_lb": red.coercivity_lb.to_dict(),
    }


def reduced_from_jsonable(d: dict) -> ReducedModel:
    return ReducedModel(
        basis=np.asarray(d["basis"], dtype=float),
        Aq_red=tuple(np.asarray(A, dtype=float) for A in d["Aq_red"]),
        psi_red=np.asarray(d["psi_red"], dtype=float),
        out_red=np.asarray(d["out_red"], dtype=float),
        riesz_gram=_join_ld(d["riesz_gram_hi"], d["riesz_gram_lo"]),
        out_norm=float(d["out_norm"]),
        theta=tuple(theta_from_dict(t) for t in d["theta"]),
        coercivity_lb=coercivity_from_dict(d["coercivity_lb"]),
    )
