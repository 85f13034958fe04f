import json

import numpy as np
import pytest
import scipy.linalg as sla

from certisens import (
    AffineEllipticModel,
    build_snapshots,
    build_toy_diffusion,
    full_output,
    full_solve,
    min_theta_coercivity,
    offline_reduce,
    online_solve,
    pod_basis,
    residual_dual_norm,
    residual_dual_norm_reference,
    surrogate_output,
)
from certisens.errors import (
    AssemblyError,
    BadBasisError,
    RankDeficientError,
)
from certisens.rb import (
    ConstantCoercivity,
    ConstantTheta,
    SnapshotSet,
    model_from_jsonable,
    model_to_jsonable,
    reduced_from_jsonable,
    reduced_to_jsonable,
)

from conftest import rng_for


def identity_model(dim=4):
    return AffineEllipticModel(
        Aq=(np.eye(dim),),
        psi=np.eye(dim)[0],
        out=np.ones(dim) / dim,
        Omega=np.eye(dim),
        theta=(ConstantTheta(1.0),),
        coercivity_lb=ConstantCoercivity(1.0),
    )


@pytest.fixture(scope="module")
def toy():
    return build_toy_diffusion(dim_f=64, cells=24, ranges=((0.1, 10.0), (0.1, 10.0)))


@pytest.fixture(scope="module")
def toy_reduction(toy):
    gen = rng_for(60)
    params = toy.domain.lower + gen.random((40, 2)) * (toy.domain.upper - toy.domain.lower)
    snaps = build_snapshots(toy.model, params)
    return snaps


def test_identity_system_solves_to_unit_vector():
    model = identity_model()
    u = full_solve(model, np.array([0.0]))
    assert np.allclose(u, np.eye(4)[0], atol=1e-14)


def test_two_by_two_system_against_cramer():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    psi = np.array([5.0, 4.0])
    model = AffineEllipticModel(
        Aq=(A,), psi=psi, out=np.array([1.0, 0.0]), Omega=np.eye(2),
        theta=(ConstantTheta(1.0),), coercivity_lb=ConstantCoercivity(1.0),
    )
    u = full_solve(model, np.zeros(1))
    det = 3.0 * 2.0 - 1.0 * 1.0
    expected = np.array([(5.0 * 2.0 - 1.0 * 4.0) / det, (3.0 * 4.0 - 1.0 * 5.0) / det])
    assert np.allclose(u, expected, atol=1e-14)


def test_full_solve_matches_dense_oracle_and_residual(toy):
    X = np.array([1.3, 4.2])
    u = full_solve(toy.model, X)
    K = toy.model.assemble(X)
    assert np.allclose(u, sla.solve(K, toy.model.psi), rtol=1e-12)
    rel_res = np.linalg.norm(K @ u - toy.model.psi) / np.linalg.norm(toy.model.psi)
    assert rel_res <= 1e-10


def test_full_solve_rejects_indefinite_assembly():
    model = identity_model()
    bad = AffineEllipticModel(
        Aq=model.Aq, psi=model.psi, out=model.out, Omega=model.Omega,
        theta=(ConstantTheta(-1.0),), coercivity_lb=model.coercivity_lb,
    )
    with pytest.raises(AssemblyError):
        full_solve(bad, np.zeros(1))


def test_snapshots_constant_coefficients_identical_columns():
    model = identity_model()
    snaps = build_snapshots(model, np.zeros((3, 1)))
    assert snaps.m == 3
    assert np.array_equal(snaps.snapshots[:, 0], snaps.snapshots[:, 1])


def test_snapshots_single_parameter(toy):
    snaps = build_snapshots(toy.model, np.array([[1.0, 1.0]]))
    assert snaps.snapshots.shape == (64, 1)


def test_snapshot_columns_recompute(toy, toy_reduction):
    snaps = toy_reduction
    for j in (0, 7, 23):
        assert np.array_equal(snaps.snapshots[:, j], full_solve(toy.model, snaps.params[j]))


def test_pod_rank_one_from_duplicated_snapshot():
    gen = rng_for(61)
    col = gen.random(6)
    snaps = SnapshotSet(params=np.zeros((2, 1)), snapshots=np.column_stack([col, col]))
    basis = pod_basis(snaps, np.eye(6), 1)
    # the single mode reproduces both columns exactly
    proj = basis @ (basis.T @ col)
    assert np.allclose(proj, col, atol=1e-12)


def test_pod_orthonormal_snapshots_reproduce_themselves():
    Q, _ = np.linalg.qr(rng_for(62).random((8, 3)))
    snaps = SnapshotSet(params=np.zeros((3, 1)), snapshots=Q)
    basis = pod_basis(snaps, np.eye(8), 3)
    proj = basis @ (basis.T @ Q)
    assert np.allclose(proj, Q, atol=1e-12)


def test_pod_matches_svd_left_vectors():
    S = rng_for(63).random((6, 4))
    snaps = SnapshotSet(params=np.zeros((4, 1)), snapshots=S)
    basis = pod_basis(snaps, np.eye(6), 3)
    U = np.linalg.svd(S, full_matrices=False)[0][:, :3]
    for j in range(3):
        sign = np.sign(U[:, j] @ basis[:, j])
        assert np.allclose(basis[:, j], sign * U[:, j], atol=1e-10)


def test_pod_rejects_rank_beyond_numerical(toy):
    # the two-parameter manifold cannot fill 30 directions
    gen = rng_for(64)
    params = toy.domain.lower + gen.random((30, 2)) * (toy.domain.upper - toy.domain.lower)
    snaps = build_snapshots(toy.model, params)
    with pytest.raises(RankDeficientError):
        pod_basis(snaps, toy.model.Omega, 25)


def test_pod_basis_is_omega_orthonormal(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 5)
    gram = basis.T @ toy.model.Omega @ basis
    assert np.allclose(gram, np.eye(5), atol=1e-10)


def test_pod_projection_error_beats_random_bases(toy, toy_reduction):
    Om = toy.model.Omega
    S = toy_reduction.snapshots
    n = 3

    def proj_error(basis):
        proj = basis @ (basis.T @ (Om @ S))
        diff = S - proj
        return float(np.sum(diff * (Om @ diff)))

    pod_err = proj_error(pod_basis(toy_reduction, Om, n))
    gen = rng_for(65)
    L = np.linalg.cholesky(Om)
    for _ in range(20):
        raw = gen.normal(size=(64, n))
        # orthonormalize in the Omega inner product via the Cholesky map
        q, _ = np.linalg.qr(L.T @ raw)
        rand_basis = sla.solve_triangular(L.T, q, lower=False)
        assert pod_err <= proj_error(rand_basis) + 1e-12


def test_pod_projection_error_nonincreasing_in_n(toy, toy_reduction):
    Om = toy.model.Omega
    S = toy_reduction.snapshots

    def err(n):
        basis = pod_basis(toy_reduction, Om, n)
        diff = S - basis @ (basis.T @ (Om @ S))
        return float(np.sum(diff * (Om @ diff)))

    errors = [err(n) for n in range(1, 7)]
    for a, b in zip(errors, errors[1:]):
        assert b <= a + 1e-12


def test_offline_reduce_checks_orthonormality(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 3)
    with pytest.raises(BadBasisError):
        offline_reduce(toy.model, 2.0 * basis)


def test_identity_model_reduces_to_identity_blocks():
    model = identity_model()
    basis = np.eye(4)[:, :2]
    red = offline_reduce(model, basis)
    assert np.allclose(red.Aq_red[0], np.eye(2), atol=1e-14)


def test_reduced_blocks_match_dense_triple_products(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 3)
    red = offline_reduce(toy.model, basis)
    for q in range(2):
        expected = basis.T @ toy.model.Aq[q] @ basis
        assert np.allclose(red.Aq_red[q], expected, atol=1e-12)
    assert np.allclose(red.psi_red, basis.T @ toy.model.psi, atol=1e-14)
    assert np.allclose(red.out_red, basis.T @ toy.model.out, atol=1e-14)


def full_basis_reduction(toy):
    # an Omega-orthonormal basis of the whole space, independent of any
    # snapshot set
    L = np.linalg.cholesky(toy.model.Omega)
    basis = sla.solve_triangular(L.T, np.eye(64), lower=False)
    return offline_reduce(toy.model, basis)


def test_full_basis_surrogate_is_exact(toy):
    red = full_basis_reduction(toy)
    gen = rng_for(66)
    for _ in range(5):
        X = toy.domain.lower + gen.random(2) * (toy.domain.upper - toy.domain.lower)
        ev = surrogate_output(red, X)
        fx = full_output(toy.model, X)
        assert ev.value == pytest.approx(fx, rel=1e-10, abs=1e-12)
        assert ev.bound <= 1e-8 * max(abs(ev.value), 1e-6)


def test_online_solve_single_mode_is_scalar_division(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 1)
    red = offline_reduce(toy.model, basis)
    X = np.array([2.0, 3.0])
    u = online_solve(red, X)
    k = X[0] * red.Aq_red[0][0, 0] + X[1] * red.Aq_red[1][0, 0]
    assert u[0] == pytest.approx(red.psi_red[0] / k, rel=1e-14)


def test_online_solve_matches_dense_projection(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 4)
    red = offline_reduce(toy.model, basis)
    X = np.array([0.7, 5.5])
    u = online_solve(red, X)
    K_dense = basis.T @ toy.model.assemble(X) @ basis
    expected = sla.solve(K_dense, basis.T @ toy.model.psi)
    assert np.allclose(u, expected, rtol=1e-10)


def test_certified_bound_holds_on_samples(toy, toy_reduction):
    gen = rng_for(67)
    for n in (2, 4):
        basis = pod_basis(toy_reduction, toy.model.Omega, n)
        red = offline_reduce(toy.model, basis)
        for _ in range(50):
            X = toy.domain.lower + gen.random(2) * (toy.domain.upper - toy.domain.lower)
            ev = surrogate_output(red, X)
            assert abs(full_output(toy.model, X) - ev.value) <= ev.bound


def test_bound_matches_direct_dual_norm_computation(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 2)
    red = offline_reduce(toy.model, basis)
    X = np.array([1.1, 2.2])
    ev = surrogate_output(red, X)
    u = online_solve(red, X)
    rho = toy.model.psi - toy.model.assemble(X) @ (basis @ u)
    dual = np.sqrt(rho @ sla.solve(toy.model.Omega, rho))
    out_dual = np.sqrt(toy.model.out @ sla.solve(toy.model.Omega, toy.model.out))
    expected = out_dual * dual / toy.model.coercivity_lb(X)
    assert ev.bound == pytest.approx(expected, rel=1e-9)


def test_residual_norm_zero_for_exact_solution(toy):
    red = full_basis_reduction(toy)
    X = np.array([3.0, 0.4])
    u = online_solve(red, X)
    assert residual_dual_norm(red, X, u) <= 1e-10


def test_residual_norm_of_zero_vector_is_load_norm(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 3)
    red = offline_reduce(toy.model, basis)
    X = np.array([1.0, 1.0])
    expected = np.sqrt(toy.model.psi @ sla.solve(toy.model.Omega, toy.model.psi))
    assert residual_dual_norm(red, X, np.zeros(3)) == pytest.approx(expected, rel=1e-12)


def test_fast_residual_norm_matches_reference(toy, toy_reduction):
    gen = rng_for(68)
    for _ in range(100):
        n = int(gen.integers(1, 7))
        basis = pod_basis(toy_reduction, toy.model.Omega, n)
        red = offline_reduce(toy.model, basis)
        X = toy.domain.lower + gen.random(2) * (toy.domain.upper - toy.domain.lower)
        u = online_solve(red, X)
        fast = residual_dual_norm(red, X, u)
        ref = residual_dual_norm_reference(toy.model, red, X, u)
        assert fast == pytest.approx(ref, rel=1e-8)


def test_min_theta_coercivity_is_valid_lower_bound(toy):
    bound = min_theta_coercivity(toy.model, np.array([1.0, 1.0]))
    gen = rng_for(69)
    for _ in range(20):
        X = toy.domain.lower + gen.random(2) * (toy.domain.upper - toy.domain.lower)
        alpha_true = sla.eigh(toy.model.assemble(X), toy.model.Omega,
                              eigvals_only=True, subset_by_index=[0, 0])[0]
        assert 0.0 < bound(X) <= alpha_true + 1e-12


def test_model_serialization_round_trip(toy):
    d = model_to_jsonable(toy.model)
    text = json.dumps(d, sort_keys=True)
    restored = model_from_jsonable(json.loads(text))
    X = np.array([0.8, 6.0])
    assert full_output(restored, X) == full_output(toy.model, X)
    assert json.dumps(model_to_jsonable(restored), sort_keys=True) == text


def test_reduced_serialization_round_trip(toy, toy_reduction):
    basis = pod_basis(toy_reduction, toy.model.Omega, 4)
    red = offline_reduce(toy.model, basis)
    d = reduced_to_jsonable(red)
    text = json.dumps(d, sort_keys=True)
    restored = reduced_from_jsonable(json.loads(text))
    X = np.array([2.5, 0.3])
    ev0 = surrogate_output(red, X)
    ev1 = surrogate_output(restored, X)
    assert ev0.value == ev1.value
    assert ev0.bound == ev1.bound
    assert json.dumps(reduced_to_jsonable(restored), sort_keys=True) == text
