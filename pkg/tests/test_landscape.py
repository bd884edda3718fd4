import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import subspace_angles

from dpplab.errors import DomainError
from dpplab.fd import central_derivative
from dpplab.kernel import block_kernel, k_to_l, l_to_k, pmf_table
from dpplab.landscape import (
    CLASSES,
    TridiagonalSpec,
    asymptotic_covariance,
    classify_critical_point,
    covariance_form,
    critical_diag_check,
    curvature_decay,
    decoupling_kernel,
    derivative_form,
    expected_loglik,
    expected_loglik_k,
    fourth_order_form,
    from_coords,
    gradient,
    hessian_operator,
    hessian_quadratic_form,
    sym_basis,
    to_coords,
    tridiagonal_det,
    tridiagonal_kernel,
)
from dpplab.structure import canonical_signs, null_space_basis, partitions

from conftest import L3, L4_BLOCKS, random_pd, random_sym

L4_IRRED = np.array([[1.0, 0.4, 0.3, 0.2],
                     [0.4, 1.1, 0.3, 0.25],
                     [0.3, 0.3, 0.9, 0.35],
                     [0.2, 0.25, 0.35, 1.2]])


def kl(p, q):
    return math.fsum(p * np.log(p / q))


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def test_gap_is_kl(rng):
    for _ in range(5):
        Ls, L = random_pd(rng, 3), random_pd(rng, 3)
        gap = expected_loglik(Ls, Ls) - expected_loglik(Ls, L)
        assert gap == pytest.approx(kl(pmf_table(Ls), pmf_table(L)), abs=1e-10)


def test_orbit_invariance():
    top = expected_loglik(L3, L3)
    for s in canonical_signs(3):
        assert expected_loglik(L3, L3 * np.outer(s, s)) == pytest.approx(top, abs=1e-13)


def test_global_max_random_points(rng):
    for _ in range(3):
        Ls = random_pd(rng, 3)
        top = expected_loglik(Ls, Ls)
        for _ in range(200):
            assert expected_loglik(Ls, random_pd(rng, 3, floor=0.05)) <= top + 1e-12


def test_scalar_grid_max():
    grid = np.linspace(0.2, 5.0, 2401)
    vals = [expected_loglik([[1.7]], [[g]]) for g in grid]
    assert grid[int(np.argmax(vals))] == pytest.approx(1.7, abs=2e-3)


def test_k_parametrization_agrees(rng):
    for _ in range(100):
        Ls = random_pd(rng, 3)
        K = l_to_k(random_pd(rng, 3, floor=0.1))
        assert expected_loglik_k(Ls, K) == pytest.approx(expected_loglik(Ls, k_to_l(K)), abs=1e-10)


def test_k_parametrization_scalar():
    ls, k = 0.8, 0.3
    p = ls / (1 + ls)
    direct = p * math.log(k) + (1 - p) * math.log(1 - k)
    assert expected_loglik_k([[ls]], [[k]]) == pytest.approx(direct, abs=1e-14)
    ks = np.linspace(0.01, 0.99, 981)
    best = ks[int(np.argmax([expected_loglik_k([[ls]], [[x]]) for x in ks]))]
    assert best == pytest.approx(p, abs=1e-3)


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def test_gradient_vanishes_at_truth():
    assert np.max(np.abs(gradient(L3, L3))) < 1e-10
    assert np.max(np.abs(gradient(L4_BLOCKS, L4_BLOCKS))) < 1e-10


def test_gradient_finite_difference(rng):
    Ls, L = random_pd(rng, 3), random_pd(rng, 3)
    G = gradient(Ls, L)
    h = 1e-5
    for i in range(3):
        for j in range(i, 3):
            E = np.zeros((3, 3))
            E[i, j] = E[j, i] = 1.0
            fd = (expected_loglik(Ls, L + h * E) - expected_loglik(Ls, L - h * E)) / (2 * h)
            assert np.sum(G * E) == pytest.approx(fd, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_derivative_ladder(k, rng):
    tol = 1e-6 if k <= 2 else 1e-4
    for _ in range(4):
        Ls, L = random_pd(rng, 3), random_pd(rng, 3)
        H = random_sym(rng, 3)
        H /= np.linalg.norm(H)
        exact = derivative_form(Ls, L, H, k)
        approx = central_derivative(lambda t: expected_loglik(Ls, L + t * H), k)
        assert abs(exact - approx) <= tol * abs(exact)


def test_derivative_first_order_is_gradient_pairing(rng):
    Ls, L = random_pd(rng, 3), random_pd(rng, 3)
    H = random_sym(rng, 3)
    assert derivative_form(Ls, L, H, 1) == pytest.approx(np.sum(gradient(Ls, L) * H), rel=1e-12)
    assert abs(derivative_form(Ls, Ls, H, 1)) < 1e-12


def test_second_order_is_minus_variance(rng):
    H = random_sym(rng, 3)
    assert derivative_form(L3, L3, H, 2) == pytest.approx(hessian_quadratic_form(L3, H), abs=1e-10)
    assert hessian_quadratic_form(L3, H) < 0
    assert hessian_quadratic_form(L3, np.zeros((3, 3))) == 0.0


def test_third_order_vanishes_on_null_space(rng):
    for H in null_space_basis(L4_BLOCKS):
        assert abs(derivative_form(L4_BLOCKS, L4_BLOCKS, H, 3)) < 1e-10
        assert abs(hessian_quadratic_form(L4_BLOCKS, H)) < 1e-10


def test_derivative_order_checked():
    with pytest.raises(DomainError):
        derivative_form(L3, L3, np.eye(3), 5)
    with pytest.raises(DomainError):
        derivative_form(L3, L3, np.triu(np.ones((3, 3))), 2)


# ---------------------------------------------------------------------------
# Hessian operator
# ---------------------------------------------------------------------------

def test_sym_basis_orthonormal():
    B = sym_basis(4)
    G = np.einsum("iab,jab->ij", B, B)
    np.testing.assert_allclose(G, np.eye(10), atol=1e-15)
    H = random_sym(np.random.default_rng(0), 4)
    np.testing.assert_allclose(from_coords(to_coords(H), 4), H, atol=1e-14)


def test_operator_matches_quadratic_form(rng):
    M_cov = hessian_operator(L3)
    M_pol = hessian_operator(L3, method="polarization")
    np.testing.assert_allclose(M_cov, M_pol, atol=1e-12)
    for _ in range(100):
        H = random_sym(rng, 3)
        x = to_coords(H)
        assert x @ M_cov @ x == pytest.approx(hessian_quadratic_form(L3, H), abs=1e-9)


def test_operator_away_from_truth_matches_second_derivative(rng):
    L = random_pd(rng, 3)
    M = hessian_operator(L3, L)
    for _ in range(10):
        H = random_sym(rng, 3)
        x = to_coords(H)
        assert x @ M @ x == pytest.approx(derivative_form(L3, L, H, 2), rel=1e-9, abs=1e-12)
    with pytest.raises(DomainError):
        hessian_operator(L3, L, method="covariance")
    with pytest.raises(DomainError):
        hessian_operator(L3, method="nonsense")


def test_irreducible_has_no_null_space():
    eig = np.linalg.eigvalsh(hessian_operator(L3))
    assert eig[-1] < -1e-8


@pytest.mark.parametrize("L, dim", [
    (L4_BLOCKS, 4),
    (np.diag([1.0, 2.0, 0.5]), 3),
])
def test_null_space_examples(L, dim):
    eig, vec = np.linalg.eigh(hessian_operator(L))
    assert eig[-1] <= 1e-8
    null = vec[:, np.abs(eig) < 1e-8]
    assert null.shape[1] == dim
    basis = np.array([to_coords(E) for E in null_space_basis(L)]).T
    assert np.max(subspace_angles(null, basis)) < 1e-6


# ---------------------------------------------------------------------------
# fourth order
# ---------------------------------------------------------------------------

def test_fourth_order_oracle_two_items():
    # only J = {1, 2} has a nonzero trace; Var = 2^2 (1/4)(3/4) = 3/4
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    L = np.eye(2)
    assert fourth_order_form(L, H) == pytest.approx(-2.25, abs=1e-14)
    assert derivative_form(L, L, H, 4) == pytest.approx(-2.25, abs=1e-14)


def test_fourth_order_zero_and_domain():
    assert fourth_order_form(L4_BLOCKS, np.zeros((4, 4))) == 0.0
    with pytest.raises(DomainError):
        fourth_order_form(L4_BLOCKS, np.eye(4))


@pytest.mark.parametrize("sizes", [(2, 2), (1, 3), (1, 1, 2), (2, 1, 1)])
def test_fourth_order_formulas_agree(sizes, rng):
    L = block_kernel(sizes, seed=sum(sizes) * 7 + len(sizes))
    basis = null_space_basis(L)
    for _ in range(5):
        H = sum(c * E for c, E in zip(rng.standard_normal(len(basis)), basis))
        four = fourth_order_form(L, H)
        assert four < -1e-12
        assert four == pytest.approx(derivative_form(L, L, H, 4), abs=1e-9)
        assert abs(derivative_form(L, L, H, 3)) < 1e-9


def test_fourth_order_two_thirds_constant_disagrees(rng):
    """The variance constant 2/3 does not reproduce the fourth derivative; 3 does."""
    L = block_kernel((2, 2), seed=1)
    basis = null_space_basis(L)
    H = sum(c * E for c, E in zip(rng.standard_normal(len(basis)), basis))
    four = derivative_form(L, L, H, 4)
    ratio = four / fourth_order_form(L, H)
    assert ratio == pytest.approx(1.0, abs=1e-9)
    assert abs(four - (2 / 3) / 3 * fourth_order_form(L, H)) > 1e-3 * abs(four)


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

def test_decoupling_examples():
    np.testing.assert_allclose(decoupling_kernel(L3, [(0, 1, 2)]), L3, atol=1e-12)
    K = l_to_k(L3)
    D = decoupling_kernel(L3, [(0,), (1,), (2,)])
    np.testing.assert_allclose(D, np.diag(np.diag(K) / (1 - np.diag(K))), atol=1e-12)
    with pytest.raises(DomainError):
        decoupling_kernel(L3, [(0,), (1,)])
    with pytest.raises(DomainError):
        decoupling_kernel(L3, [(0, 1), (1, 2)])


@pytest.mark.parametrize("part", partitions(4))
def test_every_decoupling_is_critical(part):
    L = decoupling_kernel(L4_IRRED, part)
    assert np.linalg.norm(gradient(L4_IRRED, L)) < 1e-8
    assert critical_diag_check(L4_IRRED, L) < 1e-10
    rep = classify_critical_point(L4_IRRED, L)
    expected = "global-max-orbit" if len(part) == 1 else "saddle"
    assert rep.classification == expected
    if expected == "saddle":
        assert rep.hessian_eigenvalues[-1] > rep.eig_tol
        assert rep.hessian_eigenvalues[0] < -rep.eig_tol


def test_classify_orbit_members():
    for s in canonical_signs(3):
        rep = classify_critical_point(L3, L3 * np.outer(s, s))
        assert rep.classification == "global-max-orbit"
        assert rep.classification in CLASSES


def test_classify_non_critical_is_inconclusive():
    rep = classify_critical_point(L3, 2 * L3)
    assert rep.gradient_norm > rep.grad_tol
    assert rep.classification == "inconclusive"
    assert set(rep.to_dict()) >= {"gradient_norm", "hessian_eigenvalues", "classification"}


def test_classify_reducible_truth_is_orbit_with_null_space():
    rep = classify_critical_point(L4_BLOCKS, L4_BLOCKS)
    assert rep.classification == "global-max-orbit"
    assert rep.null_dim == 4


def test_critical_diag_check_rejects_non_critical():
    assert critical_diag_check(L3, L3) == 0.0
    with pytest.raises(DomainError):
        critical_diag_check(L3, 2 * L3)


# ---------------------------------------------------------------------------
# tridiagonal family
# ---------------------------------------------------------------------------

def test_tridiagonal_determinants():
    assert tridiagonal_det(TridiagonalSpec(2.0, 0.5, 2)) == pytest.approx(3.75, abs=1e-15)
    # u_3 = a u_2 - b^2 u_1 = 7.5 - 0.5
    assert tridiagonal_det(TridiagonalSpec(2.0, 0.5, 3)) == pytest.approx(7.0, abs=1e-15)
    dets = [tridiagonal_det(TridiagonalSpec(2.0, 0.5, n)) for n in range(1, 7)]
    assert dets == pytest.approx([2.0, 3.75, 7.0, 13.0625, 24.375, 45.484375], abs=1e-12)
    for n in range(1, 8):
        L = tridiagonal_kernel(TridiagonalSpec(2.0, 0.5, n))
        assert np.linalg.det(L) == pytest.approx(tridiagonal_det(TridiagonalSpec(2.0, 0.5, n)), rel=1e-12)
    assert tridiagonal_det(TridiagonalSpec(2.0, 0.0, 5)) == 32.0


def test_tridiagonal_corner_inverse():
    for n in range(2, 8):
        spec = TridiagonalSpec(2.0, 0.5, n)
        inv = np.linalg.inv(tridiagonal_kernel(spec))
        assert inv[0, n - 1] == pytest.approx((-1) ** (n + 1) * 0.5 ** (n - 1) / tridiagonal_det(spec), rel=1e-10)


@pytest.mark.parametrize("a, b", [(2.0, 1.0), (1.0, 0.6), (-1.0, 0.1), (2.0, -1.2)])
def test_tridiagonal_domain(a, b):
    with pytest.raises(DomainError):
        TridiagonalSpec(a, b, 3)


def test_curvature_oracle_two_items():
    closed, numeric = curvature_decay(TridiagonalSpec(2.0, 0.5, 2))
    T = -2 * 0.5 / 3.75
    p = 3.75 / 8.75
    assert T == pytest.approx(-0.26667, abs=1e-5)
    assert p * (1 - p) * T ** 2 == pytest.approx(0.01742, abs=1e-5)
    assert closed == pytest.approx(p * (1 - p) * T ** 2 / 2, rel=1e-12)
    assert numeric <= closed + 1e-10


def test_curvature_closed_form_matches_direct_quadratic_form():
    for n in range(2, 7):
        spec = TridiagonalSpec(2.0, 0.5, n)
        H = np.zeros((n, n))
        H[0, n - 1] = H[n - 1, 0] = 1.0
        closed, numeric = curvature_decay(spec)
        direct = -hessian_quadratic_form(tridiagonal_kernel(spec), H) / np.sum(H * H)
        assert closed == pytest.approx(direct, rel=1e-9)
        assert numeric <= closed + 1e-10


def test_curvature_decoupled_limit():
    closed, numeric = curvature_decay(TridiagonalSpec(2.0, 0.0, 4))
    assert closed == 0.0
    assert abs(numeric) < 1e-12


# ---------------------------------------------------------------------------
# asymptotic covariance
# ---------------------------------------------------------------------------

def test_covariance_inverse_contract():
    V = asymptotic_covariance(L3)
    np.testing.assert_allclose(V @ -hessian_operator(L3), np.eye(6), atol=1e-8)
    with pytest.raises(DomainError):
        asymptotic_covariance(L4_BLOCKS)


def test_covariance_scalar():
    ls = 0.7
    V = asymptotic_covariance([[ls]])
    assert V[0, 0] == pytest.approx(ls * (1 + ls) ** 2, rel=1e-12)
    assert -1 / V[0, 0] == pytest.approx(derivative_form([[ls]], [[ls]], [[1.0]], 2), rel=1e-12)


def test_covariance_grows_along_corner():
    vals = []
    for n in range(3, 7):
        spec = TridiagonalSpec(2.0, 0.5, n)
        H = np.zeros((n, n))
        H[0, n - 1] = H[n - 1, 0] = 1 / math.sqrt(2)
        v = covariance_form(asymptotic_covariance(tridiagonal_kernel(spec)), H)
        closed, _ = curvature_decay(spec)
        assert v >= 1 / closed * (1 - 1e-9)
        vals.append(v)
    assert all(b > a for a, b in zip(vals, vals[1:]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_hessian_negative_semidefinite_random(seed):
    rng = np.random.default_rng(seed)
    sizes = [(3,), (1, 2), (1, 1, 1), (2, 2), (1, 3)][seed % 5]
    L = block_kernel(sizes, rng)
    eig = np.linalg.eigvalsh(hessian_operator(L))
    assert eig[-1] <= 1e-8 * max(1.0, abs(eig[0]))


def test_stencil_weights():
    from fractions import Fraction
    from dpplab.fd import central_weights
    assert central_weights(1, 4) == (Fraction(1, 12), Fraction(-2, 3), 0, Fraction(2, 3), Fraction(-1, 12))
    assert central_weights(4, 2) == (1, -4, 6, -4, 1)
    for k in range(1, 5):
        w = central_weights(k)
        assert sum(w) == 0
        assert central_derivative(np.exp, k, 0.05) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        central_weights(2, 3)
