"""The expected log-likelihood of a DPP and its derivatives.

``Phi(L) = sum_J p_J(L*) log det(L_J) - log det(I + L)`` is evaluated exactly by
enumerating all ``2^N`` subsets.  Bilinear forms on symmetric matrices are
represented in the orthonormal basis returned by :func:`sym_basis`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DomainError, NumericalError
from .kernel import (
    all_masks,
    check_correlation_kernel,
    check_kernel,
    k_to_l,
    l_to_k,
    logdet_i_plus,
    membership,
    minor_data,
    pmf_table,
    weighted_grad,
    weighted_loglik,
)
from .structure import block_masks, blocks, in_null_space, loss

CLASSES = ("global-max-orbit", "saddle", "local-max", "degenerate-max", "inconclusive")
_CHUNK = 64


# ---------------------------------------------------------------------------
# symmetric-matrix coordinates
# ---------------------------------------------------------------------------

def sym_basis(n: int) -> np.ndarray:
    """Orthonormal basis of symmetric ``n x n`` matrices, shape ``(n(n+1)/2, n, n)``.

    Diagonal units ``E_ii`` come first, then ``(e_ij + e_ji)/sqrt(2)`` for
    ``i < j`` in lexicographic order.
    """
    dim = n * (n + 1) // 2
    B = np.zeros((dim, n, n))
    for i in range(n):
        B[i, i, i] = 1.0
    r = n
    c = 1 / math.sqrt(2)
    for i in range(n):
        for j in range(i + 1, n):
            B[r, i, j] = B[r, j, i] = c
            r += 1
    return B


def to_coords(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    return np.einsum("dab,ab->d", sym_basis(H.shape[0]), H)


def from_coords(x: np.ndarray, n: int) -> np.ndarray:
    return np.einsum("d,dab->ab", np.asarray(x, dtype=float), sym_basis(n))


def _check_direction(H, n: int) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.shape != (n, n):
        raise DomainError(f"direction must be {n} x {n}")
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(H)))):
        raise DomainError("direction must be symmetric")
    return (H + H.T) / 2


# ---------------------------------------------------------------------------
# per-subset tables
# ---------------------------------------------------------------------------

@dataclass
class _Tables:
    """Target probabilities together with subset data at an evaluation kernel."""

    p: np.ndarray
    logdets: np.ndarray
    inv: np.ndarray
    resolvent: np.ndarray  # (I + L)^{-1}
    L: np.ndarray = field(repr=False)


def _tables(L_star, L=None) -> _Tables:
    L_star = check_kernel(L_star)
    L = L_star if L is None else check_kernel(L)
    if L.shape != L_star.shape:
        raise DomainError("L and L_star differ in size")
    n = L.shape[0]
    p = pmf_table(L_star)
    logdets, inv = minor_data(L, all_masks(n))
    return _Tables(p, logdets, inv, np.linalg.inv(np.eye(n) + L), L)


def _trace_powers(inv: np.ndarray, Hs: np.ndarray, kmax: int) -> np.ndarray:
    """``Tr((inv_J H)^k)`` for every subset ``J``, direction ``H`` and ``k <= kmax``.

    ``inv`` is ``(S, n, n)``, ``Hs`` is ``(m, n, n)``; returns ``(m, S, kmax)``.
    """
    m, S = Hs.shape[0], inv.shape[0]
    out = np.empty((m, S, kmax))
    for c in range(0, m, _CHUNK):
        A = np.einsum("sab,mbc->msac", inv, Hs[c:c + _CHUNK])
        out[c:c + _CHUNK, :, 0] = np.einsum("msaa->ms", A)
        if kmax >= 2:
            A2 = A @ A
            out[c:c + _CHUNK, :, 1] = np.einsum("msaa->ms", A2)
        if kmax >= 3:
            out[c:c + _CHUNK, :, 2] = np.einsum("msab,msba->ms", A2, A)
        if kmax >= 4:
            out[c:c + _CHUNK, :, 3] = np.einsum("msab,msba->ms", A2, A2)
    return out


def _weighted_mean(p: np.ndarray, values: np.ndarray) -> float:
    return math.fsum(p * values)


# ---------------------------------------------------------------------------
# values and derivatives
# ---------------------------------------------------------------------------

def expected_loglik(L_star, L) -> float:
    """``Phi_{L*}(L)``; at most ``Phi_{L*}(L*)`` with equality on the sign orbit."""
    L_star = check_kernel(L_star)
    L = check_kernel(L)
    return weighted_loglik(L, all_masks(L.shape[0]), pmf_table(L_star))


def expected_loglik_k(L_star, K) -> float:
    """The same objective in the correlation-kernel parametrization."""
    L_star = check_kernel(L_star)
    K = check_correlation_kernel(K)
    n = K.shape[0]
    masks = all_masks(n)
    outside = ~membership(masks, n)
    mats = K[None, :, :] - outside[:, :, None] * np.eye(n)[None, :, :]
    _, logabs = np.linalg.slogdet(mats)
    return math.fsum(pmf_table(L_star) * logabs)


def gradient(L_star, L) -> np.ndarray:
    """``sum_J p*_J L_J^{-1} - (I + L)^{-1}`` (inverses embedded in N x N)."""
    L_star = check_kernel(L_star)
    L = check_kernel(L)
    return weighted_grad(L, all_masks(L.shape[0]), pmf_table(L_star))


def derivative_form(L_star, L, H, k: int) -> float:
    """``d^k Phi(L)(H, ..., H)`` by the trace formula with ``p*`` held fixed."""
    if k not in (1, 2, 3, 4):
        raise DomainError("derivative order must be 1, 2, 3 or 4")
    t = _tables(L_star, L)
    n = t.L.shape[0]
    H = _check_direction(H, n)
    tr = _trace_powers(t.inv, H[None], k)[0, :, k - 1]
    full = _trace_powers(t.resolvent[None], H[None], k)[0, 0, k - 1]
    return (-1) ** (k - 1) * math.factorial(k - 1) * (_weighted_mean(t.p, tr) - full)


def hessian_quadratic_form(L_star, H) -> float:
    """``-Var[Tr((L*_Z)^{-1} H_Z)]`` with ``Z ~ DPP(L*)``, computed exactly."""
    t = _tables(L_star)
    H = _check_direction(H, t.L.shape[0])
    tr = _trace_powers(t.inv, H[None], 1)[0, :, 0]
    mean = _weighted_mean(t.p, tr)
    return -_weighted_mean(t.p, (tr - mean) ** 2)


def _variance_forms(t: _Tables, Hs: np.ndarray) -> np.ndarray:
    tr = _trace_powers(t.inv, Hs, 1)[:, :, 0]
    mean = tr @ t.p
    return -(((tr - mean[:, None]) ** 2) @ t.p)


def _second_forms(t: _Tables, Hs: np.ndarray) -> np.ndarray:
    tr = _trace_powers(t.inv, Hs, 2)[:, :, 1]
    full = _trace_powers(t.resolvent[None], Hs, 2)[:, 0, 1]
    return -(tr @ t.p - full)


def _polarize(q, basis: np.ndarray) -> np.ndarray:
    dim = basis.shape[0]
    iu, ju = np.triu_indices(dim, k=1)
    diag = q(basis)
    pair = q(basis[iu] + basis[ju]) if iu.size else np.zeros(0)
    M = np.diag(diag)
    M[iu, ju] = M[ju, iu] = (pair - diag[iu] - diag[ju]) / 2
    return M


def hessian_operator(L_star, L=None, method: str | None = None) -> np.ndarray:
    """Matrix of ``d^2 Phi_{L*}`` in the :func:`sym_basis` coordinates.

    Parameters
    ----------
    L_star : ndarray
        Target kernel.
    L : ndarray, optional
        Evaluation point; defaults to ``L_star``.
    method : {"covariance", "polarization"}, optional
        ``"covariance"`` (default at ``L_star``) forms minus the covariance of
        the score traces.  ``"polarization"`` recovers the bilinear form from
        quadratic-form evaluations; away from ``L_star`` it is the only method.
    """
    at_star = L is None
    t = _tables(L_star, L)
    n = t.L.shape[0]
    basis = sym_basis(n)
    method = method or ("covariance" if at_star else "polarization")
    if method == "covariance":
        if not at_star:
            raise DomainError("the covariance form is only valid at L = L_star")
        T = _trace_powers(t.inv, basis, 1)[:, :, 0].T  # (S, dim)
        Tc = T - t.p @ T
        M = -(Tc.T * t.p) @ Tc
    elif method == "polarization":
        q = (lambda Hs: _variance_forms(t, Hs)) if at_star else (lambda Hs: _second_forms(t, Hs))
        M = _polarize(q, basis)
    else:
        raise DomainError(f"unknown method {method!r}")
    return (M + M.T) / 2


def fourth_order_form(L_star, H) -> float:
    """Fourth derivative at ``L*`` along a null direction, via a variance.

    For ``H`` in the Hessian null space this equals
    ``-3 Var[Tr(((L*_Z)^{-1} H_Z)^2)]``; it is negative unless ``H = 0``.
    """
    t = _tables(L_star)
    H = _check_direction(H, t.L.shape[0])
    if not in_null_space(H, t.L):
        raise DomainError("direction is not in the Hessian null space of L_star")
    tr2 = _trace_powers(t.inv, H[None], 2)[0, :, 1]
    mean = _weighted_mean(t.p, tr2)
    return -3.0 * _weighted_mean(t.p, (tr2 - mean) ** 2)


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

def _check_partition(part: Iterable[Iterable[int]], n: int) -> list[tuple[int, ...]]:
    part = [tuple(sorted(int(i) for i in blk)) for blk in part]
    if any(len(b) == 0 for b in part):
        raise DomainError("partition blocks must be non-empty")
    flat = sorted(i for b in part for i in b)
    if flat != list(range(n)):
        raise DomainError(f"blocks do not partition {{0..{n - 1}}}")
    return sorted(part, key=lambda b: b[0])


def decoupling_kernel(L_star, part) -> np.ndarray:
    """Kernel of the partial decoupling of ``DPP(L*)`` along a partition.

    Cross-block entries of ``K* = L*(I + L*)^{-1}`` are zeroed and the result is
    mapped back to an ``L``-kernel.
    """
    L_star = check_kernel(L_star)
    n = L_star.shape[0]
    part = _check_partition(part, n)
    within, _ = block_masks(part, n)
    return k_to_l(np.where(within, l_to_k(L_star), 0.0))


def default_grad_tol(L) -> float:
    return 1e-7 * (1.0 + float(np.linalg.norm(L)))


@dataclass
class CriticalPointReport:
    kernel: np.ndarray
    gradient_norm: float
    hessian_eigenvalues: np.ndarray
    classification: str
    grad_tol: float
    eig_tol: float
    null_dim: int

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.tolist(),
            "gradient_norm": self.gradient_norm,
            "hessian_eigenvalues": self.hessian_eigenvalues.tolist(),
            "classification": self.classification,
            "grad_tol": self.grad_tol,
            "eig_tol": self.eig_tol,
            "null_dim": self.null_dim,
        }


def classify_critical_point(L_star, L, g_tol: float | None = None,
                            e_tol: float | None = None) -> CriticalPointReport:
    """Classify ``L`` from the gradient norm and the Hessian spectrum of ``Phi_{L*}`` at ``L``.

    Default tolerances are scale-aware: ``g_tol = 1e-7 (1 + ||L||_F)`` and
    ``e_tol = 1e-8 max|eig|``.  ``L`` is placed in the global-max orbit when
    its loss to ``L*`` is below ``g_tol`` plus, where the Hessian is negative
    definite, ten times the Newton-step bound ``||grad|| / min|eig|``.  A
    critical point with negative definite Hessian outside the orbit is a
    ``local-max``.
    """
    L_star = check_kernel(L_star)
    L = check_kernel(L)
    gnorm = float(np.linalg.norm(gradient(L_star, L)))
    eig = np.linalg.eigvalsh(hessian_operator(L_star, L))
    g_tol = default_grad_tol(L) if g_tol is None else g_tol
    e_tol = 1e-8 * float(np.max(np.abs(eig))) if e_tol is None else e_tol
    null_dim = int(np.sum(np.abs(eig) <= e_tol))
    critical = gnorm < g_tol
    orbit_tol = g_tol
    if eig[-1] < -e_tol:
        orbit_tol += 10 * gnorm / abs(eig[-1])
    if loss(L, L_star) < orbit_tol:
        label = "global-max-orbit"
    elif critical and eig[-1] > e_tol and eig[0] < -e_tol:
        label = "saddle"
    elif critical and eig[-1] < -e_tol:
        label = "local-max"
    elif critical and eig[-1] < e_tol and null_dim > 0:
        label = "degenerate-max"
    else:
        label = "inconclusive"
    return CriticalPointReport(L, gnorm, eig, label, g_tol, e_tol, null_dim)


def critical_diag_check(L_star, L, g_tol: float | None = None) -> float:
    """``max_i |K_ii - K*_ii|`` at a critical point ``L`` of ``Phi_{L*}``."""
    L_star = check_kernel(L_star)
    L = check_kernel(L)
    g_tol = default_grad_tol(L) if g_tol is None else g_tol
    gnorm = float(np.linalg.norm(gradient(L_star, L)))
    if gnorm >= g_tol:
        raise DomainError(f"L is not critical: gradient norm {gnorm:.3e} >= {g_tol:.3e}")
    return float(np.max(np.abs(np.diag(l_to_k(L)) - np.diag(l_to_k(L_star)))))


# ---------------------------------------------------------------------------
# tridiagonal kernels and curvature decay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TridiagonalSpec:
    a: float
    b: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be positive")
        if not (self.a > 0 and self.a ** 2 > 4 * self.b ** 2):
            raise DomainError(f"need a > 0 and a^2 > 4 b^2, got a={self.a}, b={self.b}")


def tridiagonal_det(spec: TridiagonalSpec) -> float:
    """``det`` of the tridiagonal kernel by ``u_k = a u_{k-1} - b^2 u_{k-2}``."""
    u_prev, u = 1.0, spec.a
    for _ in range(spec.n - 1):
        u_prev, u = u, spec.a * u - spec.b ** 2 * u_prev
    return u


def tridiagonal_kernel(spec: TridiagonalSpec) -> np.ndarray:
    n = spec.n
    L = spec.a * np.eye(n) + spec.b * (np.eye(n, k=1) + np.eye(n, k=-1))
    L = check_kernel(L)
    det = float(np.linalg.det(L))
    if not math.isclose(det, tridiagonal_det(spec), rel_tol=1e-10):
        raise NumericalError(f"determinant {det} disagrees with recursion {tridiagonal_det(spec)}")
    return L


def curvature_decay(spec: TridiagonalSpec) -> tuple[float, float]:
    """Curvature along the corner direction versus the smallest curvature overall.

    Returns ``(closed_form, numeric_min)`` where ``closed_form`` is
    ``-d^2 Phi(L*)(H, H) / ||H||_F^2`` for ``H = e_1N + e_N1``.  Only the full
    set has a nonzero score trace along ``H``, so the variance collapses to
    ``p (1 - p) T^2`` with ``T = 2 (-1)^(N+1) b^(N-1) / det L*`` and
    ``p = P[Z = [N]]``.  ``numeric_min`` is the smallest eigenvalue of minus the
    Hessian operator.
    """
    if spec.n < 2:
        raise DomainError("curvature decay needs n >= 2")
    L = tridiagonal_kernel(spec)
    n = spec.n
    u_n = tridiagonal_det(spec)
    T = 2 * (-1) ** (n + 1) * spec.b ** (n - 1) / u_n
    p = math.exp(math.log(u_n) - logdet_i_plus(L))
    closed = p * (1 - p) * T ** 2 / 2
    numeric_min = float(np.linalg.eigvalsh(-hessian_operator(L))[0])
    return closed, numeric_min


# ---------------------------------------------------------------------------
# asymptotic covariance
# ---------------------------------------------------------------------------

def asymptotic_covariance(L_star) -> np.ndarray:
    """Inverse of minus the Hessian operator at an irreducible ``L*``."""
    L_star = check_kernel(L_star)
    if len(blocks(L_star)) > 1:
        raise DomainError("L_star is reducible: the Hessian is singular")
    return np.linalg.inv(-hessian_operator(L_star))


def covariance_form(V: np.ndarray, H) -> float:
    """``V[H, H]`` for an operator expressed in :func:`sym_basis` coordinates."""
    x = to_coords(H)
    return float(x @ V @ x)
