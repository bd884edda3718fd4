"""Identifiability and block structure of kernels.

Covers the determinantal graph, its connected components (the blocks), the
sign orbit ``{D L D}``, the orbit-aware loss and the directions along which
the Hessian of the expected log-likelihood vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DomainError
from .kernel import check_enumerable, check_kernel

Partition = list  # list of sorted tuples of 0-based items, ordered by minimum element

ZERO_TOL = 1e-12
ORBIT_TOL = 1e-12
_LOSS_CHUNK = 1 << 12


@dataclass(frozen=True)
class DeterminantalGraph:
    n: int
    edges: frozenset  # of (i, j) with i < j

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A


def determinantal_graph(L, zero_tol: float = ZERO_TOL) -> DeterminantalGraph:
    L = np.asarray(L, dtype=float)
    if zero_tol < 0:
        raise DomainError("zero_tol must be non-negative")
    n = L.shape[0]
    ii, jj = np.nonzero(np.triu(np.abs(L) > zero_tol, k=1))
    return DeterminantalGraph(n, frozenset(zip(ii.tolist(), jj.tolist())))


def blocks(L, zero_tol: float = ZERO_TOL) -> Partition:
    """Connected components of the determinantal graph, canonically ordered."""
    g = determinantal_graph(L, zero_tol)
    _, labels = connected_components(g.adjacency(), directed=False)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return sorted((tuple(v) for v in groups.values()), key=lambda b: b[0])


def is_irreducible(L, zero_tol: float = ZERO_TOL) -> bool:
    return len(blocks(L, zero_tol)) == 1


def degree_of_identifiability(L, zero_tol: float = ZERO_TOL) -> int:
    L = check_kernel(L)
    return 2 ** (L.shape[0] - len(blocks(L, zero_tol)))


def canonical_signs(n: int) -> np.ndarray:
    """All ``2^(n-1)`` sign vectors with first entry +1, as a ``(2^(n-1), n)`` array."""
    return _sign_chunk(n, 0, 1 << (n - 1))


def block_signs(part: Partition, n: int) -> np.ndarray:
    """``Diag(2 chi(J) - 1)`` for each block ``J``, as rows of signs."""
    out = -np.ones((len(part), n))
    for a, blk in enumerate(part):
        out[a, list(blk)] = 1.0
    return out


def sign_orbit(L, tol: float = ORBIT_TOL) -> list[np.ndarray]:
    """Distinct matrices ``D L D`` over all sign matrices ``D``."""
    L = check_kernel(L)
    n = L.shape[0]
    check_enumerable(n)
    orbit: list[np.ndarray] = []
    for s in canonical_signs(n):
        M = L * np.outer(s, s)
        if not any(np.max(np.abs(M - O)) <= tol for O in orbit):
            orbit.append(M)
    return orbit


def loss(L_hat, L_star, where: np.ndarray | None = None) -> float:
    """Orbit-aware Frobenius loss ``min_D ||L_hat - D L_star D||_F``.

    The minimum is exact: every canonical sign matrix is tried.  ``where`` is an
    optional boolean ``N x N`` mask restricting the norm to selected entries,
    which gives the within-block and cross-block losses.
    """
    L_hat = np.asarray(L_hat, dtype=float)
    L_star = np.asarray(L_star, dtype=float)
    if L_hat.shape != L_star.shape:
        raise DomainError("loss needs matrices of the same size")
    n = L_star.shape[0]
    check_enumerable(n)
    W = np.ones((n, n), dtype=bool) if where is None else np.asarray(where, dtype=bool)
    rows, cols = np.nonzero(W)
    if rows.size == 0:
        return 0.0
    a = L_hat[rows, cols]
    b = L_star[rows, cols]
    best = np.inf
    n_signs = 1 << (n - 1)
    for start in range(0, n_signs, _LOSS_CHUNK):
        s = _sign_chunk(n, start, min(start + _LOSS_CHUNK, n_signs))
        d = a[None, :] - s[:, rows] * s[:, cols] * b[None, :]
        best = min(best, float(np.min(np.einsum("ij,ij->i", d, d))))
    return float(np.sqrt(max(best, 0.0)))


def _sign_chunk(n: int, start: int, stop: int) -> np.ndarray:
    m = np.arange(start, stop, dtype=np.int64)
    bits = (m[:, None] >> np.arange(n - 1)[None, :]) & 1
    signs = np.ones((m.size, n))
    signs[:, 1:] = 1 - 2 * bits
    return signs


def block_masks(part: Partition, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean entry masks for the within-block and cross-block parts of a matrix."""
    label = np.empty(n, dtype=int)
    for a, blk in enumerate(part):
        label[list(blk)] = a
    within = label[:, None] == label[None, :]
    return within, ~within


def _same_block(L_star) -> np.ndarray:
    within, _ = block_masks(blocks(L_star), np.asarray(L_star).shape[0])
    return within


def null_space_basis(L_star) -> list[np.ndarray]:
    """``e_ij + e_ji`` for every pair ``i < j`` lying in different blocks."""
    L_star = check_kernel(L_star)
    n = L_star.shape[0]
    within = _same_block(L_star)
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            if not within[i, j]:
                E = np.zeros((n, n))
                E[i, j] = E[j, i] = 1.0
                basis.append(E)
    return basis


def in_null_space(H, L_star, tol: float = ZERO_TOL) -> bool:
    H = np.asarray(H, dtype=float)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    return bool(np.all(np.abs(H[_same_block(L_star)]) <= tol * scale))


def decompose_null_direction(H, L_star) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split ``H`` in the null space into sign-antisymmetric pieces.

    Returns a list of ``(piece, signs)`` where ``signs`` is the diagonal of a
    canonical sign matrix ``D`` with ``D piece D = -piece`` and
    ``D L_star D = L_star``.  The pieces sum to ``H``; all-zero pieces are
    omitted.
    """
    L_star = check_kernel(L_star)
    H = np.asarray(H, dtype=float)
    if H.shape != L_star.shape or np.max(np.abs(H - H.T), initial=0.0) > 0:
        raise DomainError("direction must be a symmetric matrix of the kernel's size")
    if not in_null_space(H, L_star):
        raise DomainError("direction is not in the Hessian null space of L_star")
    n = L_star.shape[0]
    part = blocks(L_star)
    chis = [np.isin(np.arange(n), blk).astype(float) for blk in part]
    pieces = []
    for a in range(len(part)):
        for b in range(a + 1, len(part)):
            P = chis[a][:, None] * H * chis[b][None, :]
            P = P + P.T
            if not np.any(P):
                continue
            s = 2 * chis[a] - 1
            if s[0] < 0:
                s = -s
            pieces.append((P, s))
    return pieces


def partitions(n: int) -> list[Partition]:
    """Every set partition of ``{0..n-1}``, in lexicographic restricted-growth order."""
    out = []
    rgs = [0] * n

    def rec(i: int, top: int) -> None:
        if i == n:
            groups: dict[int, list[int]] = {}
            for item, g in enumerate(rgs):
                groups.setdefault(g, []).append(item)
            out.append([tuple(groups[g]) for g in sorted(groups)])
            return
        for g in range(top + 2):
            rgs[i] = g
            rec(i + 1, max(top, g))

    if n >= 1:
        rgs[0] = 0
        rec(1, 0)
    return out
