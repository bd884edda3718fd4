"""Kernel-level DPP primitives.

A kernel ``L`` is a symmetric positive definite ``N x N`` numpy array and a
correlation kernel ``K = L (I + L)^{-1}`` is symmetric with spectrum in (0, 1).
Subsets of the ground set ``{0, ..., N-1}`` are encoded as integer bit masks
(bit ``i`` set iff item ``i`` belongs to the subset); probability tables are
indexed by mask.
"""

from __future__ import annotations

import math
from typing import Iterable, Union

import numpy as np

from .errors import CapacityError, DomainError, NumericalError

ENUMERATION_LIMIT = 20
MAX_GROUND = 63
PD_THRESHOLD = 1e-10
SYMMETRY_TOL = 1e-12

Subset = Union[int, Iterable[int]]


# ---------------------------------------------------------------------------
# subsets
# ---------------------------------------------------------------------------

def as_mask(J: Subset, n: int | None = None) -> int:
    """Coerce an integer mask or an iterable of 0-based items to a mask."""
    if isinstance(J, (int, np.integer)):
        mask = int(J)
        if mask < 0:
            raise DomainError(f"negative subset mask {mask}")
    else:
        mask = 0
        for i in J:
            i = int(i)
            if i < 0 or i >= MAX_GROUND:
                raise DomainError(f"item {i} outside the representable range")
            mask |= 1 << i
    if n is not None and mask >> n:
        raise DomainError(f"subset mask {mask:#x} has items outside [0, {n})")
    return mask


def items(mask: int) -> tuple[int, ...]:
    """Sorted 0-based items of a subset mask."""
    mask = int(mask)
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def membership(masks: np.ndarray, n: int) -> np.ndarray:
    """Boolean ``(len(masks), n)`` array, entry ``[m, i]`` true iff item i is in masks[m]."""
    masks = np.asarray(masks, dtype=np.uint64)
    bits = np.arange(n, dtype=np.uint64)
    return ((masks[:, None] >> bits[None, :]) & np.uint64(1)).astype(bool)


def check_enumerable(n: int) -> None:
    if n > ENUMERATION_LIMIT:
        raise CapacityError(
            f"N={n} exceeds the exhaustive enumeration limit of {ENUMERATION_LIMIT}"
        )


def all_masks(n: int) -> np.ndarray:
    check_enumerable(n)
    return np.arange(1 << n, dtype=np.int64)


# ---------------------------------------------------------------------------
# validation and construction
# ---------------------------------------------------------------------------

def _square_symmetric(A, name: str) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DomainError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if A.shape[0] > MAX_GROUND:
        raise CapacityError(f"{name} has N={A.shape[0]} > {MAX_GROUND}")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise DomainError(f"{name} is not symmetric")
    return (A + A.T) / 2


def check_kernel(L) -> np.ndarray:
    """Validate a kernel and return a symmetrized float copy.

    Raises
    ------
    DomainError
        If ``L`` is not square, not symmetric, or its smallest eigenvalue is
        not above ``PD_THRESHOLD``.
    """
    L = _square_symmetric(L, "kernel")
    lam_min = np.linalg.eigvalsh(L)[0]
    if lam_min <= PD_THRESHOLD:
        raise DomainError(f"kernel is not positive definite (smallest eigenvalue {lam_min:.3e})")
    return L


def check_correlation_kernel(K) -> np.ndarray:
    K = _square_symmetric(K, "correlation kernel")
    lam = np.linalg.eigvalsh(K)
    if lam[0] <= 0.0 or lam[-1] >= 1.0:
        raise DomainError(
            f"correlation kernel spectrum [{lam[0]:.3e}, {lam[-1]:.3e}] not inside (0, 1)"
        )
    return K


def random_kernel(n: int, seed=None, eps: float = 1e-3) -> np.ndarray:
    """Random full-support kernel ``A A^T + eps I`` with standard normal ``A``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    L = A @ A.T + eps * np.eye(n)
    return (L + L.T) / 2


def block_kernel(sizes: Iterable[int], seed=None, eps: float = 1e-3) -> np.ndarray:
    """Random block-diagonal kernel with consecutive blocks of the given sizes.

    Each block is an independent :func:`random_kernel`, so blocks are
    irreducible with probability one.
    """
    rng = np.random.default_rng(seed)
    sizes = list(sizes)
    n = sum(sizes)
    L = np.zeros((n, n))
    start = 0
    for s in sizes:
        L[start:start + s, start:start + s] = random_kernel(s, rng, eps)
        start += s
    return L


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------

def l_to_k(L) -> np.ndarray:
    """Correlation kernel ``K = L (I + L)^{-1}``."""
    L = check_kernel(L)
    n = L.shape[0]
    try:
        K = np.eye(n) - np.linalg.inv(np.eye(n) + L)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - impossible for PD input
        raise NumericalError("failed to invert I + L") from exc
    return (K + K.T) / 2


def k_to_l(K) -> np.ndarray:
    """Kernel ``L = K (I - K)^{-1}``; raises DomainError unless spec(K) is in (0, 1)."""
    K = check_correlation_kernel(K)
    n = K.shape[0]
    try:
        L = np.linalg.inv(np.eye(n) - K) - np.eye(n)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError("failed to invert I - K") from exc
    return (L + L.T) / 2


# ---------------------------------------------------------------------------
# principal minors and probabilities
# ---------------------------------------------------------------------------

def principal_minor(L, J: Subset) -> float:
    """``det(L_J)`` with ``det(L_emptyset) = 1``."""
    L = np.asarray(L, dtype=float)
    idx = list(items(as_mask(J, L.shape[0])))
    if not idx:
        return 1.0
    return float(np.linalg.det(L[np.ix_(idx, idx)]))


def logdet_i_plus(L) -> float:
    sign, logdet = np.linalg.slogdet(np.eye(L.shape[0]) + L)
    if sign <= 0:
        raise NumericalError("det(I + L) is not positive")
    return float(logdet)


def pmf(L, J: Subset) -> float:
    """``P[Z = J] = det(L_J) / det(I + L)``."""
    L = check_kernel(L)
    return principal_minor(L, J) / float(np.linalg.det(np.eye(L.shape[0]) + L))


def _groups_by_size(masks: np.ndarray, n: int):
    """Yield ``(size, positions, index_array)`` for the masks of each cardinality."""
    member = membership(masks, n)
    sizes = member.sum(axis=1)
    for k in range(1, n + 1):
        pos = np.flatnonzero(sizes == k)
        if pos.size == 0:
            continue
        idx = np.nonzero(member[pos])[1].reshape(pos.size, k)
        yield k, pos, idx


def minor_data(L: np.ndarray, masks, inverses: bool = True):
    """Log principal minors (and embedded inverses) for a batch of subsets.

    Parameters
    ----------
    L : ndarray
        Validated kernel.
    masks : array_like of int
        Subset masks.
    inverses : bool
        Also return the ``(len(masks), N, N)`` stack whose slice ``m`` holds
        ``L_J^{-1}`` on block ``J x J`` and zeros elsewhere.

    Returns
    -------
    logdets : ndarray
        ``log det(L_J)``, zero for the empty set.
    inv : ndarray, optional
    """
    n = L.shape[0]
    masks = np.asarray(masks, dtype=np.int64)
    logdets = np.zeros(masks.size)
    inv = np.zeros((masks.size, n, n)) if inverses else None
    for k, pos, idx in _groups_by_size(masks, n):
        sub = L[idx[:, :, None], idx[:, None, :]]
        sign, ld = np.linalg.slogdet(sub)
        if np.any(sign <= 0):
            raise NumericalError("non-positive principal minor in a validated kernel")
        logdets[pos] = ld
        if inverses:
            inv[pos[:, None, None], idx[:, :, None], idx[:, None, :]] = np.linalg.inv(sub)
    if inverses:
        return logdets, inv
    return logdets


def pmf_table(L) -> np.ndarray:
    """All ``2^N`` probabilities, indexed by subset mask."""
    L = check_kernel(L)
    n = L.shape[0]
    masks = all_masks(n)
    logdets = minor_data(L, masks, inverses=False)
    return np.exp(logdets - logdet_i_plus(L))


def inclusion_prob(L, J: Subset) -> float:
    """``P[J subset of Z] = det(K_J)``."""
    K = l_to_k(L)
    return principal_minor(K, J)


def pmf_via_k(K, J: Subset) -> float:
    """``P[Z = J] = |det(K - I_{complement of J})|``."""
    K = check_correlation_kernel(K)
    n = K.shape[0]
    inside = membership(np.array([as_mask(J, n)]), n)[0]
    return abs(float(np.linalg.det(K - np.diag((~inside).astype(float)))))


# ---------------------------------------------------------------------------
# weighted log-likelihood shared by the population and empirical objectives
# ---------------------------------------------------------------------------

def weighted_loglik(L: np.ndarray, masks, weights) -> float:
    """``sum_J w_J log det(L_J) - log det(I + L)`` over the given support."""
    logdets = minor_data(L, masks, inverses=False)
    return math.fsum(np.asarray(weights, dtype=float) * logdets) - logdet_i_plus(L)


def weighted_grad(L: np.ndarray, masks, weights) -> np.ndarray:
    """``sum_J w_J L_J^{-1} - (I + L)^{-1}`` with embedded inverses."""
    _, inv = minor_data(L, masks)
    G = np.tensordot(np.asarray(weights, dtype=float), inv, axes=1)
    G -= np.linalg.inv(np.eye(L.shape[0]) + L)
    return (G + G.T) / 2
