"""Determinantal identities used as executable invariants.

All of them follow from ``det(I + L) = sum_J det(L_J)``.  Replacing ``L`` by
``L + tH`` and dividing by ``det(I + L)`` gives

    E_p[ exp(g_J(t)) ] = exp(g(t)),

with ``g_J(t) = log det(L_J + t H_J) - log det(L_J)`` and ``g`` the same for
``I + L``.  Matching powers of ``t`` relates the trace moments
``a_{J,k} = Tr((L_J^{-1} H_J)^k)`` and ``a_k = Tr(((I + L)^{-1} H)^k)``.  The
``t^3`` and ``t^4`` relations are

    d3 = 3/2 D(a1 a2) - 1/2 D(a1^3)
    d4 = 1/6 D(a1^4) - D(a1^2 a2) + 4/3 D(a1 a3) + 1/2 D(a2^2)

where ``dk = E[a_{J,k}] - a_k`` and ``D(f) = E[f(a_J)] - f(a)``.
:func:`alternative_residuals` evaluates a different set of
coefficients so that callers can compare it against the exact one.
"""

from __future__ import annotations

import math

import numpy as np

from .kernel import all_masks, check_kernel, minor_data, pmf_table
from .landscape import _trace_powers


def trace_moments(L, H) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(p, a_J, a)``: subset probabilities, ``(2^N, 4)`` subset moments, full moments."""
    L = check_kernel(L)
    H = np.asarray(H, dtype=float)
    n = L.shape[0]
    p = pmf_table(L)
    _, inv = minor_data(L, all_masks(n))
    aJ = _trace_powers(inv, H[None], 4)[0]
    a = _trace_powers(np.linalg.inv(np.eye(n) + L)[None], H[None], 4)[0, 0]
    return p, aJ, a


def _D(p, fJ, f) -> float:
    return math.fsum(p * fJ) - f


def identity_residuals(L, H) -> dict[str, float]:
    """Left minus right side of each identity; all should vanish to roundoff.

    Keys: ``normalization`` (probabilities sum to one), ``matrix_form``
    (max entry of ``sum_J p_J L_J^{-1} - (I + L)^{-1}``), ``first``,
    ``second``, ``third`` and ``fourth`` (the ``t``, ``t^2``, ``t^3`` and
    ``t^4`` relations).
    """
    L = check_kernel(L)
    n = L.shape[0]
    p, aJ, a = trace_moments(L, H)
    _, inv = minor_data(L, all_masks(n))
    M = np.tensordot(p, inv, axes=1) - np.linalg.inv(np.eye(n) + L)
    a1, a2, a3, a4 = aJ.T
    d = [_D(p, aJ[:, k], a[k]) for k in range(4)]
    D11 = _D(p, a1 ** 2, a[0] ** 2)
    D111 = _D(p, a1 ** 3, a[0] ** 3)
    D12 = _D(p, a1 * a2, a[0] * a[1])
    D1111 = _D(p, a1 ** 4, a[0] ** 4)
    D112 = _D(p, a1 ** 2 * a2, a[0] ** 2 * a[1])
    D13 = _D(p, a1 * a3, a[0] * a[2])
    D22 = _D(p, a2 ** 2, a[1] ** 2)
    return {
        "normalization": math.fsum(p) - 1.0,
        "matrix_form": float(np.max(np.abs(M))),
        "first": d[0],
        "second": d[1] - D11,
        "third": d[2] - (1.5 * D12 - 0.5 * D111),
        "fourth": d[3] - (D1111 / 6 - D112 + 4 * D13 / 3 + D22 / 2),
    }


def alternative_residuals(L, H) -> dict[str, float]:
    """Residuals of an alternative third/fourth-order coefficient set.

    ``third``:  d3 = -1/3 D(a1^3) + 2/3 d2 + 1/3 D(a1 a2)
    ``fourth``: d4 = 1/9 D(a1^4) - 4/9 D(a1^2 a2) - 2/9 D(a1 a2)
                     + 5/9 D(a1 a3) + 1/9 D(a2^2) + 4/9 d3
    These coincide with the exact relations only in special cases (for
    instance when every ``a_{J,1}`` and ``a_1`` vanish and ``d2 = 0``); on
    generic inputs they do not hold.
    """
    p, aJ, a = trace_moments(L, H)
    a1, a2, a3, _ = aJ.T
    d = [_D(p, aJ[:, k], a[k]) for k in range(4)]
    D111 = _D(p, a1 ** 3, a[0] ** 3)
    D12 = _D(p, a1 * a2, a[0] * a[1])
    D1111 = _D(p, a1 ** 4, a[0] ** 4)
    D112 = _D(p, a1 ** 2 * a2, a[0] ** 2 * a[1])
    D13 = _D(p, a1 * a3, a[0] * a[2])
    D22 = _D(p, a2 ** 2, a[1] ** 2)
    return {
        "third": d[2] - (-D111 / 3 + 2 * d[1] / 3 + D12 / 3),
        "fourth": d[3] - (D1111 / 9 - 4 * D112 / 9 - 2 * D12 / 9
                          + 5 * D13 / 9 + D22 / 9 + 4 * d[2] / 9),
    }
