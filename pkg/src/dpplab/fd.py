"""Central finite-difference stencils for directional derivatives."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

ACCURACY = 8
DEFAULT_STEPS = {1: 1e-2, 2: 1e-2, 3: 2e-2, 4: 2e-2}


@lru_cache(maxsize=None)
def central_weights(k: int, accuracy: int = ACCURACY) -> tuple[Fraction, ...]:
    """Exact weights on offsets ``-m..m`` for the ``k``-th derivative, error ``O(h^accuracy)``.

    Fornberg's recursion evaluated in rational arithmetic.
    """
    if k < 1 or accuracy < 2 or accuracy % 2:
        raise ValueError("need k >= 1 and an even accuracy >= 2")
    m = (k - 1) // 2 + accuracy // 2
    xs = [Fraction(j) for j in range(-m, m + 1)]
    n = len(xs)
    c = [[[Fraction(0)] * n for _ in range(n)] for _ in range(k + 1)]
    c[0][0][0] = Fraction(1)
    c1 = Fraction(1)
    for i in range(1, n):
        c2 = Fraction(1)
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            for d in range(min(i, k) + 1):
                prev = c[d - 1][i - 1][j] if d else 0
                c[d][i][j] = (xs[i] * c[d][i - 1][j] - d * prev) / c3
        for d in range(min(i, k) + 1):
            prev = c[d - 1][i - 1][i - 1] if d else 0
            c[d][i][i] = c1 / c2 * (d * prev - xs[i - 1] * c[d][i - 1][i - 1])
        c1 = c2
    return tuple(c[k][n - 1])


def central_derivative(f: Callable[[float], float], k: int, h: float | None = None,
                       accuracy: int = ACCURACY) -> float:
    """``k``-th derivative of ``f`` at 0 from a central stencil with step ``h``.

    The stencil reaches ``t = (k - 1) // 2 + accuracy // 2`` steps each way, so
    ``f`` must be defined there.
    """
    h = DEFAULT_STEPS.get(k, 2e-2) if h is None else h
    w = central_weights(k, accuracy)
    m = len(w) // 2
    total = np.array([float(wj) * f(j * h) for j, wj in zip(range(-m, m + 1), w) if wj])
    return float(np.sum(total)) / h ** k
