"""Maximum likelihood estimation of a DPP kernel from observed subsets.

The log-likelihood is maximized over ``L = expm(S)`` with ``S`` an unconstrained
symmetric matrix, so every iterate is positive definite.  The ascent uses a
BFGS metric on the coordinates of ``S`` with an Armijo backtracking line
search; convergence is declared only when the gradient with respect to ``L``
falls below ``grad_tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, NumericalError
from .kernel import (
    ENUMERATION_LIMIT,
    PD_THRESHOLD,
    all_masks,
    check_kernel,
    membership,
    pmf_table,
    weighted_grad,
    weighted_loglik,
)
from .landscape import from_coords, to_coords
from .sampler import SampleSet

ARMIJO = 1e-4
MAX_HALVINGS = 60
MAX_STEP = 4.0
_LOG_PD = math.log(PD_THRESHOLD)


@dataclass(frozen=True)
class EmpiricalCounts:
    """Observed subsets and their frequencies.

    ``counts`` and ``n_samples`` are ``None`` for population weights built by
    :meth:`population`; otherwise ``freqs == counts / n_samples``.
    """

    n_items: int
    masks: np.ndarray
    freqs: np.ndarray
    counts: np.ndarray | None = None
    n_samples: int | None = None

    @classmethod
    def population(cls, L_star) -> "EmpiricalCounts":
        """Weights equal to the exact probability table of ``L_star``."""
        L_star = check_kernel(L_star)
        n = L_star.shape[0]
        return cls(n, all_masks(n), pmf_table(L_star))

    def fractions(self) -> dict[int, Fraction]:
        if self.counts is None:
            raise DomainError("population weights have no exact rational form")
        return {int(m): Fraction(int(c), self.n_samples) for m, c in zip(self.masks, self.counts)}


def empirical_counts(samples: SampleSet) -> EmpiricalCounts:
    if len(samples) == 0:
        raise DomainError("cannot build empirical frequencies from an empty sample")
    masks, counts = np.unique(samples.draws, return_counts=True)
    n = len(samples)
    return EmpiricalCounts(samples.n_items, masks.astype(np.int64), counts / n, counts, n)


def _check_fit_size(C: EmpiricalCounts) -> None:
    if C.n_items > ENUMERATION_LIMIT:
        raise DomainError(f"N={C.n_items} is above the enumeration limit")


def empirical_loglik(C: EmpiricalCounts, L) -> float:
    """Scaled log-likelihood; unobserved subsets contribute nothing."""
    return weighted_loglik(check_kernel(L), C.masks, C.freqs)


def empirical_grad(C: EmpiricalCounts, L) -> np.ndarray:
    return weighted_grad(check_kernel(L), C.masks, C.freqs)


def moment_diag(C: EmpiricalCounts) -> np.ndarray:
    """Per-item inclusion frequency, the moment estimator of ``diag(K)``.

    With sample counts available this is ``count_j / n`` from integer counts,
    hence exactly the observed frequency.
    """
    member = membership(C.masks, C.n_items).T
    if C.counts is not None:
        return (member.astype(np.int64) @ C.counts) / C.n_samples
    return member.astype(float) @ C.freqs


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    restarts: int = 4
    max_iters: int = 5000
    grad_tol: float = 1e-7
    init_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise DomainError("restarts must be at least 1")
        if self.grad_tol <= 0:
            raise DomainError("grad_tol must be positive")
        if self.max_iters < 0:
            raise DomainError("max_iters must be non-negative")


@dataclass
class RestartResult:
    kernel: np.ndarray
    loglik: float
    grad_norm: float
    converged: bool
    iters: int
    status: str
    history: list[float] = field(repr=False, default_factory=list)


@dataclass
class FitResult:
    kernel: np.ndarray
    loglik: float
    grad_norm: float
    converged: bool
    condition_number: float
    best_restart: int
    restarts: list[RestartResult] = field(repr=False)

    @property
    def restart_trace(self) -> list[tuple[float, float]]:
        return [(r.loglik, r.grad_norm) for r in self.restarts]

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.tolist(),
            "loglik": self.loglik,
            "grad_norm": self.grad_norm,
            "converged": self.converged,
            "condition_number": self.condition_number,
            "best_restart": self.best_restart,
            "restart_trace": [
                {"loglik": r.loglik, "grad_norm": r.grad_norm, "converged": r.converged,
                 "iters": r.iters, "status": r.status}
                for r in self.restarts
            ],
        }


class _Objective:
    """``S -> loglik(expm(S))`` together with its gradient in S-coordinates."""

    def __init__(self, n: int, masks: np.ndarray, weights: np.ndarray):
        self.n = n
        self.masks = masks
        self.weights = weights

    def kernel(self, x: np.ndarray):
        S = from_coords(x, self.n)
        lam, U = np.linalg.eigh(S)
        L = (U * np.exp(lam)) @ U.T
        return (L + L.T) / 2, lam, U

    def value(self, x: np.ndarray) -> float:
        L, lam, _ = self.kernel(x)
        if lam[0] <= _LOG_PD or not np.all(np.isfinite(L)):
            return -np.inf
        try:
            return weighted_loglik(L, self.masks, self.weights)
        except NumericalError:
            return -np.inf

    def gradients(self, x: np.ndarray):
        """Return ``(L, grad_L, coords of grad_S)``."""
        L, lam, U = self.kernel(x)
        G = weighted_grad(L, self.masks, self.weights)
        # Frechet derivative of expm at symmetric S (divided differences of exp)
        diff = lam[:, None] - lam[None, :]
        close = np.abs(diff) < 1e-8
        safe = np.where(close, 1.0, diff)
        gamma = np.where(close, np.exp((lam[:, None] + lam[None, :]) / 2),
                         np.exp(lam)[None, :] * np.expm1(diff) / safe)
        GS = U @ (gamma * (U.T @ G @ U)) @ U.T
        return L, G, to_coords((GS + GS.T) / 2)


def _ascend(obj: _Objective, x: np.ndarray, cfg: FitConfig) -> RestartResult:
    dim = x.size
    f = obj.value(x)
    if not np.isfinite(f):
        raise DomainError("starting point is not a valid kernel")
    L, G, g = obj.gradients(x)
    Hinv = np.eye(dim)
    first_update = True
    history = [f]
    status = "max-iters"
    it = 0
    for it in range(cfg.max_iters + 1):
        if np.linalg.norm(G) < cfg.grad_tol:
            status = "converged"
            break
        if it == cfg.max_iters:
            break
        d = Hinv @ g
        slope = float(g @ d)
        if slope <= 1e-12 * np.linalg.norm(g) * np.linalg.norm(d):
            Hinv = np.eye(dim)
            first_update = True
            d = g.copy()
            slope = float(g @ g)
        t = min(1.0, MAX_STEP / max(np.linalg.norm(d), 1e-300))
        accepted = False
        for _ in range(MAX_HALVINGS):
            x_new = x + t * d
            f_new = obj.value(x_new)
            if f_new >= f + ARMIJO * t * slope:
                accepted = True
                break
            t /= 2
        if not accepted:
            status = "line-search-stall"
            break
        L_new, G_new, g_new = obj.gradients(x_new)
        s = x_new - x
        y = g - g_new
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                Hinv = np.eye(dim) * (sy / float(y @ y))
                first_update = False
            rho = 1.0 / sy
            V = np.eye(dim) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, f, L, G, g = x_new, f_new, L_new, G_new, g_new
        history.append(f)
    gnorm = float(np.linalg.norm(G))
    return RestartResult(L, f, gnorm, gnorm < cfg.grad_tol, it, status, history)


def _log_coords(L: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(check_kernel(L))
    return to_coords((U * np.log(lam)) @ U.T)


def fit_mle(C: EmpiricalCounts, cfg: FitConfig = FitConfig(), init=()) -> FitResult:
    """Multi-restart likelihood ascent.

    Restart 0 starts from ``L = I``; each kernel in ``init`` adds one more
    start; the remaining ``cfg.restarts - 1`` starts use ``expm(S)`` with a
    random symmetric ``S`` whose entries are ``Normal(0, init_scale^2)``,
    seeded by ``(cfg.seed, restart index)``.  The best restart (largest
    log-likelihood, lowest index on ties) is returned.
    """
    _check_fit_size(C)
    n = C.n_items
    obj = _Objective(n, C.masks, C.freqs)
    starts = [np.zeros(n * (n + 1) // 2)]
    starts += [_log_coords(L0) for L0 in init]
    for r in range(1, cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        A = rng.normal(0.0, cfg.init_scale, (n, n))
        S = np.triu(A) + np.triu(A, 1).T
        starts.append(to_coords(S))
    results = [_ascend(obj, x0, cfg) for x0 in starts]
    best = 0
    for i, r in enumerate(results):
        if r.loglik > results[best].loglik:
            best = i
    b = results[best]
    return FitResult(b.kernel, b.loglik, b.grad_norm, b.converged,
                     float(np.linalg.cond(b.kernel)), best, results)
