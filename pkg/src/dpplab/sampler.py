"""Exact sampling from DPP(L).

Randomness is counter-based: draw ``i`` of a run seeded with ``seed`` reads a
fixed-width block of uniforms at offset ``i`` of the Philox stream keyed by
``seed``.  Any contiguous range of draws can therefore be produced
independently (and in parallel) with results identical to a serial run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .kernel import check_kernel, items, pmf_table

GS_TOL = 1e-12


@dataclass(frozen=True)
class SampleSet:
    draws: np.ndarray  # uint64 subset masks
    n_items: int
    seed: int

    def __len__(self) -> int:
        return int(self.draws.size)

    def subsets(self) -> list[tuple[int, ...]]:
        return [items(m) for m in self.draws]


def _block_width(k: int) -> int:
    return 4 * ((k + 3) // 4)


def stream_uniforms(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    """Uniforms for draws ``start..stop-1``, one row of ``width`` values per draw.

    ``width`` must be a multiple of 4 (one Philox counter block holds four
    64-bit words).
    """
    if width % 4:
        raise ValueError("width must be a multiple of 4")
    bitgen = np.random.Philox(key=int(seed))
    bitgen.advance(start * (width // 4))
    return np.random.Generator(bitgen).random((stop - start) * width).reshape(stop - start, width)


def _check_count(count: int) -> int:
    count = int(count)
    if count < 0:
        raise DomainError("count must be non-negative")
    return count


def sample_exhaustive(L, count: int, seed: int) -> SampleSet:
    """Inverse-CDF sampling over the full ``2^N`` probability table."""
    L = check_kernel(L)
    count = _check_count(count)
    n = L.shape[0]
    cdf = np.cumsum(pmf_table(L))
    cdf /= cdf[-1]
    u = stream_uniforms(seed, 0, count, 4)[:, 0]
    draws = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)
    return SampleSet(draws.astype(np.uint64), n, int(seed))


def _orthonormalize(V: np.ndarray) -> np.ndarray:
    cols = []
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        for q in cols:
            v -= (q @ v) * q
        nrm = np.linalg.norm(v)
        if nrm > GS_TOL:
            cols.append(v / nrm)
    return np.column_stack(cols) if cols else np.zeros((V.shape[0], 0))


def _spectral_draw(eigvecs: np.ndarray, k_eig: np.ndarray, u: np.ndarray) -> int:
    n = eigvecs.shape[0]
    V = eigvecs[:, u[:n] < k_eig]
    mask = 0
    step = 0
    while V.shape[1] > 0:
        prob = np.sum(V * V, axis=1)
        cdf = np.cumsum(prob / prob.sum())
        i = int(np.searchsorted(cdf, u[n + step], side="right"))
        if i >= n:  # cdf[-1] fell just below 1 through roundoff
            i = int(np.flatnonzero(prob > 0)[-1])
        mask |= 1 << i
        j = int(np.argmax(np.abs(V[i, :])))
        Vj = V[:, j].copy()
        V = np.delete(V, j, axis=1)
        V = V - np.outer(Vj, V[i, :] / Vj[i])
        V = _orthonormalize(V)
        step += 1
    return mask


def sample_spectral(L, count: int, seed: int) -> SampleSet:
    """Spectral sampler: Bernoulli eigenvector selection then sequential projection."""
    L = check_kernel(L)
    count = _check_count(count)
    n = L.shape[0]
    try:
        lam, eigvecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError("eigendecomposition of L failed") from exc
    k_eig = lam / (1.0 + lam)
    u = stream_uniforms(seed, 0, count, _block_width(2 * n))
    draws = np.fromiter((_spectral_draw(eigvecs, k_eig, row) for row in u),
                        dtype=np.uint64, count=count)
    return SampleSet(draws, n, int(seed))


def write_samples(path, samples: SampleSet) -> None:
    with open(path, "w") as fh:
        fh.write(f"# n={samples.n_items} count={len(samples)} seed={samples.seed}\n")
        for m in samples.draws:
            fh.write(" ".join(str(i) for i in items(m)) + "\n")


def read_samples(path) -> SampleSet:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise DomainError("sample file is missing its '# n=.. count=.. seed=..' header")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        n, count, seed = int(meta["n"]), int(meta["count"]), int(meta["seed"])
        masks = []
        for line in fh:
            line = line.rstrip("\n")
            m = 0
            for tok in line.split():
                i = int(tok)
                if not 0 <= i < n:
                    raise DomainError(f"item {i} outside ground set of size {n}")
                m |= 1 << i
            masks.append(m)
    if len(masks) != count:
        raise DomainError(f"header announces {count} draws, file has {len(masks)}")
    return SampleSet(np.array(masks, dtype=np.uint64), n, seed)
