"""Config-driven experiments: convergence rates, saddle catalogs, curvature decay,
and a random-restart search for critical points of the population objective.

Each runner writes CSV tables, a JSON summary, plot-ready two-column TSV files
and a ``manifest.json`` into ``cfg.out_dir``.  Everything except the wall time
recorded in the manifest is a deterministic function of the config.
"""

from __future__ import annotations

import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .errors import CapacityError, DomainError
from .io import load_matrix, write_csv, write_json, write_tsv
from .kernel import block_kernel, check_kernel, l_to_k, random_kernel
from .landscape import (
    TridiagonalSpec,
    classify_critical_point,
    curvature_decay,
    decoupling_kernel,
    tridiagonal_kernel,
)
from .mle import EmpiricalCounts, FitConfig, empirical_counts, empirical_loglik, fit_mle
from .sampler import sample_exhaustive, sample_spectral
from .structure import block_masks, blocks, loss, partitions

KINDS = ("rates", "saddles", "curvature", "conjecture")
KERNEL_TYPES = ("explicit", "tridiagonal", "random", "blocks", "file")
SAMPLERS = {"exhaustive": sample_exhaustive, "spectral": sample_spectral}
SADDLE_LIMIT = 6
CONJECTURE_LIMIT = 4
CURVATURE_LIMIT = 12
MATCH_TOL = 1e-3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment description; see the README for the file schema."""

    kind: str
    kernel: dict
    sample_sizes: tuple[int, ...] = ()
    trials: int = 1
    seed: int = 0
    out_dir: str = "results"
    n_range: tuple[int, int] = (3, 10)
    sampler: str = "exhaustive"
    fit: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.kernel, dict) or self.kernel.get("type") not in KERNEL_TYPES:
            raise DomainError(f"kernel.type must be one of {KERNEL_TYPES}")
        sizes = tuple(int(n) for n in self.sample_sizes)
        object.__setattr__(self, "sample_sizes", sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise DomainError("sample_sizes must be strictly increasing")
        if any(n < 1 for n in sizes):
            raise DomainError("sample sizes must be positive")
        if self.trials < 1:
            raise DomainError("trials must be at least 1")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        if self.sampler not in SAMPLERS:
            raise DomainError(f"sampler must be one of {tuple(SAMPLERS)}")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")
        lo, hi = (int(v) for v in self.n_range)
        object.__setattr__(self, "n_range", (lo, hi))
        if not 2 <= lo <= hi:
            raise DomainError("n_range must satisfy 2 <= lo <= hi")
        unknown = set(self.fit) - {"restarts", "max_iters", "grad_tol", "init_scale"}
        if unknown:
            raise DomainError(f"unknown fit settings: {sorted(unknown)}")
        if self.kind == "rates" and len(sizes) < 3:
            raise DomainError("a rate experiment needs at least 3 sample sizes")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("sample_sizes", "n_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def fit_config(self, seed: int = 0) -> FitConfig:
        return FitConfig(seed=seed, **self.fit)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sample_sizes"] = list(self.sample_sizes)
        d["n_range"] = list(self.n_range)
        return d


def load_config(path, seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise DomainError(f"{path}: expected a mapping at the top level")
    cfg = ExperimentConfig.from_dict(raw)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=out_dir)
    return cfg


def build_kernel(spec: dict) -> np.ndarray:
    kind = spec.get("type")
    try:
        if kind == "explicit":
            return check_kernel(np.asarray(spec["matrix"], dtype=float))
        if kind == "tridiagonal":
            return tridiagonal_kernel(TridiagonalSpec(float(spec["a"]), float(spec["b"]), int(spec["n"])))
        if kind == "random":
            return random_kernel(int(spec["n"]), int(spec.get("seed", 0)))
        if kind == "blocks":
            return block_kernel([int(s) for s in spec["sizes"]], int(spec.get("seed", 0)))
        if kind == "file":
            return check_kernel(load_matrix(spec["path"]))
    except KeyError as exc:
        raise DomainError(f"kernel spec of type {kind!r} is missing {exc}") from exc
    raise DomainError(f"unknown kernel type {kind!r}")


def trial_seeds(master: int, n: int, trial: int) -> tuple[int, int]:
    """Independent ``(sampling, fitting)`` seeds for one work item."""
    a, b = np.random.SeedSequence([master, n, trial]).generate_state(2)
    return int(a), int(b)


def _manifest(cfg: ExperimentConfig, wall: float, outputs: list[str], seeds) -> dict:
    return {
        "config": cfg.to_dict(),
        "versions": {
            "dpplab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": wall,
        "seeds": seeds,
        "outputs": outputs,
    }


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ols(x, y) -> tuple[float, float, float, float]:
    """Least-squares line ``y = intercept + slope x``: ``(slope, intercept, stderr, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    sxx = float(np.sum((x - x.mean()) ** 2))
    dof = x.size - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else math.nan
    syy = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    return float(coef[1]), float(coef[0]), se, r2


# ---------------------------------------------------------------------------
# convergence rates
# ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    n: int
    trial: int
    sample_seed: int
    fit_seed: int
    converged: bool
    status: str
    within: float
    cross: float
    total: float
    loglik_gap: float
    best_restart: int

    def row(self) -> list:
        return [self.n, self.trial, self.sample_seed, self.fit_seed, self.converged, self.status,
                self.within, self.cross, self.total, self.loglik_gap, self.best_restart]


TRIAL_HEADER = ["n", "trial", "sample_seed", "fit_seed", "converged", "status",
                "within_loss", "cross_loss", "total_loss", "loglik_gap", "best_restart"]


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    r2: float


@dataclass
class RateReport:
    """Per-trial losses plus log-log slopes of the mean loss against ``n``.

    ``loglik_gap`` is the fitted minus the true kernel's empirical
    log-likelihood; a negative value flags a fit that missed the global
    maximum.  ``cross`` slopes are ``None`` for irreducible kernels.
    """

    sample_sizes: list[int]
    trials: list[TrialRecord]
    mean_within: list[float]
    mean_cross: list[float]
    mean_total: list[float]
    excluded: dict[int, int]
    within_slope: SlopeFit
    cross_slope: SlopeFit | None
    total_slope: SlopeFit
    blocks: list[tuple[int, ...]]

    def summary(self) -> dict:
        return {
            "sample_sizes": self.sample_sizes,
            "blocks": [list(b) for b in self.blocks],
            "mean_within_loss": self.mean_within,
            "mean_cross_loss": self.mean_cross,
            "mean_total_loss": self.mean_total,
            "excluded_nonconverged": {str(k): v for k, v in self.excluded.items()},
            "excluded_total": sum(self.excluded.values()),
            "within_slope": asdict(self.within_slope),
            "cross_slope": None if self.cross_slope is None else asdict(self.cross_slope),
            "total_slope": asdict(self.total_slope),
            "min_loglik_gap": min((t.loglik_gap for t in self.trials if t.converged), default=None),
        }


def _rate_trial(args) -> TrialRecord:
    L_star, n, trial, cfg = args
    sample_seed, fit_seed = trial_seeds(cfg.seed, n, trial)
    samples = SAMPLERS[cfg.sampler](L_star, n, sample_seed)
    C = empirical_counts(samples)
    res = fit_mle(C, cfg.fit_config(fit_seed))
    within, cross = block_masks(blocks(L_star), L_star.shape[0])
    L_hat = res.kernel
    return TrialRecord(
        n, trial, sample_seed, fit_seed, res.converged, res.restarts[res.best_restart].status,
        loss(L_hat, L_star, where=within),
        loss(L_hat, L_star, where=cross) if cross.any() else 0.0,
        loss(L_hat, L_star),
        res.loglik - empirical_loglik(C, L_star),
        res.best_restart,
    )


def run_rate_experiment(cfg: ExperimentConfig, L_star=None) -> RateReport:
    if cfg.kind != "rates":
        raise DomainError("config kind must be 'rates'")
    t0 = time.perf_counter()
    L_star = build_kernel(cfg.kernel) if L_star is None else check_kernel(L_star)
    part = blocks(L_star)
    jobs = [(L_star, n, t, cfg) for n in cfg.sample_sizes for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            records = list(ex.map(_rate_trial, jobs, chunksize=4))
    else:
        records = [_rate_trial(j) for j in jobs]

    means = {"within": [], "cross": [], "total": []}
    excluded = {}
    for n in cfg.sample_sizes:
        ok = [r for r in records if r.n == n and r.converged]
        excluded[n] = sum(1 for r in records if r.n == n and not r.converged)
        for key in means:
            means[key].append(float(np.mean([getattr(r, key) for r in ok])) if ok else math.nan)

    def slope(values) -> SlopeFit | None:
        pts = [(math.log(n), math.log(v)) for n, v in zip(cfg.sample_sizes, values)
               if np.isfinite(v) and v > 0]
        if len(pts) < 3:
            return None
        return SlopeFit(*_ols(*zip(*pts)))

    nan_fit = SlopeFit(math.nan, math.nan, math.nan, math.nan)
    report = RateReport(
        list(cfg.sample_sizes), records, means["within"], means["cross"], means["total"], excluded,
        slope(means["within"]) or nan_fit,
        slope(means["cross"]) if len(part) > 1 else None,
        slope(means["total"]) or nan_fit,
        part,
    )

    out = _out(cfg)
    write_csv(out / "rates_trials.csv", TRIAL_HEADER, (r.row() for r in records))
    write_csv(out / "rates_summary.csv", ["n", "mean_within_loss", "mean_cross_loss",
                                          "mean_total_loss", "excluded"],
              ([n, w, c, t, excluded[n]] for n, w, c, t in
               zip(cfg.sample_sizes, means["within"], means["cross"], means["total"])))
    write_json(out / "rates_report.json", report.summary())
    outputs = ["rates_trials.csv", "rates_summary.csv", "rates_report.json"]
    for key in means:
        name = f"rates_{key}.tsv"
        write_tsv(out / name, cfg.sample_sizes, means[key])
        outputs.append(name)
    seeds = [{"n": r.n, "trial": r.trial, "sample_seed": r.sample_seed, "fit_seed": r.fit_seed}
             for r in records]
    write_json(out / "manifest.json", _manifest(cfg, time.perf_counter() - t0, outputs, seeds))
    return report


# ---------------------------------------------------------------------------
# saddle catalog
# ---------------------------------------------------------------------------

def format_partition(part) -> str:
    return "|".join(" ".join(str(i) for i in b) for b in part)


SADDLE_HEADER = ["partition", "n_blocks", "strict", "gradient_norm", "min_eig", "max_eig",
                 "null_dim", "classification", "diag_k_deviation"]


def run_saddle_experiment(cfg: ExperimentConfig, L_star=None) -> dict:
    """Classify the partial decoupling of ``L*`` along every partition of the ground set."""
    if cfg.kind != "saddles":
        raise DomainError("config kind must be 'saddles'")
    t0 = time.perf_counter()
    L_star = build_kernel(cfg.kernel) if L_star is None else check_kernel(L_star)
    n = L_star.shape[0]
    if n > SADDLE_LIMIT:
        raise CapacityError(f"partition enumeration is limited to N <= {SADDLE_LIMIT}, got {n}")
    K_star = l_to_k(L_star)
    rows = []
    for part in partitions(n):
        L_dec = decoupling_kernel(L_star, part)
        rep = classify_critical_point(L_star, L_dec)
        _, cross = block_masks(part, n)
        rows.append({
            "partition": format_partition(part),
            "n_blocks": len(part),
            "strict": bool(np.any(K_star[cross] != 0)),
            "gradient_norm": rep.gradient_norm,
            "min_eig": float(rep.hessian_eigenvalues[0]),
            "max_eig": float(rep.hessian_eigenvalues[-1]),
            "null_dim": rep.null_dim,
            "classification": rep.classification,
            "diag_k_deviation": float(np.max(np.abs(np.diag(l_to_k(L_dec)) - np.diag(K_star)))),
        })
    counts = {}
    for r in rows:
        counts[r["classification"]] = counts.get(r["classification"], 0) + 1
    report = {"n": n, "partitions": rows, "counts": counts}

    out = _out(cfg)
    write_csv(out / "saddles.csv", SADDLE_HEADER, ([r[k] for k in SADDLE_HEADER] for r in rows))
    write_json(out / "saddles_report.json", report)
    idx = list(range(len(rows)))
    write_tsv(out / "saddles_min_eig.tsv", idx, [r["min_eig"] for r in rows])
    write_tsv(out / "saddles_max_eig.tsv", idx, [r["max_eig"] for r in rows])
    outputs = ["saddles.csv", "saddles_report.json", "saddles_min_eig.tsv", "saddles_max_eig.tsv"]
    write_json(out / "manifest.json", _manifest(cfg, time.perf_counter() - t0, outputs, []))
    return report


# ---------------------------------------------------------------------------
# curvature decay
# ---------------------------------------------------------------------------

CURVATURE_HEADER = ["n", "closed_form", "numeric_min", "log_closed_form", "log_numeric_min"]


def run_curvature_experiment(cfg: ExperimentConfig) -> dict:
    """Sweep the tridiagonal family over ``cfg.n_range`` and fit ``log(numeric_min)`` against ``N``."""
    if cfg.kind != "curvature":
        raise DomainError("config kind must be 'curvature'")
    if cfg.kernel.get("type") != "tridiagonal":
        raise DomainError("curvature experiments need a tridiagonal kernel spec")
    t0 = time.perf_counter()
    a, b = float(cfg.kernel["a"]), float(cfg.kernel["b"])
    lo, hi = cfg.n_range
    if hi > CURVATURE_LIMIT:
        raise CapacityError(f"curvature sweep is limited to N <= {CURVATURE_LIMIT}")
    rows = []
    for n in range(lo, hi + 1):
        closed, numeric = curvature_decay(TridiagonalSpec(a, b, n))
        rows.append([n, closed, numeric, _safe_log(closed), _safe_log(numeric)])
    ns = [r[0] for r in rows]
    logs = [r[4] for r in rows]
    fit = None
    if len(rows) >= 2 and all(np.isfinite(logs)):
        s, c, se, r2 = _ols(ns, logs)
        fit = {"slope": s, "intercept": c, "stderr": se, "r2": r2}
    report = {
        "a": a, "b": b,
        "rows": [dict(zip(CURVATURE_HEADER, r)) for r in rows],
        "fit": fit,
        "numeric_below_closed": all(r[2] <= r[1] for r in rows),
    }

    out = _out(cfg)
    write_csv(out / "curvature.csv", CURVATURE_HEADER, rows)
    write_json(out / "curvature_report.json", report)
    write_tsv(out / "curvature_numeric.tsv", ns, logs)
    write_tsv(out / "curvature_closed.tsv", ns, [r[3] for r in rows])
    outputs = ["curvature.csv", "curvature_report.json", "curvature_numeric.tsv",
               "curvature_closed.tsv"]
    write_json(out / "manifest.json", _manifest(cfg, time.perf_counter() - t0, outputs, []))
    return report


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


# ---------------------------------------------------------------------------
# critical point search on the population objective
# ---------------------------------------------------------------------------

CONJECTURE_HEADER = ["restart", "converged", "status", "loglik", "gradient_norm",
                     "matched_partition", "match_loss", "classification", "diag_k_deviation"]


def run_conjecture_sweep(cfg: ExperimentConfig, L_star=None) -> dict:
    """Random-restart ascent of the population objective, matched against the decoupling catalog.

    Restart 0 starts at ``L = I``, restart 1 at ``L*`` itself and the rest
    at random kernels.  Converged points farther than ``MATCH_TOL`` (in loss)
    from every decoupling are reported as unmatched.
    """
    if cfg.kind != "conjecture":
        raise DomainError("config kind must be 'conjecture'")
    t0 = time.perf_counter()
    L_star = build_kernel(cfg.kernel) if L_star is None else check_kernel(L_star)
    n = L_star.shape[0]
    if n > CONJECTURE_LIMIT:
        raise CapacityError(f"conjecture sweep is limited to N <= {CONJECTURE_LIMIT}, got {n}")
    catalog = [(format_partition(p), decoupling_kernel(L_star, p)) for p in partitions(n)]
    K_star_diag = np.diag(l_to_k(L_star))
    res = fit_mle(EmpiricalCounts.population(L_star), cfg.fit_config(cfg.seed), init=[L_star])
    rows = []
    for i, r in enumerate(res.restarts):
        row = {"restart": i, "converged": r.converged, "status": r.status, "loglik": r.loglik,
               "gradient_norm": r.grad_norm, "matched_partition": "", "match_loss": math.nan,
               "classification": "", "diag_k_deviation": math.nan}
        if r.converged:
            name, dist = min(((nm, loss(r.kernel, Ld)) for nm, Ld in catalog), key=lambda t: t[1])
            row["match_loss"] = dist
            if dist < MATCH_TOL:
                row["matched_partition"] = name
            row["classification"] = classify_critical_point(L_star, r.kernel).classification
            row["diag_k_deviation"] = float(np.max(np.abs(np.diag(l_to_k(r.kernel)) - K_star_diag)))
        rows.append(row)
    conv = [r for r in rows if r["converged"]]
    unmatched = [r for r in conv if not r["matched_partition"]]
    verdict = ("consistent with conjecture" if not unmatched
               else "unmatched critical points found")
    report = {
        "n": n,
        "restarts": rows,
        "n_converged": len(conv),
        "n_matched": len(conv) - len(unmatched),
        "n_unmatched": len(unmatched),
        "max_diag_k_deviation": max((r["diag_k_deviation"] for r in conv), default=None),
        "verdict": verdict,
    }

    out = _out(cfg)
    write_csv(out / "conjecture.csv", CONJECTURE_HEADER,
              ([r[k] for k in CONJECTURE_HEADER] for r in rows))
    write_json(out / "conjecture_report.json", report)
    write_tsv(out / "conjecture_match_loss.tsv", [r["restart"] for r in conv],
              [r["match_loss"] for r in conv])
    outputs = ["conjecture.csv", "conjecture_report.json", "conjecture_match_loss.tsv"]
    write_json(out / "manifest.json",
               _manifest(cfg, time.perf_counter() - t0, outputs, [{"fit_seed": cfg.seed}]))
    return report


RUNNERS = {
    "rates": run_rate_experiment,
    "saddles": run_saddle_experiment,
    "curvature": run_curvature_experiment,
    "conjecture": run_conjecture_sweep,
}

