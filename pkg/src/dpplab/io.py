"""File formats: matrices (JSON), probability tables and tabular results (CSV)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DomainError
from .kernel import SYMMETRY_TOL


def fmt(x) -> str:
    """Round-trippable text for a number (shortest repr for floats)."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def save_matrix(path, A) -> None:
    A = np.asarray(A, dtype=float)
    with open(path, "w") as fh:
        json.dump({"n": int(A.shape[0]), "data": [float(v) for v in A.ravel()]}, fh)
        fh.write("\n")


def load_matrix(path) -> np.ndarray:
    """Read ``{"n": N, "data": [N*N numbers]}``; symmetry is checked then enforced."""
    with open(path) as fh:
        obj = json.load(fh)
    try:
        n = int(obj["n"])
        data = np.asarray(obj["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"{path}: expected an object with 'n' and 'data'") from exc
    if data.size != n * n:
        raise DomainError(f"{path}: 'data' has {data.size} entries, expected {n * n}")
    A = data.reshape(n, n)
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL:
        raise DomainError(f"{path}: matrix is not symmetric within {SYMMETRY_TOL}")
    return (A + A.T) / 2


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_pmf_csv(path, table) -> None:
    write_csv(path, ["mask", "probability"], enumerate(np.asarray(table, dtype=float)))


def read_pmf_csv(path) -> np.ndarray:
    rows = read_csv(path)
    out = np.empty(len(rows))
    for k, row in enumerate(rows):
        if int(row["mask"]) != k:
            raise DomainError(f"{path}: masks must be listed in order 0..2^N-1")
        out[k] = float(row["probability"])
    return out


def write_tsv(path, xs, ys) -> None:
    """Two-column plot-ready table."""
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{fmt(x)}\t{fmt(y)}\n")


def save_partition(path, part) -> None:
    with open(path, "w") as fh:
        json.dump([list(map(int, b)) for b in part], fh)
        fh.write("\n")


def load_partition(path) -> list[tuple[int, ...]]:
    with open(path) as fh:
        return [tuple(int(i) for i in b) for b in json.load(fh)]


def write_orbit_csv(path, orbit) -> None:
    """One row per orbit member: index followed by the row-major entries."""
    if not orbit:
        write_csv(path, ["index"], [])
        return
    n = orbit[0].shape[0]
    header = ["index"] + [f"L{i}_{j}" for i in range(n) for j in range(n)]
    write_csv(path, header, ([k, *M.ravel()] for k, M in enumerate(orbit)))


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
