"""CSV and JSON writers with shortest round-trip float formatting."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ContractError

RESULT_HEADER = ("experiment", "param", "time", "statistic", "value", "mc_err")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def write_result_csv(path, rows):
    write_rows(path, RESULT_HEADER, ([r[k] for k in RESULT_HEADER] for r in rows))


def write_snapshots_csv(path, times, states):
    d = states[0].shape[1]
    header = ["time", "particle_index"] + [f"x_{j}" for j in range(d)]

    def rows():
        for t, X in zip(times, states):
            for i, x in enumerate(X):
                yield [float(t), i, *map(float, x)]

    write_rows(path, header, rows())


def write_summary_csv(path, times, mean, second):
    d = mean.shape[1]
    header = ["time"] + [f"mean_{j}" for j in range(d)] + [f"m2_{j}" for j in range(d)]
    write_rows(path, header, ([float(t), *map(float, m), *map(float, s)] for t, m, s in zip(times, mean, second)))


def read_samples_csv(path) -> np.ndarray:
    """Sample matrix from a CSV with a header row.

    Uses the ``x_*`` columns when present (snapshot files), keeping only the last
    recorded time; otherwise every column is a coordinate.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if r]
    if not header or not rows:
        raise ContractError(f"{path}: expected a header row and at least one sample")
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ContractError(f"{path}: non-numeric sample value ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ContractError(f"{path}: every row must have {len(header)} columns")
    cols = [i for i, h in enumerate(header) if h.startswith("x_")]
    if cols:
        if "time" in header:
            t = data[:, header.index("time")]
            data = data[t == t.max()]
        data = data[:, cols]
    return data


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
