"""Sample containers, CSV ingestion, seeded randomness and summary statistics.

Convention everywhere: rows are samples, columns are dimensions.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BadFraction, EmptyData, InputError, MalformedRow

# Every random draw in the package goes through this bit generator.
RNG_ALGORITHM = "PCG64"
SEED_MAX = 2**64 - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise InputError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def make_rng(seed) -> np.random.Generator:
    """Generator for `seed`, pinned to the PCG64 algorithm."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(check_seed(seed)))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of `seed` keyed by integers."""
    ss = np.random.SeedSequence([check_seed(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class DataMatrix:
    """Immutable N x d block of finite reals."""

    values: np.ndarray
    column_names: Optional[tuple] = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise InputError(f"expected a 2-d array, got {arr.ndim}-d")
        if arr.shape[0] < 2:
            raise EmptyData(f"need at least 2 samples, got {arr.shape[0]}")
        if arr.shape[1] < 1:
            raise EmptyData("need at least 1 dimension")
        if not np.all(np.isfinite(arr)):
            raise InputError("data contains NaN or infinite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != arr.shape[1]:
                raise InputError(
                    f"{len(names)} column names for {arr.shape[1]} columns"
                )
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __len__(self):
        return self.n


def as_array(data) -> np.ndarray:
    """Float64 2-d view of a DataMatrix or array-like (1-d becomes one column)."""
    if isinstance(data, DataMatrix):
        return data.values
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


@dataclass(frozen=True)
class SummaryStats:
    mean: np.ndarray
    covariance: np.ndarray
    per_dim_min: np.ndarray
    per_dim_max: np.ndarray


def summary(data) -> SummaryStats:
    """Mean, unbiased covariance (divisor N-1) and per-dimension extrema."""
    x = as_array(data)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    return SummaryStats(
        mean=mean,
        covariance=cov,
        per_dim_min=x.min(axis=0),
        per_dim_max=x.max(axis=0),
    )


def split(data, fraction: float, seed) -> tuple[DataMatrix, DataMatrix]:
    """Random disjoint row partition; the first part gets round(fraction * N) rows."""
    dm = data if isinstance(data, DataMatrix) else DataMatrix(data)
    if not 0.0 < fraction < 1.0:
        raise BadFraction(f"fraction must lie in (0, 1), got {fraction}")
    n_first = int(round(fraction * dm.n))
    if n_first < 2 or dm.n - n_first < 2:
        raise BadFraction(
            f"fraction {fraction} of {dm.n} rows leaves a part with fewer than 2 rows"
        )
    perm = make_rng(seed).permutation(dm.n)
    first = np.sort(perm[:n_first])
    second = np.sort(perm[n_first:])
    return (
        DataMatrix(dm.values[first], dm.column_names),
        DataMatrix(dm.values[second], dm.column_names),
    )


def _parse_field(text: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line_no, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRow(line_no, f"non-finite value: {text!r}")
    return value


def load_csv(path, has_header: bool = False) -> DataMatrix:
    """Read a comma-separated numeric file into a DataMatrix.

    Blank lines are ignored. Line numbers in errors are 1-based physical lines.
    """
    names = None
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for line_no, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if has_header and names is None:
                names = [f.strip() for f in fields]
                width = len(names)
                continue
            if width is None:
                width = len(fields)
            if len(fields) != width:
                raise MalformedRow(
                    line_no, f"expected {width} fields, got {len(fields)}"
                )
            rows.append([_parse_field(f.strip(), line_no) for f in fields])
    if len(rows) < 2:
        raise EmptyData(f"{path}: need at least 2 data rows, got {len(rows)}")
    return DataMatrix(np.array(rows, dtype=np.float64), names)


def format_row(values: Sequence[float]) -> str:
    return ",".join(f"{v:.17g}" for v in values)


def save_csv(data, path, column_names: Optional[Sequence[str]] = None) -> None:
    """Write with 17 significant digits so that load_csv round-trips exactly."""
    if column_names is None and isinstance(data, DataMatrix):
        column_names = data.column_names
    x = as_array(data)
    lines = []
    if column_names is not None:
        lines.append(",".join(column_names))
    lines.extend(format_row(row) for row in x)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
