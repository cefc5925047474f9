"""Estimation-error sweeps over synthetic Gaussian and t-Student data.

A cell is (quantity, d, family, nu). Every cell runs `trials` independent
estimates at each sample size; Gaussian cells also carry the closed-form
answer. Completed rows are appended to a JSON-lines checkpoint so an
interrupted sweep can resume where it stopped.
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .data import derive_seed
from .flow import FitConfig
from .itmeasures import mutual_information, total_correlation
from .synth import (
    GaussianSpec,
    StudentSpec,
    equicorrelation,
    gaussian_mutual_information,
    gaussian_total_correlation,
    sample_gaussian,
    sample_student,
)
from .errors import InputError

QUANTITIES = ("tc", "mi")
GAUSS_TOKEN = "gauss"
LARGE_D = 50
SERIES_COLUMNS = ("quantity", "d", "family", "nu", "N", "mean", "std", "analytic")
THREADS_ENV = "DESTRUCTOR_IT_THREADS"


@dataclass(frozen=True)
class Cell:
    quantity: str
    d: int
    family: str  # "gaussian" or "student"
    nu: Optional[float] = None

    @property
    def key(self) -> tuple:
        return (self.quantity, self.d, self.family, self.nu)


def parse_nu(token) -> Optional[float]:
    """'gauss' selects the Gaussian family; anything else is a positive nu."""
    if isinstance(token, str) and token.strip().lower() == GAUSS_TOKEN:
        return None
    nu = float(token)
    if not nu > 0 or not math.isfinite(nu):
        raise InputError(f"nu must be a positive number or '{GAUSS_TOKEN}', got {token!r}")
    return nu


def build_cells(dims, nus, quantities=QUANTITIES, large: bool = False) -> list:
    if not dims or not nus or not quantities:
        raise InputError("dims, nu and quantities must be nonempty")
    cells = []
    for q in quantities:
        if q not in QUANTITIES:
            raise InputError(f"unknown quantity {q!r}; expected one of {QUANTITIES}")
        for d in dims:
            d = int(d)
            if d < 2:
                raise InputError(f"benchmark dimensions must be >= 2, got {d}")
            if d >= LARGE_D and not large:
                raise InputError(f"d = {d} cells are opt-in; pass --large")
            for token in nus:
                nu = parse_nu(token)
                family = "gaussian" if nu is None else "student"
                cells.append(Cell(q, d, family, nu))
    return cells


def analytic_value(cell: Cell, rho: float) -> Optional[float]:
    """Closed form for Gaussian cells; None for t-Student cells."""
    if cell.family != "gaussian":
        return None
    spec = GaussianSpec(equicorrelation(cell.d, rho))
    if cell.quantity == "tc":
        return gaussian_total_correlation(spec)
    return gaussian_mutual_information(spec, cell.d // 2)


def _nu_code(nu) -> int:
    return 0 if nu is None else int(round(nu * 1000))


def trial_seed(seed: int, cell: Cell, n: int, trial: int) -> int:
    """Depends on the cell contents, not its position, so resumed and
    reordered sweeps draw the same data."""
    return derive_seed(
        seed, QUANTITIES.index(cell.quantity), cell.d, _nu_code(cell.nu), n, trial
    )


def sample_cell(cell: Cell, n: int, seed: int, rho: float) -> np.ndarray:
    r = equicorrelation(cell.d, rho)
    if cell.family == "gaussian":
        return sample_gaussian(GaussianSpec(r), n, seed).values
    return sample_student(StudentSpec(cell.nu, r), n, seed).values


def run_trial(cell: Cell, n: int, trial: int, seed: int, rho: float,
              config: FitConfig) -> dict:
    start = time.perf_counter()
    s = trial_seed(seed, cell, n, trial)
    x = sample_cell(cell, n, s, rho)
    cfg = replace(config, seed=derive_seed(s, 1))
    if cell.quantity == "tc":
        report = total_correlation(x, cfg)
    else:
        k = cell.d // 2
        report = mutual_information(x[:, :k], x[:, k:], cfg)
    analytic = analytic_value(cell, rho)
    return {
        "quantity": cell.quantity,
        "d": cell.d,
        "family": cell.family,
        "nu": cell.nu,
        "N": n,
        "trial": trial,
        "seed": s,
        "estimate": report.value,
        "raw_estimate": report.raw_value,
        "analytic": analytic,
        "error": None if analytic is None else report.value - analytic,
        "layer_counts": list(report.layer_counts),
        "wall_time": time.perf_counter() - start,
    }


def _row_key(row: dict) -> tuple:
    return (
        QUANTITIES.index(row["quantity"]), row["d"], row["family"],
        -1.0 if row["nu"] is None else row["nu"], row["N"], row["trial"],
    )


def aggregate(rows: list) -> list:
    """Mean, inter-trial std and median |error| per (cell, N)."""
    groups: dict = {}
    for row in rows:
        key = (row["quantity"], row["d"], row["family"], row["nu"], row["N"])
        groups.setdefault(key, []).append(row)
    out = []
    order = lambda k: (QUANTITIES.index(k[0]), k[1], k[2], -1.0 if k[3] is None else k[3], k[4])
    for key in sorted(groups, key=order):
        group = groups[key]
        est = np.array([r["estimate"] for r in group])
        analytic = group[0]["analytic"]
        errors = [abs(r["error"]) for r in group if r["error"] is not None]
        out.append({
            "quantity": key[0],
            "d": key[1],
            "family": key[2],
            "nu": key[3],
            "N": key[4],
            "n_trials": len(group),
            "mean": float(est.mean()),
            "std": float(est.std(ddof=1)) if est.size > 1 else 0.0,
            "analytic": analytic,
            "median_abs_error": float(np.median(errors)) if errors else None,
        })
    return out


def worker_count() -> int:
    limit = os.environ.get(THREADS_ENV)
    cpus = os.cpu_count() or 1
    if limit:
        try:
            return max(1, min(cpus, int(limit)))
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer, got {limit!r}") from None
    return cpus


def _checkpoint_header(params: dict) -> str:
    return json.dumps({"checkpoint": params}, sort_keys=True)


def load_checkpoint(path, params: dict) -> dict:
    """Completed rows keyed by _row_key; the header must match `params`."""
    done: dict = {}
    if not os.path.exists(path):
        return done
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        return done
    if lines[0] != _checkpoint_header(params):
        raise InputError(f"checkpoint {path} was written by a different sweep configuration")
    for line in lines[1:]:
        try:
            row = json.loads(line)
        except json.JSONDecodeError:
            break  # torn last write
        done[_row_key(row)] = row
    return done


def run_sweep(cells, sample_sizes, trials: int, seed: int, config: FitConfig,
              rho: float = 0.5, checkpoint: Optional[str] = None,
              resume: bool = False, workers: Optional[int] = None,
              progress=None) -> list:
    """Run every (cell, N, trial); returns rows sorted by cell, N and trial."""
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    if not sample_sizes:
        raise InputError("sample_sizes must be nonempty")
    params = {
        "cells": [list(c.key) for c in cells],
        "sample_sizes": list(sample_sizes),
        "trials": trials,
        "seed": seed,
        "rho": rho,
        "config": config.to_dict(),
    }
    done = load_checkpoint(checkpoint, params) if (checkpoint and resume) else {}
    jobs = []
    for cell in cells:
        for n in sample_sizes:
            for t in range(trials):
                job = (cell, int(n), t)
                key = _row_key({"quantity": cell.quantity, "d": cell.d, "family": cell.family,
                                "nu": cell.nu, "N": int(n), "trial": t})
                if key not in done:
                    jobs.append(job)

    fh = None
    if checkpoint:
        # rewritten from the parsed rows so a torn last line cannot hide later appends
        fh = open(checkpoint, "w")
        fh.write(_checkpoint_header(params) + "\n")
        for key in sorted(done):
            fh.write(json.dumps(done[key], sort_keys=True) + "\n")
        fh.flush()

    def record(row):
        done[_row_key(row)] = row
        if fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            fh.flush()
        if progress:
            progress(row)

    workers = worker_count() if workers is None else max(1, workers)
    try:
        if workers == 1 or len(jobs) <= 1:
            for cell, n, t in jobs:
                record(run_trial(cell, n, t, seed, rho, config))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_trial, cell, n, t, seed, rho, config)
                           for cell, n, t in jobs]
                for fut in futures:
                    record(fut.result())
    finally:
        if fh:
            fh.close()
    return [done[k] for k in sorted(done)]


def series_rows(aggregates: list) -> list:
    """Plot-ready rows in SERIES_COLUMNS order; empty analytic when unknown."""
    out = []
    for a in aggregates:
        out.append([
            a["quantity"], a["d"], a["family"],
            "" if a["nu"] is None else repr(a["nu"]), a["N"],
            repr(a["mean"]), repr(a["std"]),
            "" if a["analytic"] is None else repr(a["analytic"]),
        ])
    return out
