"""Seeded synthetic generators and closed-form Gaussian oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import DataMatrix, make_rng
from .errors import InputError, NotPositiveDefinite

_JITTER = 1e-12


def equicorrelation(d: int, rho: float) -> np.ndarray:
    """Unit-diagonal d x d matrix with every off-diagonal entry equal to rho.

    Positive definite for -1/(d-1) < rho < 1; det = (1-rho)^(d-1) (1+(d-1)rho).
    """
    if d < 1:
        raise InputError(f"d must be >= 1, got {d}")
    r = np.full((d, d), float(rho))
    np.fill_diagonal(r, 1.0)
    return r


def cholesky(matrix) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a 1e-12 diagonal jitter."""
    a = np.asarray(matrix, dtype=np.float64)
    a = 0.5 * (a + a.T)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(a + _JITTER * np.eye(a.shape[0]))
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("correlation matrix is not positive definite") from None


def _check_correlation(r) -> np.ndarray:
    r = np.array(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise InputError(f"correlation must be square, got shape {r.shape}")
    if not np.allclose(r, r.T, atol=1e-12):
        raise InputError("correlation must be symmetric")
    if not np.allclose(np.diag(r), 1.0, atol=1e-12):
        raise InputError("correlation must have ones on the diagonal")
    cholesky(r)
    r.setflags(write=False)
    return r


@dataclass(frozen=True)
class GaussianSpec:
    correlation: np.ndarray
    mean: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None

    def __post_init__(self):
        r = _check_correlation(self.correlation)
        d = r.shape[0]
        mean = np.zeros(d) if self.mean is None else np.asarray(self.mean, dtype=np.float64)
        scales = np.ones(d) if self.scales is None else np.asarray(self.scales, dtype=np.float64)
        if mean.shape != (d,) or scales.shape != (d,):
            raise InputError(f"mean and scales must have length {d}")
        if np.any(scales <= 0):
            raise InputError("scales must be positive")
        object.__setattr__(self, "correlation", r)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scales", scales)

    @property
    def d(self) -> int:
        return self.correlation.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self.correlation * np.outer(self.scales, self.scales)

    @classmethod
    def equicorrelated(cls, d: int, rho: float) -> "GaussianSpec":
        return cls(equicorrelation(d, rho))


@dataclass(frozen=True)
class StudentSpec:
    nu: float
    correlation: np.ndarray

    def __post_init__(self):
        if not self.nu > 0:
            raise InputError(f"nu must be positive, got {self.nu}")
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "correlation", _check_correlation(self.correlation))

    @property
    def dims(self) -> int:
        return self.correlation.shape[0]

    @property
    def finite_covariance(self) -> bool:
        return self.nu > 2

    @classmethod
    def equicorrelated(cls, d: int, nu: float, rho: float = 0.5) -> "StudentSpec":
        return cls(nu, equicorrelation(d, rho))


@dataclass(frozen=True)
class CirclesSpec:
    n_rings: int = 2
    radii: tuple = (1.0, 2.0)
    radial_noise: float = 0.1

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        if self.n_rings < 1 or len(radii) != self.n_rings:
            raise InputError("need one radius per ring and at least one ring")
        if radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
            raise InputError("radii must be positive and strictly increasing")
        if not self.radial_noise > 0:
            raise InputError("radial_noise must be positive")
        if len(radii) > 1:
            gap = min(b - a for a, b in zip(radii, radii[1:]))
            if self.radial_noise >= gap / 2:
                raise InputError("radial_noise must be below half the smallest ring gap")


def _check_n(n: int):
    if n < 2:
        raise InputError(f"n must be >= 2, got {n}")


def sample_gaussian(spec: GaussianSpec, n: int, seed) -> DataMatrix:
    _check_n(n)
    rng = make_rng(seed)
    chol = cholesky(spec.covariance)
    z = rng.standard_normal((n, spec.d))
    return DataMatrix(spec.mean + z @ chol.T)


def sample_student(spec: StudentSpec, n: int, seed) -> DataMatrix:
    """x = z / sqrt(g / nu), z ~ N(0, R), g ~ chi2(nu) independent per row."""
    _check_n(n)
    rng = make_rng(seed)
    chol = cholesky(spec.correlation)
    z = rng.standard_normal((n, spec.dims)) @ chol.T
    g = rng.chisquare(spec.nu, size=n)
    return DataMatrix(z / np.sqrt(g / spec.nu)[:, None])


def sample_circles(spec: CirclesSpec, n: int, seed) -> DataMatrix:
    _check_n(n)
    rng = make_rng(seed)
    ring = rng.integers(0, spec.n_rings, size=n)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    radius = np.asarray(spec.radii)[ring] + spec.radial_noise * rng.standard_normal(n)
    return DataMatrix(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]))


def _log_diag(r: np.ndarray) -> list:
    # ln det R = 2 * sum of these
    return [float(v) for v in np.log(np.diag(cholesky(r)))]


def gaussian_total_correlation(spec: GaussianSpec) -> float:
    """T = -1/2 ln det R."""
    return 0.0 - math.fsum(_log_diag(spec.correlation))


def gaussian_mutual_information(spec: GaussianSpec, split: int) -> float:
    """I between columns [:split] and [split:]: -1/2 ln(det R / (det R_a det R_b))."""
    r = spec.correlation
    if not 1 <= split < r.shape[0]:
        raise InputError(f"split must lie in [1, {r.shape[0] - 1}], got {split}")
    terms = _log_diag(r)
    terms += [-v for v in _log_diag(r[:split, :split]) + _log_diag(r[split:, split:])]
    # one exactly-rounded sum so independent blocks give 0 exactly
    return 0.0 - math.fsum(terms)
