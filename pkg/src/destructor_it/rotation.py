"""Orthogonal rotations applied between marginal Gaussianization steps."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import DataMatrix, as_array, make_rng
from .errors import DimensionMismatch, InputError, RankDeficientWarning

ORTHO_TOL = 1e-10


class RotationKind(str, enum.Enum):
    PCA = "pca"
    RANDOM = "random"


@dataclass(frozen=True)
class RotationMatrix:
    """d x d orthogonal matrix; rows are the new axes (y = x @ matrix.T)."""

    matrix: np.ndarray
    kind: RotationKind = RotationKind.PCA
    seed: Optional[int] = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"rotation must be square, got shape {m.shape}")
        err = np.max(np.abs(m @ m.T - np.eye(m.shape[0])))
        if err >= ORTHO_TOL:
            raise InputError(f"matrix is not orthogonal (max |R R^T - I| = {err:.3g})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "kind", RotationKind(self.kind))

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, d: int) -> "RotationMatrix":
        return cls(np.eye(d), RotationKind.PCA)


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    # columns: largest-magnitude entry made positive; among entries tied up to
    # round-off the first one is the pivot
    mags = np.abs(vectors)
    pivots = np.argmax(mags >= mags.max(axis=0) - 1e-12, axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def pca_rotation(data) -> RotationMatrix:
    """Rows are covariance eigenvectors by descending eigenvalue.

    Ties in eigenvalue are ordered lexicographically by the (sign-fixed)
    eigenvector. Emits RankDeficientWarning when an eigenvalue falls below
    1e-12 x trace; the rotation is still returned.
    """
    x = as_array(data)
    d = x.shape[1]
    if d == 1:
        return RotationMatrix(np.ones((1, 1)), RotationKind.PCA)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    evecs = _sign_fix(evecs)
    order = sorted(range(d), key=lambda i: (-evals[i], tuple(evecs[:, i])))
    trace = np.trace(cov)
    if evals.min() < 1e-12 * trace:
        warnings.warn(
            f"covariance is rank deficient (min eigenvalue {evals.min():.3g})",
            RankDeficientWarning,
            stacklevel=2,
        )
    return RotationMatrix(evecs[:, order].T.copy(), RotationKind.PCA)


def random_rotation(d: int, seed) -> RotationMatrix:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-corrected)."""
    if d < 1:
        raise InputError(f"d must be >= 1, got {d}")
    rng = make_rng(seed)
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return RotationMatrix(q, RotationKind.RANDOM, int(seed))


def rotate(data, r: RotationMatrix, inverse: bool = False):
    """Rotate every sample row; returns the same container type it was given."""
    x = as_array(data)
    if x.shape[1] != r.d:
        raise DimensionMismatch(r.d, x.shape[1])
    out = x @ r.matrix if inverse else x @ r.matrix.T
    if isinstance(data, DataMatrix):
        return DataMatrix(out, data.column_names)
    return out
