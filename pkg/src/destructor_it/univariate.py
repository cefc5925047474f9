"""Per-dimension building blocks.

A marginal map composes a piecewise-linear empirical CDF with either the
standard-normal quantile (marginal Gaussianization) or the identity
(uniformization). Both maps are extended with analytic tails, so each is a
strictly increasing bijection onto the real line (Gaussian target) or onto
(0, 1) (identity target).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, ndtr, ndtri

from .errors import DegenerateDimension, InputError, OutOfDomain, TooFewSamples

MAX_KNOTS = 1000
MIN_KNOTS = 8
DEFAULT_CLAMP = 1e-6
TAIL_FRACTION = 0.1
MAX_BINS = 1000
TAIL_Z_STEP = 0.02
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# above this many points a map is evaluated on sorted input; table lookups
# then start from the previous hit instead of a fresh binary search
_SORT_MIN = 512


def _on_sorted(fn, v):
    if v.ndim != 1 or v.size < _SORT_MIN:
        return fn(v)
    order = np.argsort(v)
    results = fn(v[order])
    single = not isinstance(results, tuple)
    out = []
    for r in ((results,) if single else results):
        if r is None:
            out.append(None)
            continue
        back = np.empty_like(r)
        back[order] = r
        out.append(back)
    return out[0] if single else tuple(out)


class Target(str, enum.Enum):
    GAUSSIAN = "gaussian"
    IDENTITY = "identity"


class Correction(str, enum.Enum):
    NONE = "none"
    MILLER_MADOW = "miller-madow"


@dataclass(frozen=True)
class EmpiricalCdf:
    """Piecewise-linear CDF through rank statistics.

    `support[0]` and `support[-1]` are the padded ends, where the CDF equals
    `clamp_epsilon` and `1 - clamp_epsilon`.
    """

    support: np.ndarray
    cdf_values: np.ndarray
    tail_extension: float
    clamp_epsilon: float
    n_samples: int

    def __post_init__(self):
        for name in ("support", "cdf_values"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.support.shape != self.cdf_values.shape or self.support.size < 2:
            raise InputError("support and cdf_values must be equal-length vectors")
        if np.any(np.diff(self.support) <= 0) or np.any(np.diff(self.cdf_values) <= 0):
            raise InputError("CDF knots must be strictly increasing")
        with np.errstate(over="ignore"):
            slopes = np.diff(self.cdf_values) / np.diff(self.support)
        if not np.all(np.isfinite(slopes)):
            raise DegenerateDimension("knots too close together for a finite density")
        slopes.setflags(write=False)
        object.__setattr__(self, "_slopes", slopes)
        # exact for levels >= 0.5; lets the upper half keep relative precision
        sf = 1.0 - self.cdf_values
        sf.setflags(write=False)
        object.__setattr__(self, "_sf", sf)

    @property
    def slopes(self) -> np.ndarray:
        return self._slopes

    def __call__(self, v):
        return np.interp(v, self.support, self.cdf_values)

    def quantile(self, u):
        return np.interp(u, self.cdf_values, self.support)

    def survival(self, v):
        """1 - F(v), interpolated directly so values near 0 are not rounded away."""
        return np.interp(v, self.support, self._sf)

    def quantile_sf(self, s):
        return np.interp(s, self._sf[::-1], self.support[::-1])

    def segment(self, v) -> np.ndarray:
        idx = np.searchsorted(self.support, v, side="right") - 1
        return np.clip(idx, 0, self.support.size - 2)

    def density(self, v):
        """Piecewise-constant density (the CDF slope); zero outside the support."""
        v = np.asarray(v, dtype=np.float64)
        dens = self._slopes[self.segment(v)]
        return np.where((v < self.support[0]) | (v > self.support[-1]), 0.0, dens)


def fit_empirical_cdf(samples, n_knots: int = MAX_KNOTS,
                      clamp_epsilon: float = DEFAULT_CLAMP) -> EmpiricalCdf:
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n_knots < MIN_KNOTS:
        raise InputError(f"n_knots must be >= {MIN_KNOTS}, got {n_knots}")
    if not 0.0 < clamp_epsilon < 0.01:
        raise InputError(f"clamp_epsilon must lie in (0, 0.01), got {clamp_epsilon}")
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    if x[0] == x[-1]:
        raise DegenerateDimension("all samples are equal")

    k = min(n, n_knots)
    idx = np.round(np.linspace(0, n - 1, k)).astype(np.int64)
    if TAIL_Z_STEP:
        zgrid = np.arange(-9.0, 9.0 + TAIL_Z_STEP / 2, TAIL_Z_STEP)
        tail_idx = np.floor(ndtr(zgrid) * n).astype(np.int64)
        idx = np.concatenate([idx, np.clip(tail_idx, 0, n - 1)])
    idx = np.unique(idx)
    knots = x[idx]
    levels = (idx + 0.5) / n
    # tied knot values share one level: the mean of the tied ranks
    knots, inverse = np.unique(knots, return_inverse=True)
    levels = np.bincount(inverse, weights=levels) / np.bincount(inverse)

    levels = np.clip(levels, 2 * clamp_epsilon, 1 - 2 * clamp_epsilon)
    keep = np.concatenate([[True], np.diff(levels) > 0])
    knots, levels = knots[keep], levels[keep]

    pad = TAIL_FRACTION * (x[-1] - x[0])
    support = np.concatenate([[x[0] - pad], knots, [x[-1] + pad]])
    cdf = np.concatenate([[clamp_epsilon], levels, [1 - clamp_epsilon]])
    return EmpiricalCdf(support, cdf, pad, clamp_epsilon, n)


@dataclass(frozen=True)
class MarginalMap:
    """Monotone univariate map: Phi^-1(F(v)) or F(v), with analytic tails.

    Gaussian target: beyond the outermost sample knots the map is linear in
    the output, reaching Phi^-1(eps) and Phi^-1(1 - eps) at the padded ends
    and continuing with the same slope. Identity target: exponential tails
    outside the padded support.
    """

    cdf: EmpiricalCdf
    target: Target = Target.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "target", Target(self.target))
        c = self.cdf
        eps = c.clamp_epsilon
        if self.target is Target.GAUSSIAN:
            lo, hi = c.support[1], c.support[-2]
            y_lo, y_hi = float(ndtri(c.cdf_values[1])), -float(ndtri(c._sf[-2]))
            s_lo = (y_lo - float(ndtri(eps))) / (lo - c.support[0])
            s_hi = (-float(ndtri(eps)) - y_hi) / (c.support[-1] - hi)
        else:
            lo, hi = c.support[0], c.support[-1]
            y_lo, y_hi = eps, 1 - eps
            s_lo, s_hi = c.slopes[0] / eps, c.slopes[-1] / eps
        object.__setattr__(self, "_bounds", (float(lo), float(hi)))
        object.__setattr__(self, "_tails", (y_lo, y_hi, s_lo, s_hi))

    @property
    def clamp_epsilon(self) -> float:
        return self.cdf.clamp_epsilon

    def _gaussianize(self, v):
        # upper half through the survival function: Phi^-1(F) = -Phi^-1(1 - F)
        u = self.cdf(v)
        upper = u > 0.5
        if not upper.any():
            return ndtri(u)
        y = np.empty_like(u)
        y[~upper] = ndtri(u[~upper])
        y[upper] = -ndtri(self.cdf.survival(v[upper]))
        return y

    def forward(self, v):
        return self.forward_with_log_derivative(v, False)[0]

    def forward_with_log_derivative(self, v, with_logd: bool = True):
        v = np.asarray(v, dtype=np.float64)
        return _on_sorted(lambda s: self._forward(s, with_logd), v)

    def _forward(self, v, with_logd: bool):
        lo, hi = self._bounds
        y_lo, y_hi, s_lo, s_hi = self._tails
        below, above = v < lo, v > hi
        tails = below.any() or above.any()
        logd = None
        if self.target is Target.GAUSSIAN:
            y = self._gaussianize(v)
            if with_logd:
                log_slope = np.log(self.cdf.slopes[self.cdf.segment(v)])
                logd = log_slope + 0.5 * y * y + _LOG_SQRT_2PI
            if tails:
                y = np.where(below, y_lo + s_lo * (v - lo), y)
                y = np.where(above, y_hi + s_hi * (v - hi), y)
                if with_logd:
                    logd = np.where(below, math.log(s_lo), logd)
                    logd = np.where(above, math.log(s_hi), logd)
            return y, logd
        y = self.cdf(v)
        if with_logd:
            logd = np.log(self.cdf.slopes[self.cdf.segment(v)])
        if tails:
            eps = self.cdf.clamp_epsilon
            y = np.where(below, eps * np.exp(s_lo * np.minimum(v - lo, 0.0)), y)
            y = np.where(above, 1 - eps * np.exp(-s_hi * np.maximum(v - hi, 0.0)), y)
            if with_logd:
                logd = np.where(below, np.log(self.cdf.slopes[0]) + s_lo * (v - lo), logd)
                logd = np.where(above, np.log(self.cdf.slopes[-1]) - s_hi * (v - hi), logd)
        return y, logd

    def log_abs_derivative(self, v):
        return self.forward_with_log_derivative(v)[1]

    def inverse(self, y):
        y = np.asarray(y, dtype=np.float64)
        return _on_sorted(self._inverse, y)

    def _inverse(self, y):
        lo, hi = self._bounds
        y_lo, y_hi, s_lo, s_hi = self._tails
        below, above = y < y_lo, y > y_hi
        if self.target is Target.GAUSSIAN:
            upper = y > 0
            v = np.empty_like(y)
            v[~upper] = self.cdf.quantile(ndtr(y[~upper]))
            v[upper] = self.cdf.quantile_sf(ndtr(-y[upper]))
            if below.any() or above.any():
                v = np.where(below, lo + (y - y_lo) / s_lo, v)
                v = np.where(above, hi + (y - y_hi) / s_hi, v)
            return v
        if np.any((y <= 0) | (y >= 1)):
            raise OutOfDomain("uniform-target inverse needs values in (0, 1)")
        v = self.cdf.quantile(y)
        if below.any() or above.any():
            eps = self.cdf.clamp_epsilon
            with np.errstate(divide="ignore", invalid="ignore"):
                v = np.where(below, lo + np.log(y / eps) / s_lo, v)
                v = np.where(above, hi - np.log((1 - y) / eps) / s_hi, v)
        return v

    def insample_log_slope_bias(self) -> float:
        """Expected excess of the mean log-slope over the true log-density when
        the slope is evaluated at the sample it was fitted on.

        A segment spanning c sample gaps has a slope whose log is biased by
        ln c - psi(c) - (ln N - psi(N + 1)) (uniform order-statistic spacings).
        Weighted by the number of fitted samples landing in each segment.
        """
        n = self.cdf.n_samples
        levels = self.cdf.cdf_values[1:-1]
        if levels.size < 2:
            return 0.0
        gaps = np.diff(levels) * n
        gaps = gaps[gaps >= 1.0 - 1e-9]
        per_seg = np.log(gaps) - digamma(gaps)
        correction = np.sum(gaps * per_seg) / np.sum(gaps)
        return float(correction - (math.log(n) - digamma(n + 1)))


def fit_marginal(samples, target=Target.GAUSSIAN, n_knots: int = MAX_KNOTS,
                 clamp_epsilon: float = DEFAULT_CLAMP) -> MarginalMap:
    return MarginalMap(fit_empirical_cdf(samples, n_knots, clamp_epsilon), Target(target))


def fit_transform_marginal(samples, target=Target.GAUSSIAN, n_knots: int = MAX_KNOTS,
                           clamp_epsilon: float = DEFAULT_CLAMP):
    """fit_marginal followed by forward on the same samples, sharing one sort."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    order = np.argsort(x)
    xs = x[order]
    m = fit_marginal(xs, target, n_knots, clamp_epsilon)
    y = np.empty_like(xs)
    y[order] = m._forward(xs, False)[0]
    return m, y


def apply_marginal(marginal: MarginalMap, value):
    return marginal.forward(value)


def inverse_marginal(marginal: MarginalMap, value):
    return marginal.inverse(value)


def log_abs_derivative(marginal: MarginalMap, value):
    return marginal.log_abs_derivative(value)


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    n_samples: int
    n_bins: int
    correction: Correction
    occupied_bins: int


def default_bins(n: int) -> int:
    return min(int(math.ceil(math.sqrt(n))), MAX_BINS)


def entropy_hist(samples, n_bins: int | None = None,
                 correction=Correction.MILLER_MADOW) -> EntropyEstimate:
    """Differential entropy (nats) from an equal-width histogram over the sample range."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < 32:
        raise TooFewSamples(f"entropy_hist needs at least 32 samples, got {n}")
    if n_bins is None:
        n_bins = default_bins(n)
    if n_bins < 4:
        raise InputError(f"n_bins must be >= 4, got {n_bins}")
    correction = Correction(correction)
    lo, hi = x.min(), x.max()
    if hi <= lo:
        raise DegenerateDimension("zero range")
    counts = np.histogram(x, bins=n_bins, range=(lo, hi))[0]
    counts = counts[counts > 0]
    p = counts / n
    h = -np.sum(p * np.log(p)) + math.log((hi - lo) / n_bins)
    if correction is Correction.MILLER_MADOW:
        h += (counts.size - 1) / (2.0 * n)
    return EntropyEstimate(float(h), n, int(n_bins), correction, int(counts.size))


@dataclass(frozen=True)
class NegentropyEstimate:
    """KLD of a marginal to its moment-matched Gaussian; `value` is clamped at 0."""

    value: float
    raw: float
    variance: float
    entropy: EntropyEstimate


def gaussian_entropy(variance: float) -> float:
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)


def marginal_negentropy(samples, n_bins: int | None = None,
                        correction=Correction.MILLER_MADOW) -> NegentropyEstimate:
    x = np.asarray(samples, dtype=np.float64).ravel()
    var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    if not var > 0:
        raise DegenerateDimension("zero variance")
    h = entropy_hist(x, n_bins, correction)
    raw = gaussian_entropy(var) - h.value
    return NegentropyEstimate(max(0.0, raw), raw, var, h)
