"""Information-theoretic estimators built on fitted Gaussianization flows.

Total correlation is the redundancy a flow removes on its way to an
independent Gaussian. Mutual information follows from three flows: one per
variable, then a third on the stacked latents. Entropy and negentropy are
rearrangements of the same accounting.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .data import as_array
from .errors import RankDeficient, RowCountMismatch
from .flow import FitConfig, GaussianizationFlow, fit, forward
from .univariate import entropy_hist, marginal_negentropy

# xor masks giving the second and third destructor of an MI estimate their seeds
MI_SEED_MASK_Y = 0x9E3779B97F4A7C15
MI_SEED_MASK_JOINT = 0xD1B54A32D192ED03


class Quantity(str, enum.Enum):
    TOTAL_CORRELATION = "total_correlation"
    MUTUAL_INFORMATION = "mutual_information"
    ENTROPY = "entropy"
    NEGENTROPY = "negentropy"


@dataclass(frozen=True)
class ITReport:
    """One estimate in nats plus everything needed to reproduce it.

    For total correlation, mutual information and negentropy `value` is
    clamped at zero; `raw_value` keeps the unclamped estimate.
    """

    quantity: Quantity
    value: float
    raw_value: float
    n_samples: int
    dims: Union[int, tuple]
    layer_counts: tuple
    layer_trace: tuple
    estimator_config: dict
    seed: int
    wall_time: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity.value,
            "value": self.value,
            "raw_value": self.raw_value,
            "n_samples": self.n_samples,
            "dims": list(self.dims) if isinstance(self.dims, tuple) else self.dims,
            "layer_counts": list(self.layer_counts),
            "layer_trace": list(self.layer_trace),
            "cumulative_trace": [float(v) for v in np.cumsum(self.layer_trace)],
            "estimator_config": self.estimator_config,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "diagnostics": self.diagnostics,
        }


def _flow_diagnostics(flow: GaussianizationFlow) -> dict:
    return {
        "stop_reason": flow.stop_reason.value,
        "n_layers": flow.n_layers,
        "uncorrected_total": flow.raw_total_delta_t,
        "noise_mean": flow.noise.mean,
        "noise_std": flow.noise.std,
        "noise_threshold": flow.noise.threshold,
    }


def _fit_tc(x: np.ndarray, config: FitConfig):
    flow = fit(x, config)
    return flow, flow.total_delta_t


def total_correlation(data, config: FitConfig = FitConfig()) -> ITReport:
    """T(x): sum of the per-layer redundancy removed by a fitted flow."""
    start = time.perf_counter()
    x = as_array(data)
    flow, raw = _fit_tc(x, config)
    return ITReport(
        Quantity.TOTAL_CORRELATION, max(0.0, raw), raw, x.shape[0], x.shape[1],
        (flow.n_layers,), tuple(flow.delta_ts), config.to_dict(), config.seed,
        time.perf_counter() - start, _flow_diagnostics(flow),
    )


def destroy(data, config: FitConfig) -> tuple:
    """Fit a flow and return it with its Gaussian latents of `data`."""
    flow = fit(data, config)
    z, _ = forward(flow, data)
    return flow, z


def mutual_information(x, y, config: FitConfig = FitConfig()) -> ITReport:
    """I(x, y) = T([D_x(x), D_y(y)]) with three independently seeded flows."""
    start = time.perf_counter()
    xa, ya = as_array(x), as_array(y)
    if xa.shape[0] != ya.shape[0]:
        raise RowCountMismatch(xa.shape[0], ya.shape[0])
    flow_x, zx = destroy(xa, config)
    flow_y, zy = destroy(ya, replace(config, seed=config.seed ^ MI_SEED_MASK_Y))
    joint_config = replace(config, seed=config.seed ^ MI_SEED_MASK_JOINT)
    flow_j, raw = _fit_tc(np.hstack([zx, zy]), joint_config)
    diagnostics = _flow_diagnostics(flow_j)
    diagnostics["seeds"] = [config.seed, flow_y.config.seed, joint_config.seed]
    diagnostics["residual_tc_x"] = flow_x.total_delta_t
    diagnostics["residual_tc_y"] = flow_y.total_delta_t
    return ITReport(
        Quantity.MUTUAL_INFORMATION, max(0.0, raw), raw, xa.shape[0],
        (xa.shape[1], ya.shape[1]),
        (flow_x.n_layers, flow_y.n_layers, flow_j.n_layers),
        tuple(flow_j.delta_ts), config.to_dict(), config.seed,
        time.perf_counter() - start, diagnostics,
    )


def multivariate_entropy(data, config: FitConfig = FitConfig()) -> ITReport:
    """H(x) = sum_d H(x_d) - T(x); not clamped, differential entropy can be negative."""
    start = time.perf_counter()
    x = as_array(data)
    marginal = math.fsum(entropy_hist(x[:, j], config.n_bins).value for j in range(x.shape[1]))
    flow, tc = _fit_tc(x, config)
    value = marginal - tc
    diagnostics = _flow_diagnostics(flow)
    diagnostics["marginal_entropy_sum"] = marginal
    diagnostics["total_correlation"] = tc
    return ITReport(
        Quantity.ENTROPY, value, value, x.shape[0], x.shape[1], (flow.n_layers,),
        tuple(flow.delta_ts), config.to_dict(), config.seed,
        time.perf_counter() - start, diagnostics,
    )


@dataclass(frozen=True)
class Whitening:
    """w = (x - mean) @ rotation.T / scale."""

    mean: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray

    def apply(self, data) -> np.ndarray:
        return (as_array(data) - self.mean) @ self.rotation.T / self.scale


def fit_whitening(data, rel_tol: float = 1e-12) -> Whitening:
    """PCA whitening; RankDeficient when an eigenvalue is below rel_tol x trace."""
    x = as_array(data)
    mean = x.mean(axis=0)
    c = x - mean
    cov = c.T @ c / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if evals.min() <= rel_tol * max(np.trace(cov), 0.0):
        raise RankDeficient(f"covariance is singular (min eigenvalue {evals.min():.3g})")
    order = np.argsort(-evals, kind="stable")
    return Whitening(mean, evecs[:, order].T.copy(), np.sqrt(evals[order]))


def negentropy(data, config: FitConfig = FitConfig()) -> ITReport:
    """J(x) = sum_d J_m(w_d) + T(w) for the whitened data w."""
    start = time.perf_counter()
    x = as_array(data)
    white = fit_whitening(x)
    w = white.apply(x)
    marginal = math.fsum(marginal_negentropy(w[:, j], config.n_bins).raw for j in range(w.shape[1]))
    flow, tc = _fit_tc(w, config)
    raw = marginal + tc
    diagnostics = _flow_diagnostics(flow)
    diagnostics["marginal_negentropy_sum"] = marginal
    diagnostics["total_correlation"] = tc
    diagnostics["whitening"] = {
        "mean": white.mean.tolist(),
        "rotation": white.rotation.tolist(),
        "scale": white.scale.tolist(),
    }
    return ITReport(
        Quantity.NEGENTROPY, max(0.0, raw), raw, x.shape[0], x.shape[1], (flow.n_layers,),
        tuple(flow.delta_ts), config.to_dict(), config.seed,
        time.perf_counter() - start, diagnostics,
    )


ESTIMATORS = {
    Quantity.TOTAL_CORRELATION: total_correlation,
    Quantity.ENTROPY: multivariate_entropy,
    Quantity.NEGENTROPY: negentropy,
}


def estimate(quantity, data, config: FitConfig = FitConfig(), other=None) -> ITReport:
    """Dispatch by quantity; `other` is the second variable for mutual information."""
    quantity = Quantity(quantity)
    if quantity is Quantity.MUTUAL_INFORMATION:
        if other is None:
            raise TypeError("mutual information needs a second data matrix")
        return mutual_information(data, other, config)
    return ESTIMATORS[quantity](data, config)
