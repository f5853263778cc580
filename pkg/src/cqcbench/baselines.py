"""Comparison estimators and the uniform estimator harness contract.

Three baselines ship alongside the doubly robust estimator: a separate
plug-in that estimates the two arm CDFs independently and composes the
generalised inverse with the untreated CDF, an IPW pseudo-outcome variant of
the main pipeline, and the oracle that runs the main pipeline with exact
nuisances. The estimator classes at the bottom share one contract -- ``fit``
on a dataset and a seed, get back a batch predictor -- so the Monte-Carlo
runner treats all of them identically.

The separate plug-in and the oracle both use the full sample: the plug-in
has no pseudo-outcome stage to de-correlate, and the oracle's nuisances carry
no estimation noise, so sample splitting would only discard data.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .estimator import (
    ContrastFit,
    build_grid,
    cross_fit_contrast,
    estimate_cqc_many,
    fit_contrast,
    fit_oracle_contrast,
)
from .kernels import KernelSpec
from .nuisance import Dataset, SplitPlan, fit_ccdf, make_split, step_quantile
from .pseudo import PseudoOutcomeKind


class BaselineKind(str, Enum):
    SEPARATE_PLUGIN = "separate_plugin"
    IPW = "ipw"
    ORACLE_DR = "oracle_dr"


def separate_plugin_cqc(dataset: Dataset, kernel: KernelSpec, y0: float, x) -> float:
    """Plug-in estimate: arm-1 generalised inverse at the arm-0 CDF value.

    Fits arm-masked NW step CDFs on the full sample; the returned value is
    always an observed treated outcome.
    """
    ccdf = fit_ccdf(dataset, kernel)
    alpha = ccdf(0, y0, x)
    return ccdf.quantile(1, alpha, x)


def ipw_cqc(
    dataset: Dataset,
    split: SplitPlan,
    nuisance_kernel: KernelSpec,
    outer_kernel: KernelSpec,
    xi: float,
    y0: float,
    x,
    grid,
) -> float:
    """Main pipeline with the IPW pseudo-outcome; projection must be a no-op."""
    contrast = fit_contrast(
        dataset, split, nuisance_kernel, outer_kernel, kind=PseudoOutcomeKind.IPW, xi=xi
    )
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    g_hat, _, _ = estimate_cqc_many(
        contrast, grid, np.array([y0]), x_arr.reshape(1, -1), require_monotone=True
    )
    return float(g_hat[0])


def oracle_dr_cqc(
    dataset: Dataset,
    exact_nuisance,
    outer_kernel: KernelSpec,
    y0: float,
    x,
    grid,
    xi: float = 0.05,
) -> float:
    """Main pipeline with exact nuisances and no sample split."""
    contrast = fit_oracle_contrast(dataset, exact_nuisance, outer_kernel, xi=xi)
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    g_hat, _, _ = estimate_cqc_many(contrast, grid, np.array([y0]), x_arr.reshape(1, -1))
    return float(g_hat[0])


class _ContrastPredictor:
    """Batch predictor over a fitted contrast and a fixed grid."""

    def __init__(self, contrast: ContrastFit, grid: np.ndarray, require_monotone: bool):
        self.contrast = contrast
        self.grid = grid
        self.require_monotone = require_monotone

    def __call__(self, y0s, xs) -> np.ndarray:
        g_hat, _, _ = estimate_cqc_many(
            self.contrast, self.grid, y0s, xs, require_monotone=self.require_monotone
        )
        return g_hat


class _SeparatePredictor:
    def __init__(self, ccdf):
        self.ccdf = ccdf

    def __call__(self, y0s, xs) -> np.ndarray:
        y0s = np.asarray(y0s, dtype=float).reshape(-1)
        jumps0 = self.ccdf.arm_outcomes(0)
        jumps1 = self.ccdf.arm_outcomes(1)
        w0 = self.ccdf.weight_matrix(0, xs)
        w1 = self.ccdf.weight_matrix(1, xs)
        alphas = np.einsum("qi,iq->q", w0, (jumps0[:, None] <= y0s[None, :]).astype(float))
        cums = np.cumsum(w1, axis=1)
        out = np.empty(y0s.size)
        for q in range(y0s.size):
            out[q] = step_quantile(jumps1, cums[q], alphas[q])
        return out


def _resolve_grid(dataset: Dataset, grid_policy: str, grid_count: int | None) -> np.ndarray:
    return build_grid(dataset, grid_policy, grid_count)


class DrEstimator:
    """Doubly robust pipeline packaged for the Monte-Carlo harness."""

    name = "dr"
    kind = PseudoOutcomeKind.DR

    def __init__(
        self,
        nuisance_kernel: KernelSpec,
        outer_kernel: KernelSpec,
        xi: float = 0.05,
        cross_fit: bool = False,
        grid_policy: str = "treated",
        grid_count: int | None = None,
    ):
        self.nuisance_kernel = nuisance_kernel
        self.outer_kernel = outer_kernel
        self.xi = xi
        self.cross_fit = cross_fit
        self.grid_policy = grid_policy
        self.grid_count = grid_count

    def fit(self, dataset: Dataset, seed: int, truth=None) -> _ContrastPredictor:
        grid = _resolve_grid(dataset, self.grid_policy, self.grid_count)
        if self.cross_fit:
            contrast = cross_fit_contrast(
                dataset, seed, self.nuisance_kernel, self.outer_kernel, self.kind, self.xi
            )
        else:
            contrast = fit_contrast(
                dataset,
                make_split(dataset, seed),
                self.nuisance_kernel,
                self.outer_kernel,
                self.kind,
                self.xi,
            )
        return _ContrastPredictor(
            contrast, grid, require_monotone=self.kind is PseudoOutcomeKind.IPW
        )


class IpwEstimator(DrEstimator):
    """IPW pseudo-outcome pipeline; pre-projection profiles must be monotone."""

    name = "ipw"
    kind = PseudoOutcomeKind.IPW


class SeparateEstimator:
    """Separate plug-in baseline on the full sample."""

    name = "separate"

    def __init__(self, kernel: KernelSpec):
        self.kernel = kernel

    def fit(self, dataset: Dataset, seed: int, truth=None) -> _SeparatePredictor:
        return _SeparatePredictor(fit_ccdf(dataset, self.kernel))


class OracleEstimator:
    """Main pipeline with exact nuisances; valid only with a simulation truth."""

    name = "oracle"

    def __init__(
        self,
        outer_kernel: KernelSpec,
        xi: float = 0.05,
        grid_policy: str = "treated",
        grid_count: int | None = None,
    ):
        self.outer_kernel = outer_kernel
        self.xi = xi
        self.grid_policy = grid_policy
        self.grid_count = grid_count

    def fit(self, dataset: Dataset, seed: int, truth=None) -> _ContrastPredictor:
        if truth is None:
            raise ValueError("oracle estimator needs exact nuisances from a simulation")
        grid = _resolve_grid(dataset, self.grid_policy, self.grid_count)
        contrast = fit_oracle_contrast(dataset, truth, self.outer_kernel, xi=self.xi)
        return _ContrastPredictor(contrast, grid, require_monotone=False)
