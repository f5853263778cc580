"""Dataset container, sample splitting, and nuisance parameter fits.

The nuisance parameters are the propensity score (probability of treatment
given covariates) and the per-arm conditional outcome CDFs. Both are fitted
with Nadaraya-Watson regression on the first data split and evaluated on the
second, so that estimation noise in the nuisances is independent of the rows
used for the downstream pseudo-outcome regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, nw_regress, nw_weight_matrix, resolve_weights

_QUANTILE_SLACK = 1e-9


class SingleArmError(ValueError):
    """A fit that needs both treatment arms saw only one."""


def step_quantile(jumps: np.ndarray, cum: np.ndarray, alpha: float) -> float:
    """Generalised inverse of a step CDF given its jump points and cumulative mass.

    Returns the smallest jump point whose cumulative mass reaches alpha; at
    alpha = 0 that is the smallest jump point. A small slack absorbs float
    round-off in cumulative sums that should reach exactly one.
    """
    pos = int(np.searchsorted(cum, alpha, side="left"))
    if pos >= cum.size:
        if alpha <= cum[-1] + _QUANTILE_SLACK:
            pos = cum.size - 1
        else:
            raise ValueError(f"alpha={alpha} above attainable CDF mass {cum[-1]}")
    return float(jumps[pos])


@dataclass
class Dataset:
    """Observations (outcome, covariate vector, binary treatment).

    ``x`` is coerced to an (n, d) float array; one-dimensional input is
    treated as a single covariate.
    """

    y: np.ndarray
    x: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.a = np.asarray(self.a)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise ValueError("covariates must form an (n, d) array")
        self.x = x
        if self.y.size == 0:
            raise ValueError("dataset must be nonempty")
        if not (self.y.size == self.x.shape[0] == self.a.shape[0]):
            raise ValueError("y, x, a must have equal length")
        if not np.isin(self.a, (0, 1)).all():
            raise ValueError("treatment indicator must be 0 or 1")
        self.a = self.a.astype(np.int64)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def arm_indices(self, arm: int) -> np.ndarray:
        return np.nonzero(self.a == arm)[0]

    def arm_count(self, arm: int) -> int:
        return int((self.a == arm).sum())

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.y[idx], self.x[idx], self.a[idx])


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint half/half index partition of a dataset."""

    indices_1: np.ndarray
    indices_2: np.ndarray
    seed: int

    def swapped(self) -> "SplitPlan":
        return SplitPlan(self.indices_2, self.indices_1, self.seed)


def make_split(dataset: Dataset, seed: int) -> SplitPlan:
    """Uniformly random half/half partition, deterministic given the seed."""
    if dataset.n < 4:
        raise ValueError("dataset too small to split (need at least 4 rows)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n)
    half = dataset.n // 2
    return SplitPlan(
        indices_1=np.sort(perm[:half]),
        indices_2=np.sort(perm[half:]),
        seed=seed,
    )


class PropensityEvaluator:
    """NW regression of the treatment indicator, clamped into [xi, 1 - xi]."""

    def __init__(self, kernel: KernelSpec, xs, treatments, xi: float):
        if not 0.0 < xi <= 0.5:
            raise ValueError("xi must lie in (0, 0.5]")
        self.kernel = kernel
        self.xs = np.asarray(xs, dtype=float)
        self.treatments = np.asarray(treatments, dtype=float)
        self.xi = xi
        if not (0 < self.treatments.sum() < self.treatments.size):
            raise SingleArmError("propensity fit needs both treatment arms")

    def __call__(self, x) -> float:
        raw = nw_regress(self.kernel, x, self.xs, self.treatments)
        return float(np.clip(raw, self.xi, 1.0 - self.xi))

    def many(self, xs) -> np.ndarray:
        w = nw_weight_matrix(self.kernel, xs, self.xs)
        return np.clip(w @ self.treatments, self.xi, 1.0 - self.xi)


class CcdfEvaluator:
    """Arm-masked NW step CDF of the outcome given covariates.

    For a fixed arm and covariate value this is a right-continuous step
    function of y jumping at the arm's observed outcomes, with weights
    normalised over that arm only.
    """

    def __init__(self, kernel: KernelSpec, xs, ys, arms):
        self.kernel = kernel
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.arms = np.asarray(arms)
        self._arm_rows = {}
        for arm in (0, 1):
            idx = np.nonzero(self.arms == arm)[0]
            if idx.size == 0:
                raise SingleArmError(f"no observations in arm {arm}")
            order = np.argsort(self.ys[idx], kind="stable")
            self._arm_rows[arm] = (idx[order], self.ys[idx][order])

    def arm_outcomes(self, arm: int) -> np.ndarray:
        """Outcomes of the given arm, ascending (the CDF's jump points)."""
        return self._arm_rows[arm][1]

    def weight_row(self, arm: int, x) -> np.ndarray:
        """Policy-resolved weights over the arm's rows, in jump-point order."""
        idx, _ = self._arm_rows[arm]
        return resolve_weights(self.kernel, x, self.xs[idx]).weights

    def weight_matrix(self, arm: int, queries) -> np.ndarray:
        idx, _ = self._arm_rows[arm]
        return nw_weight_matrix(self.kernel, queries, self.xs[idx])

    def __call__(self, arm: int, y: float, x) -> float:
        # Shares the cumulative-mass path with ``quantile`` so the
        # generalised-inverse round-trip laws hold exactly in floats.
        _, jumps = self._arm_rows[arm]
        pos = int(np.searchsorted(jumps, y, side="right")) - 1
        if pos < 0:
            return 0.0
        cum = np.cumsum(self.weight_row(arm, x))
        return min(float(cum[pos]), 1.0)

    def cdf_table(self, arm: int, ys, queries) -> np.ndarray:
        """CDF values F(ys[l] | queries[j], arm) as a (len(queries), len(ys)) table."""
        ys = np.asarray(ys, dtype=float).reshape(-1)
        _, jumps = self._arm_rows[arm]
        indicators = (jumps[:, None] <= ys[None, :]).astype(float)
        return np.clip(self.weight_matrix(arm, queries) @ indicators, 0.0, 1.0)

    def quantile(self, arm: int, alpha: float, x) -> float:
        """Generalised inverse inf{y : F(y) >= alpha} over the jump points."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        _, jumps = self._arm_rows[arm]
        cum = np.cumsum(self.weight_row(arm, x))
        return step_quantile(jumps, cum, alpha)


def fit_propensity(dataset: Dataset, kernel: KernelSpec, xi: float = 0.05) -> PropensityEvaluator:
    return PropensityEvaluator(kernel, dataset.x, dataset.a, xi)


def fit_ccdf(dataset: Dataset, kernel: KernelSpec) -> CcdfEvaluator:
    return CcdfEvaluator(kernel, dataset.x, dataset.y, dataset.a)


def ccdf_generalised_inverse(ccdf: CcdfEvaluator, arm: int, alpha: float, x) -> float:
    return ccdf.quantile(arm, alpha, x)


@dataclass
class NuisanceModel:
    """Fitted propensity and CCDF evaluators, plus the training rows."""

    propensity: PropensityEvaluator
    ccdf: CcdfEvaluator
    xi: float
    rows: Dataset | None = None


def fit_nuisance(dataset: Dataset, kernel: KernelSpec, xi: float = 0.05) -> NuisanceModel:
    """Fit both nuisances on one split of the data."""
    return NuisanceModel(
        propensity=fit_propensity(dataset, kernel, xi),
        ccdf=fit_ccdf(dataset, kernel),
        xi=xi,
        rows=dataset,
    )
