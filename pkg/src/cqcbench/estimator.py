"""Doubly robust estimation of the equal-quantile outcome map.

Two stages. First a contrast fit: nuisances are learned on one half of the
data, pseudo-outcomes are computed on the other half, and an outer NW
regression turns them into an estimate h_hat(y0, y1 | x) of the CDF contrast
F1(y1|x) - F0(y0|x). Second the inversion: h_hat is evaluated over a sorted
grid of candidate treated outcomes, projected onto nondecreasing sequences,
and the grid point whose projected value is closest to zero is returned as
the estimate g_hat(y0|x) of the treated outcome at y0's conditional quantile.

Cross-fitting repeats the contrast fit with the two data halves' roles
swapped and averages the evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .isotonic import pava_project
from .kernels import KernelSpec, nw_weight_matrix, resolve_weights
from .nuisance import Dataset, SplitPlan, fit_nuisance, make_split
from .pseudo import PseudoOutcomeKind

_MONOTONE_TOL = 1e-9


class _ContrastReplicate:
    """One nuisance-then-regress pass: fixed regression rows, fixed nuisances.

    ``nuisance`` may be a fitted model or an exact (closed-form) one; it must
    expose ``propensity(x)`` with a ``many(xs)`` method and ``ccdf(a, y, x)``
    with a ``cdf_table(a, ys, xs)`` method.
    """

    def __init__(self, nuisance, data2: Dataset, outer_kernel: KernelSpec, kind: PseudoOutcomeKind):
        self.nuisance = nuisance
        self.data2 = data2
        self.outer_kernel = outer_kernel
        self.kind = PseudoOutcomeKind(kind)
        self._a = data2.a.astype(float)
        pi = np.asarray(nuisance.propensity.many(data2.x), dtype=float)
        self._c = (self._a - pi) / (pi * (1.0 - pi))

    def evaluate(self, y0: float, y1: float, x) -> float:
        """Pseudo-outcomes on the regression rows, NW-smoothed at x."""
        d2 = self.data2
        weights = resolve_weights(self.outer_kernel, x, d2.x).weights
        f1 = self.nuisance.ccdf.cdf_table(1, np.array([y1]), d2.x)[:, 0]
        f0 = self.nuisance.ccdf.cdf_table(0, np.array([y0]), d2.x)[:, 0]
        y_a = np.where(d2.a == 1, y1, y0)
        ind = (d2.y <= y_a).astype(float)
        if self.kind is PseudoOutcomeKind.IPW:
            phi = self._c * ind
        else:
            f_own = np.where(d2.a == 1, f1, f0)
            phi = self._c * (ind - f_own) + f1 - f0
        return float(weights @ phi)

    def profile_many(self, y0s: np.ndarray, grid: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Contrast profiles h_hat(y0s[q], grid[l] | xs[q]) as an (m, p) table."""
        d2 = self.data2
        w_out = nw_weight_matrix(self.outer_kernel, xs, d2.x)
        ind1 = (d2.y[:, None] <= grid[None, :]).astype(float)
        ind0 = (d2.y[:, None] <= y0s[None, :]).astype(float)
        ac = self._a * self._c
        un = (1.0 - self._a) * self._c
        if self.kind is PseudoOutcomeKind.IPW:
            s0 = np.einsum("qj,jq->q", w_out, un[:, None] * ind0)
            return (w_out * ac[None, :]) @ ind1 + s0[:, None]
        f1_grid = self.nuisance.ccdf.cdf_table(1, grid, d2.x)
        f0_q = self.nuisance.ccdf.cdf_table(0, y0s, d2.x)
        t0 = un[:, None] * (ind0 - f0_q) - f0_q
        s0 = np.einsum("qj,jq->q", w_out, t0)
        return (w_out * ac[None, :]) @ (ind1 - f1_grid) + w_out @ f1_grid + s0[:, None]


@dataclass
class ContrastFit:
    """Evaluator for the regressed pseudo-outcome contrast h_hat(y0, y1 | x).

    Holds one replicate, or two role-swapped replicates whose evaluations are
    averaged (cross-fitting).
    """

    kind: PseudoOutcomeKind
    replicates: tuple
    outer_kernel: KernelSpec
    xi: float

    def evaluate(self, y0: float, y1: float, x) -> float:
        return float(np.mean([rep.evaluate(y0, y1, x) for rep in self.replicates]))

    def profile_many(self, y0s, grid, xs) -> np.ndarray:
        y0s = np.asarray(y0s, dtype=float).reshape(-1)
        grid = np.asarray(grid, dtype=float).reshape(-1)
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs.reshape(-1, 1)
        if xs.shape[0] != y0s.size:
            raise ValueError("y0s and xs must pair up one query per row")
        tables = [rep.profile_many(y0s, grid, xs) for rep in self.replicates]
        if len(tables) == 1:
            return tables[0]
        return np.mean(tables, axis=0)

    def profile(self, y0: float, grid, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.profile_many(np.array([y0]), grid, x.reshape(1, -1))[0]

    @property
    def value_bound(self) -> float:
        """Hard bound on |h_hat| implied by propensity clipping."""
        return 1.0 / self.xi + 1.0


def fit_contrast(
    dataset: Dataset,
    split: SplitPlan,
    nuisance_kernel: KernelSpec,
    outer_kernel: KernelSpec,
    kind: PseudoOutcomeKind = PseudoOutcomeKind.DR,
    xi: float = 0.05,
) -> ContrastFit:
    """Single-direction contrast fit: nuisances on split 1, regression on split 2."""
    kind = PseudoOutcomeKind(kind)
    if kind is PseudoOutcomeKind.ORACLE_DR:
        raise ValueError("oracle contrast needs exact nuisances; use fit_oracle_contrast")
    nuis = fit_nuisance(dataset.subset(split.indices_1), nuisance_kernel, xi)
    rep = _ContrastReplicate(nuis, dataset.subset(split.indices_2), outer_kernel, kind)
    return ContrastFit(kind=kind, replicates=(rep,), outer_kernel=outer_kernel, xi=xi)


def cross_fit_contrast(
    dataset: Dataset,
    seed: int,
    nuisance_kernel: KernelSpec,
    outer_kernel: KernelSpec,
    kind: PseudoOutcomeKind = PseudoOutcomeKind.DR,
    xi: float = 0.05,
) -> ContrastFit:
    """Contrast fit averaged over the two role assignments of a random split."""
    kind = PseudoOutcomeKind(kind)
    split = make_split(dataset, seed)
    reps = []
    for plan in (split, split.swapped()):
        nuis = fit_nuisance(dataset.subset(plan.indices_1), nuisance_kernel, xi)
        reps.append(
            _ContrastReplicate(nuis, dataset.subset(plan.indices_2), outer_kernel, kind)
        )
    return ContrastFit(kind=kind, replicates=tuple(reps), outer_kernel=outer_kernel, xi=xi)


def fit_oracle_contrast(
    dataset: Dataset,
    exact_nuisance,
    outer_kernel: KernelSpec,
    xi: float = 0.05,
) -> ContrastFit:
    """Contrast fit with exact nuisances; the whole sample feeds the regression.

    Splitting exists only to de-correlate estimated nuisances from the
    regression rows, so with closed-form nuisances there is nothing to split.
    """
    rep = _ContrastReplicate(exact_nuisance, dataset, outer_kernel, PseudoOutcomeKind.ORACLE_DR)
    return ContrastFit(
        kind=PseudoOutcomeKind.ORACLE_DR,
        replicates=(rep,),
        outer_kernel=outer_kernel,
        xi=xi,
    )


def build_grid(dataset: Dataset, policy: str = "treated", count: int | None = None) -> np.ndarray:
    """Sorted, strictly increasing evaluation grid of candidate treated outcomes.

    ``treated`` uses every treated outcome in the sample (duplicates
    collapsed); ``uniform`` spaces ``count`` points over the sample's full
    outcome range, as a fallback for sparse arms.
    """
    if policy in ("treated", "treated_outcomes"):
        treated = dataset.y[dataset.a == 1]
        if treated.size == 0:
            raise ValueError("no treated observations to build a grid from")
        return np.unique(treated)
    if policy == "uniform":
        if count is None or count < 1:
            raise ValueError("uniform grid needs a positive point count")
        return np.unique(np.linspace(dataset.y.min(), dataset.y.max(), count))
    raise ValueError(f"unknown grid policy {policy!r}")


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("evaluation grid must be nonempty")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("evaluation grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class CqcEstimate:
    """One inverted estimate: grid member, its index, and |projected value|."""

    g_hat: float
    index: int
    residual: float


def _invert_profile(profile: np.ndarray, grid: np.ndarray) -> tuple[CqcEstimate, np.ndarray]:
    # A contrast is -1 below the grid and +1 above it, so a profile that never
    # changes sign has its root past the corresponding grid end; the plain
    # argmin then clamps there, which is the intended boundary behaviour.
    projected = pava_project(profile).projected
    idx = int(np.argmin(np.abs(projected)))  # ties resolve to the smallest index
    est = CqcEstimate(g_hat=float(grid[idx]), index=idx, residual=float(abs(projected[idx])))
    return est, projected


def estimate_cqc(contrast: ContrastFit, grid, y0: float, x) -> CqcEstimate:
    """Grid-evaluate the contrast at (y0, x), project, and take argmin |value|."""
    grid = _check_grid(grid)
    profile = contrast.profile(y0, grid, x)
    est, _ = _invert_profile(profile, grid)
    return est


def estimate_cqc_many(
    contrast: ContrastFit,
    grid,
    y0s,
    xs,
    require_monotone: bool = False,
    monotone_tol: float = _MONOTONE_TOL,
):
    """Batched inversion over query pairs (y0s[q], xs[q]).

    With ``require_monotone`` the pre-projection profiles are asserted to be
    nondecreasing (up to ``monotone_tol``); a violation signals an
    implementation bug in a pipeline that guarantees monotone profiles.
    """
    grid = _check_grid(grid)
    y0s = np.asarray(y0s, dtype=float).reshape(-1)
    profiles = contrast.profile_many(y0s, grid, xs)
    g_hat = np.empty(y0s.size)
    indices = np.empty(y0s.size, dtype=np.intp)
    residuals = np.empty(y0s.size)
    for q in range(y0s.size):
        row = profiles[q]
        if require_monotone and np.any(np.diff(row) < -monotone_tol):
            raise AssertionError(
                "pre-projection contrast profile is not monotone; "
                "this pipeline guarantees monotonicity"
            )
        est, _ = _invert_profile(row, grid)
        g_hat[q] = est.g_hat
        indices[q] = est.index
        residuals[q] = est.residual
    return g_hat, indices, residuals


def quantile_diff(estimate: CqcEstimate, y0: float) -> float:
    """Signed treated-minus-untreated gap at the estimated equal quantile."""
    return estimate.g_hat - y0


@dataclass
class CqcFit:
    """A contrast fit bound to an evaluation grid, with per-query projection cache."""

    contrast: ContrastFit
    grid: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.grid = _check_grid(self.grid)

    def estimate(self, y0: float, x) -> CqcEstimate:
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        key = (float(y0), tuple(x_arr.tolist()))
        projected = self._cache.get(key)
        if projected is None:
            profile = self.contrast.profile(y0, self.grid, x_arr)
            _, projected = _invert_profile(profile, self.grid)
            self._cache[key] = projected
        idx = int(np.argmin(np.abs(projected)))
        return CqcEstimate(
            g_hat=float(self.grid[idx]), index=idx, residual=float(abs(projected[idx]))
        )

    def estimate_many(self, y0s, xs, require_monotone: bool = False):
        return estimate_cqc_many(
            self.contrast, self.grid, y0s, xs, require_monotone=require_monotone
        )


def cqc_to_cqte(fit: CqcFit, arm0_quantile, alpha: float, x) -> float:
    """Quantile treatment effect at level alpha via the estimated outcome map.

    ``arm0_quantile(alpha, x)`` supplies the untreated conditional quantile
    (fitted or exact); the effect is g_hat at that point minus the point.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    y0 = float(arm0_quantile(alpha, x))
    return fit.estimate(y0, x).g_hat - y0


def surface_eval(fit: CqcFit, y_grid, x_grid, monotone_y0: bool = False) -> np.ndarray:
    """Treated-minus-untreated gap over a (y, x) grid, row-major in y.

    ``monotone_y0`` applies a second isotonic pass to g_hat along the y axis
    of each x slice before differencing; the grid search only enforces
    monotonicity along the candidate-outcome axis, so residual non-monotone
    wiggle in y0 can remain without it.
    """
    ys = np.asarray(y_grid, dtype=float).reshape(-1)
    xs = np.asarray(x_grid, dtype=float)
    if xs.ndim == 0:
        xs = xs.reshape(1, 1)
    elif xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    if ys.size == 0 or xs.shape[0] == 0:
        raise ValueError("surface grids must be nonempty")
    out = np.empty((ys.size, xs.shape[0]))
    for j in range(xs.shape[0]):
        x_rows = np.tile(xs[j], (ys.size, 1))
        g_hat, _, _ = estimate_cqc_many(fit.contrast, fit.grid, ys, x_rows)
        if monotone_y0:
            g_hat = pava_project(g_hat).projected
        out[:, j] = g_hat - ys
    return out
