"""Simulation DGPs with closed-form truths, and the Monte-Carlo benchmark runner.

Four data-generating families, all sharing the propensity 0.4*sin(g*pi*u)+0.5
where u is the covariate (or a fixed random projection of it in the
ten-dimensional family) and g is a frequency knob that makes the nuisance
functions wigglier without changing the target outcome map:

- ``illustrative``: Gaussian arms N(sin, 1) and N(2*sin, 4); the equal-quantile
  map is y -> 2y for every covariate value.
- ``tendim``: ten covariates, identical Gaussian arms; the map is the identity.
- ``linear_cqc``: Gaussian arms whose map is (y + 0.5)(0.5x + 1.5), linear in
  both arguments.
- ``uniform_h``: uniform arms chosen so the CDF contrast itself collapses to
  the covariate-free form y1/2 - y0.

The one-dimensional covariate is drawn Uniform(0, 1); plots and experiments
span exactly that range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .kernels import DegenerateMassError, KernelSpec, nw_weight_matrix
from .nuisance import Dataset

FAMILIES = ("illustrative", "tendim", "linear_cqc", "uniform_h")

_HOLDOUT_SALT = 0x484F4C44  # decorrelates holdout draws from training draws
_TENDIM_BETA_SCALE = 0.2


@dataclass
class DgpSpec:
    """One simulation setting: family, sine frequency, and projection seed."""

    family: str
    gamma: float = 0.0
    dim: int | None = None
    beta: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown DGP family {self.family!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        expected_dim = 10 if self.family == "tendim" else 1
        if self.dim is None:
            self.dim = expected_dim
        if self.dim != expected_dim:
            raise ValueError(f"family {self.family!r} requires dim={expected_dim}")
        if self.family == "tendim":
            if self.beta is None:
                # One projection per spec seed, frozen for reproducibility.
                self.beta = np.random.default_rng(self.seed).normal(
                    0.0, _TENDIM_BETA_SCALE, self.dim
                )
            self.beta = np.asarray(self.beta, dtype=float)
            if self.beta.shape != (self.dim,):
                raise ValueError("beta must be a vector of length dim")
        elif self.beta is not None:
            raise ValueError("beta is only meaningful for the tendim family")


def _as_rows(xs) -> np.ndarray:
    arr = np.asarray(xs, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def _sine_term(spec: DgpSpec, xs: np.ndarray) -> np.ndarray:
    u = xs @ spec.beta if spec.family == "tendim" else xs[:, 0]
    return np.sin(spec.gamma * np.pi * u)


def _normal_arm_params(spec: DgpSpec, xs: np.ndarray):
    """(loc, scale) per arm for the Gaussian families."""
    s = _sine_term(spec, xs)
    if spec.family == "illustrative":
        return (s, np.ones_like(s)), (2.0 * s, np.full_like(s, 2.0))
    if spec.family == "tendim":
        return (s, np.ones_like(s)), (s, np.ones_like(s))
    if spec.family == "linear_cqc":
        x1 = xs[:, 0]
        slope = 0.5 * x1 + 1.5
        return (s / slope, np.ones_like(s)), (s + 0.25 * x1 + 0.75, slope)
    raise ValueError(f"{spec.family!r} is not a Gaussian family")


class ExactPropensity:
    """Closed-form propensity with the fitted evaluator's interface."""

    def __init__(self, spec: DgpSpec):
        self.spec = spec

    def many(self, xs) -> np.ndarray:
        return 0.4 * _sine_term(self.spec, _as_rows(xs)) + 0.5

    def __call__(self, x) -> float:
        return float(self.many(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0])


class ExactCcdf:
    """Closed-form per-arm conditional CDFs with the fitted evaluator's interface."""

    def __init__(self, spec: DgpSpec):
        self.spec = spec

    def cdf_table(self, arm: int, ys, queries) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).reshape(-1)
        xs = _as_rows(queries)
        if self.spec.family == "uniform_h":
            s = _sine_term(self.spec, xs)
            low = 2.0 * s if arm == 1 else s
            width = 2.0 if arm == 1 else 1.0
            return np.clip((ys[None, :] - low[:, None]) / width, 0.0, 1.0)
        params = _normal_arm_params(self.spec, xs)[arm]
        loc, scale = params
        return ndtr((ys[None, :] - loc[:, None]) / scale[:, None])

    def __call__(self, arm: int, y: float, x) -> float:
        x_arr = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
        return float(self.cdf_table(arm, np.array([y]), x_arr)[0, 0])

    def quantile(self, arm: int, alpha: float, x) -> float:
        xs = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
        if self.spec.family == "uniform_h":
            s = float(_sine_term(self.spec, xs)[0])
            return 2.0 * s + 2.0 * alpha if arm == 1 else s + alpha
        loc, scale = _normal_arm_params(self.spec, xs)[arm]
        return float(loc[0] + scale[0] * ndtri(alpha))


@dataclass
class TruthOracle:
    """Exact nuisances and estimands of one DGP.

    ``propensity`` and ``ccdf`` satisfy the fitted-nuisance interface, so the
    oracle plugs directly into the pseudo-outcome and contrast machinery.
    """

    spec: DgpSpec
    propensity: ExactPropensity
    ccdf: ExactCcdf

    def quantile(self, arm: int, alpha: float, x) -> float:
        return self.ccdf.quantile(arm, alpha, x)

    def g(self, ys, xs) -> np.ndarray:
        """Treated outcome at the same conditional quantile as untreated ys."""
        ys = np.asarray(ys, dtype=float)
        rows = _as_rows(xs)
        if self.spec.family in ("illustrative", "uniform_h"):
            out = 2.0 * ys
        elif self.spec.family == "tendim":
            out = ys + 0.0
        else:
            out = (ys + 0.5) * (0.5 * rows[:, 0] + 1.5)
        shape = np.broadcast_shapes(np.shape(out), (rows.shape[0],))
        return np.broadcast_to(out, shape).copy()

    def h(self, y0, y1, xs) -> np.ndarray:
        """CDF contrast F1(y1|x) - F0(y0|x); y0/y1 broadcast against the x rows."""
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        rows = _as_rows(xs)
        if self.spec.family == "uniform_h":
            # Covariate-free by construction: the arms are scaled copies of
            # one uniform, so the contrast collapses to y1/2 - y0.
            out = np.asarray(0.5 * y1 - y0, dtype=float)
            shape = np.broadcast_shapes(out.shape, (rows.shape[0],))
            return np.broadcast_to(out, shape).copy()
        (loc0, scale0), (loc1, scale1) = _normal_arm_params(self.spec, rows)
        return ndtr((y1 - loc1) / scale1) - ndtr((y0 - loc0) / scale0)

    def cqte(self, alpha: float, xs) -> np.ndarray:
        """Quantile treatment effect: gap between the arms' alpha-quantiles."""
        rows = _as_rows(xs)
        s = _sine_term(self.spec, rows)
        if self.spec.family == "illustrative":
            return s + ndtri(alpha)
        if self.spec.family == "tendim":
            return np.zeros(rows.shape[0])
        if self.spec.family == "uniform_h":
            return s + alpha
        (loc0, scale0), (loc1, scale1) = _normal_arm_params(self.spec, rows)
        z = ndtri(alpha)
        return (loc1 + scale1 * z) - (loc0 + scale0 * z)


def truth(spec: DgpSpec) -> TruthOracle:
    """Closed-form truth evaluators for a DGP spec."""
    return TruthOracle(spec=spec, propensity=ExactPropensity(spec), ccdf=ExactCcdf(spec))


def _draw_outcomes(spec: DgpSpec, xs: np.ndarray, arms: np.ndarray, rng) -> np.ndarray:
    if spec.family == "uniform_h":
        s = _sine_term(spec, xs)
        u = rng.uniform(size=xs.shape[0])
        return np.where(arms == 1, 2.0 * s + 2.0 * u, s + u)
    (loc0, scale0), (loc1, scale1) = _normal_arm_params(spec, xs)
    z = rng.standard_normal(xs.shape[0])
    return np.where(arms == 1, loc1 + scale1 * z, loc0 + scale0 * z)


def _draw_covariates(spec: DgpSpec, size: int, rng) -> np.ndarray:
    if spec.family == "tendim":
        return rng.uniform(-1.0, 1.0, (size, spec.dim))
    return rng.uniform(0.0, 1.0, (size, 1))


def sample_dgp(spec: DgpSpec, n_total: int, seed: int) -> Dataset:
    """Draw a dataset from the DGP; deterministic given the seed."""
    if n_total < 4:
        raise ValueError("need at least 4 observations")
    rng = np.random.default_rng(seed)
    xs = _draw_covariates(spec, n_total, rng)
    pi = 0.4 * _sine_term(spec, xs) + 0.5
    arms = (rng.uniform(size=n_total) < pi).astype(np.int64)
    ys = _draw_outcomes(spec, xs, arms, rng)
    return Dataset(ys, xs, arms)


def sample_holdout(spec: DgpSpec, size: int, seed: int):
    """Evaluation pairs: covariates from the marginal, outcomes from arm 0.

    This matches the benchmark error metric, which averages the estimation
    gap over untreated outcome draws.
    """
    rng = np.random.default_rng(seed)
    xs = _draw_covariates(spec, size, rng)
    ys = _draw_outcomes(spec, xs, np.zeros(size, dtype=np.int64), rng)
    return ys, xs


def draw_given_x(spec: DgpSpec, x, size: int, seed: int):
    """Draw (y, a) pairs conditional on a fixed covariate value."""
    rng = np.random.default_rng(seed)
    xs = np.tile(np.atleast_1d(np.asarray(x, dtype=float)), (size, 1))
    pi = 0.4 * _sine_term(spec, xs) + 0.5
    arms = (rng.uniform(size=size) < pi).astype(np.int64)
    ys = _draw_outcomes(spec, xs, arms, rng)
    return ys, arms


@dataclass(frozen=True)
class EstimatorResult:
    """Aggregated benchmark row for one estimator."""

    name: str
    mean_abs_error: float
    ci_half_width: float
    replications: int
    failures: int

    @property
    def ci_low(self) -> float:
        return self.mean_abs_error - self.ci_half_width

    @property
    def ci_high(self) -> float:
        return self.mean_abs_error + self.ci_half_width


@dataclass
class ErrorReport:
    """Per-estimator error summary of one Monte-Carlo experiment."""

    results: list
    replications: int
    config: dict
    per_replication: np.ndarray = field(repr=False, default=None)

    def csv_text(self) -> str:
        lines = ["estimator,mean_abs_error,ci_low,ci_high,replications"]
        for row in self.results:
            lines.append(
                f"{row.name},{row.mean_abs_error!r},{row.ci_low!r},"
                f"{row.ci_high!r},{row.replications}"
            )
        return "\n".join(lines) + "\n"

    def by_name(self, name: str) -> EstimatorResult:
        for row in self.results:
            if row.name == name:
                return row
        raise KeyError(name)


def run_experiment(
    spec: DgpSpec,
    estimators,
    n_total: int,
    replications: int,
    holdout: int = 200,
    base_seed: int = 0,
) -> ErrorReport:
    """Repeatedly refit every estimator on fresh data and score it on holdouts.

    Each replication r draws a training set and a holdout under seed
    ``base_seed ^ r``, fits every estimator, and records the mean absolute
    gap between the estimated and exact outcome maps over the holdout. An
    estimator failure is counted, not raised. 95% intervals use
    1.96 * sd / sqrt(R) over the successful replications.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications for a confidence interval")
    estimators = list(estimators)
    if not estimators:
        raise ValueError("need at least one estimator")
    oracle = truth(spec)
    errors = np.full((replications, len(estimators)), np.nan)
    failure_counts = np.zeros(len(estimators), dtype=int)
    for r in range(replications):
        rep_seed = base_seed ^ r
        data = sample_dgp(spec, n_total, rep_seed)
        hold_y, hold_x = sample_holdout(spec, holdout, rep_seed ^ _HOLDOUT_SALT)
        g_star = oracle.g(hold_y, hold_x)
        for j, est in enumerate(estimators):
            try:
                predictor = est.fit(data, rep_seed, truth=oracle)
                g_hat = np.asarray(predictor(hold_y, hold_x), dtype=float)
                errors[r, j] = float(np.mean(np.abs(g_hat - g_star)))
            except Exception:
                failure_counts[j] += 1
    results = []
    for j, est in enumerate(estimators):
        col = errors[:, j]
        ok = col[np.isfinite(col)]
        if ok.size >= 2:
            mean = float(ok.mean())
            half = float(1.96 * ok.std(ddof=1) / math.sqrt(ok.size))
        elif ok.size == 1:
            mean, half = float(ok[0]), float("nan")
        else:
            mean, half = float("nan"), float("nan")
        results.append(
            EstimatorResult(
                name=est.name,
                mean_abs_error=mean,
                ci_half_width=half,
                replications=int(ok.size),
                failures=int(failure_counts[j]),
            )
        )
    config = {
        "family": spec.family,
        "gamma": spec.gamma,
        "n_total": n_total,
        "replications": replications,
        "holdout": holdout,
        "base_seed": base_seed,
        "estimators": [est.name for est in estimators],
    }
    return ErrorReport(
        results=results,
        replications=replications,
        config=config,
        per_replication=errors,
    )


def cv_bandwidth(
    dataset: Dataset,
    family: str,
    candidates,
    folds: int,
    seed: int,
    target: str = "outcome",
) -> float:
    """Pick the bandwidth minimising k-fold squared NW prediction error.

    ``target`` selects the regression being tuned: the outcome (CDF-style
    smoothing) or the treatment indicator (propensity smoothing). Ties go to
    the smaller bandwidth; exact duplicates keep the first occurrence. A
    candidate that leaves some fold with unrecoverable kernel mass is
    discarded.
    """
    candidates = [float(b) for b in candidates]
    if len(candidates) < 2:
        raise ValueError("need at least 2 candidate bandwidths")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > dataset.n:
        raise ValueError("more folds than observations")
    if target == "outcome":
        values = dataset.y
    elif target == "treatment":
        values = dataset.a.astype(float)
    else:
        raise ValueError("target must be 'outcome' or 'treatment'")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    fold_ids = [perm[k::folds] for k in range(folds)]
    best_bw = None
    best_sse = None
    for bw in candidates:
        spec = KernelSpec(family, bw)
        sse = 0.0
        for held in fold_ids:
            rest = np.setdiff1d(perm, held)
            try:
                weights = nw_weight_matrix(spec, dataset.x[held], dataset.x[rest])
            except DegenerateMassError:
                sse = float("inf")
                break
            preds = weights @ values[rest]
            sse += float(((values[held] - preds) ** 2).sum())
        if (
            best_sse is None
            or sse < best_sse
            or (sse == best_sse and bw < best_bw)
        ):
            best_bw, best_sse = bw, sse
    return best_bw
