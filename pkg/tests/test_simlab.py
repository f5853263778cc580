import numpy as np
import pytest
from scipy.special import ndtri

from cqcbench.baselines import DrEstimator, OracleEstimator, SeparateEstimator
from cqcbench.kernels import KernelSpec
from cqcbench.nuisance import Dataset
from cqcbench.simlab import (
    FAMILIES,
    DgpSpec,
    cv_bandwidth,
    draw_given_x,
    run_experiment,
    sample_dgp,
    sample_holdout,
    truth,
)

NK = KernelSpec("gaussian", 0.08)
OK = KernelSpec("gaussian", 0.12)


def test_spec_validation():
    with pytest.raises(ValueError):
        DgpSpec("mystery")
    with pytest.raises(ValueError):
        DgpSpec("illustrative", gamma=-1.0)
    with pytest.raises(ValueError):
        DgpSpec("illustrative", dim=10)
    with pytest.raises(ValueError):
        DgpSpec("tendim", dim=1)
    with pytest.raises(ValueError):
        DgpSpec("illustrative", beta=np.ones(10))


def test_tendim_beta_frozen_per_seed():
    a = DgpSpec("tendim", gamma=1.0, seed=4)
    b = DgpSpec("tendim", gamma=1.0, seed=4)
    c = DgpSpec("tendim", gamma=1.0, seed=5)
    np.testing.assert_array_equal(a.beta, b.beta)
    assert not np.array_equal(a.beta, c.beta)
    assert a.beta.shape == (10,)


def test_sample_flat_gamma_arm0_is_standard_normal():
    data = sample_dgp(DgpSpec("illustrative", gamma=0.0), 4000, seed=0)
    arm0 = data.y[data.a == 0]
    assert abs(arm0.mean()) < 4.0 / np.sqrt(arm0.size)
    assert arm0.std() == pytest.approx(1.0, abs=0.1)


def test_sample_uniform_family_support():
    data = sample_dgp(DgpSpec("uniform_h", gamma=0.0), 500, seed=1)
    arm0 = data.y[data.a == 0]
    arm1 = data.y[data.a == 1]
    assert (arm0 >= 0.0).all() and (arm0 <= 1.0).all()
    assert (arm1 >= 0.0).all() and (arm1 <= 2.0).all()


def test_sample_treated_fraction_tracks_mean_propensity():
    spec = DgpSpec("illustrative", gamma=6.0)
    data = sample_dgp(spec, 6000, seed=2)
    pi = truth(spec).propensity.many(data.x)
    assert data.a.mean() == pytest.approx(pi.mean(), abs=4.0 / np.sqrt(data.n))


def test_sample_deterministic_and_seed_sensitive():
    spec = DgpSpec("illustrative", gamma=3.0)
    d1 = sample_dgp(spec, 50, seed=9)
    d2 = sample_dgp(spec, 50, seed=9)
    np.testing.assert_array_equal(d1.y, d2.y)
    d3 = sample_dgp(spec, 50, seed=10)
    assert not np.array_equal(d1.y, d3.y)


def test_sample_too_small_raises():
    with pytest.raises(ValueError):
        sample_dgp(DgpSpec("illustrative"), 3, seed=0)


def test_truth_doubling_map():
    oracle = truth(DgpSpec("illustrative", gamma=6.0))
    for x in (0.0, 0.3, 0.9):
        g_val = oracle.g(0.7, np.array([[x]]))[0]
        assert g_val == pytest.approx(1.4)
        # the signed gap of the doubling map is the input itself
        assert g_val - 0.7 == pytest.approx(0.7)


def test_truth_linear_family_map():
    oracle = truth(DgpSpec("linear_cqc", gamma=6.0))
    assert oracle.g(1.0, np.array([[0.0]]))[0] == pytest.approx(2.25)


def test_truth_uniform_contrast_value():
    oracle = truth(DgpSpec("uniform_h", gamma=0.0))
    assert oracle.h(0.2, 1.0, np.array([[0.5]]))[0] == pytest.approx(0.3)


def test_truth_uniform_contrast_constant_across_x():
    oracle = truth(DgpSpec("uniform_h", gamma=6.0))
    values = oracle.h(0.2, 1.0, np.linspace(0, 1, 10))
    assert len(set(values.tolist())) == 1


def test_truth_propensity_range():
    for family in FAMILIES:
        spec = DgpSpec(family, gamma=6.0 if family != "tendim" else 2.0)
        oracle = truth(spec)
        xs = sample_dgp(spec, 500, seed=3).x
        pi = oracle.propensity.many(xs)
        assert (pi >= 0.1 - 1e-12).all() and (pi <= 0.9 + 1e-12).all()


def test_truth_quantile_matches_scipy():
    oracle = truth(DgpSpec("illustrative", gamma=2.0))
    x = np.array([0.3])
    s = np.sin(2.0 * np.pi * 0.3)
    assert oracle.quantile(0, 0.8, x) == pytest.approx(s + ndtri(0.8))
    assert oracle.quantile(1, 0.8, x) == pytest.approx(2 * s + 2 * ndtri(0.8))


def test_truth_cqte_symmetry_flat_gamma():
    oracle = truth(DgpSpec("illustrative", gamma=0.0))
    xs = np.array([[0.2], [0.8]])
    np.testing.assert_allclose(oracle.cqte(0.5, xs), 0.0, atol=1e-12)
    np.testing.assert_allclose(
        oracle.cqte(0.25, xs), -oracle.cqte(0.75, xs), atol=1e-12
    )


def test_truth_identity_relations_all_families():
    # Quick 12x12 version of the acceptance-grade 50x50 identity check.
    for family in FAMILIES:
        gamma = 1.0 if family == "tendim" else 6.0
        spec = DgpSpec(family, gamma=gamma, seed=1)
        oracle = truth(spec)
        rng = np.random.default_rng(0)
        xs = (
            rng.uniform(-1, 1, (12, 10))
            if family == "tendim"
            else np.linspace(0.01, 0.99, 12).reshape(-1, 1)
        )
        ys = np.linspace(-1.5, 1.5, 12)
        for y in ys:
            g_val = oracle.g(np.full(12, y), xs)
            f1 = np.array(
                [oracle.ccdf.cdf_table(1, [g_val[j]], xs[j : j + 1])[0, 0] for j in range(12)]
            )
            f0 = np.array(
                [oracle.ccdf.cdf_table(0, [y], xs[j : j + 1])[0, 0] for j in range(12)]
            )
            np.testing.assert_allclose(f1, f0, atol=1e-9)
            np.testing.assert_allclose(
                oracle.h(np.full(12, y), g_val, xs), 0.0, atol=1e-9
            )


def test_holdout_draws_from_untreated_conditional():
    spec = DgpSpec("uniform_h", gamma=0.0)
    ys, xs = sample_holdout(spec, 400, seed=5)
    assert xs.shape == (400, 1)
    assert (ys >= 0.0).all() and (ys <= 1.0).all()  # arm-0 support only


def test_draw_given_x_fixes_covariate():
    ys, arms = draw_given_x(DgpSpec("illustrative", gamma=6.0), 0.3, 2000, seed=6)
    assert ys.shape == (2000,)
    pi = float(truth(DgpSpec("illustrative", gamma=6.0)).propensity(np.array([0.3])))
    assert arms.mean() == pytest.approx(pi, abs=4.0 / np.sqrt(2000))


class FailingEstimator:
    name = "broken"

    def fit(self, dataset, seed, truth=None):
        raise RuntimeError("synthetic failure")


def test_run_experiment_counts_failures_without_crashing():
    spec = DgpSpec("illustrative", gamma=0.0)
    report = run_experiment(
        spec, [FailingEstimator(), SeparateEstimator(NK)], 80, 3, holdout=50, base_seed=0
    )
    broken = report.by_name("broken")
    assert broken.failures == 3
    assert np.isnan(broken.mean_abs_error)
    ok = report.by_name("separate")
    assert ok.failures == 0 and np.isfinite(ok.mean_abs_error)


def test_run_experiment_same_object_twice_identical_columns():
    spec = DgpSpec("illustrative", gamma=2.0)
    est = SeparateEstimator(NK)
    report = run_experiment(spec, [est, est], 120, 3, holdout=60, base_seed=1)
    np.testing.assert_array_equal(
        report.per_replication[:, 0], report.per_replication[:, 1]
    )


def test_run_experiment_reports_are_reproducible():
    spec = DgpSpec("illustrative", gamma=2.0)
    texts = []
    for _ in range(2):
        report = run_experiment(
            spec,
            [DrEstimator(NK, OK, cross_fit=True), SeparateEstimator(NK)],
            150,
            3,
            holdout=80,
            base_seed=21,
        )
        texts.append(report.csv_text())
    assert texts[0] == texts[1]
    header = texts[0].splitlines()[0]
    assert header == "estimator,mean_abs_error,ci_low,ci_high,replications"


def test_run_experiment_validates_inputs():
    spec = DgpSpec("illustrative")
    with pytest.raises(ValueError):
        run_experiment(spec, [SeparateEstimator(NK)], 100, 1)
    with pytest.raises(ValueError):
        run_experiment(spec, [], 100, 3)


def test_run_experiment_ci_half_width_definition():
    spec = DgpSpec("illustrative", gamma=2.0)
    report = run_experiment(spec, [SeparateEstimator(NK)], 150, 4, holdout=60, base_seed=3)
    col = report.per_replication[:, 0]
    row = report.results[0]
    expected = 1.96 * col.std(ddof=1) / np.sqrt(col.size)
    assert row.ci_high - row.mean_abs_error == pytest.approx(expected)
    assert row.mean_abs_error - row.ci_low == pytest.approx(expected)


def test_oracle_error_decreases_with_sample_size_identity_family():
    spec = DgpSpec("tendim", gamma=1.0, seed=2)
    est = OracleEstimator(KernelSpec("gaussian", 1.5))
    means = []
    for n in (200, 1000):
        report = run_experiment(spec, [est], n, 3, holdout=100, base_seed=17)
        means.append(report.results[0].mean_abs_error)
    assert means[1] < means[0]


def test_oracle_error_gamma_invariant_for_doubling_map():
    # The target map never depends on the sine frequency, and with exact
    # nuisances every component of the smoothed contrast still crosses zero
    # at the true map, so the oracle error should move very little in gamma.
    means, halves = [], []
    for gamma in (0.0, 10.0):
        spec = DgpSpec("illustrative", gamma=gamma)
        report = run_experiment(
            spec, [OracleEstimator(OK)], 400, 8, holdout=100, base_seed=23
        )
        means.append(report.results[0].mean_abs_error)
        halves.append(report.results[0].ci_half_width)
    pooled_se = np.hypot(halves[0] / 1.96, halves[1] / 1.96)
    assert abs(means[0] - means[1]) < 3.0 * pooled_se


def test_cv_bandwidth_prefers_matched_scale():
    # Noisy enough that near-interpolation loses, wavy enough that the
    # global mean loses: only the matched bandwidth fits both ways.
    rng = np.random.default_rng(0)
    xs = rng.uniform(0, 1, 300)
    ys = np.sin(2 * np.pi * xs) + rng.normal(scale=0.3, size=300)
    data = Dataset(ys, xs, (rng.uniform(size=300) < 0.5).astype(int))
    chosen = cv_bandwidth(data, "gaussian", [0.002, 0.08, 5.0], folds=5, seed=1)
    assert chosen == 0.08


def test_cv_bandwidth_tie_rules():
    rng = np.random.default_rng(1)
    data = Dataset(
        rng.normal(size=40), rng.uniform(0, 1, 40), (rng.uniform(size=40) < 0.5).astype(int)
    )
    # duplicate candidates give identical scores; the first occurrence wins
    chosen = cv_bandwidth(data, "gaussian", [0.3, 0.3, 0.3], folds=4, seed=2)
    assert chosen == 0.3


def test_cv_bandwidth_validation():
    rng = np.random.default_rng(2)
    data = Dataset(
        rng.normal(size=10), rng.uniform(0, 1, 10), (rng.uniform(size=10) < 0.5).astype(int)
    )
    with pytest.raises(ValueError):
        cv_bandwidth(data, "gaussian", [0.1], folds=2, seed=0)
    with pytest.raises(ValueError):
        cv_bandwidth(data, "gaussian", [0.1, 0.2], folds=1, seed=0)
    with pytest.raises(ValueError):
        cv_bandwidth(data, "gaussian", [0.1, 0.2], folds=11, seed=0)
    with pytest.raises(ValueError):
        cv_bandwidth(data, "gaussian", [0.1, 0.2], folds=2, seed=0, target="spline")


def test_cv_bandwidth_treatment_target_runs():
    spec = DgpSpec("illustrative", gamma=2.0)
    data = sample_dgp(spec, 200, seed=4)
    chosen = cv_bandwidth(
        data, "gaussian", [0.05, 0.5], folds=4, seed=3, target="treatment"
    )
    assert chosen in (0.05, 0.5)
