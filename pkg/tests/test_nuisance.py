import numpy as np
import pytest

from cqcbench.kernels import KernelSpec
from cqcbench.nuisance import (
    Dataset,
    SingleArmError,
    ccdf_generalised_inverse,
    fit_ccdf,
    fit_nuisance,
    fit_propensity,
    make_split,
)

WIDE_BOX = KernelSpec("box", 100.0)  # bandwidth beyond any data diameter used here


def four_point_arm1_dataset():
    """Arm-1 outcomes {1,2,3,4} at a common location, plus an arm-0 row."""
    y = np.array([1.0, 2.0, 3.0, 4.0, 0.5])
    x = np.zeros((5, 1))
    a = np.array([1, 1, 1, 1, 0])
    return Dataset(y, x, a)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([1.0]), np.array([[0.0]]), np.array([2]))
    with pytest.raises(ValueError):
        Dataset(np.array([]), np.empty((0, 1)), np.array([]))
    with pytest.raises(ValueError):
        Dataset(np.array([1.0, 2.0]), np.array([[0.0]]), np.array([0, 1]))


def test_dataset_arm_bookkeeping():
    data = four_point_arm1_dataset()
    assert data.n == 5 and data.d == 1
    assert data.arm_count(1) == 4
    np.testing.assert_array_equal(data.arm_indices(0), [4])


def test_make_split_partition_arithmetic():
    data = Dataset(np.arange(6.0), np.zeros((6, 1)), np.zeros(6, dtype=int))
    plan = make_split(data, seed=5)
    assert plan.indices_1.size == 3 and plan.indices_2.size == 3
    assert np.intersect1d(plan.indices_1, plan.indices_2).size == 0
    np.testing.assert_array_equal(
        np.sort(np.concatenate([plan.indices_1, plan.indices_2])), np.arange(6)
    )


def test_make_split_odd_sizes_differ_by_one():
    data = Dataset(np.arange(7.0), np.zeros((7, 1)), np.zeros(7, dtype=int))
    plan = make_split(data, seed=5)
    assert abs(plan.indices_1.size - plan.indices_2.size) == 1


def test_make_split_deterministic_and_seed_sensitive():
    data = Dataset(np.arange(100.0), np.zeros((100, 1)), np.zeros(100, dtype=int))
    plan_a = make_split(data, seed=9)
    plan_b = make_split(data, seed=9)
    np.testing.assert_array_equal(plan_a.indices_1, plan_b.indices_1)
    plan_c = make_split(data, seed=10)
    assert not np.array_equal(plan_a.indices_1, plan_c.indices_1)


def test_make_split_too_small():
    data = Dataset(np.arange(3.0), np.zeros((3, 1)), np.zeros(3, dtype=int))
    with pytest.raises(ValueError):
        make_split(data, seed=0)


def test_split_swapped_exchanges_roles():
    data = Dataset(np.arange(8.0), np.zeros((8, 1)), np.zeros(8, dtype=int))
    plan = make_split(data, seed=1)
    swapped = plan.swapped()
    np.testing.assert_array_equal(plan.indices_1, swapped.indices_2)


def test_propensity_clamps_low_and_high():
    # All neighbours untreated: raw NW value 0 clamps up to xi.
    data = Dataset(
        np.zeros(6), np.zeros((6, 1)), np.array([0, 0, 0, 0, 0, 1])
    )
    # put the only treated row far away so it carries no box mass at x=0
    data.x[5] = 50.0
    prop = fit_propensity(data, KernelSpec("box", 1.0), xi=0.05)
    assert prop(np.array([0.0])) == pytest.approx(0.05)
    assert prop(np.array([50.0])) == pytest.approx(0.95)


def test_propensity_equal_weights_hand_average():
    data = Dataset(np.zeros(4), np.zeros((4, 1)), np.array([1, 0, 1, 0]))
    prop = fit_propensity(data, WIDE_BOX, xi=0.05)
    assert prop(np.array([0.0])) == pytest.approx(0.5)


def test_propensity_single_arm_raises():
    data = Dataset(np.zeros(4), np.zeros((4, 1)), np.ones(4, dtype=int))
    with pytest.raises(SingleArmError):
        fit_propensity(data, WIDE_BOX)


def test_propensity_outputs_stay_clipped():
    rng = np.random.default_rng(0)
    data = Dataset(
        rng.normal(size=50),
        rng.uniform(0, 1, (50, 1)),
        (rng.uniform(size=50) < 0.9).astype(int),
    )
    prop = fit_propensity(data, KernelSpec("gaussian", 0.05), xi=0.1)
    values = prop.many(rng.uniform(0, 1, (40, 1)))
    assert (values >= 0.1).all() and (values <= 0.9).all()


def test_ccdf_step_values():
    ccdf = fit_ccdf(four_point_arm1_dataset(), WIDE_BOX)
    x = np.array([0.0])
    assert ccdf(1, 0.5, x) == 0.0  # below all arm-1 outcomes
    assert ccdf(1, 9.0, x) == 1.0  # above all arm-1 outcomes
    assert ccdf(1, 2.5, x) == pytest.approx(0.5)


def test_ccdf_right_continuous_step_at_jump():
    ccdf = fit_ccdf(four_point_arm1_dataset(), WIDE_BOX)
    x = np.array([0.0])
    assert ccdf(1, 2.0, x) == pytest.approx(0.5)  # includes the jump at 2
    assert ccdf(1, 2.0 - 1e-9, x) == pytest.approx(0.25)


def test_ccdf_single_arm_raises():
    data = Dataset(np.arange(4.0), np.zeros((4, 1)), np.ones(4, dtype=int))
    with pytest.raises(SingleArmError):
        fit_ccdf(data, WIDE_BOX)


def test_ccdf_wide_bandwidth_equals_empirical_cdf():
    rng = np.random.default_rng(1)
    data = Dataset(
        rng.normal(size=30),
        rng.uniform(0, 1, (30, 1)),
        (rng.uniform(size=30) < 0.5).astype(int),
    )
    ccdf = fit_ccdf(data, WIDE_BOX)
    arm1 = np.sort(data.y[data.a == 1])
    for x in (np.array([0.1]), np.array([0.9])):
        for q in (-0.5, 0.0, 0.7):
            empirical = np.mean(arm1 <= q)
            assert ccdf(1, q, x) == pytest.approx(empirical, abs=1e-12)


def test_generalised_inverse_step_examples():
    ccdf = fit_ccdf(four_point_arm1_dataset(), WIDE_BOX)
    x = np.array([0.0])
    assert ccdf_generalised_inverse(ccdf, 1, 0.5, x) == 2.0
    assert ccdf_generalised_inverse(ccdf, 1, 1.0, x) == 4.0
    assert ccdf_generalised_inverse(ccdf, 1, 0.26, x) == 2.0
    assert ccdf_generalised_inverse(ccdf, 1, 0.0, x) == 1.0  # smallest jump point


def test_generalised_inverse_alpha_out_of_range():
    ccdf = fit_ccdf(four_point_arm1_dataset(), WIDE_BOX)
    with pytest.raises(ValueError):
        ccdf.quantile(1, 1.5, np.array([0.0]))


def test_generalised_inverse_round_trip_laws():
    rng = np.random.default_rng(2)
    data = Dataset(
        rng.normal(size=40),
        rng.uniform(0, 1, (40, 1)),
        (rng.uniform(size=40) < 0.5).astype(int),
    )
    ccdf = fit_ccdf(data, KernelSpec("gaussian", 0.3))
    x = np.array([0.4])
    for alpha in np.linspace(0.0, 1.0, 11):
        y = ccdf.quantile(1, alpha, x)
        assert ccdf(1, y, x) >= alpha - 1e-12
    for y in ccdf.arm_outcomes(1):
        assert ccdf.quantile(1, ccdf(1, y, x), x) <= y + 1e-12


def test_ccdf_monotone_in_y():
    rng = np.random.default_rng(3)
    data = Dataset(
        rng.normal(size=50),
        rng.uniform(0, 1, (50, 1)),
        (rng.uniform(size=50) < 0.5).astype(int),
    )
    ccdf = fit_ccdf(data, KernelSpec("gaussian", 0.2))
    ys = np.linspace(-3, 3, 60)
    table = ccdf.cdf_table(1, ys, np.array([[0.5], [0.9]]))
    assert np.all(np.diff(table, axis=1) >= 0)
    assert (table >= 0).all() and (table <= 1).all()


def test_fit_nuisance_bundles_evaluators():
    data = four_point_arm1_dataset()
    model = fit_nuisance(data, WIDE_BOX, xi=0.05)
    assert model.xi == 0.05
    assert model.rows is data
    assert 0.05 <= model.propensity(np.array([0.0])) <= 0.95
    assert model.ccdf(1, 2.5, np.array([0.0])) == pytest.approx(0.5)
