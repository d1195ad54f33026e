import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from supclust.core import (CENTROID_LINKAGE_DYNAMIC, ConfigurationError,
                           InfluenceSpec, SupOptions, TemperatureSchedule, UsageError,
                           as_points, check_pdd, extract_clusters, influence_weight,
                           kernel_weights, run_sup, update_step)

from oracles import brute_components, same_partition, scalar_blurring_run, scalar_blurring_step

coords = st.floats(min_value=-20, max_value=20, allow_nan=False, allow_infinity=False)


def point_sets(min_n=2, max_n=12, max_p=3):
    return st.integers(1, max_p).flatmap(
        lambda p: arrays(np.float64, st.tuples(st.integers(min_n, max_n), st.just(p)), elements=coords))


# ---------------------------------------------------------------- influence


def test_static_weight_at_range_boundary():
    # T = r/5 gives exp(-5) at d = r, and zero just beyond it
    spec = InfluenceSpec.static(2.0)
    assert influence_weight(2.0, 0, spec) == pytest.approx(math.exp(-5.0), rel=1e-15)
    assert influence_weight(2.0, 0, spec) == pytest.approx(0.006738, abs=5e-7)
    assert influence_weight(2.0 + 1e-12, 0, spec) == 0.0
    assert influence_weight(0.0, 0, spec) == 1.0


def test_dynamic_temperature_schedule():
    spec = InfluenceSpec.dynamic(4.0, s=0.02)
    assert spec.schedule.temperature(0) == pytest.approx(0.2)
    assert spec.schedule.temperature(10) == pytest.approx(4.0 * (0.05 + 0.2))
    # at t = 0 the boundary weight is exp(-20)
    assert influence_weight(4.0, 0, spec) == pytest.approx(math.exp(-20.0))
    assert influence_weight(4.0, 100, spec) > influence_weight(4.0, 0, spec)


def test_flat_and_centroid_families():
    flat = InfluenceSpec.flat(1.5)
    assert kernel_weights([0.0, 1.5, 1.6], 0, flat).tolist() == [1.0, 1.0, 0.0]
    cl = InfluenceSpec(CENTROID_LINKAGE_DYNAMIC)
    assert kernel_weights([0.0, 0.5, 0.7], 0, cl, r_t=0.5).tolist() == [1.0, 1.0, 0.0]
    with pytest.raises(UsageError):
        kernel_weights([0.1], 0, cl)


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        InfluenceSpec.static(-1.0)
    with pytest.raises(ConfigurationError):
        InfluenceSpec.static(1.0, T=0.0)
    with pytest.raises(ConfigurationError):
        InfluenceSpec.dynamic(1.0, s=0.0)
    with pytest.raises(ConfigurationError):
        InfluenceSpec("gaussian", 1.0)
    with pytest.raises(ConfigurationError):
        TemperatureSchedule("dynamic", math.inf, heating_rate=0.02)
    with pytest.raises(ConfigurationError):
        SupOptions(convergence_eps=1e-3, merge_tol=1e-4)
    with pytest.raises(UsageError):
        influence_weight(-0.1, 0, InfluenceSpec.static(1.0))


def test_pdd_check_separates_kernels():
    probes = np.linspace(0.0, 3.0, 31)
    assert check_pdd(InfluenceSpec.static(2.0), probes).passed
    assert check_pdd(InfluenceSpec.dynamic(2.0), probes, t=7).passed
    # flat weight equals 1 away from zero, so it is not positive-decreasing
    rep = check_pdd(InfluenceSpec.flat(2.0), probes)
    assert rep.in_unit_interval and rep.non_increasing and not rep.one_only_at_zero
    assert not check_pdd(lambda d: min(1.0, d), probes).passed


# ---------------------------------------------------------------- update rule


def test_two_point_update_by_hand():
    a, b = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    spec = InfluenceSpec.static(2.0, T=0.5)
    w = math.exp(-2.0)
    new = update_step(np.array([a, b]), np.array([a, b]), 0, spec)
    assert new[0] == pytest.approx((a + w * b) / (1 + w), abs=1e-15)
    assert new[1] == pytest.approx((b + w * a) / (1 + w), abs=1e-15)


def test_isolated_point_stays_put():
    x = np.array([[0.0], [0.1], [50.0]])
    new = update_step(x, x, 0, InfluenceSpec.static(1.0))
    assert new[2, 0] == 50.0


def test_update_shape_mismatch():
    with pytest.raises(UsageError):
        update_step(np.zeros((3, 2)), np.zeros((4, 2)), 0, InfluenceSpec.static(1.0))


def test_as_points_validation():
    assert as_points([1.0, 2.0]).shape == (2, 1)
    with pytest.raises(UsageError):
        as_points([[0.0, np.nan]])
    with pytest.raises(UsageError):
        as_points(np.zeros((0, 2)))


def test_sequential_matches_scalar_loop_bit_exactly():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.normal(size=(int(rng.integers(2, 25)), int(rng.integers(1, 4)))) * 3
        spec = InfluenceSpec.static(2.0, T=0.4)
        ref = x.tolist()
        got = x.copy()
        for t in range(4):
            ref = scalar_blurring_step(ref, 2.0, 0.4)
            got = update_step(got, got, t, spec)
        assert np.array_equal(np.array(ref), got)


def test_full_run_matches_scalar_loop_bit_exactly():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(15, 2)) * 2
    ref, iters = scalar_blurring_run(x, 1.5, 0.3)
    res = run_sup(x, InfluenceSpec.static(1.5, T=0.3))
    assert res.iterations_run == iters
    assert np.array_equal(res.final_positions, ref)


@pytest.mark.parametrize("n", [40, 1600])
def test_fast_modes_agree_with_sequential(n):
    rng = np.random.default_rng(n)
    x = rng.uniform(0, 30, size=(n, 2))
    x[1] = x[0]  # coincident points exercise the sparse path's zero distances
    for spec in (InfluenceSpec.static(2.0), InfluenceSpec.dynamic(2.0), InfluenceSpec.flat(2.0)):
        a = update_step(x, x, 3, spec, mode="sequential")
        b = update_step(x, x, 3, spec, mode="fast")
        assert np.allclose(a, b, rtol=0, atol=1e-10)


def test_nonblurring_reference_uses_initial_points():
    x = np.array([[0.0], [1.0], [5.0]])
    spec = InfluenceSpec.static(2.0, reference="initial")
    res = run_sup(x, spec, SupOptions(record_trajectory=True))
    # second step averages over the input points, not the first iterate
    step1 = res.trajectory[1]
    manual = update_step(step1, x, 1, spec)
    assert np.allclose(res.trajectory[2], manual, atol=0)


# ---------------------------------------------------------------- run loop


def test_iteration_cap_reports_not_converged():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 2))
    res = run_sup(x, InfluenceSpec.dynamic(1.0), SupOptions(max_iterations=2))
    assert res.iterations_run == 2 and not res.converged


def test_trajectory_stride_keeps_final_frame():
    x = np.array([[0.0, 0.0], [0.5, 0.0], [5.0, 5.0]])
    res = run_sup(x, InfluenceSpec.static(1.0), SupOptions(record_trajectory=True, snapshot_stride=3))
    assert res.trajectory_steps[0] == 0
    assert res.trajectory_steps[-1] == res.iterations_run
    assert all(s % 3 == 0 for s in res.trajectory_steps[1:-1])
    assert np.array_equal(res.trajectory[-1], res.final_positions)


def test_extract_clusters_against_flood_fill():
    rng = np.random.default_rng(5)
    for _ in range(30):
        x = np.round(rng.uniform(0, 1, size=(int(rng.integers(1, 40)), 2)), 1)
        labels, reps = extract_clusters(x, 0.15)
        assert same_partition(labels, brute_components(x, 0.15))
        # first-occurrence numbering
        seen = []
        for v in labels:
            if v not in seen:
                seen.append(v)
        assert seen == list(range(len(seen)))
        for c in range(reps.shape[0]):
            assert np.allclose(reps[c], x[labels == c].mean(axis=0))


def test_three_far_groups_found():
    x = np.array([[0, 0], [0.3, 0], [0, 0.3], [10, 10], [10.2, 10], [20, 0]], dtype=float)
    res = run_sup(x, InfluenceSpec.static(2.0))
    assert res.converged
    assert res.labels.tolist() == [0, 0, 0, 1, 1, 2]
    assert res.cluster_sizes().tolist() == [3, 2, 1]


# ---------------------------------------------------------------- properties

PROP = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@PROP
@given(point_sets(), st.floats(0.5, 10), st.floats(0.2, 1.0), st.floats(0.002, 0.02),
       st.sampled_from(["static", "dynamic"]))
def test_convergence_for_pdd_influence(x, r, frac, s, kind):
    # far smaller T stalls pairs near the range edge past the iteration cap
    spec = InfluenceSpec.static(r, T=frac * r) if kind == "static" else InfluenceSpec.dynamic(r, s)
    res = run_sup(x, spec, SupOptions(mode="fast"))
    assert res.converged
    assert res.iterations_run <= 10_000


@PROP
@given(point_sets(max_n=10), st.floats(0.2, 1.0))
def test_single_cluster_when_range_covers_everything(x, frac):
    # the limit is one point for any T; T >= r/5 keeps the merge inside the cap
    span = float(np.max(np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))))
    r = max(span, 1e-3) * 1.0001
    res = run_sup(x, InfluenceSpec.static(r, T=frac * r))
    assert res.n_clusters == 1


@PROP
@given(point_sets(), st.floats(0.5, 8), st.integers(0, 30))
def test_update_stays_inside_bounding_box(x, r, t):
    for spec in (InfluenceSpec.static(r), InfluenceSpec.dynamic(r), InfluenceSpec.flat(r)):
        new = update_step(x, x, t, spec)
        span = np.max(np.abs(x)) + 1.0
        tol = 1e-12 * span
        assert np.all(new >= x.min(axis=0) - tol)
        assert np.all(new <= x.max(axis=0) + tol)


@PROP
@given(point_sets(max_n=10, max_p=2), st.floats(0.5, 5), coords, coords,
       st.floats(0, 2 * math.pi), st.floats(0.25, 4))
def test_equivariance_under_similarity_transforms(x, r, dx, dy, angle, c):
    p = x.shape[1]
    if p == 1:
        rot = np.array([[1.0]])
        shift = np.array([dx])
    else:
        rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        shift = np.array([dx, dy])
    spec = InfluenceSpec.static(r)
    base = update_step(x, x, 0, spec)
    moved = c * x @ rot.T + shift
    # skip inputs with a pair numerically on the range boundary
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    if np.any(np.abs(d - r) < 1e-6 * max(1.0, r)):
        return
    out = update_step(moved, moved, 0, spec.scaled(c))
    scale = np.max(np.abs(moved)) + 1.0
    assert np.allclose(out, c * base @ rot.T + shift, rtol=0, atol=1e-9 * scale)


@PROP
@given(point_sets(max_n=10))
def test_permuting_points_permutes_labels(x):
    spec = InfluenceSpec.static(3.0)
    perm = np.random.default_rng(0).permutation(x.shape[0])
    a = run_sup(x, spec, SupOptions(mode="fast"))
    b = run_sup(x[perm], spec, SupOptions(mode="fast"))
    assert same_partition(a.labels[perm], b.labels)
