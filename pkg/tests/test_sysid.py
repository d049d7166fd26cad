import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from castline.actions import Action
from castline.cablesim import TrajectoryRecord
from castline.pipeline.datasets import worker_map
from castline.sysid import (
    BOSettings,
    DESettings,
    ParamSpace,
    Sim2SimObjective,
    TuningResult,
    _surrogate_subset,
    bayes_opt_ei,
    differential_evolution,
    expected_improvement,
    relative_errors,
    subsample_tune_set,
    tuning_objective,
    waypoint_error,
)

A = Action(0.5, 0.6, -0.5, 0.6, 0.5, 2.0)
SPACE = ParamSpace(
    ("bend_stiffness", "cable_mass", "endpoint_mass", "mu_d"),
    ((0.01, 0.5), (0.01, 0.15), (0.005, 0.06), (0.05, 0.4)),
)


def _rec(wps, final, ms=None):
    wps = np.asarray(wps, dtype=float).reshape(-1, 2)
    return TrajectoryRecord(A, wps, final, ms if ms is not None else 100 * len(wps))


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


# -- parameter space --------------------------------------------------------

@pytest.mark.parametrize("names,bounds", [
    (("mu_d", "mu_d"), ((0, 1), (0, 1))),
    (("mu_d",), ((1, 0),)),
    (("n_links",), ((2, 5),)),
    (("mu_d",), ((0, 1), (0, 1))),
])
def test_param_space_validation(names, bounds):
    with pytest.raises(ValueError):
        ParamSpace(names, bounds)


def test_install_keeps_static_ratio(truth):
    p = SPACE.install(truth, [0.2, 0.05, 0.02, 0.1])
    assert p.mu_d == 0.1
    assert p.mu_s == pytest.approx(0.1 * truth.mu_s / truth.mu_d)
    assert np.allclose(SPACE.extract(p), [0.2, 0.05, 0.02, 0.1])


# -- waypoint error ---------------------------------------------------------

def test_waypoint_error_identical_is_zero():
    r = _rec(np.random.default_rng(0).random((12, 2)), (1.0, 0.2))
    assert waypoint_error(r, r) == 0.0


def test_waypoint_error_constant_offset():
    w = np.random.default_rng(1).random((15, 2))
    ref = _rec(w, (1.0, 0.2))
    shifted = _rec(w + (0.03, 0.04), np.array((1.0, 0.2)) + (0.03, 0.04))
    assert waypoint_error(shifted, ref) == pytest.approx(0.05, abs=1e-15)


@pytest.mark.parametrize("k", [1, 3, 7, 20, 33])
def test_waypoint_error_constant_offset_exact(k):
    ref = _rec(np.zeros((k, 2)), (0.0, 0.0))
    sim = _rec(np.tile([0.03, 0.04], (k, 1)), (0.03, 0.04))
    assert waypoint_error(sim, ref) == 0.05


def test_waypoint_error_truncates_and_appends_final():
    sim = _rec(np.zeros((20, 2)), (0.0, 0.0))
    ref = _rec(np.vstack([np.full((20, 2), (0.3, 0.4)), np.full((2, 2), 100.0)]), (0.0, 0.0))
    # 20 matched pairs at 0.5 m plus a zero final term
    assert waypoint_error(sim, ref) == pytest.approx(20 * 0.5 / 21, abs=1e-15)


def test_waypoint_error_needs_waypoints():
    with pytest.raises(ValueError):
        waypoint_error(_rec(np.empty((0, 2)), (0, 0), 50), _rec(np.zeros((3, 2)), (0, 0)))


# -- objective --------------------------------------------------------------

@pytest.fixture(scope="module")
def five_refs(ref_records):
    return subsample_tune_set(ref_records, 5, seed=1)


def test_objective_zero_at_truth(five_refs, truth):
    x = SPACE.extract(truth)
    assert tuning_objective(x, five_refs, SPACE, truth) < 1e-9


def test_objective_positive_off_truth(five_refs, truth):
    x = SPACE.extract(truth)
    x[3] *= 1.5
    assert tuning_objective(x, five_refs, SPACE, truth) > 0


def test_objective_needs_refs(truth):
    with pytest.raises(ValueError):
        tuning_objective(SPACE.extract(truth), [], SPACE, truth)


# -- differential evolution -------------------------------------------------

def test_de_sphere():
    res = differential_evolution(sphere, [(-5, 5)] * 4, DESettings(seed=3))
    assert res.best_error < 1e-6
    assert np.all(np.abs(res.best) < 1e-3)


def test_de_history_monotone_and_seeded():
    s = DESettings(seed=11, max_generations=40)
    a = differential_evolution(sphere, [(-5, 5)] * 3, s)
    b = differential_evolution(sphere, [(-5, 5)] * 3, s)
    best = [h[2] for h in a.history]
    assert all(x >= y for x, y in zip(best, best[1:]))
    assert a.to_dict() == b.to_dict()


def test_de_queries_stay_in_bounds():
    seen = []

    def f(x):
        seen.append(np.array(x))
        return float(np.sum((np.asarray(x) - 7.0) ** 2))  # optimum outside the box

    res = differential_evolution(f, [(-1, 2), (0, 1)], DESettings(seed=0, max_generations=30))
    pts = np.array(seen)
    assert np.all(pts >= [-1, 0]) and np.all(pts <= [2, 1])
    assert np.allclose(res.best, [2, 1])


def test_de_parallel_matches_serial():
    s = DESettings(seed=5, max_generations=15)
    serial = differential_evolution(sphere, [(-5, 5)] * 4, s)
    with worker_map(2) as pmap:
        par = differential_evolution(sphere, [(-5, 5)] * 4, s, mapper=pmap)
    assert serial.to_dict() == par.to_dict()


def test_de_settings_validation():
    with pytest.raises(ValueError):
        DESettings(popsize_factor=3)
    with pytest.raises(ValueError):
        DESettings(mutation=(1.0, 0.5))


def test_tuning_result_round_trip():
    res = differential_evolution(sphere, [(-5, 5)] * 2, DESettings(seed=2, max_generations=5))
    d = res.to_dict()
    assert all(len(h) == 3 for h in d["history"])
    again = TuningResult.from_dict(d)
    assert again.to_dict() == d
    x, err = again.best_within(d["trace"][2]["evaluations"])
    assert err == d["history"][2][1]


# -- Bayesian optimisation --------------------------------------------------

def test_ei_zero_without_variance():
    assert expected_improvement(np.array([0.3]), np.array([0.0]), 0.5)[0] == 0.0
    assert expected_improvement(np.array([0.3]), np.array([0.1]), 0.5)[0] > 0.0


@given(st.floats(-2, 2), st.floats(1e-3, 2), st.floats(-2, 2))
def test_ei_nonnegative(mu, sigma, best):
    assert expected_improvement(np.array([mu]), np.array([sigma]), best)[0] >= 0.0


def test_bo_quadratic_1d():
    res = bayes_opt_ei(lambda x: float((x[0] - 0.0) ** 2), [(-1, 1)], BOSettings(n_init=5, n_iter=20, seed=0))
    assert abs(res.best[0]) < 0.05
    assert res.evaluations == 25


def test_bo_seeded_and_bounded():
    seen = []

    def f(x):
        seen.append(np.array(x))
        return float(np.sum((np.asarray(x) - 0.3) ** 2))

    s = BOSettings(n_init=6, n_iter=8, seed=4)
    a = bayes_opt_ei(f, [(0, 1), (-1, 1)], s)
    b = bayes_opt_ei(f, [(0, 1), (-1, 1)], s)
    assert a.to_dict() == b.to_dict()
    pts = np.array(seen)
    assert np.all(pts >= [0, -1]) and np.all(pts <= [1, 1])


def test_bo_needs_initial_design():
    with pytest.raises(ValueError):
        BOSettings(n_init=1)
    with pytest.raises(ValueError):
        BOSettings(max_points=1)


def test_surrogate_subset_keeps_best_half():
    y = np.random.default_rng(0).permutation(50).astype(float)
    idx = _surrogate_subset(y, 10, np.random.default_rng(1))
    assert len(idx) == len(set(idx)) == 10
    assert set(np.flatnonzero(y < 5)) <= set(idx)
    assert np.array_equal(_surrogate_subset(y, None, None), np.arange(50))
    assert np.array_equal(_surrogate_subset(y, 50, None), np.arange(50))


def test_bo_capped_surrogate():
    f = lambda x: float(np.sum((np.asarray(x) - 0.3) ** 2))
    res = bayes_opt_ei(f, [(0, 1), (-1, 1)], BOSettings(n_init=6, n_iter=30, seed=2, max_points=12))
    assert res.evaluations == 36
    assert res.best_error < 1e-2


# -- tune-set subsampling ---------------------------------------------------

def test_subsample_rules():
    data = list(range(30))
    assert subsample_tune_set(data, 30, seed=0) == data
    a = subsample_tune_set(data, 20, seed=9)
    assert a == subsample_tune_set(data, 20, seed=9)
    assert a == sorted(a) and len(set(a)) == 20
    with pytest.raises(ValueError):
        subsample_tune_set(data, 31)


def test_relative_errors(truth):
    p = SPACE.install(truth, [0.101, 0.05, 0.02, 0.2])
    rel = relative_errors(p, truth, SPACE.names)
    assert rel["bend_stiffness"] == pytest.approx(0.01)
    assert rel["mu_d"] == 0.0


def test_sim2sim_objective_pickles(five_refs, truth):
    import pickle

    obj = Sim2SimObjective(five_refs, SPACE, truth)
    again = pickle.loads(pickle.dumps(obj))
    x = SPACE.extract(truth)
    assert again(x) == obj(x)
