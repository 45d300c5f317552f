import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import phi_mp, reflected_workload
from roq import simkit
from roq.errors import (
    GammaTooSmall,
    HorizonExceeded,
    InsufficientData,
    NotNilpotent,
    PolicyUnknown,
    TimeTooSmall,
    UnstableInstance,
    UnstableWarning,
)
from roq.multiclass import (
    McssInstance,
    arrival_count_bound,
    busy_period_bounds,
    check_arrival_lemmas,
    entry_schedule,
    neumann_reach,
    parse_policy,
    stationary_estimators,
    time_lower_bound,
    traffic_solve,
    workload_by_arrivals,
    workload_trace,
)
from roq.paths import McssPath

B_BOUND_J1 = 7277976362251.9335  # frozen, mpmath
W_BOUND_J1 = 1428199355448.4042
LEMMA_EDGE = 99776707.993729847


def chain2():
    return McssInstance(J=2, lam=(0.3, 0.0), mu=(1.0, 1.0), P=((0, 1), (0, 0)))


@st.composite
def nilpotent(draw, max_j=8):
    """Random 0/1 routing with jobs only moving to higher-ranked classes."""
    J = draw(st.integers(1, max_j))
    perm = draw(st.permutations(range(J)))
    P = np.zeros((J, J), dtype=int)
    for i in range(J - 1):
        if draw(st.booleans()):
            P[perm[i], perm[draw(st.integers(i + 1, J - 1))]] = 1
    lam = draw(st.lists(st.floats(0.0, 5.0), min_size=J, max_size=J))
    lam[draw(st.integers(0, J - 1))] = draw(st.floats(0.1, 5.0))
    return McssInstance(J=J, lam=tuple(lam), mu=(1e3,) * J, P=tuple(map(tuple, P)))


def test_traffic_examples():
    inst = McssInstance(J=2, lam=(1.0, 0.5), mu=(4.0, 4.0), P=((0, 0), (0, 0)))
    assert traffic_solve(inst).lambda_bar.tolist() == [1.0, 0.5]
    inst = McssInstance(J=2, lam=(1.0, 0.0), mu=(4.0, 4.0), P=((0, 1), (0, 0)))
    assert traffic_solve(inst).lambda_bar.tolist() == [1.0, 1.0]
    inst = McssInstance(J=3, lam=(0.5, 0, 0), mu=(4.0,) * 3, P=((0, 1, 0), (0, 0, 1), (0, 0, 0)))
    tr = traffic_solve(inst)
    assert tr.lambda_bar.tolist() == [0.5, 0.5, 0.5]
    assert tr.rho == pytest.approx(0.375)


@given(nilpotent())
def test_traffic_residual(inst):
    tr = traffic_solve(inst)
    assert tr.residual < 1e-12
    assert np.all(tr.lambda_bar >= np.asarray(inst.lam))
    assert np.allclose(np.linalg.solve(np.eye(inst.J) - inst.P_array.T, inst.lam), tr.lambda_bar)


def test_not_nilpotent_and_unstable():
    with pytest.raises(NotNilpotent):
        neumann_reach(np.array([[0, 1], [1, 0]]))
    inst = McssInstance(J=1, lam=(2.0,), mu=(1.0,), P=((0,),))
    with pytest.warns(UnstableWarning):
        tr = traffic_solve(inst)
    assert tr.rho == 2.0
    with pytest.raises(UnstableInstance):
        busy_period_bounds(inst.with_gamma(500.0))


def test_instance_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        McssInstance(J=1, lam=(1.0,), mu=(2.0,), P=((2,),))
    with pytest.raises(ValueError):
        McssInstance(J=2, lam=(1.0, 0), mu=(2.0, 2.0), P=((1, 1), (0, 0)))
    inst = chain2()
    f = tmp_path / "m.json"
    f.write_text(json.dumps(inst.to_dict()))
    assert McssInstance.from_json(f) == inst
    assert inst.lam_min == 0.3


def test_policy_parsing():
    assert parse_policy("fifo", 2).name == "fifo"
    assert parse_policy("fifo-across-classes", 2).name == "fifo"
    assert parse_policy("priority:1,0", 2).order == (1, 0)
    assert parse_policy("static-priority(1,0)", 2).order == (1, 0)
    assert parse_policy("priority", 3).order == (0, 1, 2)
    with pytest.raises(PolicyUnknown):
        parse_policy("lifo", 2)
    with pytest.raises(PolicyUnknown):
        parse_policy("priority:0,0", 2)


def test_single_initial_job():
    inst = McssInstance(J=1, lam=(0.0,), mu=(1.0,), P=((0,),))
    path = McssPath(u=(np.empty(0),), v=(np.array([2.5]),), horizon=10.0)
    trace, log = workload_trace(inst, path)
    assert log.busy == [2.5] and log.peaks == [2.5] and log.starts == [0.0]
    assert math.isnan(log.idles[0])
    assert trace.at(1.0) == pytest.approx(1.5)


def test_two_initial_jobs_work_conservation():
    inst = McssInstance(J=2, lam=(0.0, 0.0), mu=(1.0, 1.0), P=((0, 0), (0, 0)))
    path = McssPath(u=(np.empty(0), np.empty(0)), v=(np.array([1.5]), np.array([2.0])), horizon=10.0)
    for pol in ("fifo", "priority:1,0"):
        _, log = workload_trace(inst, path, pol)
        assert log.busy == [3.5] and log.peaks == [3.5]


def test_deterministic_hand_trace():
    # chain 1 -> 2, arrivals every 4, service 1 at each stage
    inst = chain2()
    path = McssPath(u=(np.full(10, 4.0), np.empty(0)), v=(np.ones(20), np.ones(20)), horizon=13.0)
    trace, log = workload_trace(inst, path)
    # initial jobs: class 1 (2 units of route work) + class 2 (1 unit)
    assert trace.at(0.0) == 3.0
    assert log.starts == [0.0, 4.0, 8.0] and log.busy == [3.0, 2.0, 2.0]
    assert log.idles[:2] == [1.0, 2.0] and log.peaks == [3.0, 2.0, 2.0]
    assert log.censored_start == 12.0
    assert log.work == log.busy


def test_horizon_exceeded():
    inst = chain2()
    path = McssPath(u=(np.full(3, 4.0), np.empty(0)), v=(np.ones(20), np.ones(20)), horizon=13.0)
    with pytest.raises(HorizonExceeded):
        workload_trace(inst, path)
    path = McssPath(u=(np.full(10, 4.0), np.empty(0)), v=(np.ones(2), np.ones(20)), horizon=13.0)
    with pytest.raises(HorizonExceeded):
        workload_trace(inst, path)


@pytest.mark.parametrize("seed", range(10))
def test_policy_invariance_and_reflection_oracle(seed):
    inst = McssInstance(J=3, lam=(0.2, 0.15, 0.0), mu=(1.5, 2.0, 3.0), P=((0, 0, 1), (0, 0, 1), (0, 0, 0)))
    arr, srv = simkit.default_dists(inst)
    path = simkit.draw_path_mcss(inst, arr, srv, 300.0, seed)
    traces = [workload_trace(inst, path, p)[0] for p in ("fifo", "priority:0,1,2", "priority:2,1,0")]
    events = np.unique(np.concatenate([t.times for t in traces]))
    for t in traces[1:]:
        assert np.allclose(t.at(events), traces[0].at(events), atol=1e-9, rtol=0)
    agg = workload_by_arrivals(inst, path)
    assert np.allclose(agg.at(events), traces[0].at(events), atol=1e-9)
    sched, _ = entry_schedule(inst, path)
    times = [s[0] for s in sched]
    works = [sum(s[2]) for s in sched]
    for t in events[:: max(1, len(events) // 25)]:
        assert traces[0].at(t) == pytest.approx(reflected_workload(times, works, t), abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_conservation_per_busy_period(seed):
    inst = chain2()
    arr, srv = simkit.default_dists(inst)
    path = simkit.draw_path_mcss(inst, arr, srv, 2000.0, seed)
    _, log = workload_trace(inst, path, "priority:1,0")
    assert len(log) > 10
    assert np.allclose(log.busy, log.work, rtol=1e-9, atol=1e-9)
    assert all(b > 0 for b in log.busy)
    assert np.all(np.diff(log.starts) > 0)


def test_empty_initial_condition():
    inst = McssInstance(J=1, lam=(1.0,), mu=(2.0,), P=((0,),))
    path = McssPath(u=(np.array([1.0, 5.0, 10.0]),), v=(np.ones(5),), horizon=6.5)
    trace, log = workload_trace(inst, path, initial="empty")
    assert log.starts == [1.0] and log.busy == [1.0]
    assert log.censored_start == 6.0


def test_busy_period_bounds_examples():
    inst = McssInstance(J=1, lam=(1.0,), mu=(2.0,), P=((0,),)).with_gamma(230.0)
    rep = busy_period_bounds(inst)
    assert rep.values["busy_period"] == pytest.approx(B_BOUND_J1, rel=1e-12)
    assert rep.values["workload"] == pytest.approx(W_BOUND_J1, rel=1e-12)
    hot = McssInstance(J=1, lam=(1.0,), mu=(1 / 0.9,), P=((0,),)).with_gamma(230.0)
    ratio = busy_period_bounds(hot).values["busy_period"] / rep.values["busy_period"]
    ll = lambda x: math.log(math.log(x))
    assert ratio == pytest.approx(25 * ll(2 * 7 * 52900 / 0.1) / ll(2 * 7 * 52900 / 0.5), rel=1e-9)
    with pytest.raises(GammaTooSmall):
        busy_period_bounds(McssInstance(J=1, lam=(0.5,), mu=(2.0,), P=((0,),)).with_gamma(400.0))


def test_arrival_count_bound_examples():
    inst = McssInstance(J=2, lam=(1.0, 0.0), mu=(4.0, 4.0), P=((0, 0), (0, 0))).with_gamma(230.0)
    t = 1 + 3 * 230.0**2
    assert time_lower_bound(inst) == t
    assert arrival_count_bound(inst, 0, t) == pytest.approx(LEMMA_EDGE, rel=1e-13)
    assert arrival_count_bound(inst, 0, t) == pytest.approx(t + 3 * 52900 * float(phi_mp(t)), rel=1e-13)
    assert arrival_count_bound(inst, 1, t) == 0.0
    with pytest.raises(TimeTooSmall):
        arrival_count_bound(inst, 0, t - 1)


def test_lemma_checks_on_simulated_path():
    inst = McssInstance(J=1, lam=(1.0,), mu=(2.0,), P=((0,),))
    G = 230.0
    t_low = time_lower_bound(inst, G)
    arr, srv = simkit.default_dists(inst)
    path = simkit.draw_path_mcss(inst, arr, srv, 10.0, 0, cover=2 * t_low)
    res = check_arrival_lemmas(inst, path, [t_low, 1.5 * t_low], G)
    assert res.violations == 0
    with pytest.raises(HorizonExceeded):
        check_arrival_lemmas(inst, path, [3 * t_low], G)


def test_stationary_estimators_mm1():
    inst = McssInstance(J=1, lam=(0.5,), mu=(1.0,), P=((0,),))
    est, reps = stationary_estimators(inst, replications=4, horizon=5000.0, seed=3)
    assert est.n_periods >= 30 and len(reps) == 4
    assert est.busy_dominated and est.renewal_bound_holds
    assert est.eb == pytest.approx(2.0, rel=0.15)
    assert est.ei == pytest.approx(2.0, rel=0.15)
    assert abs(est.mean_w - 1.0) < 5 * est.mean_w_stderr + 0.05
    assert est.waiting_closed_form_mean > est.busy_bound_mean > est.eb


def test_stationary_estimators_errors():
    inst = McssInstance(J=1, lam=(0.5,), mu=(1.0,), P=((0,),))
    with pytest.raises(InsufficientData):
        stationary_estimators(inst, replications=0, horizon=100.0, seed=0)
    with pytest.raises(InsufficientData):
        stationary_estimators(inst, replications=1, horizon=5.0, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnstableWarning)
        with pytest.raises(UnstableInstance):
            stationary_estimators(McssInstance(J=1, lam=(1.0,), mu=(1.0,), P=((0,),)), 1, 10.0, 0)
