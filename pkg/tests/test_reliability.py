import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridplan.network import EconParams, GeneratorUnit, Network, StorageAsset, Zone
from gridplan.outages import OutageScenario
from gridplan.powerflow import compute_ptdf
from gridplan.reliability import (DispatchSchedule, PrevState, RedispatchModel, ReliabilityAssessor, TrialResult,
                                  dispatch_schedule, redispatch_hour, run_monte_carlo, run_trial)

from .checks import lost_generation_gap, monotonicity_violations, soc_residual
from .builders import flat_profiles, random_network, schedule_from_dispatch, two_unit_case
from .oracles import brute_force_two_unit, redispatch_oracle


def hand_schedule(net, gbar, load, soc_start=None):
    """One-hour schedule with no charging; SOC stays at its start value."""
    S = len(net.storages)
    soc0 = np.zeros(S) if soc_start is None else np.asarray(soc_start, float)
    gbar = np.asarray(gbar, float).reshape(-1, 1)
    load = np.asarray(load, float).reshape(-1, 1)
    ptdf = compute_ptdf(net)
    inj = np.zeros(net.n_zones)
    units = list(net.generators) + list(net.storages)
    for u, g in zip(units, gbar[:, 0]):
        inj[net.zone_index(u.zone)] += g
    flows = ptdf.values @ (inj - load[:, 0])
    return DispatchSchedule(gbar, np.zeros((S, 1)), soc0[:, None].copy(), flows[:, None], np.zeros_like(load), load,
                            np.ones((len(net.generators), 1)), soc0)


class TestRedispatchExamples:
    def test_two_unit_outage(self):
        net, sched = two_unit_case()
        res = redispatch_hour(net, sched, np.array([0, 1]), None, 0)
        assert res.g[1] == 60.0 and res.ens[0] == 40.0
        assert res.g[0] == 0.0
        assert res.objective_usd == pytest.approx(50.0 * 60 + 9000.0 * 40)
        cost, (g_b, ens) = brute_force_two_unit(100.0, 80.0, 0.0, 0.75, 50.0, 9000.0)
        assert (res.g[1], res.ens[0]) == (g_b, ens)
        assert res.objective_usd == pytest.approx(cost)

    def test_no_outage_keeps_schedule(self):
        net, sched = two_unit_case()
        res = redispatch_hour(net, sched, np.array([1, 1]), None, 0)
        assert not res.solved
        np.testing.assert_array_equal(res.d_up, 0)
        np.testing.assert_array_equal(res.d_dn, 0)
        assert res.objective_usd == 0.0

    def test_forced_lp_agrees_with_fast_path(self):
        net, sched = two_unit_case()
        model = RedispatchModel(net)
        prev = PrevState.from_schedule(sched, 0)
        fast = model.solve_hour(sched, 0, np.array([1, 1]), prev)
        slow = model.solve_hour(sched, 0, np.array([1, 1]), prev, force_lp=True)
        assert slow.solved and not fast.solved
        assert slow.objective_usd == pytest.approx(fast.objective_usd, abs=1e-6)
        np.testing.assert_allclose(slow.ens, fast.ens, atol=1e-6)

    def test_satoa_covers_deficit(self):
        net = Network(
            (Zone(1, "a", 1000.0),),
            (),
            (GeneratorUnit("A", 1, "ng", 500.0, 20.0), GeneratorUnit("B", 1, "ng", 500.0, 30.0)),
            (StorageAsset("sat", 1, 600.0, 2400.0, 0.9, 0.9, is_satoa=True),),
            econ=EconParams(voll_usd_per_mwh=9000.0),
        )
        sched = hand_schedule(net, [500.0, 500.0, 0.0], [1000.0], soc_start=[2400.0])
        res = redispatch_hour(net, sched, np.array([1, 0]), None, 0)
        assert res.g[2] == pytest.approx(500.0)
        assert res.ens[0] == pytest.approx(0.0, abs=1e-9)
        assert 2400.0 - res.soc[0] == pytest.approx(500.0 / 0.9)

    def test_import_limited_zone(self):
        """Deficit zone behind a thin line: ens = deficit - import - local headroom."""
        from gridplan.network import Branch

        net = Network(
            (Zone(1, "exp", 0.0), Zone(2, "imp", 900.0)),
            (Branch(1, 1, 2, 0.01, 283.0),),
            (GeneratorUnit("far", 1, "ng", 2000.0, 10.0),
             GeneratorUnit("big", 2, "nuclear", 400.0, 5.0),
             GeneratorUnit("near", 2, "ng", 600.0, 40.0, ramp_10min_frac=0.1)),
            econ=EconParams(voll_usd_per_mwh=9000.0),
        )
        sched = hand_schedule(net, [283.0, 400.0, 217.0], [0.0, 900.0])
        res = redispatch_hour(net, sched, np.array([1, 0, 1]), None, 0)
        # line already full, near unit can add 0.1 * 600 within ten minutes
        assert res.ens[1] == pytest.approx(400.0 - 0.0 - 60.0)
        wide = net.replace(branches=(Branch(1, 1, 2, 0.01, 1778.0),))
        res2 = redispatch_hour(wide, sched, np.array([1, 0, 1]), None, 0)
        assert res2.ens[1] == pytest.approx(0.0, abs=1e-9)


def random_instance(seed, hours=6):
    rng = np.random.default_rng(seed)
    net = random_network(rng)
    sched, prof = schedule_from_dispatch(net, hours=hours, rng=rng, load_scale=float(rng.uniform(0.5, 1.0)))
    avail = (rng.random((len(net.generators), hours)) > 0.3).astype(np.uint8)
    return rng, net, sched, avail


class TestRedispatchProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_btheta_oracle(self, seed):
        rng, net, sched, avail = random_instance(seed)
        model = RedispatchModel(net)
        for h in range(sched.hours):
            prev = PrevState.from_schedule(sched, h)
            res = model.solve_hour(sched, h, avail[:, h], prev, force_lp=True)
            ref, _, _ = redispatch_oracle(net, sched.gbar[:, h], sched.chgbar[:, h], sched.load[:, h],
                                          sched.gen_cf[:, h], avail[:, h], prev.g, prev.soc)
            assert res.objective_usd == pytest.approx(ref, rel=1e-6, abs=1e-5)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_solution_invariants(self, seed):
        rng, net, sched, avail = random_instance(seed)
        model = RedispatchModel(net)
        prev = PrevState.from_schedule(sched, 0)
        for h in range(sched.hours):
            res = model.solve_hour(sched, h, avail[:, h], prev, force_lp=True)
            load = sched.load[:, h]
            # storage energy recursion
            assert np.all(soc_residual(model, res, prev) <= 1e-6)
            # lost-generation inequality as written (previous hour from the schedule, so no spill)
            if h == 0:
                assert lost_generation_gap(sched, h, res, avail[:, h]) <= 1e-6
            # system balance and shortfall bounds
            bal = res.g.sum() - res.chg.sum() + res.ens.sum() - res.spill.sum() - load.sum()
            assert abs(bal) <= 1e-6
            assert np.all(res.ens >= 0) and np.all(res.ens <= load + 1e-9)
            # flows within limits
            fmax = np.array([b.capacity_mw for b in net.branches])
            assert np.all(np.abs(res.flows) <= fmax + 1e-6)
            # unavailable units produce nothing; deviations are exclusive
            assert np.all(res.g[: model.G][avail[:, h] == 0] == 0)
            assert np.all(res.d_up * res.d_dn == 0)
            np.testing.assert_allclose(res.g - sched.gbar[:, h], res.d_up - res.d_dn, atol=1e-9)
            prev = res.state()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_lost_generation_bound_from_schedule_state(self, seed):
        rng, net, sched, avail = random_instance(seed)
        model = RedispatchModel(net)
        for h in range(sched.hours):
            res = model.solve_hour(sched, h, avail[:, h], PrevState.from_schedule(sched, h), force_lp=True)
            assert lost_generation_gap(sched, h, res, avail[:, h]) <= 1e-6
            assert res.spill.sum() <= 1e-6

    def test_schedule_state_ignores_realized_state(self):
        rng, net, sched, avail = random_instance(4)
        literal = RedispatchModel(net, schedule_state=True)
        bogus = PrevState(np.zeros_like(sched.gbar[:, 0]), np.zeros(len(net.storages)), np.zeros(len(net.storages)))
        a = literal.solve_hour(sched, 2, avail[:, 2], bogus, force_lp=True)
        b = literal.solve_hour(sched, 2, avail[:, 2], PrevState.from_schedule(sched, 2), force_lp=True)
        assert a.objective_usd == pytest.approx(b.objective_usd)


class TestStageOne:
    @pytest.fixture(scope="class")
    @staticmethod
    def case():
        rng = np.random.default_rng(3)
        net = random_network(rng, n_zones=3)
        prof = flat_profiles(net, 48, 0.7, rng)
        return net, prof, dispatch_schedule(net, prof)

    def test_shapes(self, case):
        net, prof, sched = case
        U = len(net.generators) + len(net.storages)
        assert sched.gbar.shape == (U, 48) and sched.hours == 48
        assert sched.flows.shape == (len(net.branches), 48)

    def test_balance_and_limits(self, case):
        net, prof, sched = case
        balance = sched.gbar.sum(axis=0) - sched.chgbar.sum(axis=0) + sched.ens_stage1.sum(axis=0)
        np.testing.assert_allclose(balance, prof.load.sum(axis=0), atol=1e-6)
        fmax = np.array([b.capacity_mw for b in net.branches])
        assert np.all(np.abs(sched.flows) <= fmax[:, None] + 1e-6)

    def test_satoa_idle_and_full(self, case):
        net, prof, sched = case
        G = len(net.generators)
        for k, s in enumerate(net.storages):
            if s.is_satoa:
                assert np.all(sched.gbar[G + k] == 0) and np.all(sched.chgbar[k] == 0)
                np.testing.assert_allclose(sched.socbar[k], s.energy_mwh)

    def test_storage_recursion(self, case):
        net, prof, sched = case
        G = len(net.generators)
        soc_prev = np.column_stack([sched.soc_start, sched.socbar[:, :-1]])
        for k, s in enumerate(net.storages):
            resid = sched.socbar[k] - soc_prev[k] - s.charge_eff * sched.chgbar[k] + sched.gbar[G + k] / s.discharge_eff
            assert np.all(np.abs(resid) <= 1e-6)

    def test_ramps_respected(self, case):
        net, prof, sched = case
        for k, g in enumerate(net.generators):
            step = np.abs(np.diff(sched.gbar[k]))
            assert np.all(step <= g.ramp_hourly_frac * g.capacity_mw + 1e-6)

    def test_window_and_concat(self, case):
        net, prof, sched = case
        parts = [sched.window(0, 20), sched.window(20, 48)]
        back = DispatchSchedule.concat(parts)
        np.testing.assert_array_equal(back.gbar, sched.gbar)
        np.testing.assert_array_equal(parts[1].soc_start, sched.socbar[:, 19])


class TestTrials:
    def test_all_available_reproduces_schedule(self):
        rng, net, sched, _ = random_instance(11, hours=24)
        scen = OutageScenario(np.ones((len(net.generators), 24), np.uint8), 0, 0)
        res = run_trial(net, sched, scen)
        np.testing.assert_array_equal(res.ens_dense(), np.where(sched.ens_stage1 > 0, sched.ens_stage1, 0))
        assert res.lp_solves == 0

    def test_single_outage_with_spare_capacity(self):
        net = Network(
            (Zone(1, "a", 100.0),),
            (),
            (GeneratorUnit("A", 1, "ng", 100.0, 10.0), GeneratorUnit("B", 1, "ng", 200.0, 20.0)),
        )
        prof = flat_profiles(net, 5, 1.0)
        sched = dispatch_schedule(net, prof)
        avail = np.ones((2, 5), np.uint8)
        avail[0, 2] = 0
        res = run_trial(net, sched, OutageScenario(avail, 0, 0))
        assert res.eue_mwh.sum() == 0.0
        assert res.lp_solves >= 1

    def test_shape_mismatch(self):
        net, sched = two_unit_case()
        with pytest.raises(ValueError, match="scenario"):
            run_trial(net, sched, OutageScenario(np.ones((3, 1), np.uint8), 0, 0))

    def test_record_round_trip(self):
        from scipy import sparse

        ens = sparse.csr_matrix(np.array([[0.0, 2.5, 0.0], [1e-9, 0.0, 4.0]]))
        t = TrialResult(3, ens, 1e-6, 2, 5)
        back = TrialResult.from_record(json.loads(json.dumps(t.to_record())))
        np.testing.assert_array_equal(back.ens_dense(), t.ens_dense())
        assert back.trial_id == 3 and back.relaxed_hours == 2
        np.testing.assert_array_equal(t.shortfall_hours, [1, 1])
        assert t.system_shortfall_hours == 2


@pytest.fixture(scope="module")
def stressed():
    rng = np.random.default_rng(21)
    net = random_network(rng, n_zones=3, n_gens=6)
    prof = flat_profiles(net, 24, 0.95, rng)
    return net, prof


class TestMonteCarlo:
    def test_worker_count_independent(self, stressed):
        net, prof = stressed
        a = run_monte_carlo(net, prof, 4, seed=5, workers=1)
        b = run_monte_carlo(net, prof, 4, seed=5, workers=2)
        for x, y in zip(a, b):
            assert x.to_record() == y.to_record()
        assert [t.trial_id for t in a] == [0, 1, 2, 3]

    def test_prefix_stable(self, stressed):
        net, prof = stressed
        short = run_monte_carlo(net, prof, 2, seed=9)
        long = run_monte_carlo(net, prof, 4, seed=9)
        assert [t.to_record() for t in short] == [t.to_record() for t in long[:2]]

    def test_resume(self, stressed, tmp_path):
        net, prof = stressed
        path = tmp_path / "trials.jsonl"
        first = run_monte_carlo(net, prof, 2, seed=1, results_file=path)
        with path.open("a") as fh:
            fh.write('{"trial_id": 2, "zo')  # torn line from an interrupted run
        again = run_monte_carlo(net, prof, 3, seed=1, results_file=path)
        assert [t.to_record() for t in again[:2]] == [t.to_record() for t in first]
        lines = path.read_text().splitlines()
        assert len(lines) == 4 and json.loads(lines[0])["header"]["seed"] == 1

    def test_resume_rejects_other_config(self, stressed, tmp_path):
        net, prof = stressed
        path = tmp_path / "trials.jsonl"
        run_monte_carlo(net, prof, 1, seed=1, results_file=path)
        with pytest.raises(ValueError, match="different run configuration"):
            run_monte_carlo(net, prof, 1, seed=2, results_file=path)

    def test_trials_validated(self, stressed):
        net, prof = stressed
        with pytest.raises(ValueError, match="trials"):
            run_monte_carlo(net, prof, 0, seed=0)

    def test_no_outage_params_gives_stage1_metrics(self):
        rng = np.random.default_rng(2)
        net = random_network(rng, n_zones=2, storage=False, satoa=False)
        net = net.replace(generators=tuple(g.__class__(**{**g.__dict__, "outage": None}) for g in net.generators))
        prof = flat_profiles(net, 12, 1.3)
        sched = dispatch_schedule(net, prof)
        trials = run_monte_carlo(net, prof, 1, seed=0, schedule=sched)
        np.testing.assert_allclose(trials[0].eue_mwh, sched.ens_stage1.sum(axis=1))

    def test_assessor(self, stressed):
        net, prof = stressed
        est = ReliabilityAssessor(trials=2, seed=3)
        assert est.get_params()["trials"] == 2
        est.fit(net, prof)
        assert est.metrics_.trials == 2 and est.schedule_.hours == 24
        with pytest.raises(ValueError):
            ReliabilityAssessor(trials=0).fit(net, prof)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_more_capacity_never_costs_more(seed):
    violations, checked, _ = monotonicity_violations(seed)
    assert checked == 18 and violations == 0
