from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corn.clustering import BubbleClustering
from corn.episim import (
    CasualContactModel,
    CalibrationResult,
    DiseaseParams,
    ReplicateResult,
    SimConfig,
    SimSummary,
    calibrate_rho,
    compare_runs,
    contact_infection_prob,
    estimate_r0,
    replicates_to_csv,
    shedding,
    simulate,
    summary_to_json,
)
from corn.errors import ConfigError, NotBracketedError

from .conftest import make_graph

DAY = 86400
NO_CASUAL = CasualContactModel(contacts_per_day=0.0)


def disease(rho, **kw):
    return DiseaseParams(rho=rho, **kw)


class TestShedding:
    # defaults: ramp chosen so the curve sits at 0.05 one day in and at recovery
    def test_peak_at_incubation_end(self):
        assert shedding(6, disease(1.0)) == 1.0

    def test_day_one_level(self):
        assert shedding(1, disease(1.0)) == pytest.approx(0.05)

    def test_recovery_level(self):
        assert shedding(16, disease(1.0)) == pytest.approx(0.05)

    def test_zero_after_span(self):
        assert shedding(17, disease(1.0)) == 0.0
        assert shedding(100, disease(1.0)) == 0.0

    def test_day_zero(self):
        assert shedding(0, disease(1.0)) == pytest.approx(20.0 ** -1.2)

    def test_geometric_decay(self):
        p = disease(1.0)
        ratio = math.exp(-math.log(20.0) / 10)
        for d in range(7, 16):
            assert shedding(d + 1, p) / shedding(d, p) == pytest.approx(ratio)

    def test_unimodal(self):
        p = disease(1.0)
        ys = [shedding(d, p) for d in range(17)]
        assert ys[:7] == sorted(ys[:7])
        assert ys[6:] == sorted(ys[6:], reverse=True)

    def test_custom_rates(self):
        p = disease(1.0, ramp_up_rate=0.7, ramp_down_rate=0.3)
        assert shedding(5, p) == pytest.approx(math.exp(-0.7))
        assert shedding(7, p) == pytest.approx(math.exp(-0.3))

    def test_negative_day_rejected(self):
        with pytest.raises(ConfigError):
            shedding(-1, disease(1.0))

    @given(st.integers(min_value=0, max_value=40),
           st.integers(min_value=1, max_value=10),
           st.integers(min_value=1, max_value=12))
    def test_range(self, day, w, t):
        v = shedding(day, disease(1.0, incubation_days=w, recovery_days=t))
        assert 0.0 <= v <= 1.0
        if day > w + t:
            assert v == 0.0


class TestContactProb:
    def test_reference_value(self):
        # 10 minutes at peak shedding with rho of 1e-3 per minute
        assert contact_infection_prob(10.0, 1.0, 0.001) == pytest.approx(0.01)

    def test_clamped(self):
        assert contact_infection_prob(1e6, 1.0, 1.0) == 1.0

    def test_zero_shedding(self):
        assert contact_infection_prob(30.0, 0.0, 0.5) == 0.0

    def test_negative_duration(self):
        with pytest.raises(ConfigError):
            contact_infection_prob(-1.0, 1.0, 0.1)


class TestParamChecks:
    @pytest.mark.parametrize("kw", [
        dict(rho=-0.1),
        dict(rho=0.1, incubation_days=0),
        dict(rho=0.1, recovery_days=0),
        dict(rho=0.1, cross_bubble_scale=1.5),
        dict(rho=0.1, ramp_up_rate=0.0),
        dict(rho=0.1, ramp_down_rate=-1.0),
    ])
    def test_bad_disease(self, kw):
        with pytest.raises(ConfigError):
            DiseaseParams(**kw).check()

    def test_bad_casual(self):
        with pytest.raises(ConfigError):
            CasualContactModel(contacts_per_day=-1.0).check()

    def test_bad_sim_config(self):
        with pytest.raises(ConfigError):
            SimConfig(disease=disease(0.1), replicates=0).check()
        with pytest.raises(ConfigError):
            SimConfig(disease=disease(0.1), horizon_days=0).check()


def solo_graph():
    """One HCP visiting one room on two consecutive days."""
    rows = [("p1", "la", 0, 3600), ("p1", "la", DAY, DAY + 3600)]
    return make_graph(rows, {"p1": "g1"}, {"la": "s"})


def two_bubble_graph():
    """Seeded HCP meets a second-bubble HCP one day after infection."""
    rows = [
        ("p1", "la", 0, 3600),
        ("p1", "la", DAY, DAY + 3600), ("p2", "la", DAY, DAY + 3600),
        ("p2", "lb", 2 * DAY, 2 * DAY + 3600),
    ]
    g = make_graph(rows, {"p1": "a", "p2": "b"}, {"la": "s", "lb": "s"})
    c = BubbleClustering(k=2, location_bubble={"la": 1, "lb": 2},
                         hcp_bubble={"p1": 1, "p2": 2})
    return g, c


class TestSimulate:
    def test_rho_zero_only_seed(self):
        cfg = SimConfig(disease=disease(0.0), replicates=20, casual=NO_CASUAL)
        s = simulate(solo_graph(), None, cfg)
        assert all(r.infections == 1 for r in s.results)
        assert all(r.leave is None and r.reach is None for r in s.results)

    def test_saturated_rho_infects_resident(self):
        # p = rho*60*shed(1) clamps to 1, so day-1 contact always transmits
        cfg = SimConfig(disease=disease(1000.0), replicates=20, casual=NO_CASUAL)
        s = simulate(solo_graph(), None, cfg)
        assert all(r.infections == 2 for r in s.results)

    def test_no_same_day_transmission(self):
        rows = [("p1", "la", 0, 3600)]
        g = make_graph(rows, {"p1": "g1"}, {"la": "s"})
        cfg = SimConfig(disease=disease(1000.0), replicates=10, casual=NO_CASUAL)
        s = simulate(g, None, cfg)
        assert all(r.infections == 1 for r in s.results)

    def test_horizon_cuts_run(self):
        cfg = SimConfig(disease=disease(1000.0), replicates=10, casual=NO_CASUAL,
                        horizon_days=1)
        s = simulate(solo_graph(), None, cfg)
        assert all(r.infections == 1 for r in s.results)

    def test_cross_bubble_full_scale(self):
        g, c = two_bubble_graph()
        cfg = SimConfig(disease=disease(1000.0, cross_bubble_scale=1.0),
                        replicates=20, casual=NO_CASUAL)
        s = simulate(g, c, cfg)
        assert all(r.infections == 4 for r in s.results)
        assert all(r.leave and r.reach for r in s.results)
        assert s.aggregates["leave_pct"] == 100.0
        assert s.aggregates["reach_pct"] == 100.0

    def test_cross_bubble_blocked(self):
        g, c = two_bubble_graph()
        cfg = SimConfig(disease=disease(1000.0, cross_bubble_scale=0.0),
                        replicates=20, casual=NO_CASUAL)
        s = simulate(g, c, cfg)
        assert all(r.infections == 2 for r in s.results)
        assert all(not r.leave and not r.reach for r in s.results)

    def test_transmission_log(self):
        g, c = two_bubble_graph()
        cfg = SimConfig(disease=disease(1000.0, cross_bubble_scale=1.0),
                        replicates=2, casual=NO_CASUAL, keep_transmission_log=True)
        s = simulate(g, c, cfg)
        ev = s.results[0].log
        assert len(ev) == 3
        assert {(e.source, e.target) for e in ev} == \
            {("p1", "la"), ("p1", "p2"), ("p2", "lb")}
        assert all(e.day in (1, 2) for e in ev)

    def test_deterministic(self):
        g, c = two_bubble_graph()
        cfg = SimConfig(disease=disease(0.02), replicates=30, seed=5)
        assert simulate(g, c, cfg) == simulate(g, c, cfg)

    def test_seed_group_selection(self):
        g, _ = two_bubble_graph()
        cfg = SimConfig(disease=disease(0.0), replicates=10, casual=NO_CASUAL,
                        seed_group="b")
        s = simulate(g, None, cfg)
        assert all(r.seed_agent == "p2" for r in s.results)

    def test_unknown_seed_group(self):
        cfg = SimConfig(disease=disease(0.0), replicates=1, seed_group="nope")
        with pytest.raises(ConfigError):
            simulate(solo_graph(), None, cfg)

    def test_clustering_coverage_checked(self):
        g, _ = two_bubble_graph()
        partial = BubbleClustering(k=1, location_bubble={"la": 1},
                                   hcp_bubble={"p1": 1})
        cfg = SimConfig(disease=disease(0.1), replicates=1)
        with pytest.raises(ConfigError):
            simulate(g, partial, cfg)

    def test_reach_implies_leave(self):
        g, c = two_bubble_graph()
        cfg = SimConfig(disease=disease(0.05), replicates=60)
        s = simulate(g, c, cfg)
        assert all(r.infections >= 1 for r in s.results)
        assert all(r.leave or not r.reach for r in s.results)

    def test_aggregates_match_counts(self):
        cfg = SimConfig(disease=disease(1000.0), replicates=8, casual=NO_CASUAL)
        s = simulate(solo_graph(), None, cfg)
        counts = np.array(s.infection_counts(), dtype=float)
        agg = s.aggregates
        assert agg["replicates"] == 8
        assert agg["infections_mean"] == pytest.approx(counts.mean())
        assert agg["infections_median"] == pytest.approx(np.median(counts))
        assert agg["infections_q25"] == pytest.approx(np.quantile(counts, 0.25))
        assert agg["infections_q75"] == pytest.approx(np.quantile(counts, 0.75))
        assert agg["infections_excl_seed_mean"] == pytest.approx(counts.mean() - 1)


class TestR0:
    def test_zero_rho(self):
        cfg = SimConfig(disease=disease(0.0), replicates=20, casual=NO_CASUAL)
        est = estimate_r0(solo_graph(), 0.0, cfg)
        assert est.mean == 0.0 and est.se == 0.0
        assert est.ci95 == (0.0, 0.0)

    def test_saturated(self):
        cfg = SimConfig(disease=disease(0.0), replicates=20, casual=NO_CASUAL)
        est = estimate_r0(solo_graph(), 1000.0, cfg)
        assert est.mean == 1.0

    def test_monotone_in_rho(self):
        # common random numbers couple the runs, so means cannot cross
        cfg = SimConfig(disease=disease(0.0), replicates=50)
        g = solo_graph()
        means = [estimate_r0(g, r, cfg).mean for r in (0.01, 0.1, 1.0)]
        assert means == sorted(means)

    def test_ci_brackets_mean(self):
        cfg = SimConfig(disease=disease(0.0), replicates=80)
        est = estimate_r0(solo_graph(), 0.2, cfg)
        lo, hi = est.ci95
        assert lo <= est.mean <= hi


class TestCalibration:
    def test_target_zero(self):
        cfg = SimConfig(disease=disease(0.0), replicates=10, casual=NO_CASUAL)
        cal = calibrate_rho(solo_graph(), 0.0, cfg)
        assert cal.rho == 0.0
        assert cal.estimate.mean == 0.0
        assert cal.evaluations == 1

    def test_hits_saturated_target(self):
        # the only contact saturates, so target 1 is met exactly
        cfg = SimConfig(disease=disease(0.0), replicates=40, casual=NO_CASUAL)
        cal = calibrate_rho(solo_graph(), 1.0, cfg)
        assert isinstance(cal, CalibrationResult)
        assert abs(cal.estimate.mean - 1.0) <= 0.05
        assert cal.rho > 0.0
        assert cal.evaluations >= 1

    def test_unreachable_target(self):
        # one resident contact caps secondary infections at 1
        cfg = SimConfig(disease=disease(0.0), replicates=40, casual=NO_CASUAL)
        with pytest.raises(NotBracketedError):
            calibrate_rho(solo_graph(), 3.0, cfg)

    def test_negative_target(self):
        cfg = SimConfig(disease=disease(0.0), replicates=10)
        with pytest.raises(ConfigError):
            calibrate_rho(solo_graph(), -1.0, cfg)


def fake_summary(label, counts):
    results = tuple(
        ReplicateResult(replicate=i, seed_agent="p1", infections=c,
                        infections_excl_seed=c - 1, leave=None, reach=None)
        for i, c in enumerate(counts)
    )
    return SimSummary(label=label, results=results,
                      aggregates={"infections_mean": float(np.mean(counts))},
                      config={})


class TestCompare:
    def test_identical_runs(self):
        a = fake_summary("a", [2, 3, 4, 5])
        b = fake_summary("b", [2, 3, 4, 5])
        rep = compare_runs([a, b])
        d = rep.diffs[0]
        assert d["mean_diff"] == 0.0
        assert d["ci95_low"] == 0.0 and d["ci95_high"] == 0.0
        assert d["paired"] is True

    def test_constant_shift(self):
        a = fake_summary("a", [1, 2, 3, 4])
        b = fake_summary("b", [2, 3, 4, 5])
        d = compare_runs([a, b]).diffs[0]
        assert d["mean_diff"] == pytest.approx(1.0)
        assert d["ci95_low"] == pytest.approx(1.0)
        assert d["ci95_high"] == pytest.approx(1.0)

    def test_unpaired_lengths(self):
        a = fake_summary("a", [1, 2, 3, 4])
        b = fake_summary("b", [3, 3, 3])
        d = compare_runs([a, b], bootstrap_samples=500, seed=1).diffs[0]
        assert d["paired"] is False
        assert d["mean_diff"] == pytest.approx(0.5)
        assert d["ci95_low"] <= d["mean_diff"] <= d["ci95_high"]

    def test_rows_echo_labels(self):
        rep = compare_runs([fake_summary("x", [1, 1])])
        assert rep.rows[0]["label"] == "x"
        assert rep.diffs == ()

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            compare_runs([])


class TestExports:
    def test_replicates_csv(self, tmp_path):
        g, c = two_bubble_graph()
        cfg = SimConfig(disease=disease(1000.0, cross_bubble_scale=1.0),
                        replicates=3, casual=NO_CASUAL)
        s = simulate(g, c, cfg)
        path = tmp_path / "r.csv"
        replicates_to_csv(s, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "replicate,infections,leave,reach"
        assert lines[1] == "0,4,true,true"
        assert len(lines) == 4

    def test_replicates_csv_blank_flags(self, tmp_path):
        cfg = SimConfig(disease=disease(0.0), replicates=2, casual=NO_CASUAL)
        s = simulate(solo_graph(), None, cfg)
        path = tmp_path / "r.csv"
        replicates_to_csv(s, path)
        assert path.read_text().splitlines()[1] == "0,1,,"

    def test_summary_json(self, tmp_path):
        cfg = SimConfig(disease=disease(0.0), replicates=2, casual=NO_CASUAL)
        s = simulate(solo_graph(), None, cfg, label="base")
        path = tmp_path / "s.json"
        summary_to_json(s, path)
        payload = json.loads(path.read_text())
        assert payload["label"] == "base"
        assert payload["aggregates"]["infections_mean"] == 1.0
        assert payload["config"]["replicates"] == 2

    def test_comparison_json(self, tmp_path):
        rep = compare_runs([fake_summary("a", [1, 2]), fake_summary("b", [1, 2])])
        path = tmp_path / "c.json"
        rep.to_json(path)
        payload = json.loads(path.read_text())
        assert payload["diffs"][0]["mean_diff"] == 0.0
