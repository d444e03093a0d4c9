"""End-to-end experiment orchestration.

One experiment = one facility, one (D*, Y*) setting, a K list, and three
method arms: the unmodified baseline, the optimized clustering with
per-replicate rewiring, and per-replicate random balanced clusterings.
All randomness derives from a single seed; the same replicate index uses
the same simulation streams in every arm, so replicate r sees the same
seed nurse everywhere and arm differences pair cleanly.

Everything under <out>/reports is a pure function of the config; wall
clock only ever lands in <out>/manifest.json.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .clustering import BubbleClustering, save_clustering
from .episim import (
    CasualContactModel,
    DiseaseParams,
    SimConfig,
    SimSummary,
    _aggregate,
    _run_replicate,
    _seed_member_indices,
    build_contact_schedule,
    calibrate_rho,
    compare_runs,
    replicates_to_csv,
    simulate,
    summary_to_json,
    thread_count,
)
from .errors import ConfigError, CornError, ValidationError
from .model import (
    VisitGraph,
    compute_loads_demands,
    load_hcp_roster,
    load_location_roster,
    load_mobility_log,
    validate,
    write_hcp_roster,
    write_location_roster,
    write_mobility_log,
)
from .optimizer import ClusterInstance, SolveResult, build_model, solve, verify_clustering
from .rewiring import compute_costs, random_clustering, rewire, write_cost_csv
from .spatial import load_spatial_graph, save_spatial_graph, shortest_path_metric
from .synth import FacilitySpec, generate_facility, generate_mobility
from .weights import weight_matrix, write_weight_csv, z_from_rho

# spawn-key namespaces for the one master seed
_NS_CALIBRATION = 0
_NS_SIM = 1
_NS_REWIRE_CORN = 2
_NS_REWIRE_RANDOM = 3
_NS_CLUSTER_RANDOM = 4
_NS_COMPARE = 5


def derive_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    facility: FacilitySpec | None = None
    inputs: dict | None = None  # real logs: hcps/locations/visits/spatial paths
    k_list: tuple[int, ...] = (1, 3, 5)
    replicates: int = 500
    seed: int = 0
    unit_s: int = 60
    rho: float | None = None
    target_r0: float | None = None
    d_star_m: float = math.inf
    y_star_h: float = math.inf
    hcp_scope: str = "all"
    keep_same_bubble_hcp: bool = False
    horizon_days: int | None = None
    casual_contacts_per_day: float = 0.1
    casual_duration_min: float = 15.0
    incubation_days: int = 6
    recovery_days: int = 10
    cross_bubble_scale: float = 0.75
    calibration_replicates: int = 400
    time_limit_s: float | None = None
    cost_rewirings: int = 30

    def check(self) -> None:
        if (self.facility is None) == (self.inputs is None):
            raise ConfigError("exactly one of facility or inputs must be set")
        if self.facility is not None:
            self.facility.check()
        else:
            missing = {"hcps", "locations", "visits", "spatial"} - set(self.inputs)
            if missing:
                raise ConfigError(f"inputs is missing paths for: {sorted(missing)}")
        if not self.k_list:
            raise ConfigError("k_list must not be empty")
        if self.replicates < 1 or self.calibration_replicates < 1:
            raise ConfigError("replicate counts must be >= 1")
        if (self.rho is None) == (self.target_r0 is None):
            raise ConfigError("exactly one of rho or target_r0 must be set")
        if self.unit_s < 1:
            raise ConfigError("unit_s must be >= 1")
        if self.cost_rewirings < 1:
            raise ConfigError("cost_rewirings must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.facility is not None:
            d["facility"]["hcp_groups"] = [list(g) for g in self.facility.hcp_groups]
        d["k_list"] = list(self.k_list)
        d["d_star_m"] = repr(self.d_star_m)
        d["y_star_h"] = repr(self.y_star_h)
        return d

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        if raw.get("facility") is not None:
            raw["facility"] = FacilitySpec.from_dict(raw["facility"])
        raw["k_list"] = tuple(int(k) for k in raw["k_list"])
        raw["d_star_m"] = float(raw["d_star_m"])
        raw["y_star_h"] = float(raw["y_star_h"])
        cfg = ExperimentConfig(**raw)
        cfg.check()
        return cfg


@dataclass
class ExperimentResult:
    out_dir: Path
    rho: float
    clusterings: dict[int, BubbleClustering]
    summaries: dict[str, SimSummary]


class SolveFailure(CornError):
    """Optimizer did not return an optimal clustering for an experiment arm."""

    def __init__(self, k: int, status: str):
        super().__init__(f"clustering at k={k} ended with status {status!r}")
        self.k = k
        self.status = status


# worker context for per-replicate arm jobs (fork-shared, read only)
_ARM_CTX: dict = {}


def _arm_job(rep: int):
    c = _ARM_CTX
    graph: VisitGraph = c["graph"]
    if c["method"] == "random":
        clustering = random_clustering(
            graph.hcps, c["l_s"], c["k"],
            seed=derive_seed(c["seed"], _NS_CLUSTER_RANDOM, c["k"], rep))
        rw_seed = derive_seed(c["seed"], _NS_REWIRE_RANDOM, c["k"], rep)
    else:
        clustering = c["clustering"]
        rw_seed = derive_seed(c["seed"], _NS_REWIRE_CORN, c["k"], rep)
    rw = rewire(graph, clustering, seed=rw_seed,
                keep_same_bubble_hcp=c["keep_same_bubble_hcp"])
    sched = build_contact_schedule(rw.graph)
    members = _seed_member_indices(sched, None)
    return _run_replicate(sched, clustering, c["disease"], c["casual"],
                          c["horizon"], c["sim_master"], rep, members)


def _run_arm(label: str, ctx: dict, replicates: int) -> SimSummary:
    global _ARM_CTX
    _ARM_CTX = ctx
    workers = thread_count()
    try:
        if workers > 1:
            with multiprocessing.get_context("fork").Pool(workers) as pool:
                results = pool.map(_arm_job, range(replicates),
                                   chunksize=max(1, replicates // (workers * 8)))
        else:
            results = [_arm_job(rep) for rep in range(replicates)]
    finally:
        _ARM_CTX = {}
    d: DiseaseParams = ctx["disease"]
    c: CasualContactModel = ctx["casual"]
    echo = {
        "label": label, "method": ctx["method"], "k": ctx["k"],
        "replicates": replicates, "rho": d.rho,
        "incubation_days": d.incubation_days, "recovery_days": d.recovery_days,
        "cross_bubble_scale": d.cross_bubble_scale,
        "casual_contacts_per_day": c.contacts_per_day,
        "casual_duration_min": c.duration_min,
        "horizon_days": ctx["horizon"], "seed": ctx["sim_master"],
    }
    return _aggregate(label, list(results), echo)


def _cost_summary(base: VisitGraph, clusterings, rewire_seeds, dist, keep: bool) -> dict:
    """Cost aggregates across several independent rewirings."""
    per = []
    canonical = None
    for c, s in zip(clusterings, rewire_seeds):
        rw = rewire(base, c, seed=s, keep_same_bubble_hcp=keep)
        rep = compute_costs(base, rw, dist, clustering=c)
        if canonical is None:
            canonical = (rw, rep)
        per.append({
            "excess_load_mean_h_per_day": statistics.mean(rep.excess_load.values()),
            "unmet_demand_mean_h_per_day": statistics.mean(rep.unmet_demand.values()),
            "footsteps_mean_m_per_day": statistics.mean(rep.footsteps.values()),
            "excess_footsteps_mean_m_per_day": statistics.mean(rep.excess_footsteps.values()),
            "bubble_diameter_max_m": max(rep.bubble_diameters.values()),
            "dropped_visits": rw.dropped_count,
        })
    agg = {
        key: statistics.mean(row[key] for row in per)
        for key in per[0]
    }
    return {"rewirings": len(per), "means": agg, "per_rewiring": per,
            "canonical": canonical}


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def resolve_rho(graph: VisitGraph, cfg: ExperimentConfig) -> tuple[float, dict]:
    """Either the explicit rho or a calibrated one, plus a provenance record."""
    disease = DiseaseParams(
        rho=cfg.rho if cfg.rho is not None else 1.0,
        incubation_days=cfg.incubation_days,
        recovery_days=cfg.recovery_days,
        cross_bubble_scale=cfg.cross_bubble_scale,
    )
    casual = CasualContactModel(cfg.casual_contacts_per_day, cfg.casual_duration_min)
    if cfg.rho is not None:
        return cfg.rho, {"rho": cfg.rho, "source": "explicit"}
    cal_cfg = SimConfig(
        disease=disease, replicates=cfg.calibration_replicates,
        seed=derive_seed(cfg.seed, _NS_CALIBRATION), casual=casual,
        horizon_days=cfg.horizon_days,
    )
    cal = calibrate_rho(graph, cfg.target_r0, cal_cfg)
    return cal.rho, {
        "rho": cal.rho,
        "source": "calibrated",
        "target_r0": cfg.target_r0,
        "estimate_mean": cal.estimate.mean,
        "estimate_ci95": list(cal.estimate.ci95),
        "evaluations": cal.evaluations,
        "replicates": cfg.calibration_replicates,
    }


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> ExperimentResult:
    cfg.check()
    out = Path(out_dir)
    reports = out / "reports"
    inputs_dir = reports / "inputs"
    sims_dir = reports / "sims"
    for d in (inputs_dir, sims_dir):
        d.mkdir(parents=True, exist_ok=True)

    if cfg.facility is not None:
        facility = generate_facility(cfg.facility)
        spatial, hcps, locations = facility
        graph = generate_mobility(facility, cfg.facility)
        problems = validate(graph)
        if problems:
            raise ValidationError(f"synthetic inputs failed validation: {problems[0]}")
        cfg.facility.to_json(inputs_dir / "facility.json")
    else:
        hcps = load_hcp_roster(cfg.inputs["hcps"])
        locations = load_location_roster(cfg.inputs["locations"])
        graph = load_mobility_log(cfg.inputs["visits"], hcps, locations)
        spatial = load_spatial_graph(cfg.inputs["spatial"])

    # canonical re-serialization; the report must not depend on input formatting
    write_hcp_roster(hcps, inputs_dir / "hcps.csv")
    write_location_roster(locations, inputs_dir / "locations.csv")
    write_mobility_log(graph, inputs_dir / "visits.csv")
    save_spatial_graph(spatial, inputs_dir / "spatial.json")

    dist = shortest_path_metric(spatial, list(locations.ids))
    loads = compute_loads_demands(graph)

    rho, rho_record = resolve_rho(graph, cfg)
    disease = DiseaseParams(rho=rho, incubation_days=cfg.incubation_days,
                            recovery_days=cfg.recovery_days,
                            cross_bubble_scale=cfg.cross_bubble_scale)
    casual = CasualContactModel(cfg.casual_contacts_per_day, cfg.casual_duration_min)
    z = z_from_rho(rho, cfg.unit_s)
    weights = weight_matrix(graph, z, cfg.unit_s, hcp_scope=cfg.hcp_scope)
    write_weight_csv(weights, reports / "weights.csv")
    _write_json(reports / "params.json", {
        **rho_record, "z_per_interval": z, "unit_s": cfg.unit_s,
        "hcp_scope": cfg.hcp_scope, "d_star_m": repr(cfg.d_star_m),
        "y_star_h": repr(cfg.y_star_h),
    })

    horizon = cfg.horizon_days if cfg.horizon_days is not None else graph.day_count
    sim_master = derive_seed(cfg.seed, _NS_SIM)
    l_s = tuple(locations.substitutable)

    baseline_cfg = SimConfig(disease=disease, replicates=cfg.replicates,
                             seed=sim_master, casual=casual, horizon_days=horizon)
    summaries: dict[str, SimSummary] = {}
    summaries["baseline"] = simulate(graph, None, baseline_cfg, label="baseline")

    clusterings: dict[int, BubbleClustering] = {}
    solve_records: dict[str, dict] = {}
    for k in cfg.k_list:
        inst = ClusterInstance(
            weights=weights, hcps=hcps, k=k,
            d_star_m=cfg.d_star_m, y_star_h=cfg.y_star_h,
            dist=dist if math.isfinite(cfg.d_star_m) else None,
            loads=loads if math.isfinite(cfg.y_star_h) else None,
        )
        res: SolveResult = solve(build_model(inst), time_limit_s=cfg.time_limit_s,
                                 seed=cfg.seed)
        solve_records[f"k{k}"] = {
            "status": res.status,
            "objective": res.objective,
            "bound": res.bound,
            "nodes": res.nodes,
        }
        if res.status != "optimal":
            _write_json(reports / "solves.json", solve_records)
            raise SolveFailure(k, res.status)
        bad = verify_clustering(res.clustering, inst)
        if bad:
            raise CornError(f"post-hoc verification failed at k={k}: {bad}")
        clusterings[k] = res.clustering
        save_clustering(res.clustering, reports / f"clustering_corn_k{k}.json")

        corn_ctx = {
            "graph": graph, "method": "corn", "clustering": res.clustering,
            "k": k, "l_s": l_s, "seed": cfg.seed,
            "keep_same_bubble_hcp": cfg.keep_same_bubble_hcp,
            "disease": disease, "casual": casual, "horizon": horizon,
            "sim_master": sim_master,
        }
        summaries[f"corn_k{k}"] = _run_arm(f"corn_k{k}", corn_ctx, cfg.replicates)
        random_ctx = dict(corn_ctx, method="random", clustering=None)
        summaries[f"random_k{k}"] = _run_arm(f"random_k{k}", random_ctx, cfg.replicates)

        n_cost = min(cfg.cost_rewirings, cfg.replicates)
        corn_costs = _cost_summary(
            graph, [res.clustering] * n_cost,
            [derive_seed(cfg.seed, _NS_REWIRE_CORN, k, r) for r in range(n_cost)],
            dist, cfg.keep_same_bubble_hcp)
        rand_costs = _cost_summary(
            graph,
            [random_clustering(hcps, l_s, k,
                               seed=derive_seed(cfg.seed, _NS_CLUSTER_RANDOM, k, r))
             for r in range(n_cost)],
            [derive_seed(cfg.seed, _NS_REWIRE_RANDOM, k, r) for r in range(n_cost)],
            dist, cfg.keep_same_bubble_hcp)
        for method, costs in (("corn", corn_costs), ("random", rand_costs)):
            rw, rep = costs.pop("canonical")
            write_cost_csv(rep, reports / f"costs_{method}_k{k}_hcp.csv",
                           reports / f"costs_{method}_k{k}_loc.csv")
            _write_json(reports / f"costs_{method}_k{k}.json", costs)

    _write_json(reports / "solves.json", solve_records)

    for label, summary in summaries.items():
        summary_to_json(summary, sims_dir / f"{label}.json")
        replicates_to_csv(summary, sims_dir / f"{label}.csv")

    _write_metrics(reports, cfg, summaries)
    _write_long_csv(reports / "infections_long.csv", summaries)

    comparisons = {}
    for k in cfg.k_list:
        pair = [summaries[f"random_k{k}"], summaries[f"corn_k{k}"]]
        rep = compare_runs(pair, seed=derive_seed(cfg.seed, _NS_COMPARE, k))
        comparisons[f"k{k}"] = {"rows": rep.rows, "diffs": rep.diffs}
    _write_json(reports / "comparison.json", comparisons)

    return ExperimentResult(out_dir=out, rho=rho, clusterings=clusterings,
                            summaries=summaries)


def _write_metrics(reports: Path, cfg: ExperimentConfig,
                   summaries: dict[str, SimSummary]) -> None:
    def row(label: str) -> str:
        a = summaries[label].aggregates
        leave = "" if a["leave_pct"] is None else repr(a["leave_pct"])
        reach = "" if a["reach_pct"] is None else repr(a["reach_pct"])
        method = label.split("_k")[0]
        return ",".join([
            method,
            label.split("_k")[1] if "_k" in label else "",
            str(a["replicates"]),
            repr(a["infections_mean"]), repr(a["infections_median"]),
            repr(a["infections_q25"]), repr(a["infections_q75"]),
            leave, reach,
        ])

    header = ("method,k,replicates,infections_mean,infections_median,"
              "infections_q25,infections_q75,leave_pct,reach_pct\n")
    for k in cfg.k_list:
        with open(reports / f"metrics_k{k}.csv", "w") as f:
            f.write(header)
            f.write(row("baseline") + "\n")
            f.write(row(f"corn_k{k}") + "\n")
            f.write(row(f"random_k{k}") + "\n")
    with open(reports / "metrics_all.csv", "w") as f:
        f.write(header)
        f.write(row("baseline") + "\n")
        for k in cfg.k_list:
            f.write(row(f"corn_k{k}") + "\n")
            f.write(row(f"random_k{k}") + "\n")


def _write_long_csv(path: Path, summaries: dict[str, SimSummary]) -> None:
    """Plot-ready long format: one row per (arm, replicate)."""
    def flag(v) -> str:
        return "" if v is None else ("true" if v else "false")

    with open(path, "w") as f:
        f.write("method,k,replicate,infections,leave,reach\n")
        for label, summary in summaries.items():
            method = label.split("_k")[0]
            k = label.split("_k")[1] if "_k" in label else ""
            for r in summary.results:
                f.write(f"{method},{k},{r.replicate},{r.infections},"
                        f"{flag(r.leave)},{flag(r.reach)}\n")
