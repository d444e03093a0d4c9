"""Stochastic epidemic replay over visit graphs.

Dynamics are day-granular: the infectious set is fixed at the start of
each day, shedding starts the day after infection, and recovery removes
an agent after incubation + recovery days. Within a day, contact events
are processed in start-time order, but because newly infected agents
cannot transmit on their infection day, the set of new infections per day
does not depend on that order.

Each replicate derives three RNG streams from (master seed, replicate):
seed choice, contact structure (casual contacts), and transmission coins.
Coins are predrawn per scheduled contact event, which couples runs across
infectivity values: raising rho can only turn misses into hits for a
fixed seed agent, which estimate_r0 relies on during calibration.

Agents are the roster's HCPs plus one static resident per substitutable
room, named by the room. Casual HCP-HCP contacts model mixing that the
visit log does not record. When a clustering is supplied, contacts
between HCPs placed in different bubbles are damped by
cross_bubble_scale; contacts involving unclustered HCPs are kept at full
strength.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .clustering import BubbleClustering
from .errors import ConfigError, NotBracketedError
from .model import SECONDS_PER_DAY, VisitGraph
from .rewiring import RewiredGraph

CASUAL_LOCATION = "casual"


@dataclass(frozen=True)
class DiseaseParams:
    rho: float  # infection probability per minute of contact at peak shedding
    incubation_days: int = 6
    recovery_days: int = 10
    ramp_up_rate: float | None = None
    ramp_down_rate: float | None = None
    cross_bubble_scale: float = 0.75

    def check(self) -> None:
        if self.rho < 0:
            raise ConfigError(f"rho={self.rho} must be >= 0")
        if self.incubation_days < 1 or self.recovery_days < 1:
            raise ConfigError("incubation_days and recovery_days must be >= 1")
        if not 0.0 <= self.cross_bubble_scale <= 1.0:
            raise ConfigError("cross_bubble_scale must lie in [0, 1]")
        for r in (self.ramp_up_rate, self.ramp_down_rate):
            if r is not None and r <= 0:
                raise ConfigError("ramp rates must be positive when given")

    @property
    def infectious_span(self) -> int:
        return self.incubation_days + self.recovery_days

    def rates(self) -> tuple[float, float]:
        # defaults put the curve at 0.05 one day after infection and at recovery
        up = self.ramp_up_rate
        if up is None:
            up = math.log(20.0) / max(1, self.incubation_days - 1)
        down = self.ramp_down_rate
        if down is None:
            down = math.log(20.0) / self.recovery_days
        return up, down


def shedding(day_since_infection: int, p: DiseaseParams) -> float:
    if day_since_infection < 0:
        raise ConfigError("day_since_infection must be >= 0")
    w = p.incubation_days
    up, down = p.rates()
    if day_since_infection <= w:
        return math.exp(-up * (w - day_since_infection))
    if day_since_infection <= p.infectious_span:
        return math.exp(-down * (day_since_infection - w))
    return 0.0


def contact_infection_prob(d_minutes: float, beta: float, rho: float) -> float:
    if d_minutes < 0:
        raise ConfigError("contact duration must be >= 0")
    return min(1.0, rho * d_minutes * beta)


@dataclass(frozen=True)
class CasualContactModel:
    contacts_per_day: float = 0.1  # Poisson mean per HCP per day
    duration_min: float = 15.0

    def check(self) -> None:
        if self.contacts_per_day < 0 or self.duration_min < 0:
            raise ConfigError("casual contact parameters must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    disease: DiseaseParams
    replicates: int = 500
    seed: int = 0
    horizon_days: int | None = None
    casual: CasualContactModel = CasualContactModel()
    seed_group: str | None = None  # None: first substitutable group label
    keep_transmission_log: bool = False

    def check(self) -> None:
        self.disease.check()
        self.casual.check()
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.horizon_days is not None and self.horizon_days < 1:
            raise ConfigError("horizon_days must be >= 1")


class TransmissionEvent(NamedTuple):
    day: int
    t_s: int
    source: str
    target: str
    location: str


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    seed_agent: str
    infections: int  # including the seed
    infections_excl_seed: int
    leave: bool | None
    reach: bool | None
    log: tuple[TransmissionEvent, ...] = ()


@dataclass(frozen=True)
class SimSummary:
    label: str
    results: tuple[ReplicateResult, ...]
    aggregates: dict
    config: dict

    def infection_counts(self) -> list[int]:
        return [r.infections for r in self.results]


class ContactSchedule:
    """Precomputed contact events of one visit graph."""

    def __init__(self, g: VisitGraph):
        self.graph = g
        self.hcp_ids = g.hcps.ids
        self.hcp_index = {h: i for i, h in enumerate(self.hcp_ids)}
        self.rooms = g.locations.substitutable
        nh = len(self.hcp_ids)
        self.resident_index = {room: nh + i for i, room in enumerate(self.rooms)}
        self.n_agents = nh + len(self.rooms)
        self.agent_ids = tuple(self.hcp_ids) + tuple(self.rooms)

        ev_day: list[int] = []
        ev_t: list[int] = []
        ev_dur: list[float] = []
        ev_a: list[int] = []
        ev_b: list[int] = []
        ev_loc: list[str] = []
        ev_hh: list[bool] = []  # HCP-HCP contact, eligible for bubble damping

        for v in g.visits:
            if v.location in self.resident_index:
                ev_day.append(v.start_s // SECONDS_PER_DAY)
                ev_t.append(v.start_s)
                ev_dur.append(v.duration_s / 60.0)
                ev_a.append(self.hcp_index[v.hcp])
                ev_b.append(self.resident_index[v.location])
                ev_loc.append(v.location)
                ev_hh.append(False)

        by_loc: dict[str, list] = {}
        for v in g.visits:
            by_loc.setdefault(v.location, []).append(v)
        for loc, visits in by_loc.items():
            active: list = []
            for v in visits:  # graph order is chronological
                active = [o for o in active if o.end_s > v.start_s]
                for o in active:
                    overlap_s = min(o.end_s, v.end_s) - v.start_s
                    if overlap_s <= 0 or o.hcp == v.hcp:
                        continue
                    ev_day.append(v.start_s // SECONDS_PER_DAY)
                    ev_t.append(v.start_s)
                    ev_dur.append(overlap_s / 60.0)
                    ev_a.append(self.hcp_index[o.hcp])
                    ev_b.append(self.hcp_index[v.hcp])
                    ev_loc.append(loc)
                    ev_hh.append(True)
                active.append(v)

        order = sorted(range(len(ev_t)), key=lambda i: (ev_t[i], ev_a[i], ev_b[i], ev_loc[i]))
        self.ev_day = np.array([ev_day[i] for i in order], dtype=np.int64)
        self.ev_t = np.array([ev_t[i] for i in order], dtype=np.int64)
        self.ev_dur = np.array([ev_dur[i] for i in order], dtype=float)
        self.ev_a = np.array([ev_a[i] for i in order], dtype=np.int64)
        self.ev_b = np.array([ev_b[i] for i in order], dtype=np.int64)
        self.ev_loc = tuple(ev_loc[i] for i in order)
        self.ev_hh = np.array([ev_hh[i] for i in order], dtype=bool)
        self.n_events = len(order)

        self.by_day_agent: dict[int, dict[int, list[int]]] = {}
        for i in range(self.n_events):
            day = int(self.ev_day[i])
            slot = self.by_day_agent.setdefault(day, {})
            slot.setdefault(int(self.ev_a[i]), []).append(i)
            slot.setdefault(int(self.ev_b[i]), []).append(i)


def build_contact_schedule(g: VisitGraph) -> ContactSchedule:
    return ContactSchedule(g)


def _agent_bubble(sched: ContactSchedule, clustering: BubbleClustering, agent: int) -> int | None:
    if agent < len(sched.hcp_ids):
        return clustering.hcp_bubble.get(sched.hcp_ids[agent])
    return clustering.location_bubble.get(sched.agent_ids[agent])


def _run_replicate(
    sched: ContactSchedule,
    clustering: BubbleClustering | None,
    disease: DiseaseParams,
    casual: CasualContactModel,
    horizon: int,
    master_seed: int,
    rep: int,
    seed_members: tuple[int, ...],
    only_seed: bool = False,
    keep_log: bool = False,
) -> ReplicateResult:
    ss = np.random.SeedSequence(master_seed, spawn_key=(rep,))
    k_pick, k_struct, k_coin = ss.spawn(3)
    rng_pick = np.random.default_rng(k_pick)
    seed_agent = int(seed_members[int(rng_pick.integers(len(seed_members)))])

    nh = len(sched.hcp_ids)
    span = disease.infectious_span
    shed = np.array([shedding(d, disease) for d in range(span + 1)])
    rho = disease.rho
    scale = disease.cross_bubble_scale

    rng_struct = np.random.default_rng(k_struct)
    casual_by_day: list[list[tuple[int, int]]] = [[] for _ in range(horizon)]
    if casual.contacts_per_day > 0 and nh >= 2:
        counts = rng_struct.poisson(casual.contacts_per_day, size=(horizon, nh))
        for d in range(horizon):
            for i in range(nh):
                for _ in range(int(counts[d, i])):
                    j = int(rng_struct.integers(nh - 1))
                    if j >= i:
                        j += 1
                    casual_by_day[d].append((i, j))
    rng_coin = np.random.default_rng(k_coin)
    u_sched = rng_coin.random(sched.n_events) if sched.n_events else np.empty(0)
    n_casual = sum(len(c) for c in casual_by_day)
    u_casual = rng_coin.random(n_casual) if n_casual else np.empty(0)

    day_of = np.full(sched.n_agents, -1, dtype=np.int64)
    day_of[seed_agent] = 0
    infected: list[int] = [seed_agent]
    seed_bubble = _agent_bubble(sched, clustering, seed_agent) if clustering else None
    leave = False
    reach = False
    log: list[TransmissionEvent] = []

    def bubble_damp(a: int, b: int) -> float:
        if clustering is None:
            return 1.0
        ba = _agent_bubble(sched, clustering, a)
        bb = _agent_bubble(sched, clustering, b)
        if ba is None or bb is None or ba == bb:
            return 1.0
        return scale

    def try_event(day: int, a: int, b: int, dur_min: float, u: float,
                  loc: str, t_s: int, damp_ok: bool) -> None:
        nonlocal leave, reach
        sa, sb = int(day_of[a]), int(day_of[b])
        inf_a = sa >= 0 and 1 <= day - sa <= span and (not only_seed or sa == 0)
        inf_b = sb >= 0 and 1 <= day - sb <= span and (not only_seed or sb == 0)
        if inf_a and sb < 0:
            src, dst = a, b
        elif inf_b and sa < 0:
            src, dst = b, a
        else:
            return
        p = contact_infection_prob(dur_min, shed[day - int(day_of[src])], rho)
        if damp_ok:
            p *= bubble_damp(a, b)
        if u >= p:
            return
        day_of[dst] = day
        infected.append(dst)
        if clustering is not None:
            tb = _agent_bubble(sched, clustering, dst)
            if tb != seed_bubble:
                leave = True
                if tb is not None:
                    reach = True
        if keep_log:
            log.append(TransmissionEvent(
                day, t_s, sched.agent_ids[src], sched.agent_ids[dst], loc))

    for day in range(horizon):
        slot = sched.by_day_agent.get(day, {})
        cand: set[int] = set()
        for a in infected:
            since = day - int(day_of[a])
            if 1 <= since <= span and (not only_seed or day_of[a] == 0):
                cand.update(slot.get(a, ()))
        for idx in sorted(cand):  # events are pre-sorted by time
            try_event(day, int(sched.ev_a[idx]), int(sched.ev_b[idx]),
                      float(sched.ev_dur[idx]), float(u_sched[idx]),
                      sched.ev_loc[idx], int(sched.ev_t[idx]),
                      bool(sched.ev_hh[idx]))
        base = sum(len(casual_by_day[d]) for d in range(day))
        for ci, (a, b) in enumerate(casual_by_day[day]):
            try_event(day, a, b, casual.duration_min, float(u_casual[base + ci]),
                      CASUAL_LOCATION, day * SECONDS_PER_DAY, True)

    total = int((day_of >= 0).sum())
    return ReplicateResult(
        replicate=rep,
        seed_agent=sched.agent_ids[seed_agent],
        infections=total,
        infections_excl_seed=total - 1,
        leave=leave if clustering is not None else None,
        reach=reach if clustering is not None else None,
        log=tuple(log),
    )


_POOL_CTX: dict = {}


def _pool_run(rep: int) -> ReplicateResult:
    c = _POOL_CTX
    return _run_replicate(c["sched"], c["clustering"], c["disease"], c["casual"],
                          c["horizon"], c["seed"], rep, c["members"],
                          c["only_seed"], c["keep_log"])


def thread_count() -> int:
    """Worker cap from the CORN_THREADS environment variable (default 1)."""
    raw = os.environ.get("CORN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"CORN_THREADS={raw!r} is not an integer") from None


def _seed_member_indices(sched: ContactSchedule, seed_group: str | None) -> tuple[int, ...]:
    labels = sched.graph.hcps.group_labels
    if not labels:
        raise ConfigError("no substitutable HCP group to seed from")
    label = seed_group if seed_group is not None else labels[0]
    if label not in labels:
        raise ConfigError(f"seed group {label!r} not in roster groups {labels}")
    return tuple(sched.hcp_index[h] for h in sched.graph.hcps.members(label))


def _resolve(g: VisitGraph | RewiredGraph,
             clustering: BubbleClustering | None) -> tuple[VisitGraph, BubbleClustering | None]:
    if isinstance(g, RewiredGraph):
        if clustering is not None and clustering is not g.clustering:
            raise ConfigError("clustering argument conflicts with the rewired graph's own")
        return g.graph, g.clustering
    return g, clustering


def _aggregate(label: str, results: list[ReplicateResult], cfg_echo: dict) -> SimSummary:
    counts = np.array(sorted(r.infections for r in results), dtype=float)
    agg: dict = {
        "replicates": len(results),
        "infections_mean": float(counts.mean()),
        "infections_median": float(np.median(counts)),
        "infections_q25": float(np.quantile(counts, 0.25)),
        "infections_q75": float(np.quantile(counts, 0.75)),
        "infections_excl_seed_mean": float(counts.mean() - 1.0),
    }
    if results and results[0].leave is not None:
        agg["leave_pct"] = 100.0 * sum(1 for r in results if r.leave) / len(results)
        agg["reach_pct"] = 100.0 * sum(1 for r in results if r.reach) / len(results)
    else:
        agg["leave_pct"] = None
        agg["reach_pct"] = None
    return SimSummary(label=label, results=tuple(results), aggregates=agg, config=cfg_echo)


def simulate(
    g: VisitGraph | RewiredGraph,
    clustering: BubbleClustering | None,
    cfg: SimConfig,
    label: str = "sim",
) -> SimSummary:
    cfg.check()
    graph, clustering = _resolve(g, clustering)
    if clustering is not None:
        if set(clustering.location_bubble) != set(graph.locations.substitutable):
            raise ConfigError("clustering location coverage does not match the graph")
        if set(clustering.hcp_bubble) != set(graph.hcps.substitutable):
            raise ConfigError("clustering HCP coverage does not match the graph")
    sched = build_contact_schedule(graph)
    members = _seed_member_indices(sched, cfg.seed_group)
    horizon = cfg.horizon_days if cfg.horizon_days is not None else graph.day_count

    threads = thread_count()
    if threads > 1 and cfg.replicates > 1:
        _POOL_CTX.update(
            sched=sched, clustering=clustering, disease=cfg.disease, casual=cfg.casual,
            horizon=horizon, seed=cfg.seed, members=members, only_seed=False,
            keep_log=cfg.keep_transmission_log,
        )
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(threads) as pool:
            chunk = max(1, cfg.replicates // (threads * 8))
            results = pool.map(_pool_run, range(cfg.replicates), chunksize=chunk)
    else:
        results = [
            _run_replicate(sched, clustering, cfg.disease, cfg.casual, horizon,
                           cfg.seed, rep, members, False, cfg.keep_transmission_log)
            for rep in range(cfg.replicates)
        ]
    echo = {
        "label": label,
        "rho": cfg.disease.rho,
        "incubation_days": cfg.disease.incubation_days,
        "recovery_days": cfg.disease.recovery_days,
        "cross_bubble_scale": cfg.disease.cross_bubble_scale,
        "casual_contacts_per_day": cfg.casual.contacts_per_day,
        "casual_duration_min": cfg.casual.duration_min,
        "horizon_days": horizon,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "k": clustering.k if clustering is not None else None,
    }
    return _aggregate(label, results, echo)


@dataclass(frozen=True)
class R0Estimate:
    rho: float
    mean: float
    se: float
    replicates: int

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.mean - 1.96 * self.se, self.mean + 1.96 * self.se)


def estimate_r0(g: VisitGraph, rho: float, cfg: SimConfig) -> R0Estimate:
    """Mean secondary infections of the seed with all others non-transmitting."""
    disease = replace(cfg.disease, rho=rho)
    disease.check()
    sched = build_contact_schedule(g)
    members = _seed_member_indices(sched, cfg.seed_group)
    horizon = cfg.horizon_days if cfg.horizon_days is not None else g.day_count
    horizon = min(horizon, disease.infectious_span + 1)
    counts = np.empty(cfg.replicates)
    for rep in range(cfg.replicates):
        r = _run_replicate(sched, None, disease, cfg.casual, horizon,
                           cfg.seed, rep, members, only_seed=True)
        counts[rep] = r.infections_excl_seed
    se = float(counts.std(ddof=1) / math.sqrt(len(counts))) if len(counts) > 1 else 0.0
    return R0Estimate(rho=rho, mean=float(counts.mean()), se=se, replicates=cfg.replicates)


@dataclass(frozen=True)
class CalibrationResult:
    rho: float
    estimate: R0Estimate
    evaluations: int


def calibrate_rho(
    g: VisitGraph,
    target_r0: float,
    cfg: SimConfig,
    tol: float = 0.05,
    rho_cap: float = 10.0,
) -> CalibrationResult:
    """Bisection on rho until the R0 estimate is within tol of target."""
    if target_r0 < 0:
        raise ConfigError("target_r0 must be >= 0")
    if target_r0 == 0.0:
        return CalibrationResult(0.0, estimate_r0(g, 0.0, cfg), 1)

    history: list[tuple[float, float]] = []

    def est(rho: float) -> float:
        e = estimate_r0(g, rho, cfg)
        for prev_rho, prev_mean in history:
            if (rho - prev_rho) * (e.mean - prev_mean) < -1e-12:
                raise NotBracketedError(
                    "R0 estimate is not monotone in rho; coupling assumption broken")
        history.append((rho, e.mean))
        return e.mean

    evals = 0
    hi = 1e-4
    while True:
        evals += 1
        if est(hi) >= target_r0:
            break
        hi *= 4.0
        if hi > rho_cap:
            evals += 1
            top = est(rho_cap)
            if top < target_r0 * (1.0 - tol):
                raise NotBracketedError(
                    f"target R0 {target_r0:g} unreachable; at rho={rho_cap:g} "
                    f"the estimate is {top:g}")
            hi = rho_cap
            break
    lo = 0.0
    best_rho, best_mean = hi, history[-1][1]
    for _ in range(100):
        if abs(best_mean - target_r0) <= tol * target_r0:
            return CalibrationResult(best_rho, estimate_r0(g, best_rho, cfg), evals)
        mid = 0.5 * (lo + hi)
        evals += 1
        m = est(mid)
        if abs(m - target_r0) < abs(best_mean - target_r0):
            best_rho, best_mean = mid, m
        if m < target_r0:
            lo = mid
        else:
            hi = mid
    raise NotBracketedError(
        f"bisection failed to land within {tol:.0%} of target {target_r0:g}; "
        f"closest estimate {best_mean:g} at rho={best_rho:g}")


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[dict, ...]
    diffs: tuple[dict, ...]  # vs the first summary

    def to_json(self, path: str | Path) -> None:
        payload = {"rows": list(self.rows), "diffs": list(self.diffs)}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def compare_runs(
    summaries: list[SimSummary],
    bootstrap_samples: int = 2000,
    seed: int = 0,
) -> ComparisonReport:
    if not summaries:
        raise ConfigError("compare_runs needs at least one summary")
    rows = tuple(dict(label=s.label, **s.aggregates) for s in summaries)
    ref = np.array(summaries[0].infection_counts(), dtype=float)
    rng = np.random.default_rng(seed)
    diffs = []
    for s in summaries[1:]:
        other = np.array(s.infection_counts(), dtype=float)
        point = float(other.mean() - ref.mean())
        if len(other) == len(ref):
            idx = rng.integers(len(ref), size=(bootstrap_samples, len(ref)))
            samples = other[idx].mean(axis=1) - ref[idx].mean(axis=1)
        else:
            ia = rng.integers(len(other), size=(bootstrap_samples, len(other)))
            ib = rng.integers(len(ref), size=(bootstrap_samples, len(ref)))
            samples = other[ia].mean(axis=1) - ref[ib].mean(axis=1)
        diffs.append({
            "label": s.label,
            "vs": summaries[0].label,
            "mean_diff": point,
            "ci95_low": float(np.quantile(samples, 0.025)),
            "ci95_high": float(np.quantile(samples, 0.975)),
            "paired": len(other) == len(ref),
        })
    return ComparisonReport(rows=rows, diffs=tuple(diffs))


def summary_to_json(s: SimSummary, path: str | Path) -> None:
    payload = {"label": s.label, "config": s.config, "aggregates": s.aggregates}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def replicates_to_csv(s: SimSummary, path: str | Path) -> None:
    def flag(v: bool | None) -> str:
        return "" if v is None else ("true" if v else "false")

    with open(path, "w") as f:
        f.write("replicate,infections,leave,reach\n")
        for r in s.results:
            f.write(f"{r.replicate},{r.infections},{flag(r.leave)},{flag(r.reach)}\n")
