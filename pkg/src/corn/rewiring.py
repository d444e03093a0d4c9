"""Rewiring a visit log to respect a bubble clustering, plus its cost report.

Visits by non-substitutable HCPs and visits to non-substitutable locations
are pinned first: they keep their original HCP no matter what, so their
time intervals are claimed before any reassignment happens. Remaining
visits are processed in chronological order; each is handed to a uniformly
random same-group HCP of the room's bubble whose schedule so far leaves
the interval free. A visit with no free candidate is dropped and later
surfaces as unmet demand.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import BubbleClustering, canonicalize, cut_value
from .errors import ClusteringMismatchError, InvalidKError
from .model import HcpRoster, Visit, VisitGraph, compute_loads_demands
from .spatial import DistanceMatrix
from .weights import WeightMatrix


@dataclass(frozen=True)
class RewiredGraph:
    source: VisitGraph
    graph: VisitGraph
    clustering: BubbleClustering
    assigned: tuple[str | None, ...]  # per source visit; None means dropped
    out_source: tuple[int, ...]  # per output visit, index into source.visits

    @property
    def dropped_indices(self) -> tuple[int, ...]:
        return tuple(i for i, h in enumerate(self.assigned) if h is None)

    @property
    def dropped_count(self) -> int:
        return sum(1 for h in self.assigned if h is None)


class _Calendar:
    """Per-HCP interval book with O(log n) conflict checks."""

    def __init__(self) -> None:
        self.by_hcp: dict[str, list[tuple[int, int]]] = {}

    def conflicts(self, hcp: str, start: int, end: int) -> bool:
        iv = self.by_hcp.get(hcp)
        if not iv:
            return False
        i = bisect.bisect_left(iv, (start,))
        if i > 0 and iv[i - 1][1] > start:
            return True
        return i < len(iv) and iv[i][0] < end

    def claim(self, hcp: str, start: int, end: int) -> None:
        iv = self.by_hcp.setdefault(hcp, [])
        bisect.insort(iv, (start, end))


def _check_match(g: VisitGraph, c: BubbleClustering) -> None:
    want_locs = set(g.locations.substitutable)
    if set(c.location_bubble) != want_locs:
        raise ClusteringMismatchError(
            "clustering covers different locations than the graph's substitutable set")
    want_hcps = set(g.hcps.substitutable)
    if set(c.hcp_bubble) != want_hcps:
        raise ClusteringMismatchError(
            "clustering covers different HCPs than the graph's substitutable set")


def rewire(
    g: VisitGraph,
    clustering: BubbleClustering,
    seed: int,
    keep_same_bubble_hcp: bool = False,
) -> RewiredGraph:
    _check_match(g, clustering)
    rng = np.random.default_rng(seed)
    ns_hcps = set(g.hcps.non_substitutable)
    ns_locs = set(g.locations.non_substitutable)
    cal = _Calendar()
    assigned: list[str | None] = [None] * len(g.visits)

    def pinned(v: Visit) -> bool:
        if v.hcp in ns_hcps or v.location in ns_locs:
            return True
        return keep_same_bubble_hcp and (
            clustering.hcp_bubble[v.hcp] == clustering.location_bubble[v.location]
        )

    for i, v in enumerate(g.visits):
        if pinned(v):
            assigned[i] = v.hcp
            cal.claim(v.hcp, v.start_s, v.end_s)

    members: dict[tuple[str, int], tuple[str, ...]] = {}
    for lab in g.hcps.group_labels:
        for b in range(1, clustering.k + 1):
            members[(lab, b)] = tuple(
                sorted(p for p in g.hcps.members(lab) if clustering.hcp_bubble[p] == b)
            )

    for i, v in enumerate(g.visits):
        if assigned[i] is not None:
            continue
        bubble = clustering.location_bubble[v.location]
        group = g.hcps.types[v.hcp]
        free = [
            p for p in members[(group, bubble)]
            if not cal.conflicts(p, v.start_s, v.end_s)
        ]
        if not free:
            continue
        pick = free[int(rng.integers(len(free)))]
        assigned[i] = pick
        cal.claim(pick, v.start_s, v.end_s)

    tagged = sorted(
        (Visit(v.start_s, v.end_s, h, v.location), i)
        for i, (v, h) in enumerate(zip(g.visits, assigned))
        if h is not None
    )
    return RewiredGraph(
        source=g,
        graph=VisitGraph.build(g.hcps, g.locations, [t[0] for t in tagged]),
        clustering=clustering,
        assigned=tuple(assigned),
        out_source=tuple(t[1] for t in tagged),
    )


def random_clustering(
    hcps: HcpRoster,
    locations: tuple[str, ...],
    k: int,
    seed: int,
    weights: WeightMatrix | None = None,
) -> BubbleClustering:
    """Uniform balanced baseline clustering (sizes differ by at most one)."""
    n = len(locations)
    if not 1 <= k <= n:
        raise InvalidKError(f"k={k} outside 1..{n}")
    for lab in hcps.group_labels:
        if k > len(hcps.members(lab)):
            raise InvalidKError(f"k={k} exceeds group {lab!r}")
    rng = np.random.default_rng(seed)

    def deal(items: tuple[str, ...]) -> dict[str, int]:
        pool = list(items)
        rng.shuffle(pool)
        flr, extra = len(pool) // k, len(pool) % k
        out: dict[str, int] = {}
        pos = 0
        for b in range(1, k + 1):
            take = flr + (1 if b <= extra else 0)
            for item in pool[pos:pos + take]:
                out[item] = b
            pos += take
        return out

    c = BubbleClustering(
        k=k,
        location_bubble=deal(tuple(sorted(locations))),
        hcp_bubble={
            p: b
            for lab in hcps.group_labels
            for p, b in deal(tuple(sorted(hcps.members(lab)))).items()
        },
    )
    c = canonicalize(c)
    if weights is not None:
        c = BubbleClustering(c.k, c.location_bubble, c.hcp_bubble, cut_value(c, weights))
    return c


@dataclass(frozen=True)
class CostReport:
    """Rewiring costs, all normalized over the source log's day span."""

    excess_load: dict[str, float]
    unmet_demand: dict[str, float]
    footsteps: dict[str, float]
    excess_footsteps: dict[str, float]
    bubble_diameters: dict[int, float]

    def summary(self) -> dict[str, float]:
        def agg(m: dict) -> tuple[float, float]:
            vals = list(m.values())
            return (sum(vals), max(vals) if vals else 0.0)

        out: dict[str, float] = {}
        for name, m in (
            ("excess_load", self.excess_load),
            ("unmet_demand", self.unmet_demand),
            ("footsteps", self.footsteps),
            ("excess_footsteps", self.excess_footsteps),
        ):
            total, peak = agg(m)
            out[f"{name}_total"] = total
            out[f"{name}_max"] = peak
            out[f"{name}_mean"] = total / len(m) if m else 0.0
        out["bubble_diameter_max"] = max(self.bubble_diameters.values(), default=0.0)
        return out

    def to_json(self, path: str | Path) -> None:
        payload = {
            "excess_load": dict(sorted(self.excess_load.items())),
            "unmet_demand": dict(sorted(self.unmet_demand.items())),
            "footsteps": dict(sorted(self.footsteps.items())),
            "excess_footsteps": dict(sorted(self.excess_footsteps.items())),
            "bubble_diameters": {str(k): v for k, v in sorted(self.bubble_diameters.items())},
            "summary": self.summary(),
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _footsteps(g: VisitGraph, dist: DistanceMatrix, days: int) -> dict[str, float]:
    out = {h: 0.0 for h in g.hcps.ids}
    prev: dict[str, str] = {}
    for v in g.visits:  # already in chronological order
        if v.hcp in prev:
            out[v.hcp] += dist.get(prev[v.hcp], v.location)
        prev[v.hcp] = v.location
    return {h: s / days for h, s in out.items()}


def compute_costs(
    base: VisitGraph,
    rewired: RewiredGraph | VisitGraph,
    dist: DistanceMatrix,
    clustering: BubbleClustering | None = None,
) -> CostReport:
    if isinstance(rewired, RewiredGraph):
        if clustering is None:
            clustering = rewired.clustering
        rg = rewired.graph
    else:
        rg = rewired
    days = base.day_count

    def hours_per_base_day(g: VisitGraph) -> tuple[dict[str, float], dict[str, float]]:
        t = compute_loads_demands(g)
        scale = t.day_count / days
        return (
            {h: x * scale for h, x in t.loads.items()},
            {l: x * scale for l, x in t.demands.items()},
        )

    load_b, dem_b = hours_per_base_day(base)
    load_r, dem_r = hours_per_base_day(rg)
    fs_b = _footsteps(base, dist, days)
    fs_r = _footsteps(rg, dist, days)

    diameters: dict[int, float] = {}
    if clustering is not None:
        for b in range(1, clustering.k + 1):
            locs = clustering.locations_in(b)
            worst = 0.0
            for i, a in enumerate(locs):
                for bb in locs[i + 1:]:
                    worst = max(worst, dist.get(a, bb))
            diameters[b] = worst

    return CostReport(
        excess_load={h: max(0.0, load_r.get(h, 0.0) - load_b.get(h, 0.0)) for h in base.hcps.ids},
        unmet_demand={l: max(0.0, dem_b.get(l, 0.0) - dem_r.get(l, 0.0)) for l in base.locations.ids},
        footsteps=fs_r,
        excess_footsteps={h: max(0.0, fs_r.get(h, 0.0) - fs_b.get(h, 0.0)) for h in base.hcps.ids},
        bubble_diameters=diameters,
    )


def write_cost_csv(report: CostReport, hcp_path: str | Path, loc_path: str | Path) -> None:
    with open(hcp_path, "w") as f:
        f.write("hcp_id,excess_load_h_per_day,footsteps_m_per_day,excess_footsteps_m_per_day\n")
        for h in sorted(report.excess_load):
            f.write(f"{h},{report.excess_load[h]!r},{report.footsteps.get(h, 0.0)!r},"
                    f"{report.excess_footsteps[h]!r}\n")
    with open(loc_path, "w") as f:
        f.write("location_id,unmet_demand_h_per_day\n")
        for l in sorted(report.unmet_demand):
            f.write(f"{l},{report.unmet_demand[l]!r}\n")
