"""Exact depth-first branch-and-bound over location-to-bubble assignments.

Locations are branched in descending incident-weight order. Bubble-index
symmetry is broken by only ever offering the open bubbles plus the first
empty one. Nodes are pruned by a combinatorial lower bound (committed cut
+ cheapest attachment per unassigned location + a capacity argument over
still-unassigned pairs) and, on small instances, by an LP relaxation.

HCP-to-bubble assignment never affects the objective, so it is resolved
per leaf: a feasibility search per group over balanced counts and, when
the load-gap cap is finite, per-bubble load coverage.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..clustering import BubbleClustering, canonicalize, cut_value
from .model import ClusterInstance, IlpModel
from .simplex import STATUS_INFEASIBLE as LP_INFEASIBLE
from .simplex import STATUS_OPTIMAL as LP_OPTIMAL
from .simplex import solve_lp

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_TIMEOUT = "timeout"

_EPS = 1e-9


@dataclass(frozen=True)
class SolveResult:
    status: str
    clustering: BubbleClustering | None
    objective: float | None
    bound: float
    nodes: int
    runtime_s: float


def _group_need(inst: ClusterInstance, bubble_locs: list[list[str]]) -> list[float]:
    if not math.isfinite(inst.y_star_h):
        return [0.0] * len(bubble_locs)
    assert inst.loads is not None
    return [
        max(0.0, sum(inst.loads.demands[l] for l in locs) - inst.y_star_h)
        for locs in bubble_locs
    ]


def _assign_one_group(
    members: list[str],
    loads: dict[str, float],
    k: int,
    need: list[float],
) -> dict[str, int] | None:
    """Balanced assignment of one group covering per-bubble load needs."""
    flr, cl = len(members) // k, math.ceil(len(members) / k)
    order = sorted(members, key=lambda p: (-loads.get(p, 0.0), p))
    lvals = [loads.get(p, 0.0) for p in order]
    suffix = [0.0] * (len(order) + 1)
    for i in range(len(order) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + lvals[i]

    cnt = [0] * k
    load = [0.0] * k
    out: dict[str, int] = {}

    def feasible(i: int) -> bool:
        rest = len(order) - i
        if sum(max(0, flr - c) for c in cnt) > rest:
            return False
        if sum(max(0.0, need[b] - load[b]) for b in range(k)) > suffix[i] + _EPS:
            return False
        return True

    def rec(i: int) -> bool:
        if i == len(order):
            return all(cnt[b] >= flr and load[b] >= need[b] - _EPS for b in range(k))
        tried: set[tuple[int, float, float]] = set()
        for b in range(k):
            if cnt[b] >= cl:
                continue
            state = (cnt[b], load[b], need[b])
            if state in tried:  # symmetric bubble, same subtree
                continue
            tried.add(state)
            cnt[b] += 1
            load[b] += lvals[i]
            out[order[i]] = b + 1
            if feasible(i + 1) and rec(i + 1):
                return True
            del out[order[i]]
            cnt[b] -= 1
            load[b] -= lvals[i]
        return False

    if not feasible(0) or not rec(0):
        return None
    return out


def _assign_groups(inst: ClusterInstance, bubble_locs: list[list[str]]) -> dict[str, int] | None:
    need = _group_need(inst, bubble_locs)
    loads = inst.loads.loads if inst.loads is not None else {}
    combined: dict[str, int] = {}
    for lab in inst.groups:
        members = list(inst.hcps.members(lab))
        got = _assign_one_group(members, loads, inst.k, need)
        if got is None:
            return None
        combined.update(got)
    return combined


class _Search:
    def __init__(self, model: IlpModel, lp_max_locations: int, lp_node_budget: int):
        inst = model.instance
        self.inst = inst
        self.K = inst.k
        locs = inst.locations
        incident = {l: 0.0 for l in locs}
        for a, b in inst.weights.pairs():
            w = inst.weights.get(a, b)
            incident[a] += w
            incident[b] += w
        self.order = sorted(locs, key=lambda l: (-incident[l], l))
        self.n = len(self.order)
        self.idx = {l: i for i, l in enumerate(self.order)}
        self.W = np.zeros((self.n, self.n))
        for a, b in inst.weights.pairs():
            i, j = self.idx[a], self.idx[b]
            self.W[i, j] = self.W[j, i] = inst.weights.get(a, b)
        self.D = np.zeros((self.n, self.n))
        if inst.dist is not None:
            for i, a in enumerate(self.order):
                for j, b in enumerate(self.order):
                    if i < j:
                        d = inst.dist.get(a, b)
                        self.D[i, j] = self.D[j, i] = d
        self.cap = math.ceil(self.n / self.K)
        self.flr = self.n // self.K
        ii, jj = np.triu_indices(self.n, 1)
        pos = self.W[ii, jj] > 0.0
        ws = self.W[ii, jj][pos]
        asc = np.argsort(ws, kind="stable")
        self.pair_w = ws[asc]
        self.pair_i = ii[pos][asc]
        self.pair_j = jj[pos][asc]
        self.conflicts = []
        if math.isfinite(inst.d_star_m):
            for i in range(self.n):
                for j in range(i + 1, self.n):
                    if self.D[i, j] > inst.d_star_m + _EPS:
                        self.conflicts.append((i, j))

        self.bubble = np.full(self.n, -1, dtype=int)
        self.size = [0] * self.K
        self.members: list[list[int]] = [[] for _ in range(self.K)]
        self.sum_in = np.zeros((self.n, self.K))
        self.total_assigned = np.zeros(self.n)
        self.committed = 0.0
        self.opened = 0

        self.incumbent = math.inf
        self.best: BubbleClustering | None = None
        self.nodes = 0
        self.timed_out = False
        self.frontier_bound = math.inf
        self.deadline: float | None = None
        self.use_lp = self.n <= lp_max_locations
        self.lp_budget = lp_node_budget
        self.hcp_needed = math.isfinite(inst.y_star_h) and bool(inst.groups)

    # -- incremental assignment bookkeeping

    def _assign(self, u: int, b: int) -> float:
        delta = self.total_assigned[u] - self.sum_in[u, b]
        self.bubble[u] = b
        if self.size[b] == 0:
            self.opened += 1
        self.size[b] += 1
        self.members[b].append(u)
        self.sum_in[:, b] += self.W[:, u]
        self.total_assigned += self.W[:, u]
        self.committed += delta
        return delta

    def _unassign(self, u: int, b: int, delta: float) -> None:
        self.committed -= delta
        self.total_assigned -= self.W[:, u]
        self.sum_in[:, b] -= self.W[:, u]
        self.members[b].pop()
        self.size[b] -= 1
        if self.size[b] == 0:
            self.opened -= 1
        self.bubble[u] = -1

    def _diameter_ok(self, u: int, b: int) -> bool:
        if not math.isfinite(self.inst.d_star_m):
            return True
        for v in self.members[b]:
            if self.D[u, v] > self.inst.d_star_m + _EPS:
                return False
        return True

    def _floors_ok(self, remaining: int) -> bool:
        deficit = sum(max(0, self.flr - s) for s in self.size if s > 0)
        deficit += (self.K - self.opened) * self.flr
        return deficit <= remaining

    # -- bounds

    def _comb_bound(self, pos: int) -> float:
        unassigned = np.arange(pos, self.n)
        if unassigned.size == 0:
            return self.committed
        open_cols = [b for b in range(self.K) if self.size[b] > 0]
        attach = 0.0
        if open_cols:
            costs = (
                self.total_assigned[unassigned, None]
                - self.sum_in[np.ix_(unassigned, open_cols)]
            )
            roomy = np.array([self.size[b] < self.cap for b in open_cols])
            if roomy.any():
                best = costs[:, roomy].min(axis=1)
            else:
                best = np.full(unassigned.size, math.inf)
            if self.opened < self.K:
                best = np.minimum(best, self.total_assigned[unassigned])
            attach = float(best.sum())

        caps = sorted(
            [self.cap - s for s in self.size if s > 0]
            + [self.cap] * (self.K - self.opened),
            reverse=True,
        )
        left = self.n - pos
        slots = 0
        for r in caps:
            take = min(r, left)
            slots += take * (take - 1) // 2
            left -= take
            if left == 0:
                break
        mask = (self.bubble[self.pair_i] < 0) & (self.bubble[self.pair_j] < 0)
        ws = self.pair_w[mask]
        spill = ws.size - slots
        pairs = float(ws[: spill].sum()) if spill > 0 else 0.0
        return self.committed + attach + pairs

    def _lp_bound(self, pos: int) -> float | None:
        """LP relaxation over e and x; returns a bound or None if infeasible."""
        ne = self.pair_w.size
        nx = self.n * self.K
        nv = ne + nx

        def xv(i: int, k: int) -> int:
            return ne + i * self.K + k

        c = np.concatenate([self.pair_w, np.zeros(nx)])
        ub_rows: list[np.ndarray] = []
        ub_rhs: list[float] = []
        eq_rows: list[np.ndarray] = []
        eq_rhs: list[float] = []

        for t, (i, j) in enumerate(zip(self.pair_i, self.pair_j)):
            for k in range(self.K):
                row = np.zeros(nv)
                row[t] = -1.0
                row[xv(i, k)] = 1.0
                row[xv(j, k)] = -1.0
                ub_rows.append(row)
                ub_rhs.append(0.0)
                row2 = np.zeros(nv)
                row2[t] = -1.0
                row2[xv(i, k)] = -1.0
                row2[xv(j, k)] = 1.0
                ub_rows.append(row2)
                ub_rhs.append(0.0)
        for i, j in self.conflicts:
            for k in range(self.K):
                row = np.zeros(nv)
                row[xv(i, k)] = 1.0
                row[xv(j, k)] = 1.0
                ub_rows.append(row)
                ub_rhs.append(1.0)
        for i in range(self.n):
            row = np.zeros(nv)
            for k in range(self.K):
                row[xv(i, k)] = 1.0
            eq_rows.append(row)
            eq_rhs.append(1.0)
        for k in range(self.K):
            row = np.zeros(nv)
            for i in range(self.n):
                row[xv(i, k)] = 1.0
            ub_rows.append(row)
            ub_rhs.append(float(self.cap))
            ub_rows.append(-row)
            ub_rhs.append(-float(self.flr))
        for i in range(pos):
            row = np.zeros(nv)
            row[xv(i, int(self.bubble[i]))] = 1.0
            eq_rows.append(row)
            eq_rhs.append(1.0)

        res = solve_lp(
            c,
            a_ub=np.array(ub_rows),
            b_ub=np.array(ub_rhs),
            a_eq=np.array(eq_rows),
            b_eq=np.array(eq_rhs),
        )
        if res.status == LP_INFEASIBLE:
            return None
        if res.status != LP_OPTIMAL:
            return self.committed
        return res.value

    # -- leaf handling

    def _close_leaf(self) -> None:
        bubble_locs = [[self.order[u] for u in self.members[b]] for b in range(self.K)]
        if any(not locs for locs in bubble_locs):
            return
        if self.hcp_needed:
            hcp = _assign_groups(self.inst, bubble_locs)
            if hcp is None:
                return
        else:
            hcp = {}
            for lab in self.inst.groups:
                for i, p in enumerate(sorted(self.inst.hcps.members(lab))):
                    hcp[p] = (i % self.K) + 1
        if self.committed < self.incumbent - _EPS:
            self.incumbent = self.committed
            self.best = BubbleClustering(
                k=self.K,
                location_bubble={
                    self.order[u]: b + 1
                    for b in range(self.K)
                    for u in self.members[b]
                },
                hcp_bubble=hcp,
            )

    def _greedy(self) -> None:
        """Seed the incumbent with a cheapest-attachment pass, if feasible."""
        placed: list[tuple[int, int, float]] = []
        ok = True
        for u in range(self.n):
            cands = []
            for b in range(self.K):
                if self.size[b] >= self.cap:
                    continue
                if self.size[b] == 0:
                    cands.append((self.total_assigned[u], 0, b))
                    break  # symmetry: one empty bubble is enough
                cands.append((self.total_assigned[u] - self.sum_in[u, b], self.size[b], b))
            # ties spread over bubbles instead of packing the first one
            cands.sort()
            chosen = None
            for _, _, b in cands:
                if not self._diameter_ok(u, b):
                    continue
                delta = self._assign(u, b)
                if self._floors_ok(self.n - u - 1):
                    chosen = (u, b, delta)
                    break
                self._unassign(u, b, delta)
            if chosen is None:
                ok = False
                break
            placed.append(chosen)
        if ok:
            self._close_leaf()
        for u, b, delta in reversed(placed):
            self._unassign(u, b, delta)

    def _dfs(self, pos: int, depth_lp: int) -> None:
        if self.timed_out:
            return
        if self.deadline is not None and time.monotonic() > self.deadline:
            self.timed_out = True
            self.frontier_bound = min(self.frontier_bound, self._comb_bound(pos))
            return
        self.nodes += 1
        if pos == self.n:
            self._close_leaf()
            return
        bound = self._comb_bound(pos)
        if bound >= self.incumbent - _EPS:
            return
        if (
            self.use_lp
            and self.lp_budget > 0
            and depth_lp > 0
            and math.isfinite(self.incumbent)
        ):
            self.lp_budget -= 1
            lp = self._lp_bound(pos)
            if lp is None:
                return
            if lp >= self.incumbent - _EPS:
                return

        u = pos
        opened = [b for b in range(self.K) if self.size[b] > 0]
        cands = sorted(
            (b for b in opened if self.size[b] < self.cap),
            key=lambda b: (self.total_assigned[u] - self.sum_in[u, b], self.size[b]),
        )
        if self.opened < self.K:
            cands.append(next(b for b in range(self.K) if self.size[b] == 0))
        for b in cands:
            if not self._diameter_ok(u, b):
                continue
            delta = self._assign(u, b)
            if self._floors_ok(self.n - pos - 1):
                self._dfs(pos + 1, depth_lp - 1)
            self._unassign(u, b, delta)
            if self.timed_out:
                # unexplored siblings cannot be claimed solved
                self.frontier_bound = min(self.frontier_bound, self._comb_bound(pos))
                return


def solve(
    model: IlpModel,
    time_limit_s: float | None = None,
    seed: int = 0,
    lp_max_locations: int = 15,
    lp_node_budget: int = 200,
    lp_depth: int = 3,
) -> SolveResult:
    """Exact solve; `seed` is accepted for interface stability, the search
    itself is deterministic."""
    inst = model.instance
    inst.check()
    t0 = time.monotonic()
    s = _Search(model, lp_max_locations, lp_node_budget)
    if time_limit_s is not None:
        s.deadline = t0 + time_limit_s
    s._greedy()
    s._dfs(0, lp_depth)
    runtime = time.monotonic() - t0

    if s.best is not None:
        best = canonicalize(s.best)
        obj = cut_value(best, inst.weights)
        best = BubbleClustering(best.k, best.location_bubble, best.hcp_bubble, obj)
    else:
        best, obj = None, None

    if s.timed_out:
        bound = min(s.frontier_bound, obj if obj is not None else math.inf)
        return SolveResult(STATUS_TIMEOUT, best, obj, bound, s.nodes, runtime)
    if best is None:
        return SolveResult(STATUS_INFEASIBLE, None, None, math.inf, s.nodes, runtime)
    return SolveResult(STATUS_OPTIMAL, best, obj, obj, s.nodes, runtime)


def verify_clustering(c: BubbleClustering, inst: ClusterInstance, tol: float = 1e-9) -> list[str]:
    """Re-check every feasibility rule directly against the raw inputs."""
    problems: list[str] = []
    locs = set(inst.locations)
    if set(c.location_bubble) != locs:
        problems.append("location coverage differs from the substitutable set")
    n, K = len(inst.locations), c.k
    if K != inst.k:
        problems.append(f"clustering k={c.k} differs from instance k={inst.k}")
    flr, cl = n // K, math.ceil(n / K)
    for b in range(1, K + 1):
        group = c.locations_in(b)
        if not flr <= len(group) <= cl:
            problems.append(f"bubble {b} holds {len(group)} locations, outside [{flr},{cl}]")
        if not group:
            problems.append(f"bubble {b} is empty")
        if inst.dist is not None and math.isfinite(inst.d_star_m):
            for i, a in enumerate(group):
                for bb in group[i + 1:]:
                    d = inst.dist.get(a, bb)
                    if d > inst.d_star_m + tol:
                        problems.append(
                            f"bubble {b}: dist({a},{bb})={d:g} exceeds cap {inst.d_star_m:g}")
    subs = set(inst.hcps.substitutable)
    if set(c.hcp_bubble) != subs:
        problems.append("HCP coverage differs from the substitutable set")
    for lab in inst.groups:
        members = inst.hcps.members(lab)
        gf, gc = len(members) // K, math.ceil(len(members) / K)
        for b in range(1, K + 1):
            size = sum(1 for p in members if c.hcp_bubble.get(p) == b)
            if not gf <= size <= gc:
                problems.append(f"group {lab} bubble {b}: {size} members outside [{gf},{gc}]")
    if math.isfinite(inst.y_star_h) and inst.loads is not None:
        for b in range(1, K + 1):
            demand = sum(inst.loads.demands[l] for l in c.locations_in(b))
            for lab in inst.groups:
                load = sum(
                    inst.loads.loads.get(p, 0.0)
                    for p in inst.hcps.members(lab)
                    if c.hcp_bubble.get(p) == b
                )
                if demand - load > inst.y_star_h + tol:
                    problems.append(
                        f"bubble {b} group {lab}: load gap {demand - load:g} exceeds "
                        f"{inst.y_star_h:g}")
    if c.objective_value is not None:
        recomputed = cut_value(c, inst.weights)
        if abs(recomputed - c.objective_value) > 1e-9:
            problems.append(
                f"objective {c.objective_value!r} != recomputed {recomputed!r}")
    return problems
