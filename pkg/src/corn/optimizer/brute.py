"""Exhaustive reference solver, deliberately independent of the search code.

Enumerates every balanced unordered partition of the substitutable
locations, filters by the diameter cap, then enumerates HCP-group
assignments outright. Only the shared objective evaluator (cut_value)
is reused, since both solvers must report that recomputed number.
"""

from __future__ import annotations

import itertools
import math
import time

from ..clustering import BubbleClustering, canonicalize, cut_value
from ..errors import TooLargeError
from .branch_bound import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    SolveResult,
)
from .model import ClusterInstance

_EPS = 1e-9
_MAX_LOCATIONS = 10
_MAX_GROUP_ENUM = 2_000_000


def _partitions(items: tuple[str, ...], sizes: tuple[int, ...]):
    """All unordered partitions of items into groups with the given sizes."""
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for s in sorted(set(sizes), reverse=True):
        remaining = list(sizes)
        remaining.remove(s)
        for companions in itertools.combinations(rest, s - 1):
            group = (head,) + companions
            left = tuple(x for x in rest if x not in companions)
            for tail in _partitions(left, tuple(remaining)):
                yield [group] + tail


def _group_ok(
    members: tuple[str, ...],
    loads: dict[str, float],
    k: int,
    need: list[float],
) -> dict[str, int] | None:
    if k ** len(members) > _MAX_GROUP_ENUM:
        raise TooLargeError(
            f"group of {len(members)} over {k} bubbles is too large to enumerate")
    flr, cl = len(members) // k, math.ceil(len(members) / k)
    for combo in itertools.product(range(k), repeat=len(members)):
        counts = [0] * k
        load = [0.0] * k
        for p, b in zip(members, combo):
            counts[b] += 1
            load[b] += loads.get(p, 0.0)
        if all(flr <= c <= cl for c in counts) and all(
            load[b] >= need[b] - _EPS for b in range(k)
        ):
            return {p: b + 1 for p, b in zip(members, combo)}
    return None


def brute_force_solve(inst: ClusterInstance) -> SolveResult:
    inst.check()
    n = len(inst.locations)
    if n > _MAX_LOCATIONS:
        raise TooLargeError(f"{n} locations exceed the brute-force cap of {_MAX_LOCATIONS}")
    t0 = time.monotonic()
    K = inst.k
    flr = n // K
    extra = n - K * flr
    sizes = tuple([flr + 1] * extra + [flr] * (K - extra))
    loads = inst.loads.loads if inst.loads is not None else {}

    best_obj = math.inf
    best: BubbleClustering | None = None
    examined = 0
    for groups in _partitions(tuple(sorted(inst.locations)), sizes):
        examined += 1
        if math.isfinite(inst.d_star_m) and inst.dist is not None:
            bad = False
            for group in groups:
                for a, b in itertools.combinations(group, 2):
                    if inst.dist.get(a, b) > inst.d_star_m + _EPS:
                        bad = True
                        break
                if bad:
                    break
            if bad:
                continue
        if math.isfinite(inst.y_star_h):
            assert inst.loads is not None
            need = [
                max(0.0, sum(inst.loads.demands[l] for l in group) - inst.y_star_h)
                for group in groups
            ]
        else:
            need = [0.0] * K
        hcp: dict[str, int] = {}
        feasible = True
        for lab in inst.groups:
            got = _group_ok(inst.hcps.members(lab), loads, K, need)
            if got is None:
                feasible = False
                break
            hcp.update(got)
        if not feasible:
            continue
        cand = BubbleClustering(
            k=K,
            location_bubble={l: b + 1 for b, group in enumerate(groups) for l in group},
            hcp_bubble=hcp,
        )
        obj = cut_value(cand, inst.weights)
        if obj < best_obj - _EPS:
            best_obj = obj
            best = cand
    runtime = time.monotonic() - t0
    if best is None:
        return SolveResult(STATUS_INFEASIBLE, None, None, math.inf, examined, runtime)
    best = canonicalize(best)
    obj = cut_value(best, inst.weights)
    best = BubbleClustering(best.k, best.location_bubble, best.hcp_bubble, obj)
    return SolveResult(STATUS_OPTIMAL, best, obj, obj, examined, runtime)
