"""Binary-program formulation of the bubble partition problem.

Variables, all binary:
  e_{a}_{b}   pair (a, b) of substitutable locations ends up in different
              bubbles; created only for pairs that can affect the problem
              (positive weight, or distance above the diameter cap)
  x_{l}_{k}   location l belongs to bubble k
  z_{p}_{k}   substitutable HCP p is assigned to bubble k

Objective: minimize the total weight of separated pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import ConfigError, InvalidKError
from ..model import HcpRoster, LoadDemandTable
from ..spatial import DistanceMatrix
from ..weights import WeightMatrix


@dataclass(frozen=True)
class ClusterInstance:
    """Everything needed to build or solve one partition problem."""

    weights: WeightMatrix
    hcps: HcpRoster
    k: int
    d_star_m: float = math.inf
    y_star_h: float = math.inf
    dist: DistanceMatrix | None = None
    loads: LoadDemandTable | None = None

    @property
    def locations(self) -> tuple[str, ...]:
        return self.weights.locations

    @property
    def groups(self) -> tuple[str, ...]:
        return self.hcps.group_labels

    def check(self) -> None:
        n = len(self.locations)
        if self.k < 1:
            raise InvalidKError(f"k={self.k} must be at least 1")
        if self.k > n:
            raise InvalidKError(f"k={self.k} exceeds the {n} substitutable locations")
        for lab in self.groups:
            size = len(self.hcps.members(lab))
            if self.k > size:
                raise InvalidKError(f"k={self.k} exceeds group {lab!r} of size {size}")
        if math.isfinite(self.d_star_m) and self.dist is None:
            raise ConfigError("finite diameter cap requires a distance matrix")
        if math.isfinite(self.y_star_h):
            if self.loads is None:
                raise ConfigError("finite load-gap cap requires loads and demands")
            missing = [l for l in self.locations if l not in self.loads.demands]
            if missing:
                raise ConfigError(f"no demand recorded for locations: {missing[:5]}")

    def distance(self, a: str, b: str) -> float:
        if self.dist is None:
            return 0.0
        return self.dist.get(a, b)

    def e_pairs(self) -> tuple[tuple[str, str], ...]:
        """Pairs that get an e variable: positive weight or over the cap."""
        out = []
        for a, b in self.weights.pairs():
            if self.weights.get(a, b) > 0.0:
                out.append((a, b))
            elif math.isfinite(self.d_star_m) and self.distance(a, b) > self.d_star_m:
                out.append((a, b))
        return tuple(out)


@dataclass(frozen=True)
class LinearConstraint:
    family: str
    name: str
    coeffs: dict[str, float]
    sense: str  # "<=", ">=", "="
    rhs: float


@dataclass(frozen=True)
class IlpModel:
    instance: ClusterInstance
    variables: tuple[str, ...]
    objective: dict[str, float]
    constraints: tuple[LinearConstraint, ...]
    e_pairs: tuple[tuple[str, str], ...] = field(default=())

    def constraint_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for c in self.constraints:
            counts[c.family] = counts.get(c.family, 0) + 1
        return counts


def _evar(a: str, b: str) -> str:
    return f"e_{a}_{b}"


def _xvar(l: str, k: int) -> str:
    return f"x_{l}_{k}"


def _zvar(p: str, k: int) -> str:
    return f"z_{p}_{k}"


def build_model(inst: ClusterInstance) -> IlpModel:
    inst.check()
    pairs = inst.e_pairs()
    locs = inst.locations
    subs = inst.hcps.substitutable
    K = inst.k

    variables: list[str] = [_evar(a, b) for a, b in pairs]
    variables += [_xvar(l, k) for l in locs for k in range(1, K + 1)]
    variables += [_zvar(p, k) for p in subs for k in range(1, K + 1)]

    objective = {
        _evar(a, b): inst.weights.get(a, b)
        for a, b in pairs
        if inst.weights.get(a, b) > 0.0
    }

    rows: list[LinearConstraint] = []
    for a, b in pairs:
        e = _evar(a, b)
        for k in range(1, K + 1):
            xa, xb = _xvar(a, k), _xvar(b, k)
            rows.append(LinearConstraint(
                "connect1", f"connect1_{a}_{b}_{k}",
                {e: 1.0, xa: -1.0, xb: 1.0}, ">=", 0.0))
            rows.append(LinearConstraint(
                "connect2", f"connect2_{a}_{b}_{k}",
                {e: 1.0, xa: 1.0, xb: -1.0}, ">=", 0.0))

    for l in locs:
        rows.append(LinearConstraint(
            "oneBubble", f"oneBubble_{l}",
            {_xvar(l, k): 1.0 for k in range(1, K + 1)}, "=", 1.0))

    cap = math.ceil(len(locs) / K)
    for k in range(1, K + 1):
        rows.append(LinearConstraint(
            "equalSizes", f"equalSizes_{k}",
            {_xvar(l, k): 1.0 for l in locs}, "<=", float(cap)))

    if math.isfinite(inst.d_star_m):
        for a, b in pairs:
            d = inst.distance(a, b)
            rows.append(LinearConstraint(
                "diameter", f"diameter_{a}_{b}",
                {_evar(a, b): -d}, "<=", inst.d_star_m - d))

    for lab in inst.groups:
        members = inst.hcps.members(lab)
        gcap = math.ceil(len(members) / K)
        for k in range(1, K + 1):
            rows.append(LinearConstraint(
                "hcpEqual", f"hcpEqual_{lab}_{k}",
                {_zvar(p, k): 1.0 for p in members}, "<=", float(gcap)))

    for p in subs:
        rows.append(LinearConstraint(
            "hcpExactlyOne", f"hcpExactlyOne_{p}",
            {_zvar(p, k): 1.0 for k in range(1, K + 1)}, "=", 1.0))

    if math.isfinite(inst.y_star_h):
        assert inst.loads is not None
        for lab in inst.groups:
            members = inst.hcps.members(lab)
            for k in range(1, K + 1):
                coeffs = {_xvar(l, k): inst.loads.demands[l] for l in locs}
                for p in members:
                    coeffs[_zvar(p, k)] = -inst.loads.loads.get(p, 0.0)
                rows.append(LinearConstraint(
                    "boundLoad", f"boundLoad_{lab}_{k}", coeffs, "<=", inst.y_star_h))

    return IlpModel(
        instance=inst,
        variables=tuple(variables),
        objective=objective,
        constraints=tuple(rows),
        e_pairs=pairs,
    )


def count_vars_constraints(m: ClusterInstance | IlpModel) -> tuple[int, int]:
    """Closed-form variable and constraint counts for the built model."""
    inst = m.instance if isinstance(m, IlpModel) else m
    inst.check()
    ne = len(inst.e_pairs())
    n = len(inst.locations)
    m = len(inst.hcps.substitutable)
    h = len(inst.groups)
    K = inst.k
    n_vars = ne + n * K + m * K
    n_cons = 2 * ne * K + n + K
    if math.isfinite(inst.d_star_m):
        n_cons += ne
    n_cons += h * K + m
    if math.isfinite(inst.y_star_h):
        n_cons += h * K
    return n_vars, n_cons
