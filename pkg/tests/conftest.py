from __future__ import annotations

from corn.model import HcpRoster, LocationRoster, Visit, VisitGraph


def make_graph(
    visits: list[tuple[str, str, int, int]],
    hcp_types: dict[str, str],
    loc_kinds: dict[str, str],
) -> VisitGraph:
    """Build a VisitGraph from (hcp, location, start_s, end_s) rows."""
    return VisitGraph.build(
        HcpRoster(dict(hcp_types)),
        LocationRoster(dict(loc_kinds)),
        [Visit(s, e, h, l) for h, l, s, e in visits],
    )


def two_room_graph(rows: list[tuple[str, str, int, int]], n_hcps: int = 1) -> VisitGraph:
    """Minimal pair-of-rooms fixture for directed-weight examples."""
    hcps = {f"p{i + 1}": "g1" for i in range(n_hcps)}
    return make_graph(rows, hcps, {"la": "s", "lb": "s"})
