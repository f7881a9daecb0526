"""Minimal-hop routing over the QBS backbone."""
from __future__ import annotations

from collections import deque

from ..errors import RoutingError


def route(topology, cell_a, cell_b) -> list:
    """Ordered QBS ids from ``cell_a`` to ``cell_b``.

    Among equally short paths the lexicographically smallest id sequence
    wins, so the result never depends on insertion order.
    """
    src, dst = topology.qbs_of(cell_a), topology.qbs_of(cell_b)
    if src == dst:
        return [src]
    # BFS distances to the destination, then a greedy smallest-id walk.
    dist = {dst: 0}
    frontier = deque([dst])
    while frontier:
        u = frontier.popleft()
        for v in topology.backbone_neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    if src not in dist:
        raise RoutingError(f"no backbone route between cells {cell_a!r} and {cell_b!r}")
    path = [src]
    while path[-1] != dst:
        here = path[-1]
        path.append(min(v for v in topology.backbone_neighbors(here)
                        if dist.get(v) == dist[here] - 1))
    return path
