"""Independent tour-graph reconstruction used to audit the MDP.

Edges are built straight from the meaning of each action (which aisle and
cross-aisle segments are walked, once or twice); nothing here consults the
transition tables.
"""
from __future__ import annotations

from collections import Counter

import networkx as nx


def _chain(nodes, times):
    return [(u, v, times) for u, v in zip(nodes, nodes[1:])]


def vertical_edges(action: str, aisle_idx: int, ys, h):
    a, b = ("a", aisle_idx), ("b", aisle_idx)
    items = [("item", aisle_idx, y) for y in ys]
    if action == "1pass":
        return _chain([b, *items, a], 1)
    if action == "top":
        return _chain([a, *reversed(items)], 2)
    if action == "bottom":
        return _chain([b, *items], 2)
    if action == "gap":
        gaps = [ys[k + 1] - ys[k] for k in range(len(ys) - 1)]
        k = gaps.index(max(gaps))
        return _chain([b, *items[: k + 1]], 2) + _chain([a, *reversed(items[k + 1:])], 2)
    raise ValueError(action)


def horizontal_edges(action: str, i: int, j: int):
    top, bottom = int(action[0]), int(action[1])
    out = []
    if top:
        out.append((("a", i), ("a", j), top))
    if bottom:
        out.append((("b", i), ("b", j), bottom))
    return out


def position(node, xs, h):
    if node[0] == "a":
        return xs[node[1]], h
    if node[0] == "b":
        return xs[node[1]], 0
    return xs[node[1]], node[2]


def edge_length(u, v, xs, h):
    (x1, y1), (x2, y2) = position(u, xs, h), position(v, xs, h)
    return abs(x1 - x2) + abs(y1 - y2)


def build(seq, actions, upto=None):
    """Multigraph (as an edge list) of the first ``upto`` steps of a rollout."""
    aisles = list(seq)
    upto = len(actions) if upto is None else upto
    edges = []
    for k in range(upto):
        v, hz = actions[k]
        aisle = aisles[k]
        edges += vertical_edges(str(v), aisle.index, list(aisle.ys), seq.h)
        if k < len(aisles) - 1:
            edges += horizontal_edges(str(hz), aisle.index, aisles[k + 1].index)
    return edges


def degrees(edges):
    deg = Counter()
    for u, v, times in edges:
        deg[u] += times
        deg[v] += times
    return deg


def components(edges):
    g = nx.Graph()
    for u, v, _ in edges:
        g.add_edge(u, v)
    return nx.number_connected_components(g)


def classify(edges, aisle_idx) -> str:
    """Equivalence label of a partial tour subgraph at aisle ``aisle_idx``."""
    deg = degrees(edges)

    def parity(node):
        d = deg.get(node, 0)
        if d == 0:
            return "0"
        return "E" if d % 2 == 0 else "U"

    return f"{parity(('a', aisle_idx))}{parity(('b', aisle_idx))}{components(edges)}C"


def total_length(edges, seq):
    xs = {a.index: a.x for a in seq}
    return sum(times * edge_length(u, v, xs, seq.h) for u, v, times in edges)


def is_valid_tour(edges, seq) -> bool:
    """Every pick covered, every degree even, one connected component."""
    deg = degrees(edges)
    for aisle in seq:
        for y in aisle.ys:
            if deg.get(("item", aisle.index, y), 0) == 0:
                return False
    return all(d % 2 == 0 for d in deg.values()) and components(edges) == 1
