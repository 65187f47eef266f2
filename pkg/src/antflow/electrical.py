"""Electrical-network quantities for weighted marked graphs.

Zero-weight edges are treated as absent: the weighted walk can never
cross them, so they are deleted before any linear solve.
"""
from __future__ import annotations

import numpy as np

RESIDUAL_TOL = 1e-12


class ElectricalError(ValueError):
    pass


def stationary_measure(g, w) -> dict:
    """pi_w(x) = sum of weights of edges incident to x (reversible measure)."""
    pi = {x: 0.0 for x in g.nodes}
    for eid, u, v in g.edges:
        we = float(w[eid])
        if we < 0:
            raise ElectricalError(f"negative weight on edge {eid!r}")
        pi[u] += we
        pi[v] += we
    return pi


def _positive_adjacency(g, w):
    adj = {x: [] for x in g.nodes}
    for eid, u, v in g.edges:
        we = float(w[eid])
        if we > 0.0:
            adj[u].append((eid, v, we))
            adj[v].append((eid, u, we))
    return adj


def _component(adj, start):
    seen = {start}
    stack = [start]
    while stack:
        x = stack.pop()
        for _, y, _ in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return seen


def effective_conductance(g, w, s, t) -> float:
    """Effective conductance between s and t.

    Solves the harmonic voltage problem (potential 1 at s, 0 at t) and
    returns the current flowing out of s. Returns 0 when s and t fall in
    different components of the positive-weight subgraph.
    """
    if s == t:
        raise ElectricalError("source and sink must differ")
    adj = _positive_adjacency(g, w)
    comp = _component(adj, s)
    if t not in comp:
        return 0.0
    interior = sorted(comp - {s, t})
    index = {x: k for k, x in enumerate(interior)}
    n = len(interior)
    if n:
        lap = np.zeros((n, n))
        rhs = np.zeros(n)
        for x in interior:
            i = index[x]
            for _, y, we in adj[x]:
                lap[i, i] += we
                if y in index:
                    lap[i, index[y]] -= we
                elif y == s:
                    rhs[i] += we  # potential 1 at the source
        try:
            v_int = np.linalg.solve(lap, rhs)
        except np.linalg.LinAlgError:
            return 0.0
        if not np.allclose(lap @ v_int, rhs, rtol=0, atol=RESIDUAL_TOL * max(1.0, np.abs(rhs).max())):
            raise ElectricalError("harmonic solve residual above tolerance")
        potential = dict(zip(interior, v_int))
    else:
        potential = {}
    potential[s] = 1.0
    potential[t] = 0.0
    current = 0.0
    for _, y, we in adj[s]:
        current += we * (1.0 - potential[y])
    return float(current)


def green_function(g, w, x, y) -> float:
    """Expected number of visits to y strictly before hitting the food node,
    for the w-weighted walk started at x. The visit at time zero counts, so
    green_function(g, w, x, x) >= 1.
    """
    food = g.food
    if y == food:
        raise ElectricalError("visits to the absorbing food node are not counted")
    adj = _positive_adjacency(g, w)
    if x not in adj:
        raise ElectricalError(f"unknown node {x!r}")
    comp = _component(adj, x)
    if food not in comp:
        raise ElectricalError("food unreachable: expected visit count diverges")
    if y not in comp:
        return 0.0
    transient = sorted(comp - {food})
    index = {z: k for k, z in enumerate(transient)}
    n = len(transient)
    a = np.eye(n)
    for z in transient:
        i = index[z]
        pi = sum(we for _, _, we in adj[z])
        for _, nb, we in adj[z]:
            if nb != food:
                a[i, index[nb]] -= we / pi
    rhs = np.zeros(n)
    rhs[index[y]] = 1.0
    visits = np.linalg.solve(a, rhs)
    return float(visits[index[x]])


def returns_to_nest_mean(g, w) -> float:
    """Mean total number of visits to the nest before absorption at food,
    i.e. pi_w(N) / C(N, F). Geometric escape makes this the mean of a
    geometric variable counting the initial visit.
    """
    cond = effective_conductance(g, w, g.nest, g.food)
    if cond <= 0.0:
        raise ElectricalError("zero conductance between nest and food")
    pi = stationary_measure(g, w)
    return pi[g.nest] / cond


def merged_bipartite_graph(g, w):
    """Collapse every node other than nest/food into a single hub node.

    Returns (graph, weights) where each original nest-incident or
    food-incident edge keeps its weight and identity; edges touching
    neither marked node disappear (they become internal to the hub).
    Conductance can only grow under this merge.
    """
    from .graph import MarkedGraph

    edges, weights = [], {}
    for eid, u, v in g.edges:
        ends = {u, v}
        if g.nest in ends and g.food in ends:
            edges.append((eid, "N", "F"))
        elif g.nest in ends:
            edges.append((eid, "N", "P"))
        elif g.food in ends:
            edges.append((eid, "P", "F"))
        else:
            continue
        weights[eid] = float(w[eid])
    merged = MarkedGraph(["N", "P", "F"], edges, "N", "F")
    return merged, weights


def bipartite_conductance(nest_total: float, food_total: float) -> float:
    """Closed form for the two-level hub graph: product over sum of the
    nest-side and food-side weight totals."""
    if nest_total + food_total == 0.0:
        return 0.0
    return nest_total * food_total / (nest_total + food_total)
