"""Finite multigraphs with marked nest/food nodes.

Graphs are undirected, loop-free, and may carry parallel edges; every edge
has its own identity because the reinforcement process counts parallel
edges separately.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np


class GraphError(ValueError):
    pass


class ParseError(GraphError):
    """Raised on malformed graph text; carries the offending line number."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class PathLimitError(GraphError):
    """Raised when self-avoiding path enumeration exceeds its ceiling."""


class MarkedGraph:
    """Immutable multigraph with distinguished nest and food nodes.

    edges is a sequence of (edge_id, u, v) triples; ids are unique strings,
    endpoints are node ids, u != v. The food node must be reachable from
    the nest.
    """

    def __init__(self, nodes, edges, nest, food):
        nodes = tuple(sorted(str(x) for x in nodes))
        edges = tuple((str(i), str(u), str(v)) for i, u, v in edges)
        node_set = set(nodes)
        if len(node_set) != len(nodes):
            raise GraphError("duplicate node id")
        nest, food = str(nest), str(food)
        if nest == food:
            raise GraphError("nest and food must be distinct nodes")
        for marked in (nest, food):
            if marked not in node_set:
                raise GraphError(f"marked node {marked!r} not declared")
        seen = set()
        for eid, u, v in edges:
            if eid in seen:
                raise GraphError(f"duplicate edge id {eid!r}")
            seen.add(eid)
            if u == v:
                raise GraphError(f"edge {eid!r} is a self-loop")
            if u not in node_set or v not in node_set:
                raise GraphError(f"edge {eid!r} uses undeclared node")
        self.nodes = nodes
        self.edges = edges
        self.nest = nest
        self.food = food
        if not self._reachable(nest, food):
            raise GraphError("food is not reachable from nest")

    def _reachable(self, s, t):
        adj = {}
        for _, u, v in self.edges:
            adj.setdefault(u, []).append(v)
            adj.setdefault(v, []).append(u)
        stack, seen = [s], {s}
        while stack:
            x = stack.pop()
            if x == t:
                return True
            for y in adj.get(x, ()):
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    @cached_property
    def edge_ids(self) -> tuple:
        return tuple(e[0] for e in self.edges)

    @cached_property
    def edge_index(self) -> dict:
        """edge id -> position in self.edges (array index convention)."""
        return {e[0]: k for k, e in enumerate(self.edges)}

    @cached_property
    def adjacency(self) -> dict:
        """node -> tuple of (edge_id, other_endpoint), parallel edges listed separately."""
        adj = {x: [] for x in self.nodes}
        for eid, u, v in self.edges:
            adj[u].append((eid, v))
            adj[v].append((eid, u))
        return {x: tuple(inc) for x, inc in adj.items()}

    def degree(self, x) -> int:
        # counts parallel edges individually
        return len(self.adjacency[x])

    def endpoints(self, eid):
        _, u, v = self.edges[self.edge_index[eid]]
        return u, v

    @cached_property
    def csr(self):
        """Flat incidence arrays for the sampling kernels.

        Returns (indptr, edge_pos, dest, node_order): for node k,
        slots indptr[k]:indptr[k+1] hold the incident edge positions and
        the opposite endpoint's node index.
        """
        node_order = {x: k for k, x in enumerate(self.nodes)}
        indptr = np.zeros(len(self.nodes) + 1, dtype=np.int64)
        edge_pos, dest = [], []
        for k, x in enumerate(self.nodes):
            for eid, y in self.adjacency[x]:
                edge_pos.append(self.edge_index[eid])
                dest.append(node_order[y])
            indptr[k + 1] = len(edge_pos)
        return (indptr,
                np.asarray(edge_pos, dtype=np.int64),
                np.asarray(dest, dtype=np.int64),
                node_order)

    def __eq__(self, other):
        if not isinstance(other, MarkedGraph):
            return NotImplemented
        return (self.nodes, self.edges, self.nest, self.food) == \
               (other.nodes, other.edges, other.nest, other.food)

    def __hash__(self):
        return hash((self.nodes, self.edges, self.nest, self.food))

    def __repr__(self):
        return (f"MarkedGraph(nodes={len(self.nodes)}, edges={len(self.edges)}, "
                f"nest={self.nest!r}, food={self.food!r})")


class FamilyTag(Enum):
    TREE_LIKE = "TreeLike"
    CONE = "Cone"
    TWO_PATHS = "TwoPaths"
    LOSANGE = "Losange"
    GENERAL = "General"


@dataclass(frozen=True)
class GraphFamily:
    """Classification result: a tag plus family-specific parameters.

    parameters carries the edge-role assignment needed to map canonical
    limit vectors onto this graph's edge ids (see limits.predict_limit).
    """
    tag: FamilyTag
    parameters: dict = field(default_factory=dict)

    def __str__(self):
        if self.tag is FamilyTag.TWO_PATHS:
            return f"TwoPaths({self.parameters['p']},{self.parameters['q']})"
        if self.tag is FamilyTag.TREE_LIKE:
            return f"TreeLike(multiplicity={self.parameters['multiplicity']})"
        return self.tag.value


@dataclass(frozen=True)
class PathCatalog:
    """All self-avoiding nest->food paths, as edge-id sequences."""
    paths: tuple          # tuple of tuples of edge ids
    count: int            # number of self-avoiding paths
    max_length: int       # longest path, in edges
    nest_degree: int      # incident edge slots at the nest, parallel edges counted


# ---------------------------------------------------------------------------
# text format


def parse_graph(text: str) -> MarkedGraph:
    """Parse the line-oriented graph format.

    Lines: `node <id> [nest|food]`, `edge <id> <u> <v>`; `#` starts a
    comment; blank lines are ignored. Exactly one nest and one food marker
    are required.
    """
    g, params = _parse_lines(text, allow_params=False)
    return g


def parse_experiment(text: str):
    """Parse a graph plus `param <key> <value>` lines.

    Returns (MarkedGraph, params) where params maps key -> raw string value.
    """
    return _parse_lines(text, allow_params=True)


def _parse_lines(text, allow_params):
    nodes, edges, params = [], [], {}
    nest = food = None
    edge_ids, node_ids = set(), set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "node":
            if len(tok) not in (2, 3):
                raise ParseError("expected `node <id> [nest|food]`", line_no)
            nid = tok[1]
            if nid in node_ids:
                raise ParseError(f"duplicate node id {nid!r}", line_no)
            node_ids.add(nid)
            nodes.append(nid)
            if len(tok) == 3:
                marker = tok[2]
                if marker == "nest":
                    if nest is not None:
                        raise ParseError("second nest marker", line_no)
                    nest = nid
                elif marker == "food":
                    if food is not None:
                        raise ParseError("second food marker", line_no)
                    food = nid
                else:
                    raise ParseError(f"unknown marker {marker!r}", line_no)
        elif kind == "edge":
            if len(tok) != 4:
                raise ParseError("expected `edge <id> <u> <v>`", line_no)
            eid, u, v = tok[1:]
            if eid in edge_ids:
                raise ParseError(f"duplicate edge id {eid!r}", line_no)
            edge_ids.add(eid)
            if u == v:
                raise ParseError(f"edge {eid!r} is a self-loop", line_no)
            for x in (u, v):
                if x not in node_ids:
                    raise ParseError(f"edge {eid!r} uses undeclared node {x!r}", line_no)
            edges.append((eid, u, v))
        elif kind == "param" and allow_params:
            if len(tok) != 3:
                raise ParseError("expected `param <key> <value>`", line_no)
            params[tok[1]] = tok[2]
        else:
            raise ParseError(f"unknown directive {kind!r}", line_no)
    if nest is None:
        raise ParseError("missing nest marker")
    if food is None:
        raise ParseError("missing food marker")
    try:
        g = MarkedGraph(nodes, edges, nest, food)
    except GraphError as exc:
        raise ParseError(str(exc)) from exc
    return g, params


def serialize_graph(g: MarkedGraph) -> str:
    """Canonical text form: sorted node lines, then edges in declaration order."""
    lines = []
    for x in g.nodes:
        marker = ""
        if x == g.nest:
            marker = " nest"
        elif x == g.food:
            marker = " food"
        lines.append(f"node {x}{marker}")
    for eid, u, v in g.edges:
        lines.append(f"edge {eid} {u} {v}")
    return "\n".join(lines) + "\n"


def graph_hash(g: MarkedGraph) -> str:
    return hashlib.sha256(serialize_graph(g).encode()).hexdigest()


# ---------------------------------------------------------------------------
# classification


def classify(g: MarkedGraph) -> GraphFamily:
    """Most specific family tag for g; General when nothing matches."""
    for probe in (_match_cone, _match_losange, _match_tree_like, _match_two_paths):
        fam = probe(g)
        if fam is not None:
            return fam
    return GraphFamily(FamilyTag.GENERAL)


def _pair_key(u, v):
    return (u, v) if u <= v else (v, u)


def _match_cone(g):
    if len(g.nodes) != 3 or len(g.edges) != 4:
        return None
    (mid,) = [x for x in g.nodes if x not in (g.nest, g.food)]
    direct, bundle, exit_ = [], [], []
    for eid, u, v in g.edges:
        key = _pair_key(u, v)
        if key == _pair_key(g.nest, g.food):
            direct.append(eid)
        elif key == _pair_key(g.nest, mid):
            bundle.append(eid)
        elif key == _pair_key(mid, g.food):
            exit_.append(eid)
        else:
            return None
    if len(direct) == 1 and len(bundle) == 2 and len(exit_) == 1:
        return GraphFamily(FamilyTag.CONE, {
            "direct": direct[0],
            "bundle": tuple(sorted(bundle)),
            "exit": exit_[0],
        })
    return None


def _match_losange(g):
    if len(g.nodes) != 4 or len(g.edges) != 5:
        return None
    inner = sorted(x for x in g.nodes if x not in (g.nest, g.food))
    p, q = inner
    wanted = {
        _pair_key(g.nest, p): "nest_p",
        _pair_key(p, g.food): "p_food",
        _pair_key(p, q): "cross",
        _pair_key(g.nest, q): "nest_q",
        _pair_key(q, g.food): "q_food",
    }
    roles = {}
    for eid, u, v in g.edges:
        role = wanted.get(_pair_key(u, v))
        if role is None or role in roles:
            return None
        roles[role] = eid
    if len(roles) != 5:
        return None
    return GraphFamily(FamilyTag.LOSANGE, {"roles": roles})


def _match_tree_like(g):
    """Tree after deleting food and its edges, plus a direct nest-food bundle."""
    direct = [eid for eid, u, v in g.edges
              if _pair_key(u, v) == _pair_key(g.nest, g.food)]
    if not direct:
        return None
    rest_nodes = [x for x in g.nodes if x != g.food]
    rest_edges = [(eid, u, v) for eid, u, v in g.edges
                  if u != g.food and v != g.food]
    # a tree on k nodes has k-1 edges and is connected
    if len(rest_edges) != len(rest_nodes) - 1:
        return None
    adj = {x: [] for x in rest_nodes}
    for _, u, v in rest_edges:
        adj[u].append(v)
        adj[v].append(u)
    stack, seen = [g.nest], {g.nest}
    depth = {g.nest: 0}
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                depth[y] = depth[x] + 1
                stack.append(y)
    if len(seen) != len(rest_nodes):
        return None
    return GraphFamily(FamilyTag.TREE_LIKE, {
        "multiplicity": len(direct),
        "direct": tuple(sorted(direct)),
        "tree_depth": max(depth.values()) if depth else 0,
    })


def _chain_from(g, start_eid, start_next):
    """Follow a degree-2 chain from the nest until food; None if it is not one."""
    chain = [start_eid]
    prev, cur = g.nest, start_next
    while cur != g.food:
        if len(chain) > len(g.edges) or g.degree(cur) != 2:
            return None
        nxt = [(eid, y) for eid, y in g.adjacency[cur] if eid != chain[-1]]
        if len(nxt) != 1:
            return None
        eid, y = nxt[0]
        if y == prev and y != g.food:
            return None
        chain.append(eid)
        prev, cur = cur, y
    return chain


def _match_two_paths(g):
    if g.degree(g.nest) != 2 or g.degree(g.food) != 2:
        return None
    chains = []
    for eid, y in g.adjacency[g.nest]:
        chain = _chain_from(g, eid, y)
        if chain is None:
            return None
        chains.append(chain)
    if len(chains) != 2:
        return None
    a, b = chains
    if len(a) < 2 or len(b) < 2:
        return None  # a length-1 branch makes the graph tree-like instead
    internal = set()
    for chain in chains:
        nodes_on = set()
        for eid in chain:
            nodes_on.update(g.endpoints(eid))
        nodes_on -= {g.nest, g.food}
        if nodes_on & internal:
            return None
        internal |= nodes_on
    if len(set(a) | set(b)) != len(g.edges):
        return None
    if internal | {g.nest, g.food} != set(g.nodes):
        return None
    if (len(a), a[0]) > (len(b), b[0]):
        a, b = b, a
    return GraphFamily(FamilyTag.TWO_PATHS, {
        "p": len(a), "q": len(b),
        "a_edges": tuple(a), "b_edges": tuple(b),
    })


# ---------------------------------------------------------------------------
# self-avoiding paths


def enumerate_paths(g: MarkedGraph, max_paths: int = 10 ** 6) -> PathCatalog:
    """Exhaustive depth-first enumeration of simple nest->food paths.

    Parallel edges yield distinct paths. Raises PathLimitError beyond
    max_paths (the count only feeds bounds, so huge graphs may skip it).
    """
    paths = []
    visited = {g.nest}
    trail = []

    def dfs(x):
        for eid, y in g.adjacency[x]:
            if y == g.food:
                paths.append(tuple(trail) + (eid,))
                if len(paths) > max_paths:
                    raise PathLimitError(
                        f"more than {max_paths} self-avoiding paths")
            elif y not in visited:
                visited.add(y)
                trail.append(eid)
                dfs(y)
                trail.pop()
                visited.remove(y)

    dfs(g.nest)
    return PathCatalog(
        paths=tuple(paths),
        count=len(paths),
        max_length=max(len(p) for p in paths),
        nest_degree=g.degree(g.nest),
    )


# ---------------------------------------------------------------------------
# generators for the proven families


def single_edge_graph() -> MarkedGraph:
    return MarkedGraph(["N", "F"], [("a", "N", "F")], "N", "F")


def cone_graph() -> MarkedGraph:
    """Direct nest-food edge, a double edge to the middle node, one exit edge."""
    return MarkedGraph(
        ["N", "A", "F"],
        [("1", "N", "F"), ("2", "N", "A"), ("3", "N", "A"), ("4", "A", "F")],
        "N", "F",
    )


def losange_graph() -> MarkedGraph:
    return MarkedGraph(
        ["N", "P2", "P5", "F"],
        [("1", "N", "P2"), ("2", "P2", "F"), ("3", "P2", "P5"),
         ("4", "N", "P5"), ("5", "P5", "F")],
        "N", "F",
    )


def two_paths_graph(p: int, q: int) -> MarkedGraph:
    """Two internally disjoint nest-food paths of lengths p and q."""
    if p < 1 or q < 1:
        raise GraphError("path lengths must be at least 1")
    nodes = ["N", "F"]
    edges = []
    prev = "N"
    for k in range(1, p + 1):
        cur = "F" if k == p else f"A{k}"
        if cur != "F":
            nodes.append(cur)
        edges.append((f"a{k}", prev, cur))
        prev = cur
    prev = "N"
    for k in range(1, q + 1):
        cur = "F" if k == q else f"B{k}"
        if cur != "F":
            nodes.append(cur)
        edges.append((f"b{k}", prev, cur))
        prev = cur
    return MarkedGraph(nodes, edges, "N", "F")


def tree_like_graph(depth: int, branching: int = 1,
                    nf_multiplicity: int = 1) -> MarkedGraph:
    """Tree-like graph: a rooted tree from the nest whose leaves connect to
    food, plus nf_multiplicity direct nest-food edges.

    depth is the length (in edges) of the nest->food route through the
    tree, so depth=2 is the smallest graph with an internal node.
    """
    if depth < 1:
        raise GraphError("depth must be at least 1")
    if branching < 1:
        raise GraphError("branching must be at least 1")
    nodes = ["N", "F"]
    edges = []
    if nf_multiplicity == 1:
        edges.append(("a", "N", "F"))
    else:
        edges.extend((f"a{k}", "N", "F") for k in range(1, nf_multiplicity + 1))
    level = ["N"]
    serial = 0
    for d in range(1, depth):
        nxt = []
        for parent in level:
            for _ in range(branching):
                serial += 1
                child = f"v{serial}"
                nodes.append(child)
                edges.append((f"t{serial}", parent, child))
                nxt.append(child)
        level = nxt
    for k, leaf in enumerate(level, start=1):
        if leaf == "N":
            continue  # depth=1 degenerates to extra direct edges; skip
        edges.append((f"f{k}", leaf, "F"))
    return MarkedGraph(nodes, edges, "N", "F")
