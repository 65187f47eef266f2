"""Trace probabilities and the reinforcement drift field.

p_e(w) is the probability that edge e is crossed at least once by a
weighted random walk started at the nest and absorbed at the food node.
The drift F(w) = p(w) - w drives the normalized weight process; its
zeros are the candidate limits of the reinforcement dynamics.

Zero-weight edges are treated as deleted, matching the walk semantics:
an edge of weight zero is never crossed, so p_e = 0 for it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import linprog

from .electrical import _component, _positive_adjacency
from .graph import MarkedGraph, PathCatalog

LINSOLVE_TOL = 1e-12


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class FieldEvaluation:
    """Per-edge trace probabilities and their drift.

    p maps edge id -> P(edge in trace), F maps edge id -> p_e - w_e.
    """
    p: dict
    F: dict


def _weights(g: MarkedGraph, w) -> dict:
    """Coerce w (mapping by edge id, or sequence in g.edges order) to a dict."""
    if isinstance(w, Mapping):
        unknown = set(map(str, w)) - set(g.edge_ids)
        if unknown:
            raise FieldError(f"weight given for unknown edge {sorted(unknown)[0]!r}")
        try:
            vals = {e: float(w[e]) for e in g.edge_ids}
        except KeyError as exc:
            raise FieldError(f"missing weight for edge {exc.args[0]!r}") from None
    else:
        seq = [float(x) for x in w]
        if len(seq) != len(g.edge_ids):
            raise FieldError(
                f"expected {len(g.edge_ids)} weights, got {len(seq)}")
        vals = dict(zip(g.edge_ids, seq))
    for e, x in vals.items():
        if not np.isfinite(x) or x < 0:
            raise FieldError(f"weight of edge {e!r} must be finite and >= 0")
    return vals


def exact_trace_probability(g: MarkedGraph, w, e) -> float:
    """P(edge e is crossed before absorption), by one linear solve.

    The walk is absorbed the moment it crosses e (success) or steps onto
    the food node through any other edge (failure). Crossing is checked
    before food absorption, so a food-incident target edge still counts.
    """
    wm = _weights(g, w)
    e = str(e)
    if e not in g.edge_index:
        raise FieldError(f"unknown edge {e!r}")
    adj = _positive_adjacency(g, wm)
    comp = _component(adj, g.nest)
    if g.food not in comp:
        raise FieldError("food is not reachable from the nest under these weights")
    if wm[e] <= 0.0:
        return 0.0
    u, _ = g.endpoints(e)
    if u not in comp:
        # w_e > 0, so both endpoints sit in the same component
        return 0.0

    transient = sorted(x for x in comp if x != g.food)
    idx = {x: k for k, x in enumerate(transient)}
    m = len(transient)
    a = np.eye(m)
    b = np.zeros(m)
    for x in transient:
        k = idx[x]
        pi = sum(wf for _, _, wf in adj[x])
        for eid, y, wf in adj[x]:
            q = wf / pi
            if eid == e:
                b[k] += q
            elif y != g.food:
                a[k, idx[y]] -= q
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise FieldError(f"trace-probability system is singular: {exc}") from None
    if np.linalg.norm(a @ h - b, ord=np.inf) > LINSOLVE_TOL:
        raise FieldError("trace-probability solve failed the residual check")
    val = float(h[idx[g.nest]])
    if val < -1e-9 or val > 1.0 + 1e-9:
        raise FieldError(f"trace probability out of range: {val}")
    return min(1.0, max(0.0, val))


def field(g: MarkedGraph, w) -> FieldEvaluation:
    """Evaluate p and F = p - w on every edge via the general solver."""
    wm = _weights(g, w)
    p = {e: exact_trace_probability(g, wm, e) for e in g.edge_ids}
    f = {e: p[e] - wm[e] for e in g.edge_ids}
    return FieldEvaluation(p=p, F=f)


# ---------------------------------------------------------------------------
# closed forms
#
# Each family's formulas are algebraic in w and scale-invariant; they agree
# with exact_trace_probability on the family graph (tested to 1e-10).


def _family_vec(w, ids, family):
    if isinstance(w, Mapping):
        try:
            vals = [float(w[e]) for e in ids]
        except KeyError as exc:
            raise FieldError(
                f"missing weight for {family} edge {exc.args[0]!r}") from None
    else:
        vals = [float(x) for x in w]
        if len(vals) != len(ids):
            raise FieldError(
                f"{family} closed form expects {len(ids)} weights, got {len(vals)}")
    for e, x in zip(ids, vals):
        if not np.isfinite(x) or x < 0:
            raise FieldError(f"weight of edge {e!r} must be finite and >= 0")
    return vals


CONE_EDGE_IDS = ("1", "2", "3", "4")
LOSANGE_EDGE_IDS = ("1", "2", "3", "4", "5")


def closed_form_cone(w) -> FieldEvaluation:
    """Drift on the four-edge graph: direct edge 1, bundle 2/3, exit 4.

    Every walk is absorbed crossing edge 1 or edge 4, so p4 = 1 - p1 and
    F4 = -F1 identically.
    """
    w1, w2, w3, w4 = _family_vec(w, CONE_EDGE_IDS, "cone")
    bundle = w2 + w3
    if w1 <= 0 and (bundle <= 0 or w4 <= 0):
        raise FieldError("food unreachable: direct edge and bundle route both dead")
    pi_n = w1 + w2 + w3
    pi_a = w2 + w3 + w4
    p2 = 0.0 if w2 == 0 else w2 * (w2 + 2 * w3 + w4) / (pi_n * pi_a - w3 * w3)
    p3 = 0.0 if w3 == 0 else w3 * (w3 + 2 * w2 + w4) / (pi_n * pi_a - w2 * w2)
    if w1 == 0:
        p1 = 0.0
    else:
        # conductance of the bundle-exit route, in series
        through = bundle * w4 / (bundle + w4) if bundle + w4 > 0 else 0.0
        p1 = w1 / (w1 + through)
    p4 = 1.0 - p1
    p = dict(zip(CONE_EDGE_IDS, (p1, p2, p3, p4)))
    f = {e: p[e] - x for e, x in zip(CONE_EDGE_IDS, (w1, w2, w3, w4))}
    return FieldEvaluation(p=p, F=f)


def _losange_reachable(w1, w2, w3, w4, w5):
    via_p2 = w1 > 0 and (w2 > 0 or (w3 > 0 and w5 > 0))
    via_p5 = w4 > 0 and (w5 > 0 or (w3 > 0 and w2 > 0))
    return via_p2 or via_p5


def _losange_p12(w1, w2, w3, w4, w5):
    """p1 and p2 for one orientation; the mirror supplies p4 and p5."""
    pi_p2 = w1 + w2 + w3
    pi_p5 = w3 + w4 + w5
    if w1 == 0:
        p1 = 0.0
    elif w4 == 0:
        p1 = 1.0
    else:
        num = (w1 / pi_p5) * (w4 / (w1 + w4) + w3 / pi_p2)
        den = 1.0 - w4 * w4 / ((w1 + w4) * pi_p5) - w3 * w3 / (pi_p2 * pi_p5)
        p1 = w1 / (w1 + w4) + (w4 / (w1 + w4)) * num / den
    if w2 == 0:
        p2 = 0.0
    else:
        den2 = w3 + w2 * w5 + w1 * w4 / (w1 + w4)
        if den2 > 0:
            p2 = w2 * (w1 * pi_p5 + w3 * w4) / ((w1 + w4) * den2)
        else:
            # w3 = w5 = 0 and one of w1, w4 = 0; reachability forces the
            # nest-1-2-food route alive, and edge 5 is dead
            p2 = 1.0
    return p1, p2


def closed_form_losange(w) -> FieldEvaluation:
    """Drift on the five-edge graph (two length-2 routes joined by a cross edge).

    Edges 2 and 5 touch the food node, and each walk is absorbed crossing
    exactly one of them, so p2 + p5 = 1. The exit-edge formula is exact on
    the slice w2 + w5 = 1; since p is scale invariant, any input is first
    rescaled onto that slice.
    """
    w1, w2, w3, w4, w5 = _family_vec(w, LOSANGE_EDGE_IDS, "losange")
    if w1 + w4 <= 0:
        raise FieldError("nest is isolated: edges 1 and 4 both have weight zero")
    if not _losange_reachable(w1, w2, w3, w4, w5):
        raise FieldError("food is not reachable from the nest under these weights")
    s = w2 + w5
    z1, z2, z3, z4, z5 = w1 / s, w2 / s, w3 / s, w4 / s, w5 / s
    p1, p2 = _losange_p12(z1, z2, z3, z4, z5)
    p4, p5 = _losange_p12(z4, z5, z3, z1, z2)
    lam1, lam4 = losange_lambdas(w)
    if w3 == 0:
        p3 = 0.0
    else:
        p3 = w3 * (lam1 + lam4) / (lam1 * (w3 + w2) + lam4 * (w3 + w5))
    p = dict(zip(LOSANGE_EDGE_IDS, (p1, p2, p3, p4, p5)))
    f = {e: p[e] - x for e, x in zip(LOSANGE_EDGE_IDS, (w1, w2, w3, w4, w5))}
    return FieldEvaluation(p=p, F=f)


def losange_lambdas(w):
    """The two escape weights: nest edge against its route total.

    lam1 = w1/(w1+w2+w3) and lam4 = w4/(w3+w4+w5), each 0 when its
    numerator vanishes.
    """
    w1, w2, w3, w4, w5 = _family_vec(w, LOSANGE_EDGE_IDS, "losange")
    lam1 = w1 / (w1 + w2 + w3) if w1 > 0 else 0.0
    lam4 = w4 / (w3 + w4 + w5) if w4 > 0 else 0.0
    return lam1, lam4


def losange_factored_f2(w) -> float:
    """F2 in product form, valid on the slice w2 + w5 = 1.

    F2 = w2*w5*(w1/(w1+w4) - w2) / (w3 + w2*w5 + w1*w4/(w1+w4)), which
    makes the sign of F2 that of w1/(w1+w4) - w2 whenever w2*w5 > 0.
    """
    w1, w2, w3, w4, w5 = _family_vec(w, LOSANGE_EDGE_IDS, "losange")
    if w1 + w4 <= 0:
        raise FieldError("nest is isolated: edges 1 and 4 both have weight zero")
    den = w3 + w2 * w5 + w1 * w4 / (w1 + w4)
    if den <= 0:
        raise FieldError("degenerate losange weights: shared denominator is zero")
    return w2 * w5 * (w1 / (w1 + w4) - w2) / den


def two_paths_edge_ids(p: int, q: int) -> tuple:
    return tuple(f"a{k}" for k in range(1, p + 1)) + tuple(
        f"b{k}" for k in range(1, q + 1))


def _harmonic_prefixes(vals):
    """S_k = 1/(sum of reciprocals of the first k entries); 0 past any zero."""
    out = []
    acc = 0.0
    dead = False
    for x in vals:
        if dead or x <= 0:
            dead = True
            out.append(0.0)
        else:
            acc += 1.0 / x
            out.append(1.0 / acc)
    return out


def closed_form_two_paths(p: int, q: int, w) -> FieldEvaluation:
    """Drift on the cycle made of two nest-food chains of lengths p and q.

    Chain edges are a1..ap and b1..bq, numbered from the nest. The trace
    probability of a chain edge is a ratio of harmonic prefix sums: the
    edge's own chain prefix against the full opposite chain.
    """
    if p < 1 or q < 1:
        raise FieldError("chain lengths must be >= 1")
    ids = two_paths_edge_ids(p, q)
    vals = _family_vec(w, ids, "two-paths")
    wa, wb = vals[:p], vals[p:]
    sa = _harmonic_prefixes(wa)
    sb = _harmonic_prefixes(wb)

    def ratio(own, opposite):
        tot = own + opposite
        # both chains dead past this point: the edge is unreachable
        return own / tot if tot > 0 else 0.0

    pa = [ratio(sa[k], sb[q - 1]) for k in range(p)]
    pb = [ratio(sb[k], sa[p - 1]) for k in range(q)]
    probs = dict(zip(ids, pa + pb))
    f = {e: probs[e] - x for e, x in zip(ids, vals)}
    return FieldEvaluation(p=probs, F=f)


# ---------------------------------------------------------------------------
# vectorized trace probabilities for recorded weight histories
#
# Rows are nonnegative; zero coordinates take the same boundary values as
# the scalar forms, with the caller responsible for food reachability.
# Scale invariance of p means raw integer counts can be passed directly.


def cone_probabilities(rows: np.ndarray) -> np.ndarray:
    """(m, 4) nonnegative weight rows -> (m, 4) trace probabilities."""
    rows = np.asarray(rows, dtype=float)
    w1, w2, w3, w4 = rows.T
    with np.errstate(divide="ignore", invalid="ignore"):
        pi_n = w1 + w2 + w3
        pi_a = w2 + w3 + w4
        p2 = np.where(w2 > 0,
                      w2 * (w2 + 2 * w3 + w4) / (pi_n * pi_a - w3 * w3), 0.0)
        p3 = np.where(w3 > 0,
                      w3 * (w3 + 2 * w2 + w4) / (pi_n * pi_a - w2 * w2), 0.0)
        bundle = w2 + w3
        through = np.where(bundle + w4 > 0, bundle * w4 / (bundle + w4), 0.0)
        p1 = np.where(w1 > 0, w1 / (w1 + through), 0.0)
    return np.stack([p1, p2, p3, 1.0 - p1], axis=1)


def losange_probabilities(rows: np.ndarray) -> np.ndarray:
    """(m, 5) nonnegative weight rows -> (m, 5) trace probabilities.

    Rows are rescaled onto the exit slice w2 + w5 = 1 first (the exit
    formula is exact there and p is scale invariant); a row with
    w2 = w5 = 0 has unreachable food and comes back as NaN.
    """
    rows = np.asarray(rows, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rows = rows / (rows[:, 1] + rows[:, 4])[:, None]

    def p12(w1, w2, w3, w4, w5):
        pi_p2 = w1 + w2 + w3
        pi_p5 = w3 + w4 + w5
        s = w1 + w4
        num = (w1 / pi_p5) * (w4 / s + w3 / pi_p2)
        den = 1.0 - w4 * w4 / (s * pi_p5) - w3 * w3 / (pi_p2 * pi_p5)
        p1 = w1 / s + (w4 / s) * num / den
        p1 = np.where(w4 == 0, 1.0, np.where(w1 == 0, 0.0, p1))
        den2 = s * (w3 + w2 * w5 + w1 * w4 / s)
        p2 = np.where(w2 > 0,
                      np.where(den2 > 0,
                               w2 * (w1 * pi_p5 + w3 * w4) / den2, 1.0), 0.0)
        return p1, p2

    w1, w2, w3, w4, w5 = rows.T
    with np.errstate(divide="ignore", invalid="ignore"):
        p1, p2 = p12(w1, w2, w3, w4, w5)
        p4, p5 = p12(w4, w5, w3, w1, w2)
        lam1 = np.where(w1 > 0, w1 / (w1 + w2 + w3), 0.0)
        lam4 = np.where(w4 > 0, w4 / (w3 + w4 + w5), 0.0)
        den3 = lam1 * (w3 + w2) + lam4 * (w3 + w5)
        p3 = np.where((w3 > 0) & (den3 > 0),
                      w3 * (lam1 + lam4) / den3, 0.0)
    return np.stack([p1, p2, p3, p4, p5], axis=1)


def two_paths_probabilities(p: int, q: int, rows: np.ndarray) -> np.ndarray:
    """(m, p+q) nonnegative weight rows -> trace probabilities, chains a then b."""
    rows = np.asarray(rows, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        # a zero weight kills its chain suffix: the harmonic prefix is 0 past it
        sa = 1.0 / np.cumsum(1.0 / rows[:, :p], axis=1)
        sb = 1.0 / np.cumsum(1.0 / rows[:, p:], axis=1)
        da = sa + sb[:, -1:]
        db = sb + sa[:, -1:]
        pa = np.where(da > 0, sa / da, 0.0)
        pb = np.where(db > 0, sb / db, 0.0)
    return np.concatenate([pa, pb], axis=1)


# ---------------------------------------------------------------------------
# state space


def membership_E(g: MarkedGraph, catalog: PathCatalog, w, tol: float = 1e-9) -> bool:
    """Test membership in the convex state space of normalized weights.

    The space is the convex hull of the per-path pieces E_i, where E_i
    requires nest mass pi_w(N) >= 1 and weight >= 1/(path count) on every
    edge of path i. Single-piece membership is checked directly; the hull
    test is a linear feasibility problem over the convex decomposition.
    """
    wm = _weights(g, w)
    vec = np.array([wm[e] for e in g.edge_ids])
    if vec.min() < -tol or vec.max() > 1.0 + tol:
        return False
    vec = np.clip(vec, 0.0, 1.0)
    count = catalog.count
    if count == 0:
        raise FieldError("graph has no nest-food path")
    floor = 1.0 / count
    nest_edges = [eid for eid, _ in g.adjacency[g.nest]]
    pi_n = sum(wm[e] for e in nest_edges)
    if pi_n >= 1.0 - tol:
        for path in catalog.paths:
            if min(wm[e] for e in path) >= floor - tol:
                return True
    if count == 1:
        return False

    # Feasibility of w = sum_i lambda_i w_i with w_i in E_i: substitute
    # y_i = lambda_i * w_i, which linearizes every E_i constraint.
    ne = len(g.edge_ids)
    pos = g.edge_index
    nvar = count * (1 + ne)

    def lam(i):
        return i * (1 + ne)

    def y(i, e):
        return i * (1 + ne) + 1 + pos[e]

    a_eq = np.zeros((1 + ne, nvar))
    b_eq = np.zeros(1 + ne)
    for i in range(count):
        a_eq[0, lam(i)] = 1.0
    b_eq[0] = 1.0
    for e in g.edge_ids:
        for i in range(count):
            a_eq[1 + pos[e], y(i, e)] = 1.0
        b_eq[1 + pos[e]] = vec[pos[e]]

    rows_ub = []
    rhs_ub = []
    for i in range(count):
        for e in g.edge_ids:
            row = np.zeros(nvar)        # y_{i,e} <= lambda_i
            row[y(i, e)] = 1.0
            row[lam(i)] = -1.0
            rows_ub.append(row)
            rhs_ub.append(0.0)
        row = np.zeros(nvar)            # pi(N) >= lambda_i within piece i
        row[lam(i)] = 1.0
        for e in nest_edges:
            row[y(i, e)] -= 1.0
        rows_ub.append(row)
        rhs_ub.append(0.0)
        for e in catalog.paths[i]:      # path floor within piece i
            row = np.zeros(nvar)
            row[lam(i)] = floor
            row[y(i, e)] = -1.0
            rows_ub.append(row)
            rhs_ub.append(0.0)

    res = linprog(np.zeros(nvar), A_ub=np.array(rows_ub), b_ub=np.array(rhs_ub),
                  A_eq=a_eq, b_eq=b_eq, bounds=[(0.0, 1.0)] * nvar,
                  method="highs")
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise FieldError(f"membership feasibility solve failed: {res.message}")


def lipschitz_bound(g: MarkedGraph, catalog: PathCatalog) -> float:
    """Graph constant bounding ||F(w) - F(w')||_inf / ||w - w'||_1 on the state space."""
    s = catalog.count
    return 1.0 + 2.0 * (1.0 + catalog.nest_degree * catalog.max_length * s * s)
