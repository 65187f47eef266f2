import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from antflow.electrical import effective_conductance
from antflow.field import (
    FieldError,
    closed_form_cone,
    closed_form_losange,
    closed_form_two_paths,
    cone_probabilities,
    exact_trace_probability,
    field,
    lipschitz_bound,
    losange_factored_f2,
    losange_probabilities,
    membership_E,
    two_paths_edge_ids,
    two_paths_probabilities,
)
from antflow.graph import (
    MarkedGraph,
    cone_graph,
    enumerate_paths,
    losange_graph,
    single_edge_graph,
    two_paths_graph,
)
from antflow.limits import contraction_fp, losange_root

ORACLE_TOL = 1e-10


def cone_slice_point(rng):
    """Random point of the invariant cone slice w1 + w4 = 1."""
    w4 = float(rng.uniform(0.0, 0.5))
    return {"1": 1.0 - w4, "2": float(rng.uniform(0.05, 1.0)),
            "3": float(rng.uniform(0.05, 1.0)), "4": w4}


def losange_slice_point(rng):
    w2 = float(rng.uniform(0.05, 0.95))
    return {"1": float(rng.uniform(0.3, 1.0)), "2": w2,
            "3": float(rng.uniform(0.0, 1.0)),
            "4": float(rng.uniform(0.3, 1.0)), "5": 1.0 - w2}


def two_paths_point(p, q, rng):
    ids = two_paths_edge_ids(p, q)
    top = float(rng.uniform(0.1, 0.9))
    w = {}
    for chain, first in ((ids[:p], top), (ids[p:], 1.0 - top)):
        # weights decrease along the chain away from the nest
        levels = np.sort(rng.uniform(first, 1.0, size=len(chain)))[::-1]
        levels[-1] = first
        for eid, val in zip(chain, levels):
            w[eid] = float(val)
    return w


# ---------------------------------------------------------------------------
# exact solver


def test_parallel_edges_ratio():
    g = MarkedGraph(["N", "F"], [("a", "N", "F"), ("b", "N", "F")], "N", "F")
    w = {"a": 0.3, "b": 1.2}
    assert exact_trace_probability(g, w, "a") == pytest.approx(0.3 / 1.5, abs=1e-12)
    assert exact_trace_probability(g, w, "b") == pytest.approx(1.2 / 1.5, abs=1e-12)


def test_direct_edge_vs_rest_conductance():
    """For an edge joining nest and food directly, the trace probability is
    its weight against the effective conductance of everything else."""
    g = cone_graph()
    rng = np.random.default_rng(5)
    for _ in range(20):
        w = {e: float(rng.uniform(0.1, 3.0)) for e in g.edge_ids}
        rest = MarkedGraph(["N", "A", "F"],
                           [("2", "N", "A"), ("3", "N", "A"), ("4", "A", "F")],
                           "N", "F")
        cond = effective_conductance(rest, w, "N", "F")
        expect = w["1"] / (w["1"] + cond)
        assert exact_trace_probability(g, w, "1") == pytest.approx(expect, abs=1e-11)


def test_cone_fixed_point_value():
    p2 = exact_trace_probability(cone_graph(), {"1": 1.0, "2": 1 / 3, "3": 1 / 3, "4": 0.0}, "2")
    assert p2 == pytest.approx(1 / 3, abs=1e-12)


def test_zero_weight_edge_has_zero_probability():
    g = cone_graph()
    assert exact_trace_probability(g, {"1": 1.0, "2": 0.0, "3": 1.0, "4": 1.0}, "2") == 0.0


def test_unreachable_food_is_an_error():
    g = single_edge_graph()
    with pytest.raises(FieldError):
        exact_trace_probability(g, {"a": 0.0}, "a")


def brute_force_probability(g, w, target, depth=200, floor=1e-15):
    """Walk-tree expansion of P(target edge crossed before food)."""
    adj = {x: [] for x in g.nodes}
    for eid, u, v in g.edges:
        if w[eid] > 0:
            adj[u].append((eid, v, w[eid]))
            adj[v].append((eid, u, w[eid]))
    hit = [0.0]
    lost = [0.0]

    def go(node, crossed, prob, steps):
        if node == g.food:
            if crossed:
                hit[0] += prob
            return
        if steps == depth or prob < floor:
            lost[0] += prob
            return
        total = sum(we for _, _, we in adj[node])
        for eid, nxt, we in adj[node]:
            go(nxt, crossed or eid == target, prob * we / total, steps + 1)

    go(g.nest, False, 1.0, 0)
    assert lost[0] < 1e-8
    return hit[0]


@pytest.mark.parametrize("eid", ["1", "2", "4"])
def test_exhaustive_expansion_matches_solver(eid):
    g = cone_graph()
    w = {"1": 5.0, "2": 1.0, "3": 1.0, "4": 5.0}  # fast absorption, thin tail
    assert exact_trace_probability(g, w, eid) == pytest.approx(
        brute_force_probability(g, w, eid), abs=1e-6)


def test_field_evaluation_shape():
    g = losange_graph()
    w = {"1": 0.8, "2": 0.5, "3": 0.2, "4": 0.7, "5": 0.5}
    ev = field(g, w)
    assert set(ev.p) == set(g.edge_ids) and set(ev.F) == set(g.edge_ids)
    for e in g.edge_ids:
        assert 0.0 <= ev.p[e] <= 1.0
        assert ev.F[e] == ev.p[e] - w[e]  # exact, no rounding


def test_field_vanishes_at_known_rest_points():
    wstar = losange_root()
    ev = field(losange_graph(), {"1": wstar, "2": 0.5, "3": 0.5, "4": wstar, "5": 0.5})
    assert max(abs(v) for v in ev.F.values()) < ORACLE_TOL

    r = 2.0 ** -0.5
    ev = field(two_paths_graph(2, 2), {"a1": r, "a2": r * r, "b1": r, "b2": r * r})
    assert max(abs(v) for v in ev.F.values()) < ORACLE_TOL


def test_weight_validation():
    g = cone_graph()
    with pytest.raises(FieldError, match="unknown edge"):
        field(g, {"1": 1, "2": 1, "3": 1, "4": 1, "9": 1})
    with pytest.raises(FieldError, match="missing weight"):
        field(g, {"1": 1, "2": 1, "3": 1})
    with pytest.raises(FieldError, match="expected 4 weights"):
        field(g, [1.0, 1.0])
    with pytest.raises(FieldError, match="finite"):
        field(g, {"1": float("nan"), "2": 1, "3": 1, "4": 1})
    with pytest.raises(FieldError, match=">= 0"):
        field(g, {"1": -0.1, "2": 1, "3": 1, "4": 1})


# ---------------------------------------------------------------------------
# closed forms against the general solver


def test_cone_closed_form_matches_solver():
    g = cone_graph()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(300):
        w = cone_slice_point(rng)
        ev = closed_form_cone(w)
        for e in g.edge_ids:
            worst = max(worst, abs(ev.p[e] - exact_trace_probability(g, w, e)))
    assert worst < ORACLE_TOL


def test_losange_closed_form_matches_solver_any_scale():
    """The exit-edge formula is slice-normalized internally, so raw weights
    at arbitrary scale must agree with the solver too."""
    g = losange_graph()
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(300):
        w = losange_slice_point(rng)
        scale = float(rng.uniform(0.2, 50.0))
        scaled = {e: scale * v for e, v in w.items()}
        ev = closed_form_losange(scaled)
        for e in g.edge_ids:
            worst = max(worst, abs(ev.p[e] - exact_trace_probability(g, w, e)))
    assert worst < ORACLE_TOL


@pytest.mark.parametrize("p,q", [(2, 2), (2, 3), (3, 3), (1, 1), (4, 2)])
def test_two_paths_closed_form_matches_solver(p, q):
    g = two_paths_graph(p, q)
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(150):
        w = two_paths_point(p, q, rng)
        ev = closed_form_two_paths(p, q, w)
        for e in g.edge_ids:
            worst = max(worst, abs(ev.p[e] - exact_trace_probability(g, w, e)))
    assert worst < ORACLE_TOL


def test_single_term_prefix_is_parallel_ratio():
    ev = closed_form_two_paths(1, 1, {"a1": 0.3, "b1": 0.7})
    assert ev.p["a1"] == pytest.approx(0.3, abs=1e-15)
    assert ev.p["b1"] == pytest.approx(0.7, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6),
       st.floats(min_value=0.01, max_value=100.0))
def test_probabilities_are_scale_invariant(seed, c):
    g = losange_graph()
    rng = np.random.default_rng(seed)
    w = {e: float(rng.uniform(0.05, 2.0)) for e in g.edge_ids}
    base = field(g, w).p
    scaled = field(g, {e: c * v for e, v in w.items()}).p
    for e in g.edge_ids:
        assert scaled[e] == pytest.approx(base[e], abs=1e-9)


# ---------------------------------------------------------------------------
# structural identities and sign regions


def test_cone_direct_and_exit_drifts_cancel():
    rng = np.random.default_rng(21)
    for _ in range(100):
        ev = closed_form_cone(cone_slice_point(rng))
        assert ev.F["1"] + ev.F["4"] == pytest.approx(0.0, abs=1e-14)


def test_cone_bundle_sign_region():
    """F2 > 0 exactly when w3(1 - 2 w2) > w2^2 (with w1 = 1, w4 = 0).

    The point (1, 0.1, 0.1, 0) pins the orientation: p2 = 0.1304... > w2,
    so F2 > 0 there, while the swapped reading of the inequality (w2
    against w3^2/(1 - 2 w3) = 0.0125) would call it negative.
    """
    ev = closed_form_cone({"1": 1.0, "2": 0.1, "3": 0.1, "4": 0.0})
    assert ev.p["2"] == pytest.approx(0.1 * 0.3 / (1.2 * 0.2 - 0.01), abs=1e-14)
    assert ev.F["2"] > 0
    assert not 0.1 < 0.1 ** 2 / (1 - 2 * 0.1)

    rng = np.random.default_rng(22)
    for _ in range(200):
        w2, w3 = rng.uniform(0.01, 0.49, size=2)
        ev = closed_form_cone({"1": 1.0, "2": float(w2), "3": float(w3), "4": 0.0})
        assert (ev.F["2"] > 0) == (w3 * (1 - 2 * w2) > w2 * w2)
        assert (ev.F["3"] > 0) == (w2 * (1 - 2 * w3) > w3 * w3)


def test_losange_exit_probabilities_partition():
    rng = np.random.default_rng(23)
    for _ in range(100):
        ev = closed_form_losange(losange_slice_point(rng))
        assert ev.p["2"] + ev.p["5"] == pytest.approx(1.0, abs=1e-12)


def test_losange_sign_lemma():
    # w2 below the nest-side share w1/(w1+w4) forces F2 upward
    rng = np.random.default_rng(24)
    hits = 0
    for _ in range(200):
        w = losange_slice_point(rng)
        ev = closed_form_losange(w)
        share = w["1"] / (w["1"] + w["4"])
        if w["2"] < share:
            hits += 1
            assert ev.F["2"] > 0
    assert hits > 20  # the sampled slice hits the hypothesis often enough


def test_losange_factored_drift_matches_full_form():
    rng = np.random.default_rng(25)
    for _ in range(100):
        w = losange_slice_point(rng)
        ev = closed_form_losange(w)
        assert losange_factored_f2(w) == pytest.approx(ev.F["2"], abs=1e-12)


def test_two_paths_food_edges_partition():
    rng = np.random.default_rng(26)
    for _ in range(50):
        w = two_paths_point(2, 3, rng)
        ev = closed_form_two_paths(2, 3, w)
        assert ev.p["a2"] + ev.p["b3"] == pytest.approx(1.0, abs=1e-12)


def test_losange_needs_live_nest_edge():
    with pytest.raises(FieldError, match="isolated"):
        closed_form_losange({"1": 0.0, "2": 1.0, "3": 1.0, "4": 0.0, "5": 1.0})


# ---------------------------------------------------------------------------
# vectorized forms


def test_batch_forms_match_scalar_forms():
    rng = np.random.default_rng(31)
    cone_rows = np.array([[1.0, 0.3, 0.4, 0.2], [0.5, 1.0, 1.0, 0.5],
                          [1.0, 0.0, 0.4, 0.0]])
    got = cone_probabilities(cone_rows)
    for row, out in zip(cone_rows, got):
        ev = closed_form_cone(row)
        np.testing.assert_allclose(out, [ev.p[e] for e in ("1", "2", "3", "4")],
                                   atol=1e-14)

    los_rows = np.array([[3.0, 2.0, 1.0, 4.0, 5.0], [1.0, 1.0, 1.0, 1.0, 1.0]])
    got = losange_probabilities(los_rows)
    for row, out in zip(los_rows, got):
        ev = closed_form_losange(row)
        np.testing.assert_allclose(out, [ev.p[e] for e in ("1", "2", "3", "4", "5")],
                                   atol=1e-14)

    rows = np.array([[0.8, 0.64, 0.6, 0.36], [0.7, 0.49, 0.51, 0.3]])
    got = two_paths_probabilities(2, 2, rows)
    for row, out in zip(rows, got):
        ev = closed_form_two_paths(2, 2, row)
        np.testing.assert_allclose(out, [ev.p[e] for e in two_paths_edge_ids(2, 2)],
                                   atol=1e-14)


def test_batch_forms_accept_raw_counts():
    # integer count rows at growing scale: probabilities stay put
    base = np.array([[6.0, 4.0, 2.0, 8.0, 10.0]])
    for scale in (1.0, 7.0, 113.0):
        np.testing.assert_allclose(losange_probabilities(base * scale),
                                   losange_probabilities(base), atol=1e-13)


# ---------------------------------------------------------------------------
# state space and Lipschitz constant


def test_membership_basics():
    g = cone_graph()
    cat = enumerate_paths(g)
    assert membership_E(g, cat, {e: 1.0 for e in g.edge_ids})
    assert not membership_E(g, cat, {e: 0.0 for e in g.edge_ids})


def test_membership_convex_hull_point():
    """A mixture of two single-route corners lies in the hull even though
    no single route carries the full floor on its own."""
    g = cone_graph()
    cat = enumerate_paths(g)
    corner_a = {"1": 1.0, "2": 0.0, "3": 0.0, "4": 0.0}
    corner_b = {"1": 0.0, "2": 1.0, "3": 0.0, "4": 1.0}
    mix = {e: 0.5 * corner_a[e] + 0.5 * corner_b[e] for e in g.edge_ids}
    assert membership_E(g, cat, corner_a)
    assert membership_E(g, cat, corner_b)
    assert membership_E(g, cat, mix)


def test_membership_rejects_out_of_box():
    g = cone_graph()
    cat = enumerate_paths(g)
    assert not membership_E(g, cat, {"1": 1.5, "2": 1.0, "3": 1.0, "4": 1.0})


def test_lipschitz_constant_values():
    g1 = single_edge_graph()
    assert lipschitz_bound(g1, enumerate_paths(g1)) == 5.0
    gc = cone_graph()
    assert lipschitz_bound(gc, enumerate_paths(gc)) == 111.0


def sample_in_state_space(g, cat, rng):
    while True:
        w = {e: float(rng.uniform(0.0, 1.0)) for e in g.edge_ids}
        path = cat.paths[rng.integers(cat.count)]
        for e in path:
            w[e] = float(rng.uniform(1.0 / cat.count, 1.0))
        nest_edges = [eid for eid, _ in g.adjacency[g.nest]]
        if sum(w[e] for e in nest_edges) >= 1.0 and membership_E(g, cat, w):
            return w


def test_empirical_lipschitz_ratio_below_bound():
    g = cone_graph()
    cat = enumerate_paths(g)
    bound = lipschitz_bound(g, cat)
    rng = np.random.default_rng(33)
    worst = 0.0
    for _ in range(400):
        wa = sample_in_state_space(g, cat, rng)
        wb = sample_in_state_space(g, cat, rng)
        fa, fb = field(g, wa), field(g, wb)
        num = max(abs(fa.F[e] - fb.F[e]) for e in g.edge_ids)
        den = sum(abs(wa[e] - wb[e]) for e in g.edge_ids)
        if den > 1e-12:
            worst = max(worst, num / den)
    assert worst <= bound
