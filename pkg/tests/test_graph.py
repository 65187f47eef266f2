import pytest
from hypothesis import given, settings, strategies as st

from antflow.graph import (
    FamilyTag,
    GraphError,
    MarkedGraph,
    ParseError,
    PathLimitError,
    classify,
    cone_graph,
    enumerate_paths,
    graph_hash,
    losange_graph,
    parse_experiment,
    parse_graph,
    serialize_graph,
    single_edge_graph,
    tree_like_graph,
    two_paths_graph,
)

CONE_TEXT = """\
# direct edge plus a doubled detour
node N nest
node A
node F food
edge 1 N F
edge 2 N A
edge 3 N A
edge 4 A F
"""


def test_parse_basic():
    g = parse_graph(CONE_TEXT)
    assert g.nest == "N" and g.food == "F"
    assert g.edge_ids == ("1", "2", "3", "4")
    assert g.edges[1] == ("2", "N", "A")


def test_parse_ignores_comments_and_blanks():
    g = parse_graph("\n\n# header\nnode N nest\nnode F food  # trailing\n\nedge a N F\n")
    assert g.edge_ids == ("a",)


@pytest.mark.parametrize("text,line,fragment", [
    ("node N nest\nnode F food\nedgee a N F", 3, "unknown directive"),
    ("node N nest\nnode N food", 2, "duplicate node"),
    ("node N nest\nnode F food\nedge a N N", 3, "self-loop"),
    ("node N nest\nnode F food\nedge a N X", 3, "undeclared node"),
    ("node N nest\nnode F food\nedge a N F\nedge a N F", 4, "duplicate edge"),
    ("node N nest\nnode A nest\nnode F food", 2, "second nest"),
    ("node N nest\nnode F food\nnode X blah", 3, "unknown marker"),
])
def test_parse_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ParseError) as err:
        parse_graph(text)
    assert fragment in str(err.value)
    assert f"line {line}" in str(err.value)


def test_parse_requires_both_markers():
    with pytest.raises(ParseError, match="missing food"):
        parse_graph("node N nest\nnode F")
    with pytest.raises(ParseError, match="missing nest"):
        parse_graph("node N\nnode F food")


def test_param_lines_only_in_experiments():
    text = CONE_TEXT + "param ants 5000\nparam seed 3\n"
    with pytest.raises(ParseError, match="unknown directive 'param'"):
        parse_graph(text)
    g, params = parse_experiment(text)
    assert params == {"ants": "5000", "seed": "3"}
    assert g.edge_ids == ("1", "2", "3", "4")


def test_round_trip_is_identity_on_canonical_form():
    for g in (cone_graph(), losange_graph(), two_paths_graph(2, 3),
              tree_like_graph(3, branching=2)):
        text = serialize_graph(g)
        assert serialize_graph(parse_graph(text)) == text
        assert graph_hash(parse_graph(text)) == graph_hash(g)


def test_hash_distinguishes_markings():
    a = MarkedGraph(["N", "F"], [("e", "N", "F")], "N", "F")
    b = MarkedGraph(["N", "F"], [("e", "N", "F")], "F", "N")
    assert graph_hash(a) != graph_hash(b)


def test_parallel_edges_are_distinct():
    g = MarkedGraph(["N", "F"], [("a", "N", "F"), ("b", "N", "F")], "N", "F")
    assert len(g.edges) == 2
    cat = enumerate_paths(g)
    assert cat.count == 2


# ---------------------------------------------------------------------------
# classification


def test_classify_builtin_families():
    assert classify(cone_graph()).tag is FamilyTag.CONE
    assert classify(losange_graph()).tag is FamilyTag.LOSANGE
    assert classify(two_paths_graph(2, 3)).tag is FamilyTag.TWO_PATHS
    assert classify(tree_like_graph(3)).tag is FamilyTag.TREE_LIKE
    assert classify(single_edge_graph()).tag is FamilyTag.TREE_LIKE


def test_two_paths_params_and_roles():
    # chain lengths are reported shorter-first regardless of declaration order
    fam = classify(two_paths_graph(3, 2))
    assert fam.parameters["p"] == 2 and fam.parameters["q"] == 3
    assert len(fam.parameters["a_edges"]) == 2
    assert len(fam.parameters["b_edges"]) == 3
    assert str(fam) == "TwoPaths(2,3)"


def test_length_one_branch_is_tree_like():
    # a direct edge next to a longer path has a proven point limit, so it
    # takes the tree-like route rather than the two-chain one
    fam = classify(two_paths_graph(1, 4))
    assert fam.tag is FamilyTag.TREE_LIKE
    assert fam.parameters["multiplicity"] == 1


def test_tree_like_requires_direct_edge():
    g = MarkedGraph(
        ["N", "A", "B", "F"],
        [("1", "N", "A"), ("2", "A", "F"), ("3", "N", "B"), ("4", "B", "F"),
         ("5", "A", "B")],
        "N", "F",
    )
    assert classify(g).tag is not FamilyTag.TREE_LIKE


def test_doubled_direct_edge_records_multiplicity():
    fam = classify(tree_like_graph(2, nf_multiplicity=3))
    assert fam.tag is FamilyTag.TREE_LIKE
    assert fam.parameters["multiplicity"] == 3


def test_general_fallback():
    # diamond with a chord plus a direct edge: cycles through the nest rule
    # out the tree shape, six edges rule out the small named families
    g = MarkedGraph(
        ["N", "A", "B", "F"],
        [("1", "N", "A"), ("2", "N", "B"), ("3", "A", "B"), ("4", "A", "F"),
         ("5", "B", "F"), ("6", "N", "F")],
        "N", "F",
    )
    assert classify(g).tag is FamilyTag.GENERAL


# ---------------------------------------------------------------------------
# path catalogs


def test_cone_catalog():
    cat = enumerate_paths(cone_graph())
    assert cat.count == 3
    assert cat.nest_degree == 3
    assert cat.max_length == 2


@pytest.mark.parametrize("p,q", [(2, 2), (2, 3), (3, 5)])
def test_two_paths_catalog(p, q):
    cat = enumerate_paths(two_paths_graph(p, q))
    assert cat.count == 2
    assert cat.max_length == max(p, q)


def test_path_limit_enforced():
    with pytest.raises(PathLimitError):
        enumerate_paths(losange_graph(), max_paths=2)


@st.composite
def random_trees(draw):
    depth = draw(st.integers(min_value=1, max_value=4))
    branching = draw(st.integers(min_value=1, max_value=3))
    mult = draw(st.integers(min_value=1, max_value=2))
    return tree_like_graph(depth, branching, mult)


@settings(max_examples=25, deadline=None)
@given(random_trees())
def test_tree_like_paths_end_at_food(g):
    """Every enumerated route on a tree-like graph must finish on a food-incident edge."""
    assert classify(g).tag is FamilyTag.TREE_LIKE
    cat = enumerate_paths(g)
    ends = {u for _, u, v in g.edges if g.food in (u, v)} | {g.food}
    for path in cat.paths:
        eid = path[-1]
        _, u, v = g.edges[g.edge_index[eid]]
        assert g.food in (u, v)


def test_graph_validation():
    with pytest.raises(GraphError):
        MarkedGraph(["N"], [], "N", "N")  # nest == food
    with pytest.raises(GraphError):
        MarkedGraph(["N", "F"], [], "N", "F")  # no route to food
