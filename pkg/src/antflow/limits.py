"""Deterministic limit vectors for the proven graph families.

Each family with a proved trace limit gets a solver returning a
LimitPrediction: tree-like graphs (direct edge wins; parallel direct
bundles keep a Dirichlet share), the cone (constant vector), two
competing paths (geometric profiles found by fixed-point iteration),
and the losange (cubic root). All deterministic predictions are zeros
of the trace-probability field and carry their verified residual.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .field import (
    closed_form_cone,
    closed_form_losange,
    closed_form_two_paths,
    field,
    two_paths_edge_ids,
)
from .graph import (
    FamilyTag,
    GraphFamily,
    MarkedGraph,
    classify,
    cone_graph,
    losange_graph,
    two_paths_graph,
)

RESIDUAL_CAP = 1e-10
SYSTEM_TOL = 1e-12
FIXED_POINT_TOL = 1e-14
MAX_FIXED_POINT_ITERS = 10_000

METHOD_CLOSED_FORM = "ClosedForm"
METHOD_CONTRACTION = "ContractionIteration"
METHOD_ROOT = "RootFinding"
METHOD_DIRICHLET = "DirichletDistribution"


class LimitError(Exception):
    pass


@dataclass(frozen=True)
class DirichletLaw:
    """Exchangeable limiting share over a bundle of parallel edges."""

    edges: tuple
    alpha: tuple


@dataclass(frozen=True)
class LimitPrediction:
    family: GraphFamily
    limit: dict
    method: str
    residual: Optional[float]
    dirichlet: Optional[DirichletLaw] = None

    def __post_init__(self):
        if self.method == METHOD_DIRICHLET:
            if self.dirichlet is None:
                raise LimitError("distributional prediction carries no law")
            return
        if self.residual is None or not self.residual < RESIDUAL_CAP:
            raise LimitError(
                f"limit point is not a field zero: residual {self.residual}")


def _sup_f(evaluation) -> float:
    return max(abs(v) for v in evaluation.F.values())


# ---------------------------------------------------------------------------
# two competing paths


def terminal_response(p: int, x: float) -> float:
    """Equilibrium weight of the food edge facing a length-p geometric chain.

    Computed as 1 - x^p / (1 + x + ... + x^{p-1}), which stays stable
    through x = 1 (value 1 - 1/p) and x = 0 (value 1).
    """
    if p < 1:
        raise LimitError("chain length must be positive")
    powers = np.power(float(x), np.arange(p))
    return float(1.0 - powers[-1] * x / powers.sum())


def power_system_residual(p: int, q: int, alpha: float, beta: float) -> float:
    """Residual of alpha^p + beta^q = 1 and alpha^p(1-alpha) = beta^q(1-beta)."""
    return max(abs(alpha ** p + beta ** q - 1.0),
               abs(alpha ** p * (1.0 - alpha) - beta ** q * (1.0 - beta)))


def response_system_residual(p: int, q: int, alpha: float, beta: float) -> float:
    """Residual of the coupled form alpha = f_q(beta), beta = f_p(alpha)."""
    return max(abs(alpha - terminal_response(q, beta)),
               abs(beta - terminal_response(p, alpha)))


def contraction_fp(p: int, q: int) -> tuple:
    """Geometric ratios (alpha, beta) of the limiting two-chain profile.

    alpha is the fixed point of x -> terminal_response(q, terminal_response(p, x))
    iterated from 1/2; beta = terminal_response(p, alpha). Both defining
    systems are checked to 1e-12 before returning.
    """
    if min(p, q) < 2:
        raise LimitError("both chain lengths must be at least 2")
    x = 0.5
    for _ in range(MAX_FIXED_POINT_ITERS):
        nxt = terminal_response(q, terminal_response(p, x))
        done = abs(nxt - x) < FIXED_POINT_TOL
        x = nxt
        if done:
            break
    else:
        raise LimitError(f"fixed point iteration stalled for ({p}, {q})")
    alpha = x
    beta = terminal_response(p, alpha)
    if (power_system_residual(p, q, alpha, beta) > SYSTEM_TOL
            or response_system_residual(p, q, alpha, beta) > SYSTEM_TOL):
        raise LimitError(f"({alpha}, {beta}) fails the defining systems")
    return alpha, beta


def limit_two_paths(p: int, q: int) -> LimitPrediction:
    """Limit w_{a_k} = alpha^k, w_{b_l} = beta^l on the (p, q)-paths graph.

    A length-1 chain makes the graph tree-like; that case routes to the
    direct-edge limit (1 on the short chain, 0 elsewhere).
    """
    if min(p, q) < 1:
        raise LimitError("chain lengths must be positive")
    ids = two_paths_edge_ids(p, q)
    family = classify(two_paths_graph(p, q))
    if min(p, q) == 1:
        winner = ids[0] if p == 1 else ids[p]
        limit = {e: (1.0 if e == winner else 0.0) for e in ids}
        ev = closed_form_two_paths(p, q, limit)
        return LimitPrediction(family, limit, METHOD_CLOSED_FORM, _sup_f(ev))
    alpha, beta = contraction_fp(p, q)
    limit = {}
    for k, e in enumerate(ids[:p], start=1):
        limit[e] = alpha ** k
    for k, e in enumerate(ids[p:], start=1):
        limit[e] = beta ** k
    ev = closed_form_two_paths(p, q, limit)
    return LimitPrediction(family, limit, METHOD_CONTRACTION, _sup_f(ev))


# ---------------------------------------------------------------------------
# sandwich envelopes around the two-paths limit


@dataclass(frozen=True)
class SandwichState:
    lower: np.ndarray
    upper: np.ndarray
    iteration: int

    @property
    def gap(self) -> float:
        return float((self.upper - self.lower).max())


def _harmonic_prefix(vec: np.ndarray) -> np.ndarray:
    return 1.0 / np.cumsum(1.0 / vec)


def _envelope_map(p: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One synchronous update: own-chain prefixes against the other terminal."""
    sa = _harmonic_prefix(x[:p])
    sb = _harmonic_prefix(x[p:])
    out = np.empty_like(x)
    out[:p] = sa / (sa + _harmonic_prefix(y[p:])[-1])
    out[p:] = sb / (sb + _harmonic_prefix(y[:p])[-1])
    return out


def sandwich_iteration(p: int, q: int, u0: float = 0.05,
                       n_max: int = 200) -> list:
    """Monotone lower/upper envelopes pinching the two-paths limit.

    Starts from lower = (u0^1, ..., u0^p, u0^1, ..., u0^q) and upper = 1,
    then applies the envelope map to both in lock-step. Returns the full
    sequence of SandwichState, iteration 0 first. Any non-monotone move
    is a numerical bug and raises.
    """
    if min(p, q) < 2:
        raise LimitError("both chain lengths must be at least 2")
    alpha, beta = contraction_fp(p, q)
    # iteration-1 monotonicity of each food edge needs u0 + 1/len < 1,
    # hence both 1 - 1/p and 1 - 1/q appear in the cap
    cap = min(1.0 - 1.0 / p, 1.0 - 1.0 / q, alpha, beta)
    if not 0.0 < u0 < cap:
        raise LimitError(f"u0 must lie in (0, {cap:.6g}), got {u0}")
    if n_max < 0:
        raise LimitError("n_max must be nonnegative")

    lower = np.array([u0 ** k for k in range(1, p + 1)]
                     + [u0 ** k for k in range(1, q + 1)])
    upper = np.ones(p + q)
    states = [SandwichState(lower.copy(), upper.copy(), 0)]
    for it in range(1, n_max + 1):
        nxt_lower = _envelope_map(p, lower, upper)
        nxt_upper = _envelope_map(p, upper, lower)
        if np.any(nxt_lower < lower - 1e-15):
            raise LimitError(f"lower envelope decreased at iteration {it}")
        if np.any(nxt_upper > upper + 1e-15):
            raise LimitError(f"upper envelope increased at iteration {it}")
        if np.any(nxt_lower > nxt_upper + 1e-15):
            raise LimitError(f"envelopes crossed at iteration {it}")
        lower, upper = nxt_lower, nxt_upper
        states.append(SandwichState(lower.copy(), upper.copy(), it))
        if states[-1].gap <= 1e-16:
            break
    return states


# ---------------------------------------------------------------------------
# cone and losange


def limit_cone() -> LimitPrediction:
    """The cone limit (1, 1/3, 1/3, 0) on canonical edge ids."""
    limit = {"1": 1.0, "2": 1.0 / 3.0, "3": 1.0 / 3.0, "4": 0.0}
    ev = closed_form_cone(limit)
    return LimitPrediction(classify(cone_graph()), limit,
                           METHOD_CLOSED_FORM, _sup_f(ev))


def losange_cubic(x):
    """Polynomial whose unique root in (0, 1) is the losange nest weight."""
    return ((2.0 * x + 4.0) * x - 2.0) * x - 1.5


def losange_root() -> float:
    """Bisection root of the losange cubic, bracket narrowed to one ulp."""
    lo, hi = 0.0, 1.0
    # losange_cubic(0) = -3/2 < 0 < 5/2 = losange_cubic(1)
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            return mid
        if losange_cubic(mid) < 0.0:
            lo = mid
        else:
            hi = mid


def limit_losange() -> LimitPrediction:
    """The losange limit (w*, 1/2, 1/2, w*, 1/2) on canonical edge ids."""
    w = losange_root()
    limit = {"1": w, "2": 0.5, "3": 0.5, "4": w, "5": 0.5}
    ev = closed_form_losange(limit)
    return LimitPrediction(classify(losange_graph()), limit,
                           METHOD_ROOT, _sup_f(ev))


# ---------------------------------------------------------------------------
# tree-like graphs and the dispatcher


def limit_tree_like(g: MarkedGraph) -> LimitPrediction:
    """All trace mass on the direct nest-food edge.

    With a single direct edge the limit is the deterministic unit vector.
    A parallel direct bundle keeps a random split, exchangeable over the
    bundle: a flat Dirichlet law with zero weight elsewhere.
    """
    family = classify(g)
    if family.tag is not FamilyTag.TREE_LIKE:
        raise LimitError(f"graph classifies as {family.tag.name}, not TreeLike")
    direct = family.parameters["direct"]
    if family.parameters["multiplicity"] == 1:
        limit = {e: (1.0 if e == direct[0] else 0.0) for e in g.edge_ids}
        ev = field(g, limit)
        return LimitPrediction(family, limit, METHOD_CLOSED_FORM, _sup_f(ev))
    limit = {e: 0.0 for e in g.edge_ids if e not in direct}
    law = DirichletLaw(edges=direct, alpha=(1.0,) * len(direct))
    return LimitPrediction(family, limit, METHOD_DIRICHLET, None, law)


def predict_limit(g: MarkedGraph,
                  family: Optional[GraphFamily] = None) -> LimitPrediction:
    """Limit prediction for any classified graph, on its own edge ids."""
    family = classify(g) if family is None else family
    if family.tag is FamilyTag.TREE_LIKE:
        return limit_tree_like(g)
    if family.tag is FamilyTag.CONE:
        par = family.parameters
        limit = {par["direct"]: 1.0, par["bundle"][0]: 1.0 / 3.0,
                 par["bundle"][1]: 1.0 / 3.0, par["exit"]: 0.0}
        return LimitPrediction(family, limit, METHOD_CLOSED_FORM,
                               _sup_f(field(g, limit)))
    if family.tag is FamilyTag.LOSANGE:
        roles = family.parameters["roles"]
        w = losange_root()
        limit = {roles["nest_p"]: w, roles["p_food"]: 0.5, roles["cross"]: 0.5,
                 roles["nest_q"]: w, roles["q_food"]: 0.5}
        return LimitPrediction(family, limit, METHOD_ROOT,
                               _sup_f(field(g, limit)))
    if family.tag is FamilyTag.TWO_PATHS:
        par = family.parameters
        alpha, beta = contraction_fp(par["p"], par["q"])
        limit = {}
        for k, e in enumerate(par["a_edges"], start=1):
            limit[e] = alpha ** k
        for k, e in enumerate(par["b_edges"], start=1):
            limit[e] = beta ** k
        return LimitPrediction(family, limit, METHOD_CONTRACTION,
                               _sup_f(field(g, limit)))
    raise LimitError("no proven limit prediction for general graphs")
