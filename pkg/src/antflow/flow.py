"""Integration of the drift flow dy/dt = F(y) and its rest points.

The reinforcement process shadows this flow asymptotically, so the
flow's attractors are the candidate limits of the normalized weights.
Fixed-step fourth-order integration with per-step projection onto the
family's box and affine constraints; convergence requires both a small
drift and a small displacement over the trailing unit time window.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import field as _field
from .graph import FamilyTag, GraphFamily, MarkedGraph, classify
from .walk import _closed_form_rows

DEFAULT_DT = 1e-3
DEFAULT_T_MAX = 200.0
REST_TOL = 1e-9

CONVERGED = "Converged"
MAX_TIME = "MaxTimeReached"
LEFT_DOMAIN = "LeftDomain"


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowTrajectory:
    """Recorded states of one integration run.

    terminal is Converged, MaxTimeReached or LeftDomain; converged_point
    is set only for Converged and satisfies the rest tolerance.
    """
    times: np.ndarray
    states: np.ndarray
    edge_ids: tuple
    terminal: str
    converged_point: Optional[dict]
    final_drift: float
    graph: MarkedGraph


def _drift_closure(g: MarkedGraph, field_source) -> Callable[[np.ndarray], np.ndarray]:
    """Batch drift evaluator: (m, n_edges) states -> (m, n_edges) F values."""
    if callable(field_source):
        return field_source
    if field_source not in (None, "auto", "closed-form", "general"):
        raise FlowError(f"unknown field source {field_source!r}")

    def general(rows):
        out = np.empty_like(rows, dtype=float)
        for i, row in enumerate(np.asarray(rows, dtype=float)):
            ev = _field.field(g, dict(zip(g.edge_ids, row.tolist())))
            out[i] = [ev.F[e] for e in g.edge_ids]
        return out

    if field_source == "general":
        return general
    probe = _closed_form_rows(g, np.ones((1, len(g.edge_ids))))
    if probe is None:
        if field_source == "closed-form":
            raise FlowError("no family closed form for this graph")
        return general

    def closed(rows):
        rows = np.asarray(rows, dtype=float)
        return _closed_form_rows(g, rows) - rows

    return closed


def _paired_indices(g: MarkedGraph, family: GraphFamily):
    """Index pair whose coordinates sum to 1 on the family's slice, or None."""
    cols = g.edge_index
    if family.tag is FamilyTag.CONE:
        return cols[family.parameters["direct"]], cols[family.parameters["exit"]]
    if family.tag is FamilyTag.LOSANGE:
        roles = family.parameters["roles"]
        return cols[roles["p_food"]], cols[roles["q_food"]]
    if family.tag is FamilyTag.TWO_PATHS:
        par = family.parameters
        return cols[par["a_edges"][-1]], cols[par["b_edges"][-1]]
    return None


def _projector(g: MarkedGraph, family: Optional[GraphFamily]):
    pair = _paired_indices(g, family) if family is not None else None

    def project(rows):
        np.clip(rows, 0.0, 1.0, out=rows)
        if pair is not None:
            i, j = pair
            s = rows[:, i] + rows[:, j]
            ok = s > 0
            rows[ok, i] /= s[ok]
            rows[ok, j] /= s[ok]
        return rows

    return project


def _rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


def integrate(g: MarkedGraph, w0, t_max: float = DEFAULT_T_MAX,
              dt: float = DEFAULT_DT, field_source=None, *,
              rest_tolerance: float = REST_TOL, record_dt: float = 0.01,
              domain=None, project: bool = True) -> FlowTrajectory:
    """Integrate the drift flow from w0 until rest, t_max, or domain exit.

    domain, when given, is a predicate on the state dict; the run stops
    with LeftDomain on its first failure. Projection re-imposes the box
    and the family's two-coordinate slice identity after every step.
    """
    if dt <= 0 or t_max <= 0 or dt > t_max:
        raise FlowError("need 0 < dt <= t_max")
    wm = _field._weights(g, w0)
    y = np.array([[wm[e] for e in g.edge_ids]], dtype=float)
    f = _drift_closure(g, field_source)
    family = classify(g)
    proj = _projector(g, family) if project else (lambda rows: rows)

    stride = max(1, int(round(record_dt / dt)))
    per_unit = max(1, int(round(1.0 / dt)))
    times = [0.0]
    states = [y[0].copy()]
    window_anchor = y.copy()
    window_gap = np.inf
    terminal = MAX_TIME
    point = None
    drift = float(np.abs(f(y)).max())
    n_steps = int(round(t_max / dt))

    def as_dict(row):
        return dict(zip(g.edge_ids, row.tolist()))

    if domain is not None and not domain(as_dict(y[0])):
        raise FlowError("start point fails the domain predicate")

    step = 0
    while step < n_steps:
        y, k1 = _rk4_step(f, y, dt)
        y = proj(y)
        step += 1
        t = step * dt
        if step % stride == 0 or step == n_steps:
            times.append(t)
            states.append(y[0].copy())
        if domain is not None and not domain(as_dict(y[0])):
            terminal = LEFT_DOMAIN
            drift = float(np.abs(f(y)).max())
            if times[-1] != t:
                times.append(t)
                states.append(y[0].copy())
            break
        if step % per_unit == 0:
            window_gap = float(np.abs(y - window_anchor).max())
            window_anchor = y.copy()
        drift = float(np.abs(f(y)).max())
        if drift < rest_tolerance and window_gap < rest_tolerance:
            terminal = CONVERGED
            point = as_dict(y[0])
            if times[-1] != t:
                times.append(t)
                states.append(y[0].copy())
            break

    return FlowTrajectory(times=np.array(times), states=np.array(states),
                          edge_ids=g.edge_ids, terminal=terminal,
                          converged_point=point, final_drift=drift, graph=g)


@dataclass(frozen=True)
class BatchFlowResult:
    final_states: np.ndarray
    converged: np.ndarray
    t_converged: np.ndarray
    final_drift: np.ndarray
    times: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None


def integrate_batch(g: MarkedGraph, starts, t_max: float = DEFAULT_T_MAX,
                    dt: float = DEFAULT_DT, field_source=None, *,
                    rest_tolerance: float = REST_TOL,
                    record_dt: Optional[float] = None) -> BatchFlowResult:
    """Advance many starts in lock step; cheaper than repeated integrate().

    Rows are frozen once they satisfy the convergence test. No domain
    predicate here; this is the bulk driver for basin-of-attraction
    checks. With record_dt set, times and states (step, start, edge)
    are kept at that sampling interval.
    """
    if dt <= 0 or t_max <= 0 or dt > t_max:
        raise FlowError("need 0 < dt <= t_max")
    y = np.array([[_field._weights(g, w)[e] for e in g.edge_ids] for w in starts],
                 dtype=float)
    m = y.shape[0]
    f = _drift_closure(g, field_source)
    family = classify(g)
    proj = _projector(g, family)

    per_unit = max(1, int(round(1.0 / dt)))
    stride = max(1, int(round(record_dt / dt))) if record_dt else 0
    anchor = y.copy()
    window_gap = np.full(m, np.inf)
    done = np.zeros(m, dtype=bool)
    t_conv = np.full(m, np.nan)
    n_steps = int(round(t_max / dt))
    drift_now = np.abs(f(y)).max(axis=1)
    rec_times, rec_states = [0.0], [y.copy()]
    step = 0

    for step in range(1, n_steps + 1):
        if done.all():
            step -= 1
            break
        ynew, _ = _rk4_step(f, y, dt)
        ynew = proj(ynew)
        y[~done] = ynew[~done]
        if stride and step % stride == 0:
            rec_times.append(step * dt)
            rec_states.append(y.copy())
        if step % per_unit == 0:
            window_gap = np.abs(y - anchor).max(axis=1)
            anchor = y.copy()
        drift_now = np.abs(f(y)).max(axis=1)
        newly = (~done) & (drift_now < rest_tolerance) & (window_gap < rest_tolerance)
        t_conv[newly] = step * dt
        done |= newly

    if stride and rec_times[-1] != step * dt:
        rec_times.append(step * dt)
        rec_states.append(y.copy())
    return BatchFlowResult(
        final_states=y, converged=done, t_converged=t_conv,
        final_drift=drift_now,
        times=np.array(rec_times) if stride else None,
        states=np.stack(rec_states) if stride else None)


def losange_lyapunov(g: MarkedGraph, states: np.ndarray, edge_ids) -> np.ndarray:
    """h = max(|w2 - 1/2|, |w1/(w1+w4) - 1/2|) over the trailing edge axis."""
    family = classify(g)
    if family.tag is not FamilyTag.LOSANGE:
        raise FlowError("Lyapunov trace is defined for losange graphs only")
    roles = family.parameters["roles"]
    cols = {e: k for k, e in enumerate(edge_ids)}
    states = np.asarray(states, dtype=float)
    w1 = states[..., cols[roles["nest_p"]]]
    w2 = states[..., cols[roles["p_food"]]]
    w4 = states[..., cols[roles["nest_q"]]]
    u = w2 - 0.5
    v = w1 / (w1 + w4) - 0.5
    return np.maximum(np.abs(u), np.abs(v))


def lyapunov_trace_losange(traj: FlowTrajectory) -> np.ndarray:
    """h(t) along a recorded losange trajectory."""
    return losange_lyapunov(traj.graph, traj.states, traj.edge_ids)


# ---------------------------------------------------------------------------
# rest points


def sample_in_basin(g: MarkedGraph, family: GraphFamily, rng) -> dict:
    """Draw one start in the family's proven basin of attraction.

    Cone: the invariant face with unit direct edge and dead exit edge.
    Losange: slice states with both nest edges alive. Two-paths: interior
    monotone chain states. Other families have no proven basin.
    """
    ids = g.edge_ids
    if family.tag is FamilyTag.CONE:
        par = family.parameters
        w = {par["direct"]: 1.0, par["exit"]: 0.0}
        for e in par["bundle"]:
            w[e] = rng.uniform(0.05, 1.0)
        return {e: w[e] for e in ids}
    if family.tag is FamilyTag.LOSANGE:
        roles = family.parameters["roles"]
        w2 = rng.uniform(0.05, 0.95)
        w5 = 1.0 - w2
        w3 = rng.uniform(0.05, 1.0)
        w1 = rng.uniform(max(0.05, w2 - w3), 1.0)
        w4 = rng.uniform(max(0.05, 1.0 - w1, w5 - w3), 1.0)
        vals = {"nest_p": w1, "p_food": w2, "cross": w3,
                "nest_q": w4, "q_food": w5}
        return {roles[r]: v for r, v in vals.items()}
    if family.tag is FamilyTag.TWO_PATHS:
        par = family.parameters
        p, q = par["p"], par["q"]
        u = rng.uniform(0.2, 0.95)
        v = (1.0 - u ** p) ** (1.0 / q)
        w = {}
        for k, e in enumerate(par["a_edges"], start=1):
            w[e] = u ** k
        for k, e in enumerate(par["b_edges"], start=1):
            w[e] = v ** k
        return {e: w[e] for e in ids}
    raise FlowError(f"no proven basin sampler for family {family.tag.name}")


def _numeric_jacobian(f, y, h=1e-7):
    """Finite-difference Jacobian with steps kept inside [0,1]."""
    k = y.shape[1]
    f0 = f(y)[0]
    jac = np.empty((k, k))
    for j in range(k):
        step = h if y[0, j] + h <= 1.0 else -h
        yp = y.copy()
        yp[0, j] += step
        jac[:, j] = (f(yp)[0] - f0) / step
    return jac, f0


def rest_points(g: MarkedGraph, family: Optional[GraphFamily] = None,
                sampler=None, tolerance: float = REST_TOL, *,
                n_starts: int = 40, seed: int = 0,
                field_source=None) -> list:
    """Zeros of the drift found by damped least-squares Newton iteration.

    sampler(rng) supplies start states (defaults to the family basin).
    Returns clustered zeros as dicts, each with max |F| below tolerance.
    """
    family = classify(g) if family is None else family
    f = _drift_closure(g, field_source)
    proj = _projector(g, family)
    rng = np.random.default_rng(seed)
    if sampler is None:
        sampler = lambda r: sample_in_basin(g, family, r)

    found = []
    for _ in range(n_starts):
        w0 = sampler(rng)
        y = np.array([[_field._weights(g, w0)[e] for e in g.edge_ids]], dtype=float)
        norm = np.abs(f(y)).max()
        # keep polishing past the tolerance until the step itself is tiny,
        # or degenerate (non-hyperbolic) zeros stall above the cluster scale
        last_step = np.inf
        for _ in range(100):
            if norm < tolerance and last_step < 1e-8:
                break
            jac, f0 = _numeric_jacobian(f, y)
            try:
                delta = np.linalg.lstsq(jac, -f0, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            scale = 1.0
            improved = False
            for _ in range(30):
                cand = proj(y + scale * delta[None, :])
                cand_norm = np.abs(f(cand)).max()
                if cand_norm < norm:
                    last_step = np.abs(cand - y).max()
                    y, norm = cand, cand_norm
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                break
        if norm < tolerance:
            found.append(y[0])

    clusters = []
    for pt in found:
        for c in clusters:
            if np.abs(c["sum"] / c["n"] - pt).max() < 1e-6:
                c["sum"] += pt
                c["n"] += 1
                break
        else:
            clusters.append({"sum": pt.copy(), "n": 1})
    return [dict(zip(g.edge_ids, (c["sum"] / c["n"]).tolist())) for c in clusters]
