"""Sampling of single ant walks and the trace-reinforced weight process.

One ant performs a weighted random walk from the nest, absorbed at the
food node, stepping over parallel edges individually with probability
proportional to edge weight. Its trace is the set of edges crossed at
least once; every trace edge then gains one unit of weight before the
next ant starts. All weights start at 1.

The process runner is JIT-compiled; a fixed seed gives a bit-identical
trajectory, and replicas get independent counter-based streams.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from numba import njit

from . import field as _field
from .electrical import _component, _positive_adjacency
from .graph import FamilyTag, MarkedGraph, classify, graph_hash

NORMALIZATION_DIVISORS = {"n": 0, "n+1": 1, "n+2": 2}


class WalkError(ValueError):
    pass


class WalkCapExceeded(WalkError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    """One ant's outcome: edges crossed, walk length, cap flag."""
    crossed: frozenset
    steps: int
    capped: bool = False


@dataclass(frozen=True)
class ProcessState:
    counts: dict          # edge id -> integer weight
    time: int             # number of ants completed
    rng_state: dict       # bit-generator state after the last walk


@dataclass(frozen=True)
class ProcessTrajectory:
    """Recorded weight rows of one reinforcement run.

    counts[i] holds the integer weights W(times[i]); history, when kept,
    holds every row W(0)..W(n_ants). normalized() divides by n, n+1 or
    n+2: reported results use /n, state-space membership uses /(n+1),
    and the family slice identities (for instance losange rows summing
    to one on edges 2 and 5) are exact under /(n+2).
    """
    times: np.ndarray
    counts: np.ndarray
    edge_ids: tuple
    n_ants: int
    seed: Optional[int]
    replica: int
    capped_walks: int
    final: ProcessState
    graph_hash: str = ""
    history: Optional[np.ndarray] = None

    def normalized(self, convention: str = "n") -> np.ndarray:
        if convention not in NORMALIZATION_DIVISORS:
            raise WalkError(f"unknown normalization convention {convention!r}")
        shift = NORMALIZATION_DIVISORS[convention]
        t = self.times.astype(float) + shift
        if np.any(t <= 0):
            raise WalkError("time 0 cannot be normalized by n; record from n >= 1")
        return self.counts / t[:, None]


def _rng_for(seed, replica):
    ss = np.random.SeedSequence(seed, spawn_key=(replica,))
    return np.random.Generator(np.random.Philox(ss))


def sample_walk(g: MarkedGraph, w, rng=None, *, max_steps: int = 0,
                strict_cap: bool = False) -> TraceRecord:
    """Walk one ant at fixed weights and return its trace.

    max_steps = 0 disables the safety cap. A capped walk returns its
    partial trace with capped=True, or raises when strict_cap is set;
    capping truncates the walk law, so it stays off by default.
    """
    wm = _field._weights(g, w)
    adj = _positive_adjacency(g, wm)
    comp = _component(adj, g.nest)
    if g.food not in comp:
        raise WalkError("food is not reachable from the nest under these weights")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = _rng_for(rng, 0)
    crossed = set()
    steps = 0
    x = g.nest
    while x != g.food:
        if max_steps and steps >= max_steps:
            if strict_cap:
                raise WalkCapExceeded(f"walk exceeded {max_steps} steps")
            return TraceRecord(frozenset(crossed), steps, capped=True)
        slots = adj[x]
        total = 0.0
        for _, _, wf in slots:
            total += wf
        r = rng.random() * total
        for eid, y, wf in slots:
            r -= wf
            if r < 0.0:
                break
        crossed.add(eid)
        x = y
        steps += 1
    return TraceRecord(frozenset(crossed), steps, capped=False)


@njit(cache=True, nogil=True)
def _process_kernel(indptr, edge_pos, dest, nest, food, n_ants, record_times,
                    weights, rec_out, history, keep_history, max_steps, rng):
    n_edges = weights.shape[0]
    crossed = np.zeros(n_edges, dtype=np.bool_)
    capped = 0
    rec_i = 0
    n_rec = record_times.shape[0]
    while rec_i < n_rec and record_times[rec_i] == 0:
        rec_out[rec_i] = weights
        rec_i += 1
    if keep_history:
        history[0] = weights
    for n in range(1, n_ants + 1):
        crossed[:] = False
        x = nest
        steps = 0
        while x != food:
            if max_steps > 0 and steps >= max_steps:
                capped += 1
                break
            total = 0.0
            for s in range(indptr[x], indptr[x + 1]):
                total += weights[edge_pos[s]]
            r = rng.random() * total
            pick = indptr[x + 1] - 1
            for s in range(indptr[x], indptr[x + 1]):
                r -= weights[edge_pos[s]]
                if r < 0.0:
                    pick = s
                    break
            crossed[edge_pos[pick]] = True
            x = dest[pick]
            steps += 1
        for e in range(n_edges):
            if crossed[e]:
                weights[e] += 1
        if keep_history:
            history[n] = weights
        while rec_i < n_rec and record_times[rec_i] == n:
            rec_out[rec_i] = weights
            rec_i += 1
    return capped


def run_process(g: MarkedGraph, n_ants: int, record_schedule=None,
                seed: Optional[int] = None, *, replica: int = 0,
                keep_history: bool = False, max_steps: int = 0,
                strict_cap: bool = False) -> ProcessTrajectory:
    """Run n_ants reinforcement steps and record scheduled weight rows.

    record_schedule defaults to the final time only. Identical
    (seed, replica) pairs reproduce the trajectory bit for bit.
    """
    if n_ants < 1:
        raise WalkError("n_ants must be >= 1")
    if record_schedule is None:
        times = np.array([n_ants], dtype=np.int64)
    else:
        times = np.unique(np.asarray(list(record_schedule), dtype=np.int64))
        if times.size == 0:
            raise WalkError("record schedule is empty")
        if times[0] < 0 or times[-1] > n_ants:
            raise WalkError("record times must lie in [0, n_ants]")
    indptr, edge_pos, dest, node_order = g.csr
    weights = np.ones(len(g.edges), dtype=np.int64)
    rec_out = np.zeros((times.size, weights.size), dtype=np.int64)
    hist = (np.zeros((n_ants + 1, weights.size), dtype=np.int64)
            if keep_history else np.zeros((0, 0), dtype=np.int64))
    rng = _rng_for(seed, replica)
    capped = _process_kernel(indptr, edge_pos, dest, node_order[g.nest],
                             node_order[g.food], n_ants, times, weights,
                             rec_out, hist, keep_history, max_steps, rng)
    if capped and strict_cap:
        raise WalkCapExceeded(f"{capped} walks exceeded {max_steps} steps")
    final = ProcessState(counts=dict(zip(g.edge_ids, weights.tolist())),
                         time=n_ants, rng_state=rng.bit_generator.state)
    return ProcessTrajectory(times=times, counts=rec_out, edge_ids=g.edge_ids,
                             n_ants=n_ants, seed=seed, replica=replica,
                             capped_walks=int(capped), final=final,
                             graph_hash=graph_hash(g),
                             history=hist if keep_history else None)


@njit(cache=True, nogil=True)
def _frequency_kernel(indptr, edge_pos, dest, nest, food, weights, n_samples, rng):
    n_edges = weights.shape[0]
    crossed = np.zeros(n_edges, dtype=np.bool_)
    hits = np.zeros(n_edges, dtype=np.int64)
    for _ in range(n_samples):
        crossed[:] = False
        x = nest
        while x != food:
            total = 0.0
            for s in range(indptr[x], indptr[x + 1]):
                total += weights[edge_pos[s]]
            r = rng.random() * total
            pick = indptr[x + 1] - 1
            for s in range(indptr[x], indptr[x + 1]):
                r -= weights[edge_pos[s]]
                if r < 0.0:
                    pick = s
                    break
            crossed[edge_pos[pick]] = True
            x = dest[pick]
        for e in range(n_edges):
            if crossed[e]:
                hits[e] += 1
    return hits


def trace_frequencies(g: MarkedGraph, w, n_samples: int,
                      seed: Optional[int] = None) -> dict:
    """Monte Carlo estimate of the trace probabilities at fixed weights.

    Every edge must carry positive weight here (the kernel does not
    delete dead edges); use exact_trace_probability for degenerate w.
    """
    wm = _field._weights(g, w)
    vals = np.array([wm[e] for e in g.edge_ids], dtype=float)
    if np.any(vals <= 0):
        raise WalkError("trace_frequencies requires strictly positive weights")
    indptr, edge_pos, dest, node_order = g.csr
    rng = _rng_for(seed, 0)
    hits = _frequency_kernel(indptr, edge_pos, dest, node_order[g.nest],
                             node_order[g.food], vals, n_samples, rng)
    return {e: hits[k] / n_samples for k, e in enumerate(g.edge_ids)}


# ---------------------------------------------------------------------------
# martingale residuals


def _closed_form_rows(g: MarkedGraph, rows: np.ndarray) -> Optional[np.ndarray]:
    """Trace probabilities for weight rows via a family closed form, or None."""
    fam = classify(g)
    cols = {e: k for k, e in enumerate(g.edge_ids)}
    if fam.tag is FamilyTag.CONE:
        par = fam.parameters
        order = [par["direct"], par["bundle"][0], par["bundle"][1], par["exit"]]
        probs = _field.cone_probabilities(rows[:, [cols[e] for e in order]])
    elif fam.tag is FamilyTag.LOSANGE:
        roles = fam.parameters["roles"]
        order = [roles[r] for r in ("nest_p", "p_food", "cross", "nest_q", "q_food")]
        probs = _field.losange_probabilities(rows[:, [cols[e] for e in order]])
    elif fam.tag is FamilyTag.TWO_PATHS:
        par = fam.parameters
        order = list(par["a_edges"]) + list(par["b_edges"])
        probs = _field.two_paths_probabilities(
            par["p"], par["q"], rows[:, [cols[e] for e in order]])
    else:
        return None
    out = np.empty_like(probs)
    for j, e in enumerate(order):
        out[:, cols[e]] = probs[:, j]
    return out


def martingale_residuals(g: MarkedGraph, trajectory: ProcessTrajectory,
                         max_general_steps: int = 20000) -> np.ndarray:
    """Per-step noise: increment indicator minus trace probability.

    Needs a trajectory run with keep_history=True. Row n-1 of the result
    is xi(n) = (W(n) - W(n-1)) - p(X(n-1)); p is scale invariant, so the
    integer rows feed the closed forms directly. Graphs without a family
    closed form fall back to one linear solve per step and edge, and are
    refused above max_general_steps.
    """
    if trajectory.history is None:
        raise WalkError("martingale residuals need keep_history=True")
    hist = trajectory.history
    increments = np.diff(hist, axis=0).astype(float)
    prev = hist[:-1]
    probs = _closed_form_rows(g, prev)
    if probs is None:
        if prev.shape[0] > max_general_steps:
            raise WalkError(
                "no closed form for this graph; refusing per-step solves "
                f"beyond {max_general_steps} steps")
        probs = np.empty_like(increments)
        for i in range(prev.shape[0]):
            ev = _field.field(g, dict(zip(g.edge_ids, prev[i].tolist())))
            probs[i] = [ev.p[e] for e in g.edge_ids]
    return increments - probs


def residual_partial_sums(residuals: np.ndarray, edge_ids) -> dict:
    """Final partial sums scaled by 1/sqrt(n); near 0 for honest noise."""
    n = residuals.shape[0]
    scaled = residuals.sum(axis=0) / np.sqrt(n)
    return dict(zip(edge_ids, scaled.tolist()))


# ---------------------------------------------------------------------------
# trajectory files


def write_trajectory_csv(trajectory: ProcessTrajectory, path,
                         convention: str = "n") -> None:
    """CSV of normalized weights plus a .meta.json sidecar."""
    rows = trajectory.normalized(convention)
    header = "n," + ",".join(trajectory.edge_ids)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(trajectory.times, rows):
            fh.write(str(int(t)) + "," +
                     ",".join(format(x, ".17g") for x in row) + "\n")
    meta = {
        "seed": trajectory.seed,
        "replica": trajectory.replica,
        "n_ants": trajectory.n_ants,
        "normalization": convention,
        "capped_walks": trajectory.capped_walks,
        "edge_ids": list(trajectory.edge_ids),
        "graph_hash": trajectory.graph_hash,
    }
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_trajectory_csv(path):
    """Return (times, value rows, edge ids) from a trajectory CSV."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "n":
            raise WalkError(f"{path}: not a trajectory CSV")
        body = fh.read()
    if body.strip():
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    else:
        data = np.empty((0, len(header)))
    times = data[:, 0].astype(np.int64)
    return times, data[:, 1:], tuple(header[1:])
