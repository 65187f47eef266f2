"""G-urn processes: simulation, fixed-point classification, domination.

A G-urn starts at X(start_time) = start_value and increments by one with
probability G(X_n/(n+2)) at each step, else stays. These one-dimensional
processes bound single edge-weight coordinates of the reinforcement
process from above or below, which is how the limit proofs pin down
degenerate coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dfield
from typing import Callable, Optional, Sequence

import numpy as np

DERIVATIVE_STEP = 1e-6


class UrnError(ValueError):
    pass


def _eval_g(g, x):
    """Evaluate G on an array, falling back to a scalar loop."""
    arr = np.asarray(x, dtype=float)
    try:
        out = np.asarray(g(arr), dtype=float)
        if out.shape != arr.shape:
            raise TypeError
    except (TypeError, ValueError):
        out = np.array([float(g(v)) for v in arr.ravel()]).reshape(arr.shape)
    return out


@dataclass(frozen=True)
class UrnSpec:
    """Urn dynamics: success function G on [0,1], start value and time."""
    g: Callable[[np.ndarray], np.ndarray]
    start_value: int = 1
    start_time: int = 0

    def __post_init__(self):
        if self.start_value < 1:
            raise UrnError("start_value must be >= 1")
        if self.start_value > self.start_time + 2:
            raise UrnError("start_value must be <= start_time + 2")
        probe = _eval_g(self.g, np.linspace(0.0, 1.0, 41))
        if not np.all(np.isfinite(probe)):
            raise UrnError("G must be finite on [0,1]")
        if probe.min() < -1e-12 or probe.max() > 1.0 + 1e-12:
            raise UrnError("G must map [0,1] into [0,1]")


def _success_probabilities(spec, xhat):
    p = _eval_g(spec.g, xhat)
    if p.min() < -1e-9 or p.max() > 1.0 + 1e-9:
        raise UrnError("G returned a value outside [0,1] during simulation")
    return np.clip(p, 0.0, 1.0)


def simulate_urn(spec: UrnSpec, n_steps: int, seed: Optional[int] = None) -> np.ndarray:
    """One path: X at times start_time .. start_time + n_steps (inclusive)."""
    if n_steps < 0:
        raise UrnError("n_steps must be >= 0")
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(0,))))
    path = np.empty(n_steps + 1, dtype=np.int64)
    path[0] = spec.start_value
    x = spec.start_value
    for i, t in enumerate(range(spec.start_time, spec.start_time + n_steps)):
        p = _success_probabilities(spec, np.array([x / (t + 2.0)]))[0]
        x += rng.random() < p
        path[i + 1] = x
    return path


def simulate_urn_replicas(spec: UrnSpec, n_steps: int, replicas: int,
                          seed: Optional[int] = None,
                          record_schedule=None):
    """Vectorized replicas; returns (times, values) with values[i, r] = X_r(times[i]).

    record_schedule holds absolute times in [start_time, start_time+n_steps];
    default is the final time only. All replicas advance in lock step from
    one seeded stream, so results are reproducible as a block.
    """
    if n_steps < 0:
        raise UrnError("n_steps must be >= 0")
    if replicas < 1:
        raise UrnError("replicas must be >= 1")
    t0, t1 = spec.start_time, spec.start_time + n_steps
    if record_schedule is None:
        times = np.array([t1], dtype=np.int64)
    else:
        times = np.unique(np.asarray(list(record_schedule), dtype=np.int64))
        if times.size == 0 or times[0] < t0 or times[-1] > t1:
            raise UrnError(f"record times must lie in [{t0}, {t1}]")
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(0,))))
    x = np.full(replicas, spec.start_value, dtype=np.int64)
    out = np.empty((times.size, replicas), dtype=np.int64)
    rec_i = 0
    if rec_i < times.size and times[rec_i] == t0:
        out[rec_i] = x
        rec_i += 1
    for t in range(t0, t1):
        p = _success_probabilities(spec, x / (t + 2.0))
        x = x + (rng.random(replicas) < p)
        if rec_i < times.size and times[rec_i] == t + 1:
            out[rec_i] = x
            rec_i += 1
    return times, out


def stable_fixed_points(g, grid=1001, tolerance: float = 1e-9) -> np.ndarray:
    """Grid points p with G(p) = p (within tolerance) and numeric G'(p) <= 1.

    grid is a point count for a uniform grid on [0,1], or an explicit
    array of candidates. The derivative is a central difference with
    step 1e-6, one-sided at the interval ends. For G(x) = x every grid
    point qualifies; the caller interprets such continua.
    """
    if np.isscalar(grid):
        pts = np.linspace(0.0, 1.0, int(grid))
    else:
        pts = np.asarray(grid, dtype=float)
    vals = _eval_g(g, pts)
    keep = []
    h = DERIVATIVE_STEP
    for p, gp in zip(pts, vals):
        if abs(gp - p) >= tolerance:
            continue
        lo, hi = max(0.0, p - h), min(1.0, p + h)
        d = (_eval_g(g, np.array([hi]))[0] - _eval_g(g, np.array([lo]))[0]) / (hi - lo)
        if d <= 1.0 + tolerance:
            keep.append(p)
    return np.array(keep)


@dataclass(frozen=True)
class DominationReport:
    """Per-time one-sided comparison of two empirical distributions.

    statistic[i] is sup_x(F_upper(x) - F_lower(x)) at times[i]; positive
    beyond allowance[i] means the claimed upper process has too much
    mass on low values, violating the stochastic ordering.
    """
    times: np.ndarray
    statistic: np.ndarray
    allowance: np.ndarray
    violations: tuple
    passed: bool
    alpha: float


def _one_sided_ks(lower_vals, upper_vals):
    """sup_x (F_upper(x) - F_lower(x)) over the pooled sample."""
    pooled = np.concatenate([lower_vals, upper_vals])
    pooled.sort(kind="stable")
    f_low = np.searchsorted(np.sort(lower_vals), pooled, side="right") / lower_vals.size
    f_up = np.searchsorted(np.sort(upper_vals), pooled, side="right") / upper_vals.size
    return float(np.max(f_up - f_low))


def domination_check(lower: UrnSpec, upper_times, upper_values,
                     replicas: int = 200, seed: Optional[int] = None,
                     alpha: float = 0.01) -> DominationReport:
    """Test that sample paths stochastically dominate a simulated urn.

    upper_values has one row per path, one column per entry of
    upper_times, already normalized to [0,1] (the urn values are scaled
    as X(t)/(t+2) to match). The comparison at each recorded time is a
    one-sided two-sample Kolmogorov-Smirnov test at level alpha.
    """
    times = np.asarray(list(upper_times), dtype=np.int64)
    upper = np.asarray(upper_values, dtype=float)
    if upper.ndim != 2 or upper.shape[1] != times.size:
        raise UrnError("upper_values must be (paths, len(upper_times))")
    if times.size == 0 or np.any(np.diff(times) <= 0):
        raise UrnError("upper_times must be strictly increasing and non-empty")
    if times[0] < lower.start_time:
        raise UrnError("time grid starts before the urn's start_time")
    n_steps = int(times[-1] - lower.start_time)
    rec_times, lower_vals = simulate_urn_replicas(
        lower, n_steps, replicas, seed=seed, record_schedule=times)
    lower_hat = lower_vals / (rec_times[:, None] + 2.0)

    m, n = upper.shape[0], replicas
    allow = np.sqrt(np.log(1.0 / alpha) * (n + m) / (2.0 * n * m))
    stats = np.array([_one_sided_ks(lower_hat[i], upper[:, i])
                      for i in range(times.size)])
    allowance = np.full(times.size, allow)
    violations = tuple(int(t) for t, s in zip(times, stats) if s > allow)
    return DominationReport(times=times, statistic=stats, allowance=allowance,
                            violations=violations, passed=not violations,
                            alpha=alpha)


# ---------------------------------------------------------------------------
# common success functions


def polya_g(x):
    return np.asarray(x, dtype=float)


def ratio_g(c: float):
    """G(x) = x/(x+c): fixed points 0 and 1-c, the latter stable for 0<c<1."""
    if c <= 0:
        raise UrnError("ratio constant must be positive")

    def g(x):
        x = np.asarray(x, dtype=float)
        return x / (x + c)
    return g


def direct_edge_g(k: float):
    """Lower bound on the success law of a direct nest-food edge.

    G(x) = x / (x + k(1-x)/(k+1-x)): the direct edge at normalized
    weight x competes with the rest of the graph merged to a hub, whose
    nest side carries at most k unit edges and whose food side carries
    the complementary weight 1-x. G'(0) = (k+1)/k > 1, so 0 is unstable
    and the direct edge's weight share climbs to 1.
    """
    if k <= 0:
        raise UrnError("k must be positive")

    def g(x):
        x = np.asarray(x, dtype=float)
        rest = k * (1.0 - x) / (k + 1.0 - x)
        return x / (x + rest)
    return g


def tabulated_g(xs: Sequence[float], ys: Sequence[float]):
    """Linear interpolation through (xs, ys) as a success function."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise UrnError("need matching 1-d tables with at least two points")
    if np.any(np.diff(xs) <= 0):
        raise UrnError("xs must be strictly increasing")

    def g(x):
        return np.interp(np.asarray(x, dtype=float), xs, ys)
    return g


def parse_g_spec(text: str):
    """Parse a success-function description used by the command line.

    Accepted forms: 'polya', 'ratio:<c>', 'direct-edge:<k>', or
    'expr:<expression in x>' evaluated with numpy available as np.
    """
    text = text.strip()
    if text == "polya":
        return polya_g
    if text.startswith("ratio:"):
        return ratio_g(float(text.split(":", 1)[1]))
    if text.startswith("direct-edge:"):
        return direct_edge_g(float(text.split(":", 1)[1]))
    if text.startswith("expr:"):
        expr = text.split(":", 1)[1]
        code = compile(expr, "<g-expr>", "eval")

        def g(x):
            x = np.asarray(x, dtype=float)
            return eval(code, {"__builtins__": {}}, {"x": x, "np": np})
        _eval_g(g, np.linspace(0, 1, 5))   # fail fast on bad expressions
        return g
    raise UrnError(f"unrecognized G spec {text!r}")
