"""Self-updating process: influence functions, the update rule and the run loop.

Every point moves to the influence-weighted average of the current point
positions (blurring form) or of the initial positions (non-blurring
mean-shift).  Iteration stops once no point moves more than
``convergence_eps``; converged positions closer than ``merge_tol`` (with
transitive closure) form one cluster.

Point sets are plain ``(N, p)`` float arrays; :func:`as_points` validates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

TRUNCATED_EXPONENTIAL = "truncated_exponential"
FLAT_INDICATOR = "flat_indicator"
CENTROID_LINKAGE_DYNAMIC = "centroid_linkage_dynamic"
FAMILIES = (TRUNCATED_EXPONENTIAL, FLAT_INDICATOR, CENTROID_LINKAGE_DYNAMIC)

# Above this many points the "fast" mode switches from dense BLAS products to
# a k-d tree neighbour search.
SPARSE_THRESHOLD = 1500


class ConfigurationError(ValueError):
    """Invalid influence function or temperature schedule."""


class UsageError(ValueError):
    """Inputs with the wrong shape or outside an operation's domain."""


def as_points(points, name: str = "points") -> np.ndarray:
    """Return ``points`` as a validated float64 ``(N, p)`` array.

    One-dimensional input is read as N points on a line.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise UsageError(f"{name} must be an (N, p) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise UsageError(f"{name} needs N >= 1 and p >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains NaN or infinite coordinates")
    return arr


@dataclass(frozen=True)
class TemperatureSchedule:
    """Temperature as a function of the iteration index.

    ``static``: ``T(t) = static_T``.
    ``dynamic``: ``T(t) = base_r * (1/20 + t * heating_rate)``.
    """

    kind: str
    base_r: float
    static_T: Optional[float] = None
    heating_rate: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if not (self.base_r > 0):
            raise ConfigurationError(f"base_r must be positive, got {self.base_r}")
        if self.kind == "static":
            if self.static_T is None or not (self.static_T > 0) or not math.isfinite(self.static_T):
                raise ConfigurationError(f"static_T must be positive and finite, got {self.static_T}")
        else:
            if not math.isfinite(self.base_r):
                raise ConfigurationError("a dynamic schedule needs a finite base_r")
            if self.heating_rate is None or not (self.heating_rate > 0):
                raise ConfigurationError(
                    f"heating_rate must be positive, got {self.heating_rate}")

    def temperature(self, t: int) -> float:
        if t < 0:
            raise UsageError(f"iteration index must be >= 0, got {t}")
        if self.kind == "static":
            return float(self.static_T)
        return self.base_r * (1.0 / 20.0 + t * self.heating_rate)

    def scaled(self, c: float) -> "TemperatureSchedule":
        """Schedule for coordinates multiplied by ``c``."""
        if self.kind == "static":
            return replace(self, base_r=self.base_r * c, static_T=self.static_T * c)
        return replace(self, base_r=self.base_r * c)


@dataclass(frozen=True)
class InfluenceSpec:
    """Which influence function to use, with its range and reference mode.

    ``reference="current"`` averages over the current positions (the
    self-updating process / blurring mean-shift); ``"initial"`` averages over
    the input positions (original mean-shift).
    """

    family: str = TRUNCATED_EXPONENTIAL
    range_r: float = math.inf
    schedule: Optional[TemperatureSchedule] = None
    reference: str = "current"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown influence family {self.family!r}")
        if self.reference not in ("current", "initial"):
            raise ConfigurationError(f"reference must be 'current' or 'initial', got {self.reference!r}")
        if self.family != CENTROID_LINKAGE_DYNAMIC and not (self.range_r > 0):
            raise ConfigurationError(f"influential range must be positive, got {self.range_r}")
        if self.family == TRUNCATED_EXPONENTIAL and self.schedule is None:
            raise ConfigurationError("truncated_exponential needs a temperature schedule")

    @classmethod
    def static(cls, r: float, T: Optional[float] = None, reference: str = "current") -> "InfluenceSpec":
        """Truncated exponential with constant temperature (default ``r/5``)."""
        if T is None:
            T = r / 5.0
        return cls(TRUNCATED_EXPONENTIAL, r, TemperatureSchedule("static", r, static_T=T), reference)

    @classmethod
    def dynamic(cls, r: float, s: float = 1.0 / 50.0) -> "InfluenceSpec":
        """Truncated exponential with ``T(t) = r (1/20 + t s)``."""
        return cls(TRUNCATED_EXPONENTIAL, r, TemperatureSchedule("dynamic", r, heating_rate=s))

    @classmethod
    def flat(cls, r: float, reference: str = "current") -> "InfluenceSpec":
        return cls(FLAT_INDICATOR, r, None, reference)

    def scaled(self, c: float) -> "InfluenceSpec":
        """Spec for coordinates multiplied by ``c > 0``."""
        sched = self.schedule.scaled(c) if self.schedule is not None else None
        return replace(self, range_r=self.range_r * c, schedule=sched)


@dataclass(frozen=True)
class SupOptions:
    convergence_eps: float = 1e-8
    max_iterations: int = 10_000
    merge_tol: float = 1e-4
    record_trajectory: bool = False
    snapshot_stride: int = 1
    # "sequential": ascending-index sums, bit-reproducible.
    # "fast": BLAS / sparse neighbour sums, agrees with sequential to ~1e-12.
    mode: str = "sequential"

    def __post_init__(self):
        if not (self.convergence_eps > 0):
            raise ConfigurationError("convergence_eps must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if not (self.merge_tol > self.convergence_eps):
            raise ConfigurationError("merge_tol must exceed convergence_eps")
        if self.snapshot_stride < 1:
            raise ConfigurationError("snapshot_stride must be >= 1")
        if self.mode not in ("sequential", "fast"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")


@dataclass
class SupResult:
    final_positions: np.ndarray
    labels: np.ndarray
    representatives: np.ndarray
    iterations_run: int
    converged: bool
    trajectory: Optional[list] = None
    trajectory_steps: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return int(self.representatives.shape[0])

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)


def kernel_weights(d, t: int, spec: InfluenceSpec, r_t: Optional[float] = None) -> np.ndarray:
    """Vectorised influence for an array of distances at iteration ``t``.

    ``r_t`` is the per-iteration range and is only used by the
    centroid-linkage family.
    """
    d = np.asarray(d, dtype=np.float64)
    if spec.family == TRUNCATED_EXPONENTIAL:
        T = spec.schedule.temperature(t)
        w = np.exp(-(d / T))
        return np.where(d <= spec.range_r, w, 0.0)
    if spec.family == FLAT_INDICATOR:
        return (d <= spec.range_r).astype(np.float64)
    if r_t is None:
        raise UsageError("centroid-linkage influence needs the per-iteration range r_t")
    return (d <= r_t).astype(np.float64)


def influence_weight(d: float, t: int, spec: InfluenceSpec, r_t: Optional[float] = None) -> float:
    """Influence between two points at distance ``d`` at iteration ``t``."""
    if not math.isfinite(d) or d < 0:
        raise UsageError(f"distance must be finite and nonnegative, got {d}")
    return float(kernel_weights(np.array([d]), t, spec, r_t)[0])


def _distances(state: np.ndarray, target: np.ndarray) -> np.ndarray:
    # Coordinate-by-coordinate accumulation keeps the arithmetic order fixed.
    diff = state[:, None, 0] - target[None, :, 0]
    sq = diff * diff
    for a in range(1, state.shape[1]):
        diff = state[:, None, a] - target[None, :, a]
        sq += diff * diff
    return np.sqrt(sq)


def min_nonzero_distance(points: np.ndarray) -> float:
    d = _distances(points, points)
    nz = d[d > 0]
    return float(nz.min()) if nz.size else math.inf


def _dense_sequential(state, target, t, spec, r_t):
    w = kernel_weights(_distances(state, target), t, spec, r_t)
    # cumsum runs left to right, so the last column is the ascending-j sum.
    den = np.cumsum(w, axis=1)[:, -1]
    out = np.empty_like(state)
    for a in range(state.shape[1]):
        num = np.cumsum(w * target[None, :, a], axis=1)[:, -1]
        out[:, a] = num / den
    return out


def _dense_fast(state, target, t, spec, r_t):
    sq = (np.einsum("ij,ij->i", state, state)[:, None]
          + np.einsum("ij,ij->i", target, target)[None, :]
          - 2.0 * state @ target.T)
    np.maximum(sq, 0.0, out=sq)
    d = np.sqrt(sq)
    w = kernel_weights(d, t, spec, r_t)
    return (w @ target) / w.sum(axis=1)[:, None]


def _sparse_fast(state, target, t, spec, r_t):
    r = spec.range_r if spec.family != CENTROID_LINKAGE_DYNAMIC else r_t
    n = state.shape[0]
    if not math.isfinite(r):
        return _dense_fast(state, target, t, spec, r_t)
    sm = cKDTree(state).sparse_distance_matrix(cKDTree(target), r, output_type="coo_matrix")
    rows, cols, d = sm.row, sm.col, sm.data
    # Sparse storage drops exact zeros (coincident points, i with itself in
    # the blurring case); add them back explicitly.
    keep = d > 0
    rows, cols, d = rows[keep], cols[keep], d[keep]
    zr, zc = _coincident_pairs(state, target)
    rows = np.concatenate([rows, zr])
    cols = np.concatenate([cols, zc])
    d = np.concatenate([d, np.zeros(zr.size)])
    w = kernel_weights(d, t, spec, r_t)
    W = coo_matrix((w, (rows, cols)), shape=(n, target.shape[0])).tocsr()
    return (W @ target) / np.asarray(W.sum(axis=1))


def _coincident_pairs(state, target):
    tree = cKDTree(target)
    pairs = tree.query_ball_point(state, r=0.0)
    rows = np.repeat(np.arange(state.shape[0]), [len(p) for p in pairs])
    cols = np.concatenate([np.asarray(p, dtype=np.intp) for p in pairs]) if len(pairs) else np.empty(0, np.intp)
    return rows.astype(np.intp), cols.astype(np.intp)


def update_step(state, origin, t: int, spec: InfluenceSpec, mode: str = "sequential") -> np.ndarray:
    """One synchronous update of every point.

    ``origin`` is the set of points being averaged: the current state for the
    self-updating process, the initial data for the original mean-shift.
    """
    state = np.asarray(state, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    if state.ndim != 2 or state.shape != origin.shape:
        raise UsageError(f"state {state.shape} and origin {origin.shape} must have the same (N, p) shape")
    r_t = None
    if spec.family == CENTROID_LINKAGE_DYNAMIC:
        r_t = min_nonzero_distance(state)
    if mode == "sequential":
        return _dense_sequential(state, origin, t, spec, r_t)
    if mode != "fast":
        raise UsageError(f"unknown mode {mode!r}")
    if state.shape[0] > SPARSE_THRESHOLD:
        return _sparse_fast(state, origin, t, spec, r_t)
    return _dense_fast(state, origin, t, spec, r_t)


def extract_clusters(final, merge_tol: float):
    """Group converged positions by single linkage at ``merge_tol``.

    Returns ``(labels, representatives)``; labels are numbered by first
    occurrence and each representative is the centroid of its group.
    """
    final = as_points(final, "final")
    if not (merge_tol > 0):
        raise UsageError("merge_tol must be positive")
    n = final.shape[0]
    pairs = cKDTree(final).query_pairs(merge_tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    _, first = np.unique(comp, return_index=True)
    order = np.argsort(first, kind="stable")
    relabel = np.empty(order.size, dtype=np.intp)
    relabel[comp[first[order]]] = np.arange(order.size)
    labels = relabel[comp]
    k = order.size
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    reps = np.zeros((k, final.shape[1]))
    np.add.at(reps, labels, final)
    reps /= counts[:, None]
    return labels, reps


def run_sup(points, spec: InfluenceSpec, opts: Optional[SupOptions] = None) -> SupResult:
    """Iterate :func:`update_step` until no point moves more than ``convergence_eps``."""
    opts = opts or SupOptions()
    x0 = as_points(points)
    state = x0.copy()
    trajectory = [state.copy()] if opts.record_trajectory else None
    steps = [0] if opts.record_trajectory else []
    converged = False
    t = 0
    while t < opts.max_iterations:
        origin = state if spec.reference == "current" else x0
        new = update_step(state, origin, t, spec, mode=opts.mode)
        move = np.sqrt(np.max(np.sum((new - state) ** 2, axis=1)))
        state = new
        t += 1
        if opts.record_trajectory and t % opts.snapshot_stride == 0:
            trajectory.append(state.copy())
            steps.append(t)
        if move <= opts.convergence_eps:
            converged = True
            break
    if opts.record_trajectory and steps[-1] != t:
        trajectory.append(state.copy())
        steps.append(t)
    labels, reps = extract_clusters(state, opts.merge_tol)
    return SupResult(state, labels, reps, t, converged, trajectory, steps)


@dataclass
class PddReport:
    values: np.ndarray
    in_unit_interval: bool
    one_only_at_zero: bool
    distance_only: bool
    non_increasing: bool

    @property
    def passed(self) -> bool:
        return self.in_unit_interval and self.one_only_at_zero and self.distance_only and self.non_increasing


def check_pdd(spec, probe_distances: Sequence[float], t: int = 0) -> PddReport:
    """Probe the positive-and-decreasing-in-distance conditions numerically.

    ``spec`` is an :class:`InfluenceSpec` or any callable mapping a distance
    to a weight.  Condition (ii) is checked by evaluating each probe distance
    along several directions, which is trivially satisfied by kernels that
    take a distance argument.
    """
    d = np.asarray(probe_distances, dtype=np.float64)
    if isinstance(spec, InfluenceSpec):
        r_t = None
        if spec.family == CENTROID_LINKAGE_DYNAMIC:
            nz = d[d > 0]
            r_t = float(nz.min()) if nz.size else math.inf
        f: Callable = lambda x: kernel_weights(x, t, spec, r_t)
    else:
        f = lambda x: np.array([spec(v) for v in np.ravel(x)]).reshape(np.shape(x))
    vals = np.asarray(f(d), dtype=np.float64)
    in_unit = bool(np.all((vals >= 0) & (vals <= 1)))
    ones = np.isclose(vals, 1.0, rtol=0, atol=1e-15)
    one_only_at_zero = bool(np.all(ones == (d == 0)))
    # Distances measured along different directions in the plane.
    angles = np.linspace(0.0, np.pi, 5)
    along = []
    for a in angles:
        u = np.stack([d * np.cos(a), d * np.sin(a)], axis=1)
        along.append(f(np.sqrt(np.sum(u * u, axis=1))))
    distance_only = bool(np.allclose(np.array(along), vals[None, :], rtol=1e-12, atol=0))
    non_inc = bool(np.all(np.diff(vals[np.argsort(d, kind="stable")]) <= 0))
    return PddReport(vals, in_unit, one_only_at_zero, distance_only, non_inc)
