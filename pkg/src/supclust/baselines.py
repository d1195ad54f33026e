"""Comparison algorithms: Lloyd k-means, agglomerative clustering, and
centroid linkage realised as a self-updating process with a flat influence
whose range is the current smallest nonzero distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import (CENTROID_LINKAGE_DYNAMIC, InfluenceSpec, UsageError, _distances,
                   as_points, update_step)

LINKAGES = ("single", "complete", "centroid")


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    n_init: int = 1
    max_iter: int = 300
    seed: int = 0
    init: str = "random"             # "random" or "tseng"
    tseng_p: int = 1
    tseng_linkage: str = "single"

    def __post_init__(self):
        if self.k < 1 or self.n_init < 1 or self.max_iter < 1:
            raise UsageError("k, n_init and max_iter must be positive")
        if self.init not in ("random", "tseng"):
            raise UsageError(f"unknown k-means init {self.init!r}")
        if self.tseng_p < 1:
            raise UsageError("tseng_p must be >= 1")
        if self.tseng_linkage not in ("single", "complete"):
            raise UsageError("tseng_linkage must be 'single' or 'complete'")


def _sq_dists(points, centers):
    sq = (np.einsum("ij,ij->i", points, points)[:, None]
          - 2.0 * points @ centers.T
          + np.einsum("ij,ij->i", centers, centers)[None, :])
    return np.maximum(sq, 0.0)


def _nearest_center(points, centers):
    """Index of and squared distance to the closest centre (lowest index on ties)."""
    k, p = centers.shape
    if p <= 3 and k > 16:
        # tree search is much cheaper than the dense n-by-k table here
        dist, idx = cKDTree(centers).query(points)
        return idx.astype(np.intp), dist ** 2
    sq = _sq_dists(points, centers)
    idx = np.argmin(sq, axis=1)
    return idx, sq[np.arange(points.shape[0]), idx]


def lloyd(points, centers, max_iter: int = 300, history: bool = False):
    """Lloyd iterations from the given centres until the assignment stops changing.

    Returns ``(labels, centers, withinss)``, plus the per-iteration withinss
    list when ``history`` is set.  A centre left without points is moved to
    the point farthest from its own centre.
    """
    x = as_points(points)
    centers = np.array(centers, dtype=np.float64, copy=True)
    k = centers.shape[0]
    labels = None
    trace = []
    for _ in range(max_iter):
        new, own = _nearest_center(x, centers)
        counts = np.bincount(new, minlength=k)
        while np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0])
            # never steal the only point of another cluster
            far = int(np.argmax(np.where(counts[new] > 1, own, -1.0)))
            new[far] = empty
            own[far] = 0.0
            centers[empty] = x[far]
            counts = np.bincount(new, minlength=k)
        trace.append(float(np.sum(own)))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums = np.stack([np.bincount(labels, weights=x[:, j], minlength=k)
                         for j in range(x.shape[1])], axis=1)
        centers = sums / counts[:, None]
    wss = float(np.sum((x - centers[labels]) ** 2))
    trace.append(wss)
    if history:
        return labels, centers, wss, trace
    return labels, centers, wss


def kmeans(points, cfg: KMeansConfig):
    """Best of ``n_init`` Lloyd runs by total within-cluster sum of squares.

    Restart ``i`` draws its initial centres from ``default_rng([seed, i])``,
    so results do not depend on the order restarts are executed in.
    """
    x = as_points(points)
    n = x.shape[0]
    if cfg.k > n:
        raise UsageError(f"k={cfg.k} exceeds the number of points {n}")
    if cfg.init == "tseng":
        start = tseng_init(x, cfg.k, cfg.tseng_p, cfg.tseng_linkage)
        return lloyd(x, start, cfg.max_iter)
    best = None
    for i in range(cfg.n_init):
        rng = np.random.default_rng([cfg.seed, i])
        start = x[rng.choice(n, size=cfg.k, replace=False)]
        run = lloyd(x, start, cfg.max_iter)
        if best is None or run[2] < best[2]:
            best = run
    return best


@dataclass
class Dendrogram:
    """Agglomeration history.

    ``merges[m] = (a, b, distance)`` joins the clusters living in slots ``a < b``
    (a slot is the smallest original index in the cluster); the result keeps
    slot ``a``.
    """

    n: int
    merges: list = field(default_factory=list)

    def cut(self, k: int):
        """Cluster membership after ``n - k`` merges.

        Returns ``(labels, members, formed)`` where ``members`` maps each
        surviving slot to its point indices and ``formed`` to the merge step
        that created it (-1 for untouched singletons).
        """
        if not 1 <= k <= self.n:
            raise UsageError(f"k must lie in [1, {self.n}], got {k}")
        members = {i: [i] for i in range(self.n)}
        formed = {i: -1 for i in range(self.n)}
        for step, (a, b, _) in enumerate(self.merges[: self.n - k]):
            members[a] = members[a] + members.pop(b)
            formed.pop(b)
            formed[a] = step
        labels = np.empty(self.n, dtype=np.intp)
        for slot, idx in members.items():
            labels[idx] = slot
        return relabel_first_occurrence(labels), members, formed


def relabel_first_occurrence(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.intp)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.ravel()]


def agglomerate(points, linkage: str, n_clusters: int = 1) -> Dendrogram:
    """Standard agglomerative clustering down to ``n_clusters`` clusters.

    The closest pair of clusters is merged at each step; equal distances go
    to the pair with the smallest slot indices.  Centroid linkage uses the
    Euclidean distance between cluster means.
    """
    if linkage not in LINKAGES:
        raise UsageError(f"unknown linkage {linkage!r}")
    x = as_points(points)
    n = x.shape[0]
    D = _distances(x, x)
    np.fill_diagonal(D, np.inf)
    active = np.ones(n, bool)
    sizes = np.ones(n)
    cents = x.copy()
    tree = Dendrogram(n)
    for _ in range(n - n_clusters):
        flat = int(np.argmin(D))
        a, b = divmod(flat, n)
        if a > b:
            a, b = b, a
        dist = float(D[a, b])
        tree.merges.append((a, b, dist))
        if linkage == "single":
            row = np.minimum(D[a], D[b])
        elif linkage == "complete":
            row = np.maximum(D[a], D[b])
        else:
            cents[a] = (sizes[a] * cents[a] + sizes[b] * cents[b]) / (sizes[a] + sizes[b])
            row = np.sqrt(np.sum((cents - cents[a]) ** 2, axis=1))
        sizes[a] += sizes[b]
        active[b] = False
        row[~active] = np.inf
        row[a] = np.inf
        D[a, :] = row
        D[:, a] = row
        D[b, :] = np.inf
        D[:, b] = np.inf
    return tree


def hierarchical(points, linkage: str, k: int) -> np.ndarray:
    """Labels (numbered by first occurrence) of the ``k``-cluster cut."""
    x = as_points(points)
    if not 1 <= k <= x.shape[0]:
        raise UsageError(f"k must lie in [1, {x.shape[0]}], got {k}")
    return agglomerate(x, linkage, k).cut(k)[0]


def tseng_init(points, k: int, p: int, linkage: str = "single") -> np.ndarray:
    """Centroids of the ``k`` largest clusters of a ``k*p``-cluster cut.

    Size ties go to the cluster formed earlier in the agglomeration.
    """
    x = as_points(points)
    if k < 1 or p < 1:
        raise UsageError("k and p must be positive")
    if k * p > x.shape[0]:
        raise UsageError(f"k*p = {k * p} exceeds the number of points {x.shape[0]}")
    _, members, formed = agglomerate(x, linkage, k * p).cut(k * p)
    order = sorted(members, key=lambda s: (-len(members[s]), formed[s], s))
    return np.array([x[members[s]].mean(axis=0) for s in order[:k]])


@dataclass
class MergeEvent:
    step: int
    groups: tuple          # each entry: sorted tuple of point indices
    distance: float
    centroid: np.ndarray

    @property
    def left(self):
        return self.groups[0]

    @property
    def right(self):
        return self.groups[1]


@dataclass
class MergeTree:
    n: int
    events: list = field(default_factory=list)

    @property
    def distances(self) -> list:
        return [e.distance for e in self.events]

    def partitions(self):
        """Partition (as a set of frozensets) after each event, starting with singletons."""
        groups = {i: frozenset([i]) for i in range(self.n)}
        out = [frozenset(groups.values())]
        for e in self.events:
            merged = frozenset().union(*[frozenset(g) for g in e.groups])
            for i in merged:
                groups[i] = merged
            out.append(frozenset(groups.values()))
        return out

    def cut(self, k: int) -> np.ndarray:
        """Labels once at most ``k`` groups remain (first-occurrence numbering)."""
        for part in self.partitions():
            if len(part) <= k:
                labels = np.empty(self.n, dtype=np.intp)
                for gid, g in enumerate(part):
                    labels[list(g)] = gid
                return relabel_first_occurrence(labels)
        raise UsageError("merge tree never reaches that few groups")


def centroid_linkage_sup(points) -> MergeTree:
    """Centroid-linkage agglomeration run as a self-updating process.

    Each iteration uses a flat influence with range equal to the smallest
    nonzero distance between current positions, so only the closest groups
    move, each onto the mean of the points of both groups.  When that
    minimum is attained along a chain of groups (a tie), the whole chain is
    moved to its joint mean in one step.  Coincident input points start in
    the same group.
    """
    x = as_points(points)
    n = x.shape[0]
    if n < 2:
        raise UsageError("centroid_linkage_sup needs at least two points")
    spec = InfluenceSpec(CENTROID_LINKAGE_DYNAMIC, reference="current")
    state = x.copy()
    tree = MergeTree(n)
    t = 0
    while True:
        uniq, inv = np.unique(state, axis=0, return_inverse=True)
        inv = inv.ravel()
        if uniq.shape[0] == 1:
            break
        D = _distances(uniq, uniq)
        r_t = float(D[D > 0].min())
        link = D <= r_t
        ncomp, comp = connected_components(link, directed=False)
        sizes = np.bincount(comp)
        if np.all(sizes <= 2):
            state = update_step(state, state, t, spec)
        else:
            new = state.copy()
            for c in np.flatnonzero(sizes > 1):
                idx = np.flatnonzero(comp[inv] == c)
                new[idx] = state[idx].mean(axis=0)
            state = new
        for c in np.flatnonzero(sizes > 1):
            gids = np.flatnonzero(comp == c)
            groups = sorted(tuple(np.flatnonzero(inv == g).tolist()) for g in gids)
            idx = np.concatenate([np.asarray(g) for g in groups])
            tree.events.append(MergeEvent(t, tuple(groups), r_t, state[idx[0]].copy()))
        t += 1
    return tree
