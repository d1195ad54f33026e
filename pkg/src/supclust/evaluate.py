"""Clustering quality measures: within-cluster variation, optimal-matching
mistake counts, correct-run checks in the presence of noise, tiny-cluster
summaries and PCA projection."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import UsageError, as_points

DEFAULT_TINY = 2


@dataclass
class NoiseSummary:
    n_tiny_clusters: int
    tiny_cluster_sizes: list
    noise_in_tiny: float
    signal_in_tiny: float


@dataclass
class ClusteringEvaluation:
    total_withinss: float
    n_mistakes: Optional[int]
    accuracy: Optional[float]
    correct_run: Optional[bool]
    n_clusters: int
    tiny_cluster_sizes: list = field(default_factory=list)

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["tiny_cluster_sizes"] = ",".join(str(s) for s in self.tiny_cluster_sizes)
        return rec


def _labels(labels, n):
    lab = np.asarray(labels).ravel()
    if lab.size != n:
        raise UsageError(f"expected {n} labels, got {lab.size}")
    return lab


def within_cluster_variation(points, labels) -> float:
    """Sum over clusters of squared distances from members to their centroid."""
    x = as_points(points)
    lab = _labels(labels, x.shape[0])
    _, inv = np.unique(lab, return_inverse=True)
    inv = inv.ravel()
    k = inv.max() + 1
    counts = np.bincount(inv, minlength=k).astype(float)
    cents = np.zeros((k, x.shape[1]))
    np.add.at(cents, inv, x)
    cents /= counts[:, None]
    return float(np.sum((x - cents[inv]) ** 2))


def contingency(labels, truth):
    """Table of counts, predicted ids along rows and true ids along columns."""
    pred_ids, p = np.unique(labels, return_inverse=True)
    true_ids, t = np.unique(truth, return_inverse=True)
    table = np.zeros((pred_ids.size, true_ids.size), dtype=np.int64)
    np.add.at(table, (p.ravel(), t.ravel()), 1)
    return table, pred_ids, true_ids


def match_mistakes(labels, truth, evaluated_mask=None) -> int:
    """Points misassigned under the best one-to-one matching of predicted to true ids.

    Only points selected by ``evaluated_mask`` are counted.  Predicted
    clusters left unmatched contribute all of their selected points.
    """
    lab = np.asarray(labels).ravel()
    tru = np.asarray(truth).ravel()
    if lab.size != tru.size:
        raise UsageError("labels and truth differ in length")
    if evaluated_mask is not None:
        m = np.asarray(evaluated_mask, bool).ravel()
        lab, tru = lab[m], tru[m]
    if lab.size == 0:
        return 0
    table, _, _ = contingency(lab, tru)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return int(lab.size - table[rows, cols].sum())


def accuracy(labels, truth, evaluated_mask=None) -> float:
    n = int(np.sum(evaluated_mask)) if evaluated_mask is not None else len(np.ravel(labels))
    if n == 0:
        return 1.0
    return 1.0 - match_mistakes(labels, truth, evaluated_mask) / n


def correct_run(labels, truth, noise_mask=None) -> bool:
    """True when the non-noise points are partitioned exactly as the truth."""
    lab = np.asarray(labels).ravel()
    tru = np.asarray(truth).ravel()
    if noise_mask is not None:
        keep = ~np.asarray(noise_mask, bool).ravel()
        lab, tru = lab[keep], tru[keep]
    table, _, _ = contingency(lab, tru)
    # one nonzero cell per row and per column = same partition
    nz = table > 0
    return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))


def noise_isolation_summary(labels, noise_mask, tiny_threshold: int = DEFAULT_TINY) -> NoiseSummary:
    """How many clusters are tiny and which kind of points sit in them."""
    if tiny_threshold < 1:
        raise UsageError("tiny_threshold must be >= 1")
    lab = np.asarray(labels).ravel()
    noise = np.asarray(noise_mask, bool).ravel()
    ids, inv, sizes = np.unique(lab, return_inverse=True, return_counts=True)
    tiny = sizes <= tiny_threshold
    in_tiny = tiny[inv.ravel()]
    n_noise = int(noise.sum())
    n_signal = noise.size - n_noise
    return NoiseSummary(
        n_tiny_clusters=int(tiny.sum()),
        tiny_cluster_sizes=sorted(int(s) for s in sizes[tiny]),
        noise_in_tiny=float(np.sum(in_tiny & noise) / n_noise) if n_noise else 0.0,
        signal_in_tiny=float(np.sum(in_tiny & ~noise) / n_signal) if n_signal else 0.0,
    )


def merge_tiny_clusters(points, labels, tiny_threshold: int = DEFAULT_TINY) -> np.ndarray:
    """Reassign members of tiny clusters to the nearest larger cluster (by centroid).

    Returns labels renumbered by first occurrence.  If every cluster is tiny
    the labels come back unchanged.
    """
    from .baselines import relabel_first_occurrence

    x = as_points(points)
    lab = _labels(labels, x.shape[0]).copy()
    ids, sizes = np.unique(lab, return_counts=True)
    big = ids[sizes > tiny_threshold]
    if big.size == 0:
        return relabel_first_occurrence(lab)
    cents = np.array([x[lab == c].mean(axis=0) for c in big])
    for c in ids[sizes <= tiny_threshold]:
        mine = x[lab == c].mean(axis=0)
        lab[lab == c] = big[int(np.argmin(np.sum((cents - mine) ** 2, axis=1)))]
    return relabel_first_occurrence(lab)


def pca_components(points, dims: int = 2):
    """``(mean, components, fractions)`` of the top ``dims`` principal directions.

    ``fractions`` are shares of total variance, descending.  Component signs
    are fixed so the largest-magnitude loading is positive.
    """
    x = as_points(points)
    if not 1 <= dims <= x.shape[1]:
        raise UsageError(f"dims must lie in [1, {x.shape[1]}], got {dims}")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    var = s ** 2
    total = var.sum()
    frac = var / total if total > 0 else np.zeros_like(var)
    comps = vt[:dims]
    flip = np.sign(comps[np.arange(dims), np.argmax(np.abs(comps), axis=1)])
    return mean, comps * flip[:, None], frac[:dims]


def pca_project(points, dims: int = 2):
    """Centred projection on the top ``dims`` principal directions.

    Returns ``(projected, explained_variance_fractions)``.
    """
    mean, comps, frac = pca_components(points, dims)
    return (as_points(points) - mean) @ comps.T, frac


def evaluate(points, labels, truth=None, noise_mask=None,
             tiny_threshold: int = DEFAULT_TINY) -> ClusteringEvaluation:
    """All measures at once; label-dependent ones are ``None`` without ``truth``."""
    x = as_points(points)
    lab = _labels(labels, x.shape[0])
    sizes = np.unique(lab, return_counts=True)[1]
    tiny = sorted(int(s) for s in sizes[sizes <= tiny_threshold])
    mistakes = acc = ok = None
    if truth is not None:
        mask = None if noise_mask is None else ~np.asarray(noise_mask, bool)
        mistakes = match_mistakes(lab, truth, mask)
        acc = accuracy(lab, truth, mask)
        ok = correct_run(lab, truth, noise_mask)
    return ClusteringEvaluation(within_cluster_variation(x, lab), mistakes, acc, ok,
                                int(sizes.size), tiny)
