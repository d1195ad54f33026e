"""Seeded generators for the synthetic benchmark designs.

All generators draw from numpy's PCG64 bit generator seeded with
``np.random.default_rng(seed)``; the same (generator, parameters, seed)
always yields the same coordinates.  Truncated normals are drawn by
rejection: each point is resampled until it lands inside its radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RNG_NAME = "numpy.random.PCG64"
NOISE_ID = -1

NINE_CENTERS = np.array([(0, 0), (2, 0), (1, 1), (6, 0), (8, 0), (7, 1),
                         (3, 3), (5, 3), (4, 4)], dtype=float)
NOISE_CENTERS = np.array([(-6, 0), (6, 0), (0, 6)], dtype=float)
UNBALANCED_CENTERS = np.array([(-4, 5), (-5, -1), (0, 1)], dtype=float)
UNBALANCED_SIGMAS = np.array([(5, 2), (2, 2), (3, 3)], dtype=float)


@dataclass
class LabeledDataset:
    points: np.ndarray
    truth: np.ndarray
    noise_mask: np.ndarray
    seed: object = None
    name: str = ""

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_groups(self) -> int:
        return len(np.unique(self.truth[~self.noise_mask]))


def _truncated_normal(rng, center, sigma, radius, n):
    """``n`` draws of ``N(center, diag(sigma^2))`` with Mahalanobis norm <= ``radius``."""
    center = np.asarray(center, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), center.shape)
    out = np.empty((n, center.size))
    for i in range(n):
        while True:
            z = rng.standard_normal(center.size)
            if np.sqrt(z @ z) <= radius:
                break
        out[i] = center + sigma * z
    return out


def gen_nine_triplets(seed=0) -> LabeledDataset:
    """Three points around each of nine centres, ``BVN(mu, I/25)``."""
    rng = np.random.default_rng(seed)
    pts = np.concatenate([mu + 0.2 * rng.standard_normal((3, 2)) for mu in NINE_CENTERS])
    truth = np.repeat(np.arange(9), 3)
    return LabeledDataset(pts, truth, np.zeros(27, bool), seed, "triplets")


def gen_three_clusters_noise(n_noise: int = 50, seed=0) -> LabeledDataset:
    """Three standard-normal clusters of 50 (within 2 sd) plus uniform scatter.

    Scatter comes from ``[-12, 12] x [-6, 12]`` and is rejected within
    distance 3 of any cluster centre.
    """
    if n_noise < 0:
        raise ValueError("n_noise must be >= 0")
    rng = np.random.default_rng(seed)
    clusters = [_truncated_normal(rng, c, 1.0, 2.0, 50) for c in NOISE_CENTERS]
    noise = np.empty((n_noise, 2))
    for i in range(n_noise):
        while True:
            u = rng.uniform((-12.0, -6.0), (12.0, 12.0))
            if np.min(np.sqrt(np.sum((NOISE_CENTERS - u) ** 2, axis=1))) > 3.0:
                break
        noise[i] = u
    pts = np.concatenate(clusters + [noise])
    truth = np.concatenate([np.repeat(np.arange(3), 50), np.full(n_noise, NOISE_ID)])
    mask = np.concatenate([np.zeros(150, bool), np.ones(n_noise, bool)])
    return LabeledDataset(pts, truth, mask, seed, "noise")


def gen_grid_clusters(seed=0) -> LabeledDataset:
    """100 standard-normal clusters of 50 at ``(5i, 5j)``, truncated at 3 sd."""
    rng = np.random.default_rng(seed)
    centers = [(5.0 * i, 5.0 * j) for i in range(1, 11) for j in range(1, 11)]
    pts = np.concatenate([_truncated_normal(rng, c, 1.0, 3.0, 50) for c in centers])
    truth = np.repeat(np.arange(100), 50)
    return LabeledDataset(pts, truth, np.zeros(5000, bool), seed, "grid")


def rotate_about(points, pivot, degrees: float) -> np.ndarray:
    """Counter-clockwise rotation of 2-D ``points`` about ``pivot``."""
    a = np.deg2rad(degrees)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    pivot = np.asarray(pivot, dtype=float)
    return (np.asarray(points) - pivot) @ rot.T + pivot


def gen_unbalanced(seed=0, rotation_deg: float = 45.0) -> LabeledDataset:
    """Three close groups of 50 with unequal spreads, each within one sd.

    The elongated first group is rotated counter-clockwise about its own
    centre by ``rotation_deg``.
    """
    rng = np.random.default_rng(seed)
    groups = [_truncated_normal(rng, c, s, 1.0, 50)
              for c, s in zip(UNBALANCED_CENTERS, UNBALANCED_SIGMAS)]
    groups[0] = rotate_about(groups[0], UNBALANCED_CENTERS[0], rotation_deg)
    pts = np.concatenate(groups)
    truth = np.repeat(np.arange(3), 50)
    return LabeledDataset(pts, truth, np.zeros(150, bool), seed, "unbalanced")


GENERATORS = {
    "triplets": gen_nine_triplets,
    "noise": gen_three_clusters_noise,
    "grid": gen_grid_clusters,
    "unbalanced": gen_unbalanced,
}


def generate(name: str, seed=0, **params) -> LabeledDataset:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(seed=seed, **params)
