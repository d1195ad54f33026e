"""Choosing the influential range and the temperature schedule.

The range ``r`` is read off the frequency polygon of pairwise distances: a
good ``r`` sits in a sharp valley, away from the peaks formed by within- and
between-cluster distances.  Without a valley, percentiles of the distances
are the fallback.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .core import TemperatureSchedule, UsageError, as_points

MAX_HEATING_RATE = 1.0 / 50.0
DEFAULT_MIN_PROMINENCE = 0.03
DEFAULT_FALLBACK_Q = 35.0


@dataclass(frozen=True)
class FrequencyPolygon:
    bin_midpoints: np.ndarray
    counts: np.ndarray
    bin_width: float

    @property
    def edges(self) -> np.ndarray:
        return np.append(self.bin_midpoints - self.bin_width / 2,
                         self.bin_midpoints[-1] + self.bin_width / 2)


@dataclass
class ValleyReport:
    valleys: list = field(default_factory=list)   # (distance, sharpness), ascending distance
    peaks: list = field(default_factory=list)
    valley_bins: list = field(default_factory=list)

    def best(self) -> Optional[float]:
        """Sharpest valley; ties go to the smaller distance."""
        if not self.valleys:
            return None
        return min(self.valleys, key=lambda v: (-v[1], v[0]))[0]

    def first(self) -> Optional[float]:
        """Valley at the smallest distance."""
        return self.valleys[0][0] if self.valleys else None

    def pick(self, policy: str) -> Optional[float]:
        if policy == "first":
            return self.first()
        if policy == "sharpest":
            return self.best()
        raise UsageError(f"unknown valley policy {policy!r}")


def pairwise_distances(points) -> np.ndarray:
    """Euclidean distances of all unordered pairs, ordered (0,1), (0,2), ..., (1,2), ..."""
    pts = as_points(points)
    if pts.shape[0] < 2:
        raise UsageError("pairwise distances need at least two points")
    return pdist(pts)


def default_bins(n_distances: int) -> int:
    return max(1, math.ceil(2.0 * n_distances ** (1.0 / 3.0)))


def frequency_polygon(distances, n_bins: Optional[int] = None) -> FrequencyPolygon:
    """Equal-width histogram of ``distances`` over ``[0, max]``."""
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size == 0:
        raise UsageError("frequency polygon needs at least one distance")
    if n_bins is None:
        n_bins = default_bins(d.size)
    if n_bins < 1:
        raise UsageError("n_bins must be positive")
    top = float(d.max())
    if top <= 0:
        top = 1.0
    counts, edges = np.histogram(d, bins=n_bins, range=(0.0, top))
    width = top / n_bins
    mids = (np.arange(n_bins) + 0.5) * width
    return FrequencyPolygon(mids, counts.astype(np.int64), width)


def _plateaus(counts):
    """Runs of equal counts as (start, stop) half-open index pairs."""
    runs = []
    start = 0
    for i in range(1, len(counts) + 1):
        if i == len(counts) or counts[i] != counts[start]:
            runs.append((start, i))
            start = i
    return runs


def find_valleys(polygon: FrequencyPolygon, min_prominence: float = DEFAULT_MIN_PROMINENCE) -> ValleyReport:
    """Interior local minima of the polygon whose prominence is large enough.

    A valley's prominence is the smaller of the two rises needed to climb out
    of it: walking away on each side until the counts drop below the valley
    floor (or the boundary is reached), the rise is the highest count met
    minus the floor.  A flat-bottomed valley is reported at its leftmost bin.
    """
    c = np.asarray(polygon.counts, dtype=np.float64)
    n = c.size
    runs = _plateaus(c)
    peaks = []
    minima = []
    for k, (a, b) in enumerate(runs):
        left = c[runs[k - 1][0]] if k > 0 else None
        right = c[runs[k + 1][0]] if k + 1 < len(runs) else None
        v = c[a]
        if left is not None and right is not None and v < left and v < right:
            minima.append(a)
        hi_left = left is None or v > left
        hi_right = right is None or v > right
        if hi_left and hi_right and len(runs) > 1:
            peaks.append(float(polygon.bin_midpoints[a]))
    threshold = min_prominence * c.max()
    valleys = []
    bins = []
    for i in minima:
        v = c[i]
        j = i
        rise_left = 0.0
        while j > 0 and c[j - 1] >= v:
            j -= 1
            rise_left = max(rise_left, c[j] - v)
        j = i
        rise_right = 0.0
        while j < n - 1 and c[j + 1] >= v:
            j += 1
            rise_right = max(rise_right, c[j] - v)
        prom = min(rise_left, rise_right)
        if prom > 0 and prom >= threshold:
            valleys.append((float(polygon.bin_midpoints[i]), float(prom)))
            bins.append(i)
    return ValleyReport(valleys, peaks, bins)


def percentile_r(distances, q: float) -> float:
    """``q``-th percentile with linear interpolation between order statistics."""
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size == 0:
        raise UsageError("percentile needs at least one distance")
    if not (0 < q < 100):
        raise UsageError(f"percentile must lie in (0, 100), got {q}")
    return float(np.percentile(d, q, method="linear"))


def valley_r(distances, n_bins: Optional[int] = None,
             min_prominence: float = DEFAULT_MIN_PROMINENCE,
             policy: str = "first", relax_steps: int = 2,
             below_mode: bool = True,
             fallback_q: Optional[float] = DEFAULT_FALLBACK_Q) -> Optional[float]:
    """Influential range read off the distance frequency polygon.

    ``policy="first"`` takes the valley at the smallest distance,
    ``"sharpest"`` the most prominent one.  With ``below_mode`` only valleys
    left of the highest bin are candidates: a range beyond the most common
    distance lets most pairs interact.  When no candidate clears
    ``min_prominence`` the threshold is halved up to ``relax_steps`` times;
    after that the ``fallback_q`` percentile is used (``None`` if disabled).
    """
    polygon = frequency_polygon(distances, n_bins)
    mode_bin = int(np.argmax(polygon.counts))
    for step in range(relax_steps + 1):
        report = find_valleys(polygon, min_prominence / 2 ** step)
        if below_mode:
            keep = [b < mode_bin for b in report.valley_bins]
            report = ValleyReport([v for v, k in zip(report.valleys, keep) if k], report.peaks,
                                  [b for b, k in zip(report.valley_bins, keep) if k])
        r = report.pick(policy)
        if r is not None:
            return r
    if fallback_q is not None:
        return percentile_r(distances, fallback_q)
    return None


def make_schedule(kind: str, r: float, static_T: Optional[float] = None,
                  s: Optional[float] = None) -> TemperatureSchedule:
    """Static ``T = r/5`` or dynamic ``T(t) = r (1/20 + t s)`` with ``s = 1/50`` by default."""
    if not (r > 0):
        raise UsageError(f"r must be positive, got {r}")
    if kind == "static":
        return TemperatureSchedule("static", r, static_T=r / 5.0 if static_T is None else static_T)
    if kind == "dynamic":
        if s is None:
            s = MAX_HEATING_RATE
        if s > MAX_HEATING_RATE:
            warnings.warn(f"heating rate {s} exceeds the recommended bound 1/50", stacklevel=2)
        return TemperatureSchedule("dynamic", r, heating_rate=s)
    raise UsageError(f"schedule kind must be 'static' or 'dynamic', got {kind!r}")
