"""Running named algorithms on datasets and aggregating simulation replicates."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import baselines, datagen
from .core import InfluenceSpec, SupOptions, UsageError, run_sup
from .evaluate import evaluate, noise_isolation_summary
from .params import (DEFAULT_FALLBACK_Q, DEFAULT_MIN_PROMINENCE, MAX_HEATING_RATE,
                     pairwise_distances, percentile_r, valley_r)

SUP_ALGOS = ("sup_static", "sup_dynamic", "meanshift_nonblurring")
ALGOS = SUP_ALGOS + ("kmeans", "hierarchical", "centroid_sup")

# Default influential-range policy per simulation design.
DESIGN_DEFAULTS = {
    "noise": {"r_policy": "valley"},
    "grid": {"r": 3.6},
    "unbalanced": {"r_policy": "pct:35"},
    "triplets": {"r": 0.9, "temp": "static:0.7"},
}


def resolve_r(points, r: Optional[float] = None, r_policy: Optional[str] = None,
              bins: Optional[int] = None, min_prominence: Optional[float] = None,
              valley_policy: str = "first") -> float:
    """Explicit ``r``, ``"valley"`` (frequency polygon) or ``"pct:<q>"``."""
    if r is not None and r_policy is not None:
        raise UsageError("give either an explicit r or an r policy, not both")
    if r is not None:
        if not (r > 0):
            raise UsageError(f"r must be positive, got {r}")
        return float(r)
    if r_policy is None:
        raise UsageError("SUP runs need --r or --r-policy")
    d = pairwise_distances(points)
    if r_policy == "valley":
        mp = DEFAULT_MIN_PROMINENCE if min_prominence is None else min_prominence
        return float(valley_r(d, bins, mp, policy=valley_policy, fallback_q=DEFAULT_FALLBACK_Q))
    if r_policy.startswith("pct:"):
        try:
            q = float(r_policy[4:])
        except ValueError:
            raise UsageError(f"bad percentile policy {r_policy!r}") from None
        return percentile_r(d, q)
    raise UsageError(f"unknown r policy {r_policy!r}")


def parse_temp(temp: Optional[str]):
    """``"static:<T>"`` / ``"dynamic:<s>"`` / ``"static"`` / ``"dynamic"`` -> (kind, value)."""
    if temp is None:
        return None, None
    kind, _, val = temp.partition(":")
    if kind not in ("static", "dynamic"):
        raise UsageError(f"bad temperature {temp!r}; use static:<T> or dynamic:<s>")
    if not val:
        return kind, None
    try:
        v = float(val)
    except ValueError:
        raise UsageError(f"bad temperature value in {temp!r}") from None
    if not (v > 0):
        raise UsageError("temperature parameter must be positive")
    return kind, v


def sup_spec(algo: str, r: float, temp: Optional[str] = None) -> InfluenceSpec:
    kind, val = parse_temp(temp)
    if algo == "sup_dynamic":
        if kind == "static":
            raise UsageError("sup_dynamic takes --temp dynamic:<s>")
        return InfluenceSpec.dynamic(r, MAX_HEATING_RATE if val is None else val)
    if kind == "dynamic":
        raise UsageError(f"{algo} takes --temp static:<T>")
    reference = "initial" if algo == "meanshift_nonblurring" else "current"
    return InfluenceSpec.static(r, val, reference=reference)


@dataclass
class AlgoOutcome:
    labels: np.ndarray
    representatives: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)
    sup: object = None
    merge_tree: object = None


def run_algorithm(points, algo: str, *, r=None, r_policy=None, temp=None, k=None,
                  n_init: int = 1, linkage: str = "single", tseng_p: Optional[int] = None,
                  seed: int = 0, opts: Optional[SupOptions] = None, bins=None,
                  min_prominence=None, valley_policy: str = "first") -> AlgoOutcome:
    """Cluster ``points`` with one of :data:`ALGOS`."""
    if algo in SUP_ALGOS:
        r_val = resolve_r(points, r, r_policy, bins, min_prominence, valley_policy)
        spec = sup_spec(algo, r_val, temp)
        res = run_sup(points, spec, opts or SupOptions())
        sched = spec.schedule
        info = {"r": r_val, "schedule": sched.kind,
                "T0": sched.temperature(0),
                "iterations": res.iterations_run, "converged": res.converged}
        if sched.kind == "dynamic":
            info["heating_rate"] = sched.heating_rate
        return AlgoOutcome(res.labels, res.representatives, info, sup=res)
    if k is None:
        raise UsageError(f"{algo} needs the number of clusters k")
    if algo == "kmeans":
        init = "tseng" if tseng_p else "random"
        cfg = baselines.KMeansConfig(k=k, n_init=n_init, seed=seed, init=init,
                                     tseng_p=tseng_p or 1, tseng_linkage=linkage)
        labels, centers, wss = baselines.kmeans(points, cfg)
        return AlgoOutcome(labels, centers, {"k": k, "n_init": n_init, "init": init})
    if algo == "hierarchical":
        labels = baselines.hierarchical(points, linkage, k)
        return AlgoOutcome(labels, _centroids(points, labels), {"k": k, "linkage": linkage})
    if algo == "centroid_sup":
        tree = baselines.centroid_linkage_sup(points)
        labels = tree.cut(k)
        return AlgoOutcome(labels, _centroids(points, labels), {"k": k}, merge_tree=tree)
    raise UsageError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGOS)}")


def _centroids(points, labels):
    x = np.asarray(points, dtype=float)
    return np.array([x[labels == c].mean(axis=0) for c in range(int(labels.max()) + 1)])


def parse_algo_token(token: str) -> dict:
    """Simulation algorithm tokens.

    ``sup_static``, ``sup_dynamic``, ``meanshift_nonblurring``,
    ``kmeans`` / ``kmeans:<n_init>``, ``tseng:<single|complete>:<p>``,
    ``hierarchical:<linkage>``, ``centroid_sup``.
    """
    parts = token.split(":")
    head = parts[0]
    try:
        if head in SUP_ALGOS and len(parts) == 1:
            return {"algo": head}
        if head == "kmeans" and len(parts) <= 2:
            return {"algo": "kmeans", "n_init": int(parts[1]) if len(parts) == 2 else 1}
        if head == "tseng" and len(parts) == 3 and parts[1] in ("single", "complete"):
            return {"algo": "kmeans", "linkage": parts[1], "tseng_p": int(parts[2])}
        if head == "hierarchical" and len(parts) == 2 and parts[1] in baselines.LINKAGES:
            return {"algo": "hierarchical", "linkage": parts[1]}
        if head == "centroid_sup" and len(parts) == 1:
            return {"algo": "centroid_sup"}
    except ValueError:
        pass
    raise UsageError(f"bad algorithm token {token!r}")


def replicate_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, run]).generate_state(1)[0])


def make_design(design: str, seed: int, n_noise: int = 50, rotation: float = 45.0):
    if design == "noise":
        return datagen.gen_three_clusters_noise(n_noise, seed)
    if design == "grid":
        return datagen.gen_grid_clusters(seed)
    if design == "unbalanced":
        return datagen.gen_unbalanced(seed, rotation)
    if design == "triplets":
        return datagen.gen_nine_triplets(seed)
    raise UsageError(f"unknown design {design!r}")


@dataclass(frozen=True)
class SimulationTask:
    design: str
    run: int
    seed: int
    algos: tuple
    n_noise: int = 50
    rotation: float = 45.0
    r: Optional[float] = None
    r_policy: Optional[str] = None
    temp: Optional[str] = None
    mode: str = "fast"


def run_replicate(task: SimulationTask) -> list:
    """Evaluate every algorithm token on one generated dataset."""
    ds = make_design(task.design, task.seed, task.n_noise, task.rotation)
    defaults = DESIGN_DEFAULTS[task.design]
    r, r_policy = task.r, task.r_policy
    if r is None and r_policy is None:
        r, r_policy = defaults.get("r"), defaults.get("r_policy")
    temp = task.temp if task.temp is not None else defaults.get("temp")
    k = ds.n_groups
    records = []
    for token in task.algos:
        params = parse_algo_token(token)
        algo = params.pop("algo")
        kwargs = dict(params)
        if algo in SUP_ALGOS:
            t = temp
            if algo == "sup_dynamic" and t is not None and t.startswith("static"):
                t = None
            kwargs.update(r=r, r_policy=r_policy, temp=t, opts=SupOptions(mode=task.mode))
        out = run_algorithm(ds.points, algo, k=k, seed=task.seed, **kwargs)
        ev = evaluate(ds.points, out.labels, ds.truth, ds.noise_mask)
        rec = {"design": task.design, "run": task.run, "seed": task.seed, "algo": token,
               "n_points": ds.n_points, "n_noise": int(ds.noise_mask.sum())}
        rec.update(ev.as_record())
        if ds.noise_mask.any():
            rec["noise_in_tiny"] = noise_isolation_summary(out.labels, ds.noise_mask).noise_in_tiny
        rec["r"] = out.info.get("r", "")
        rec["iterations"] = out.info.get("iterations", "")
        records.append(rec)
    return records


def simulate(design: str, runs: int, algos, seed: int = 0, n_noise: int = 50,
             rotation: float = 45.0, r=None, r_policy=None, temp=None, jobs: int = 1,
             mode: str = "fast") -> list:
    """Per-run records, ordered by replicate index then algorithm."""
    if runs < 1:
        raise UsageError("runs must be >= 1")
    algos = tuple(algos)
    for token in algos:
        parse_algo_token(token)
    tasks = [SimulationTask(design, i, replicate_seed(seed, i), algos, n_noise, rotation,
                            r, r_policy, temp, mode) for i in range(runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_replicate, tasks))
    else:
        chunks = [run_replicate(t) for t in tasks]
    return [rec for chunk in chunks for rec in chunk]


def aggregate(records) -> dict:
    """Per-algorithm summary; sums accumulate in replicate order."""
    out = {}
    for rec in records:
        a = out.setdefault(rec["algo"], {"runs": 0, "incorrect": 0, "wss": [], "mistakes": [],
                                         "clusters": []})
        a["runs"] += 1
        a["incorrect"] += 0 if rec["correct_run"] else 1
        a["wss"].append(float(rec["total_withinss"]))
        a["mistakes"].append(int(rec["n_mistakes"]))
        a["clusters"].append(int(rec["n_clusters"]))
    summary = {}
    for algo, a in out.items():
        wss = np.array(a["wss"])
        summary[algo] = {
            "runs": a["runs"],
            "incorrect_runs": a["incorrect"],
            "mean_withinss": float(np.sum(wss) / wss.size),
            "sd_withinss": float(np.std(wss, ddof=1)) if wss.size > 1 else 0.0,
            "mean_mistakes": float(np.sum(a["mistakes"]) / len(a["mistakes"])),
            "perfect_runs": int(np.sum(np.array(a["mistakes"]) == 0)),
            "mean_clusters": float(np.mean(a["clusters"])),
            "max_clusters": int(np.max(a["clusters"])),
        }
    return summary


def format_report(design: str, summary: dict, header: str = "") -> str:
    """Plain-text table in the layout of the corresponding published table."""
    lines = [header] if header else []
    if design == "noise":
        lines.append(f"{'algorithm':<28}{'runs':>8}{'incorrect runs':>16}")
        for algo, s in summary.items():
            lines.append(f"{algo:<28}{s['runs']:>8}{s['incorrect_runs']:>16}")
    elif design == "grid":
        lines.append(f"{'algorithm':<28}{'runs':>8}  total within-cluster variation  max clusters")
        for algo, s in summary.items():
            lines.append(f"{algo:<28}{s['runs']:>8}  {s['mean_withinss']:>12.0f} ({s['sd_withinss']:.0f})"
                         f"{s['max_clusters']:>16}")
    else:
        lines.append(f"{'algorithm':<28}{'runs':>8}{'mean mistakes':>15}{'perfect':>9}"
                     f"{'mean withinss':>15}{'mean clusters':>15}")
        for algo, s in summary.items():
            lines.append(f"{algo:<28}{s['runs']:>8}{s['mean_mistakes']:>15.2f}{s['perfect_runs']:>9}"
                         f"{s['mean_withinss']:>15.2f}{s['mean_clusters']:>15.2f}")
    return "\n".join(lines) + "\n"
