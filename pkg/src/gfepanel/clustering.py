"""Lloyd's k-means on unit moment vectors and the gamma-rule for K.

The number of groups is chosen as the smallest K whose per-unit k-means
objective falls below gamma times the sampling noise of the moment
vectors, then checked against the sqrt(T) << K < T*sqrt(N) window that
keeps both the discretization error and the incidental-parameter noise
small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KOutOfRange, ThresholdUnreachable
from .panel import PanelDataset

#: "K well above sqrt(T)" is operationalized as K >= LOWER_MARGIN * sqrt(T).
LOWER_MARGIN = 2.0


@dataclass(frozen=True)
class ClusterResult:
    """Best k-means solution found: 1-based labels, centroids, objective."""

    K: int
    assignments: np.ndarray = field(repr=False)   # (N,) int, values 1..K
    centroids: np.ndarray = field(repr=False)     # (K, J)
    objective: float                              # sum of squared distances
    restarts_used: int
    seed: int


@dataclass(frozen=True)
class KSelection:
    """Outcome of the gamma-rule scan over K."""

    gamma: float
    chosen_K: int
    noise_variance: float
    objective_path: dict            # K -> per-unit objective Q(K)/N
    rule_compliant: bool
    lower_bound: float              # sqrt(T)
    upper_bound: float              # T * sqrt(N)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a center; any choice works
            centers[j:] = points[rng.integers(n, size=k - j)]
            break
        centers[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    """Lloyd iterations to a fixed point; ties go to the lowest label.

    Empty clusters are repaired by reseeding on the point farthest from
    its current centroid, so every label survives to the output.
    """
    n = points.shape[0]
    k = centers.shape[0]
    centers = centers.copy()
    prev_obj = np.inf
    labels = None
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        own = d2[np.arange(n), labels]
        for j in range(k):
            if not np.any(labels == j):
                far = int(np.argmax(own))
                labels[far] = j
                own[far] = 0.0
        for j in range(k):
            centers[j] = points[labels == j].mean(axis=0)
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        obj = float(d2[np.arange(n), labels].sum())
        if prev_obj - obj <= 1e-10 * (1.0 + obj):
            break
        prev_obj = obj
    # final repair pass in case the last argmin emptied a cluster
    own = ((points - centers[labels]) ** 2).sum(axis=1)
    for j in range(k):
        if not np.any(labels == j):
            far = int(np.argmax(own))
            labels[far] = j
            centers[j] = points[far]
            own[far] = 0.0
    for j in range(k):
        centers[j] = points[labels == j].mean(axis=0)
    obj = float(((points - centers[labels]) ** 2).sum())
    return labels, centers, obj


def kmeans(points: np.ndarray, K: int, restarts: int = 10, seed: int = 0) -> ClusterResult:
    """Best of `restarts` k-means++ initialized Lloyd runs; ties keep the
    earliest restart, so the result is deterministic given the seed."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not 1 <= K <= n:
        raise KOutOfRange(f"K={K} outside 1..{n}")
    if restarts < 1:
        raise KOutOfRange("restarts must be >= 1")
    streams = np.random.SeedSequence((seed, K)).spawn(restarts)
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(streams[r])
        labels, centers, obj = _lloyd(points, _kmeanspp_init(points, K, rng))
        if best is None or obj < best[2]:
            best = (labels, centers, obj)
    labels, centers, obj = best
    return ClusterResult(
        K=K,
        assignments=labels + 1,
        centroids=centers,
        objective=obj,
        restarts_used=restarts,
        seed=seed,
    )


def noise_variance(data: PanelDataset) -> float:
    """Sampling variance of the unit moment vectors around their limits.

    Per unit, the variance of the time average of x_it is the within-unit
    dispersion divided by T; averaging the usual unbiased estimate over
    units and summing coordinates gives
    (1/N) sum_i (1/(T(T-1))) sum_t ||x_it - xbar_i||^2.
    """
    t = data.n_periods
    dev = data.X - data.X.mean(axis=1, keepdims=True)
    per_unit = (dev ** 2).sum(axis=(1, 2)) / (t * (t - 1))
    return float(per_unit.mean())


def _scan_objective_path(points, gammas, vhat, restarts, seed, k_max):
    """Walk K upward until the smallest gamma threshold is met.

    Besides the k-means++ restarts, each K also tries a warm start that
    splits the previous solution at its worst-served point; that keeps the
    recorded per-unit objective path non-increasing in K.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    tightest = min(gammas) * vhat
    path: dict[int, float] = {}
    results: dict[int, ClusterResult] = {}
    prev = None
    for k in range(1, min(k_max, n) + 1):
        res = kmeans(points, k, restarts=restarts, seed=seed)
        labels, centers, obj = res.assignments - 1, res.centroids, res.objective
        if prev is not None:
            plabels, pcenters, pobj = prev
            far = int(np.argmax(((points - pcenters[plabels]) ** 2).sum(axis=1)))
            warm = np.vstack([pcenters, points[far]])
            wlabels, wcenters, wobj = _lloyd(points, warm)
            if wobj < obj:
                labels, centers, obj = wlabels, wcenters, wobj
                res = ClusterResult(
                    K=k,
                    assignments=labels + 1,
                    centroids=centers,
                    objective=obj,
                    restarts_used=restarts,
                    seed=seed,
                )
        path[k] = obj / n
        results[k] = res
        if path[k] <= tightest:
            break
        prev = (labels, centers, obj)
    return path, results


def _compliance(k: int, n: int, t: int):
    lower = float(np.sqrt(t))
    upper = float(t * np.sqrt(n))
    return (LOWER_MARGIN * lower <= k < upper), lower, upper


def select_K(points: np.ndarray, gamma: float, data: PanelDataset,
             restarts: int = 10, seed: int = 0) -> KSelection:
    """Smallest K whose per-unit objective is <= gamma * noise_variance."""
    sel, _ = _select_K_with_clusters(points, gamma, data, restarts, seed)
    return sel


def _select_K_with_clusters(points, gamma, data, restarts=10, seed=0):
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    vhat = noise_variance(data)
    n = np.asarray(points).shape[0]
    path, results = _scan_objective_path(points, [gamma], vhat, restarts, seed, k_max=n)
    chosen = max(path)
    if path[chosen] > gamma * vhat:
        raise ThresholdUnreachable(
            f"objective never fell below gamma * Vhat = {gamma * vhat:.3g} by K={chosen}"
        )
    compliant, lower, upper = _compliance(chosen, n, data.n_periods)
    sel = KSelection(
        gamma=gamma,
        chosen_K=chosen,
        noise_variance=vhat,
        objective_path=dict(path),
        rule_compliant=compliant,
        lower_bound=lower,
        upper_bound=upper,
    )
    return sel, results[chosen]
