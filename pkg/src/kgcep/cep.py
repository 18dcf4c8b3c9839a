"""Clustering evaluation: K-means over labelled entity vectors, scored by predominant-label accuracy."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .kg import LabelMap
from .model import EmbeddingModel

MULTIPLIERS = (1, 2, 4)


@dataclass(frozen=True)
class ClusterConfig:
    multiplier: int = 4
    max_iterations: int = 100
    seed: int = 0
    init: str = "kmeans++"
    n_init: int = 10

    def __post_init__(self):
        if self.multiplier not in MULTIPLIERS:
            raise ValueError(f"multiplier must be one of {MULTIPLIERS}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.init not in ("kmeans++", "random-points"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.n_init < 1:
            raise ValueError("n_init must be positive")


@dataclass
class KMeansResult:
    assignment: np.ndarray
    centers: np.ndarray
    wcss: list
    n_iter: int
    converged: bool


def _sq_dists(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _init_centers(points, K, rng, method):
    n = len(points)
    if method == "random-points":
        return points[rng.choice(n, size=K, replace=False)].copy()
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen[0]][None, :])[:, 0]
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            # all remaining points coincide with a chosen center
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[rng.integers(len(free))])
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(points, points[idx][None, :])[:, 0])
    return points[chosen].copy()


def _update_centers(points, assignment, centers):
    K, k = centers.shape
    counts = np.bincount(assignment, minlength=K)
    new = np.empty_like(centers)
    for j in range(k):
        new[:, j] = np.bincount(assignment, weights=points[:, j], minlength=K)
    nonempty = counts > 0
    new[nonempty] /= counts[nonempty, None]
    new[~nonempty] = centers[~nonempty]
    return new, counts


def kmeans(points, K: int, config: ClusterConfig | None = None, init_centers=None) -> KMeansResult:
    """Lloyd's algorithm with squared Euclidean distance.

    Stops when the assignment no longer changes or after
    ``config.max_iterations`` updates. An empty cluster is re-seeded at the
    point farthest from its current center. ``wcss[i]`` is the objective
    after the i-th assignment step.

    With ``config.n_init > 1`` (and no explicit ``init_centers``) the
    lowest-WCSS run of :func:`best_of_kmeans` is returned.
    """
    config = config or ClusterConfig()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n points, got K={K}, n={n}")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")
    if init_centers is None and config.n_init > 1:
        return best_of_kmeans(points, K, config)
    return _lloyd(points, K, config, init_centers)


def _lloyd(points, K, config, init_centers):
    n = len(points)
    rng = np.random.default_rng(config.seed)
    if init_centers is not None:
        centers = np.array(init_centers, dtype=np.float64).reshape(K, -1)
    else:
        centers = _init_centers(points, K, rng, config.init)
    assignment = None
    wcss = []
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        d2 = _sq_dists(points, centers)
        new_assignment = np.argmin(d2, axis=1)
        wcss.append(float(d2[np.arange(n), new_assignment].sum()))
        if assignment is not None and np.array_equal(new_assignment, assignment):
            converged = True
            break
        assignment = new_assignment
        centers, counts = _update_centers(points, assignment, centers)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            far = _sq_dists(points, centers)[np.arange(n), assignment]
            taken = set()
            for c in empty.tolist():
                order = np.argsort(-far, kind="stable")
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                centers[c] = points[pick]
    return KMeansResult(assignment, centers, wcss, it, converged)


def best_of_kmeans(points, K: int, config: ClusterConfig) -> KMeansResult:
    """Lowest-WCSS result over ``config.n_init`` seeded restarts (first wins ties)."""
    seeds = np.random.SeedSequence(config.seed).generate_state(config.n_init) if config.n_init > 1 else [config.seed]
    best = None
    for s in seeds:
        res = kmeans(points, K, replace(config, seed=int(s), n_init=1))
        if best is None or res.wcss[-1] < best.wcss[-1]:
            best = res
    return best


@dataclass(frozen=True)
class ClusterStat:
    cluster: int
    size: int
    labelled: int
    predominant: int
    t_k: int
    acc: float


def cluster_accuracy(assignment, labels, n_clusters: int | None = None) -> list[ClusterStat]:
    """Predominant label, its count ``T_k`` and share ``Acc_k`` for every cluster with labelled members.

    ``labels`` is aligned with ``assignment``; negative entries mark
    unlabelled points. Ties between modal labels go to the smallest id.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if assignment.shape != labels.shape:
        raise ValueError("assignment and labels must align")
    K = int(n_clusters if n_clusters is not None else (assignment.max() + 1 if assignment.size else 0))
    n_labels = int(labels.max()) + 1 if (labels >= 0).any() else 0
    sizes = np.bincount(assignment, minlength=K)
    stats = []
    lab = labels >= 0
    table = np.zeros((K, max(n_labels, 1)), dtype=np.int64)
    np.add.at(table, (assignment[lab], labels[lab]), 1)
    for c in range(K):
        row = table[c]
        labelled = int(row.sum())
        if labelled == 0:
            continue
        top = int(np.argmax(row))
        stats.append(ClusterStat(c, int(sizes[c]), labelled, top, int(row[top]), float(row[top] / labelled)))
    return stats


def a_mean(accs) -> float:
    """Unweighted mean of per-cluster accuracies."""
    accs = [float(a) for a in accs]
    if not accs:
        raise ValueError("a_mean of an empty list")
    return sum(accs) / len(accs)


def w_mean(accs, weights, l_total=None) -> float:
    """Accuracy mean weighted by each cluster's predominant-label count over ``l_total``.

    ``l_total`` cancels out; the weighted and the cancelled forms are both
    evaluated and must agree to 1e-12.
    """
    accs = np.asarray(accs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if accs.size == 0 or accs.shape != weights.shape:
        raise ValueError("w_mean needs equal-length nonempty lists")
    if weights.sum() <= 0 or (weights <= 0).any():
        raise ValueError("w_mean weights must be positive")
    if l_total is None:
        l_total = weights.sum()
    frac = weights / l_total
    full = float((accs * frac).sum() / frac.sum())
    cancelled = float((accs * (weights / weights.sum())).sum())
    if abs(full - cancelled) > 1e-12:
        raise ArithmeticError(f"w_mean forms disagree: {full!r} vs {cancelled!r}")
    return cancelled


@dataclass
class ClusterReport:
    K: int
    N: int
    clusters: list
    a_mean: float
    w_mean: float
    l_total: int
    n_labels: int
    multiplier: int
    relation: str = ""
    histogram: np.ndarray | None = field(default=None, repr=False)
    label_names: tuple = ()

    def to_dict(self) -> dict:
        return {
            "relation": self.relation,
            "K": self.K,
            "N": self.N,
            "multiplier": self.multiplier,
            "n_labels": self.n_labels,
            "l_total": self.l_total,
            "aMean": self.a_mean,
            "wMean": self.w_mean,
            "clusters": [{"cluster": c.cluster, "size": c.size, "labelled": c.labelled,
                          "predominant": c.predominant, "T_k": c.t_k, "acc": c.acc}
                         for c in self.clusters],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self, config_hash: str) -> str:
        return f"{config_hash},{self.K},{self.N},{self.a_mean!r},{self.w_mean!r}"

    def histogram_csv(self) -> str:
        """Per-cluster label counts with the predominant label and its share."""
        names = self.label_names or tuple(str(i) for i in range(self.n_labels))
        out = io.StringIO()
        out.write("cluster," + ",".join(names) + ",predominant,acc\n")
        by_cluster = {c.cluster: c for c in self.clusters}
        for c in range(self.K):
            row = self.histogram[c] if self.histogram is not None else np.zeros(self.n_labels, int)
            stat = by_cluster.get(c)
            pred = names[stat.predominant] if stat else ""
            acc = repr(stat.acc) if stat else ""
            out.write(f"{c}," + ",".join(str(int(v)) for v in row) + f",{pred},{acc}\n")
        return out.getvalue()


def evaluate_cep(model: EmbeddingModel, labels: LabelMap, config: ClusterConfig | None = None,
                 label_names=None, relation_name: str = "") -> ClusterReport:
    """Cluster the labelled target entities into ``multiplier * L`` groups and score them."""
    config = config or ClusterConfig()
    L = labels.n_labels
    K = config.multiplier * L
    n = len(labels.entities)
    if n < K:
        raise ValueError(f"{n} labelled entities cannot fill K={K} clusters")
    if labels.entities.max(initial=-1) >= len(model.entities):
        raise ValueError("model lacks vectors for some labelled entities")
    points = model.entities[labels.entities]
    res = best_of_kmeans(points, K, config)
    stats = cluster_accuracy(res.assignment, labels.labels, K)
    accs = [s.acc for s in stats]
    ts = [s.t_k for s in stats]
    hist = np.zeros((K, L), dtype=np.int64)
    np.add.at(hist, (res.assignment, labels.labels), 1)
    return ClusterReport(K=K, N=len(stats), clusters=stats, a_mean=a_mean(accs),
                         w_mean=w_mean(accs, ts, n), l_total=n, n_labels=L,
                         multiplier=config.multiplier, relation=relation_name,
                         histogram=hist, label_names=tuple(label_names or ()))
