"""Density clustering of aligned series under a joint distance/angle rule.

Two series are neighbours only when their euclidean distance is within
``eps`` *and* their cosine similarity reaches ``cos_threshold``. Clusters
then grow exactly as in classical DBSCAN.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .core import AlignedGroup
from .errors import InvalidConfig, LengthMismatch, ZeroVector

NOISE = -1
TRAIN_RATIO = 0.8


@dataclass(frozen=True)
class ClusterParams:
    min_pts: int
    eps: float
    cos_threshold: float

    def __post_init__(self):
        if self.min_pts < 1:
            raise InvalidConfig("min_pts must be >= 1")
        if not self.eps >= 0:
            raise InvalidConfig("eps must be >= 0")
        if not -1.0 <= self.cos_threshold <= 1.0:
            raise InvalidConfig("cos_threshold must lie in [-1, 1]")


PRESETS = {
    "D1": ClusterParams(10, 10.0, 0.80),
    "D2": ClusterParams(10, 10.0, 0.85),
    "D3": ClusterParams(10, 10.0, 0.90),
    "D4": ClusterParams(10, 5.0, 0.90),
}


@dataclass(frozen=True)
class Clustering:
    labels: dict[str, int]
    n_clusters: int

    @property
    def n_series(self) -> int:
        return len(self.labels)

    @property
    def n_noise(self) -> int:
        return sum(1 for c in self.labels.values() if c == NOISE)

    @property
    def noise_fraction(self) -> float:
        # an empty clustering reports 0 rather than 0/0
        return self.n_noise / self.n_series if self.labels else 0.0

    def clusters(self) -> dict[int, list[str]]:
        """Cluster id -> sorted member ids, noise excluded."""
        out: dict[int, list[str]] = {}
        for sid in sorted(self.labels):
            cid = self.labels[sid]
            if cid != NOISE:
                out.setdefault(cid, []).append(sid)
        return dict(sorted(out.items()))


def _pair(u, v) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape or u.size == 0:
        raise LengthMismatch(f"vectors of shape {u.shape} and {v.shape}")
    return u, v


def cosine_similarity(u, v) -> float:
    u, v = _pair(u, v)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine similarity is undefined for an all-zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def euclidean_distance(u, v) -> float:
    u, v = _pair(u, v)
    return float(np.sqrt(np.sum((u - v) ** 2)))


def training_window(group: AlignedGroup, ratio: float = TRAIN_RATIO) -> slice | None:
    """Positions (within the group's common span) used as clustering vectors."""
    span = group.common_span()
    if span is None:
        return None
    length = (span[1].ordinal - span[0].ordinal) // 3 + 1
    n_train = math.floor(ratio * length)
    return slice(0, n_train) if n_train >= 1 else None


def window_matrix(group: AlignedGroup, window: slice | None = None) -> np.ndarray:
    """Member vectors over ``window`` of the common span, one row per member."""
    if window is None:
        window = training_window(group)
    span = group.common_span()
    if window is None or span is None:
        return np.empty((len(group.members), 0))
    rows = [m.span(*span).array()[window] for m in group.members]
    return np.vstack(rows)


def neighbors(
    group: AlignedGroup, idx: int, params: ClusterParams, window: slice | None = None
) -> set[int]:
    """Members within ``eps`` of member ``idx`` and at least ``cos_threshold`` aligned.

    The member itself is always included.
    """
    X = window_matrix(group, window)
    out = {idx}
    for j in range(len(X)):
        if j == idx:
            continue
        if (
            euclidean_distance(X[idx], X[j]) <= params.eps
            and cosine_similarity(X[idx], X[j]) >= params.cos_threshold
        ):
            out.add(j)
    return out


def adjacency(X: np.ndarray, params: ClusterParams) -> np.ndarray:
    """Boolean neighbourhood matrix for the rows of ``X``, diagonal set.

    Rows that are entirely zero have no defined angle and are adjacent only
    to themselves.
    """
    m = len(X)
    if m == 0 or X.shape[1] == 0:
        return np.eye(m, dtype=bool)
    dist = cdist(X, X, metric="euclidean")
    norms = np.linalg.norm(X, axis=1)
    nonzero = norms > 0
    safe = np.where(nonzero, norms, 1.0)
    cos = np.clip((X @ X.T) / np.outer(safe, safe), -1.0, 1.0)
    adj = (dist <= params.eps) & (cos >= params.cos_threshold)
    adj &= np.outer(nonzero, nonzero)
    np.fill_diagonal(adj, True)
    return adj


def _expand(adj: np.ndarray, min_pts: int) -> np.ndarray:
    m = len(adj)
    core = adj.sum(axis=1) >= min_pts
    labels = np.full(m, NOISE, dtype=int)
    cid = 0
    for i in range(m):
        if not core[i] or labels[i] != NOISE:
            continue
        labels[i] = cid
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in np.flatnonzero(adj[p]):
                if labels[q] == NOISE:
                    labels[q] = cid
                    if core[q]:
                        queue.append(q)
        cid += 1
    return labels


def dbscan(group: AlignedGroup, params: ClusterParams, window: slice | None = None) -> Clustering:
    members = sorted(group.members, key=lambda s: s.id)
    if len(members) < params.min_pts:
        return Clustering({s.id: NOISE for s in members}, 0)
    ordered = AlignedGroup(group.region_id, group.pattern, tuple(members))
    X = window_matrix(ordered, window)
    if X.shape[1] == 0:
        return Clustering({s.id: NOISE for s in members}, 0)
    labels = _expand(adjacency(X, params), params.min_pts)
    n_clusters = int(labels.max()) + 1 if len(labels) else 0
    return Clustering({s.id: int(c) for s, c in zip(members, labels)}, n_clusters)


@dataclass(frozen=True)
class ClusterSummary:
    preset: str
    params: ClusterParams
    n_series_clustered: int
    n_clusters: int
    noise_pct: float

    def row(self) -> list:
        p = self.params
        return [
            self.preset,
            p.min_pts,
            repr(float(p.eps)),
            repr(float(p.cos_threshold)),
            self.n_series_clustered,
            self.n_clusters,
            f"{self.noise_pct:.4f}",
        ]


SUMMARY_HEADER = (
    "preset", "min_pts", "eps", "cos_threshold", "n_series_clustered", "n_clusters", "noise_pct",
)


def cluster_dataset(
    groups: Sequence[AlignedGroup], params: ClusterParams, preset: str = "custom"
) -> tuple[Clustering, ClusterSummary]:
    """Cluster every aligned group and renumber clusters globally."""
    labels: dict[str, int] = {}
    offset = 0
    for group in groups:
        local = dbscan(group, params)
        for sid, cid in local.labels.items():
            labels[sid] = cid + offset if cid != NOISE else NOISE
        offset += local.n_clusters
    result = Clustering(labels, offset)
    summary = ClusterSummary(
        preset,
        params,
        n_series_clustered=result.n_series - result.n_noise,
        n_clusters=result.n_clusters,
        noise_pct=100.0 * result.noise_fraction,
    )
    return result, summary


def write_summary_csv(summaries: Iterable[ClusterSummary], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            writer.writerow(s.row())


def write_labels_csv(clustering: Clustering, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("series_id", "cluster_id"))
        for sid in sorted(clustering.labels):
            writer.writerow((sid, clustering.labels[sid]))


def read_labels_csv(path: str | Path) -> Clustering:
    labels = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            labels[row["series_id"]] = int(row["cluster_id"])
    n = len({c for c in labels.values() if c != NOISE})
    return Clustering(labels, n)
