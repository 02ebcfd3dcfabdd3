"""Pseudo-label generation: cosine distances, DBSCAN, the decaying radius
schedule, and per-cluster density weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit

NOISE = -1
DECAY_MODES = ("exponential", "linear", "square")
UNIT_TOL = 1e-6


def pairwise_distance(features) -> np.ndarray:
    """Cosine distance ``1 - f_i . f_j`` between unit-norm rows, clipped to [0, 2]."""
    f = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(f, axis=1)
    if f.ndim != 2 or np.abs(norms - 1.0).max(initial=0.0) > UNIT_TOL:
        raise ValueError("pairwise_distance expects a 2-D matrix of unit-norm rows")
    d = 1.0 - f @ f.T
    d = np.clip((d + d.T) / 2.0, 0.0, 2.0)
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True)
class DcpSchedule:
    """Per-epoch clustering radius.

    ``exponential`` is ``eps0 * eta**epoch``.  ``linear`` and ``square`` need
    ``epochs`` and interpolate from ``eps0`` at epoch 0 to the exponential
    schedule's value at the final epoch; ``square`` follows ``(e / last)**2``,
    so it decays slowly first and fast at the end.
    """

    eps0: float = 0.8
    eta: float = 0.97
    mode: str = "exponential"
    epochs: int | None = None

    def __post_init__(self):
        if not 0.0 < self.eps0 <= 2.0:
            raise ValueError(f"eps0 must lie in (0, 2], got {self.eps0}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.mode not in DECAY_MODES:
            raise ValueError(f"mode must be one of {DECAY_MODES}, got {self.mode!r}")
        if self.mode != "exponential" and (self.epochs is None or self.epochs < 1):
            raise ValueError(f"{self.mode} decay needs the total number of epochs")

    def eps_at(self, epoch: int) -> float:
        return eps_at(self, epoch)


def eps_at(schedule: DcpSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if schedule.mode == "exponential":
        return schedule.eps0 * schedule.eta**epoch
    last = schedule.epochs - 1
    if last == 0:
        return schedule.eps0
    end = schedule.eps0 * schedule.eta**last
    frac = min(epoch, last) / last
    if schedule.mode == "square":
        frac = frac * frac
    return schedule.eps0 - (schedule.eps0 - end) * frac


class ClusterAssignment(NamedTuple):
    labels: np.ndarray
    num_clusters: int
    epsilon_used: float

    @property
    def noise_mask(self):
        return self.labels == NOISE

    def members(self):
        """Sample indices per cluster id."""
        order = np.argsort(self.labels, kind="stable")
        counts = np.bincount(self.labels[self.labels >= 0], minlength=self.num_clusters)
        start = int(self.noise_mask.sum())
        out = []
        for c in range(self.num_clusters):
            out.append(order[start : start + counts[c]])
            start += counts[c]
        return out


def relabel_by_first_appearance(labels) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.full(labels.shape, NOISE, dtype=np.int64)
    mapping = {}
    for i, lab in enumerate(labels):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def dbscan(distances, eps: float, min_samples: int = 4) -> ClusterAssignment:
    """Density-based clustering over a precomputed distance matrix.

    A point is core when at least ``min_samples`` points (itself included) lie
    within ``eps``.  Clusters are grown from core points in index order; a
    border point reachable from several clusters joins the one grown first.
    Labels are renumbered by first appearance in sample order.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distances must be a square matrix")
    if eps <= 0 or min_samples < 1:
        raise ValueError("need eps > 0 and min_samples >= 1")
    n = d.shape[0]
    neighbors = d <= eps
    core = neighbors.sum(axis=1) >= min_samples
    labels = np.full(n, NOISE, dtype=np.int64)
    cluster = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = cluster
        stack = [seed]
        while stack:
            p = stack.pop()
            for q in np.flatnonzero(neighbors[p] & (labels == NOISE)):
                labels[q] = cluster
                if core[q]:
                    stack.append(q)
        cluster += 1
    labels = relabel_by_first_appearance(labels)
    return ClusterAssignment(labels, cluster, float(eps))


class DensityWeights(NamedTuple):
    density: np.ndarray
    weights: np.ndarray


def density_distance(distances, labels) -> np.ndarray:
    """``sigmoid(-mean intra-cluster distance)`` per sample; NaN for noise.

    The mean runs over every member of the sample's cluster, itself included.
    """
    d = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.full(labels.shape, np.nan)
    for c in np.unique(labels[labels != NOISE]):
        idx = np.flatnonzero(labels == c)
        out[idx] = expit(-d[np.ix_(idx, idx)].mean(axis=1))
    return out


def cluster_weights(density, labels) -> np.ndarray:
    """Normalize density values to sum to one within each cluster; NaN for noise."""
    density = np.asarray(density, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.full(labels.shape, np.nan)
    for c in np.unique(labels[labels != NOISE]):
        idx = labels == c
        out[idx] = density[idx] / density[idx].sum()
    return out


def dwc_weights(distances, labels) -> DensityWeights:
    density = density_distance(distances, labels)
    return DensityWeights(density, cluster_weights(density, labels))


def write_assignment_csv(path, sample_ids, assignment: ClusterAssignment) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "label", "epsilon_used"])
        for sid, lab in zip(sample_ids, assignment.labels):
            writer.writerow([sid, int(lab), repr(assignment.epsilon_used)])
    return path


def read_assignment_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["sample_id"] for r in rows]
    labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
    eps = float(rows[0]["epsilon_used"]) if rows else float("nan")
    num = int(labels.max()) + 1 if (labels >= 0).any() else 0
    return ids, ClusterAssignment(labels, num, eps)
