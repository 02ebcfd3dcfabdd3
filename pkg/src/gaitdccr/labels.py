"""Soft pseudo-labels.

Hard cluster labels are softened twice: once toward every centroid in
proportion to the sample's own confidence (``refine_cpr``), and once toward
the ``k`` clusters nearest to the teacher's view of a clothing-augmented copy
of the sample (``ctm_probabilities``).  ``fuse`` mixes the two.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.special import expit

STAGES = ("one_hot", "refined", "fused")


def _centroids(bank):
    return np.asarray(getattr(bank, "centroids", bank), dtype=np.float64)


def one_hot(labels, num_clusters) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_clusters):
        raise ValueError("labels must lie in [0, num_clusters)")
    out = np.zeros((labels.size, num_clusters))
    out[np.arange(labels.size), labels] = 1.0
    return out


def confidence_matrix(features, bank) -> np.ndarray:
    """Row-normalized ``sigmoid(-(1 - f_i . m_j))``."""
    centroids = _centroids(bank)
    if centroids.shape[0] == 0:
        raise ValueError("confidence needs at least one centroid")
    p = expit(-(1.0 - np.atleast_2d(features) @ centroids.T))
    return p / p.sum(axis=1, keepdims=True)


def _mix(a, b, weight, name):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {weight}")
    return weight * a + (1.0 - weight) * b


def refine_cpr(one_hot_labels, confidence, alpha=0.4) -> np.ndarray:
    """``alpha * one_hot + (1 - alpha) * confidence``."""
    return _mix(one_hot_labels, confidence, alpha, "alpha")


def latent_cluster_set(teacher_features, bank, k=2):
    """Ids and cosine distances of the ``min(k, C)`` nearest centroids.

    Sorted by distance, ties to the lower id.  Accepts one vector or a batch
    and returns arrays of matching rank.
    """
    centroids = _centroids(bank)
    if centroids.shape[0] == 0:
        raise ValueError("memory bank is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    f = np.asarray(teacher_features, dtype=np.float64)
    single = f.ndim == 1
    dist = 1.0 - np.atleast_2d(f) @ centroids.T
    kk = min(k, centroids.shape[0])
    ids = np.argsort(dist, axis=1, kind="stable")[:, :kk]
    near = np.take_along_axis(dist, ids, axis=1)
    return (ids[0], near[0]) if single else (ids, near)


def ctm_probabilities(ids, distances, num_clusters) -> np.ndarray:
    """Mass ``sigmoid(-d_j)`` normalized over the latent set; zero elsewhere."""
    ids = np.asarray(ids)
    d = np.asarray(distances, dtype=np.float64)
    single = ids.ndim == 1
    ids, d = np.atleast_2d(ids), np.atleast_2d(d)
    if ids.shape[1] == 0:
        raise ValueError("latent cluster set is empty")
    p = expit(-d)
    p /= p.sum(axis=1, keepdims=True)
    out = np.zeros((ids.shape[0], num_clusters))
    np.put_along_axis(out, ids, p, axis=1)
    return out[0] if single else out


def fuse(ctm_probs, refined, beta=0.4) -> np.ndarray:
    """``beta * P + (1 - beta) * refined``."""
    return _mix(ctm_probs, refined, beta, "beta")


def write_soft_labels_csv(path, sample_ids, stage, probs, append=False) -> Path:
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    probs = np.atleast_2d(probs)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(["sample_id", "stage"] + [f"p{j}" for j in range(probs.shape[1])])
        for sid, row in zip(sample_ids, probs):
            writer.writerow([sid, stage] + [f"{v:.12g}" for v in row])
    return path
