"""Clustering and retrieval quality against synthetic ground truth."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .clustering import NOISE


class NoMatchableClusterError(ValueError):
    pass


@dataclass
class EvalReport:
    pairwise_f1: float = float("nan")
    centroid_mse: float = float("nan")
    rank1: float = float("nan")
    label_accuracy: float = float("nan")
    noise_fraction: float = float("nan")

    def as_dict(self):
        return asdict(self)


def _pair_count(counts):
    counts = np.asarray(counts, dtype=np.int64)
    return int((counts * (counts - 1) // 2).sum())


def pairwise_f1(labels, identities) -> float:
    """Pair-counting F1 of a clustering against the true identities.

    Predicted pairs are same-cluster pairs of non-noise samples.  True pairs
    are all same-identity pairs, so a noise sample costs recall.
    """
    labels = np.asarray(labels)
    identities = np.asarray(identities)
    if labels.shape != identities.shape:
        raise ValueError("labels and identities must align")
    keep = labels != NOISE
    _, pred_counts = np.unique(labels[keep], return_counts=True)
    _, true_counts = np.unique(identities, return_counts=True)
    # contingency of (cluster, identity) over clustered samples
    _, joint_counts = np.unique(
        np.stack([labels[keep], identities[keep]]), axis=1, return_counts=True
    )
    tp = _pair_count(joint_counts)
    pred = _pair_count(pred_counts)
    true = _pair_count(true_counts)
    if pred == 0 or true == 0 or tp == 0:
        return 0.0
    precision, recall = tp / pred, tp / true
    return 2.0 * precision * recall / (precision + recall)


def majority_identity(labels, identities, num_clusters=None) -> np.ndarray:
    """Majority identity per cluster, ties to the smaller identity."""
    labels = np.asarray(labels)
    identities = np.asarray(identities)
    if num_clusters is None:
        num_clusters = int(labels.max()) + 1 if (labels >= 0).any() else 0
    out = np.empty(num_clusters, dtype=identities.dtype)
    for c in range(num_clusters):
        ids, counts = np.unique(identities[labels == c], return_counts=True)
        if ids.size == 0:
            raise ValueError(f"cluster {c} is empty")
        out[c] = ids[np.argmax(counts)]  # np.unique sorts, argmax takes the first max
    return out


def true_centroids(features, identities):
    """Normalized mean feature per identity: ``(identity values, centroids)``."""
    f = np.asarray(features, dtype=np.float64)
    identities = np.asarray(identities)
    uniq = np.unique(identities)
    cents = np.stack([f[identities == u].mean(axis=0) for u in uniq])
    return uniq, cents / np.linalg.norm(cents, axis=1, keepdims=True)


def centroid_mse(centroids, labels, identities, features) -> float:
    """Mean squared Euclidean distance from each cluster centroid to its true centroid.

    A cluster is matched to its majority identity; the true centroid is the
    normalized mean feature of the cluster members carrying that identity,
    i.e. the correctly clustered samples.
    """
    centroids = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    labels = np.asarray(labels)
    identities = np.asarray(identities)
    f = np.asarray(features, dtype=np.float64)
    if centroids.shape[0] == 0:
        raise NoMatchableClusterError("no clusters to match")
    majority = majority_identity(labels, identities, centroids.shape[0])
    errs = []
    for c, ident in enumerate(majority):
        correct = (labels == c) & (identities == ident)
        mean = f[correct].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0:
            continue
        errs.append(float(((centroids[c] - mean / norm) ** 2).sum()))
    if not errs:
        raise NoMatchableClusterError("no cluster has a usable true centroid")
    return float(np.mean(errs))


def rank1(gallery, gallery_ids, probe, probe_ids, exclude_self=False) -> float:
    """Fraction of probes whose nearest gallery row (cosine) shares their identity.

    With ``exclude_self`` the probe set is the gallery and the diagonal is skipped.
    """
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    probe = np.atleast_2d(np.asarray(probe, dtype=np.float64))
    gallery_ids = np.asarray(gallery_ids)
    probe_ids = np.asarray(probe_ids)
    if gallery.shape[0] == 0:
        raise ValueError("empty gallery")
    if probe.shape[0] == 0:
        return float("nan")
    dist = 1.0 - probe @ gallery.T
    if exclude_self:
        if gallery.shape[0] < 2:
            raise ValueError("self-excluded retrieval needs at least two rows")
        np.fill_diagonal(dist, np.inf)
    nearest = np.argmin(dist, axis=1)
    return float(np.mean(gallery_ids[nearest] == probe_ids))


def label_accuracy(labels, identities) -> float:
    """Fraction of clustered samples whose cluster's majority identity is their own."""
    labels = np.asarray(labels)
    identities = np.asarray(identities)
    keep = labels != NOISE
    if not keep.any():
        return 0.0
    majority = majority_identity(labels, identities)
    return float(np.mean(majority[labels[keep]] == identities[keep]))


def noise_fraction(labels) -> float:
    labels = np.asarray(labels)
    return float(np.mean(labels == NOISE)) if labels.size else 0.0
