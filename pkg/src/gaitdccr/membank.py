"""Cluster-centroid memory bank."""

from __future__ import annotations

import numpy as np

from . import arrays
from .clustering import NOISE

UNIT_TOL = 1e-6
_DEGENERATE_NORM = 1e-12


class DegenerateCentroidError(ArithmeticError):
    """A cluster's (weighted) feature sum has zero length and cannot be normalized."""


def _normalize(v):
    norm = np.linalg.norm(v)
    if norm <= _DEGENERATE_NORM:
        raise DegenerateCentroidError("centroid has zero norm")
    return v / norm


class MemoryBank:
    """One unit-norm centroid per cluster, updated by momentum.

    ``momentum`` weights the *old* centroid: ``m <- normalize(mu*m + (1-mu)*f)``.
    """

    def __init__(self, centroids, momentum=0.2):
        c = np.array(centroids, dtype=np.float64, ndmin=2)
        if c.size and np.abs(np.linalg.norm(c, axis=1) - 1.0).max() > UNIT_TOL:
            raise ValueError("centroids must be unit-norm")
        if not 0.0 <= momentum <= 1.0:
            raise ValueError(f"momentum must lie in [0, 1], got {momentum}")
        self.centroids = c
        self.momentum = float(momentum)

    @property
    def num_clusters(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]

    def momentum_update(self, cluster, feature):
        if not 0 <= cluster < self.num_clusters:
            raise KeyError(f"unknown cluster id {cluster}")
        mu = self.momentum
        self.centroids[cluster] = _normalize(mu * self.centroids[cluster] + (1.0 - mu) * feature)
        return self

    def update_batch(self, clusters, features):
        """Sequential momentum updates in batch order."""
        for c, f in zip(clusters, features):
            self.momentum_update(int(c), f)
        return self

    def similarity_logits(self, features, temperature=0.05):
        return similarity_logits(self, features, temperature)

    def copy(self):
        return MemoryBank(self.centroids.copy(), self.momentum)

    def save(self, path):
        return arrays.save_arrays(path, {"centroids": self.centroids, "momentum": [self.momentum]})

    @classmethod
    def load(cls, path):
        data = arrays.load_arrays(path)
        return cls(data["centroids"], float(data["momentum"][0]))


def _weighted_sums(features, labels, weights, num_clusters):
    f = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.empty((num_clusters, f.shape[1]))
    for c in range(num_clusters):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise ValueError(f"cluster {c} has no members")
        out[c] = _normalize(weights[idx] @ f[idx])
    return out


def _num_clusters(labels):
    labels = np.asarray(labels)
    valid = labels[labels != NOISE]
    if valid.size == 0:
        raise ValueError("assignment has no clusters")
    return int(valid.max()) + 1


def init_weighted(features, labels, weights, momentum=0.2) -> MemoryBank:
    """Centroid = normalize(sum of member weight * feature)."""
    weights = np.asarray(weights, dtype=np.float64)
    labels = np.asarray(labels)
    if np.isnan(weights[labels != NOISE]).any():
        raise ValueError("every clustered sample needs a weight")
    return MemoryBank(_weighted_sums(features, labels, weights, _num_clusters(labels)), momentum)


def init_average(features, labels, momentum=0.2) -> MemoryBank:
    """Centroid = normalize(mean of member features)."""
    labels = np.asarray(labels)
    num = _num_clusters(labels)
    counts = np.bincount(labels[labels != NOISE], minlength=num)
    weights = np.zeros(labels.shape)
    mask = labels != NOISE
    weights[mask] = 1.0 / counts[labels[mask]]
    return MemoryBank(_weighted_sums(features, labels, weights, num), momentum)


def similarity_logits(bank, features, temperature=0.05) -> np.ndarray:
    """``(f_i . m_j) / temperature``; ``bank`` may be a MemoryBank or a centroid matrix."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    centroids = bank.centroids if isinstance(bank, MemoryBank) else np.asarray(bank)
    return np.atleast_2d(features) @ centroids.T / temperature
