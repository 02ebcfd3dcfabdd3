"""Cluster-level InfoNCE with hard or soft targets.

Logits are ``f_i . m_j / temperature``.  Centroids are constants here, so the
gradient flows only into the batch embeddings:
``dL/df_i = (softmax_i - target_i) @ M / (temperature * N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .membank import similarity_logits

_TARGET_TOL = 1e-6


@dataclass
class LossReport:
    loss: float
    per_sample: np.ndarray
    grad: np.ndarray
    probs: np.ndarray


def _report(features, centroids, logp, targets, temperature):
    per_sample = -(targets * logp).sum(axis=1)
    probs = np.exp(logp)
    n = features.shape[0]
    grad = (probs - targets) @ centroids / (temperature * n)
    return LossReport(float(per_sample.mean()), per_sample, grad, probs)


def _prepare(features, bank, temperature):
    centroids = np.asarray(getattr(bank, "centroids", bank), dtype=np.float64)
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    logits = similarity_logits(centroids, features, temperature)
    return features, centroids, log_softmax(logits, axis=1)


def infonce_hard(features, bank, assigned, temperature=0.05) -> LossReport:
    """Mean of ``-log softmax(logits_i)[assigned_i]``."""
    features, centroids, logp = _prepare(features, bank, temperature)
    assigned = np.asarray(assigned)
    c = centroids.shape[0]
    if assigned.shape != (features.shape[0],) or assigned.min() < 0 or assigned.max() >= c:
        raise ValueError("assigned ids must be one valid cluster id per sample")
    targets = np.zeros_like(logp)
    targets[np.arange(len(assigned)), assigned] = 1.0
    return _report(features, centroids, logp, targets, temperature)


def infonce_soft(features, bank, targets, temperature=0.05) -> LossReport:
    """Mean cross-entropy between soft targets and the softmax over centroids."""
    features, centroids, logp = _prepare(features, bank, temperature)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logp.shape:
        raise ValueError(f"targets shape {targets.shape} != logits shape {logp.shape}")
    if (targets < 0).any() or np.abs(targets.sum(axis=1) - 1.0).max() > _TARGET_TOL:
        raise ValueError("each target row must be a probability distribution")
    return _report(features, centroids, logp, targets, temperature)
