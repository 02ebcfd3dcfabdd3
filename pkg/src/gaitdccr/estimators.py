"""scikit-learn style wrappers around the functional core."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import clustering
from ._validation import check_embeddings, check_inputs, check_sequences, is_sequence_input
from .config import RunConfig
from .encoder import EncoderParams, encode, gei, init_params
from .membank import init_average, init_weighted
from .silhouette import MODES, augment_sequence
from .training import GaitDataset, finetune, pretrain


class GaitEnergyImage(TransformerMixin, BaseEstimator):
    """Silhouette sequences to flattened gait-energy rows."""

    def fit(self, X, y=None):
        seqs = check_sequences(X)
        self.frame_shape_ = seqs[0].frame_shape
        self.n_features_in_ = int(np.prod(self.frame_shape_))
        return self

    def transform(self, X):
        check_is_fitted(self, "frame_shape_")
        seqs = check_sequences(X)
        if seqs[0].frame_shape != self.frame_shape_:
            raise ValueError(f"frame shape {seqs[0].frame_shape} != fitted {self.frame_shape_}")
        return np.stack([gei(s) for s in seqs])


class BodyAugmenter(TransformerMixin, BaseEstimator):
    """Dilate or erode the body rows of each sequence.

    With ``mode=None`` a mode is drawn per sequence from ``random_state``.
    """

    def __init__(self, mode=None, random_state=None):
        self.mode = mode
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.mode is not None and self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES} or None, got {self.mode!r}")
        check_sequences(X)
        return self

    def transform(self, X):
        rng = np.random.default_rng(self.random_state)
        return [augment_sequence(s, rng, self.mode) for s in check_sequences(X)]


class DensityClustering(ClusterMixin, BaseEstimator):
    """Cosine-distance density clustering with density-weighted centroids.

    After ``fit``: ``labels_`` (-1 for noise), ``n_clusters_``, per-sample
    ``density_`` and ``weights_``, and unit ``cluster_centers_`` (weighted, or
    plain means with ``weighted=False``).
    """

    def __init__(self, eps=0.8, min_samples=4, weighted=True, normalize=False):
        self.eps = eps
        self.min_samples = min_samples
        self.weighted = weighted
        self.normalize = normalize

    def fit(self, X, y=None):
        X = check_embeddings(X, normalize=self.normalize)
        dist = clustering.pairwise_distance(X)
        assignment = clustering.dbscan(dist, self.eps, self.min_samples)
        self.labels_ = assignment.labels
        self.n_clusters_ = assignment.num_clusters
        dw = clustering.dwc_weights(dist, assignment.labels)
        self.density_, self.weights_ = dw.density, dw.weights
        if self.n_clusters_ == 0:
            self.cluster_centers_ = np.zeros((0, X.shape[1]))
        elif self.weighted:
            self.cluster_centers_ = init_weighted(X, self.labels_, self.weights_).centroids
        else:
            self.cluster_centers_ = init_average(X, self.labels_).centroids
        self.n_features_in_ = X.shape[1]
        return self


def _as_params(init):
    if init is None or isinstance(init, EncoderParams):
        return init
    params = getattr(init, "params_", None)
    if params is None:
        raise ValueError("init must be EncoderParams or a fitted GaitEncoder")
    return params


def _dataset(X, y, augment):
    if is_sequence_input(X):
        seqs = check_sequences(X)
        return GaitDataset.from_sequences(seqs, y, None, augment=augment)
    X = check_inputs(X)
    return GaitDataset(X, [f"s{i:05d}" for i in range(len(X))],
                       None if y is None else np.asarray(y), None, None)


class GaitEncoder(TransformerMixin, BaseEstimator):
    """Supervised two-layer encoder: ``fit(X, y)`` pre-trains, ``transform`` embeds.

    ``X`` is silhouette sequences or gait-energy rows.
    """

    def __init__(self, hidden=256, embed_dim=128, epochs=6, iterations=25, lr=1e-3,
                 weight_decay=5e-4, temperature=0.05, momentum=0.2, batch_identities=16,
                 batch_instances=8, random_state=0):
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.epochs = epochs
        self.iterations = iterations
        self.lr = lr
        self.weight_decay = weight_decay
        self.temperature = temperature
        self.momentum = momentum
        self.batch_identities = batch_identities
        self.batch_instances = batch_instances
        self.random_state = random_state

    def _config(self):
        return RunConfig(hidden=self.hidden, embed_dim=self.embed_dim,
                         pretrain_epochs=self.epochs, pretrain_iterations=self.iterations,
                         pretrain_lr=self.lr, weight_decay=self.weight_decay,
                         temperature=self.temperature, momentum=self.momentum,
                         batch_identities=self.batch_identities,
                         batch_instances=self.batch_instances, seed=self.random_state)

    def fit(self, X, y):
        if y is None:
            raise ValueError("GaitEncoder.fit needs identity labels y")
        data = _dataset(X, y, augment=False)
        if len(data.identities) != len(data):
            raise ValueError("X and y have different lengths")
        self.params_ = pretrain(data, self._config())
        self.n_features_in_ = data.inputs.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return encode(self.params_, _dataset(X, None, augment=False).inputs)


class GaitDCCR(ClusterMixin, TransformerMixin, BaseEstimator):
    """Unsupervised fine-tuning by alternating clustering and soft-label training.

    ``init`` is a fitted ``GaitEncoder`` or ``EncoderParams``; without it the
    encoder starts from a seeded random initialization.  ``y`` passed to
    ``fit`` is used only to log clustering metrics.

    After ``fit``: ``labels_``, ``n_clusters_``, ``encoder_``, ``teacher_``,
    ``bank_`` and ``log_``.
    """

    def __init__(self, init=None, epochs=12, iterations=25, batch_identities=16,
                 batch_instances=8, eps0=0.8, eta=0.97, decay="exponential", min_samples=4,
                 alpha=0.4, beta=0.4, momentum=0.2, ema=0.99, temperature=0.05, k=2, lr=1e-4,
                 weight_decay=5e-4, milestones=(), hidden=256, embed_dim=128, label_noise=0.0,
                 dcp=True, dwc=True, cpr=True, ctm=True, augment=True, random_state=0):
        self.init = init
        self.epochs = epochs
        self.iterations = iterations
        self.batch_identities = batch_identities
        self.batch_instances = batch_instances
        self.eps0 = eps0
        self.eta = eta
        self.decay = decay
        self.min_samples = min_samples
        self.alpha = alpha
        self.beta = beta
        self.momentum = momentum
        self.ema = ema
        self.temperature = temperature
        self.k = k
        self.lr = lr
        self.weight_decay = weight_decay
        self.milestones = milestones
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.label_noise = label_noise
        self.dcp = dcp
        self.dwc = dwc
        self.cpr = cpr
        self.ctm = ctm
        self.augment = augment
        self.random_state = random_state

    def to_config(self) -> RunConfig:
        names = set(RunConfig.__dataclass_fields__) - {"seed"}
        params = {n: v for n, v in self.get_params(deep=False).items() if n in names}
        params["milestones"] = tuple(params["milestones"])
        return RunConfig(seed=self.random_state, **params)

    def fit(self, X, y=None):
        config = self.to_config()
        data = _dataset(X, y, augment=config.ctm and config.augment)
        init = _as_params(self.init)
        if init is None:
            init = init_params(data.inputs.shape[1], config.hidden, config.embed_dim,
                               np.random.default_rng(config.seed))
        result = finetune(data, init, config)
        self.encoder_, self.teacher_, self.bank_ = result.student, result.teacher, result.bank
        self.log_ = result.log
        if result.assignment is not None:
            self.labels_ = result.assignment.labels
            self.n_clusters_ = result.assignment.num_clusters
        else:
            self.labels_ = np.full(len(data), clustering.NOISE)
            self.n_clusters_ = 0
        self.n_features_in_ = data.inputs.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        return encode(self.encoder_, _dataset(X, None, augment=False).inputs)

    def predict(self, X):
        """Nearest memory-bank centroid of each input."""
        check_is_fitted(self, "encoder_")
        if self.bank_ is None:
            raise ValueError("no clusters were formed; nothing to predict")
        return np.argmax(self.transform(X) @ self.bank_.centroids.T, axis=1)
