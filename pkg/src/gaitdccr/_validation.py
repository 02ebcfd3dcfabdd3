"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .silhouette import SilhouetteSequence

UNIT_TOL = 1e-6


def check_embeddings(X, normalize=False) -> np.ndarray:
    """2-D finite float64 rows of unit length (or rescaled to it with ``normalize``)."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    norms = np.linalg.norm(X, axis=1)
    if normalize:
        if (norms == 0).any():
            raise ValueError("cannot normalize zero rows")
        return X / norms[:, None]
    if np.abs(norms - 1.0).max() > UNIT_TOL:
        raise ValueError("embedding rows must be unit length (pass normalize=True to rescale)")
    return X


def check_sequences(sequences) -> list:
    """A non-empty list of ``SilhouetteSequence`` sharing one frame shape.

    Bare ``(T, H, W)`` arrays are wrapped.
    """
    if isinstance(sequences, SilhouetteSequence) or (
        isinstance(sequences, np.ndarray) and sequences.ndim == 3
    ):
        sequences = [sequences]
    out = [s if isinstance(s, SilhouetteSequence) else SilhouetteSequence(s) for s in sequences]
    if not out:
        raise ValueError("no sequences")
    shapes = {s.frame_shape for s in out}
    if len(shapes) != 1:
        raise ValueError(f"sequences have mixed frame shapes {sorted(shapes)}")
    return out


def is_sequence_input(X) -> bool:
    if isinstance(X, SilhouetteSequence):
        return True
    if isinstance(X, np.ndarray):
        return X.ndim in (3, 4)
    return isinstance(X, (list, tuple)) and len(X) > 0 and (
        isinstance(X[0], SilhouetteSequence) or np.ndim(X[0]) == 3
    )


def check_inputs(X, input_dim=None) -> np.ndarray:
    """2-D float64 encoder inputs, optionally of a fixed width."""
    X = check_array(X, dtype=np.float64)
    if input_dim is not None and X.shape[1] != input_dim:
        raise ValueError(f"expected {input_dim} input features, got {X.shape[1]}")
    return X
