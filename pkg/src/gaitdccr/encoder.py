"""A two-layer perceptron over gait-energy inputs, with hand-written gradients.

The network is ``normalize(relu(x @ w1 + b1) @ w2 + b2)``.  Parameters live in
plain numpy arrays so the optimizer, the EMA teacher and checkpointing can all
treat them as a fixed tuple of arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import arrays
from .silhouette import FRAME_HEIGHT, FRAME_WIDTH, SilhouetteSequence

INPUT_DIM = FRAME_HEIGHT * FRAME_WIDTH
HIDDEN_DIM = 256
EMBED_DIM = 128
PARAM_NAMES = ("w1", "b1", "w2", "b2")


class EncoderDivergenceError(FloatingPointError):
    """Non-finite activations, embeddings or gradients."""


@dataclass
class EncoderParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def input_dim(self):
        return self.w1.shape[0]

    @property
    def hidden_dim(self):
        return self.w1.shape[1]

    @property
    def embed_dim(self):
        return self.w2.shape[1]

    def as_dict(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return EncoderParams(*(getattr(self, n).copy() for n in PARAM_NAMES))

    def map(self, fn, *others):
        """Apply ``fn`` array-wise across this and ``others``."""
        return EncoderParams(
            *(fn(getattr(self, n), *(getattr(o, n) for o in others)) for n in PARAM_NAMES)
        )

    def check_shapes(self, other):
        for n in PARAM_NAMES:
            if getattr(self, n).shape != getattr(other, n).shape:
                raise ValueError(
                    f"shape mismatch for {n}: {getattr(self, n).shape} vs {getattr(other, n).shape}"
                )


def init_params(input_dim=INPUT_DIM, hidden_dim=HIDDEN_DIM, embed_dim=EMBED_DIM, rng=None):
    """Uniform in ``+-1/sqrt(fan_in)`` for weights and biases."""
    rng = np.random.default_rng(rng)
    lim1 = 1.0 / np.sqrt(input_dim)
    lim2 = 1.0 / np.sqrt(hidden_dim)
    return EncoderParams(
        w1=rng.uniform(-lim1, lim1, size=(input_dim, hidden_dim)),
        b1=rng.uniform(-lim1, lim1, size=hidden_dim),
        w2=rng.uniform(-lim2, lim2, size=(hidden_dim, embed_dim)),
        b2=rng.uniform(-lim2, lim2, size=embed_dim),
    )


def gei(seq) -> np.ndarray:
    """Gait-energy input: the per-pixel mean over frames, flattened row-major."""
    frames = seq.frames if isinstance(seq, SilhouetteSequence) else np.asarray(seq)
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise ValueError("gei needs a non-empty (T, H, W) stack of frames")
    return frames.mean(axis=0, dtype=np.float64).ravel()


class ForwardCache(NamedTuple):
    x: np.ndarray
    pre_hidden: np.ndarray
    hidden: np.ndarray
    raw: np.ndarray
    norm: np.ndarray
    out: np.ndarray


def forward(params: EncoderParams, x):
    """Embed a batch; returns ``(embeddings, cache)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ValueError(f"input width {x.shape[1]} != encoder input {params.input_dim}")
    pre = x @ params.w1 + params.b1
    hid = np.maximum(pre, 0.0)
    raw = hid @ params.w2 + params.b2
    norm = np.sqrt(np.einsum("ij,ij->i", raw, raw))[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = raw / norm
    if not np.isfinite(out).all() or not (norm > 0).all():
        raise EncoderDivergenceError("non-finite or zero-norm embedding")
    return out, ForwardCache(x, pre, hid, raw, norm, out)


def encode(params: EncoderParams, x, batch_size=512) -> np.ndarray:
    """Embeddings only, evaluated in fixed-size chunks."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    chunks = [forward(params, x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, params.embed_dim))


def backward(params: EncoderParams, cache: ForwardCache, grad_out) -> EncoderParams:
    """Parameter gradients given d(loss)/d(embeddings)."""
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.out.shape:
        raise ValueError(f"gradient shape {g.shape} != embedding shape {cache.out.shape}")
    y = cache.out
    # d normalize(z) / dz applied to g: (g - y (y.g)) / |z|
    g_raw = (g - y * np.einsum("ij,ij->i", y, g)[:, None]) / cache.norm
    g_w2 = cache.hidden.T @ g_raw
    g_b2 = g_raw.sum(axis=0)
    g_pre = (g_raw @ params.w2.T) * (cache.pre_hidden > 0)
    g_w1 = cache.x.T @ g_pre
    g_b1 = g_pre.sum(axis=0)
    return EncoderParams(g_w1, g_b1, g_w2, g_b2)


@dataclass
class AdamState:
    """Adam with decoupled weight decay and a step learning-rate schedule.

    ``milestones`` are counts of completed steps; once ``step`` reaches a
    milestone the learning rate is multiplied by ``lr_decay``.
    """

    lr: float = 1e-4
    weight_decay: float = 5e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    milestones: tuple = ()
    lr_decay: float = 0.1
    step: int = 0
    m: EncoderParams | None = field(default=None, repr=False)
    v: EncoderParams | None = field(default=None, repr=False)

    def current_lr(self):
        passed = sum(1 for ms in self.milestones if self.step >= ms)
        return self.lr * self.lr_decay**passed


def adam_step(params: EncoderParams, grads: EncoderParams, state: AdamState):
    """One optimizer step; returns ``(new_params, new_state)``."""
    params.check_shapes(grads)
    for n in PARAM_NAMES:
        if not np.isfinite(getattr(grads, n)).all():
            raise EncoderDivergenceError(f"non-finite gradient for {n}")
    b1, b2 = state.betas
    m = state.m if state.m is not None else params.map(np.zeros_like)
    v = state.v if state.v is not None else params.map(np.zeros_like)
    lr = state.current_lr()
    t = state.step + 1
    m = m.map(lambda mi, gi: b1 * mi + (1.0 - b1) * gi, grads)
    v = v.map(lambda vi, gi: b2 * vi + (1.0 - b2) * gi * gi, grads)
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    wd = state.weight_decay

    def update(p, mi, vi):
        return p - lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps) - lr * wd * p

    new_params = params.map(update, m, v)
    return new_params, replace(state, step=t, m=m, v=v)


def ema_update(student: EncoderParams, teacher: EncoderParams, momentum=0.99) -> EncoderParams:
    """``teacher <- momentum * teacher + (1 - momentum) * student``."""
    if not 0.0 <= momentum <= 1.0:
        raise ValueError(f"EMA momentum must lie in [0, 1], got {momentum}")
    student.check_shapes(teacher)
    return teacher.map(lambda t, s: momentum * t + (1.0 - momentum) * s, student)


def save_params(path, params: EncoderParams):
    return arrays.save_arrays(path, params.as_dict())


def load_params(path) -> EncoderParams:
    data = arrays.load_arrays(path)
    missing = [n for n in PARAM_NAMES if n not in data]
    if missing:
        raise arrays.ArrayFileError(f"checkpoint is missing {missing}")
    return EncoderParams(*(data[n] for n in PARAM_NAMES))
