"""Synthetic gait domains with known identities.

Two renderings share one identity seed derivation
(``default_rng([seed, identity])``):

* ``gen_embeddings`` draws unit-norm feature clouds around per-identity
  anchors, for exercising the clustering stage directly;
* ``gen_silhouettes`` rasterizes a parametric walking figure per identity,
  for the full silhouette -> encoder -> loss loop.

Non-base clothing modes apply a fixed per-identity change (an embedding offset,
or a thicker/thinner torso), so samples of one identity in different clothes
form separate sub-clusters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .silhouette import FRAME_SHAPE, TRAIN_WINDOW, SilhouetteSequence, partition_regions


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic domain.

    ``intra_spread`` and ``clothing_shift`` are angular scales (radians, roughly)
    for embeddings and pixel scales for silhouettes.  ``identity_offset``
    selects a disjoint identity pool; ``salt`` draws fresh samples of the same
    identities.
    """

    num_identities: int = 20
    sequences_per_identity: int = 16
    clothing_conditions: int = 2
    intra_spread: float = 0.05
    clothing_shift: float = 0.5
    seed: int = 0
    dim: int = 128
    frames: int = TRAIN_WINDOW
    identity_offset: int = 0
    salt: int = 0

    def __post_init__(self):
        if self.num_identities < 2:
            raise ValueError("need at least two identities")
        if self.sequences_per_identity < 1 or self.clothing_conditions < 1 or self.frames < 1:
            raise ValueError("counts must be positive")
        if self.intra_spread < 0 or self.clothing_shift < 0:
            raise ValueError("intra_spread and clothing_shift must be non-negative")

    def identity_ids(self):
        return np.arange(self.identity_offset, self.identity_offset + self.num_identities)


@dataclass
class GroundTruth:
    identities: np.ndarray
    clothing: np.ndarray
    sample_ids: list
    centroid_ids: np.ndarray | None = None
    centroids: np.ndarray | None = None


def _identity_rng(spec, identity):
    return np.random.default_rng([spec.seed, int(identity)])


def _sample_rng(spec, identity, k):
    return np.random.default_rng([spec.seed, int(identity), 1 + spec.salt, k])


def _labels(spec):
    identities, clothing, sample_ids = [], [], []
    for ident in spec.identity_ids():
        for k in range(spec.sequences_per_identity):
            c = k % spec.clothing_conditions
            identities.append(ident)
            clothing.append(c)
            sample_ids.append(f"id{ident:04d}_c{c}_s{spec.salt:02d}{k:03d}")
    return np.array(identities), np.array(clothing), sample_ids


def _unit(v):
    return v / np.linalg.norm(v)


def gen_embeddings(spec: SynthSpec):
    """Unit-norm embeddings and their ground truth."""
    identities, clothing, sample_ids = _labels(spec)
    anchors, offsets = {}, {}
    for ident in spec.identity_ids():
        rng = _identity_rng(spec, ident)
        anchors[ident] = _unit(rng.standard_normal(spec.dim))
        offsets[ident] = [np.zeros(spec.dim)] + [
            _unit(rng.standard_normal(spec.dim)) * spec.clothing_shift
            for _ in range(1, spec.clothing_conditions)
        ]
    rows = []
    for ident, c, k in zip(identities, clothing, range(len(identities))):
        rng = _sample_rng(spec, ident, k % spec.sequences_per_identity)
        noise = rng.standard_normal(spec.dim) * (spec.intra_spread / np.sqrt(spec.dim))
        rows.append(_unit(anchors[ident] + offsets[ident][c] + noise))
    feats = np.stack(rows)
    uniq = spec.identity_ids()
    cents = np.stack([feats[identities == u].mean(axis=0) for u in uniq])
    truth = GroundTruth(
        identities, clothing, sample_ids, uniq, cents / np.linalg.norm(cents, axis=1, keepdims=True)
    )
    return feats, truth


def anchors(spec: SynthSpec) -> np.ndarray:
    """The unit anchor of every identity, in identity order."""
    return np.stack(
        [_unit(_identity_rng(spec, i).standard_normal(spec.dim)) for i in spec.identity_ids()]
    )


# ---------------------------------------------------------------------------
# Silhouettes


def _identity_shape(spec, ident):
    rng = _identity_rng(spec, ident)
    # Advance past the embedding draws so both renderings stay independent per identity.
    rng.standard_normal(spec.dim * spec.clothing_conditions)
    return {
        "cx": 22.0 + rng.uniform(-2.0, 2.0),
        "head_r": rng.uniform(3.5, 6.5),
        "shoulder": rng.uniform(4.0, 9.0),
        "waist": rng.uniform(3.0, 7.0),
        "arm_w": rng.uniform(1.0, 2.5),
        "arm_end": rng.uniform(36.0, 46.0),
        "arm_swing": rng.uniform(2.0, 9.0),
        "leg_w": rng.uniform(1.2, 3.5),
        "stride": rng.uniform(3.0, 11.0),
        "cycles": float(rng.integers(1, 3)),
    }


def _clothing_delta(mode, shift):
    if mode == 0:
        return 0.0
    step = (mode + 1) // 2
    return step * shift if mode % 2 else -step * shift


def _segment_mask(rows, cols, p0, p1, width):
    """Pixels within ``width`` of segment p0-p1 (row, col coordinates)."""
    r0, c0 = p0
    r1, c1 = p1
    dr, dc = r1 - r0, c1 - c0
    length2 = dr * dr + dc * dc
    t = ((rows - r0) * dr + (cols - c0) * dc) / length2
    t = np.clip(t, 0.0, 1.0)
    return (rows - (r0 + t * dr)) ** 2 + (cols - (c0 + t * dc)) ** 2 <= width * width


def render_frames(shape_params, clothing_delta, phase0, frames, jitter=None, frame_shape=FRAME_SHAPE):
    """Rasterize a walking figure into a ``(frames, H, W)`` uint8 stack."""
    p = dict(shape_params)
    if jitter:
        for key, value in jitter.items():
            p[key] += value
    h, w = frame_shape
    regions = partition_regions(h)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    head_rows = rows < regions.body.start
    body_rows = (rows >= regions.body.start) & (rows < regions.body.stop)
    leg_rows = rows >= regions.legs.start

    cx = p["cx"]
    top, bottom = regions.body.start, regions.body.stop - 1
    frac = (rows - top) / (bottom - top)
    half = p["shoulder"] + (p["waist"] - p["shoulder"]) * frac + clothing_delta
    torso = body_rows & (np.abs(cols - cx) <= np.maximum(half, 0.5))

    head_c = regions.body.start - p["head_r"] - 1.0
    head = head_rows & ((rows - head_c) ** 2 + (cols - cx) ** 2 <= p["head_r"] ** 2)
    neck = head_rows & (rows > head_c) & (np.abs(cols - cx) <= 1.5)
    static = head | neck | torso

    out = np.empty((frames, h, w), dtype=np.uint8)
    hip = (regions.legs.start - 4.0, cx)
    for t in range(frames):
        phi = phase0 + 2.0 * np.pi * p["cycles"] * t / frames
        swing = np.sin(phi)
        arm = body_rows & _segment_mask(
            rows, cols, (top + 2.0, cx), (p["arm_end"], cx - p["arm_swing"] * swing), p["arm_w"]
        )
        legs = np.zeros_like(static)
        for sign in (1.0, -1.0):
            foot = (h - 1.0, cx + sign * p["stride"] * swing)
            legs |= _segment_mask(rows, cols, hip, foot, p["leg_w"])
        out[t] = static | arm | (legs & leg_rows)
    return out


def gen_silhouettes(spec: SynthSpec):
    """Silhouette sequences and their ground truth (no feature centroids)."""
    identities, clothing, sample_ids = _labels(spec)
    shapes = {ident: _identity_shape(spec, ident) for ident in spec.identity_ids()}
    seqs = []
    for n, (ident, c, sid) in enumerate(zip(identities, clothing, sample_ids)):
        rng = _sample_rng(spec, ident, n % spec.sequences_per_identity)
        phase0 = rng.uniform(0.0, 2.0 * np.pi)
        jitter = None
        if spec.intra_spread > 0:
            s = spec.intra_spread
            jitter = {
                "cx": rng.normal(0.0, s),
                "shoulder": rng.normal(0.0, s),
                "waist": rng.normal(0.0, s),
                "leg_w": rng.normal(0.0, 0.5 * s),
                "stride": rng.normal(0.0, s),
                "arm_swing": rng.normal(0.0, s),
            }
        frames = render_frames(
            shapes[ident], _clothing_delta(c, spec.clothing_shift), phase0, spec.frames, jitter
        )
        seqs.append(SilhouetteSequence(frames, sid))
    return seqs, GroundTruth(identities, clothing, sample_ids)
