"""Binary silhouette frames and sequences.

Covers portable-bitmap I/O, the head/body/legs row partition, and the
clothing-simulation augmentation that dilates or erodes only the body rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

FRAME_HEIGHT = 64
FRAME_WIDTH = 44
FRAME_SHAPE = (FRAME_HEIGHT, FRAME_WIDTH)
TRAIN_WINDOW = 30
MODES = ("dilate", "erode")

MANIFEST_NAME = "manifest.txt"
_FRAME_NAME = "frame_{:04d}.pbm"
# 3x3 full block in-plane; depth 1 so frames of a stack never mix.
_STRUCTURE = np.ones((1, 3, 3), dtype=bool)


class PbmError(ValueError):
    """Base class for portable-bitmap decoding errors."""


class PbmHeaderError(PbmError):
    pass


class PbmDimensionError(PbmError):
    pass


class PbmPayloadError(PbmError):
    pass


def check_frame(frame, shape=None) -> np.ndarray:
    """Return ``frame`` as a 2-D uint8 array of zeros and ones."""
    arr = np.asarray(frame)
    if arr.ndim != 2:
        raise ValueError(f"a frame must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"frame shape {arr.shape} != expected {tuple(shape)}")
    if arr.dtype != bool and not np.isin(arr, (0, 1)).all():
        raise ValueError("frame pixels must be 0 or 1")
    return arr.astype(np.uint8)


@dataclass
class SilhouetteSequence:
    """Ordered binary frames of one walking sample.

    ``frames`` is a ``(T, H, W)`` uint8 array.
    """

    frames: np.ndarray
    sample_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise ValueError(f"expected a non-empty (T, H, W) stack, got shape {frames.shape}")
        if frames.dtype != bool and not np.isin(frames, (0, 1)).all():
            raise ValueError("frame pixels must be 0 or 1")
        self.frames = frames.astype(np.uint8)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def frame_shape(self):
        return self.frames.shape[1:]

    def window(self, length=TRAIN_WINDOW, start=0):
        """Fixed-length training window; wraps around for short sequences."""
        idx = (start + np.arange(length)) % len(self)
        return SilhouetteSequence(self.frames[idx], self.sample_id)


# ---------------------------------------------------------------------------
# Portable bitmap I/O


def _header_tokens(data: bytes, count: int):
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        if pos >= n:
            raise PbmHeaderError("truncated header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = n if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            tokens.append(data[start:pos])
    return tokens, pos


def parse_pbm(data: bytes, shape=None) -> np.ndarray:
    """Decode a P1 or P4 bitmap into a uint8 ``(H, W)`` array."""
    tokens, pos = _header_tokens(data, 3)
    magic, width, height = tokens
    if magic not in (b"P1", b"P4"):
        raise PbmHeaderError(f"unsupported magic number {magic!r}")
    if not (width.isdigit() and height.isdigit()) or int(width) == 0 or int(height) == 0:
        raise PbmHeaderError(f"bad dimensions {width!r} x {height!r}")
    w, h = int(width), int(height)
    if shape is not None and (h, w) != tuple(shape):
        raise PbmDimensionError(f"file is {h}x{w}, expected {shape[0]}x{shape[1]}")

    if magic == b"P4":
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise PbmHeaderError("missing whitespace after header")
        payload = data[pos + 1 :]
        row_bytes = (w + 7) // 8
        if len(payload) != h * row_bytes:
            raise PbmPayloadError(f"expected {h * row_bytes} payload bytes, got {len(payload)}")
        packed = np.frombuffer(payload, dtype=np.uint8).reshape(h, row_bytes)
        return np.unpackbits(packed, axis=1)[:, :w].copy()

    body = bytearray()
    lines = data[pos:].split(b"\n")
    for line in lines:
        body += line.split(b"#", 1)[0]
    digits = bytes(body).translate(None, b" \t\r\v\f")
    if digits.strip(b"01"):
        raise PbmPayloadError("plain bitmap payload contains characters other than 0 and 1")
    if len(digits) != w * h:
        raise PbmPayloadError(f"expected {w * h} pixels, got {len(digits)}")
    return (np.frombuffer(digits, dtype=np.uint8) - ord("0")).reshape(h, w).copy()


def format_pbm(frame) -> bytes:
    """Canonical binary (P4) encoding of ``frame``."""
    frame = check_frame(frame)
    h, w = frame.shape
    return f"P4\n{w} {h}\n".encode() + np.packbits(frame, axis=1).tobytes()


def read_pbm(path, shape=None) -> np.ndarray:
    return parse_pbm(Path(path).read_bytes(), shape=shape)


def write_pbm(path, frame) -> None:
    Path(path).write_bytes(format_pbm(frame))


def write_sequence(directory, seq: SilhouetteSequence) -> Path:
    """Store ``seq`` as numbered P4 frames plus a one-line manifest."""
    if not seq.sample_id or any(ch.isspace() for ch in seq.sample_id):
        raise ValueError(f"sample_id {seq.sample_id!r} must be non-empty without whitespace")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(seq.frames):
        write_pbm(directory / _FRAME_NAME.format(t), frame)
    (directory / MANIFEST_NAME).write_text(f"{seq.sample_id} {len(seq)}\n")
    return directory


def read_sequence(directory, shape=None) -> SilhouetteSequence:
    directory = Path(directory)
    fields = (directory / MANIFEST_NAME).read_text().split()
    if len(fields) != 2 or not fields[1].isdigit():
        raise ValueError(f"malformed manifest in {directory}")
    sample_id, count = fields[0], int(fields[1])
    frames = [read_pbm(directory / _FRAME_NAME.format(t), shape=shape) for t in range(count)]
    return SilhouetteSequence(np.stack(frames), sample_id)


# ---------------------------------------------------------------------------
# Regions and augmentation


class RegionPartition(NamedTuple):
    head: range
    body: range
    legs: range


def partition_regions(frame) -> RegionPartition:
    """Split the rows into head ``[0, H/4)``, body ``[H/4, 3H/4)`` and legs ``[3H/4, H)``.

    ``frame`` may be a frame array or its height.
    """
    height = int(frame) if np.ndim(frame) == 0 else np.shape(frame)[0]
    if height < 4:
        raise ValueError(f"height must be at least 4, got {height}")
    top, bottom = height // 4, (3 * height) // 4
    return RegionPartition(range(0, top), range(top, bottom), range(bottom, height))


def _morph_body(frames: np.ndarray, mode: str) -> np.ndarray:
    if mode == "dilate":
        op = ndimage.binary_dilation
    elif mode == "erode":
        op = ndimage.binary_erosion
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    body = partition_regions(frames.shape[1]).body
    # Morphology sees the whole frame so body-edge rows use their real neighbours.
    morphed = op(frames.astype(bool), structure=_STRUCTURE)
    out = frames.copy()
    out[:, body.start : body.stop] = morphed[:, body.start : body.stop]
    return out


def augment_body(frame, mode: str) -> np.ndarray:
    """Dilate or erode the body rows of one frame with a 3x3 block; head and legs are untouched."""
    frame = check_frame(frame)
    return _morph_body(frame[None], mode)[0]


def augment_sequence(seq: SilhouetteSequence, rng=None, mode=None) -> SilhouetteSequence:
    """Apply one morphology mode, drawn once for the whole sequence, to every frame."""
    if mode is None:
        rng = np.random.default_rng(rng)
        mode = MODES[int(rng.integers(len(MODES)))]
    return SilhouetteSequence(_morph_body(seq.frames, mode), seq.sample_id)
