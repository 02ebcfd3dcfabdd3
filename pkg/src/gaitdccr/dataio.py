"""On-disk synthetic datasets.

A dataset directory holds one sub-directory per split (``source``, ``target``,
``eval``).  Each split has ``manifest.csv`` (sample_id, identity, clothing)
and either ``embeddings.bin`` (plus the true identity centroids as a memory
bank file, ``centroids.bin``) or ``silhouettes/<sample_id>/`` sequence
directories.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .arrays import load_arrays, save_arrays
from .membank import MemoryBank
from .silhouette import read_sequence, write_sequence
from .synthgen import SynthSpec, gen_embeddings, gen_silhouettes
from .training import GaitDataset, split_specs

SPLITS = ("source", "target", "eval")
MANIFEST = "manifest.csv"
EMBEDDINGS = "embeddings.bin"
SILHOUETTES = "silhouettes"
CENTROIDS = "centroids.bin"


class DatasetError(ValueError):
    pass


def write_manifest(path, sample_ids, identities, clothing) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "identity", "clothing"])
        for row in zip(sample_ids, identities, clothing):
            writer.writerow([row[0], int(row[1]), int(row[2])])
    return path


def read_manifest(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc.strerror}") from exc
    try:
        ids = [r["sample_id"] for r in rows]
        identities = np.array([int(r["identity"]) for r in rows], dtype=np.int64)
        clothing = np.array([int(r["clothing"]) for r in rows], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed manifest {path}") from exc
    if not rows:
        raise DatasetError(f"empty manifest {path}")
    return ids, identities, clothing


def write_split(directory, spec: SynthSpec, kind="silhouettes") -> Path:
    directory = Path(directory)
    if kind == "embeddings":
        feats, truth = gen_embeddings(spec)
        save_arrays(directory / EMBEDDINGS, {"features": feats})
        MemoryBank(truth.centroids).save(directory / CENTROIDS)
    else:
        seqs, truth = gen_silhouettes(spec)
        for seq in seqs:
            write_sequence(directory / SILHOUETTES / seq.sample_id, seq)
    write_manifest(directory / MANIFEST, truth.sample_ids, truth.identities, truth.clothing)
    return directory


def write_dataset(directory, data) -> Path:
    directory = Path(directory)
    for name, spec in split_specs(data).items():
        write_split(directory / name, spec, data.kind)
    return directory


def read_split(directory, augment=False) -> GaitDataset:
    """Load one split as a ``GaitDataset`` (embeddings are used as inputs directly)."""
    directory = Path(directory)
    ids, identities, clothing = read_manifest(directory / MANIFEST)
    if (directory / EMBEDDINGS).exists():
        feats = load_arrays(directory / EMBEDDINGS).get("features")
        if feats is None or feats.shape[0] != len(ids):
            raise DatasetError(f"{directory / EMBEDDINGS} does not match the manifest")
        return GaitDataset(feats, ids, identities, clothing, None)
    seq_root = directory / SILHOUETTES
    if not seq_root.is_dir():
        raise DatasetError(f"{directory} has neither {EMBEDDINGS} nor {SILHOUETTES}/")
    seqs = []
    for sid in ids:
        try:
            seqs.append(read_sequence(seq_root / sid))
        except OSError as exc:
            raise DatasetError(f"cannot read sequence {sid}: {exc.strerror}") from exc
    return GaitDataset.from_sequences(seqs, identities, clothing, augment=augment)


def resolve_split(directory, name) -> Path:
    """``directory/name`` if present, else ``directory`` itself when it is a split."""
    directory = Path(directory)
    if (directory / name / MANIFEST).exists():
        return directory / name
    if (directory / MANIFEST).exists():
        return directory
    raise DatasetError(f"no '{name}' split under {directory}")
