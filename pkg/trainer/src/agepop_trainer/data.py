"""Dataset loading and featurization for surrogate training.

Records are JSON Lines with per-record grids; features are the k and mu
samples linearly resampled onto a fixed uniform grid and concatenated.
The trainer talks to the simulation toolkit only through these files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np


class DatasetError(ValueError):
    """Schema violation or unusable record in a dataset file."""


@dataclass(frozen=True)
class Record:
    max_age: float
    k: np.ndarray
    mu: np.ndarray
    zeta: float
    r0: float


def load_records(path) -> list[Record]:
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                rec = Record(
                    max_age=float(doc["max_age"]),
                    k=np.asarray(doc["k"], dtype=float),
                    mu=np.asarray(doc["mu"], dtype=float),
                    zeta=float(doc["zeta"]),
                    r0=float(doc.get("r0", np.nan)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{line_no}: bad record: {exc}") from exc
            if rec.k.ndim != 1 or rec.k.shape != rec.mu.shape:
                raise DatasetError(
                    f"{path}:{line_no}: k/mu must be equal-length vectors"
                )
            records.append(rec)
    if not records:
        raise DatasetError(f"{path}: empty dataset")
    return records


def featurize(record: Record, grid_size: int) -> np.ndarray:
    """Concatenated (k, mu) samples on the fixed training grid."""
    target = np.linspace(0.0, record.max_age, grid_size)
    source = np.linspace(0.0, record.max_age, record.k.size)
    return np.concatenate(
        [np.interp(target, source, record.k), np.interp(target, source, record.mu)]
    )


def feature_matrix(records, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    feats = np.stack([featurize(rec, grid_size) for rec in records])
    targets = np.array([rec.zeta for rec in records])
    return feats, targets


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled train/validation split."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return perm[n_val:], perm[:n_val]


def class_digest(records) -> str:
    """Pointwise-envelope fingerprint of the training inputs."""
    grid_size = min(rec.k.size for rec in records)
    k_stack = np.stack([featurize(rec, grid_size)[:grid_size] for rec in records])
    mu_stack = np.stack([featurize(rec, grid_size)[grid_size:] for rec in records])
    env = np.concatenate(
        [k_stack.min(0), k_stack.max(0), mu_stack.min(0), mu_stack.max(0)]
    )
    return hashlib.sha256(env.tobytes()).hexdigest()[:16]
