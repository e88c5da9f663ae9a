"""Cosine distance, normalisation and frame averaging."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DegenerateVectorError, ProtocolError
from .types import EmbeddingSet, LinearMap

# vectors shorter than this have no usable direction
MIN_NORM = 1e-30


def _vector(v, name="vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ProtocolError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ProtocolError(f"{name} contains non-finite values")
    return v


def l2_normalize(v) -> np.ndarray:
    v = _vector(v)
    n = np.linalg.norm(v)
    if n < MIN_NORM:
        raise DegenerateVectorError(f"cannot normalise a vector of norm {n:.3g}")
    return v / n


def normalize_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(norms < MIN_NORM)
    if bad.size:
        raise DegenerateVectorError(f"row {int(bad[0])} has norm {norms[bad[0]]:.3g}")
    return X / norms[:, None]


def cosine_distance(u, v) -> float:
    """``1 - cos(u, v)``, clipped to [0, 2]."""
    u = _vector(u, "u")
    v = _vector(v, "v")
    if u.shape != v.shape:
        raise ProtocolError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < MIN_NORM or nv < MIN_NORM:
        raise DegenerateVectorError("cosine distance of a zero vector is undefined")
    d = 1.0 - float(u @ v) / (nu * nv)
    return min(2.0, max(0.0, d))


def cosine_distances(X, Y) -> np.ndarray:
    """Row-wise cosine distance between equally shaped matrices.

    Raises DegenerateVectorError with ``.row`` set to the first offending row.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise ProtocolError(f"shape mismatch: {X.shape} vs {Y.shape}")
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    bad = np.flatnonzero((nx < MIN_NORM) | (ny < MIN_NORM))
    if bad.size:
        err = DegenerateVectorError(f"degenerate vector at row {int(bad[0])}")
        err.row = int(bad[0])
        raise err
    d = 1.0 - np.einsum("ij,ij->i", X, Y) / (nx * ny)
    return np.clip(d, 0.0, 2.0)


def mapped_distance(x, y, linear_map: LinearMap) -> float:
    x = _vector(x, "x")
    y = _vector(y, "y")
    if x.shape[0] != linear_map.source_dim:
        raise ProtocolError(f"x has length {x.shape[0]}, map expects {linear_map.source_dim}")
    if y.shape[0] != linear_map.target_dim:
        raise ProtocolError(f"y has length {y.shape[0]}, map produces {linear_map.target_dim}")
    mx = x @ linear_map.matrix
    if np.linalg.norm(mx) < MIN_NORM:
        raise DegenerateVectorError("mapped vector is numerically zero (x lies in the null space of M^T)")
    return cosine_distance(mx, y)


def average_embeddings(frames: Sequence, max_frames: int = 100) -> np.ndarray:
    """Mean of the first ``max_frames`` unit-normalised frames, re-normalised."""
    if max_frames < 1:
        raise ProtocolError(f"max_frames must be >= 1, got {max_frames}")
    if len(frames) == 0:
        raise ProtocolError("cannot average an empty list of frames")
    used = frames[:max_frames]
    dims = {len(f) for f in used}
    if len(dims) != 1:
        raise ProtocolError(f"frames have differing dimensions {sorted(dims)}")
    stack = normalize_rows(np.asarray(used, dtype=np.float64))
    return l2_normalize(stack.mean(axis=0))


def average_video_embeddings(frames: EmbeddingSet, max_frames: int = 100, sep: str = "/") -> EmbeddingSet:
    """Collapse frame entries ``<video><sep><frame>`` to one entry per video.

    Frames keep their order of appearance in ``frames``; the video ID is
    everything before the last separator.
    """
    groups: dict[str, list[np.ndarray]] = {}
    for entity in frames.ids:
        video, found, _ = entity.rpartition(sep)
        if not found:
            raise ProtocolError(f"frame id {entity!r} has no {sep!r} separator")
        groups.setdefault(video, []).append(frames[entity])
    ids = list(groups)
    return EmbeddingSet(ids, [average_embeddings(groups[v], max_frames) for v in ids], frames.system_tag)
