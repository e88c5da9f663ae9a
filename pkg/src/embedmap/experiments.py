"""Pair-count sensitivity and rank-ablation sweeps over the verification protocol."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ProtocolError
from .linalg import ridge_fit, svd, variance_explained
from .metrics import normalize_rows
from .protocol import evaluate
from .seeding import derive_seed
from .types import EmbeddingSet, EvalConfig, PairProtocol

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensitivityCurve:
    """Mean accuracy against the number of pairs ``p`` used to fit the map.

    ``p_for_drop`` is the smallest swept p whose accuracy is within
    ``drop_threshold`` of ``full_accuracy`` (None if no point qualifies).
    """

    points: tuple[tuple[int, float], ...]
    full_accuracy: float
    p_for_drop: int | None
    drop_threshold: float
    m: int

    def accuracy_at(self, p: int) -> float:
        return dict(self.points)[p]


@dataclass(frozen=True)
class RankCurve:
    points: tuple[tuple[int, float], ...]
    variance_points: tuple[tuple[int, float], ...]
    full_accuracy: float


def sweep_values(m: int, num_points: int) -> list[int]:
    """``num_points`` integers spread uniformly over [1, m], rounded and deduplicated."""
    if num_points < 2:
        raise ProtocolError(f"num_points must be >= 2, got {num_points}")
    if m < 1:
        raise ProtocolError("no matched training pairs to sweep over")
    return sorted({int(v) for v in np.rint(np.linspace(1, m, num_points))})


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def sensitivity_sweep(source: EmbeddingSet, target: EmbeddingSet, proto: PairProtocol,
                      config: EvalConfig | None = None, num_points: int = 100, seed: int = 42,
                      drop_threshold: float = 0.01, repetitions: int = 1,
                      jobs: int = 1) -> SensitivityCurve:
    """Accuracy as the map is fitted on fewer corresponding pairs.

    Each (p, repetition) gets its own seed derived from ``seed``; inside
    ``evaluate`` that seed is split again per fold, so every fold draws an
    independent subset.
    """
    config = (config or EvalConfig()).replace(subsample=None)
    if config.mapping_mode == "identity":
        raise ProtocolError("a sensitivity sweep needs a fitted map, not the identity")
    if repetitions < 1:
        raise ProtocolError(f"repetitions must be >= 1, got {repetitions}")
    m = min(proto.matched_count(exclude_fold=f) for f in range(proto.n_folds))
    values = sweep_values(m, num_points)

    full = evaluate(source, target, proto, config).mean_accuracy

    def run(p):
        accs = [
            evaluate(source, target, proto,
                     config.replace(subsample=p, seed=derive_seed(seed, "sensitivity", p, r))).mean_accuracy
            for r in range(repetitions)
        ]
        return float(np.mean(accs))

    accs = _map(run, values, jobs)
    points = tuple(zip(values, accs))
    p_for_drop = next((p for p, a in points if a >= full - drop_threshold), None)
    log.info("sensitivity: full=%.4f p_for_drop=%s", full, p_for_drop)
    return SensitivityCurve(points, full, p_for_drop, drop_threshold, m)


def full_data_map(source: EmbeddingSet, target: EmbeddingSet, proto: PairProtocol,
                  config: EvalConfig | None = None):
    """Map fitted on the matched pairs of every fold."""
    config = config or EvalConfig()
    matched = [p for p in proto.all_pairs() if p.same]
    if not matched:
        raise ProtocolError("protocol has no matched pairs")
    S = source.vectors[source.rows(p.id_a for p in matched)]
    T = target.vectors[target.rows(p.id_b for p in matched)]
    if config.normalize_before_fit:
        S, T = normalize_rows(S), normalize_rows(T)
    return ridge_fit(S, T, config.lam, source.system_tag, target.system_tag)


def rank_sweep(source: EmbeddingSet, target: EmbeddingSet, proto: PairProtocol,
               config: EvalConfig | None = None, ranks: Sequence[int] = (2, 4, 8, 16, 32, 64),
               jobs: int = 1) -> RankCurve:
    config = (config or EvalConfig()).replace(mapping_mode="fitted", rank=None)
    top = min(source.dim, target.dim)
    ranks = sorted(set(int(k) for k in ranks))
    if not ranks or ranks[0] < 1 or ranks[-1] > top:
        raise ProtocolError(f"ranks must lie in [1, {top}], got {ranks}")

    full = evaluate(source, target, proto, config).mean_accuracy
    accs = _map(lambda k: evaluate(source, target, proto,
                                   config.replace(mapping_mode="rank", rank=k)).mean_accuracy,
                ranks, jobs)
    dec = svd(full_data_map(source, target, proto, config))
    variance = [variance_explained(dec, k) for k in ranks]
    return RankCurve(tuple(zip(ranks, accs)), tuple(zip(ranks, variance)), full)
