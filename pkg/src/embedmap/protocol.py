"""Fold-based open-set verification with optional linear mapping.

For every fold the map is fitted on matched pairs from the other folds, a
distance threshold is chosen to maximise accuracy on all training pairs, and
accuracy at that threshold is measured on the held-out fold.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateVectorError, ProtocolError
from .linalg import ridge_fit, truncate_rank
from .metrics import cosine_distances, normalize_rows
from .seeding import derive_rng
from .types import EmbeddingSet, EvalConfig, EvaluationReport, FoldResult, LinearMap, Pair, PairProtocol


@dataclass(frozen=True)
class ScoredPair:
    pair: Pair
    distance: float


def sentinel_eps(lo: float, hi: float) -> float:
    return max(1e-9, 1e-6 * (hi - lo))


def best_threshold(distances, same) -> tuple[float, float, bool]:
    """Vectorised threshold search.

    Candidates are ``min - eps``, the midpoints between adjacent distinct
    distances and ``max + eps``; pairs with distance <= tau are called Same.
    The smallest maximiser is returned together with its accuracy and a flag
    that is True when only one label class is present.
    """
    d = np.asarray(distances, dtype=np.float64)
    same = np.asarray(same, dtype=bool)
    n = d.size
    if n == 0:
        raise ProtocolError("threshold search needs at least one scored pair")
    if not np.all(np.isfinite(d)):
        raise ProtocolError("scored distances must be finite")
    order = np.argsort(d, kind="stable")
    ds, ss = d[order], same[order]
    values, starts = np.unique(ds, return_index=True)
    same_per_value = np.add.reduceat(ss.astype(np.int64), starts)
    size_per_value = np.diff(np.append(starts, n))
    diff_per_value = size_per_value - same_per_value
    n_diff = int(diff_per_value.sum())

    # correct[0]: reject everything; correct[i + 1]: accept values[0..i]
    correct = np.empty(values.size + 1, dtype=np.int64)
    correct[0] = n_diff
    correct[1:] = np.cumsum(same_per_value) + (n_diff - np.cumsum(diff_per_value))
    best = int(np.argmax(correct))

    lo, hi = float(values[0]), float(values[-1])
    eps = sentinel_eps(lo, hi)
    if best == 0:
        tau = lo - eps
    elif best == values.size:
        tau = hi + eps
    else:
        a, b = float(values[best - 1]), float(values[best])
        tau = a + (b - a) / 2
        if tau >= b:
            tau = a
    single_class = n_diff == 0 or n_diff == n
    return tau, correct[best] / n, single_class


def accuracy_of(distances, same, tau: float) -> float:
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise ProtocolError("accuracy of an empty pair list is undefined")
    return float(np.mean((d <= tau) == np.asarray(same, dtype=bool)))


def find_threshold(scored: Sequence[ScoredPair]) -> tuple[float, float]:
    """Return ``(tau, train_accuracy)`` maximising accuracy over ``scored``."""
    if len(scored) == 0:
        raise ProtocolError("threshold search needs at least one scored pair")
    tau, acc, single = best_threshold([s.distance for s in scored], [s.pair.same for s in scored])
    if single:
        warnings.warn("threshold search saw only one label class; threshold is degenerate", stacklevel=2)
    return tau, acc


def accuracy_at(scored: Sequence[ScoredPair], tau: float) -> float:
    if len(scored) == 0:
        raise ProtocolError("accuracy of an empty pair list is undefined")
    return accuracy_of([s.distance for s in scored], [s.pair.same for s in scored], tau)


class _FoldIndex:
    """Every pair of the protocol gathered once into aligned row arrays."""

    def __init__(self, source: EmbeddingSet, target: EmbeddingSet, proto: PairProtocol):
        self.proto = proto
        self.pairs = proto.all_pairs()
        self.fold_of = np.repeat(np.arange(proto.n_folds), [len(f) for f in proto.folds])
        self.rows_a = source.rows(p.id_a for p in self.pairs)
        self.rows_b = target.rows(p.id_b for p in self.pairs)
        self.same = np.fromiter((p.same for p in self.pairs), dtype=bool, count=len(self.pairs))
        self.X = source.vectors[self.rows_a]
        self.Y = target.vectors[self.rows_b]

    def fit_rows(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Source/target rows of the matched pairs outside ``fold``, in protocol order."""
        keep = (self.fold_of != fold) & self.same
        return self.rows_a[keep], self.rows_b[keep]

    def distances(self, M: LinearMap, identity: bool) -> np.ndarray:
        X = self.X if identity else self.X @ M.matrix
        try:
            return cosine_distances(X, self.Y)
        except DegenerateVectorError as exc:
            p = self.pairs[exc.row]
            raise DegenerateVectorError(
                f"degenerate vector for pair ({p.id_a}, {p.id_b}): "
                "mapped source or target embedding is numerically zero"
            ) from exc


def _check_config(source: EmbeddingSet, target: EmbeddingSet, config: EvalConfig) -> None:
    if config.mapping_mode == "identity" and source.dim != target.dim:
        raise ProtocolError(
            f"identity mapping needs equal dimensions, got {source.dim} and {target.dim}"
        )
    if config.mapping_mode == "rank" and config.rank > min(source.dim, target.dim):
        raise ProtocolError(
            f"rank {config.rank} exceeds min(source_dim, target_dim) = {min(source.dim, target.dim)}"
        )


def select_fit_rows(n_available: int, config: EvalConfig, fold: int) -> tuple[np.ndarray, str | None]:
    """Indices of the matched training pairs used to fit the map for ``fold``.

    Subsets are drawn without replacement from a generator seeded by
    ``(config.seed, fold)`` and returned sorted, so asking for every pair
    reproduces the unsubsampled fit bit for bit.
    """
    if config.subsample is None:
        return np.arange(n_available), None
    p = config.subsample
    note = None
    if p > n_available:
        note = f"fold {fold}: requested {p} fit pairs but only {n_available} are available; using all"
        p = n_available
    if p >= n_available:
        return np.arange(n_available), note
    rng = derive_rng(config.seed, "subsample", fold)
    return np.sort(rng.choice(n_available, size=p, replace=False)), note


def _fit_map(source, target, index: _FoldIndex, config: EvalConfig, fold: int):
    if config.mapping_mode == "identity":
        return LinearMap.identity(source.dim, source.system_tag, target.system_tag), None
    rows_a, rows_b = index.fit_rows(fold)
    chosen, note = select_fit_rows(rows_a.size, config, fold)
    if chosen.size == 0:
        raise ProtocolError(f"fold {fold}: no matched training pairs to fit a map")
    S = source.vectors[rows_a[chosen]]
    T = target.vectors[rows_b[chosen]]
    if config.normalize_before_fit:
        S, T = normalize_rows(S), normalize_rows(T)
    M = ridge_fit(S, T, config.lam, source.system_tag, target.system_tag)
    # rank >= min dim is the untruncated map itself
    if config.mapping_mode == "rank" and config.rank < min(M.matrix.shape):
        M = truncate_rank(M, config.rank)
    return M, note


def fold_map(source: EmbeddingSet, target: EmbeddingSet, proto: PairProtocol,
             config: EvalConfig, fold: int) -> LinearMap:
    """The map that ``evaluate`` uses for held-out fold ``fold``."""
    _check_config(source, target, config)
    return _fit_map(source, target, _FoldIndex(source, target, proto), config, fold)[0]


def score_pairs(source: EmbeddingSet, target: EmbeddingSet, pairs: Sequence[Pair],
                linear_map: LinearMap | None = None) -> list[ScoredPair]:
    """Mapped cosine distance for each pair (plain cosine when no map is given)."""
    pairs = list(pairs)
    X = source.vectors[source.rows(p.id_a for p in pairs)]
    Y = target.vectors[target.rows(p.id_b for p in pairs)]
    if linear_map is not None:
        X = X @ linear_map.matrix
    if X.shape[1] != Y.shape[1]:
        raise ProtocolError(f"scored vectors have lengths {X.shape[1]} and {Y.shape[1]}")
    try:
        d = cosine_distances(X, Y)
    except DegenerateVectorError as exc:
        p = pairs[exc.row]
        raise DegenerateVectorError(f"degenerate vector for pair ({p.id_a}, {p.id_b})") from exc
    return [ScoredPair(p, float(x)) for p, x in zip(pairs, d)]


def _evaluate_fold(source, target, index: _FoldIndex, config: EvalConfig, fold: int):
    notes = []
    M, note = _fit_map(source, target, index, config, fold)
    if note:
        notes.append(note)
    d = index.distances(M, config.mapping_mode == "identity")
    test = index.fold_of == fold
    tau, train_acc, single = best_threshold(d[~test], index.same[~test])
    if single:
        notes.append(f"fold {fold}: training pairs contain a single label class; threshold is degenerate")
    test_acc = accuracy_of(d[test], index.same[test], tau)
    return FoldResult(fold, float(tau), float(train_acc), test_acc, M.n_pairs_used), notes


def evaluate(source: EmbeddingSet, target: EmbeddingSet, proto: PairProtocol,
             config: EvalConfig | None = None, jobs: int = 1) -> EvaluationReport:
    """Cross-validated verification accuracy of ``source -> target`` matching.

    Folds are independent; ``jobs > 1`` runs them on a thread pool and gives
    results identical to the sequential run.
    """
    config = config or EvalConfig()
    _check_config(source, target, config)
    index = _FoldIndex(source, target, proto)
    folds = range(proto.n_folds)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda f: _evaluate_fold(source, target, index, config, f), folds))
    else:
        results = [_evaluate_fold(source, target, index, config, f) for f in folds]
    return EvaluationReport(
        per_fold=tuple(r for r, _ in results),
        config=config,
        source_tag=source.system_tag,
        target_tag=target.system_tag,
        warnings=tuple(n for _, notes in results for n in notes),
    )


@dataclass(frozen=True)
class CrossMatrix:
    """All-pairs evaluation; row = source system ("from"), column = target ("to").

    Diagonal cells are native (identity-map) accuracy. ``baseline[i][j]`` is
    the identity-map accuracy across systems, None on the diagonal and where
    dimensions differ.
    """

    tags: tuple[str, ...]
    fitted: tuple[tuple[EvaluationReport, ...], ...]
    baseline: tuple[tuple[EvaluationReport | None, ...], ...]

    def accuracy(self) -> np.ndarray:
        return np.array([[c.mean_accuracy for c in row] for row in self.fitted])

    def baseline_accuracy(self) -> np.ndarray:
        return np.array([[np.nan if c is None else c.mean_accuracy for c in row] for row in self.baseline])

    def max_drop(self) -> float:
        """Largest fall of an off-diagonal cell below its column's native accuracy."""
        acc = self.accuracy()
        n = len(self.tags)
        return max(acc[j, j] - acc[i, j] for i in range(n) for j in range(n) if i != j)


def cross_matrix(systems: Sequence[EmbeddingSet], proto: PairProtocol,
                 config: EvalConfig | None = None, jobs: int = 1) -> CrossMatrix:
    config = config or EvalConfig()
    n = len(systems)
    if n < 2:
        raise ProtocolError(f"cross_matrix needs at least 2 systems, got {n}")
    native = config.replace(mapping_mode="identity", rank=None, subsample=None)

    tasks = []
    for i in range(n):
        for j in range(n):
            if i == j:
                tasks.append((i, j, "fitted", native))
            else:
                tasks.append((i, j, "fitted", config))
                if systems[i].dim == systems[j].dim:
                    tasks.append((i, j, "baseline", native))

    def run(task):
        i, j, _, cfg = task
        return evaluate(systems[i], systems[j], proto, cfg)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(run, tasks))
    else:
        reports = [run(t) for t in tasks]

    fitted = [[None] * n for _ in range(n)]
    baseline = [[None] * n for _ in range(n)]
    for (i, j, kind, _), rep in zip(tasks, reports):
        (fitted if kind == "fitted" else baseline)[i][j] = rep
    tags = tuple(s.system_tag or f"system_{k}" for k, s in enumerate(systems))
    return CrossMatrix(tags, tuple(map(tuple, fitted)), tuple(map(tuple, baseline)))
