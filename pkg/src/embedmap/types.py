"""Domain types: embedding sets, verification protocols, maps and results.

Everything here is immutable after construction. Arrays are stored with the
write flag cleared so objects can be shared between worker threads.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ProtocolError

SAME = True
DIFFERENT = False

MAPPING_MODES = ("fitted", "identity", "rank")


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ProtocolError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ProtocolError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


class EmbeddingSet:
    """A labelled collection of equal-length real vectors.

    Vectors are kept as rows of one float64 matrix, in insertion order, with
    an ID -> row lookup. ``system_tag`` names the model that produced them.
    """

    __slots__ = ("_ids", "_vectors", "_index", "system_tag")

    def __init__(self, ids: Sequence[str], vectors, system_tag: str = ""):
        ids = tuple(str(i) for i in ids)
        if not ids:
            raise ProtocolError("embedding set has no entries")
        vectors = _frozen_array(vectors, 2, "embedding matrix")
        if vectors.shape[0] != len(ids):
            raise ProtocolError(
                f"{len(ids)} ids but {vectors.shape[0]} vectors in embedding set"
            )
        if vectors.shape[1] < 1:
            raise ProtocolError("embedding dimension must be positive")
        index = {}
        for row, entity in enumerate(ids):
            if entity in index:
                raise ProtocolError(f"duplicate entity id {entity!r}")
            index[entity] = row
        self._ids = ids
        self._vectors = vectors
        self._index = index
        self.system_tag = str(system_tag)

    @classmethod
    def from_mapping(cls, entries: Mapping[str, Sequence[float]], system_tag: str = ""):
        ids = list(entries)
        if not ids:
            raise ProtocolError("embedding set has no entries")
        lengths = {len(entries[i]) for i in ids}
        if len(lengths) != 1:
            raise ProtocolError(f"vectors have differing lengths {sorted(lengths)}")
        return cls(ids, [list(entries[i]) for i in ids], system_tag)

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def entries(self) -> dict[str, np.ndarray]:
        return {i: self._vectors[r] for i, r in self._index.items()}

    def rows(self, ids: Iterable[str]) -> np.ndarray:
        """Row indices for ``ids``; raises ProtocolError naming the first unknown ID."""
        out = []
        for entity in ids:
            try:
                out.append(self._index[entity])
            except KeyError:
                tag = f" ({self.system_tag})" if self.system_tag else ""
                raise ProtocolError(f"entity id {entity!r} not found in embedding set{tag}") from None
        return np.asarray(out, dtype=np.intp)

    def scaled(self, factor: float) -> "EmbeddingSet":
        return EmbeddingSet(self._ids, self._vectors * factor, self.system_tag)

    def __getitem__(self, entity: str) -> np.ndarray:
        return self._vectors[self._index[entity]]

    def __contains__(self, entity) -> bool:
        return entity in self._index

    def __len__(self) -> int:
        return len(self._ids)

    def __iter__(self) -> Iterator[str]:
        return iter(self._ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self._ids == other._ids
            and self.system_tag == other.system_tag
            and np.array_equal(self._vectors, other._vectors)
        )

    def __repr__(self) -> str:
        return f"EmbeddingSet(tag={self.system_tag!r}, n={len(self)}, dim={self.dim})"


@dataclass(frozen=True)
class Pair:
    id_a: str
    id_b: str
    same: bool


@dataclass(frozen=True)
class PairProtocol:
    """Verification pairs partitioned into folds (the pairs.txt role)."""

    folds: tuple[tuple[Pair, ...], ...]

    def __post_init__(self):
        folds = tuple(tuple(f) for f in self.folds)
        object.__setattr__(self, "folds", folds)
        if len(folds) < 2:
            raise ProtocolError(f"a protocol needs at least 2 folds, got {len(folds)}")
        seen = set()
        for k, fold in enumerate(folds):
            if not fold:
                raise ProtocolError(f"fold {k} is empty")
            for pair in fold:
                if pair in seen:
                    raise ProtocolError(
                        f"pair ({pair.id_a}, {pair.id_b}, same={pair.same}) appears more than once"
                    )
                seen.add(pair)

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def all_pairs(self) -> list[Pair]:
        return [p for fold in self.folds for p in fold]

    def matched_count(self, exclude_fold: int | None = None) -> int:
        """Number of Same pairs over all folds except ``exclude_fold``."""
        return sum(
            p.same
            for k, fold in enumerate(self.folds)
            if k != exclude_fold
            for p in fold
        )

    def check_resolves(self, source: EmbeddingSet, target: EmbeddingSet) -> None:
        for pair in self.all_pairs():
            if pair.id_a not in source:
                raise ProtocolError(f"entity id {pair.id_a!r} not found in source set {source.system_tag!r}")
            if pair.id_b not in target:
                raise ProtocolError(f"entity id {pair.id_b!r} not found in target set {target.system_tag!r}")


@dataclass(frozen=True, eq=False)
class LinearMap:
    """A source_dim x target_dim matrix M; embeddings map as ``x @ M``."""

    matrix: np.ndarray
    lam: float = 1.0
    n_pairs_used: int = 0
    source_tag: str = ""
    target_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_array(self.matrix, 2, "mapping matrix"))
        if min(self.matrix.shape) < 1:
            raise ProtocolError(f"mapping matrix has empty shape {self.matrix.shape}")
        if not self.lam >= 0:
            raise ProtocolError(f"ridge coefficient must be nonnegative, got {self.lam}")

    @classmethod
    def identity(cls, dim: int, source_tag: str = "", target_tag: str = ""):
        return cls(np.eye(dim), lam=0.0, n_pairs_used=0, source_tag=source_tag, target_tag=target_tag)

    @property
    def source_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def target_dim(self) -> int:
        return self.matrix.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.matrix

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinearMap):
            return NotImplemented
        return (
            np.array_equal(self.matrix, other.matrix)
            and self.lam == other.lam
            and self.n_pairs_used == other.n_pairs_used
            and self.source_tag == other.source_tag
            and self.target_tag == other.target_tag
        )


@dataclass(frozen=True)
class EvalConfig:
    """Knobs for one cross-validated evaluation.

    mapping_mode is ``"fitted"``, ``"identity"`` or ``"rank"`` (with ``rank``
    set). ``subsample=None`` fits on every matched training pair; an integer
    draws that many per fold using ``seed``.
    """

    lam: float = 1.0
    mapping_mode: str = "fitted"
    rank: int | None = None
    subsample: int | None = None
    seed: int = 42
    normalize_before_fit: bool = True

    def __post_init__(self):
        if self.mapping_mode not in MAPPING_MODES:
            raise ProtocolError(f"unknown mapping mode {self.mapping_mode!r}; expected one of {MAPPING_MODES}")
        if self.mapping_mode == "rank":
            if self.rank is None or self.rank < 1:
                raise ProtocolError(f"rank mode needs rank >= 1, got {self.rank}")
        elif self.rank is not None:
            raise ProtocolError(f"rank given but mapping mode is {self.mapping_mode!r}")
        if self.subsample is not None and self.subsample < 0:
            raise ProtocolError(f"subsample count must be >= 0, got {self.subsample}")
        if not self.lam >= 0:
            raise ProtocolError(f"ridge coefficient must be nonnegative, got {self.lam}")

    def replace(self, **changes) -> "EvalConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ProtocolError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class FoldResult:
    fold_index: int
    threshold: float
    train_accuracy: float
    test_accuracy: float
    n_pairs_used: int = 0

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ProtocolError(f"fold {self.fold_index}: threshold is not finite")
        for name in ("train_accuracy", "test_accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ProtocolError(f"fold {self.fold_index}: {name}={value} outside [0, 1]")


@dataclass(frozen=True)
class EvaluationReport:
    """Per-fold results plus their mean and (population) standard deviation."""

    per_fold: tuple[FoldResult, ...]
    config: EvalConfig
    source_tag: str = ""
    target_tag: str = ""
    warnings: tuple[str, ...] = ()
    mean_accuracy: float = field(init=False)
    std_accuracy: float = field(init=False)

    def __post_init__(self):
        folds = tuple(self.per_fold)
        if not folds:
            raise ProtocolError("report has no folds")
        object.__setattr__(self, "per_fold", folds)
        object.__setattr__(self, "warnings", tuple(self.warnings))
        acc = np.array([f.test_accuracy for f in folds])
        object.__setattr__(self, "mean_accuracy", float(acc.mean()))
        object.__setattr__(self, "std_accuracy", float(acc.std()))

    @property
    def test_accuracies(self) -> list[float]:
        return [f.test_accuracy for f in self.per_fold]

    def summary(self) -> str:
        return f"{100 * self.mean_accuracy:.2f}% ± {100 * self.std_accuracy:.2f}%"


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """One simulated recognition system: a latent -> output linear transform."""

    transform: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "transform", _frozen_array(self.transform, 2, "system transform"))
        if not self.noise_sigma >= 0:
            raise ProtocolError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.out_dim < self.latent_dim:
            raise ProtocolError(
                f"out_dim {self.out_dim} is smaller than latent_dim {self.latent_dim}"
            )

    @property
    def latent_dim(self) -> int:
        return self.transform.shape[0]

    @property
    def out_dim(self) -> int:
        return self.transform.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SystemSpec):
            return NotImplemented
        return self.noise_sigma == other.noise_sigma and np.array_equal(self.transform, other.transform)


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    """Ground truth: unit latent identities seen through several linear systems.

    ``latent_sigma`` is the per-image jitter shared by all systems (the same
    "photo" perturbs every system coherently); each system may add its own
    output-space noise via ``SystemSpec.noise_sigma``.
    """

    n_identities: int
    latent_dim: int
    images_per_identity: int
    latents: np.ndarray
    systems: tuple[SystemSpec, ...]
    latent_sigma: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "latents", _frozen_array(self.latents, 2, "latents"))
        object.__setattr__(self, "systems", tuple(self.systems))
        if self.latents.shape != (self.n_identities, self.latent_dim):
            raise ProtocolError(f"latents shape {self.latents.shape} does not match world size")
        for s in self.systems:
            if s.latent_dim != self.latent_dim:
                raise ProtocolError("system transform latent_dim does not match the world")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SyntheticWorld):
            return NotImplemented
        return (
            self.n_identities == other.n_identities
            and self.latent_dim == other.latent_dim
            and self.images_per_identity == other.images_per_identity
            and self.latent_sigma == other.latent_sigma
            and self.seed == other.seed
            and np.array_equal(self.latents, other.latents)
            and self.systems == other.systems
        )
