"""Synthetic ground truth: one latent face space seen through linear systems.

Every system's embeddings are an exact linear function of shared latent
identity vectors (plus optional noise), so the cross-system mapping is known
to exist and its recoverability can be tested at desk scale.
"""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import ProtocolError
from .metrics import normalize_rows
from .seeding import derive_rng
from .types import EmbeddingSet, Pair, PairProtocol, SyntheticWorld, SystemSpec


def entity_name(identity: int) -> str:
    return f"id{identity:05d}"


def entity_id(identity: int, image: int) -> str:
    """``id00017/0003`` for identity 17, zero-based image 2 (LFW-style 1-based index)."""
    return f"{entity_name(identity)}/{image + 1:04d}"


def _system_params(spec) -> tuple[int, float]:
    if isinstance(spec, (int, np.integer)):
        return int(spec), 0.0
    out_dim, noise = spec
    return int(out_dim), float(noise)


def generate_world(n_identities: int = 3000, latent_dim: int = 32, images_per_identity: int = 4,
                   systems_spec: Sequence = (64, 64), seed: int = 42,
                   latent_sigma: float = 0.05) -> SyntheticWorld:
    """Draw latent identities and one random transform per system.

    ``systems_spec`` items are either an output dimension or an
    ``(out_dim, noise_sigma)`` tuple; ``noise_sigma`` is output-space noise
    private to that system. Each transform draws from its own stream, so
    adding systems leaves the earlier ones unchanged.
    """
    for name, value in (("n_identities", n_identities), ("latent_dim", latent_dim),
                        ("images_per_identity", images_per_identity)):
        if value < 1:
            raise ProtocolError(f"{name} must be positive, got {value}")
    if not latent_sigma >= 0:
        raise ProtocolError(f"latent_sigma must be >= 0, got {latent_sigma}")
    if len(systems_spec) < 1:
        raise ProtocolError("a world needs at least one system")

    latents = derive_rng(seed, "latent").standard_normal((n_identities, latent_dim))
    latents = normalize_rows(latents)
    systems = []
    for k, spec in enumerate(systems_spec):
        out_dim, noise = _system_params(spec)
        if out_dim < latent_dim:
            raise ProtocolError(f"system {k}: out_dim {out_dim} < latent_dim {latent_dim}")
        A = derive_rng(seed, "transform", k).standard_normal((latent_dim, out_dim)) / np.sqrt(latent_dim)
        systems.append(SystemSpec(A, noise))
    return SyntheticWorld(n_identities, latent_dim, images_per_identity, latents,
                          tuple(systems), float(latent_sigma), int(seed))


def image_latents(world: SyntheticWorld) -> np.ndarray:
    """Unit latent vector of every image, shape (n_identities, images, latent_dim).

    The per-image jitter comes from one stream independent of the systems, so
    an image looks the same to every system up to that system's transform.
    """
    rng = derive_rng(world.seed, "jitter")
    jitter = rng.standard_normal((world.n_identities, world.images_per_identity, world.latent_dim))
    z = world.latents[:, None, :] + world.latent_sigma * jitter
    flat = normalize_rows(z.reshape(-1, world.latent_dim))
    return flat.reshape(z.shape)


def emit_embeddings(world: SyntheticWorld, system_index: int, tag: str | None = None) -> EmbeddingSet:
    if not 0 <= system_index < len(world.systems):
        raise ProtocolError(f"system index {system_index} out of range [0, {len(world.systems)})")
    system = world.systems[system_index]
    z = image_latents(world).reshape(-1, world.latent_dim)
    out = z @ system.transform
    if system.noise_sigma > 0:
        noise = derive_rng(world.seed, "observation", system_index).standard_normal(out.shape)
        out = out + system.noise_sigma * noise
    ids = [entity_id(i, j) for i in range(world.n_identities) for j in range(world.images_per_identity)]
    return EmbeddingSet(ids, normalize_rows(out), tag if tag is not None else f"system_{system_index}")


def _mismatched(rng, people: np.ndarray, images: int, count: int, fold: int) -> list[Pair]:
    capacity = len(people) * (len(people) - 1) // 2 * images * images
    if count > capacity:
        raise ProtocolError(
            f"fold {fold}: {count} mismatched pairs requested but only {capacity} exist "
            f"({len(people)} identities x {images} images)"
        )
    if 2 * count > capacity:
        pool = [(u, i, v, j) for u, v in combinations(people.tolist(), 2)
                for i in range(images) for j in range(images)]
        pick = rng.choice(len(pool), size=count, replace=False)
        chosen = [pool[k] for k in pick]
    else:
        seen, chosen = set(), []
        while len(chosen) < count:
            u, v = rng.choice(people, size=2, replace=False).tolist()
            i, j = rng.integers(images, size=2).tolist()
            key = (u, i, v, j) if u < v else (v, j, u, i)
            if key not in seen:
                seen.add(key)
                chosen.append(key)
    return [Pair(entity_id(u, i), entity_id(v, j), False) for u, i, v, j in chosen]


def _matched(rng, people: np.ndarray, images: int, count: int, fold: int) -> list[Pair]:
    per_person = images * (images - 1) // 2
    if count > len(people) * per_person:
        raise ProtocolError(
            f"fold {fold}: {count} matched pairs requested but only {len(people) * per_person} exist "
            f"({len(people)} identities with {images} images each)"
        )
    # round-robin over identities so pairs spread across people
    options = {}
    for person in people.tolist():
        combos = list(combinations(range(images), 2))
        options[person] = [combos[k] for k in rng.permutation(len(combos))]
    out = []
    while len(out) < count:
        for person in people.tolist():
            if len(out) == count:
                break
            if options[person]:
                i, j = options[person].pop()
                out.append(Pair(entity_id(person, i), entity_id(person, j), True))
    return out


def generate_protocol(world: SyntheticWorld, n_folds: int = 10, matched_per_fold: int = 300,
                      mismatched_per_fold: int = 300, seed: int | None = None) -> PairProtocol:
    """Subject-disjoint folds of matched then mismatched pairs (LFW layout)."""
    if n_folds < 2:
        raise ProtocolError(f"need at least 2 folds, got {n_folds}")
    if matched_per_fold < 0 or mismatched_per_fold < 0 or matched_per_fold + mismatched_per_fold == 0:
        raise ProtocolError("pair counts per fold must be nonnegative and not both zero")
    need_ids = n_folds * (2 if mismatched_per_fold else 1)
    if world.n_identities < need_ids:
        raise ProtocolError(
            f"{n_folds} folds need at least {need_ids} identities, world has {world.n_identities}"
        )
    if matched_per_fold and world.images_per_identity < 2:
        raise ProtocolError("matched pairs need at least 2 images per identity")

    rng = derive_rng(world.seed if seed is None else seed, "protocol")
    people = rng.permutation(world.n_identities)
    folds = []
    for k, group in enumerate(np.array_split(people, n_folds)):
        group = np.sort(group)
        pairs = _matched(rng, group, world.images_per_identity, matched_per_fold, k)
        pairs += _mismatched(rng, group, world.images_per_identity, mismatched_per_fold, k)
        folds.append(tuple(pairs))
    return PairProtocol(tuple(folds))


def default_world(n_systems: int = 2, seed: int = 42, latent_sigma: float = 0.05) -> SyntheticWorld:
    """3000 identities x 4 images, 32-d latent space, 64-d systems."""
    return generate_world(3000, 32, 4, (64,) * n_systems, seed, latent_sigma)
