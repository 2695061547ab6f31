"""Ranking loss over dual-source triplets mined inside a mini-batch.

Positives come from two relations: the *instance* source pairs an item
with its exact counterpart from the other modality; the *semantic*
source pairs items sharing a class label, regardless of modality.
Negatives are picked among the items already embedded in the current
batch, so one image pass and one recipe pass per dataset pair feed every
triplet that batch produces.

A triplet (query, positive, negative) contributes
``max(0, d(q, p) + margin - d(q, n))`` where ``d`` is squared Euclidean
distance between unit embeddings. The batch loss is the mean over active
instance triplets plus ``semantic_weight`` times the mean over active
semantic triplets; a triplet is active when its hinge is strictly
positive, and an inactive one contributes exactly zero gradient.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import tape as T
from .data import Dataset, ImageSample, RecipeSample
from .encoders import Embedding
from .exceptions import BatchCompositionError, ContractError, DimensionError
from .tape import Node, Tape

INSTANCE = "instance"
SEMANTIC = "semantic"

NEGATIVE_STRATEGIES = ("all", "hardest", "random-one")

MAX_COMPOSE_ATTEMPTS = 200


def squared_distance(a, b) -> float:
    """Squared Euclidean distance between two embeddings or vectors."""
    va = a.array if isinstance(a, Embedding) else T.value_of(a)
    vb = b.array if isinstance(b, Embedding) else T.value_of(b)
    if va.shape != vb.shape:
        raise DimensionError(f"distance over shapes {va.shape} and {vb.shape}")
    diff = va - vb
    return float(np.dot(diff, diff))


def hinge_loss(pos_distance: float, neg_distance: float, margin: float) -> float:
    """Margin hinge on a distance pair; zero once the gap is respected.

    Evaluation order is fixed as ``(pos + margin) - neg`` so that a zero
    result and the inequality ``pos + margin <= neg`` agree exactly in
    floating point.
    """
    if pos_distance < 0 or neg_distance < 0 or margin < 0:
        raise ContractError(
            f"distances and margin must be nonnegative, got "
            f"({pos_distance}, {neg_distance}, {margin})"
        )
    return max(0.0, (pos_distance + margin) - neg_distance)


@dataclass(frozen=True)
class PositivePair:
    """A query/positive relation under one triplet source."""

    query: Embedding
    positive: Embedding
    source: str
    class_id: int | None = None

    def __post_init__(self):
        if self.source == INSTANCE:
            if self.query.source_id != self.positive.source_id:
                raise ContractError("instance pair must share an instance id")
            if self.query.modality == self.positive.modality:
                raise ContractError("instance pair must cross modalities")
        elif self.source == SEMANTIC:
            if self.class_id is None:
                raise ContractError("semantic pair needs a class id")
        else:
            raise ContractError(f"unknown triplet source {self.source!r}")


class Triplet(NamedTuple):
    """Indices into the batch embedding list, plus source and margin."""

    query: int
    positive: int
    negative: int
    source: str
    margin: float


@dataclass
class MiningResult:
    triplets: list[Triplet]
    loss: float
    node: Node | None
    n_active_instance: int
    n_active_semantic: int

    @property
    def n_active(self) -> int:
        return self.n_active_instance + self.n_active_semantic


def _batch_guarantees_hold(
    pairs: Sequence[tuple[ImageSample, RecipeSample]]
) -> bool:
    counts = Counter(
        img.class_id for img, _ in pairs if img.class_id is not None
    )
    return len(counts) >= 2 and any(v >= 2 for v in counts.values())


def _check_composable(pairs, batch_size: int) -> None:
    if len(pairs) < batch_size:
        raise BatchCompositionError(
            f"pool of {len(pairs)} pairs cannot fill a batch of {batch_size}"
        )
    counts = Counter(img.class_id for img, _ in pairs if img.class_id is not None)
    if len(counts) < 2:
        raise BatchCompositionError(
            "need at least two distinct classes among labeled pairs"
        )
    if not any(v >= 2 for v in counts.values()):
        raise BatchCompositionError(
            "no class has two labeled pairs, so no batch can contain "
            "a semantic positive"
        )


def compose_batch(
    dataset: Dataset,
    batch_size: int,
    rng: np.random.Generator,
    split: str | None = None,
) -> list[tuple[ImageSample, RecipeSample]]:
    """Sample matched pairs so both triplet sources exist in-batch.

    The returned batch holds at least two pairs of one class (semantic
    positives exist) and at least two distinct classes (semantic
    negatives exist). Sampling is retried under the caller's rng until
    both guarantees hold; datasets that cannot satisfy them raise
    ``BatchCompositionError``.
    """
    if batch_size < 4 or batch_size % 2:
        raise ContractError(f"batch_size must be even and at least 4, got {batch_size}")
    pool = dataset.split_pairs(split)
    _check_composable(pool, batch_size)
    for _ in range(MAX_COMPOSE_ATTEMPTS):
        chosen = rng.choice(len(pool), size=batch_size, replace=False)
        batch = [pool[i] for i in chosen]
        if _batch_guarantees_hold(batch):
            return batch
    raise BatchCompositionError(
        f"no valid batch of {batch_size} found in {MAX_COMPOSE_ATTEMPTS} attempts"
    )


def _relation_indices(
    embeddings: Sequence[Embedding], class_ids: Sequence[int | None]
) -> tuple[list[tuple[int, int, list[int]]], list[tuple[int, int, list[int]]]]:
    """Enumerate (anchor, positive, negatives) per source over the batch."""
    n = len(embeddings)
    instance: list[tuple[int, int, list[int]]] = []
    semantic: list[tuple[int, int, list[int]]] = []
    for a in range(n):
        anchor = embeddings[a]
        partner = [
            i
            for i in range(n)
            if embeddings[i].source_id == anchor.source_id
            and embeddings[i].modality != anchor.modality
        ]
        cross_negatives = [
            i
            for i in range(n)
            if embeddings[i].modality != anchor.modality
            and embeddings[i].source_id != anchor.source_id
        ]
        for p in partner:
            if cross_negatives:
                instance.append((a, p, cross_negatives))
        if class_ids[a] is None:
            continue
        semantic_negatives = [
            i
            for i in range(n)
            if class_ids[i] is not None and class_ids[i] != class_ids[a]
        ]
        if not semantic_negatives:
            continue
        for p in range(n):
            if p != a and class_ids[p] == class_ids[a]:
                semantic.append((a, p, semantic_negatives))
    return instance, semantic


def mine_triplets(
    embeddings: Sequence[Embedding],
    class_ids: Sequence[int | None],
    margin: float,
    semantic_weight: float,
    tape: Tape | None,
    strategy: str = "all",
    rng: np.random.Generator | None = None,
) -> MiningResult:
    """Build the batch loss from triplets mined among ``embeddings``.

    ``class_ids`` aligns with ``embeddings``; items without a class take
    part in instance triplets only. With strategy ``all`` every violating
    negative contributes (averaged); ``hardest`` keeps the closest
    negative per query/positive pair; ``random-one`` draws one negative
    per pair from ``rng``.
    """
    if not embeddings:
        raise ContractError("cannot mine an empty batch")
    if len(class_ids) != len(embeddings):
        raise ContractError("class_ids must align with embeddings")
    if strategy not in NEGATIVE_STRATEGIES:
        raise ContractError(f"unknown negative strategy {strategy!r}")
    if strategy == "random-one" and rng is None:
        raise ContractError("random-one strategy needs an rng")

    distances: dict[tuple[int, int], object] = {}

    def distance_node(i: int, j: int):
        key = (i, j) if i < j else (j, i)
        node = distances.get(key)
        if node is None:
            node = T.squared_norm(
                T.subtract(embeddings[key[0]].vector, embeddings[key[1]].vector, tape),
                tape,
            )
            distances[key] = node
        return node

    instance_rel, semantic_rel = _relation_indices(embeddings, class_ids)

    triplets: list[Triplet] = []
    source_terms: dict[str, list[object]] = {INSTANCE: [], SEMANTIC: []}
    source_active: dict[str, int] = {INSTANCE: 0, SEMANTIC: 0}

    for source, relations in ((INSTANCE, instance_rel), (SEMANTIC, semantic_rel)):
        for a, p, negatives in relations:
            d_ap = distance_node(a, p)
            if strategy == "hardest":
                negatives = [
                    min(negatives, key=lambda n: (float(T.value_of(distance_node(a, n))), n))
                ]
            elif strategy == "random-one":
                negatives = [negatives[int(rng.integers(len(negatives)))]]
            neg_vec = T.concat([distance_node(a, n) for n in negatives], tape)
            margins = T.relu(
                T.subtract(T.add(d_ap, np.float64(margin), tape), neg_vec, tape), tape
            )
            source_terms[source].append(margins)
            source_active[source] += int(np.count_nonzero(T.value_of(margins) > 0.0))
            triplets.extend(
                Triplet(a, p, n, source, margin) for n in negatives
            )

    total = np.float64(0.0) if tape is None else None
    for source, weight in ((INSTANCE, 1.0), (SEMANTIC, float(semantic_weight))):
        if not source_terms[source] or source_active[source] == 0:
            continue
        stacked = T.concat(source_terms[source], tape)
        term = T.multiply(
            T.sum_all(stacked, tape), np.float64(weight / source_active[source]), tape
        )
        total = term if total is None else T.add(total, term, tape)

    if tape is None:
        return MiningResult(
            triplets, float(total),
            None, source_active[INSTANCE], source_active[SEMANTIC],
        )
    node = total if isinstance(total, Node) else Node(np.asarray(np.float64(0.0)))
    return MiningResult(
        triplets, float(T.value_of(node)),
        node, source_active[INSTANCE], source_active[SEMANTIC],
    )
