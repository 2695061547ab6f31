"""Retrieval evaluation: exact ranking, median rank, recall, bag protocol.

Trained embeddings are scored by ranking, for every query, all items of
the other modality in a sampled pool ("bag") by ascending distance. The
headline numbers are the median rank of the true match (MedR, 1 is
perfect, half the pool size is chance) and the percentage of queries
whose match lands in the top K (R@K). Reports aggregate several
independently sampled bags as mean and population standard deviation.
"""

from __future__ import annotations

import json
import statistics
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset
from .encoders import (
    IMAGE,
    RECIPE,
    Embedding,
    EncoderParams,
    encode_image,
    encode_recipe,
)
from .exceptions import ContractError, DimensionError

UNIT_NORM_TOLERANCE = 1e-6

IMAGE_TO_RECIPE = "image->recipe"
RECIPE_TO_IMAGE = "recipe->image"
DIRECTIONS = (IMAGE_TO_RECIPE, RECIPE_TO_IMAGE)

RECALL_KS = (1, 5, 10)

BAG_SEED_TAG = 0xBA65

MODALITY_ORDER = {IMAGE: 0, RECIPE: 1}


@dataclass(frozen=True)
class IndexEntry:
    instance_id: str
    class_id: int | None
    modality: str
    vector: np.ndarray


class EmbeddingIndex:
    """Searchable collection of unit embeddings with ids and classes.

    Instance ids must be unique within each modality; an image and a
    recipe may share an id (they are the same dish). All vectors must be
    unit length within a small tolerance, which every encoder guarantees.
    """

    def __init__(self, entries: Sequence[IndexEntry]):
        if not entries:
            raise ContractError("an embedding index needs at least one entry")
        dim = entries[0].vector.shape[0]
        seen: set[tuple[str, str]] = set()
        for e in entries:
            if e.vector.ndim != 1 or e.vector.shape[0] != dim:
                raise DimensionError(
                    f"index entry {e.instance_id!r} has shape {e.vector.shape}, "
                    f"expected ({dim},)"
                )
            if abs(float(np.linalg.norm(e.vector)) - 1.0) > UNIT_NORM_TOLERANCE:
                raise ContractError(
                    f"index entry {e.instance_id!r} is not unit length"
                )
            key = (e.modality, e.instance_id)
            if key in seen:
                raise ContractError(
                    f"duplicate id {e.instance_id!r} within modality {e.modality!r}"
                )
            seen.add(key)
        self.entries = list(entries)
        self.dimension = int(dim)
        self.matrix = np.stack([e.vector for e in entries])
        self.ids = [e.instance_id for e in entries]
        self.class_ids = [e.class_id for e in entries]
        self.modalities = [e.modality for e in entries]

    def __len__(self) -> int:
        return len(self.entries)

    def restrict(self, keep: Iterable[bool]) -> "EmbeddingIndex":
        kept = [e for e, flag in zip(self.entries, keep) if flag]
        return EmbeddingIndex(kept)

    def modality_subset(self, modality: str) -> "EmbeddingIndex":
        return self.restrict(m == modality for m in self.modalities)

    @classmethod
    def from_embeddings(
        cls,
        embeddings: Sequence[Embedding],
        class_ids: Sequence[int | None] | None = None,
    ) -> "EmbeddingIndex":
        classes = class_ids if class_ids is not None else [None] * len(embeddings)
        if len(classes) != len(embeddings):
            raise ContractError("class_ids must align with embeddings")
        return cls(
            [
                IndexEntry(e.source_id, c, e.modality, e.array)
                for e, c in zip(embeddings, classes)
            ]
        )


def build_index(
    dataset: Dataset,
    params: EncoderParams,
    split: str | None = None,
    modalities: tuple[str, ...] = (IMAGE, RECIPE),
) -> EmbeddingIndex:
    """Embed one split's samples with frozen params into an index."""
    entries = []
    for img, rec in dataset.split_pairs(split):
        if IMAGE in modalities:
            e = encode_image(img, params, None)
            entries.append(IndexEntry(img.instance_id, img.class_id, IMAGE, e.array))
        if RECIPE in modalities:
            e = encode_recipe(rec, params, None)
            entries.append(IndexEntry(rec.instance_id, rec.class_id, RECIPE, e.array))
    return EmbeddingIndex(entries)


@dataclass
class RankList:
    """Full ordering of an index by ascending distance to one query."""

    query_id: str
    item_ids: list[str]
    distances: list[float]
    rank_of_truth: int | None
    positions: list[int]

    def top(self, k: int) -> list[tuple[str, float]]:
        return list(zip(self.item_ids[:k], self.distances[:k]))


def rank(
    query,
    index: EmbeddingIndex,
    true_id: str | None = None,
) -> RankList:
    """Exhaustively order the index by distance to the query.

    Ties break by ascending instance id, then by modality tag, so the
    ordering is a deterministic total order. ``true_id`` defaults to the
    query's own instance id; the returned ``rank_of_truth`` is its
    1-based position, or None when that id is absent from the index.
    """
    if isinstance(query, Embedding):
        vec = query.array
        query_id = query.source_id
    else:
        vec = np.asarray(query, dtype=np.float64)
        query_id = ""
    if vec.ndim != 1 or vec.shape[0] != index.dimension:
        raise DimensionError(
            f"query of shape {vec.shape} against index of dimension {index.dimension}"
        )
    diffs = index.matrix - vec
    dists = np.einsum("ij,ij->i", diffs, diffs)
    order = sorted(
        range(len(index)),
        key=lambda i: (dists[i], index.ids[i], MODALITY_ORDER[index.modalities[i]]),
    )
    item_ids = [index.ids[i] for i in order]
    wanted = true_id if true_id is not None else query_id
    position = None
    if wanted:
        for pos, i in enumerate(order):
            if index.ids[i] == wanted:
                position = pos + 1
                break
    return RankList(
        query_id=query_id,
        item_ids=item_ids,
        distances=[float(dists[i]) for i in order],
        rank_of_truth=position,
        positions=order,
    )


def median_rank(ranks: Sequence[int]) -> float:
    """Median of 1-based ranks; even-length lists average the middle two."""
    if len(ranks) == 0:
        raise ContractError("median of no ranks")
    return float(statistics.median(ranks))


def recall_at_k(ranks: Sequence[int], k: int) -> float:
    """Percentage of queries whose true match ranked within the top k."""
    if len(ranks) == 0:
        raise ContractError("recall over no ranks")
    if k < 1:
        raise ContractError(f"k must be at least 1, got {k}")
    return 100.0 * sum(1 for r in ranks if r <= k) / len(ranks)


@dataclass
class EvalReport:
    """Per-bag retrieval metrics for one query direction, plus summaries."""

    direction: str
    bag_size: int
    medr: list[float] = field(default_factory=list)
    r_at: dict[int, list[float]] = field(default_factory=dict)

    @property
    def n_bags(self) -> int:
        return len(self.medr)

    def summary(self) -> dict[str, tuple[float, float]]:
        """Mean and population standard deviation of each metric."""
        out = {"medr": _mean_std(self.medr)}
        for k in sorted(self.r_at):
            out[f"r_at_{k}"] = _mean_std(self.r_at[k])
        return out

    def to_dict(self) -> dict:
        summary = {
            name: {"mean": m, "std": s} for name, (m, s) in self.summary().items()
        }
        return {
            "direction": self.direction,
            "bag_size": self.bag_size,
            "n_bags": self.n_bags,
            "per_bag": {
                "medr": self.medr,
                **{f"r_at_{k}": v for k, v in sorted(self.r_at.items())},
            },
            "summary": summary,
        }


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _ranks_of_truth(distance: np.ndarray, ids: Sequence[str]) -> list[int]:
    """1-based rank of the diagonal entry in each row of a pair-aligned grid.

    Row i holds query i's distances to every candidate; candidate i is
    the true match. Ties lose to candidates with smaller instance ids.
    """
    ids_arr = np.array(ids)
    diag = distance.diagonal()[:, None]
    earlier_id = ids_arr[None, :] < ids_arr[:, None]
    ranks = 1 + (distance < diag).sum(axis=1) + ((distance == diag) & earlier_id).sum(axis=1)
    return [int(r) for r in ranks]


def evaluate_bags(
    params: EncoderParams,
    dataset: Dataset,
    split: str | None = "test",
    direction: str = IMAGE_TO_RECIPE,
    bag_size: int = 1000,
    n_bags: int = 10,
    seed: int = 0,
) -> EvalReport:
    """Score retrieval over repeatedly sampled pools of matched pairs.

    Each bag samples ``bag_size`` pairs without replacement (bags may
    overlap each other); every query ranks the bag's opposite-modality
    pool. A split smaller than ``bag_size`` clamps the bag to the whole
    split with a warning. Same seed, same report, bit for bit.
    """
    reports = evaluate_directions(
        params, dataset, split, (direction,), bag_size, n_bags, seed
    )
    return reports[direction]


def evaluate_directions(
    params: EncoderParams,
    dataset: Dataset,
    split: str | None = "test",
    directions: Sequence[str] = DIRECTIONS,
    bag_size: int = 1000,
    n_bags: int = 10,
    seed: int = 0,
) -> dict[str, EvalReport]:
    """evaluate_bags for several directions over identical bag samples."""
    for d in directions:
        if d not in DIRECTIONS:
            raise ContractError(f"unknown direction {d!r}")
    if n_bags < 1:
        raise ContractError(f"need at least one bag, got {n_bags}")
    pairs = dataset.split_pairs(split)
    if len(pairs) < 2:
        raise ContractError(
            f"split holds {len(pairs)} pairs; evaluation needs at least 2"
        )
    if bag_size < 1:
        raise ContractError(f"bag_size must be positive, got {bag_size}")
    if bag_size > len(pairs):
        warnings.warn(
            f"bag_size {bag_size} exceeds split size {len(pairs)}; clamping",
            stacklevel=2,
        )
        bag_size = len(pairs)

    ids = [img.instance_id for img, _ in pairs]
    image_matrix = np.stack(
        [encode_image(img, params, None).array for img, _ in pairs]
    )
    recipe_matrix = np.stack(
        [encode_recipe(rec, params, None).array for _, rec in pairs]
    )

    rng = np.random.default_rng([seed, BAG_SEED_TAG])
    reports = {d: EvalReport(d, bag_size, r_at={k: [] for k in RECALL_KS}) for d in directions}
    for _ in range(n_bags):
        chosen = rng.choice(len(pairs), size=bag_size, replace=False)
        bag_ids = [ids[i] for i in chosen]
        img = image_matrix[chosen]
        rec = recipe_matrix[chosen]
        sq_i = np.einsum("ij,ij->i", img, img)
        sq_r = np.einsum("ij,ij->i", rec, rec)
        grid = np.maximum(sq_i[:, None] + sq_r[None, :] - 2.0 * (img @ rec.T), 0.0)
        for d in directions:
            rows = grid if d == IMAGE_TO_RECIPE else grid.T
            ranks = _ranks_of_truth(rows, bag_ids)
            reports[d].medr.append(median_rank(ranks))
            for k in RECALL_KS:
                reports[d].r_at[k].append(recall_at_k(ranks, k))
    return reports


def format_report_table(reports: dict[str, EvalReport]) -> str:
    """Human-readable summary table, one row per direction."""
    header = f"{'direction':<16}{'MedR':>14}{'R@1':>16}{'R@5':>16}{'R@10':>16}"
    lines = [header, "-" * len(header)]
    for direction in DIRECTIONS:
        report = reports.get(direction)
        if report is None:
            continue
        cells = [f"{direction:<16}"]
        summary = report.summary()
        medr_m, medr_s = summary["medr"]
        cells.append(f"{medr_m:8.1f} ± {medr_s:<4.1f}")
        for k in RECALL_KS:
            m, s = summary[f"r_at_{k}"]
            cells.append(f"{m:9.1f} ± {s:<5.1f}")
        lines.append("".join(cells))
    lines.append(f"bags: {_bag_note(reports)}")
    return "\n".join(lines) + "\n"


def _bag_note(reports: dict[str, EvalReport]) -> str:
    sizes = {(r.n_bags, r.bag_size) for r in reports.values()}
    return ", ".join(f"{n} x {size} pairs" for n, size in sorted(sizes))


def report_to_json(reports: dict[str, EvalReport]) -> str:
    """Machine-readable report document with per-bag values."""
    doc = {d: reports[d].to_dict() for d in reports}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
