"""Semantic-space queries: retrieval, ingredient vectors, what-ifs.

The shared embedding space supports more than image-to-recipe scoring.
Any sample can query any modality (four retrieval directions), a set of
ingredient tokens can be averaged into a query point of its own, results
can be constrained to one class, and a recipe can be re-embedded after
removing an ingredient to see where the modified dish would land.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tape as T
from .data import ImageSample, RecipeSample
from .encoders import (
    IMAGE,
    RECIPE,
    Embedding,
    EncoderParams,
    embed_single_ingredient,
    encode_image,
    encode_recipe,
)
from .evaluation import EmbeddingIndex, rank
from .exceptions import (
    ContractError,
    DegenerateRecipeError,
    EmptyInputError,
)

CROSS_MODAL = "cross_modal"
SAME_MODAL = "same_modal"
INGREDIENT_SET = "ingredient_set"
CLASS_CONSTRAINED = "class_constrained"

QUERY_KINDS = (CROSS_MODAL, SAME_MODAL, INGREDIENT_SET, CLASS_CONSTRAINED)


@dataclass(frozen=True)
class QuerySpec:
    """What to search for, where, and how many results to keep."""

    kind: str
    payload: object
    target_modality: str
    k: int = 10
    class_filter: int | None = None

    def __post_init__(self):
        if self.kind not in QUERY_KINDS:
            raise ContractError(f"unknown query kind {self.kind!r}")
        if self.target_modality not in (IMAGE, RECIPE):
            raise ContractError(f"unknown modality {self.target_modality!r}")
        if self.k < 1:
            raise ContractError(f"k must be at least 1, got {self.k}")
        if self.class_filter is not None and self.kind != CLASS_CONSTRAINED:
            raise ContractError("class_filter requires a class-constrained query")


@dataclass(frozen=True)
class QueryHit:
    rank: int
    instance_id: str
    distance: float
    class_id: int | None
    modality: str


@dataclass
class QueryResult:
    hits: list[QueryHit]
    class_missing: bool = False

    def ids(self) -> list[str]:
        return [h.instance_id for h in self.hits]

    def to_rows(self) -> list[dict]:
        return [
            {
                "rank": h.rank,
                "id": h.instance_id,
                "distance": h.distance,
                "class_id": h.class_id,
                "modality": h.modality,
            }
            for h in self.hits
        ]

    def format_table(self) -> str:
        if not self.hits:
            note = " (class absent from index)" if self.class_missing else ""
            return f"no results{note}\n"
        lines = [f"{'rank':>4}  {'distance':>10}  {'class':>6}  id"]
        for h in self.hits:
            cls = "-" if h.class_id is None else str(h.class_id)
            lines.append(f"{h.rank:>4}  {h.distance:>10.6f}  {cls:>6}  {h.instance_id}")
        return "\n".join(lines) + "\n"


def _embed_payload(payload, params: EncoderParams) -> tuple[np.ndarray, str | None]:
    """Embedding vector for a query payload, plus its modality if known."""
    if isinstance(payload, ImageSample):
        return encode_image(payload, params, None).array, IMAGE
    if isinstance(payload, RecipeSample):
        return encode_recipe(payload, params, None).array, RECIPE
    if isinstance(payload, Embedding):
        return payload.array, payload.modality
    vec = np.asarray(payload, dtype=np.float64)
    if vec.ndim != 1:
        raise ContractError(f"query payload of shape {vec.shape} is not a vector")
    return vec, None


def _ranked_hits(vec: np.ndarray, index: EmbeddingIndex, k: int) -> list[QueryHit]:
    ranking = rank(vec, index, true_id="")
    hits = []
    for pos, entry_index in enumerate(ranking.positions[:k]):
        entry = index.entries[entry_index]
        hits.append(
            QueryHit(
                pos + 1,
                entry.instance_id,
                ranking.distances[pos],
                entry.class_id,
                entry.modality,
            )
        )
    return hits


def multimodal_query(
    spec: QuerySpec, index: EmbeddingIndex, params: EncoderParams
) -> QueryResult:
    """Rank one modality of the index against an embedded payload.

    Cross-modal specs must query the opposite modality of their payload
    and same-modal specs the same one; a payload already present in the
    index ranks itself first (distance zero). k larger than the index
    returns everything, ordered.
    """
    vec, payload_modality = _embed_payload(spec.payload, params)
    if spec.kind in (CROSS_MODAL, SAME_MODAL) and payload_modality is not None:
        crosses = payload_modality != spec.target_modality
        if spec.kind == CROSS_MODAL and not crosses:
            raise ContractError(
                f"cross-modal query from {payload_modality} must target the "
                f"other modality"
            )
        if spec.kind == SAME_MODAL and crosses:
            raise ContractError(
                f"same-modal query from {payload_modality} cannot target "
                f"{spec.target_modality}"
            )
    subset = index.modality_subset(spec.target_modality)
    if len(subset.entries) == 0:
        raise ContractError(f"index holds no {spec.target_modality} entries")
    return QueryResult(_ranked_hits(vec, subset, spec.k))


def ingredient_vector(tokens, params: EncoderParams) -> np.ndarray:
    """Unit query vector for a set of ingredient tokens.

    Each token runs alone through the ingredient encoder and the recipe
    projection (instruction component zeroed); the vectors are averaged
    over the distinct tokens and re-normalized. Order and multiplicity
    of the token list do not matter.
    """
    if not tokens:
        raise EmptyInputError("ingredient query needs at least one token")
    distinct = sorted(set(int(t) for t in tokens))
    vectors = [
        T.value_of(embed_single_ingredient(t, params, None)) for t in distinct
    ]
    return T.l2_normalize(np.mean(vectors, axis=0), None)


def ingredient_query(
    tokens,
    index: EmbeddingIndex,
    params: EncoderParams,
    k: int = 10,
    target_modality: str = RECIPE,
) -> QueryResult:
    """Nearest items to the averaged embedding of the given ingredients."""
    if k < 1:
        raise ContractError(f"k must be at least 1, got {k}")
    vec = ingredient_vector(tokens, params)
    subset = index.modality_subset(target_modality)
    if len(subset.entries) == 0:
        raise ContractError(f"index holds no {target_modality} entries")
    return QueryResult(_ranked_hits(vec, subset, k))


def class_constrained_query(
    spec: QuerySpec,
    class_id: int,
    index: EmbeddingIndex,
    params: EncoderParams,
) -> QueryResult:
    """Rank only the index entries carrying the requested class label."""
    if all(c is None for c in index.class_ids):
        raise ContractError("no index entry carries a class label")
    vec, _ = _embed_payload(spec.payload, params)
    keep = [
        c == class_id and m == spec.target_modality
        for c, m in zip(index.class_ids, index.modalities)
    ]
    if not any(keep):
        return QueryResult([], class_missing=True)
    subset = index.restrict(keep)
    return QueryResult(_ranked_hits(vec, subset, spec.k))


def remove_ingredient(recipe: RecipeSample, ingredient_token: int) -> RecipeSample:
    """Copy of the recipe without one ingredient and its instructions.

    Every occurrence of the token leaves the ingredient list, and every
    instruction sentence mentioning it is dropped entirely. Removing a
    token the recipe does not contain is a no-op. Removal that would
    empty the ingredients or the instructions raises instead, since the
    result could no longer be encoded.
    """
    ingredients = [t for t in recipe.ingredients if t != ingredient_token]
    if not ingredients:
        raise DegenerateRecipeError(
            f"removing token {ingredient_token} leaves {recipe.instance_id!r} "
            f"with no ingredients"
        )
    instructions = [
        sentence for sentence in recipe.instructions if ingredient_token not in sentence
    ]
    if not instructions:
        raise DegenerateRecipeError(
            f"removing token {ingredient_token} leaves {recipe.instance_id!r} "
            f"with no instructions"
        )
    return replace(recipe, ingredients=ingredients, instructions=instructions)
