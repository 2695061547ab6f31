"""Paired image/recipe datasets: synthetic generation, file IO, splits.

A dataset is a list of matched pairs. Each pair couples an image sample
(a precomputed feature vector standing in for a vision backbone's
output) with a recipe sample (ingredient token sequence plus instruction
sentences), sharing an instance id and an optional class label.

The synthetic generator builds a controllable stand-in for a large
recipe corpus: classes get well-separated latent prototypes and disjoint
signature token sets; instances mix signature and shared tokens. Image
features are the class prototype plus a small component derived from the
instance's own ingredient tokens plus isotropic noise, so that matching
a specific image to its specific recipe is learnable and generalizes to
held-out pairs, while class structure stays linearly separable.

File format: UTF-8 line-delimited JSON. The first line is a schema
header ``{"schema_version": 1}``; every following line is one pair with
fields id, class (string or null), image_features, ingredients (token
strings) and instructions (list of token-string sentences).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    ConfigError,
    ContractError,
    DatasetFormatError,
    DatasetIntegrityError,
)

SCHEMA_VERSION = 1
DEFAULT_SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
SPLIT_NAMES = ("train", "val", "test")

# Minimum Euclidean gap enforced between class prototypes.
PROTOTYPE_MIN_DISTANCE = 0.5


@dataclass
class ImageSample:
    instance_id: str
    features: np.ndarray
    class_id: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 1 or self.features.size == 0:
            raise ContractError(
                f"image features must be a nonempty vector, got shape "
                f"{self.features.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ContractError(f"non-finite image features for {self.instance_id!r}")


@dataclass
class RecipeSample:
    instance_id: str
    ingredients: list[int]
    instructions: list[list[int]]
    class_id: int | None = None

    def __post_init__(self):
        if not self.ingredients:
            raise ContractError(f"recipe {self.instance_id!r} has no ingredients")
        if not self.instructions or any(not s for s in self.instructions):
            raise ContractError(
                f"recipe {self.instance_id!r} needs nonempty instruction sentences"
            )


class Vocab:
    """Bijection between token strings and dense ids, in insertion order."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._id_of: dict[str, int] = {}
        self._token_of: list[str] = []
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        existing = self._id_of.get(token)
        if existing is not None:
            return existing
        token_id = len(self._token_of)
        self._id_of[token] = token_id
        self._token_of.append(token)
        return token_id

    def id(self, token: str) -> int:
        return self._id_of[token]

    def token(self, token_id: int) -> str:
        return self._token_of[token_id]

    def __len__(self) -> int:
        return len(self._token_of)

    def __contains__(self, token: str) -> bool:
        return token in self._id_of

    def tokens(self) -> list[str]:
        return list(self._token_of)


class Dataset:
    """Immutable collection of matched image/recipe pairs.

    ``splits`` maps split name to a sorted list of instance ids; it is
    empty until ``make_splits`` is applied. ``class_signatures`` and
    ``class_prototypes`` are generator metadata (None for loaded files).
    """

    def __init__(
        self,
        pairs: Sequence[tuple[ImageSample, RecipeSample]],
        vocab: Vocab,
        class_names: Sequence[str],
        splits: dict[str, list[str]] | None = None,
        class_signatures: dict[int, list[int]] | None = None,
        class_prototypes: np.ndarray | None = None,
    ):
        self.pairs = list(pairs)
        self.vocab = vocab
        self.class_names = list(class_names)
        self.splits = {name: list(ids) for name, ids in (splits or {}).items()}
        self.class_signatures = class_signatures
        self.class_prototypes = class_prototypes
        self._by_id = {}
        self._validate()

    def _validate(self) -> None:
        feature_dim = None
        for image, recipe in self.pairs:
            if image.instance_id != recipe.instance_id:
                raise DatasetIntegrityError(
                    f"pair ids differ: {image.instance_id!r} vs {recipe.instance_id!r}"
                )
            if image.class_id != recipe.class_id:
                raise DatasetIntegrityError(
                    f"pair {image.instance_id!r} carries two class ids"
                )
            if image.instance_id in self._by_id:
                raise DatasetIntegrityError(
                    f"duplicate instance id {image.instance_id!r}"
                )
            if feature_dim is None:
                feature_dim = image.features.shape[0]
            elif image.features.shape[0] != feature_dim:
                raise DatasetIntegrityError(
                    f"inconsistent feature length for {image.instance_id!r}"
                )
            for token_id in recipe.ingredients:
                if not 0 <= token_id < len(self.vocab):
                    raise DatasetIntegrityError(
                        f"token id {token_id} outside vocabulary in "
                        f"{recipe.instance_id!r}"
                    )
            for sentence in recipe.instructions:
                for token_id in sentence:
                    if not 0 <= token_id < len(self.vocab):
                        raise DatasetIntegrityError(
                            f"token id {token_id} outside vocabulary in "
                            f"{recipe.instance_id!r}"
                        )
            if image.class_id is not None and not (
                0 <= image.class_id < len(self.class_names)
            ):
                raise DatasetIntegrityError(
                    f"class id {image.class_id} unknown for {image.instance_id!r}"
                )
            self._by_id[image.instance_id] = (image, recipe)
        known = set(self._by_id)
        seen: set[str] = set()
        for name, ids in self.splits.items():
            for instance_id in ids:
                if instance_id not in known:
                    raise DatasetIntegrityError(
                        f"split {name!r} references unknown id {instance_id!r}"
                    )
                if instance_id in seen:
                    raise DatasetIntegrityError(
                        f"id {instance_id!r} appears in more than one split"
                    )
                seen.add(instance_id)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def feature_dim(self) -> int:
        if not self.pairs:
            raise ContractError("empty dataset has no feature dimension")
        return self.pairs[0][0].features.shape[0]

    def pair(self, instance_id: str) -> tuple[ImageSample, RecipeSample]:
        return self._by_id[instance_id]

    def split_pairs(self, split: str | None) -> list[tuple[ImageSample, RecipeSample]]:
        """Pairs of one split, or all pairs when ``split`` is None."""
        if split is None:
            return list(self.pairs)
        if split not in self.splits:
            raise ContractError(f"dataset has no split {split!r}")
        return [self._by_id[i] for i in self.splits[split]]

    def labeled_classes(self) -> set[int]:
        return {img.class_id for img, _ in self.pairs if img.class_id is not None}

    def with_splits(self, splits: dict[str, list[str]]) -> "Dataset":
        return Dataset(
            self.pairs,
            self.vocab,
            self.class_names,
            splits=splits,
            class_signatures=self.class_signatures,
            class_prototypes=self.class_prototypes,
        )

    def __eq__(self, other: object) -> bool:
        """Content equality: ids, class names, features and token strings.

        Token ids are compared through each side's vocabulary, so two
        datasets with differently ordered vocabularies but identical
        recipes are equal (this is what a save/load round trip preserves).
        """
        if not isinstance(other, Dataset):
            return NotImplemented
        if len(self) != len(other) or self.splits != other.splits:
            return False
        for (img_a, rec_a), (img_b, rec_b) in zip(self.pairs, other.pairs):
            name_a = None if img_a.class_id is None else self.class_names[img_a.class_id]
            name_b = None if img_b.class_id is None else other.class_names[img_b.class_id]
            if (
                img_a.instance_id != img_b.instance_id
                or name_a != name_b
                or not np.array_equal(img_a.features, img_b.features)
                or [self.vocab.token(t) for t in rec_a.ingredients]
                != [other.vocab.token(t) for t in rec_b.ingredients]
                or [[self.vocab.token(t) for t in s] for s in rec_a.instructions]
                != [[other.vocab.token(t) for t in s] for s in rec_b.instructions]
            ):
                return False
        return True


@dataclass
class SynthConfig:
    n_classes: int = 20
    instances_per_class: int = 50
    tokens_per_class: int = 8
    noise_std: float = 0.05
    shared_vocab_fraction: float = 0.3
    feature_dim: int = 64
    ingredient_signal: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if self.instances_per_class < 2:
            raise ConfigError(
                f"need at least 2 instances per class, got {self.instances_per_class}"
            )
        if self.tokens_per_class < 1:
            raise ConfigError("tokens_per_class must be at least 1")
        if not 0.0 <= self.shared_vocab_fraction <= 1.0:
            raise ConfigError(
                f"shared_vocab_fraction must lie in [0, 1], got "
                f"{self.shared_vocab_fraction}"
            )
        if self.noise_std < 0 or self.ingredient_signal < 0:
            raise ConfigError("noise_std and ingredient_signal must be nonnegative")
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be at least 2")


def _sample_prototypes(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Random unit vectors, resampled until pairwise gaps stay open."""
    prototypes: list[np.ndarray] = []
    attempts = 0
    while len(prototypes) < n:
        candidate = rng.normal(size=dim)
        candidate /= np.linalg.norm(candidate)
        if all(
            np.linalg.norm(candidate - p) >= PROTOTYPE_MIN_DISTANCE
            for p in prototypes
        ):
            prototypes.append(candidate)
        attempts += 1
        if attempts > 1000 * n:
            raise ConfigError(
                f"cannot place {n} prototypes with gap {PROTOTYPE_MIN_DISTANCE} "
                f"in {dim} dimensions"
            )
    return np.stack(prototypes)


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Build a deterministic synthetic dataset from ``cfg``.

    With ``noise_std == 0`` and ``ingredient_signal == 0`` every image of
    a class carries exactly the prototype features. With
    ``shared_vocab_fraction == 0`` class signature vocabularies are
    disjoint and recipes never borrow tokens from other classes.
    """
    cfg.validate()
    rng = np.random.default_rng([int(cfg.seed), 0x5EED])

    vocab = Vocab()
    signatures: dict[int, list[int]] = {}
    for c in range(cfg.n_classes):
        signatures[c] = [
            vocab.add(f"ing_c{c:02d}_{j}") for j in range(cfg.tokens_per_class)
        ]
    n_shared = round(cfg.shared_vocab_fraction * cfg.n_classes * cfg.tokens_per_class)
    shared = [vocab.add(f"shared_{j}") for j in range(n_shared)]

    prototypes = _sample_prototypes(rng, cfg.n_classes, cfg.feature_dim)
    token_latents = rng.normal(size=(len(vocab), cfg.feature_dim))
    token_latents /= np.linalg.norm(token_latents, axis=1, keepdims=True)

    lo = min(3, cfg.tokens_per_class)
    pairs: list[tuple[ImageSample, RecipeSample]] = []
    for c in range(cfg.n_classes):
        for i in range(cfg.instances_per_class):
            instance_id = f"dish_{c:02d}_{i:03d}"
            k_sig = int(rng.integers(lo, cfg.tokens_per_class + 1))
            chosen = list(rng.choice(signatures[c], size=k_sig, replace=False))
            if shared:
                k_shared = int(rng.binomial(k_sig, cfg.shared_vocab_fraction))
                k_shared = min(k_shared, len(shared))
                if k_shared:
                    chosen += list(rng.choice(shared, size=k_shared, replace=False))
            ingredients = sorted(int(t) for t in chosen)

            n_sentences = int(rng.integers(2, 5))
            instructions = [
                [int(t) for t in rng.choice(ingredients, size=int(rng.integers(3, 7)))]
                for _ in range(n_sentences)
            ]

            signal = token_latents[ingredients].mean(axis=0)
            features = (
                prototypes[c]
                + cfg.ingredient_signal * signal
                + rng.normal(0.0, cfg.noise_std, size=cfg.feature_dim)
            )
            pairs.append(
                (
                    ImageSample(instance_id, features, class_id=c),
                    RecipeSample(instance_id, ingredients, instructions, class_id=c),
                )
            )

    class_names = [f"class_{c:02d}" for c in range(cfg.n_classes)]
    return Dataset(
        pairs,
        vocab,
        class_names,
        class_signatures=signatures,
        class_prototypes=prototypes,
    )


def save_jsonl(dataset: Dataset, path: str | Path) -> None:
    """Write the line-delimited pair format (schema header first)."""
    lines = [json.dumps({"schema_version": SCHEMA_VERSION})]
    for image, recipe in dataset.pairs:
        record = {
            "id": image.instance_id,
            "class": (
                None if image.class_id is None else dataset.class_names[image.class_id]
            ),
            "image_features": image.features.tolist(),
            "ingredients": [dataset.vocab.token(t) for t in recipe.ingredients],
            "instructions": [
                [dataset.vocab.token(t) for t in sentence]
                for sentence in recipe.instructions
            ],
        }
        lines.append(json.dumps(record))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_jsonl(path: str | Path) -> Dataset:
    """Parse the line-delimited pair format written by ``save_jsonl``.

    The vocabulary and the class-name table are rebuilt in first
    appearance order. Malformed lines raise ``DatasetFormatError`` with
    their line number; duplicate ids raise ``DatasetIntegrityError``.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        return Dataset([], Vocab(), [])
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"unreadable header: {exc}", line_number=1) from exc
    if not isinstance(header, dict) or header.get("schema_version") != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"expected schema header {{'schema_version': {SCHEMA_VERSION}}}",
            line_number=1,
        )

    vocab = Vocab()
    class_ids: dict[str, int] = {}
    class_names: list[str] = []
    pairs: list[tuple[ImageSample, RecipeSample]] = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(str(exc), line_number=number) from exc
        try:
            instance_id = record["id"]
            class_name = record["class"]
            features = record["image_features"]
            ingredients = record["ingredients"]
            instructions = record["instructions"]
        except (KeyError, TypeError) as exc:
            raise DatasetFormatError(f"missing field {exc}", line_number=number) from exc
        if not isinstance(instance_id, str):
            raise DatasetFormatError("id must be a string", line_number=number)
        if class_name is None:
            class_id = None
        elif isinstance(class_name, str):
            if class_name not in class_ids:
                class_ids[class_name] = len(class_names)
                class_names.append(class_name)
            class_id = class_ids[class_name]
        else:
            raise DatasetFormatError("class must be a string or null", line_number=number)
        try:
            ingredient_ids = [vocab.add(t) for t in ingredients]
            instruction_ids = [[vocab.add(t) for t in s] for s in instructions]
            image = ImageSample(instance_id, np.asarray(features, dtype=np.float64),
                                class_id=class_id)
            recipe = RecipeSample(instance_id, ingredient_ids, instruction_ids,
                                  class_id=class_id)
        except (TypeError, ValueError, ContractError) as exc:
            raise DatasetFormatError(str(exc), line_number=number) from exc
        pairs.append((image, recipe))
    return Dataset(pairs, vocab, class_names)


def _split_targets(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` ids over the fractions."""
    raw = [f * n for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    leftover = int(round(sum(fractions) * n)) - sum(sizes)
    order = sorted(range(len(fractions)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def make_splits(
    dataset: Dataset,
    fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
    seed: int = 0,
) -> Dataset:
    """Partition instance ids into train/val/test, class-stratified.

    The shuffle is seeded and the partition is deterministic. Every class
    with at least 3 instances lands in train at least once. Fractions
    must be nonnegative with a positive train share and sum at most 1;
    ids left over when the fractions sum below 1 stay unassigned.
    """
    if len(fractions) != 3:
        raise ConfigError(f"expected 3 fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions) or fractions[0] <= 0:
        raise ConfigError(f"fractions must be nonnegative with train > 0: {fractions}")
    if sum(fractions) > 1.0 + 1e-9:
        raise ConfigError(f"fractions sum above 1: {fractions}")
    if len(dataset) < 3:
        raise ContractError("dataset too small to split (need at least 3 pairs)")

    rng = np.random.default_rng([int(seed), 0x5917])
    groups: dict[object, list[str]] = {}
    for image, _ in dataset.pairs:
        groups.setdefault(image.class_id, []).append(image.instance_id)
    group_keys = sorted(groups, key=lambda k: (k is None, k))
    for key in group_keys:
        order = rng.permutation(len(groups[key]))
        groups[key] = [groups[key][i] for i in order]

    n = len(dataset)
    targets = _split_targets(n, fractions)
    remaining = {key: list(ids) for key, ids in groups.items()}
    assignments: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    for split_index, split_name in enumerate(SPLIT_NAMES):
        target = targets[split_index]
        pool_sizes = {key: len(ids) for key, ids in remaining.items()}
        pool_total = sum(pool_sizes.values())
        if pool_total == 0 or target == 0:
            continue
        raw = {key: target * pool_sizes[key] / pool_total for key in group_keys}
        take = {key: int(np.floor(raw[key])) for key in group_keys}
        leftover = target - sum(take.values())
        by_remainder = sorted(
            group_keys,
            key=lambda k: (-(raw[k] - take[k]), group_keys.index(k)),
        )
        for key in by_remainder:
            if leftover == 0:
                break
            if take[key] < pool_sizes[key]:
                take[key] += 1
                leftover -= 1
        if split_name == "train":
            # Guarantee representation for every class of 3+ instances.
            for key in group_keys:
                if key is None or take[key] > 0 or pool_sizes[key] < 3:
                    continue
                donor = max(
                    (k for k in group_keys if take[k] > 1),
                    key=lambda k: take[k],
                    default=None,
                )
                if donor is not None:
                    take[donor] -= 1
                    take[key] += 1
        for key in group_keys:
            count = min(take[key], len(remaining[key]))
            assignments[split_name].extend(remaining[key][:count])
            remaining[key] = remaining[key][count:]
    splits = {name: sorted(ids) for name, ids in assignments.items()}
    return dataset.with_splits(splits)
