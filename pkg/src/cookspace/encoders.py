"""The two embedding branches mapping images and recipes into one space.

Image branch: precomputed backbone features through a trainable affine
projection, then unit normalization.

Recipe branch: ingredients run through a bidirectional recurrent encoder
over a frozen word table (the two directions share one cell, so a
length-1 sequence yields identical halves and reversing a sequence swaps
them); instructions are encoded hierarchically, with each sentence
represented by the frozen mean of its word vectors and a second
recurrent cell consuming the sentence sequence. Both representations are
concatenated and projected, then unit normalized.

The word table is frozen: lookups enter the graph as constants, so no
gradient ever reaches it and it stays bit-identical to initialization
for the lifetime of a model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .data import ImageSample, RecipeSample
from .exceptions import DimensionError, EmptyInputError, VocabularyError
from .params import ParamStore
from .tape import Node, Tape

IMAGE = "image"
RECIPE = "recipe"


@dataclass(frozen=True)
class EncoderDims:
    word_dim: int = 32
    hidden_dim: int = 32
    image_dim: int = 64
    embed_dim: int = 32
    vocab_size: int = 512


@dataclass
class Embedding:
    """Unit vector in the shared space, tagged with its origin."""

    vector: Node | np.ndarray
    source_id: str
    modality: str

    @property
    def array(self) -> np.ndarray:
        return T.value_of(self.vector)


class EncoderParams:
    """Both branches' parameters, registered in one ``ParamStore``."""

    WORD_TABLE = "word_table"
    INGREDIENT_RNN = "ingredient_rnn"
    SENTENCE_RNN = "sentence_rnn"
    RECIPE_PROJ = "recipe_proj"
    IMAGE_PROJ = "image_proj"

    def __init__(self, store: ParamStore, dims: EncoderDims):
        self.store = store
        self.dims = dims

    @classmethod
    def initialize(cls, dims: EncoderDims, seed: int) -> "EncoderParams":
        rng = np.random.default_rng([int(seed), 0x1217])
        store = ParamStore(rng_seed=int(seed))
        store.add(
            cls.WORD_TABLE,
            rng.uniform(-0.1, 0.1, size=(dims.vocab_size, dims.word_dim)),
            frozen=True,
        )

        def glorot(fan_out: int, fan_in: int) -> np.ndarray:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_out, fan_in))

        cell_in = dims.word_dim + dims.hidden_dim
        store.add(f"{cls.INGREDIENT_RNN}.weight", glorot(dims.hidden_dim, cell_in))
        store.add(f"{cls.INGREDIENT_RNN}.bias", np.zeros(dims.hidden_dim))
        store.add(f"{cls.SENTENCE_RNN}.weight", glorot(dims.hidden_dim, cell_in))
        store.add(f"{cls.SENTENCE_RNN}.bias", np.zeros(dims.hidden_dim))
        store.add(
            f"{cls.RECIPE_PROJ}.weight", glorot(dims.embed_dim, 3 * dims.hidden_dim)
        )
        store.add(f"{cls.RECIPE_PROJ}.bias", np.zeros(dims.embed_dim))
        store.add(f"{cls.IMAGE_PROJ}.weight", glorot(dims.embed_dim, dims.image_dim))
        store.add(f"{cls.IMAGE_PROJ}.bias", np.zeros(dims.embed_dim))
        return cls(store, dims)

    @classmethod
    def from_store(cls, store: ParamStore) -> "EncoderParams":
        """Rebind a loaded store, recovering dimensions from shapes."""
        word_table = store[cls.WORD_TABLE]
        word_table.frozen = True
        vocab_size, word_dim = word_table.value.shape
        hidden_dim = store[f"{cls.INGREDIENT_RNN}.bias"].value.shape[0]
        embed_dim, image_dim = store[f"{cls.IMAGE_PROJ}.weight"].value.shape
        dims = EncoderDims(
            word_dim=word_dim,
            hidden_dim=hidden_dim,
            image_dim=image_dim,
            embed_dim=embed_dim,
            vocab_size=vocab_size,
        )
        return cls(store, dims)

    @property
    def word_table(self) -> np.ndarray:
        return self.store[self.WORD_TABLE].value

    def _cell_inputs(self, name: str, tape: Tape | None):
        return (
            self.store[f"{name}.weight"].as_input(tape),
            self.store[f"{name}.bias"].as_input(tape),
        )

    def _check_tokens(self, tokens, origin: str) -> None:
        for token_id in tokens:
            if not 0 <= token_id < self.dims.vocab_size:
                raise VocabularyError(
                    f"token id {token_id} outside vocabulary of size "
                    f"{self.dims.vocab_size} ({origin})"
                )


def _recurrent_fold(weight, bias, inputs, hidden_dim: int, tape: Tape | None):
    """h_t = tanh(W [x_t; h_{t-1}] + b), starting from h_0 = 0."""
    hidden = np.zeros(hidden_dim)
    for x in inputs:
        hidden = T.tanh(T.affine(weight, bias, T.concat([x, hidden], tape), tape), tape)
    return hidden


def encode_ingredients(tokens, params: EncoderParams, tape: Tape | None):
    """Bidirectional pass over the token sequence; concat of final states."""
    tokens = list(tokens)
    if not tokens:
        raise EmptyInputError("cannot encode an empty ingredient sequence")
    params._check_tokens(tokens, "ingredients")
    vectors = [params.word_table[t] for t in tokens]
    weight, bias = params._cell_inputs(EncoderParams.INGREDIENT_RNN, tape)
    forward = _recurrent_fold(weight, bias, vectors, params.dims.hidden_dim, tape)
    backward = _recurrent_fold(
        weight, bias, list(reversed(vectors)), params.dims.hidden_dim, tape
    )
    return T.concat([forward, backward], tape)


def encode_instructions(sentences, params: EncoderParams, tape: Tape | None):
    """Sentence-level recurrence over frozen mean-of-word-vector sentences."""
    sentences = [list(s) for s in sentences]
    if not sentences or any(not s for s in sentences):
        raise EmptyInputError("instructions need at least one nonempty sentence")
    for sentence in sentences:
        params._check_tokens(sentence, "instructions")
    # Word level is frozen: sentence vectors are constants by construction.
    sentence_vectors = [params.word_table[s].mean(axis=0) for s in sentences]
    weight, bias = params._cell_inputs(EncoderParams.SENTENCE_RNN, tape)
    return _recurrent_fold(weight, bias, sentence_vectors, params.dims.hidden_dim, tape)


def encode_image(sample: ImageSample, params: EncoderParams, tape: Tape | None) -> Embedding:
    if sample.features.shape[0] != params.dims.image_dim:
        raise DimensionError(
            f"image features of {sample.instance_id!r} have length "
            f"{sample.features.shape[0]}, expected {params.dims.image_dim}"
        )
    weight, bias = params._cell_inputs(EncoderParams.IMAGE_PROJ, tape)
    vector = T.l2_normalize(T.affine(weight, bias, sample.features, tape), tape)
    return Embedding(vector, sample.instance_id, IMAGE)


def encode_recipe(sample: RecipeSample, params: EncoderParams, tape: Tape | None) -> Embedding:
    ingredients = encode_ingredients(sample.ingredients, params, tape)
    instructions = encode_instructions(sample.instructions, params, tape)
    weight, bias = params._cell_inputs(EncoderParams.RECIPE_PROJ, tape)
    vector = T.l2_normalize(
        T.affine(weight, bias, T.concat([ingredients, instructions], tape), tape), tape
    )
    return Embedding(vector, sample.instance_id, RECIPE)


def embed_single_ingredient(token_id: int, params: EncoderParams, tape: Tape | None):
    """One ingredient through the recipe branch, instruction half zeroed.

    This is the pathway behind ingredient queries: the token runs through
    the ingredient encoder alone and the projection sees zeros where the
    instruction representation would sit.
    """
    ingredients = encode_ingredients([token_id], params, tape)
    placeholder = np.zeros(params.dims.hidden_dim)
    weight, bias = params._cell_inputs(EncoderParams.RECIPE_PROJ, tape)
    return T.l2_normalize(
        T.affine(weight, bias, T.concat([ingredients, placeholder], tape), tape), tape
    )
