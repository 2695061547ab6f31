"""Mini-batch training loop with seeded shuffling and checkpointing.

Every step embeds each batch pair once per modality (two forward passes
per pair), mines triplets among those embeddings, backpropagates the
hinge loss, and applies an optimizer update. Runs are bit-reproducible:
the epoch shuffle and every stochastic choice derive from the config
seed, frozen parameters never move, and checkpoints are written in a
canonical format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .encoders import (
    EncoderDims,
    EncoderParams,
    encode_image,
    encode_recipe,
)
from .evaluation import evaluate_directions
from .exceptions import (
    BatchCompositionError,
    ConfigError,
    NumericFaultError,
)
from .mining import (
    NEGATIVE_STRATEGIES,
    _batch_guarantees_hold,
    _check_composable,
    mine_triplets,
)
from .params import ParamStore
from .tape import Tape, backward

OPTIMIZERS = ("sgd", "adam")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

EPOCH_SHUFFLE_TAG = 0xE90C
NEGATIVE_DRAW_TAG = 0x313E

MAX_SHUFFLE_ATTEMPTS = 100

CHECKPOINT_LAST = "checkpoint_last.json"
CHECKPOINT_BEST = "checkpoint_best.json"
LOSS_HISTORY_FILE = "loss_history.csv"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and bookkeeping knobs for one training run."""

    batch_size: int = 32
    epochs: int = 30
    learning_rate: float = 1e-3
    margin: float = 0.3
    semantic_weight: float = 0.25
    negative_strategy: str = "all"
    optimizer: str = "adam"
    seed: int = 0
    checkpoint_every: int = 10

    def validate(self) -> None:
        if self.batch_size < 4 or self.batch_size % 2:
            raise ConfigError(
                f"batch_size must be even and at least 4, got {self.batch_size}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigError(
                f"learning_rate must be nonnegative, got {self.learning_rate}"
            )
        if self.margin < 0:
            raise ConfigError(f"margin must be nonnegative, got {self.margin}")
        if self.semantic_weight < 0:
            raise ConfigError(
                f"semantic_weight must be nonnegative, got {self.semantic_weight}"
            )
        if self.negative_strategy not in NEGATIVE_STRATEGIES:
            raise ConfigError(
                f"negative_strategy must be one of {NEGATIVE_STRATEGIES}, "
                f"got {self.negative_strategy!r}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")
        if self.checkpoint_every < 1:
            raise ConfigError(
                f"checkpoint_every must be at least 1, got {self.checkpoint_every}"
            )


@dataclass
class AdamState:
    """First/second moment buffers and step counter for adaptive updates."""

    step: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)


def _checked_grad(param) -> np.ndarray:
    if not np.all(np.isfinite(param.grad)):
        raise NumericFaultError(f"non-finite gradient for parameter {param.name!r}")
    return param.grad


def sgd_step(store: ParamStore, lr: float) -> None:
    """Plain gradient descent on every non-frozen parameter; grads zeroed."""
    for param in store.trainable():
        param.value -= lr * _checked_grad(param)
    store.zero_grads()


def adam_step(
    store: ParamStore,
    state: AdamState,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPSILON,
) -> None:
    """Bias-corrected adaptive-moment update on non-frozen parameters."""
    state.step += 1
    t = state.step
    for param in store.trainable():
        grad = _checked_grad(param)
        m = state.first.setdefault(param.name, np.zeros_like(param.value))
        v = state.second.setdefault(param.name, np.zeros_like(param.value))
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        param.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grads()


@dataclass
class TrainResult:
    params: EncoderParams
    loss_history: list[float]
    best_val_medr: float | None
    best_epoch: int | None
    checkpoint_last: Path | None
    checkpoint_best: Path | None


def _epoch_order(
    pairs, batch_size: int, seed: int, epoch: int
) -> list[np.ndarray]:
    """Shuffle the epoch's pairs into guarantee-satisfying batches.

    The shuffle is retried under derived seeds until every full batch
    contains a semantic positive and a semantic negative; the trailing
    remainder (fewer than batch_size pairs) is dropped for the epoch.
    """
    n_batches = len(pairs) // batch_size
    for attempt in range(MAX_SHUFFLE_ATTEMPTS):
        rng = np.random.default_rng([seed, EPOCH_SHUFFLE_TAG, epoch, attempt])
        order = rng.permutation(len(pairs))
        batches = [
            order[i * batch_size : (i + 1) * batch_size] for i in range(n_batches)
        ]
        if all(
            _batch_guarantees_hold([pairs[i] for i in batch]) for batch in batches
        ):
            return batches
    raise BatchCompositionError(
        f"no shuffle of epoch {epoch} yields valid batches after "
        f"{MAX_SHUFFLE_ATTEMPTS} attempts"
    )


def _val_medr(params: EncoderParams, dataset: Dataset, seed: int) -> float | None:
    """Mean MedR across both directions over the whole validation split."""
    if "val" not in dataset.splits or not dataset.splits["val"]:
        return None
    n_val = len(dataset.splits["val"])
    if n_val < 2:
        return None
    reports = evaluate_directions(
        params, dataset, "val", bag_size=n_val, n_bags=1, seed=seed
    )
    return float(np.mean([r.medr[0] for r in reports.values()]))


def fit(
    dataset: Dataset,
    config: TrainConfig,
    params: EncoderParams | None = None,
    dims: EncoderDims | None = None,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Train encoders on the dataset's train split (all pairs if unsplit).

    Returns the final parameters and per-epoch mean losses. When
    ``out_dir`` is given, a final-state checkpoint, a best-validation
    checkpoint (if a validation split exists), and a loss-history CSV
    are written there. A numeric fault aborts the run but leaves the
    last completed epoch's checkpoint on disk.
    """
    config.validate()
    split = "train" if dataset.splits else None
    pairs = dataset.split_pairs(split)
    _check_composable(pairs, config.batch_size)

    if params is None:
        if dims is None:
            dims = EncoderDims(
                image_dim=dataset.feature_dim, vocab_size=len(dataset.vocab)
            )
        params = EncoderParams.initialize(dims, config.seed)

    state = AdamState() if config.optimizer == "adam" else None
    out_path = Path(out_dir) if out_dir is not None else None
    last_path = best_path = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        last_path = out_path / CHECKPOINT_LAST
        params.store.save(last_path)

    history: list[float] = []
    best_val: float | None = None
    best_epoch: int | None = None
    for epoch in range(config.epochs):
        batches = _epoch_order(pairs, config.batch_size, config.seed, epoch)
        batch_losses: list[float] = []
        for step, batch_indices in enumerate(batches):
            batch = [pairs[i] for i in batch_indices]
            tape = Tape()
            embeddings = [encode_image(img, params, tape) for img, _ in batch]
            embeddings += [encode_recipe(rec, params, tape) for _, rec in batch]
            classes = [img.class_id for img, _ in batch] * 2
            step_rng = None
            if config.negative_strategy == "random-one":
                step_rng = np.random.default_rng(
                    [config.seed, NEGATIVE_DRAW_TAG, epoch, step]
                )
            result = mine_triplets(
                embeddings,
                classes,
                config.margin,
                config.semantic_weight,
                tape,
                strategy=config.negative_strategy,
                rng=step_rng,
            )
            if not np.isfinite(result.loss):
                raise NumericFaultError(
                    f"batch loss is not finite at epoch {epoch + 1} step {step + 1}"
                )
            batch_losses.append(result.loss)
            if result.node is not None and result.n_active > 0:
                backward(tape, result.node)
                if config.optimizer == "adam":
                    adam_step(params.store, state, config.learning_rate)
                else:
                    sgd_step(params.store, config.learning_rate)
        history.append(float(np.mean(batch_losses)))

        val = _val_medr(params, dataset, config.seed)
        if val is not None and (best_val is None or val < best_val):
            best_val = val
            best_epoch = epoch + 1
            if out_path is not None:
                best_path = out_path / CHECKPOINT_BEST
                params.store.save(best_path)
        is_last = epoch + 1 == config.epochs
        if out_path is not None and (is_last or (epoch + 1) % config.checkpoint_every == 0):
            params.store.save(last_path)

    if out_path is not None:
        lines = ["epoch,mean_loss"]
        lines += [f"{i + 1},{loss!r}" for i, loss in enumerate(history)]
        (out_path / LOSS_HISTORY_FILE).write_text("\n".join(lines) + "\n")

    return TrainResult(params, history, best_val, best_epoch, last_path, best_path)
