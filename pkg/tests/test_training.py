import numpy as np
import pytest

from cookspace import (
    AdamState,
    ConfigError,
    EncoderParams,
    NumericFaultError,
    ParamStore,
    TrainConfig,
    adam_step,
    fit,
    sgd_step,
)
from cookspace.training import (
    CHECKPOINT_BEST,
    CHECKPOINT_LAST,
    LOSS_HISTORY_FILE,
    _epoch_order,
)


def quick_config(**overrides):
    base = dict(batch_size=8, epochs=2, seed=5)
    base.update(overrides)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_defaults_valid(self):
        TrainConfig().validate()

    def test_zero_learning_rate_allowed(self):
        quick_config(learning_rate=0.0).validate()

    @pytest.mark.parametrize(
        "field,value",
        [
            ("batch_size", 7),
            ("batch_size", 2),
            ("epochs", 0),
            ("learning_rate", -1e-3),
            ("margin", -0.1),
            ("semantic_weight", -0.5),
            ("negative_strategy", "easiest"),
            ("optimizer", "lbfgs"),
            ("seed", -1),
            ("checkpoint_every", 0),
        ],
    )
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(ConfigError):
            quick_config(**{field: value}).validate()


class TestOptimizerSteps:
    def store_with(self, value, grad, frozen_value=None):
        store = ParamStore()
        store.add("w", np.array(value, dtype=np.float64))
        store["w"].grad[...] = grad
        if frozen_value is not None:
            store.add("f", np.array(frozen_value, dtype=np.float64), frozen=True)
            store["f"].grad[...] = 99.0
        return store

    def test_sgd_worked_example(self):
        store = self.store_with([1.0], [2.0])
        sgd_step(store, lr=0.1)
        assert store["w"].value == pytest.approx([0.8])

    def test_sgd_zeroes_grads(self):
        store = self.store_with([1.0], [2.0])
        sgd_step(store, lr=0.1)
        assert np.all(store["w"].grad == 0.0)

    def test_sgd_skips_frozen(self):
        store = self.store_with([1.0], [2.0], frozen_value=[3.0])
        sgd_step(store, lr=0.1)
        assert store["f"].value == pytest.approx([3.0])

    def test_sgd_zero_gradient_fixed_point(self):
        store = self.store_with([1.5], [0.0])
        sgd_step(store, lr=0.1)
        assert store["w"].value == pytest.approx([1.5])

    def test_adam_first_step_magnitude_bounded(self):
        # With bias correction the first update is lr * g / (|g| + eps),
        # which approaches lr in magnitude for any sizable gradient.
        for grad in (2.0, -0.5, 1e3):
            store = self.store_with([1.0], [grad])
            state = AdamState()
            adam_step(store, state, lr=0.01)
            delta = float(store["w"].value[0]) - 1.0
            assert abs(delta) <= 0.01 * (1.0 + 1e-6)
            assert np.sign(delta) == -np.sign(grad)
            assert abs(delta) == pytest.approx(0.01, rel=1e-4)

    def test_adam_zero_gradient_fixed_point(self):
        store = self.store_with([1.5], [0.0])
        state = AdamState()
        adam_step(store, state, lr=0.01)
        assert store["w"].value == pytest.approx([1.5])
        assert state.step == 1

    def test_adam_skips_frozen_and_zeroes_grads(self):
        store = self.store_with([1.0], [2.0], frozen_value=[3.0])
        state = AdamState()
        adam_step(store, state, lr=0.01)
        assert store["f"].value == pytest.approx([3.0])
        assert np.all(store["w"].grad == 0.0)
        assert "f" not in state.first

    def test_adam_matches_reference_two_steps(self):
        # Straight transcription of the update rule, kept separate from
        # the implementation under test.
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        grads = [0.7, -1.3]
        w_ref, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w_ref -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)

        store = self.store_with([1.0], [grads[0]])
        state = AdamState()
        adam_step(store, state, lr=lr)
        store["w"].grad[...] = grads[1]
        adam_step(store, state, lr=lr)
        assert store["w"].value == pytest.approx([w_ref], rel=1e-12)

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite_gradient_names_parameter(self, bad):
        store = self.store_with([1.0], [bad])
        with pytest.raises(NumericFaultError, match="'w'"):
            sgd_step(store, lr=0.1)
        store = self.store_with([1.0], [bad])
        with pytest.raises(NumericFaultError, match="'w'"):
            adam_step(store, AdamState(), lr=0.1)


class TestEpochOrder:
    def test_partitions_without_repeats(self, tiny_dataset):
        pairs = tiny_dataset.split_pairs("train")
        batches = _epoch_order(pairs, 8, seed=0, epoch=0)
        flat = [int(i) for b in batches for i in b]
        assert len(flat) == len(set(flat))
        assert len(flat) == (len(pairs) // 8) * 8
        assert all(len(b) == 8 for b in batches)

    def test_guarantees_hold_in_every_batch(self, tiny_dataset):
        pairs = tiny_dataset.split_pairs("train")
        for epoch in range(5):
            for batch in _epoch_order(pairs, 8, seed=1, epoch=epoch):
                classes = [
                    pairs[i][0].class_id
                    for i in batch
                    if pairs[i][0].class_id is not None
                ]
                assert len(set(classes)) >= 2
                assert any(classes.count(c) >= 2 for c in set(classes))

    def test_deterministic_per_seed_and_epoch(self, tiny_dataset):
        pairs = tiny_dataset.split_pairs("train")
        a = _epoch_order(pairs, 8, seed=3, epoch=2)
        b = _epoch_order(pairs, 8, seed=3, epoch=2)
        c = _epoch_order(pairs, 8, seed=3, epoch=3)
        assert [list(x) for x in a] == [list(x) for x in b]
        assert [list(x) for x in a] != [list(x) for x in c]


class TestFit:
    def test_history_shape_and_finiteness(self, tiny_dataset):
        result = fit(tiny_dataset, quick_config(epochs=3))
        assert len(result.loss_history) == 3
        assert all(np.isfinite(v) and v >= 0.0 for v in result.loss_history)

    def test_parameters_move_under_training(self, tiny_dataset):
        config = quick_config()
        before = EncoderParams.initialize(
            _dims_of(tiny_dataset), config.seed
        ).store["image_proj.weight"].value.copy()
        result = fit(tiny_dataset, config)
        after = result.params.store["image_proj.weight"].value
        assert not np.array_equal(before, after)

    def test_zero_learning_rate_leaves_parameters_bit_identical(self, tiny_dataset):
        config = quick_config(learning_rate=0.0)
        init = EncoderParams.initialize(_dims_of(tiny_dataset), config.seed)
        reference = {
            name: init.store[name].value.copy() for name in init.store.names()
        }
        result = fit(tiny_dataset, config)
        for name, expected in reference.items():
            assert np.array_equal(result.params.store[name].value, expected)

    def test_word_table_stays_frozen(self, tiny_dataset):
        result = fit(tiny_dataset, quick_config())
        init = EncoderParams.initialize(_dims_of(tiny_dataset), 5)
        assert np.array_equal(
            result.params.store["word_table"].value,
            init.store["word_table"].value,
        )

    def test_same_config_twice_identical_checkpoints(self, tiny_dataset, tmp_path):
        config = quick_config()
        fit(tiny_dataset, config, out_dir=tmp_path / "a")
        fit(tiny_dataset, config, out_dir=tmp_path / "b")
        for name in (CHECKPOINT_LAST, CHECKPOINT_BEST, LOSS_HISTORY_FILE):
            first = (tmp_path / "a" / name).read_bytes()
            second = (tmp_path / "b" / name).read_bytes()
            assert first == second, name

    def test_checkpoints_and_history_written(self, tiny_dataset, tmp_path):
        result = fit(tiny_dataset, quick_config(), out_dir=tmp_path)
        assert result.checkpoint_last == tmp_path / CHECKPOINT_LAST
        assert result.checkpoint_last.exists()
        assert result.checkpoint_best is not None and result.checkpoint_best.exists()
        lines = (tmp_path / LOSS_HISTORY_FILE).read_text().splitlines()
        assert lines[0] == "epoch,mean_loss"
        assert len(lines) == 1 + len(result.loss_history)
        assert float(lines[1].split(",")[1]) == result.loss_history[0]

    def test_best_checkpoint_tracks_validation(self, tiny_dataset, tmp_path):
        result = fit(tiny_dataset, quick_config(epochs=3), out_dir=tmp_path)
        assert result.best_val_medr is not None
        assert 1.0 <= result.best_val_medr
        assert 1 <= result.best_epoch <= 3

    def test_no_validation_split_means_no_best(self, tiny_dataset, tmp_path):
        unsplit = tiny_dataset.with_splits({})
        result = fit(unsplit, quick_config(), out_dir=tmp_path)
        assert result.best_val_medr is None
        assert result.checkpoint_best is None
        assert not (tmp_path / CHECKPOINT_BEST).exists()

    def test_numeric_fault_aborts_but_keeps_checkpoint(
        self, tiny_dataset, tmp_path, monkeypatch
    ):
        import cookspace.training as training_module

        real = training_module.mine_triplets
        calls = {"n": 0}

        def poisoned(*args, **kwargs):
            calls["n"] += 1
            result = real(*args, **kwargs)
            if calls["n"] >= 4:
                result.loss = float("nan")
            return result

        monkeypatch.setattr(training_module, "mine_triplets", poisoned)
        with pytest.raises(NumericFaultError, match="not finite"):
            fit(tiny_dataset, quick_config(), out_dir=tmp_path)
        assert (tmp_path / CHECKPOINT_LAST).exists()
        assert not (tmp_path / LOSS_HISTORY_FILE).exists()

    def test_sgd_and_random_one_paths(self, tiny_dataset):
        result = fit(
            tiny_dataset,
            quick_config(optimizer="sgd", negative_strategy="random-one"),
        )
        assert len(result.loss_history) == 2

    def test_invalid_config_rejected_before_work(self, tiny_dataset, tmp_path):
        with pytest.raises(ConfigError):
            fit(tiny_dataset, quick_config(epochs=0), out_dir=tmp_path)
        assert not (tmp_path / CHECKPOINT_LAST).exists()


def _dims_of(dataset):
    from cookspace import EncoderDims

    return EncoderDims(
        image_dim=dataset.feature_dim, vocab_size=len(dataset.vocab)
    )
