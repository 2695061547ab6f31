import dataclasses

import pytest

from cookspace import (
    ConfigError,
    RunConfig,
    dumps_config,
    load_config,
    loads_config,
    save_config,
)


class TestRoundTrips:
    def test_default_text_round_trip(self):
        text = dumps_config(RunConfig())
        assert loads_config(text) == RunConfig()

    def test_modified_values_survive(self):
        config = RunConfig()
        config = RunConfig(
            data=dataclasses.replace(config.data, n_classes=7, noise_std=0.125),
            model=dataclasses.replace(config.model, embed_dim=32),
            train=dataclasses.replace(
                config.train, learning_rate=3e-3, negative_strategy="hardest"
            ),
            eval=dataclasses.replace(config.eval, bag_size=50),
            paths=dataclasses.replace(config.paths, dataset="corpus.jsonl"),
        )
        out = loads_config(dumps_config(config))
        assert out == config
        assert out.train.learning_rate == 3e-3
        assert out.data.noise_std == 0.125

    def test_text_canonical_after_round_trip(self):
        text = dumps_config(RunConfig())
        assert dumps_config(loads_config(text)) == text

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "run.cfg"
        config = RunConfig().with_seed(42)
        save_config(config, path)
        assert load_config(path) == config


class TestPartialFiles:
    def test_empty_text_gives_defaults(self):
        assert loads_config("") == RunConfig()

    def test_partial_section_keeps_other_defaults(self):
        config = loads_config("[train]\nepochs = 3\n")
        assert config.train.epochs == 3
        assert config.train.batch_size == RunConfig().train.batch_size
        assert config.data == RunConfig().data

    def test_missing_sections_default(self):
        config = loads_config("[eval]\nn_bags = 2\n")
        assert config.eval.n_bags == 2
        assert config.paths == RunConfig().paths


class TestErrors:
    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="section"):
            loads_config("[optimizer]\nlr = 1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            loads_config("[train]\nmomentum = 0.9\n")

    def test_bad_int_literal(self):
        with pytest.raises(ConfigError, match="not a valid int"):
            loads_config("[train]\nepochs = soon\n")

    def test_bad_float_literal(self):
        with pytest.raises(ConfigError, match="not a valid float"):
            loads_config("[train]\nlearning_rate = fast\n")

    def test_malformed_text(self):
        with pytest.raises(ConfigError, match="malformed"):
            loads_config("no section header")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")


class TestWithSeed:
    def test_routes_to_data_and_train(self):
        config = RunConfig().with_seed(9)
        assert config.data.seed == 9
        assert config.train.seed == 9

    def test_other_fields_untouched(self):
        base = RunConfig()
        config = base.with_seed(9)
        assert config.model == base.model
        assert config.eval == base.eval
        assert dataclasses.replace(config.data, seed=base.data.seed) == base.data


class TestValidate:
    def test_default_valid(self):
        RunConfig().validate()

    def test_nested_errors_propagate(self):
        config = loads_config("[train]\nbatch_size = 3\n")
        with pytest.raises(ConfigError):
            config.validate()
        config = loads_config("[data]\nn_classes = 1\n")
        with pytest.raises(ConfigError):
            config.validate()
        config = loads_config("[eval]\nbag_size = 0\n")
        with pytest.raises(ConfigError):
            config.validate()
