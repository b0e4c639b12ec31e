import dataclasses

import pytest

from fedprompt.config import (
    KEYS,
    ExperimentConfig,
    apply_overrides,
    build_config,
    canonical_text,
    config_values,
    default_values,
    extract_round,
    load_config,
    parse_config_text,
    with_round_marker,
)
from fedprompt.errors import ConfigError
from fedprompt.federation import OptimizerConfig
from fedprompt.translator import TranslatorConfig
from fedprompt.world import WorldConfig


class TestDefaults:
    def test_empty_text_gives_default_config(self):
        assert build_config(parse_config_text("")) == ExperimentConfig()

    def test_defaults_match_dataclass_fields(self):
        values = default_values()
        assert values["world.d"] == WorldConfig().d
        assert values["world.sigma_img"] == WorldConfig().sigma_img
        assert values["translator.n_ctx"] == TranslatorConfig().n_ctx
        assert values["optimizer.lr0"] == OptimizerConfig().lr0
        assert values["federation.rounds"] == ExperimentConfig().rounds

    def test_load_config_without_path_is_default(self):
        assert load_config() == ExperimentConfig()

    def test_every_key_documented(self):
        for key, spec in KEYS.items():
            assert spec.doc, f"{key} has no description"


class TestParsing:
    def test_key_value_lines(self):
        values = parse_config_text("world.d=16\nfederation.rounds=3\n")
        assert values["world.d"] == 16
        assert values["federation.rounds"] == 3

    def test_comments_and_blanks_skipped(self):
        text = "# a comment\n\n   \nworld.d=16\n  # indented comment\n"
        assert parse_config_text(text)["world.d"] == 16

    def test_whitespace_around_equals(self):
        assert parse_config_text("  world.d = 16 \n")["world.d"] == 16

    def test_later_line_wins(self):
        values = parse_config_text("world.d=16\nworld.d=8\n")
        assert values["world.d"] == 8

    def test_unknown_key_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"world\.dd.*line 2"):
            parse_config_text("world.d=16\nworld.dd=3\n")

    def test_malformed_value_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"world\.d.*line 1"):
            parse_config_text("world.d=sixteen\n")

    def test_line_without_equals_rejected(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("just some words\n")

    def test_float_keys_accept_scientific_notation(self):
        values = parse_config_text("optimizer.weight_decay=1e-4\n")
        assert values["optimizer.weight_decay"] == 1e-4

    def test_string_value_passes_through(self):
        assert parse_config_text("eval.report_dir=out/figs\n")["eval.report_dir"] == "out/figs"


class TestOverrides:
    def test_override_applies_after_file(self):
        values = parse_config_text("federation.rounds=3\n")
        values = apply_overrides(values, ["federation.rounds=9"])
        assert values["federation.rounds"] == 9

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError, match="--set"):
            apply_overrides(default_values(), ["nope=1"])

    def test_override_without_equals(self):
        with pytest.raises(ConfigError, match="--set"):
            apply_overrides(default_values(), ["federation.rounds"])

    def test_malformed_override_value(self):
        with pytest.raises(ConfigError, match=r"federation\.rounds"):
            apply_overrides(default_values(), ["federation.rounds=many"])


class TestValidation:
    def test_partition_capacity_enforced(self):
        with pytest.raises(ConfigError, match="exceeds"):
            build_config(apply_overrides(default_values(), ["world.n_base=10"]))

    def test_translator_width_follows_world(self):
        cfg = build_config(apply_overrides(default_values(), ["world.d=16"]))
        assert cfg.translator.d_model == 16

    def test_nonpositive_rounds_rejected(self):
        with pytest.raises(ConfigError, match="rounds"):
            build_config(apply_overrides(default_values(), ["federation.rounds=0"]))

    def test_fraction_out_of_range_rejected(self):
        with pytest.raises(ConfigError, match="fraction"):
            build_config(apply_overrides(default_values(), ["federation.fraction=1.5"]))

    def test_master_seed_reaches_world(self):
        cfg = build_config(apply_overrides(default_values(), ["master_seed=42"]))
        assert cfg.world.seed == 42
        assert cfg.master_seed == 42


class TestCanonicalText:
    def test_round_trip_is_identity(self):
        cfg = load_config(None, ["world.d=16", "optimizer.lr0=0.01", "eval.report_dir=figs"])
        text = canonical_text(cfg)
        assert build_config(parse_config_text(text)) == cfg

    def test_sorted_and_complete(self):
        lines = canonical_text(ExperimentConfig()).splitlines()
        keys = [line.split("=", 1)[0] for line in lines]
        assert keys == sorted(KEYS)

    def test_registry_and_serialization_agree(self):
        # the documented keys are exactly the serialized keys
        assert set(config_values(ExperimentConfig())) == set(KEYS)

    def test_float_values_survive_exactly(self):
        cfg = load_config(None, ["optimizer.weight_decay=1e-05", "optimizer.lr0=0.003"])
        back = build_config(parse_config_text(canonical_text(cfg)))
        assert back.optimizer.weight_decay == cfg.optimizer.weight_decay
        assert back.optimizer.lr0 == cfg.optimizer.lr0


class TestRoundMarker:
    def test_marker_appends_and_extracts(self):
        text = canonical_text(ExperimentConfig())
        marked = with_round_marker(text, 17)
        assert extract_round(marked) == 17

    def test_marked_text_still_parses(self):
        marked = with_round_marker(canonical_text(ExperimentConfig()), 3)
        assert build_config(parse_config_text(marked)) == ExperimentConfig()

    def test_missing_marker_gives_none(self):
        assert extract_round(canonical_text(ExperimentConfig())) is None


def test_config_is_frozen():
    cfg = ExperimentConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.rounds = 5
