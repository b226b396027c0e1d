from __future__ import annotations

import json
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from unisup.datamodel import (
    DEFAULT_CHANNEL_CAPS,
    EngagementCounts,
    QipRecord,
    derive_seed,
    load_config,
    load_default_config,
    parse_config_text,
    config_to_text,
    read_corpus,
    record_from_dict,
    record_to_dict,
    save_config,
    validate_config,
    validate_record,
    write_corpus,
)


def make_record(**overrides) -> QipRecord:
    base = dict(
        query_id="q1",
        query_text="red shoes",
        item_id="i1",
        item_text="red running shoes",
        human_rating=None,
        stage_distributions=(
            (0.2, 0.2, 0.2, 0.2, 0.2),
            (0.1, 0.1, 0.1, 0.1, 0.6),
            (0.1, 0.1, 0.1, 0.1, 0.6),
        ),
        channel_ranks={"ch_a": 3},
        engagement=EngagementCounts(orders=1, carts=2, clicks=5, views=40),
    )
    base.update(overrides)
    return QipRecord(**base)


class TestDefaultConfig:
    def test_fused_score_weights(self, config):
        assert config.alpha == 0.6
        assert config.beta == 0.3
        assert config.gamma == 0.1

    def test_engagement_count_weights(self, config):
        assert config.lambda_counts == (1.5, 0.3, 0.1, 0.01)

    def test_target_mix_and_sigmoid(self, config):
        assert config.mu_rel == 0.85
        assert config.lambda_eng == 0.15
        assert config.sigmoid_k == 8

    def test_difficulty_weights_and_eval_defaults(self, config):
        assert (config.kappa1, config.kappa2) == (0.7, 0.3)
        assert config.epsilon_norm == 1e-8
        assert config.k_eval == 25
        assert config.relevant_threshold == 3
        assert config.stage_thresholds == (0.9, 0.85, 0.8)

    def test_default_config_is_valid(self, config):
        assert validate_config(config) == []


class TestValidateConfig:
    def test_bad_cap_reported(self, config):
        bad = replace(config, channel_caps={"ch_a": 1})
        assert any("cap" in p for p in validate_config(bad))

    def test_empty_thresholds_reported(self, config):
        bad = replace(config, stage_thresholds=())
        assert any("stage_thresholds" in p for p in validate_config(bad))

    def test_wrong_lambda_arity_reported(self, config):
        bad = replace(config, lambda_counts=(1.0, 2.0))
        assert any("lambda_counts" in p for p in validate_config(bad))


class TestValidateRecord:
    def test_uniform_distribution_ok(self, config):
        record = make_record(
            stage_distributions=((0.2, 0.2, 0.2, 0.2, 0.2),) * 3
        )
        assert validate_record(record, config) == []

    def test_rank_zero_flagged(self, config):
        record = make_record(channel_ranks={"ch_a": 0})
        assert any("rank < 1" in p for p in validate_record(record, config))

    def test_unknown_channel_flagged(self, config):
        record = make_record(channel_ranks={"ch9": 4})
        assert any("unknown channel" in p for p in validate_record(record, config))

    def test_no_evidence_flagged(self, config):
        record = make_record(human_rating=None, stage_distributions=None)
        assert any("rating evidence" in p for p in validate_record(record, config))

    def test_bad_distribution_sum_flagged(self, config):
        record = make_record(stage_distributions=((0.5, 0.1, 0.1, 0.1, 0.1),) * 3)
        assert any("sums to" in p for p in validate_record(record, config))

    def test_negative_engagement_flagged(self, config):
        record = make_record(engagement=EngagementCounts(orders=-1))
        assert any("engagement" in p for p in validate_record(record, config))


engagement_st = st.builds(
    EngagementCounts,
    orders=st.integers(0, 50),
    carts=st.integers(0, 50),
    clicks=st.integers(0, 200),
    views=st.integers(0, 5000),
)


@st.composite
def distribution_st(draw):
    weights = draw(
        st.lists(st.floats(0.01, 10.0, allow_nan=False), min_size=5, max_size=5)
    )
    total = sum(weights)
    return tuple(w / total for w in weights)


record_st = st.builds(
    QipRecord,
    query_id=st.text(st.characters(codec="ascii", categories=["L", "N"]), min_size=1, max_size=8),
    query_text=st.text(max_size=30),
    item_id=st.text(st.characters(codec="ascii", categories=["L", "N"]), min_size=1, max_size=8),
    item_text=st.text(max_size=30),
    human_rating=st.one_of(st.none(), st.integers(0, 4)),
    stage_distributions=st.one_of(
        st.none(),
        st.lists(distribution_st(), min_size=3, max_size=3).map(tuple),
    ),
    channel_ranks=st.dictionaries(
        st.sampled_from(sorted(DEFAULT_CHANNEL_CAPS)), st.integers(1, 2000), max_size=3
    ),
    engagement=engagement_st,
)


class TestSerialization:
    @given(record=record_st)
    def test_round_trip_preserves_fields(self, record):
        restored = record_from_dict(json.loads(json.dumps(record_to_dict(record))))
        assert restored == record

    def test_corpus_file_round_trip(self, tmp_path):
        records = [make_record(item_id=f"i{n}") for n in range(4)]
        path = tmp_path / "corpus.jsonl"
        assert write_corpus(path, records) == 4
        assert read_corpus(path) == records

    def test_read_reports_line_number_on_bad_json(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        good_line = json.dumps(record_to_dict(make_record()))
        path.write_text(f"{good_line}\nnot json\n", encoding="utf-8")
        with pytest.raises(ValueError, match=r"corpus\.jsonl:2:"):
            read_corpus(path)

    def test_missing_field_is_a_value_error(self):
        with pytest.raises(ValueError, match="missing field"):
            record_from_dict({"query_id": "q"})

    def test_empty_corpus_reads_as_empty_list(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text("", encoding="utf-8")
        assert read_corpus(path) == []


class TestConfigFile:
    def test_round_trip(self, tmp_path, config):
        path = tmp_path / "pipeline.cfg"
        save_config(config, path)
        assert load_config(path) == config

    def test_overrides_applied_on_top_of_defaults(self):
        parsed = parse_config_text("alpha = 0.5\nk_eval = 10\n")
        assert parsed.alpha == 0.5
        assert parsed.k_eval == 10
        assert parsed.beta == 0.3

    def test_comments_and_blanks_ignored(self):
        parsed = parse_config_text("# comment\n\nalpha = 0.4  # trailing\n")
        assert parsed.alpha == 0.4

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config_text("zeta = 1\n")

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError, match="sigmoid_k"):
            parse_config_text("sigmoid_k = -2\n")

    def test_channel_caps_syntax(self):
        parsed = parse_config_text("channel_caps = x:50, y:100\n")
        assert parsed.channel_caps == {"x": 50, "y": 100}

    @given(
        alpha=st.floats(0, 2, allow_nan=False),
        k_eval=st.integers(1, 100),
        seed=st.integers(0, 2**31),
    )
    def test_text_round_trip_any_valid_config(self, alpha, k_eval, seed):
        config = replace(load_default_config(), alpha=alpha, k_eval=k_eval, rng_seed=seed)
        assert parse_config_text(config_to_text(config)) == config


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(7, "q1") == derive_seed(7, "q1")

    def test_distinct_keys_distinct_streams(self):
        assert derive_seed(7, "q1") != derive_seed(7, "q2")

    def test_distinct_roots_distinct_streams(self):
        assert derive_seed(7, "q1") != derive_seed(8, "q1")

    @given(seed=st.integers(0, 2**64 - 1), key=st.text(max_size=20))
    def test_result_is_64_bit(self, seed, key):
        assert 0 <= derive_seed(seed, key) < 2**64
