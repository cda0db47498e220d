import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetmf import (ModelError, ModelFormatError, add_rule, build_random_m, build_two_choice,
                   cache_config, decode, encode, lb_config, load_model, new_model, rule,
                   save_model, validate, zipf_popularities)


def two_state(n=2):
    return new_model(n, ["a", "b"])


class TestNewModel:
    def test_basic(self):
        m = new_model(4, ["out", "in"])
        assert m.n == 4 and m.num_states == 2 and m.rules == ()

    def test_degenerate_single_object(self):
        m = new_model(1, ["a"])
        assert m.dim == 1

    def test_cache_shape(self):
        m = new_model(20, ["l0", "l1", "l2", "l3"])
        assert m.dim == 80

    def test_rejects_zero_objects(self):
        with pytest.raises(ModelError):
            new_model(0, ["a"])

    def test_rejects_duplicate_labels(self):
        with pytest.raises(ModelError):
            new_model(2, ["a", "a"])

    def test_rejects_empty_states(self):
        with pytest.raises(ModelError):
            new_model(2, [])


class TestAddRule:
    def test_unilateral(self):
        m = add_rule(two_state(), rule([(0, "a", "b")], 2.0))
        assert len(m.rules) == 1

    def test_pairwise_swap_accepted(self):
        m = new_model(4, ["0", "1"])
        m = add_rule(m, rule([(0, "0", "1"), (1, "1", "0")], 0.5))
        assert m.rules[0].arity == 2

    def test_value_semantics(self):
        m0 = two_state()
        m1 = add_rule(m0, rule([(0, "a", "b")], 1.0))
        m2 = add_rule(m1, rule([(1, "a", "b")], 1.0))
        assert m0.rules == () and len(m1.rules) == 1 and len(m2.rules) == 2
        assert m2.rules[0] == m1.rules[0]

    def test_rejects_no_state_change(self):
        with pytest.raises(ModelError):
            add_rule(two_state(), rule([(0, "a", "a")], 1.0))

    def test_rejects_unknown_object(self):
        with pytest.raises(ModelError):
            add_rule(two_state(), rule([(5, "a", "b")], 1.0))

    def test_rejects_unknown_state(self):
        with pytest.raises(ModelError):
            add_rule(two_state(), rule([(0, "a", "z")], 1.0))

    def test_rejects_duplicate_object(self):
        with pytest.raises(ModelError):
            add_rule(two_state(), rule([(0, "a", "b"), (0, "b", "a")], 1.0))

    def test_rejects_negative_rate(self):
        with pytest.raises(ModelError):
            add_rule(two_state(), rule([(0, "a", "b")], -1.0))


class TestValidate:
    def test_builder_models_clean(self):
        cache = build_random_m(cache_config(zipf_popularities(6, 0.5), [2, 1]))
        lb = build_two_choice(lb_config([1.0, 2.0, 0.5], 1.0, 4))
        for model in (cache, lb):
            report = validate(model)
            assert report.ok and report.warnings == []

    def test_rate_bound_warning(self):
        m = new_model(4, ["a", "b"], rate_bound_hint=1.0)
        m = add_rule(m, rule([(0, "a", "b"), (1, "a", "b")], 10.0))
        report = validate(m)
        # unscaled rate = 10 * 2 * 4^1 = 80
        assert report.ok
        assert any("80" in w and "1" in w for w in report.warnings)

    def test_high_arity_warning(self):
        m = new_model(6, ["a", "b"])
        parts = [(k, "a", "b") for k in range(5)]
        m = add_rule(m, rule(parts, 0.1))
        assert any("d <= 2" in w for w in validate(m).warnings)


class TestEncode:
    def test_explicit_example(self):
        m = two_state()
        x = encode(m, ["a", "b"])
        assert x.tolist() == [1.0, 0.0, 0.0, 1.0]

    def test_figure1_initial_condition(self, fig1_model):
        # objects 3 and 4 (1-based) start inside the cache
        x = encode(fig1_model, ["0", "0", "1", "1"])
        assert x.reshape(4, 2)[:, 1].tolist() == [0.0, 0.0, 1.0, 1.0]

    def test_rejects_unknown_label(self):
        with pytest.raises(ModelError):
            encode(two_state(), ["a", "z"])

    def test_decode_rejects_non_indicator(self):
        with pytest.raises(ModelError):
            decode(two_state(), np.array([0.5, 0.5, 1.0, 0.0]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=6))
    def test_round_trip(self, labels):
        m = new_model(len(labels), ["a", "b", "c"])
        assert decode(m, encode(m, labels)) == labels


class TestJsonRoundTrip:
    def test_round_trip(self, tmp_path, cache8_model):
        path = tmp_path / "model.json"
        save_model(cache8_model, path)
        loaded = load_model(path)
        assert loaded.structurally_equal(cache8_model)

    def test_missing_rules_key(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"hetmf_schema": 1, "n": 2, "states": ["a"], "rate_bound_hint": null}')
        with pytest.raises(ModelFormatError, match="rules"):
            load_model(path)

    def test_rate_as_string(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(
            '{"hetmf_schema": 1, "n": 1, "states": ["a", "b"], "rate_bound_hint": null,'
            ' "rules": [{"rate": "fast", "participants":'
            ' [{"object": 1, "from": "a", "to": "b"}]}]}')
        with pytest.raises(ModelFormatError, match="rate"):
            load_model(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_semantic_violation(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(
            '{"hetmf_schema": 1, "n": 2, "states": ["a", "b"], "rate_bound_hint": null,'
            ' "rules": [{"rate": 1.0, "participants":'
            ' [{"object": 5, "from": "a", "to": "b"}]}]}')
        with pytest.raises(ModelFormatError, match="object"):
            load_model(path)
