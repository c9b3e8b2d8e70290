"""Rule parsing, splitting, and combinator folding."""

import itertools
import json

import pytest
from hypothesis import given, strategies as st

from conftest import hr_rule
from ruledger import rules
from ruledger.canonical import canonical_bytes


def test_parse_accepts_dict_str_and_bytes():
    raw = hr_rule()
    for form in (raw, json.dumps(raw), json.dumps(raw).encode()):
        parsed = rules.parse_rule(form)
        assert parsed.to_dict() == raw


def test_serialize_round_trips_to_canonical_bytes():
    raw = hr_rule(extra_actions=[["set_home_mode_operation", "hub-1", "OP_OR"]])
    assert rules.serialize_rule(rules.parse_rule(raw)) == canonical_bytes(raw)


def _broken(**overrides):
    raw = hr_rule()
    raw.update(overrides)
    return raw


@pytest.mark.parametrize("data,code", [
    (b"{not json", "UnsupportedSchema"),
    ([1, 2], "UnsupportedSchema"),
    ({k: v for k, v in hr_rule().items() if k != "title"}, "UnsupportedSchema"),
    (dict(hr_rule(), surprise=1), "UnsupportedSchema"),
    (_broken(schema=2), "UnsupportedSchema"),
    (_broken(title=""), "UnsupportedSchema"),
    (_broken(rule_id=True), "UnsupportedSchema"),
    (_broken(rule_id=-1), "UnsupportedSchema"),
    (_broken(trigger_operations=[]), "UnsupportedSchema"),
    (_broken(trigger_operations=[["alert_on_heart_rate", "watch-1"]]), "UnsupportedSchema"),
    (_broken(trigger_operations=[["sense_aura", "watch-1", "OP_AND"]]), "UnknownOp"),
    (_broken(trigger_operations=[["open_door_operation", "lock-1", "OP_AND"]]), "UnknownOp"),
    (_broken(action_operations=[["alert_on_heart_rate", "watch-1", "OP_AND"]]), "UnknownOp"),
    (_broken(trigger_operations=[["alert_on_heart_rate", "", "OP_AND"]]), "UnboundDevice"),
    (_broken(trigger_operations=[["alert_on_heart_rate", 5, "OP_AND"]]), "UnboundDevice"),
    (_broken(action_operations=[["open_door_operation", "lock-1", "OP_XOR"]]), "BadCombinator"),
    (_broken(condition={"cmp": "ne", "field": "x", "value": 1}), "UnsupportedSchema"),
    (_broken(condition={"cmp": "ge", "field": "x"}), "UnsupportedSchema"),
])
def test_parse_rejections_carry_error_codes(data, code):
    with pytest.raises(rules.RuleError) as exc:
        rules.parse_rule(data)
    assert exc.value.code == code


def test_parse_checks_devices_against_registry_when_given():
    raw = hr_rule()
    rules.parse_rule(raw, known_devices={"watch-1", "lock-1"})
    with pytest.raises(rules.RuleError) as exc:
        rules.parse_rule(raw, known_devices={"watch-1"})
    assert exc.value.code == "UnboundDevice"


def test_comparator_condition_requires_single_trigger():
    raw = hr_rule()
    raw["trigger_operations"].append(["check_presence_operation", "hub-1", "OP_AND"])
    raw["condition"] = {"cmp": "ge", "field": "heart_rate", "value": 180}
    with pytest.raises(rules.RuleError) as exc:
        rules.parse_rule(raw)
    assert exc.value.code == "UnsupportedSchema"


def test_split_assigns_trigger_steps_before_action_steps():
    raw = hr_rule(extra_actions=[["set_home_mode_operation", "hub-1", "OP_OR"]])
    raw["trigger_operations"].append(["check_presence_operation", "hub-1", "OP_AND"])
    steps = rules.parse_rule(raw).steps
    assert [(s.step_id, s.kind) for s in steps] == [
        (0, "trigger"), (1, "trigger"), (2, "action"), (3, "action")]
    assert [s.api for s in steps] == [
        rules.HEART_RATE_API, rules.PRESENCE_API,
        rules.SMARTLOCK_UNLOCK, rules.MODE_SET_API]
    assert steps[0].device_id == "watch-1"
    assert steps[3].combinator == "OP_OR"


# ---------------------------------------------------------------------------
# combinator folding


def _fold_oracle(results, combinators):
    # restated independently: seed with the first combinator's identity,
    # then thread left to right
    acc = combinators[0] == "OP_AND"
    for r, c in zip(results, combinators):
        acc = (acc and r) if c == "OP_AND" else (acc or r)
    return acc


def test_eval_combinator_exhaustive_up_to_four_ops():
    for n in range(1, 5):
        for results in itertools.product([False, True], repeat=n):
            for combs in itertools.product(["OP_AND", "OP_OR"], repeat=n):
                got = rules.eval_combinator(list(results), list(combs))
                assert got == _fold_oracle(results, combs), (results, combs)


@pytest.mark.parametrize("results,combs,expected", [
    ([True], ["OP_AND"], True),      # singleton folds to itself
    ([False], ["OP_AND"], False),
    ([True], ["OP_OR"], True),
    ([False], ["OP_OR"], False),
    ([True, True, False], ["OP_AND"] * 3, False),   # pure AND == all()
    ([False, False, True], ["OP_OR"] * 3, True),    # pure OR == any()
    ([True, False], ["OP_AND", "OP_OR"], True),     # (T) then or F... then or: T
    ([False, True], ["OP_OR", "OP_AND"], False),    # F seed, or F, and T stays F
])
def test_eval_combinator_hand_computed_cells(results, combs, expected):
    assert rules.eval_combinator(results, combs) is expected


def test_pure_folds_match_builtin_all_any():
    for n in range(1, 5):
        for results in itertools.product([False, True], repeat=n):
            assert rules.eval_combinator(list(results), ["OP_AND"] * n) == all(results)
            assert rules.eval_combinator(list(results), ["OP_OR"] * n) == any(results)


@pytest.mark.parametrize("results,combs", [
    ([True, False], ["OP_AND"]),
    ([], []),
    ([True], ["OP_NAND"]),
])
def test_eval_combinator_rejects_malformed_input(results, combs):
    with pytest.raises(rules.RuleError) as exc:
        rules.eval_combinator(results, combs)
    assert exc.value.code == "BadCombinator"


def test_evaluate_trigger_if_true_returns_the_fold():
    rule = rules.parse_rule(hr_rule())
    assert rule.condition == "IF_TRUE"
    assert rules.evaluate_trigger(rule, [True]) is True
    assert rules.evaluate_trigger(rule, [False]) is False


def test_evaluate_trigger_comparator_reads_first_payload():
    raw = hr_rule()
    raw["condition"] = {"cmp": "ge", "field": "heart_rate", "value": 180}
    rule = rules.parse_rule(raw)
    assert rules.evaluate_trigger(rule, [True], {"heart_rate": 185}) is True
    assert rules.evaluate_trigger(rule, [True], {"heart_rate": 180}) is True
    assert rules.evaluate_trigger(rule, [True], {"heart_rate": 179}) is False
    assert rules.evaluate_trigger(rule, [True], {"steps": 9000}) is False
    assert rules.evaluate_trigger(rule, [True], None) is False


@pytest.mark.parametrize("cmp,value,sample,expected", [
    ("le", 40, 40, True), ("le", 40, 41, False),
    ("lt", 40, 39, True), ("lt", 40, 40, False),
    ("gt", 180, 181, True), ("gt", 180, 180, False),
    ("eq", 72, 72, True), ("eq", 72, 73, False),
])
def test_comparators(cmp, value, sample, expected):
    raw = hr_rule()
    raw["condition"] = {"cmp": cmp, "field": "heart_rate", "value": value}
    rule = rules.parse_rule(raw)
    assert rules.evaluate_trigger(rule, [True], {"heart_rate": sample}) is expected


def test_heart_rate_predicate_boundaries():
    pred = rules.CATALOG["alert_on_heart_rate"].predicate
    thr = rules.Thresholds()
    assert pred({"heart_rate": 40}, thr)
    assert pred({"heart_rate": 180}, thr)
    assert not pred({"heart_rate": 41}, thr)
    assert not pred({"heart_rate": 179}, thr)
    assert pred({"heart_rate": 200}, rules.Thresholds(max_rate=190))


def test_presence_predicate():
    pred = rules.CATALOG["check_presence_operation"].predicate
    assert pred({"presence": "home"}, rules.Thresholds())
    assert not pred({"presence": "away"}, rules.Thresholds())
    assert not pred({}, rules.Thresholds())


_TRIGGERS = [n for n, op in rules.CATALOG.items() if op.kind == "trigger"]
_ACTIONS = [n for n, op in rules.CATALOG.items() if op.kind == "action"]
_op_entry = lambda names: st.tuples(
    st.sampled_from(names),
    st.sampled_from(["watch-1", "lock-1", "hub-1"]),
    st.sampled_from(list(rules.COMBINATORS)),
).map(list)

rule_dicts = st.fixed_dictionaries({
    "schema": st.just(1),
    "title": st.text(min_size=1, max_size=30),
    "rule_id": st.integers(min_value=0, max_value=10**6),
    "trigger_operations": st.lists(_op_entry(_TRIGGERS), min_size=1, max_size=3),
    "condition": st.just("IF_TRUE"),
    "action_operations": st.lists(_op_entry(_ACTIONS), min_size=1, max_size=3),
})


@given(rule_dicts)
def test_generated_rules_round_trip_and_split(raw):
    parsed = rules.parse_rule(raw)
    assert parsed.to_dict() == raw
    assert rules.serialize_rule(parsed) == canonical_bytes(raw)
    steps = parsed.steps
    assert len(steps) == len(raw["trigger_operations"]) + len(raw["action_operations"])
    assert [s.step_id for s in steps] == list(range(len(steps)))
    trigger_count = len(raw["trigger_operations"])
    assert all(s.kind == "trigger" for s in steps[:trigger_count])
    assert all(s.kind == "action" for s in steps[trigger_count:])
