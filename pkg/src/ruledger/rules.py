"""Rule definitions, validation, and splitting into operation scripts.

A rule file is a single JSON object (schema 1) naming trigger and action
operations from a fixed catalog, each bound to a device and tagged with a
combinator.  Parsing derives a linear step list: trigger operations take
steps 0..T-1 and action operations continue from step T, which is the
order the ledger's step-chaining check expects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .canonical import canonical_bytes

OP_AND = "OP_AND"
OP_OR = "OP_OR"
COMBINATORS = (OP_AND, OP_OR)

# Fold identities: a single-element list folds to its own result.
_IDENTITY = {OP_AND: True, OP_OR: False}

CONDITION_IF_TRUE = "IF_TRUE"
_COMPARATORS = {
    "le": lambda a, b: a <= b,
    "lt": lambda a, b: a < b,
    "ge": lambda a, b: a >= b,
    "gt": lambda a, b: a > b,
    "eq": lambda a, b: a == b,
}

# Device API identifiers.
HEART_RATE_API = "HEART_RATE_API"
SMARTLOCK_UNLOCK = "SMARTLOCK_UNLOCK"
SMARTLOCK_LOCK = "SMARTLOCK_LOCK"
PRESENCE_API = "PRESENCE_API"
MODE_SET_API = "MODE_SET_API"


@dataclass(frozen=True)
class Thresholds:
    min_rate: int = 40
    max_rate: int = 180


def _heart_rate_alert(payload: dict, thr: Thresholds) -> bool:
    rate = payload["heart_rate"]
    return rate <= thr.min_rate or rate >= thr.max_rate


def _presence_home(payload: dict, thr: Thresholds) -> bool:
    return payload.get("presence") == "home"


@dataclass(frozen=True)
class CatalogOp:
    name: str
    api: str
    kind: str  # "trigger" or "action"
    predicate: "object" = None  # trigger ops: (payload, Thresholds) -> bool


CATALOG: dict[str, CatalogOp] = {
    op.name: op
    for op in (
        CatalogOp("alert_on_heart_rate", HEART_RATE_API, "trigger", _heart_rate_alert),
        CatalogOp("check_presence_operation", PRESENCE_API, "trigger", _presence_home),
        CatalogOp("open_door_operation", SMARTLOCK_UNLOCK, "action"),
        CatalogOp("close_door_operation", SMARTLOCK_LOCK, "action"),
        CatalogOp("set_home_mode_operation", MODE_SET_API, "action"),
    )
}


class RuleError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class OperationScript:
    """One executable step of a rule."""

    step_id: int
    op_name: str
    device_id: str
    combinator: str
    kind: str
    api: str


@dataclass
class RuleDefinition:
    schema: int
    title: str
    rule_id: int
    trigger_operations: list[list[str]]
    condition: object
    action_operations: list[list[str]]

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "title": self.title,
            "rule_id": self.rule_id,
            "trigger_operations": [list(t) for t in self.trigger_operations],
            "condition": self.condition,
            "action_operations": [list(t) for t in self.action_operations],
        }

    @property
    def steps(self) -> list[OperationScript]:
        return split_rule(self)


_REQUIRED_KEYS = {
    "schema",
    "title",
    "rule_id",
    "trigger_operations",
    "condition",
    "action_operations",
}


def _check_ops(entries, expected_kind: str, known_devices) -> None:
    if not isinstance(entries, list) or not entries:
        raise RuleError("UnsupportedSchema", f"{expected_kind}_operations must be a non-empty list")
    for entry in entries:
        if not isinstance(entry, list) or len(entry) != 3:
            raise RuleError(
                "UnsupportedSchema", f"operation entry must be [op, device, combinator]: {entry!r}"
            )
        op_name, device_id, comb = entry
        op = CATALOG.get(op_name)
        if op is None or op.kind != expected_kind:
            raise RuleError("UnknownOp", f"no {expected_kind} operation named {op_name!r}")
        if not isinstance(device_id, str) or not device_id:
            raise RuleError("UnboundDevice", f"bad device id {device_id!r}")
        if known_devices is not None and device_id not in known_devices:
            raise RuleError("UnboundDevice", f"device {device_id!r} is not registered")
        if comb not in COMBINATORS:
            raise RuleError("BadCombinator", f"unknown combinator {comb!r}")


def parse_rule(data, known_devices=None) -> RuleDefinition:
    """Parse and validate a rule from JSON bytes/str or an already-loaded dict."""
    if isinstance(data, (bytes, str)):
        try:
            data = json.loads(data)
        except ValueError as exc:
            raise RuleError("UnsupportedSchema", f"not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise RuleError("UnsupportedSchema", "rule must be a JSON object")
    if set(data) != _REQUIRED_KEYS:
        missing = _REQUIRED_KEYS - set(data)
        extra = set(data) - _REQUIRED_KEYS
        raise RuleError(
            "UnsupportedSchema", f"bad keys (missing={sorted(missing)}, extra={sorted(extra)})"
        )
    if data["schema"] != 1:
        raise RuleError("UnsupportedSchema", f"unsupported schema {data['schema']!r}")
    if not isinstance(data["title"], str) or not data["title"]:
        raise RuleError("UnsupportedSchema", "title must be a non-empty string")
    if not isinstance(data["rule_id"], int) or isinstance(data["rule_id"], bool) or data["rule_id"] < 0:
        raise RuleError("UnsupportedSchema", "rule_id must be a non-negative integer")

    _check_ops(data["trigger_operations"], "trigger", known_devices)
    _check_ops(data["action_operations"], "action", known_devices)

    cond = data["condition"]
    if cond != CONDITION_IF_TRUE:
        if (
            not isinstance(cond, dict)
            or set(cond) != {"cmp", "field", "value"}
            or cond["cmp"] not in _COMPARATORS
            or not isinstance(cond["field"], str)
            or not isinstance(cond["value"], int)
        ):
            raise RuleError("UnsupportedSchema", f"bad condition {cond!r}")
        if len(data["trigger_operations"]) != 1:
            raise RuleError(
                "UnsupportedSchema", "comparator conditions require exactly one trigger operation"
            )

    return RuleDefinition(
        schema=1,
        title=data["title"],
        rule_id=data["rule_id"],
        trigger_operations=[list(t) for t in data["trigger_operations"]],
        condition=cond,
        action_operations=[list(t) for t in data["action_operations"]],
    )


def serialize_rule(rule: RuleDefinition) -> bytes:
    return canonical_bytes(rule.to_dict())


def split_rule(rule: RuleDefinition) -> list[OperationScript]:
    """Derive per-step operation scripts: triggers first, then actions."""
    scripts: list[OperationScript] = []
    step = 0
    for op_name, device_id, comb in rule.trigger_operations:
        op = CATALOG[op_name]
        scripts.append(OperationScript(step, op_name, device_id, comb, "trigger", op.api))
        step += 1
    for op_name, device_id, comb in rule.action_operations:
        op = CATALOG[op_name]
        scripts.append(OperationScript(step, op_name, device_id, comb, "action", op.api))
        step += 1
    return scripts


def eval_combinator(results: list[bool], combinators: list[str]) -> bool:
    """Left-to-right fold of boolean results under per-element combinators.

    The accumulator starts at the identity of the first combinator, so a
    single-element list folds to its own result regardless of combinator.
    """
    if len(results) != len(combinators):
        raise RuleError("BadCombinator", "results and combinators differ in length")
    if not results:
        raise RuleError("BadCombinator", "empty operation list")
    for comb in combinators:
        if comb not in COMBINATORS:
            raise RuleError("BadCombinator", f"unknown combinator {comb!r}")
    acc = _IDENTITY[combinators[0]]
    for result, comb in zip(results, combinators):
        if comb == OP_AND:
            acc = acc and bool(result)
        else:
            acc = acc or bool(result)
    return acc


def evaluate_trigger(
    rule: RuleDefinition, op_results: list[bool], first_payload: dict | None = None
) -> bool:
    """Combine per-operation results and apply the rule's condition."""
    folded = eval_combinator(op_results, [t[2] for t in rule.trigger_operations])
    cond = rule.condition
    if cond == CONDITION_IF_TRUE:
        return folded
    # Comparator conditions look at the first trigger's numeric payload.
    if first_payload is None or cond["field"] not in first_payload:
        return False
    return _COMPARATORS[cond["cmp"]](first_payload[cond["field"]], cond["value"])
