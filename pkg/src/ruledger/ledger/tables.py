"""Ledger state tables.

State is a set of named tables of flat rows (string or integer cells).
Rows are appended or updated only from committed transactions; reads go
through select_entry, which filters on column equality and projects
columns in a caller-chosen order.
"""

from __future__ import annotations

from typing import Any, Sequence

from ..canonical import digest_hex


class UnknownTableError(KeyError):
    pass


class UnknownColumnError(KeyError):
    pass


class LedgerTable:
    def __init__(self, name: str, columns: Sequence[str]):
        self.name = name
        self.columns = tuple(columns)
        self.rows: list[dict] = []

    def insert(self, row: dict) -> int:
        """Append a row, returning its row id (insertion index)."""
        if set(row) != set(self.columns):
            raise UnknownColumnError(
                f"{self.name}: row columns {sorted(row)} != schema {sorted(self.columns)}"
            )
        self.rows.append(dict(row))
        return len(self.rows) - 1

    def update(self, row_id: int, column: str, value: Any) -> None:
        if column not in self.columns:
            raise UnknownColumnError(f"{self.name}: no column {column}")
        self.rows[row_id][column] = value


# Table names and schemas.  trigger_event mirrors the verification
# contract's query shape: rule binding row id, step, task, result.
ACL = "acl"
RULE = "rule"
USR_RULE = "usr_rule"
TRIGGER_EVENT = "trigger_event"
EVENT_RECORD = "event_record"
EVENT_INDEX = "event_index"
ACTION = "action"
DEVICE_BINDING = "device_binding"

SCHEMAS: dict[str, tuple[str, ...]] = {
    ACL: ("signer", "role", "usr_id"),
    RULE: ("rule_id", "usr_id", "title", "definition"),
    USR_RULE: ("usr_rule_id", "usr_id", "rule_id", "rule_name"),
    TRIGGER_EVENT: ("tRule_id", "tStep_id", "tTask_id", "tResult"),
    EVENT_RECORD: (
        "rule_id",
        "event_seq",
        "usr_rule_id",
        "usr_id",
        "rule_name",
        "step_id",
        "eid",
        "log_key",
        "log_sum",
        "consumed",
    ),
    EVENT_INDEX: ("rule_id", "event_seq", "eid"),
    ACTION: ("rule_id", "task_id", "step_id", "op_name", "device_id"),
    DEVICE_BINDING: ("usr_id", "device_id", "vendor"),
}


class TableStore:
    """All ledger tables of one node, plus the derived state digest."""

    def __init__(self) -> None:
        self.tables: dict[str, LedgerTable] = {
            name: LedgerTable(name, cols) for name, cols in SCHEMAS.items()
        }

    def table(self, name: str) -> LedgerTable:
        try:
            return self.tables[name]
        except KeyError:
            raise UnknownTableError(name) from None

    def insert(self, table: str, row: dict) -> int:
        return self.table(table).insert(row)

    def select_entry(
        self,
        table: str,
        cond_keys: Sequence[str],
        cond_vals: Sequence[Any],
        projection: Sequence[str],
    ) -> list[list[Any]]:
        """Rows matching all (key == val) conditions, in insertion order,
        each projected to the requested columns."""
        tbl = self.table(table)
        for col in list(cond_keys) + list(projection):
            if col not in tbl.columns:
                raise UnknownColumnError(f"{table}: no column {col}")
        if len(cond_keys) != len(cond_vals):
            raise ValueError("cond_keys and cond_vals differ in length")
        out: list[list[Any]] = []
        for row in tbl.rows:
            if all(row[k] == v for k, v in zip(cond_keys, cond_vals)):
                out.append([row[c] for c in projection])
        return out

    def snapshot(self) -> dict:
        return {name: [dict(r) for r in tbl.rows] for name, tbl in self.tables.items()}

    def state_digest(self) -> str:
        return digest_hex(self.snapshot())
