"""Submission helper shared by the wallet agents.

The client sends a transaction to one entry node, then counts receipt
replies from all nodes and resolves once f + 1 of them agree, so a lying
minority cannot spoof an outcome.  A submission that stays unresolved
past the timeout is retried through the next entry node.
"""

from __future__ import annotations

from typing import Callable

from .. import contracts
from ..sim.network import Process
from .tx import SignedTransaction, TxReceipt

ReceiptCallback = Callable[[TxReceipt], None]


class LedgerClient:
    def __init__(
        self,
        owner: Process,
        node_addrs: list[str],
        f: int,
        timeout_ms: int = 8000,
        start_entry: int = 0,
    ):
        self.owner = owner
        self.node_addrs = node_addrs
        self.f = f
        self.timeout_ms = timeout_ms
        self._cursor = start_entry % len(node_addrs)
        # tx_id -> {tally, cb, tx, tries, epoch, submitted_at}
        self.pending: dict[str, dict] = {}
        self.resolved: dict[str, TxReceipt] = {}
        self.latencies_ms: list[int] = []

    def submit(self, tx: SignedTransaction, cb: ReceiptCallback | None = None) -> str:
        tid = tx.tx_id
        entry = self.node_addrs[self._cursor % len(self.node_addrs)]
        self._cursor += 1
        self.pending[tid] = {
            "tally": {},
            "cb": cb,
            "tx": tx,
            "tries": 1,
            "epoch": 0,
            "submitted_at": self.owner.net.scheduler.now,
        }
        self.owner.send(entry, {"type": "submit", "tx": tx.wire()})
        self._arm_timeout(tid, 0)
        return tid

    def _arm_timeout(self, tid: str, epoch: int) -> None:
        self.owner.net.scheduler.schedule(
            self.timeout_ms, lambda: self._on_timeout(tid, epoch)
        )

    def _on_timeout(self, tid: str, epoch: int) -> None:
        entry_count = len(self.node_addrs)
        state = self.pending.get(tid)
        if state is None or state["epoch"] != epoch:
            return
        if state["tries"] >= 2 * entry_count:
            self._resolve(
                tid, TxReceipt(tid, False, code="Timeout", height=None)
            )
            return
        state["tries"] += 1
        state["epoch"] += 1
        entry = self.node_addrs[self._cursor % entry_count]
        self._cursor += 1
        self.owner.send(entry, {"type": "submit", "tx": state["tx"].wire()})
        self._arm_timeout(tid, state["epoch"])

    def on_receipt(self, src: str, msg: dict) -> None:
        try:
            receipt = TxReceipt.from_wire(msg)
        except (KeyError, TypeError):
            return  # a Byzantine entry node can send garbage
        state = self.pending.get(receipt.tx_id)
        if state is None:
            return
        key = (receipt.accepted, receipt.code, receipt.height)
        senders = state["tally"].setdefault(key, [])
        if src in senders:
            return
        senders.append(src)
        # A pre-consensus signature reject comes from the entry node only.
        needed = 1 if receipt.code == contracts.CODE_BAD_SIGNATURE else self.f + 1
        if len(senders) >= needed:
            self._resolve(receipt.tx_id, receipt)

    def _resolve(self, tid: str, receipt: TxReceipt) -> None:
        state = self.pending.pop(tid, None)
        if state is None:
            return
        self.resolved[tid] = receipt
        if receipt.accepted:
            self.latencies_ms.append(
                self.owner.net.scheduler.now - state["submitted_at"]
            )
        if state["cb"] is not None:
            state["cb"](receipt)
