"""Simulated smart devices, vendor gateways, and the shared execution log.

Every successful device API call writes an entry to the vendor-side log
service under a caller-supplied (eid, log_key) pair before the response
leaves the device.  The logged checksum is what the ledger's event
verification later compares against, so a claimed execution with no
matching log entry is detectable.
"""

from __future__ import annotations

from .canonical import canonical_bytes, sha256_hex
from .rules import (
    HEART_RATE_API,
    MODE_SET_API,
    PRESENCE_API,
    SMARTLOCK_LOCK,
    SMARTLOCK_UNLOCK,
)
from .sim.network import Process

DEVICE_KINDS = ("heart_rate", "smart_lock", "presence")

# Which APIs each device kind answers.  The presence sensor doubles as the
# home hub, so it also takes mode changes.
_KIND_APIS = {
    "heart_rate": (HEART_RATE_API,),
    "smart_lock": (SMARTLOCK_UNLOCK, SMARTLOCK_LOCK),
    "presence": (PRESENCE_API, MODE_SET_API),
}

ACTION_APIS = {SMARTLOCK_UNLOCK, SMARTLOCK_LOCK, MODE_SET_API}


def checksum(payload: dict) -> str:
    """Execution-result checksum as recorded in the log service."""
    return sha256_hex(canonical_bytes(payload))


class LogService:
    """Write-once store of execution log entries, shared per deployment.

    Lives outside the message network: devices call it synchronously so the
    log write is durable before the device response is sent.
    """

    def __init__(self):
        self._entries: dict[tuple[str, str], dict] = {}
        self.writes = 0

    def write(self, eid: str, log_key: str, log_sum: str, device_id: str, at_ms: int) -> None:
        pair = (eid, log_key)
        if pair in self._entries:
            raise ValueError(f"log entry already exists for {pair}")
        self._entries[pair] = {"log_sum": log_sum, "device_id": device_id, "at_ms": at_ms}
        self.writes += 1

    def query_checksum(self, eid: str, log_key: str):
        entry = self._entries.get((eid, log_key))
        return None if entry is None else entry["log_sum"]

    def lookup(self, eid: str, log_key: str):
        return self._entries.get((eid, log_key))

    def __len__(self) -> int:
        return len(self._entries)


class Device(Process):
    """One simulated device endpoint behind a vendor gateway.

    State changes come either from a scenario timeline (scheduled patches)
    or from action APIs.  `history` records every state transition with its
    sim timestamp, which run reports use for determinism checks.
    """

    def __init__(self, addr, net, device_id, kind, vendor, log_service, initial=None):
        super().__init__(addr, net)
        if kind not in DEVICE_KINDS:
            raise ValueError(f"unknown device kind {kind!r}")
        self.device_id = device_id
        self.kind = kind
        self.vendor = vendor
        self.log = log_service
        self.state = dict(initial or {})
        self.online = bool(self.state.pop("online", True))
        self.history: list[tuple[int, dict]] = [(0, dict(self.state))]
        self.actions_executed = 0
        self.push_targets: list[str] = []

    def apply_patch(self, patch: dict) -> None:
        patch = dict(patch)
        if "online" in patch:
            self.online = bool(patch.pop("online"))
        self.state.update(patch)
        self.history.append((self.net.scheduler.now, dict(self.state)))
        for target in self.push_targets:
            self.send(target, {"type": "device_push", "device_id": self.device_id})

    def _execute(self, api: str) -> dict:
        if api == HEART_RATE_API:
            return {"heart_rate": self.state.get("heart_rate", 0)}
        if api == PRESENCE_API:
            return {"presence": self.state.get("presence", "away")}
        if api == SMARTLOCK_UNLOCK:
            self.state["lock"] = "unlocked"
            return {"lock": "unlocked"}
        if api == SMARTLOCK_LOCK:
            self.state["lock"] = "locked"
            return {"lock": "locked"}
        if api == MODE_SET_API:
            self.state["mode"] = "home_mode"
            return {"mode": "home_mode"}
        raise AssertionError(api)

    def on_message(self, src, msg):
        if msg.get("type") != "rpc":
            return
        reply = {"type": "rpc_result", "corr": msg.get("corr"), "device_id": self.device_id}
        if not self.online:
            reply.update(ok=False, error="DeviceOffline")
            self.send(src, reply)
            return
        api = msg.get("api")
        if api not in _KIND_APIS[self.kind]:
            reply.update(ok=False, error="UnknownApi")
            self.send(src, reply)
            return
        payload = self._execute(api)
        if api in ACTION_APIS:
            self.actions_executed += 1
            self.history.append((self.net.scheduler.now, dict(self.state)))
        # Log first, respond second: the entry exists before anyone can
        # cite it in a transaction.
        self.log.write(
            msg["eid"], msg["log_key"], checksum(payload), self.device_id, self.net.scheduler.now
        )
        reply.update(ok=True, payload=payload)
        self.send(src, reply)


class Gateway(Process):
    """Vendor API gateway: token checks, then relay to the device."""

    def __init__(self, addr, net, vendor):
        super().__init__(addr, net)
        self.vendor = vendor
        self.tokens: dict[str, dict] = {}
        self.devices: dict[str, str] = {}  # device_id -> addr
        self._pending: dict[int, str] = {}  # corr -> caller addr
        self._corr = 0
        self.rejected = {"BadToken": 0, "UnknownDevice": 0}

    def mint_token(self, device_id: str, scopes) -> str:
        token = f"tok-{self.vendor}-{device_id}"
        self.tokens[token] = {"device_id": device_id, "scopes": tuple(scopes)}
        return token

    def register_device(self, device: Device) -> str:
        self.devices[device.device_id] = device.addr
        return self.mint_token(device.device_id, _KIND_APIS[device.kind])

    def on_message(self, src, msg):
        mtype = msg.get("type")
        if mtype == "rpc_call":
            grant = self.tokens.get(msg.get("token"))
            device_id = msg.get("device_id")
            if grant is None or grant["device_id"] != device_id or msg.get("api") not in grant["scopes"]:
                self.rejected["BadToken"] += 1
                self.send(src, {"type": "rpc_result", "corr": msg.get("corr"),
                                "ok": False, "error": "BadToken"})
                return
            dev_addr = self.devices.get(device_id)
            if dev_addr is None:
                self.rejected["UnknownDevice"] += 1
                self.send(src, {"type": "rpc_result", "corr": msg.get("corr"),
                                "ok": False, "error": "UnknownDevice"})
                return
            self._corr += 1
            self._pending[self._corr] = (src, msg.get("corr"))
            self.send(dev_addr, {"type": "rpc", "api": msg["api"], "eid": msg["eid"],
                                 "log_key": msg["log_key"], "corr": self._corr})
        elif mtype == "rpc_result":
            pending = self._pending.pop(msg.get("corr"), None)
            if pending is None:
                return
            caller, caller_corr = pending
            out = dict(msg)
            out["corr"] = caller_corr
            self.send(caller, out)


def inject_spoofed_event(rng, binding: dict, step_id: int, event_seq: int, fake_payload: dict) -> dict:
    """Craft an event transaction body claiming an execution that never ran.

    No device touched, no log entry written: the (eid, log_key) pair is
    invented and log_sum is a self-consistent checksum of the fake payload.
    `binding` carries usr_rule_id, usr_id, rule_id, and rule_name.
    """
    eid = rng.randbytes(16).hex()
    log_key = rng.randbytes(16).hex()
    return {
        "event_info": {
            "usr_rule_id": binding["usr_rule_id"],
            "usr_id": binding["usr_id"],
            "rule_id": binding["rule_id"],
            "rule_name": binding["rule_name"],
            "step_id": step_id,
            "event_seq": event_seq,
        },
        "event_log": {"eid": eid, "log_key": log_key, "log_sum": checksum(fake_payload)},
        "result_status": 1,
        "task_ref": event_seq,
    }
