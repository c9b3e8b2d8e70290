"""Wallet agents: the user's console, the execution agent, and the task agent.

These are the only holders of signing keys.  Each one wraps a ledger
client for submissions and reacts to node notifications, but acts on a
notification only after f + 1 nodes sent byte-identical copies, so a
minority of lying nodes cannot steer an agent.
"""

from __future__ import annotations

from .canonical import digest_hex, sha256_hex
from . import contracts
from .devices import checksum
from .keys import KeyPair
from .ledger.client import LedgerClient
from .ledger.tx import KIND_ACTION, KIND_CONFIG, KIND_EVENT, KIND_RULE_COMMIT, build_tx
from .rules import CATALOG, RuleDefinition, Thresholds, evaluate_trigger, parse_rule, split_rule
from .sim.network import Process


class QuorumGate:
    """Fires once per key, after `need` distinct sources offered that key."""

    def __init__(self, need: int):
        self.need = need
        self._seen: dict[str, set] = {}
        self._fired: set[str] = set()

    def offer(self, key: str, source) -> bool:
        if key in self._fired:
            return False
        sources = self._seen.setdefault(key, set())
        sources.add(source)
        if len(sources) >= self.need:
            self._fired.add(key)
            return True
        return False


class AgentBase(Process):
    def __init__(self, addr, net, keypair: KeyPair, node_addrs, f: int):
        super().__init__(addr, net)
        self.keypair = keypair
        self.f = f
        self.client = LedgerClient(self, node_addrs, f)
        self._nonce = 0

    def next_nonce(self) -> int:
        self._nonce += 1
        return self._nonce

    def submit(self, kind, payload, cb=None) -> str:
        tx = build_tx(kind, payload, self.keypair, self.next_nonce())
        return self.client.submit(tx, cb)

    def on_message(self, src, msg):
        if msg.get("type") == "receipt":
            self.client.on_receipt(src, msg)
        else:
            self.handle(src, msg)

    def handle(self, src, msg):
        pass


class UserAgent(AgentBase):
    """The rule owner's console: commits rules, wires up the other parties."""

    def __init__(self, addr, net, keypair, node_addrs, f, usr_id,
                 tamock_addr=None, exec_agent_addr=None):
        super().__init__(addr, net, keypair, node_addrs, f)
        self.usr_id = usr_id
        self.tamock_addr = tamock_addr
        self.exec_agent_addr = exec_agent_addr
        self.commit_outcomes: list[dict] = []
        self.export_acked: set[int] = set()
        self.export_attempts: dict[int, int] = {}

    def commit_rule(self, rule: RuleDefinition, usr_rule_id: int,
                    mode: str = "poll", cb=None) -> str:
        payload = {
            "action": "commit_rule",
            "usr_rule_id": usr_rule_id,
            "usr_id": self.usr_id,
            "rule": rule.to_dict(),
        }

        def after(receipt):
            self.commit_outcomes.append(
                {"rule_id": rule.rule_id, "accepted": receipt.accepted, "code": receipt.code}
            )
            if receipt.accepted:
                self._export_rule(rule)
                self._register_trigger(rule, usr_rule_id, mode)
            if cb is not None:
                cb(receipt)

        return self.submit(KIND_RULE_COMMIT, payload, after)

    def modify_rule(self, rule: RuleDefinition, usr_rule_id: int, cb=None) -> str:
        payload = {
            "action": "modify_rule",
            "usr_rule_id": usr_rule_id,
            "usr_id": self.usr_id,
            "rule": rule.to_dict(),
        }

        def after(receipt):
            self.commit_outcomes.append(
                {"rule_id": rule.rule_id, "accepted": receipt.accepted, "code": receipt.code}
            )
            if receipt.accepted:
                self._export_rule(rule)
            if cb is not None:
                cb(receipt)

        return self.submit(KIND_RULE_COMMIT, payload, after)

    def manage_accounts(self, entries, cb=None) -> str:
        return self.submit(KIND_CONFIG, {"action": "manage_accounts", "entries": entries}, cb)

    def bind_device(self, device_id, vendor, usr_id, cb=None) -> str:
        payload = {"action": "bind_device", "device_id": device_id,
                   "vendor": vendor, "usr_id": usr_id}
        return self.submit(KIND_CONFIG, payload, cb)

    def _export_rule(self, rule: RuleDefinition) -> None:
        # The platform mock only needs the action list to route requests.
        if self.tamock_addr is None:
            return
        self.export_attempts[rule.rule_id] = self.export_attempts.get(rule.rule_id, 0) + 1
        self.send(self.tamock_addr, {
            "type": "export_rule",
            "rule_id": rule.rule_id,
            "title": rule.title,
            "actions": [op for op, _dev, _comb in rule.action_operations],
        })
        self.net.scheduler.schedule(1500, lambda: self._check_export(rule))

    def _check_export(self, rule: RuleDefinition) -> None:
        if rule.rule_id in self.export_acked:
            return
        if self.export_attempts.get(rule.rule_id, 0) < 5:
            self._export_rule(rule)

    def _register_trigger(self, rule, usr_rule_id, mode) -> None:
        if self.exec_agent_addr is None:
            return
        self.send(self.exec_agent_addr, {
            "type": "register_trigger",
            "rule": rule.to_dict(),
            "binding": {
                "usr_rule_id": usr_rule_id,
                "usr_id": self.usr_id,
                "rule_id": rule.rule_id,
                "rule_name": rule.title,
            },
            "mode": mode,
        })

    def handle(self, src, msg):
        if msg.get("type") == "export_ok":
            self.export_acked.add(msg.get("rule_id"))


class ExecutionAgent(AgentBase):
    """Runs trigger cycles against devices and executes authorized actions.

    Holds the vendor tokens.  Every device call mints a fresh (eid,
    log_key) pair first, so the device's log write is bound to this
    attempt before any transaction cites it.  Action commands are only
    honored when they arrive as ledger notifications from f + 1 nodes;
    direct commands are refused unless the ledger is disabled for a
    baseline measurement.
    """

    def __init__(self, addr, net, keypair, node_addrs, f, rng, label="exec",
                 thresholds: Thresholds | None = None, poll_interval_ms=500,
                 record_actions=True, ledger_enabled=True, task_agent_addr=None):
        super().__init__(addr, net, keypair, node_addrs, f)
        self.rng = rng
        self.label = label
        self.thresholds = thresholds or Thresholds()
        self.poll_interval_ms = poll_interval_ms
        self.record_actions = record_actions
        self.ledger_enabled = ledger_enabled
        self.task_agent_addr = task_agent_addr
        self.device_routes: dict[str, tuple[str, str]] = {}  # device -> (gateway, token)
        self.triggers: list[dict] = []
        self.gate = QuorumGate(f + 1)
        self.consumed_marks: set[tuple] = set()
        self.minted: set[tuple[str, str]] = set()
        self._eid_counter = 0
        self._seq: dict[int, int] = {}
        self._corr = 0
        self._pending_rpc: dict[int, object] = {}
        self._cycle_start: dict[tuple, int] = {}
        self.e2e_ms: list[int] = []
        self.counters = {
            "cycles": 0,
            "cycles_aborted": 0,
            "device_unreachable": 0,
            "events_submitted": 0,
            "actions_completed": 0,
            "action_failures": 0,
            "duplicate_notifies": 0,
            "refused_direct": 0,
        }

    def add_device_route(self, device_id: str, gateway_addr: str, token: str) -> None:
        self.device_routes[device_id] = (gateway_addr, token)

    def gen_log_key(self) -> tuple[str, str]:
        """Fresh per-attempt log coordinates: deterministic unique eid plus
        a random log key the device files the checksum under."""
        self._eid_counter += 1
        eid = sha256_hex(f"eid/{self.label}/{self._eid_counter}".encode())[:32]
        log_key = self.rng.randbytes(16).hex()
        self.minted.add((eid, log_key))
        return eid, log_key

    def next_seq(self, rule_id: int) -> int:
        self._seq[rule_id] = self._seq.get(rule_id, 0) + 1
        return self._seq[rule_id]

    def start_polling(self, duration_ms: int) -> None:
        ticks = duration_ms // self.poll_interval_ms
        for k in range(1, ticks + 1):
            self.net.scheduler.schedule(k * self.poll_interval_ms, self._poll_tick)

    def _poll_tick(self) -> None:
        for trig in self.triggers:
            if trig["mode"] == "poll":
                self.run_trigger_cycle(trig)

    def handle(self, src, msg):
        mtype = msg.get("type")
        if mtype == "register_trigger":
            self.triggers.append({
                "rule": parse_rule(msg["rule"]),
                "binding": msg["binding"],
                "mode": msg.get("mode", "poll"),
            })
        elif mtype == "device_push":
            for trig in self.triggers:
                if trig["mode"] != "push":
                    continue
                if any(dev == msg.get("device_id") for _op, dev, _c in trig["rule"].trigger_operations):
                    self.run_trigger_cycle(trig)
        elif mtype == "notify_actions":
            self._on_notify_actions(msg)
        elif mtype == "exec_direct":
            self._on_exec_direct(msg)
        elif mtype == "rpc_result":
            cb = self._pending_rpc.pop(msg.get("corr"), None)
            if cb is not None:
                cb(msg)

    # ------------------------------------------------------------------
    # trigger side

    def run_trigger_cycle(self, trig: dict) -> None:
        self.counters["cycles"] += 1
        scripts = [s for s in split_rule(trig["rule"]) if s.kind == "trigger"]
        ctx = {"trig": trig, "steps": [], "t0": self.net.scheduler.now}
        self._trigger_step(ctx, scripts, 0)

    def _trigger_step(self, ctx, scripts, i) -> None:
        if i == len(scripts):
            self._finish_cycle(ctx)
            return
        script = scripts[i]
        eid, log_key = self.gen_log_key()

        def done(result):
            if not result.get("ok"):
                self.counters["cycles_aborted"] += 1
                if result.get("error") == "DeviceOffline":
                    self.counters["device_unreachable"] += 1
                return
            payload = result["payload"]
            hit = bool(CATALOG[script.op_name].predicate(payload, self.thresholds))
            ctx["steps"].append((script, eid, log_key, payload, hit))
            self._trigger_step(ctx, scripts, i + 1)

        self._rpc(script.device_id, script.api, eid, log_key, done)

    def _finish_cycle(self, ctx) -> None:
        trig = ctx["trig"]
        rule: RuleDefinition = trig["rule"]
        steps = ctx["steps"]
        results = [hit for (_s, _e, _k, _p, hit) in steps]
        if not evaluate_trigger(rule, results, steps[0][3]):
            return
        binding = trig["binding"]
        seqs = [self.next_seq(rule.rule_id) for _ in steps]
        task_ref = seqs[-1]
        self._cycle_start[(rule.rule_id, task_ref)] = ctx["t0"]
        for (script, eid, log_key, payload, _hit), seq in zip(steps, seqs):
            info = {
                "usr_rule_id": binding["usr_rule_id"],
                "usr_id": binding["usr_id"],
                "rule_id": binding["rule_id"],
                "rule_name": binding["rule_name"],
                "step_id": script.step_id,
                "event_seq": seq,
            }
            if not self.ledger_enabled:
                if script.step_id == len(rule.trigger_operations) - 1:
                    self.send(self.task_agent_addr,
                              {"type": "bypass_event", "event_info": info})
                continue
            body = {
                "event_info": info,
                "event_log": {"eid": eid, "log_key": log_key,
                              "log_sum": checksum(payload)},
                "result_status": contracts.RES_OK,
                "task_ref": task_ref,
            }
            self.counters["events_submitted"] += 1
            self.submit(KIND_EVENT, body)

    # ------------------------------------------------------------------
    # action side

    def _on_notify_actions(self, msg) -> None:
        info, actions = msg["event_info"], msg["actions"]
        key = digest_hex({"event_info": info, "actions": actions})
        if not self.gate.offer(key, msg.get("node")):
            return
        mark = (info["rule_id"], info["event_seq"])
        if mark in self.consumed_marks:
            self.counters["duplicate_notifies"] += 1
            return
        self.consumed_marks.add(mark)
        self._exec_actions(info, actions, 0)

    def _on_exec_direct(self, msg) -> None:
        if self.ledger_enabled:
            self.counters["refused_direct"] += 1
            return
        info = msg["event_info"]
        mark = (info["rule_id"], info["event_seq"])
        if mark in self.consumed_marks:
            self.counters["duplicate_notifies"] += 1
            return
        self.consumed_marks.add(mark)
        trig = next((t for t in self.triggers
                     if t["binding"]["rule_id"] == info["rule_id"]), None)
        if trig is None:
            return
        actions = [
            {"step_id": s.step_id, "op_name": s.op_name, "device_id": s.device_id}
            for s in split_rule(trig["rule"]) if s.kind == "action"
        ]
        self._exec_actions(info, actions, 0)

    def _exec_actions(self, info, actions, i) -> None:
        if i == len(actions):
            t0 = self._cycle_start.pop((info["rule_id"], info["event_seq"]), None)
            if t0 is not None:
                self.e2e_ms.append(self.net.scheduler.now - t0)
            return
        action = actions[i]
        eid, log_key = self.gen_log_key()

        def done(result):
            ok = bool(result.get("ok"))
            if ok:
                self.counters["actions_completed"] += 1
            else:
                self.counters["action_failures"] += 1
            if self.record_actions and self.ledger_enabled:
                self._record_action(info, action, eid, log_key, result if ok else None)
            self._exec_actions(info, actions, i + 1)

        self._rpc(action["device_id"], CATALOG[action["op_name"]].api, eid, log_key, done)

    def _record_action(self, info, action, eid, log_key, result) -> None:
        # Failed executions still leave a signed failure record; nothing ran
        # on the device, so there is no log entry to check against.
        ok = result is not None
        body = {
            "event_info": {
                "usr_rule_id": info["usr_rule_id"],
                "usr_id": info["usr_id"],
                "rule_id": info["rule_id"],
                "rule_name": info["rule_name"],
                "step_id": action["step_id"],
                "event_seq": self.next_seq(info["rule_id"]),
            },
            "event_log": {
                "eid": eid,
                "log_key": log_key,
                "log_sum": checksum(result["payload"]) if ok else "",
            },
            "result_status": contracts.RES_OK if ok else contracts.RES_ERR,
            "task_ref": info["event_seq"],
        }
        self.counters["events_submitted"] += 1
        self.submit(KIND_EVENT, body)

    def _rpc(self, device_id, api, eid, log_key, cb) -> None:
        gateway_addr, token = self.device_routes[device_id]
        self._corr += 1
        self._pending_rpc[self._corr] = cb
        self.send(gateway_addr, {
            "type": "rpc_call",
            "token": token,
            "device_id": device_id,
            "api": api,
            "eid": eid,
            "log_key": log_key,
            "corr": self._corr,
        })


class TaskAgent(AgentBase):
    """Bridges committed trigger events to the rule platform and turns the
    platform's action requests into action transactions.  It never inspects
    or enforces anything itself: the ledger contract is the gatekeeper."""

    def __init__(self, addr, net, keypair, node_addrs, f, tamock_addr=None,
                 channel_token="", ledger_enabled=True, exec_agent_addr=None):
        super().__init__(addr, net, keypair, node_addrs, f)
        self.tamock_addr = tamock_addr
        self.channel_token = channel_token
        self.ledger_enabled = ledger_enabled
        self.exec_agent_addr = exec_agent_addr
        self.gate = QuorumGate(f + 1)
        self.seen_events: set[tuple] = set()
        self.pending_acks: dict[int, dict] = {}
        self._req = 0
        self.outcomes: list[dict] = []
        self.counters = {
            "trigger_requests_sent": 0,
            "action_requests_received": 0,
            "channel_rejects": 0,
            "duplicate_notifies": 0,
        }

    def handle(self, src, msg):
        mtype = msg.get("type")
        if mtype == "notify_event":
            self._on_notify_event(msg)
        elif mtype == "bypass_event":
            self._on_bypass_event(msg)
        elif mtype == "action_request":
            self._on_action_request(src, msg)
        elif mtype == "trigger_ack":
            self.pending_acks.pop(msg.get("req_id"), None)

    def _on_notify_event(self, msg) -> None:
        info, cid = msg["event_info"], msg["cid"]
        key = digest_hex({"event_info": info, "cid": cid})
        if not self.gate.offer(key, msg.get("node")):
            return
        mark = (info["rule_id"], info["event_seq"])
        if mark in self.seen_events:
            self.counters["duplicate_notifies"] += 1
            return
        self.seen_events.add(mark)
        self._send_trigger_request(info, cid)

    def _on_bypass_event(self, msg) -> None:
        info = msg["event_info"]
        mark = (info["rule_id"], info["event_seq"])
        if mark in self.seen_events:
            return
        self.seen_events.add(mark)
        self._send_trigger_request(info, "")

    def _send_trigger_request(self, info, cid) -> None:
        if self.tamock_addr is None:
            return
        self._req += 1
        req_id = self._req
        msg = {"type": "trigger_request", "req_id": req_id,
               "event_info": info, "cid": cid}
        self.pending_acks[req_id] = {"msg": msg, "attempts": 1}
        self.counters["trigger_requests_sent"] += 1
        self.send(self.tamock_addr, msg)
        self.net.scheduler.schedule(2000, lambda: self._check_ack(req_id))

    def _check_ack(self, req_id) -> None:
        # Up to 3 attempts total, doubling the wait each time.
        state = self.pending_acks.get(req_id)
        if state is None or state["attempts"] >= 3:
            return
        state["attempts"] += 1
        self.send(self.tamock_addr, state["msg"])
        self.net.scheduler.schedule(2000 * 2 ** (state["attempts"] - 1),
                                    lambda: self._check_ack(req_id))

    def _on_action_request(self, src, msg) -> None:
        self.counters["action_requests_received"] += 1
        if msg.get("channel_token") != self.channel_token:
            self.counters["channel_rejects"] += 1
            return
        info, cid, req_id = msg["event_info"], msg.get("cid", ""), msg.get("req_id")
        if not self.ledger_enabled:
            self.send(self.exec_agent_addr, {"type": "exec_direct", "event_info": info})
            self.outcomes.append({"req_id": req_id, "accepted": True, "code": None})
            self.send(src, {"type": "action_result", "req_id": req_id,
                            "accepted": True, "code": None})
            return

        def done(receipt):
            self.outcomes.append(
                {"req_id": req_id, "accepted": receipt.accepted, "code": receipt.code}
            )
            self.send(src, {"type": "action_result", "req_id": req_id,
                            "accepted": receipt.accepted, "code": receipt.code})

        self.submit(KIND_ACTION, {"event_info": info, "cid": cid}, done)
