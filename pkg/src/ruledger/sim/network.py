"""In-memory message passing between simulated processes.

No sockets are involved: `send` draws a delivery delay from the network's
seeded RNG and schedules the destination's handler.  Messages must be
canonical-serializable dicts, which keeps them both deterministic to copy
and realistic to corrupt byte-wise in fault experiments.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from ..canonical import canonical_bytes
from .scheduler import Scheduler


@dataclass
class NetConfig:
    delay_range: tuple[int, int] = (1, 5)  # inclusive ms bounds
    drop_prob: float = 0.0
    reorder: bool = True  # False enforces per-link FIFO delivery

    def validate(self) -> None:
        lo, hi = self.delay_range
        if not (0 <= lo <= hi):
            raise ValueError(f"bad delay_range: {self.delay_range}")
        if not (0.0 <= self.drop_prob < 1.0):
            raise ValueError(f"bad drop_prob: {self.drop_prob}")


class Process:
    """Anything with an inbox.  Subclasses override on_message."""

    def __init__(self, addr: str, net: "Network"):
        self.addr = addr
        self.net = net
        net.register(addr, self)

    def on_message(self, src: str, msg: dict) -> None:
        raise NotImplementedError

    def send(self, dst: str, msg: dict) -> None:
        self.net.send(self.addr, dst, msg)


class Network:
    def __init__(self, scheduler: Scheduler, config: NetConfig, rng: random.Random):
        config.validate()
        self.scheduler = scheduler
        self.config = config
        self.rng = rng
        self.processes: dict[str, Process] = {}
        self.sent = 0
        self.dropped = 0
        self.delivered = 0
        self._last_delivery: dict[tuple[str, str], int] = {}

    def register(self, addr: str, process: Process) -> None:
        if addr in self.processes:
            raise ValueError(f"duplicate process address: {addr}")
        self.processes[addr] = process

    def send(self, src: str, dst: str, msg: dict) -> None:
        if dst not in self.processes:
            raise KeyError(f"unknown destination: {dst}")
        # Deep-copy through canonical bytes: the receiver can never alias
        # the sender's objects, and non-canonical payloads fail loudly.
        wire = canonical_bytes(msg)
        self.sent += 1
        if self.config.drop_prob > 0 and self.rng.random() < self.config.drop_prob:
            self.dropped += 1
            return
        lo, hi = self.config.delay_range
        delay = self.rng.randint(lo, hi)
        when = self.scheduler.now + delay
        if not self.config.reorder:
            floor = self._last_delivery.get((src, dst), 0)
            if when < floor:
                delay = floor - self.scheduler.now
                when = floor
            self._last_delivery[(src, dst)] = when
        payload = json.loads(wire.decode("utf-8"))
        self.scheduler.schedule(delay, lambda: self._deliver(src, dst, payload))

    def _deliver(self, src: str, dst: str, msg: dict) -> None:
        self.delivered += 1
        self.processes[dst].on_message(src, msg)
