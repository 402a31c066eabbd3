"""Discrete-event kernel, unit-disk channel and collision bookkeeping.

Time is an integer count of 802.15.4 symbol periods (16 us at 250 kb/s).
A run is a pure function of its configuration and seed: every stochastic
draw goes through ``Engine.rng`` in event order.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass
from typing import Any, Callable, Iterable

SYMBOL_US = 16
TICKS_PER_SECOND = 1_000_000 // SYMBOL_US  # 62500
TICKS_PER_BYTE = 2  # 8 bits at 250 kb/s = 32 us

BROADCAST = -1


class SimulationError(RuntimeError):
    pass


class PastEventError(SimulationError):
    pass


class ScenarioError(ValueError):
    """Raised for invalid scenarios and configuration."""


@dataclass(frozen=True)
class NodeSpec:
    id: int
    x: float
    y: float
    role: str  # "pan" | "ffd" | "rfd"
    boot: int = 0


ROLES = ("pan", "ffd", "rfd")


class Topology:
    """Node placement plus a closed-disk connectivity rule."""

    def __init__(self, nodes: Iterable[NodeSpec], radio_range: float):
        self.nodes = list(nodes)
        self.radio_range = float(radio_range)
        if self.radio_range <= 0:
            raise ScenarioError("radio_range must be > 0")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate node ids in topology")
        for n in self.nodes:
            if n.role not in ROLES:
                raise ScenarioError(f"node {n.id}: unknown role {n.role!r}")
        pans = [n for n in self.nodes if n.role == "pan"]
        if len(pans) != 1:
            raise ScenarioError(f"topology needs exactly one PAN coordinator, got {len(pans)}")
        self.by_id = {n.id: n for n in self.nodes}
        self.pan_id = pans[0].id
        r = self.radio_range
        self._neighbors = {
            a.id: tuple(b.id for b in self.nodes if b.id != a.id and math.hypot(a.x - b.x, a.y - b.y) <= r)
            for a in self.nodes
        }
        self._neighbor_sets = {a: frozenset(ns) for a, ns in self._neighbors.items()}

    def distance(self, a: int, b: int) -> float:
        try:
            na, nb = self.by_id[a], self.by_id[b]
        except KeyError as exc:
            raise ScenarioError(f"unknown node id {exc.args[0]}") from None
        return math.hypot(na.x - nb.x, na.y - nb.y)

    def in_range(self, a: int, b: int) -> bool:
        return self.distance(a, b) <= self.radio_range

    def neighbors(self, a: int) -> tuple[int, ...]:
        return self._neighbors[a]

    def neighbor_set(self, a: int) -> frozenset[int]:
        return self._neighbor_sets[a]


@dataclass
class TransmissionRecord:
    sender: int
    start: int
    end: int
    frame: Any

    def overlaps(self, other: "TransmissionRecord") -> bool:
        return self.start < other.end and other.start < self.end


DELIVERED = "delivered"
COLLIDED = "collided"
MISSED_ASLEEP = "missed-asleep"


class _Entry:
    __slots__ = ("time", "seq", "callback", "args", "alive")

    def __init__(self, time: int, seq: int, callback: Callable, args: tuple):
        self.time = time
        self.seq = seq
        self.callback = callback
        self.args = args
        self.alive = True


class Engine:
    def __init__(self, seed: int = 0, trace: bool = False):
        self.now = 0
        self.rng = random.Random(seed)
        self._queue: list[tuple[int, int, _Entry]] = []
        self._seq = 0
        self.executed = 0
        self.trace_enabled = trace
        self.trace: list[str] = []

    def schedule(self, time: int, callback: Callable, *args) -> _Entry:
        if time < self.now:
            raise PastEventError(f"past event: {time} < now={self.now}")
        entry = _Entry(int(time), self._seq, callback, args)
        self._seq += 1
        heapq.heappush(self._queue, (entry.time, entry.seq, entry))
        return entry

    def after(self, delay: int, callback: Callable, *args) -> _Entry:
        return self.schedule(self.now + delay, callback, *args)

    @staticmethod
    def cancel(entry: _Entry | None) -> None:
        if entry is not None:
            entry.alive = False

    def log(self, node: int | str, kind: str, detail: str = "") -> None:
        if self.trace_enabled:
            self.trace.append(f"{self.now}\t{node}\t{kind}\t{detail}")

    def step(self) -> bool:
        while self._queue:
            entry = heapq.heappop(self._queue)[2]
            if not entry.alive:
                continue
            if entry.time < self.now:
                raise SimulationError("event queue went backwards")
            self.now = entry.time
            self.executed += 1
            entry.callback(*entry.args)
            return True
        return False

    def run(self, until: int | None = None, stop: Callable[[], bool] | None = None) -> None:
        while self._queue:
            head = self._queue[0][2]
            if not head.alive:
                heapq.heappop(self._queue)
                continue
            if until is not None and head.time > until:
                self.now = until
                return
            self.step()
            if stop is not None and stop():
                return
        if until is not None:
            self.now = max(self.now, until)


class Radio:
    """Per-node transceiver state derived from listen holds and transmissions."""

    __slots__ = ("node", "engine", "ledger", "state", "since", "holds", "transmitting")

    def __init__(self, node: int, engine: Engine, ledger=None):
        self.node = node
        self.engine = engine
        self.ledger = ledger
        self.state = "sleep"
        self.since = engine.now
        self.holds: set[str] = set()
        self.transmitting = False

    def _update(self) -> None:
        new = "tx" if self.transmitting else ("rx" if self.holds else "sleep")
        if new != self.state:
            now = self.engine.now
            if self.ledger is not None:
                self.ledger.record_state(self.node, self.state, self.since, now)
            self.state = new
            self.since = now

    def hold(self, reason: str) -> None:
        self.holds.add(reason)
        self._update()

    def release(self, reason: str) -> None:
        self.holds.discard(reason)
        self._update()

    def release_all(self) -> None:
        self.holds.clear()
        self._update()

    def set_transmitting(self, on: bool) -> None:
        self.transmitting = on
        self._update()

    def listening_since(self, t: int) -> bool:
        return self.state == "rx" and self.since <= t

    def flush(self) -> None:
        if self.ledger is not None:
            self.ledger.record_state(self.node, self.state, self.since, self.engine.now)
        self.since = self.engine.now


class Channel:
    """Unit-disk broadcast medium. Any overlap at a receiver destroys both frames."""

    # transmissions older than this are pruned; must exceed the longest PHY frame
    HORIZON = 1024

    def __init__(self, topology: Topology, engine: Engine, radios: dict[int, Radio],
                 on_deliver: Callable[[int, TransmissionRecord], None] | None = None,
                 on_transmit: Callable[[TransmissionRecord], None] | None = None):
        self.topology = topology
        self.engine = engine
        self.radios = radios
        self.on_deliver = on_deliver
        self.on_transmit = on_transmit
        self.recent: list[TransmissionRecord] = []

    def in_range(self, a: int, b: int) -> bool:
        return self.topology.in_range(a, b)

    def transmit(self, sender: int, frame, duration: int,
                 done: Callable[[TransmissionRecord], None] | None = None) -> TransmissionRecord:
        if sender not in self.topology.by_id:
            raise ScenarioError(f"unknown sender {sender}")
        now = self.engine.now
        tx = TransmissionRecord(sender, now, now + duration, frame)
        self._prune(now)
        self.recent.append(tx)
        radio = self.radios[sender]
        radio.set_transmitting(True)
        if self.on_transmit is not None:
            self.on_transmit(tx)
        if self.engine.trace_enabled:
            self.engine.log(sender, "tx", f"{frame.describe()} dur={duration}")
        self.engine.schedule(tx.end, self._finish, tx, done)
        return tx

    def _finish(self, tx: TransmissionRecord, done) -> None:
        self.radios[tx.sender].set_transmitting(False)
        if self.engine.trace_enabled:
            delivered = []
            for receiver, outcome in self.propagate(tx):
                if outcome == DELIVERED:
                    delivered.append(receiver)
                else:
                    self.engine.log(receiver, outcome, tx.frame.describe())
        else:
            delivered = self._delivered(tx)
        if self.on_deliver is not None:
            for receiver in delivered:
                self.on_deliver(receiver, tx)
        if done is not None:
            done(tx)

    def _prune(self, now: int) -> None:
        if len(self.recent) > 64:
            cutoff = now - self.HORIZON
            self.recent = [t for t in self.recent if t.end >= cutoff]

    def propagate(self, tx: TransmissionRecord) -> list[tuple[int, str]]:
        """Outcome for every in-range node other than the sender."""
        rivals = [o.sender for o in self.recent
                  if o.sender != tx.sender and o.start < tx.end and tx.start < o.end]
        out = []
        radios = self.radios
        for r in self.topology.neighbors(tx.sender):
            if rivals and any(s != r and s in self.topology.neighbor_set(r) for s in rivals):
                out.append((r, COLLIDED))
            elif not radios[r].listening_since(tx.start):
                out.append((r, MISSED_ASLEEP))
            else:
                out.append((r, DELIVERED))
        return out

    def _delivered(self, tx: TransmissionRecord) -> list[int]:
        # same outcome as propagate, restricted to receivers that get the frame
        rivals = None
        out = []
        radios, start = self.radios, tx.start
        for r in self.topology.neighbors(tx.sender):
            radio = radios[r]
            if radio.state != "rx" or radio.since > start:
                continue
            if rivals is None:
                rivals = [o.sender for o in self.recent
                          if o.sender != tx.sender and o.start < tx.end and tx.start < o.end]
            if rivals and any(s != r and s in self.topology.neighbor_set(r) for s in rivals):
                continue
            out.append(r)
        return out

    def busy(self, node: int, start: int, end: int) -> bool:
        """Clear-channel assessment over [start, end) at ``node``."""
        heard = self.topology.neighbor_set(node)
        for t in self.recent:
            if t.sender != node and t.start < end and t.end > start and t.sender in heard:
                return True
        return False
