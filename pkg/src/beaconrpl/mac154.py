"""Beacon-enabled IEEE 802.15.4 MAC.

Superframe timing, beacon emission, passive scan, the five-frame
association handshake, a simplified slotted CSMA/CA and a central static
allocator for coordinator active periods.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

from .engine import (BROADCAST, TICKS_PER_BYTE, Channel, Engine, Radio,
                     ScenarioError, Topology, TransmissionRecord)

BASE_SUPERFRAME_TICKS = 960
MAX_MAC_FRAME = 127

BEACON = "beacon"
BEACON_REQUEST = "beacon-request"
ASSOC_REQUEST = "association-request"
ASSOC_REPLY = "association-reply"
DATA_REQUEST = "data-request"
ACK = "ack"
FRAME_KINDS = (BEACON, BEACON_REQUEST, ASSOC_REQUEST, ASSOC_REPLY, DATA_REQUEST, ACK)

# MAC sizes (header + FCS) of the command frames, short PAN id, extended
# source addresses where the standard requires them.
FRAME_HEADER_BYTES = {
    BEACON_REQUEST: 8,
    ASSOC_REQUEST: 21,
    DATA_REQUEST: 18,
    ASSOC_REPLY: 27,
    ACK: 5,
}

BACKOFF_UNIT = 20      # aUnitBackoffPeriod, symbols
CCA_TICKS = 8
TURNAROUND = 12        # aTurnaroundTime
ACK_WAIT = 54          # macAckWaitDuration
MIN_BE = 3
MAX_BE = 5
MAX_CSMA_BACKOFFS = 4


class FrameTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SuperframeConfig:
    bo: int
    so: int
    base_superframe: int = BASE_SUPERFRAME_TICKS

    def __post_init__(self):
        if not (0 <= self.so <= 14 and 0 <= self.bo <= 14):
            raise ScenarioError("BO and SO must lie in 0..14")
        if self.so > self.bo:
            raise ScenarioError(f"SO ({self.so}) must not exceed BO ({self.bo})")

    @property
    def bi(self) -> int:
        return self.base_superframe << self.bo

    @property
    def sd(self) -> int:
        return self.base_superframe << self.so

    @property
    def duty_bound(self) -> Fraction:
        return Fraction(1, 1 << (self.bo - self.so))

    @property
    def slots(self) -> int:
        return 1 << (self.bo - self.so)


def superframe_from(bo: int, so: int, base_superframe: int = BASE_SUPERFRAME_TICKS) -> SuperframeConfig:
    return SuperframeConfig(bo, so, base_superframe)


@dataclass(frozen=True)
class Frame:
    kind: str
    src: int
    dst: int
    header_bytes: int
    payload_bytes: int = 0
    payload: Any = None

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.mac_bytes > MAX_MAC_FRAME:
            raise FrameTooLarge(f"{self.kind} frame of {self.mac_bytes} bytes exceeds {MAX_MAC_FRAME}")

    @property
    def mac_bytes(self) -> int:
        return self.header_bytes + self.payload_bytes

    def phy_ticks(self, phy_overhead_bytes: int) -> int:
        return (phy_overhead_bytes + self.mac_bytes) * TICKS_PER_BYTE

    def describe(self) -> str:
        dst = "bcast" if self.dst == BROADCAST else str(self.dst)
        extra = ""
        if self.payload is not None:
            extra = f" payload={type(self.payload).__name__}"
        return f"{self.kind} {self.src}->{dst} {self.mac_bytes}B{extra}"


@dataclass
class MacConfig:
    empty_beacon_bytes: int = 15
    phy_overhead_bytes: int = 6
    assoc_retry_limit: int = 3
    wake_guard: int = 4
    scan_duration: int | None = None  # None: one beacon interval

    def beacon_ticks(self, payload_bytes: int = 0) -> int:
        return (self.phy_overhead_bytes + self.empty_beacon_bytes + payload_bytes) * TICKS_PER_BYTE


class SlotAllocator:
    """Central static allocation of coordinator active periods.

    A new coordinator gets the lowest SD-aligned offset not used by any
    coordinator within two hops of it in the current tree.  When that leaves
    no slot, offsets are reused as long as they differ from the parent's and
    from every coordinator in direct radio range.
    """

    def __init__(self, sf: SuperframeConfig, topology: Topology | None = None):
        self.sf = sf
        self.topology = topology
        self.slot_of: dict[int, int] = {}
        self.parent_of: dict[int, int | None] = {}
        self.fallbacks = 0

    def _tree_neighbors(self, node: int) -> set[int]:
        adj = {node}
        parent = self.parent_of.get(node)
        if parent is not None:
            adj.add(parent)
        adj.update(m for m, p in self.parent_of.items() if p == node)
        return adj

    def within_two_hops(self, node: int) -> set[int]:
        one = self._tree_neighbors(node)
        two = set(one)
        for m in one:
            two |= self._tree_neighbors(m)
        two.discard(node)
        return two

    def allocate(self, node: int, parent: int | None = None) -> int:
        if node in self.slot_of:
            return self.slot_of[node] * self.sf.sd
        self.parent_of[node] = parent
        if parent is None:
            slot = 0
        else:
            used = {self.slot_of[m] for m in self.within_two_hops(node) if m in self.slot_of}
            slot = next((s for s in range(self.sf.slots) if s not in used), None)
            if slot is None:
                used = {self.slot_of[parent]}
                if self.topology is not None:
                    used |= {self.slot_of[m] for m in self.slot_of
                             if m != node and self.topology.in_range(m, node)}
                slot = next((s for s in range(self.sf.slots) if s not in used), None)
                if slot is None:
                    del self.parent_of[node]
                    raise ScenarioError(
                        f"no free superframe slot for coordinator {node} "
                        f"({self.sf.slots} slots at BO={self.sf.bo}, SO={self.sf.so})")
                self.fallbacks += 1
        self.slot_of[node] = slot
        return slot * self.sf.sd


@dataclass
class Discovered:
    next_beacon: int
    dio_seen: bool = False
    solicited: bool = False
    beacons: int = 0
    metric: Any = None


class MacNode:
    """802.15.4 state machine of one node.

    ``upper`` is the cross-layer shim; it is consulted for beacon payloads and
    told about every beacon heard and every phase transition.
    """

    def __init__(self, node_id: int, role: str, engine: Engine, channel: Channel, radio: Radio,
                 sf: SuperframeConfig, config: MacConfig, allocator: SlotAllocator,
                 ledger=None, upper=None):
        self.id = node_id
        self.role = role
        self.engine = engine
        self.channel = channel
        self.radio = radio
        self.sf = sf
        self.config = config
        self.allocator = allocator
        self.ledger = ledger
        self.upper = upper
        self.phase = "booting"
        self.coordinator: int | None = None
        self.coord_offset: int | None = None
        self.offset: int | None = None
        self.discovered: dict[int, Discovered] = {}
        self.cap_end = -1
        self.scan_started = 0
        self._scan_timer = None
        self._wakes: dict[int, tuple] = {}
        self._assoc: dict[str, Any] = {}
        self._pending_assoc: set[int] = set()
        self.beacons_sent = 0

    # -- helpers ------------------------------------------------------------
    @property
    def is_coordinator(self) -> bool:
        return self.offset is not None

    @property
    def scan_duration(self) -> int:
        return self.config.scan_duration or self.sf.bi

    def _set_phase(self, phase: str) -> None:
        if phase != self.phase:
            self.phase = phase
            self.engine.log(self.id, "phase", phase)

    def _next_occurrence(self, anchor: int, not_before: int) -> int:
        bi = self.sf.bi
        if anchor >= not_before:
            return anchor
        return anchor + -(-(not_before - anchor) // bi) * bi

    # -- boot / beacons -------------------------------------------------------
    def boot(self) -> None:
        self.engine.log(self.id, "boot", self.role)
        if self.role == "pan":
            self.offset = self.allocator.allocate(self.id, None)
            self._set_phase("associated")
            if self.ledger is not None:
                self.ledger.record_association(self.id, self.engine.now)
            if self.upper is not None:
                self.upper.on_boot_coordinator()
            self.engine.schedule(self._next_occurrence(self.offset, self.engine.now), self._beacon_due)
        else:
            self.start_scan()

    def _beacon_due(self) -> None:
        # go to the back of this tick so a DIO fired at the same instant makes it in
        self.engine.schedule(self.engine.now, self.emit_beacon)

    def emit_beacon(self) -> Frame:
        now = self.engine.now
        capacity = MAX_MAC_FRAME - self.config.empty_beacon_bytes
        payload, size = (None, 0)
        if self.upper is not None:
            payload, size = self.upper.beacon_payload(capacity)
        if size > capacity:
            if self.upper is not None:
                self.upper.payload_deferred(payload)
            payload, size = None, 0
        frame = Frame(BEACON, self.id, BROADCAST, self.config.empty_beacon_bytes, size, payload)
        self.radio.hold("own-cap")
        self.cap_end = now + self.sf.sd
        self.engine.schedule(self.cap_end, self.radio.release, "own-cap")
        tx = self.channel.transmit(self.id, frame, frame.phy_ticks(self.config.phy_overhead_bytes))
        self.beacons_sent += 1
        if self.upper is not None:
            self.upper.on_beacon_emitted(tx)
        self.engine.schedule(now + self.sf.bi, self._beacon_due)
        return frame

    # -- scanning -------------------------------------------------------------
    def start_scan(self) -> None:
        self._cancel_wakes()
        self._assoc.clear()
        self.discovered = {}
        self.coordinator = None
        self._set_phase("scanning")
        self.scan_started = self.engine.now
        self.radio.release_all()
        self.radio.hold("scan")
        if self.upper is not None:
            self.upper.on_scan_start()
        self._scan_timer = self.engine.after(self.scan_duration, self._scan_end)

    def _scan_end(self) -> None:
        self.radio.release("scan")
        self.engine.log(self.id, "scan-end", f"found={sorted(self.discovered)}")
        if not self.discovered:
            self._set_phase("booting")
            self.engine.after(self.engine.rng.randrange(self.sf.bi), self.start_scan)
            return
        if self.upper is not None:
            self.upper.on_scan_end(dict(self.discovered))

    def passive_scan_report(self) -> dict[int, Discovered]:
        return dict(self.discovered)

    # -- wake scheduling ------------------------------------------------------
    def next_beacon_of(self, coordinator: int, not_before: int | None = None) -> int:
        if not_before is None:
            not_before = self.engine.now
        return self._next_occurrence(self.discovered[coordinator].next_beacon, not_before)

    def wake_for_beacon(self, coordinator: int, on_beacon: Callable, on_miss: Callable) -> int:
        start = self.next_beacon_of(coordinator)
        reason = f"wake:{coordinator}"
        hold = self.engine.schedule(max(start - self.config.wake_guard, self.engine.now), self.radio.hold, reason)
        limit = start + self.config.beacon_ticks(MAX_MAC_FRAME - self.config.empty_beacon_bytes) + 1
        timeout = self.engine.schedule(limit, self._wake_timeout, coordinator)
        self._wakes[coordinator] = (start, hold, timeout, on_beacon, on_miss)
        return start

    def _wake_timeout(self, coordinator: int) -> None:
        entry = self._wakes.pop(coordinator, None)
        if entry is None:
            return
        self.radio.release(f"wake:{coordinator}")
        self.engine.log(self.id, "wake-miss", str(coordinator))
        entry[4](coordinator)

    def _cancel_wakes(self) -> None:
        for c, (_, hold, timeout, _, _) in self._wakes.items():
            Engine.cancel(hold)
            Engine.cancel(timeout)
            self.radio.release(f"wake:{c}")
        self._wakes.clear()

    # -- reception ------------------------------------------------------------
    def on_receive(self, tx: TransmissionRecord) -> None:
        frame: Frame = tx.frame
        if frame.kind == BEACON:
            self._on_beacon(tx)
        elif frame.kind == BEACON_REQUEST:
            if self.upper is not None and self.is_coordinator:
                self.upper.on_beacon_request(tx)
        elif frame.dst == self.id:
            if frame.kind == ACK:
                self._on_ack(tx)
            elif frame.kind == ASSOC_REQUEST:
                self._pending_assoc.add(frame.src)
                self._send_ack(frame.src)
            elif frame.kind == DATA_REQUEST:
                self._send_ack(frame.src, then=self._reply_if_pending, arg=frame.src)
            elif frame.kind == ASSOC_REPLY:
                self._on_assoc_reply(tx)

    def _on_beacon(self, tx: TransmissionRecord) -> None:
        c = tx.sender
        if self.phase == "associated":
            if c == self.coordinator and self.upper is not None:
                self.upper.on_coordinator_beacon(tx)
            return
        entry = self.discovered.get(c)
        if self.phase == "scanning":
            if entry is None:
                entry = self.discovered[c] = Discovered(next_beacon=tx.start + self.sf.bi)
            entry.next_beacon = tx.start + self.sf.bi
            entry.beacons += 1
            if self.upper is not None:
                self.upper.on_scan_beacon(tx, entry)
            return
        if entry is not None:
            entry.next_beacon = tx.start + self.sf.bi
        wake = self._wakes.pop(c, None)
        if wake is not None:
            Engine.cancel(wake[2])
            self.radio.release(f"wake:{c}")
            wake[3](c, tx)

    # -- CSMA/CA --------------------------------------------------------------
    def csma_transmit(self, frame: Frame, cap_end: int, on_result: Callable[[bool, Any], None]) -> None:
        """Simplified slotted CSMA/CA: one CCA per backoff, BE from 3 to 5."""
        rng = self.engine.rng
        duration = frame.phy_ticks(self.config.phy_overhead_bytes)
        st = {"nb": 0, "be": MIN_BE}

        def attempt():
            delay = rng.randrange(1 << st["be"]) * BACKOFF_UNIT
            self.engine.after(delay + CCA_TICKS, cca)

        def cca():
            now = self.engine.now
            if self.radio.transmitting or self.channel.busy(self.id, now - CCA_TICKS, now):
                st["nb"] += 1
                st["be"] = min(st["be"] + 1, MAX_BE)
                if st["nb"] > MAX_CSMA_BACKOFFS:
                    self.engine.log(self.id, "csma-fail", frame.kind)
                    on_result(False, "channel-access-failure")
                else:
                    attempt()
                return
            start = now + TURNAROUND
            if start + duration > cap_end:
                on_result(False, "cap-end")
                return
            self.engine.schedule(start, send)

        def send():
            if self.radio.transmitting:
                on_result(False, "busy")
                return
            self.channel.transmit(self.id, frame, duration, done=lambda rec: on_result(True, rec))

        attempt()

    def send_beacon_request(self, coordinator: int, cap_end: int, on_result=None) -> None:
        frame = Frame(BEACON_REQUEST, self.id, coordinator, FRAME_HEADER_BYTES[BEACON_REQUEST])
        self.csma_transmit(frame, cap_end, on_result or (lambda ok, info: None))

    def _send_ack(self, dst: int, then: Callable | None = None, arg=None) -> None:
        def send():
            if self.radio.transmitting:
                # half duplex: the ack is lost but the exchange carries on
                if then is not None:
                    then(arg)
                return
            frame = Frame(ACK, self.id, dst, FRAME_HEADER_BYTES[ACK])
            done = (lambda rec: then(arg)) if then is not None else None
            self.channel.transmit(self.id, frame, frame.phy_ticks(self.config.phy_overhead_bytes), done=done)
        self.engine.after(TURNAROUND, send)

    # -- association: coordinator side ------------------------------------
    def _reply_if_pending(self, child: int) -> None:
        if child not in self._pending_assoc:
            return
        frame = Frame(ASSOC_REPLY, self.id, child, FRAME_HEADER_BYTES[ASSOC_REPLY])

        def result(ok, info):
            if ok:
                self._pending_assoc.discard(child)
        self.csma_transmit(frame, self.cap_end, result)

    # -- association: device side -----------------------------------------
    def associate(self, coordinator: int, in_cap_until: int | None = None) -> None:
        """Run the handshake with ``coordinator``.

        With ``in_cap_until`` the coordinator's CAP is already under way and
        the exchange starts immediately; otherwise the node wakes for the
        coordinator's next beacon.
        """
        self._cancel_wakes()
        if self._assoc.get("target") != coordinator:
            self._assoc = {"target": coordinator, "retries": 0}
        self._set_phase("associating")
        if in_cap_until is not None:
            self.radio.hold("assoc")
            self._handshake(in_cap_until)
        else:
            self.wake_for_beacon(coordinator, self._assoc_beacon, self._assoc_failed)

    def _assoc_beacon(self, coordinator: int, tx: TransmissionRecord) -> None:
        if self.upper is not None:
            self.upper.on_assoc_beacon(tx)
        self.radio.hold("assoc")
        self._handshake(tx.start + self.sf.sd)

    def _handshake(self, cap_end: int) -> None:
        a = self._assoc
        a["cap_end"] = cap_end
        a["step"] = ASSOC_REQUEST
        self.engine.log(self.id, "assoc-start", str(a["target"]))
        frame = Frame(ASSOC_REQUEST, self.id, a["target"], FRAME_HEADER_BYTES[ASSOC_REQUEST])
        self.csma_transmit(frame, cap_end, self._sent_expect_ack)

    def _sent_expect_ack(self, ok: bool, info) -> None:
        if not ok:
            self._assoc_failed(info)
            return
        a = self._assoc
        a["awaiting_ack"] = True
        a["ack_timer"] = self.engine.after(ACK_WAIT, self._assoc_failed, "no-ack")

    def _on_ack(self, tx: TransmissionRecord) -> None:
        a = self._assoc
        if not a.get("awaiting_ack") or tx.sender != a.get("target"):
            return
        a["awaiting_ack"] = False
        Engine.cancel(a.pop("ack_timer", None))
        if a["step"] == ASSOC_REQUEST:
            a["step"] = DATA_REQUEST
            frame = Frame(DATA_REQUEST, self.id, a["target"], FRAME_HEADER_BYTES[DATA_REQUEST])
            self.csma_transmit(frame, a["cap_end"], self._sent_expect_ack)
        elif a["step"] == DATA_REQUEST:
            a["step"] = ASSOC_REPLY
            a["reply_timer"] = self.engine.schedule(max(a["cap_end"], self.engine.now), self._assoc_failed, "no-reply")

    def _on_assoc_reply(self, tx: TransmissionRecord) -> None:
        a = self._assoc
        if a.get("step") != ASSOC_REPLY or tx.sender != a.get("target"):
            return
        Engine.cancel(a.pop("reply_timer", None))
        a["step"] = "final-ack"
        self._send_ack(tx.sender, then=self._associated, arg=tx.sender)

    def _assoc_failed(self, reason=None) -> None:
        a = self._assoc
        if not a or self.phase != "associating":
            return
        for key in ("ack_timer", "reply_timer"):
            Engine.cancel(a.pop(key, None))
        a["awaiting_ack"] = False
        a["step"] = None
        self.radio.release("assoc")
        a["retries"] += 1
        self.engine.log(self.id, "assoc-fail", f"{reason} retry={a['retries']}")
        if a["retries"] > self.config.assoc_retry_limit:
            self._assoc.clear()
            self.start_scan()
        else:
            self.wake_for_beacon(a["target"], self._assoc_beacon, self._assoc_failed)

    def _associated(self, coordinator: int) -> None:
        if self.phase != "associating":
            return
        self.radio.release("assoc")
        self._assoc.clear()
        self.coordinator = coordinator
        self.coord_offset = self.discovered[coordinator].next_beacon % self.sf.bi
        self._set_phase("associated")
        now = self.engine.now
        if self.ledger is not None:
            self.ledger.record_association(self.id, now)
        if self.upper is not None:
            self.upper.on_associated(coordinator)
        if self.role == "ffd":
            self.offset = self.allocator.allocate(self.id, coordinator)
            self.engine.log(self.id, "slot", str(self.offset))
            self.engine.schedule(self._next_occurrence(self.offset, now + 1), self._beacon_due)
            self._schedule_parent_cap(now)

    def _schedule_parent_cap(self, not_before: int) -> None:
        start = self._next_occurrence(self.coord_offset, not_before + self.config.wake_guard)
        self.engine.schedule(start - self.config.wake_guard, self._parent_cap, start)

    def _parent_cap(self, beacon_start: int) -> None:
        self.radio.hold("parent-cap")
        self.engine.schedule(beacon_start + self.sf.sd, self.radio.release, "parent-cap")
        self.engine.schedule(beacon_start + self.sf.bi - self.config.wake_guard, self._parent_cap,
                             beacon_start + self.sf.bi)
