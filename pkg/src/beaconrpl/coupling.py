"""Cross-layer shim between the 802.15.4 MAC and RPL.

Proposed scheme: DIOs only travel inside beacons; a joining node that hears
a coordinator's first beacon without a DIO sends a bare beacon-request in
that coordinator's CAP, and the coordinator turns its reception into a
Trickle reset.  With ``Imin = BI - SD`` the reset always fires before the
next beacon.

SBP baseline: every beacon carries a fixed-size blob advertising the
coordinator's rank; RPL is never consulted while scanning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

from .engine import Engine, ScenarioError, TransmissionRecord
from .mac154 import Discovered, MacNode, SuperframeConfig
from .rpl import INFINITE_RANK, Dio, RplNode, TrickleState

log = logging.getLogger(__name__)

PROPOSED = "proposed"
SBP = "sbp"


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = PROPOSED
    sbp_size_bytes: int = 28
    imin_policy: str | int = "auto"

    def __post_init__(self):
        if self.scheme not in (PROPOSED, SBP):
            raise ScenarioError(f"scheme must be 'proposed' or 'sbp', got {self.scheme!r}")
        if self.scheme == SBP and self.sbp_size_bytes < 1:
            raise ScenarioError("sbp_size_bytes must be >= 1")
        if self.imin_policy != "auto" and (not isinstance(self.imin_policy, int) or self.imin_policy < 1):
            raise ScenarioError(f"imin must be 'auto' or a positive tick count, got {self.imin_policy!r}")

    def imin(self, sf: SuperframeConfig) -> int:
        return auto_imin(sf) if self.imin_policy == "auto" else int(self.imin_policy)


def auto_imin(sf: SuperframeConfig) -> int:
    """Smallest-overhead Imin that still guarantees a DIO in the next beacon."""
    if sf.bi == sf.sd:
        raise ScenarioError("BO == SO leaves no inactive period; Imin = BI - SD would be 0")
    return sf.bi - sf.sd


def imin_guarantees_dio(imin: int, sf: SuperframeConfig) -> bool:
    return imin <= sf.bi - sf.sd


@dataclass(frozen=True)
class SbpBlob:
    rank: int
    size_bytes: int


@dataclass
class PendingDio:
    dio: Dio
    ready_since: int
    origin: str | None = None  # reset cause that started the fired interval, if n == 0


def solicitation_decision(entry: Discovered, beacon_payload: Any) -> bool:
    """Solicit iff this is the first beacon from the coordinator and it has no DIO."""
    return entry.beacons == 1 and not isinstance(beacon_payload, Dio)


class Coupling:
    """Per-node shim; also the Trickle timer host for the node's RPL instance."""

    def __init__(self, node_id: int, engine: Engine, sf: SuperframeConfig, scheme: SchemeConfig,
                 rpl: RplNode, ledger=None):
        self.id = node_id
        self.engine = engine
        self.sf = sf
        self.scheme = scheme
        self.rpl = rpl
        self.ledger = ledger
        self.mac: MacNode | None = None
        self.pending: PendingDio | None = None
        self._trickle_event = None
        self._interval_origin: str | None = None
        self._awaiting: set[int] = set()
        self._collect_start: int | None = None
        self.solicitations_sent = 0
        if rpl is not None:
            rpl.host = self

    # -- Trickle host interface ------------------------------------------------
    @property
    def now(self) -> int:
        return self.engine.now

    @property
    def rng(self):
        return self.engine.rng

    def schedule_trickle(self, t: int) -> None:
        self._trickle_event = self.engine.schedule(t, self._trickle_timer)

    def cancel_trickle(self) -> None:
        Engine.cancel(self._trickle_event)
        self._trickle_event = None

    def _trickle_timer(self) -> None:
        self.rpl.on_trickle_timer()

    def on_trickle_reset(self, cause: str, state: TrickleState) -> None:
        self._interval_origin = cause
        self.engine.log(self.id, "trickle-reset", f"{cause} t={state.t}")
        if self.ledger is not None:
            self.ledger.record_trickle_reset(self.id, self.engine.now, cause, state.t)

    def on_trickle_fire(self, dio: Dio, fired: TrickleState) -> None:
        origin = self._interval_origin if fired.n == 0 else None
        self._interval_origin = None
        self.trickle_fire_to_pending(dio, self.engine.now, origin)

    def trickle_fire_to_pending(self, dio: Dio, now: int, origin: str | None = None) -> None:
        # latest DIO wins; nothing goes on air until the next beacon
        self.pending = PendingDio(dio, now, origin)
        self.engine.log(self.id, "dio-pending", f"rank={dio.rank} origin={origin}")

    # -- beacon payload ----------------------------------------------------------
    def beacon_payload_hook(self, capacity: int) -> tuple[Any, int]:
        if self.scheme.scheme == SBP:
            rank = self.rpl.rank if self.rpl.rank != INFINITE_RANK else 0
            return SbpBlob(int(rank), self.scheme.sbp_size_bytes), self.scheme.sbp_size_bytes
        if self.pending is None:
            return None, 0
        if self.pending.dio.size_bytes > capacity:
            # deferred to a later beacon, never fragmented
            return None, 0
        return self.pending.dio, self.pending.dio.size_bytes

    beacon_payload = beacon_payload_hook

    def payload_deferred(self, payload) -> None:
        self.engine.log(self.id, "payload-deferred", type(payload).__name__)

    def on_beacon_emitted(self, tx: TransmissionRecord) -> None:
        payload = tx.frame.payload
        fire = origin = None
        if isinstance(payload, Dio):
            fire, origin = self.pending.ready_since, self.pending.origin
            self.pending = None
        if self.ledger is not None:
            self.ledger.record_beacon(self.id, tx.start, isinstance(payload, Dio), fire, origin)

    # -- node lifecycle ----------------------------------------------------------
    def on_boot_coordinator(self) -> None:
        if self.scheme.scheme == PROPOSED:
            self.rpl.start_trickle()
            self._interval_origin = "start"

    def on_scan_start(self) -> None:
        self._awaiting.clear()
        self._collect_start = None
        if self.mac.phase != "associated":
            self.rpl.clear_parents()
            if self.rpl.role != "root":
                self.rpl.rank = INFINITE_RANK
                self.rpl.preferred_parent = None

    def on_scan_beacon(self, tx: TransmissionRecord, entry: Discovered) -> None:
        payload = tx.frame.payload
        if self.scheme.scheme == SBP:
            if isinstance(payload, SbpBlob):
                entry.metric = payload.rank
            return
        if isinstance(payload, Dio):
            entry.dio_seen = True
            self.rpl.process_dio(payload, tx.sender)
        if not entry.solicited and solicitation_decision(entry, payload):
            entry.solicited = True
            self.solicitations_sent += 1
            self.mac.send_beacon_request(tx.sender, tx.start + self.sf.sd)

    def on_beacon_request(self, tx: TransmissionRecord) -> None:
        if self.scheme.scheme != PROPOSED or self.rpl.role == "leaf":
            return
        solicited = tx.frame.dst == self.id
        if self.ledger is not None and solicited:
            self.ledger.record_solicitation(self.id, self.engine.now, tx.sender)
        self.rpl.reset_trickle("beacon-request")

    def on_scan_end(self, discovered: dict[int, Discovered]) -> None:
        self.scan_sleep_plan(discovered, self.engine.now)

    def scan_sleep_plan(self, discovered: dict[int, Discovered], scan_end: int) -> list[int]:
        """Sleep after the scan, wake for each coordinator whose DIO is missing.

        Returns the coordinators the node will wake for.
        """
        mac = self.mac
        if self.scheme.scheme == SBP:
            ranked = [(e.metric if e.metric is not None else INFINITE_RANK, c)
                      for c, e in discovered.items()]
            best = min(ranked)[1]
            mac.associate(best)
            return []
        self._collect_start = scan_end
        need = sorted(c for c, e in discovered.items() if not e.dio_seen)
        if not need:
            self._select_and_associate()
            return []
        mac._set_phase("awaiting-dio-beacons")
        self._awaiting = set(need)
        for c in need:
            mac.wake_for_beacon(c, self._collected, self._collect_missed)
        return need

    def _collected(self, coordinator: int, tx: TransmissionRecord) -> None:
        payload = tx.frame.payload
        entry = self.mac.discovered[coordinator]
        if isinstance(payload, Dio):
            entry.dio_seen = True
            self.rpl.process_dio(payload, coordinator)
        self._awaiting.discard(coordinator)
        if not self._awaiting:
            if self.ledger is not None and self._collect_start is not None:
                self.ledger.record_window(self.id, "dio-collection", self._collect_start, tx.end)
            self._select_and_associate()

    def _collect_missed(self, coordinator: int) -> None:
        self._awaiting.discard(coordinator)
        if not self._awaiting:
            self._select_and_associate()

    def _select_and_associate(self) -> None:
        mac = self.mac
        candidates = {c for c, e in mac.discovered.items() if e.dio_seen and c in self.rpl.parent_set}
        if not candidates:
            self.engine.log(self.id, "no-dio", "rescan")
            mac.start_scan()
            return
        parent = self.rpl.preferred_parent
        if parent not in candidates:
            parent = min(candidates, key=lambda c: (self.rpl.parent_set[c], c))
        # handshake starts in the CAP after the parent's next beacon
        mac.associate(parent)

    def on_assoc_beacon(self, tx: TransmissionRecord) -> None:
        if self.scheme.scheme == PROPOSED and isinstance(tx.frame.payload, Dio):
            self.rpl.process_dio(tx.frame.payload, tx.sender)

    def on_associated(self, coordinator: int) -> None:
        if self.scheme.scheme == SBP:
            metric = self.mac.discovered[coordinator].metric
            self.rpl.adopt_parent(coordinator, metric if metric is not None else self.rpl.config.min_hop_rank_increase)
        elif self.rpl.preferred_parent != coordinator:
            # only the coordinator's DIOs are audible from now on
            rank = self.rpl.parent_set.get(coordinator)
            if rank is not None:
                self.rpl.adopt_parent(coordinator, rank)

    def on_coordinator_beacon(self, tx: TransmissionRecord) -> None:
        if self.scheme.scheme == PROPOSED and isinstance(tx.frame.payload, Dio):
            self.rpl.process_dio(tx.frame.payload, tx.sender)
