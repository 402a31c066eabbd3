"""Radio-state accounting, energy, control overhead and convergence times."""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass, field

from .engine import SYMBOL_US

STATES = ("tx", "rx", "sleep")


class LedgerError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergyModel:
    i_tx: float = 0.0174
    i_rx: float = 0.0188
    v: float = 3.0
    i_sleep: float = 0.0

    def __post_init__(self):
        if self.i_tx <= 0 or self.i_rx <= 0 or self.v <= 0 or self.i_sleep < 0:
            raise ValueError("currents and voltage must be positive")

    def current(self, mode: str) -> float:
        return {"tx": self.i_tx, "rx": self.i_rx, "sleep": self.i_sleep}[mode]


def ticks_to_seconds(ticks: int | float) -> float:
    return ticks * SYMBOL_US * 1e-6


def energy_joules(ticks: int | float, mode: str, model: EnergyModel) -> float:
    return ticks_to_seconds(ticks) * model.current(mode) * model.v


@dataclass
class FrameRecord:
    time: int
    node: int
    kind: str
    mac_bytes: int
    phy_bytes: int


@dataclass
class NonConverged:
    nodes: list[int]

    def __bool__(self) -> bool:
        return False


class RadioLedger:
    """Single-writer ledger filled by the engine during one run."""

    def __init__(self, nodes=()):
        self.intervals: dict[int, dict[str, list[tuple[int, int]]]] = {}
        self.totals: dict[int, dict[str, int]] = {}
        self._last: dict[int, int] = {}
        self.tx_frames: list[FrameRecord] = []
        self.rx_frames: list[FrameRecord] = []
        self.assoc_tick: dict[int, int] = {}
        self.beacons: dict[int, list[tuple[int, bool, int | None, str | None]]] = defaultdict(list)
        self.solicitations: list[tuple[int, int, int]] = []
        self.trickle_resets: list[tuple[int, int, str, int]] = []
        self.windows: dict[tuple[int, str], tuple[int, int]] = {}
        self.end_tick = 0
        for n in nodes:
            self.add_node(n)

    def add_node(self, node: int) -> None:
        self.intervals[node] = {s: [] for s in STATES}
        self.totals[node] = {s: 0 for s in STATES}
        self._last[node] = 0

    # -- writers -------------------------------------------------------------
    def record_state(self, node: int, state: str, start: int, end: int) -> None:
        if end < start:
            raise LedgerError(f"node {node}: interval ends before it starts ({start}, {end})")
        if start < self._last.get(node, 0):
            raise LedgerError(f"node {node}: overlapping {state} interval at {start}")
        if end == start:
            return
        if node not in self.intervals:
            self.add_node(node)
        self.intervals[node][state].append((start, end))
        self.totals[node][state] += end - start
        self._last[node] = end

    def record_tx(self, node: int, time: int, kind: str, mac_bytes: int, phy_bytes: int) -> None:
        self.tx_frames.append(FrameRecord(time, node, kind, mac_bytes, phy_bytes))

    def record_rx(self, node: int, time: int, kind: str, mac_bytes: int) -> None:
        self.rx_frames.append(FrameRecord(time, node, kind, mac_bytes, mac_bytes))

    def record_association(self, node: int, tick: int) -> None:
        self.assoc_tick.setdefault(node, tick)

    def record_beacon(self, node: int, start: int, has_dio: bool, fire: int | None, origin: str | None) -> None:
        self.beacons[node].append((start, has_dio, fire, origin))

    def record_solicitation(self, coordinator: int, time: int, requester: int) -> None:
        self.solicitations.append((time, coordinator, requester))

    def record_trickle_reset(self, node: int, time: int, cause: str, fire_at: int) -> None:
        self.trickle_resets.append((time, node, cause, fire_at))

    def record_window(self, node: int, name: str, start: int, end: int) -> None:
        self.windows[(node, name)] = (start, end)

    # -- queries -------------------------------------------------------------
    def ticks(self, node: int, state: str, window: tuple[int, int] | None = None) -> int:
        if window is None:
            return self.totals[node][state]
        a, b = window
        total = 0
        spans = self.intervals[node][state]
        i = max(bisect.bisect_right(spans, (a, a)) - 1, 0)
        for s, e in spans[i:]:
            if s >= b:
                break
            lo, hi = max(s, a), min(e, b)
            if hi > lo:
                total += hi - lo
        return total

    def elapsed(self, node: int) -> int:
        return sum(self.totals[node].values())

    def energy(self, node: int, mode: str, model: EnergyModel, window: tuple[int, int] | None = None) -> float:
        return energy_joules(self.ticks(node, mode, window), mode, model)

    @staticmethod
    def _bytes(frames, window) -> dict[int, int]:
        out: dict[int, int] = defaultdict(int)
        for f in frames:
            if window is None or window[0] <= f.time < window[1]:
                out[f.node] += f.mac_bytes
        return out

    def tx_bytes(self, window: tuple[int, int] | None = None) -> dict[int, int]:
        return self._bytes(self.tx_frames, window)

    def rx_bytes(self, window: tuple[int, int] | None = None) -> dict[int, int]:
        return self._bytes(self.rx_frames, window)

    def overhead_bytes(self, window: tuple[int, int] | None = None) -> dict:
        """Control bytes (MAC header + payload) transmitted, per node and kind."""
        per_node: dict[int, dict[str, int]] = defaultdict(lambda: defaultdict(int))
        for f in self.tx_frames:
            if window is not None and not (window[0] <= f.time < window[1]):
                continue
            per_node[f.node][f.kind] += f.mac_bytes
        total = sum(sum(k.values()) for k in per_node.values())
        by_kind: dict[str, int] = defaultdict(int)
        for kinds in per_node.values():
            for k, v in kinds.items():
                by_kind[k] += v
        return {"per_node": {n: dict(k) for n, k in per_node.items()}, "by_kind": dict(by_kind), "total": total}

    def convergence_time(self, nodes, start: int = 0) -> int | NonConverged:
        missing = [n for n in nodes if n not in self.assoc_tick]
        if missing:
            return NonConverged(sorted(missing))
        if not self.assoc_tick:
            return 0
        return max(self.assoc_tick[n] for n in nodes) - start

    # -- derived event statistics -------------------------------------------
    def solicited_dio_delays(self) -> list[int]:
        """Delay from a solicitation-started Trickle fire to the beacon carrying that DIO."""
        out = []
        for node, beacons in self.beacons.items():
            for start, has_dio, fire, origin in beacons:
                if has_dio and origin == "beacon-request":
                    out.append(start - fire)
        return out

    def solicitation_outcomes(self) -> list[bool]:
        """For every delivered beacon-request: did the solicited coordinator's next beacon carry a DIO?"""
        out = []
        for time, coord, _ in self.solicitations:
            beacons = self.beacons.get(coord, [])
            starts = [b[0] for b in beacons]
            i = bisect.bisect_right(starts, time)
            if i < len(beacons):
                out.append(beacons[i][1])
        return out
