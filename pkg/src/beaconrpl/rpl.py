"""Minimal upward-route RPL: Trickle timer, DIO/DIS handling, hop-count rank."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

INFINITE_RANK = math.inf
RESET_CAUSES = ("dis", "beacon-request", "inconsistency")


@dataclass(frozen=True)
class TrickleState:
    imin: int
    imax: int
    k: int
    n: int = 0
    interval_start: int = 0
    t: int = 0
    c: int = 0

    @property
    def interval(self) -> int:
        return self.imin << self.n

    @property
    def interval_end(self) -> int:
        return self.interval_start + self.interval


def _draw_fire(rng: random.Random, start: int, interval: int) -> int:
    # integer draw from [start + I/2, start + I)
    lo = start + interval // 2
    hi = start + interval
    return rng.randrange(lo, hi) if hi > lo else lo


def trickle_start(state: TrickleState, now: int, rng: random.Random) -> TrickleState:
    return replace(state, n=0, interval_start=now, c=0, t=_draw_fire(rng, now, state.imin))


def trickle_on_expire(state: TrickleState, rng: random.Random) -> tuple[bool, TrickleState]:
    """Decide on transmission at ``t`` and roll over to the next (doubled) interval."""
    emit = state.c < state.k
    n = min(state.n + 1, state.imax)
    start = state.interval_end
    interval = state.imin << n
    return emit, replace(state, n=n, interval_start=start, c=0, t=_draw_fire(rng, start, interval))


def trickle_reset(state: TrickleState, now: int, rng: random.Random) -> TrickleState:
    return trickle_start(state, now, rng)


@dataclass(frozen=True)
class Dio:
    dodag_id: int
    rank: int
    version: int = 0
    size_bytes: int = 84

    def __post_init__(self):
        if self.size_bytes < 1:
            raise ValueError("DIO size must be >= 1 byte")


@dataclass
class RplConfig:
    imin: int
    imax: int = 8
    k: int = 10
    min_hop_rank_increase: int = 256
    dio_size_bytes: int = 84


class RplNode:
    """RPL state of one node. Timer scheduling is delegated to ``host``.

    ``host`` must provide ``rng``, ``now``, ``schedule_trickle(t)``,
    ``cancel_trickle()`` and ``on_trickle_fire(dio, state)``; it may also
    provide ``on_trickle_reset(cause)``.
    """

    def __init__(self, node_id: int, role: str, config: RplConfig, dodag_id: int, host=None):
        if role not in ("root", "router", "leaf"):
            raise ValueError(f"bad RPL role {role!r}")
        self.id = node_id
        self.role = role
        self.config = config
        self.dodag_id = dodag_id
        self.version = 0
        self.host = host
        self.parent_set: dict[int, int] = {}
        self.preferred_parent: int | None = None
        self.rank = config.min_hop_rank_increase if role == "root" else INFINITE_RANK
        self.trickle: TrickleState | None = None
        self.resets = {cause: 0 for cause in RESET_CAUSES}
        self.dios_emitted = 0

    # -- Trickle -----------------------------------------------------------
    def _fresh_trickle(self) -> TrickleState:
        c = self.config
        return TrickleState(imin=c.imin, imax=c.imax, k=c.k)

    def start_trickle(self) -> None:
        if self.role == "leaf":
            return
        self.trickle = trickle_start(self.trickle or self._fresh_trickle(), self.host.now, self.host.rng)
        self.host.schedule_trickle(self.trickle.t)

    def reset_trickle(self, cause: str) -> None:
        if cause not in RESET_CAUSES:
            raise ValueError(f"unknown reset cause {cause!r}")
        if self.role == "leaf":
            return
        self.resets[cause] += 1
        self.trickle = trickle_reset(self.trickle or self._fresh_trickle(), self.host.now, self.host.rng)
        self.host.cancel_trickle()
        self.host.schedule_trickle(self.trickle.t)
        hook = getattr(self.host, "on_trickle_reset", None)
        if hook is not None:
            hook(cause, self.trickle)

    def on_trickle_timer(self) -> None:
        fired = self.trickle
        emit, self.trickle = trickle_on_expire(fired, self.host.rng)
        if emit and self.rank != INFINITE_RANK:
            self.dios_emitted += 1
            self.host.on_trickle_fire(self.current_dio(), fired)
        self.host.schedule_trickle(self.trickle.t)

    def current_dio(self) -> Dio:
        return Dio(self.dodag_id, int(self.rank), self.version, self.config.dio_size_bytes)

    # -- messages ----------------------------------------------------------
    def clear_parents(self) -> None:
        self.parent_set.clear()

    def process_dio(self, dio: Dio, sender: int) -> int | None:
        """Update the parent set from a DIO and return the preferred parent."""
        if self.role == "root":
            return None
        consistent = (
            dio.version == self.version
            and self.parent_set.get(sender) == dio.rank
        )
        if self.rank != INFINITE_RANK and dio.rank >= self.rank and sender != self.preferred_parent:
            # loop avoidance: never adopt a parent that is not closer to the root
            if consistent and self.trickle is not None:
                self.trickle = replace(self.trickle, c=self.trickle.c + 1)
            return self.preferred_parent
        self.parent_set[sender] = dio.rank
        old_rank = self.rank
        self._select()
        if consistent and self.trickle is not None:
            self.trickle = replace(self.trickle, c=self.trickle.c + 1)
        if self.rank != old_rank and self.role == "router":
            self.reset_trickle("inconsistency")
        return self.preferred_parent

    def _select(self) -> None:
        if not self.parent_set:
            self.preferred_parent = None
            self.rank = INFINITE_RANK
            return
        best = min(self.parent_set.items(), key=lambda kv: (kv[1], kv[0]))
        self.preferred_parent = best[0]
        self.rank = best[1] + self.config.min_hop_rank_increase

    def adopt_parent(self, parent: int, parent_rank: int) -> None:
        """Install a parent chosen outside RPL (used by the SBP baseline)."""
        self.parent_set = {parent: parent_rank}
        self._select()

    def process_dis(self) -> None:
        if self.role == "leaf":
            return
        self.reset_trickle("dis")
