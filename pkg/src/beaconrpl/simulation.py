"""Wire engine, MAC, RPL and coupling together and execute one seeded run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .coupling import Coupling
from .engine import Channel, Engine, Radio, TransmissionRecord
from .mac154 import MacNode, SlotAllocator
from .metrics import NonConverged, RadioLedger
from .rpl import INFINITE_RANK, RplConfig, RplNode
from .scenario import Scenario

RPL_ROLE = {"pan": "root", "ffd": "router", "rfd": "leaf"}


@dataclass
class Node:
    spec: object
    radio: Radio
    mac: MacNode
    rpl: RplNode
    coupling: Coupling


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    ledger: RadioLedger
    nodes: dict[int, Node]
    convergence: int | NonConverged
    converged_at: int | None
    end_tick: int
    events: int
    trace: list[str] = field(default_factory=list)
    boot: dict[int, int] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return not isinstance(self.convergence, NonConverged)

    @property
    def construction_window(self) -> tuple[int, int]:
        return 0, self.converged_at if self.converged_at is not None else self.end_tick

    @property
    def steady_window(self) -> tuple[int, int] | None:
        if self.converged_at is None:
            return None
        return self.converged_at, self.end_tick

    def role(self, node: int) -> str:
        return self.nodes[node].spec.role

    def hop(self, node: int) -> int | None:
        rank = self.nodes[node].rpl.rank
        if rank == INFINITE_RANK:
            return None
        step = self.scenario.min_hop_rank_increase
        return int(rank // step) - 1

    def coordinators(self) -> list[int]:
        return sorted(n for n, node in self.nodes.items() if node.mac.is_coordinator)

    def mac_parent(self) -> dict[int, int]:
        return {n: node.mac.coordinator for n, node in self.nodes.items() if node.mac.coordinator is not None}

    def rpl_parent(self) -> dict[int, int]:
        return {n: node.rpl.preferred_parent for n, node in self.nodes.items()
                if node.rpl.preferred_parent is not None}


def build(scenario: Scenario, seed: int, trace: bool = False):
    """Create engine, ledger, channel and every node of ``scenario`` (not yet booted)."""
    topo = scenario.topology()
    sf = scenario.superframe()
    scheme = scenario.scheme_config()
    rpl_cfg = RplConfig(scenario.imin_ticks(), scenario.imax_doublings, scenario.k,
                        scenario.min_hop_rank_increase, scenario.dio_size_bytes)
    mac_cfg = scenario.mac_config()
    engine = Engine(seed, trace)
    ledger = RadioLedger(n.id for n in topo.nodes)
    radios = {n.id: Radio(n.id, engine, ledger) for n in topo.nodes}
    allocator = SlotAllocator(sf, topo)
    nodes: dict[int, Node] = {}
    phy = scenario.phy_overhead_bytes

    def deliver(receiver: int, tx: TransmissionRecord) -> None:
        ledger.record_rx(receiver, tx.end, tx.frame.kind, tx.frame.mac_bytes)
        nodes[receiver].mac.on_receive(tx)

    def transmitted(tx: TransmissionRecord) -> None:
        f = tx.frame
        ledger.record_tx(tx.sender, tx.start, f.kind, f.mac_bytes, f.mac_bytes + phy)

    channel = Channel(topo, engine, radios, deliver, transmitted)
    for spec in topo.nodes:
        rpl = RplNode(spec.id, RPL_ROLE[spec.role], rpl_cfg, topo.pan_id)
        coupling = Coupling(spec.id, engine, sf, scheme, rpl, ledger)
        mac = MacNode(spec.id, spec.role, engine, channel, radios[spec.id], sf, mac_cfg, allocator,
                      ledger, coupling)
        coupling.mac = mac
        nodes[spec.id] = Node(spec, radios[spec.id], mac, rpl, coupling)
    return engine, ledger, nodes


def boot_times(scenario: Scenario, engine: Engine) -> dict[int, int]:
    """Boot instant per node.

    RFDs get an extra uniform delay of up to ``boot_jitter_bi`` beacon
    intervals.  The draws come first, in node-id order, so both schemes see
    the same arrivals for a given seed.
    """
    bi = scenario.superframe().bi
    spread = int(scenario.boot_jitter_bi * bi)
    out = {}
    for spec in sorted(scenario.nodes, key=lambda n: n.id):
        extra = engine.rng.randrange(spread) if spread > 0 and spec.role == "rfd" else 0
        out[spec.id] = spec.boot + extra
    return out


def simulate(scenario: Scenario, seed: int, trace: bool = False) -> RunResult:
    engine, ledger, nodes = build(scenario, seed, trace)
    boots = boot_times(scenario, engine)
    for node_id in sorted(boots, key=lambda n: (boots[n], n)):
        engine.schedule(boots[node_id], nodes[node_id].mac.boot)

    everyone = list(nodes)
    total = len(everyone)
    assoc = ledger.assoc_tick
    engine.run(until=scenario.effective_max_ticks(), stop=lambda: len(assoc) == total)
    convergence = ledger.convergence_time(everyone)
    converged_at = None
    if not isinstance(convergence, NonConverged):
        converged_at = max(assoc.values())
        if scenario.steady_ticks:
            engine.run(until=converged_at + scenario.steady_ticks)
    for node in nodes.values():
        node.radio.flush()
    ledger.end_tick = engine.now
    return RunResult(scenario, seed, ledger, nodes, convergence, converged_at, engine.now,
                     engine.executed, engine.trace, boots)


def scan_sufficient(scenario: Scenario) -> bool:
    """Whether the scan window covers at least half the actual beacon interval."""
    return 2 * scenario.scan_ticks() >= scenario.superframe().bi


def radio_on_fraction(result: RunResult, node: int, window: tuple[int, int]) -> float:
    span = window[1] - window[0]
    if span <= 0:
        return math.nan
    led = result.ledger
    return (led.ticks(node, "tx", window) + led.ticks(node, "rx", window)) / span
