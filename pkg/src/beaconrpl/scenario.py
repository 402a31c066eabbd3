"""Scenario description, key=value config files and stock topologies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .coupling import PROPOSED, SBP, SchemeConfig, imin_guarantees_dio
from .engine import NodeSpec, ScenarioError, TICKS_PER_SECOND, Topology
from .mac154 import MacConfig, SuperframeConfig
from .metrics import EnergyModel

DEFAULT_RANGE = 50.0
STEADY_6_MIN = 6 * 60 * TICKS_PER_SECOND
DEFAULT_LEAVES_PER_HOP = 64
DEFAULT_BOOT_JITTER_BI = 360.0


@dataclass
class Scenario:
    nodes: list[NodeSpec]
    radio_range: float = DEFAULT_RANGE
    bo: int = 5
    so: int = 2
    base_superframe: int = 960
    empty_beacon_bytes: int = 15
    phy_overhead_bytes: int = 6
    assoc_retry_limit: int = 3
    wake_guard: int = 4
    scheme: str = PROPOSED
    sbp_size_bytes: int = 28
    imin: str | int = "auto"
    imax_doublings: int = 8
    k: int = 10
    min_hop_rank_increase: int = 256
    dio_size_bytes: int = 84
    scan_duration: str | int = "auto"
    i_tx: float = 0.0174
    i_rx: float = 0.0188
    v: float = 3.0
    i_sleep: float = 0.0
    steady_ticks: int = 0
    max_ticks: int | None = None
    boot_jitter_bi: float = 0.0
    seeds: list[int] = field(default_factory=lambda: list(range(1, 21)))
    name: str = "custom"

    def validate(self) -> "Scenario":
        self.topology()
        self.superframe()
        self.scheme_config()
        self.energy_model()
        if self.scan_duration != "auto" and (not isinstance(self.scan_duration, int) or self.scan_duration < 1):
            raise ScenarioError(f"scan_duration: expected 'auto' or positive ticks, got {self.scan_duration!r}")
        if self.steady_ticks < 0:
            raise ScenarioError("steady_ticks must be >= 0")
        if self.max_ticks is not None and self.max_ticks <= 0:
            raise ScenarioError("max_ticks must be positive")
        if self.imax_doublings < 0:
            raise ScenarioError("imax_doublings must be >= 0")
        if self.dio_size_bytes < 1 or self.dio_size_bytes + self.empty_beacon_bytes > 127:
            raise ScenarioError("dio_size_bytes must fit a beacon (1..127 - empty_beacon_bytes)")
        if self.boot_jitter_bi < 0:
            raise ScenarioError("boot_jitter_bi must be >= 0")
        if not self.seeds:
            raise ScenarioError("seeds: at least one seed is required")
        self.imin_ticks()
        return self

    def warnings(self) -> list[str]:
        """Legal but suspicious settings; the run still goes ahead."""
        out = []
        sf = self.superframe()
        if self.scheme == PROPOSED and not imin_guarantees_dio(self.imin_ticks(), sf):
            out.append(f"imin={self.imin_ticks()} exceeds BI-SD={sf.bi - sf.sd}: "
                       "a solicited coordinator may send its next beacon without a DIO")
        if 2 * self.scan_ticks() < sf.bi:
            out.append(f"scan_duration={self.scan_ticks()} is shorter than half a beacon interval ({sf.bi})")
        return out

    def topology(self) -> Topology:
        return Topology(self.nodes, self.radio_range)

    def superframe(self) -> SuperframeConfig:
        return SuperframeConfig(self.bo, self.so, self.base_superframe)

    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(self.scheme, self.sbp_size_bytes, self.imin)

    def imin_ticks(self) -> int:
        return self.scheme_config().imin(self.superframe())

    def mac_config(self) -> MacConfig:
        scan = None if self.scan_duration == "auto" else int(self.scan_duration)
        return MacConfig(self.empty_beacon_bytes, self.phy_overhead_bytes, self.assoc_retry_limit,
                         self.wake_guard, scan)

    def energy_model(self) -> EnergyModel:
        return EnergyModel(self.i_tx, self.i_rx, self.v, self.i_sleep)

    def effective_max_ticks(self) -> int:
        if self.max_ticks is not None:
            return self.max_ticks
        bi = self.superframe().bi
        last_boot = max(n.boot for n in self.nodes)
        return last_boot + int((self.boot_jitter_bi + 400) * bi)

    def scan_ticks(self) -> int:
        return self.superframe().bi if self.scan_duration == "auto" else int(self.scan_duration)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


# -- stock topologies ----------------------------------------------------------

def _cluster(center: tuple[float, float], count: int, first_id: int, radius: float = 3.0,
             role: str = "rfd") -> list[NodeSpec]:
    out = []
    for i in range(count):
        ang = 2 * math.pi * i / max(count, 1)
        out.append(NodeSpec(first_id + i, round(center[0] + radius * math.cos(ang), 3),
                            round(center[1] + radius * math.sin(ang), 3), role))
    return out


def default_nodes(leaves_per_hop: int = DEFAULT_LEAVES_PER_HOP, radio_range: float = DEFAULT_RANGE) -> list[NodeSpec]:
    """Chain PAN(0) - FFD(1) - FFD(2) with RFD clusters (ids 1xx, 2xx, 3xx) one hop below each coordinator.

    Approximates the evaluated topology: every joining node has exactly one
    coordinator closer to the root within radio range.  Coordinates are
    expressed as fractions of the radio range.
    """
    r = radio_range
    nodes = [NodeSpec(0, 0.0, 0.0, "pan"), NodeSpec(1, 0.9 * r, 0.0, "ffd"), NodeSpec(2, 1.8 * r, 0.0, "ffd")]
    if not 0 <= leaves_per_hop <= 99:
        raise ScenarioError("leaves_per_hop must lie in 0..99")
    nodes += _cluster((-0.5 * r, 0.0), leaves_per_hop, 100)
    nodes += _cluster((0.9 * r, 0.7 * r), leaves_per_hop, 200)
    nodes += _cluster((2.3 * r, 0.0), leaves_per_hop, 300)
    return nodes


def default_scenario(**overrides) -> Scenario:
    """Desk-scale approximation of the evaluated chain (the exact layout is unpublished)."""
    leaves = overrides.pop("leaves_per_hop", DEFAULT_LEAVES_PER_HOP)
    radio_range = overrides.pop("radio_range", DEFAULT_RANGE)
    sc = Scenario(nodes=default_nodes(leaves, radio_range), radio_range=radio_range,
                  boot_jitter_bi=DEFAULT_BOOT_JITTER_BI, name="default-chain")
    return replace(sc, **overrides).validate()


def star_nodes(n_coordinators: int, radio_range: float = DEFAULT_RANGE, joiner_boot: int = 0) -> list[NodeSpec]:
    """PAN plus ``n_coordinators - 1`` FFD children, and one RFD (id 99) hearing all of them."""
    if not 1 <= n_coordinators <= 6:
        raise ScenarioError("star scenario supports 1..6 coordinators")
    r = radio_range
    nodes = [NodeSpec(0, 0.0, 0.0, "pan")]
    for i in range(1, n_coordinators):
        ang = 2 * math.pi * (i - 1) / max(n_coordinators - 1, 1)
        nodes.append(NodeSpec(i, round(0.5 * r * math.cos(ang), 3), round(0.5 * r * math.sin(ang), 3), "ffd"))
    nodes.append(NodeSpec(99, 0.0, round(0.1 * r, 3), "rfd", joiner_boot))
    return nodes


def star_scenario(n_coordinators: int, joiner_boot: int | None = None, **overrides) -> Scenario:
    sf = SuperframeConfig(overrides.get("bo", 5), overrides.get("so", 2))
    if joiner_boot is None:
        joiner_boot = 200 * sf.bi + sf.bi // 3
    sc = Scenario(nodes=star_nodes(n_coordinators, joiner_boot=joiner_boot), name=f"star-{n_coordinators}")
    return replace(sc, **overrides).validate()


# -- key=value config ----------------------------------------------------------

_INT_KEYS = {"bo", "so", "base_superframe", "empty_beacon_bytes", "phy_overhead_bytes", "assoc_retry_limit",
             "wake_guard", "sbp_size_bytes", "imax_doublings", "k", "min_hop_rank_increase",
             "dio_size_bytes", "steady_ticks", "max_ticks"}
_FLOAT_KEYS = {"boot_jitter_bi", "radio_range", "i_tx", "i_rx", "v", "i_sleep"}
_ALIASES = {"imin_ticks": "imin", "imin_policy": "imin", "range": "radio_range", "sbp_size": "sbp_size_bytes",
            "scan": "scan_duration", "imax": "imax_doublings"}
SECTIONS = ("mac", "rpl", "coupling", "energy", "run", "topology")


def parse_seeds(text: str) -> list[int]:
    text = text.strip()
    if "," in text:
        return [int(s) for s in text.split(",") if s.strip()]
    n = int(text)
    if n < 1:
        raise ScenarioError("seeds: count must be >= 1")
    return list(range(1, n + 1))


def _coerce(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in ("imin", "scan_duration"):
            return "auto" if raw == "auto" else int(raw)
    except ValueError:
        raise ScenarioError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str, base_dir: Path | None = None) -> Scenario:
    """Parse flat ``section.key=value`` lines into a Scenario."""
    values: dict = {}
    nodes: list[NodeSpec] = []
    preset = "default"
    leaves = DEFAULT_LEAVES_PER_HOP
    base_seed = None
    seed_count = None
    known = {f.name for f in fields(Scenario)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        if parts[0] in SECTIONS:
            section, parts = parts[0], parts[1:]
        else:
            section = None
        if section == "topology" and parts and parts[0] == "node":
            if len(parts) != 2:
                raise ScenarioError(f"line {lineno}: use topology.node.<id>=x,y,role[,boot]")
            nodes.append(_parse_node(int(parts[1]), raw, lineno))
            continue
        name = ".".join(parts)
        name = _ALIASES.get(name, name)
        if name == "preset":
            preset = raw
        elif name == "leaves_per_hop":
            leaves = int(raw)
        elif name == "file":
            path = Path(raw) if base_dir is None else base_dir / raw
            nodes.extend(load_topology_file(path))
        elif name == "seeds":
            values["seeds"] = parse_seeds(raw)
        elif name == "base_seed":
            base_seed = int(raw)
        elif name == "repeats":
            seed_count = int(raw)
        elif name in known and name not in ("nodes", "seeds"):
            values[name] = _coerce(name, raw)
        else:
            raise ScenarioError(f"line {lineno}: unknown config key {key!r}")
    if base_seed is not None or seed_count is not None:
        count = seed_count if seed_count is not None else len(values.get("seeds", range(20)))
        start = base_seed if base_seed is not None else 1
        values["seeds"] = [start + i for i in range(count)]
    if nodes:
        sc = Scenario(nodes=nodes, name="config")
    elif preset == "default":
        sc = Scenario(nodes=default_nodes(leaves, values.get("radio_range", DEFAULT_RANGE)),
                      boot_jitter_bi=DEFAULT_BOOT_JITTER_BI, name="default-chain")
    elif preset.startswith("star"):
        n = int(preset.split(":", 1)[1]) if ":" in preset else 3
        sc = star_scenario(n, bo=values.get("bo", 5), so=values.get("so", 2))
    else:
        raise ScenarioError(f"unknown topology preset {preset!r}")
    return replace(sc, **values).validate()


def _parse_node(node_id: int, raw: str, lineno: int = 0) -> NodeSpec:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) not in (3, 4):
        raise ScenarioError(f"line {lineno}: node needs x,y,role[,boot]")
    try:
        return NodeSpec(node_id, float(parts[0]), float(parts[1]), parts[2],
                        int(parts[3]) if len(parts) == 4 else 0)
    except ValueError:
        raise ScenarioError(f"line {lineno}: bad node definition {raw!r}") from None


def load_topology_file(path: Path) -> list[NodeSpec]:
    """One node per line: ``id x y role [boot]`` (whitespace or comma separated)."""
    nodes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        nodes.append(_parse_node(int(parts[0]), ",".join(parts[1:]), lineno))
    return nodes


def load_config(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)
