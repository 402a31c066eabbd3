import pytest

from beaconrpl.engine import Channel, Engine, NodeSpec, Radio, Topology
from beaconrpl.metrics import RadioLedger


class MiniNet:
    """Engine, ledger, radios and channel for a handful of hand-placed nodes."""

    def __init__(self, placements, radio_range=50.0, seed=0):
        nodes = [NodeSpec(i, x, y, role) for i, (x, y, role) in placements.items()]
        self.topology = Topology(nodes, radio_range)
        self.engine = Engine(seed)
        self.ledger = RadioLedger(placements)
        self.radios = {i: Radio(i, self.engine, self.ledger) for i in placements}
        self.delivered = []
        self.channel = Channel(self.topology, self.engine, self.radios,
                               on_deliver=lambda r, tx: self.delivered.append((r, tx.sender, tx.start)))


@pytest.fixture
def mininet():
    return MiniNet
