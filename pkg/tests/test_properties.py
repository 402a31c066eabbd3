import random

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from beaconrpl.analysis import (TrickleChainParams, delay_sample, expected_delay_at_imin, expected_delay_general,
                                stationary)
from beaconrpl.engine import COLLIDED, Channel, Engine, NodeSpec, Radio, Topology
from beaconrpl.mac154 import BEACON, Frame, SuperframeConfig
from beaconrpl.metrics import EnergyModel, RadioLedger, energy_joules
from beaconrpl.rpl import TrickleState, trickle_on_expire, trickle_reset, trickle_start

BI = 30720


@given(p=st.sampled_from([i / 10 for i in range(11)]), imax=st.integers(0, 8))
def test_stationary_is_a_distribution(p, imax):
    probs = stationary(TrickleChainParams(p, imax, 100, BI))
    assert np.all(probs >= 0)
    assert abs(probs.sum() - 1.0) < 1e-12


@given(imin=st.integers(1, BI))
def test_delay_at_imin_bounded(imin):
    d = expected_delay_at_imin(imin, BI)
    assert BI / 4 <= d < BI


@given(a=st.integers(1, BI - 1), b=st.integers(1, BI - 1))
def test_delay_at_imin_decreases_in_imin(a, b):
    lo, hi = sorted((a, b))
    if lo < hi:
        assert expected_delay_at_imin(lo, BI) > expected_delay_at_imin(hi, BI)


@given(imin=st.integers(1, BI), imax=st.integers(0, 8))
def test_always_reset_chain_matches_reset_formula(imin, imax):
    general = expected_delay_general(TrickleChainParams(1.0, imax, imin, BI))
    assert abs(general - expected_delay_at_imin(imin, BI)) < 1e-9 * BI


@given(x=st.floats(0, 50 * BI, allow_nan=False))
def test_delay_sample_in_half_open_bi(x):
    d = delay_sample(x, BI)
    assert 0 < d <= BI


@settings(max_examples=60)
@given(imin=st.integers(2, 40_000), imax=st.integers(0, 8), seed=st.integers(0, 2**32 - 1),
       now=st.integers(0, 10**8), steps=st.integers(0, 12))
def test_trickle_timer_law(imin, imax, seed, now, steps):
    rng = random.Random(seed)
    s = trickle_start(TrickleState(imin, imax, 10), now, rng)
    for _ in range(steps):
        _, s = trickle_on_expire(s, rng)
        assert s.interval == imin << min(s.n, imax) and s.n <= imax
        assert s.interval_start + s.interval // 2 <= s.t < s.interval_start + s.interval
    later = s.interval_start + 3
    r = trickle_reset(s, later, rng)
    assert r.n == 0 and later + imin // 2 <= r.t < later + imin


@settings(max_examples=60, deadline=None)
@given(xs=st.lists(st.tuples(st.integers(-60, 60), st.integers(-60, 60)), min_size=3, max_size=6, unique=True),
       starts=st.lists(st.integers(0, 80), min_size=6, max_size=6), durs=st.lists(st.integers(10, 80), min_size=6,
                                                                                     max_size=6))
def test_collision_is_symmetric(xs, starts, durs):
    nodes = [NodeSpec(i, x, y, "pan" if i == 0 else "ffd") for i, (x, y) in enumerate(xs)]
    engine = Engine()
    radios = {n.id: Radio(n.id, engine) for n in nodes}
    channel = Channel(Topology(nodes, 50), engine, radios)
    for r in radios.values():
        r.hold("listen")
    txs = []
    order = sorted(range(len(nodes)), key=lambda i: starts[i])
    for i in order:
        engine.run(until=starts[i])
        if not radios[i].transmitting:
            txs.append(channel.transmit(i, Frame(BEACON, i, -1, 15), durs[i]))
    # if a and b overlap in time and share a receiver, both are collided there
    for a in txs:
        outcome_a = dict(channel.propagate(a))
        for b in txs:
            if a is b or not a.overlaps(b):
                continue
            for r, kind in outcome_a.items():
                if r in channel.topology.neighbor_set(b.sender) and r != b.sender:
                    assert kind == COLLIDED
                    assert dict(channel.propagate(b)).get(r) == COLLIDED


@settings(max_examples=80)
@given(cuts=st.lists(st.integers(1, 10**6), min_size=1, max_size=10),
       mode=st.sampled_from(["tx", "rx", "sleep"]))
def test_energy_is_additive_over_intervals(cuts, mode):
    model = EnergyModel(i_sleep=1e-6)
    bounds = [0] + sorted(set(cuts))
    led = RadioLedger([1])
    for a, b in zip(bounds, bounds[1:]):
        led.record_state(1, mode, a, b)
    total = energy_joules(bounds[-1], mode, model)
    parts = sum(energy_joules(b - a, mode, model) for a, b in zip(bounds, bounds[1:]))
    assert abs(led.energy(1, mode, model) - total) <= 1e-12 * max(total, 1)
    assert abs(parts - total) <= 1e-12 * max(total, 1)


@given(bo=st.integers(0, 14), so=st.integers(0, 14))
def test_superframe_duty_bound(bo, so):
    if so > bo:
        return
    sf = SuperframeConfig(bo, so)
    assert sf.sd * sf.slots == sf.bi
    assert sf.duty_bound == sf.sd / sf.bi
