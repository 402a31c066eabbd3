import pytest

from beaconrpl.engine import NodeSpec
from beaconrpl.metrics import EnergyModel, LedgerError, NonConverged, RadioLedger, energy_joules
from beaconrpl.scenario import Scenario, star_scenario
from beaconrpl.simulation import simulate

MODEL = EnergyModel()
MS = 1000 / 16  # ticks per millisecond


def test_rx_for_one_beacon_interval_is_booked():
    led = RadioLedger([1])
    led.record_state(1, "rx", 0, 30720)
    assert led.ticks(1, "rx") == 30720


def test_zero_length_interval_is_a_noop():
    led = RadioLedger([1])
    led.record_state(1, "rx", 50, 50)
    assert led.ticks(1, "rx") == 0 and led.intervals[1]["rx"] == []


def test_overlapping_interval_is_rejected():
    led = RadioLedger([1])
    led.record_state(1, "rx", 0, 100)
    with pytest.raises(LedgerError):
        led.record_state(1, "tx", 50, 120)
    with pytest.raises(LedgerError):
        led.record_state(1, "tx", 200, 150)


def test_windowed_ticks_clip_intervals():
    led = RadioLedger([1])
    led.record_state(1, "rx", 0, 100)
    led.record_state(1, "sleep", 100, 300)
    led.record_state(1, "rx", 300, 400)
    assert led.ticks(1, "rx", (50, 350)) == 100
    assert led.ticks(1, "sleep", (50, 350)) == 200


def test_beacon_with_dio_reception_energy():
    assert energy_joules(3.5 * MS, "rx", MODEL) == pytest.approx(197.4e-6)


def test_three_dio_beacons_energy():
    assert 3 * energy_joules(3.5 * MS, "rx", MODEL) == pytest.approx(592.2e-6)


def test_zero_ticks_zero_joules():
    assert energy_joules(0, "tx", MODEL) == 0


def test_energy_model_validates():
    with pytest.raises(ValueError):
        EnergyModel(i_tx=0)


def test_sbp_overhead_is_blob_size_per_beacon():
    nodes = [NodeSpec(0, 0, 0, "pan")]
    sc = Scenario(nodes=nodes, scheme="sbp", sbp_size_bytes=28, max_ticks=10 * 30720, seeds=[1])
    res = simulate(sc, 1)
    beacons = [f for f in res.ledger.tx_frames if f.kind == "beacon"]
    assert all(f.mac_bytes == 15 + 28 for f in beacons)
    # a root alone keeps adding one beacon (and one blob) per interval
    short = res.ledger.overhead_bytes((0, 5 * 30720))["total"]
    assert res.ledger.overhead_bytes()["total"] == 2 * short


def test_steady_state_dio_rate_approaches_imax_rate():
    sc = star_scenario(1, joiner_boot=0, seeds=[1], steady_ticks=600 * 30720)
    res = simulate(sc, 1)
    cfg = sc.superframe()
    imax_interval = sc.imin_ticks() << sc.imax_doublings
    window = (res.converged_at + 2 * imax_interval, res.end_tick)
    dio_beacons = sum(1 for b in res.ledger.beacons[0] if window[0] <= b[0] < window[1] and b[1])
    expected = (window[1] - window[0]) / imax_interval
    assert dio_beacons == pytest.approx(expected, abs=1.5)
    assert cfg.bi == 30720


def test_convergence_time_for_lone_joiner():
    res = simulate(star_scenario(1, joiner_boot=0, seeds=[1]), 1)
    assert res.converged
    assert res.convergence == res.ledger.assoc_tick[99] < 3 * 30720


def test_disconnected_node_is_reported():
    led = RadioLedger([0, 1])
    led.record_association(0, 0)
    out = led.convergence_time([0, 1])
    assert isinstance(out, NonConverged) and out.nodes == [1] and not out


def test_preassociated_network_converges_at_zero():
    led = RadioLedger([0, 1])
    led.record_association(0, 0)
    led.record_association(1, 0)
    assert led.convergence_time([0, 1]) == 0


def test_per_node_byte_counters():
    res = simulate(star_scenario(1, joiner_boot=0, seeds=[1]), 1)
    led = res.ledger
    sent = led.tx_bytes()
    assert sent[99] == sum(f.mac_bytes for f in led.tx_frames if f.node == 99)
    got = led.rx_bytes()
    assert got[99] > 0 and got[0] > 0
