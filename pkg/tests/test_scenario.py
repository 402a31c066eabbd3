from fractions import Fraction

import pytest

from beaconrpl.engine import ScenarioError
from beaconrpl.scenario import (STEADY_6_MIN, default_scenario, load_config, parse_config, parse_seeds,
                                star_scenario)
from beaconrpl.simulation import RPL_ROLE, scan_sufficient, simulate


def test_default_scenario_settings():
    sc = default_scenario()
    assert (sc.bo, sc.so, sc.scheme, sc.imin, sc.scan_duration) == (5, 2, "proposed", "auto", "auto")
    assert sc.seeds == list(range(1, 21))
    assert sc.superframe().duty_bound == Fraction(1, 8)


def test_roles_map_to_rpl_roles():
    assert RPL_ROLE == {"pan": "root", "ffd": "router", "rfd": "leaf"}
    res = simulate(default_scenario(leaves_per_hop=1, boot_jitter_bi=0), 1)
    for n, node in res.nodes.items():
        assert node.rpl.role == RPL_ROLE[node.spec.role]


def test_default_chain_builds_three_hops():
    res = simulate(default_scenario(leaves_per_hop=2, boot_jitter_bi=5), 2)
    assert res.converged
    assert res.coordinators() == [0, 1, 2]
    assert res.mac_parent() == {1: 0, 2: 1, 100: 0, 101: 0, 200: 1, 201: 1, 300: 2, 301: 2}
    assert res.rpl_parent() == res.mac_parent()
    assert [res.hop(n) for n in (0, 1, 2, 100, 200, 300)] == [0, 1, 2, 1, 2, 3]


def test_six_minutes_in_ticks():
    assert STEADY_6_MIN == 22_500_000


def test_parse_seeds():
    assert parse_seeds("3") == [1, 2, 3]
    assert parse_seeds("5,9,2") == [5, 9, 2]
    with pytest.raises(ScenarioError):
        parse_seeds("0")


def test_config_sections_and_aliases():
    sc = parse_config("""
        # comment
        mac.bo=6
        mac.so=2
        coupling.scheme=sbp
        coupling.sbp_size=42
        rpl.imin=auto
        mac.scan=122880
        run.seeds=4,5
        run.steady_ticks=1000
        topology.leaves_per_hop=3
    """)
    assert (sc.bo, sc.scheme, sc.sbp_size_bytes, sc.scan_duration) == (6, "sbp", 42, 122880)
    assert sc.seeds == [4, 5] and sc.steady_ticks == 1000
    assert len(sc.nodes) == 3 + 9


def test_base_seed_derivation():
    sc = parse_config("run.base_seed=100\nrun.repeats=3\n")
    assert sc.seeds == [100, 101, 102]


def test_inline_nodes():
    sc = parse_config("topology.node.0=0,0,pan\ntopology.node.4=10,0,rfd,500\ntopology.range=20\n")
    assert [(n.id, n.role, n.boot) for n in sc.nodes] == [(0, "pan", 0), (4, "rfd", 500)]
    assert sc.radio_range == 20


def test_topology_file(tmp_path):
    (tmp_path / "nodes.txt").write_text("0 0 0 pan\n1 30 0 ffd\n2, 60, 0, rfd, 100\n")
    (tmp_path / "sc.cfg").write_text("topology.file=nodes.txt\nrun.seeds=1\n")
    sc = load_config(tmp_path / "sc.cfg")
    assert [n.id for n in sc.nodes] == [0, 1, 2] and sc.nodes[2].boot == 100


def test_star_preset():
    sc = parse_config("topology.preset=star:3\n")
    assert sorted(n.id for n in sc.nodes) == [0, 1, 2, 99]


@pytest.mark.parametrize("text,key", [
    ("mac.bogus=1", "mac.bogus"),
    ("mac.bo=five", "bo"),
    ("mac.bo=2\nmac.so=3", "SO"),
    ("coupling.scheme=magic", "scheme"),
    ("rpl.imin=-3", "imin"),
    ("mac.scan=0", "scan_duration"),
    ("topology.preset=ring", "preset"),
    ("just text", "key=value"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ScenarioError, match=key):
        parse_config(text)


def test_scan_sufficiency_flag():
    assert scan_sufficient(default_scenario())
    assert not scan_sufficient(default_scenario(scan_duration=1000))
    assert any("scan_duration" in w for w in default_scenario(scan_duration=1000).warnings())


def test_star_scenario_geometry():
    sc = star_scenario(3)
    topo = sc.topology()
    assert all(topo.in_range(99, c) for c in (0, 1, 2))
