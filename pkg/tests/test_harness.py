import csv
import math

import pytest

from beaconrpl.engine import ScenarioError
from beaconrpl.harness import (AGGREGATE_COLUMNS, NODE_COLUMNS, SWEEP_AGGREGATE_COLUMNS, SWEEP_COLUMNS, SweepError,
                               aggregate_dir, ci95, parse_sweep, run_scenario, sweep)
from beaconrpl.scenario import default_scenario


def small(**kw):
    kw.setdefault("seeds", [1, 2, 3])
    return default_scenario(leaves_per_hop=2, boot_jitter_bi=5, **kw)


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_ci95_known_values():
    mean, lo, hi = ci95([1.0, 2.0, 3.0])
    assert mean == 2.0
    # t(0.975, 2) = 4.302653
    assert hi - mean == pytest.approx(4.302653 / math.sqrt(3), rel=1e-6)
    assert mean - lo == pytest.approx(hi - mean)


def test_ci95_single_value_has_no_interval():
    assert ci95([5.0]) == (5.0, None, None)


def test_run_writes_per_seed_and_aggregate_files(tmp_path):
    batch = run_scenario(small(), tmp_path)
    assert batch.all_converged
    for seed in (1, 2, 3):
        rows = read(tmp_path / f"metrics_seed{seed}.csv")
        assert tuple(rows[0]) == NODE_COLUMNS
        assert {r["window"] for r in rows} == {"construction"}
        assert (tmp_path / f"summary_seed{seed}.txt").read_text().startswith("scenario=")
    agg = read(tmp_path / "aggregate.csv")
    assert tuple(agg[0]) == AGGREGATE_COLUMNS
    conv = next(r for r in agg if r["metric"] == "convergence_ticks")
    assert float(conv["ci_low"]) <= float(conv["mean"]) <= float(conv["ci_high"])


def test_single_repeat_leaves_ci_columns_empty(tmp_path):
    run_scenario(small(seeds=[4]), tmp_path)
    agg = read(tmp_path / "aggregate.csv")
    assert all(r["ci_low"] == "" and r["ci_high"] == "" for r in agg)


def test_same_seeds_give_identical_aggregates(tmp_path):
    run_scenario(small(), tmp_path / "a")
    run_scenario(small(), tmp_path / "b")
    assert (tmp_path / "a" / "aggregate.csv").read_bytes() == (tmp_path / "b" / "aggregate.csv").read_bytes()


def test_aggregate_recomputes_from_per_seed_files(tmp_path):
    batch = run_scenario(small(), tmp_path)
    assert aggregate_dir(tmp_path) == batch.aggregate


def test_steady_window_rows(tmp_path):
    run_scenario(small(seeds=[1], steady_ticks=20 * 30720), tmp_path)
    rows = read(tmp_path / "metrics_seed1.csv")
    assert {r["window"] for r in rows} == {"construction", "steady"}
    rfd_tx = [float(r["tx_J"]) for r in rows if r["window"] == "steady" and r["role"] == "rfd"]
    assert rfd_tx and all(v == 0 for v in rfd_tx)


def test_nonconvergence_is_flagged(tmp_path):
    batch = run_scenario(small(seeds=[1], max_ticks=1000), tmp_path)
    assert batch.nonconverged == [1]
    text = (tmp_path / "summary_seed1.txt").read_text()
    assert "converged=false" in text and "nonconverged_nodes=1," in text


def test_parse_sweep():
    assert parse_sweep("bo=3,4,5") == ("bo", [3, 4, 5])
    assert parse_sweep("sbp_size=14,28") == ("sbp_size_bytes", [14, 28])
    assert parse_sweep("scan=auto,61440") == ("scan_duration", ["auto", 61440])
    for bad in ("bo", "so=1,2", "bo=x", "bo="):
        with pytest.raises(ScenarioError):
            parse_sweep(bad)


def test_sweep_long_and_aggregate_tables(tmp_path):
    res = sweep(small(seeds=[1, 2]), "bo", [4, 5], tmp_path)
    long_rows = read(tmp_path / "sweep_bo.csv")
    assert tuple(long_rows[0]) == SWEEP_COLUMNS
    assert {(r["value"], r["seed"]) for r in long_rows} == {("4", "1"), ("4", "2"), ("5", "1"), ("5", "2")}
    agg = read(tmp_path / "sweep_bo_aggregate.csv")
    assert tuple(agg[0]) == SWEEP_AGGREGATE_COLUMNS
    assert set(res.batches) == {4, 5}


def test_sweep_rejects_illegal_values_before_running():
    with pytest.raises(ScenarioError, match="bo=1"):
        sweep(small(), "bo", [5, 1])


def test_sweep_run_failure_names_the_tuple(monkeypatch):
    import beaconrpl.harness as harness

    def boom(scenario, seed, trace=False):
        if scenario.bo == 4 and seed == 2:
            raise RuntimeError("engine exploded")
        return real(scenario, seed, trace)

    real = harness.simulate
    monkeypatch.setattr(harness, "simulate", boom)
    with pytest.raises(SweepError, match=r"bo=4, seed=2"):
        sweep(small(seeds=[1, 2]), "bo", [4, 5])
