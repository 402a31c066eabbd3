"""Seeded batches, per-seed CSV/summary files, Student-t aggregates and sweeps."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from scipy import stats

from .coupling import imin_guarantees_dio
from .engine import ScenarioError
from .scenario import Scenario
from .simulation import RunResult, scan_sufficient, simulate

NODE_COLUMNS = ("node", "role", "hop", "window", "tx_J", "rx_J", "tx_bytes", "rx_bytes", "assoc_tick")
AGGREGATE_COLUMNS = ("metric", "n", "mean", "ci_low", "ci_high")
SWEEP_COLUMNS = ("param", "value", "seed", "metric", "result")
SWEEP_AGGREGATE_COLUMNS = ("param", "value", "metric", "n", "mean", "ci_low", "ci_high")
SWEEPABLE = {"bo": "bo", "scan_duration": "scan_duration", "scan": "scan_duration",
             "sbp_size_bytes": "sbp_size_bytes", "sbp_size": "sbp_size_bytes"}


class SweepError(RuntimeError):
    pass


def windows(result: RunResult) -> dict[str, tuple[int, int]]:
    out = {"construction": result.construction_window}
    steady = result.steady_window
    if steady is not None and steady[1] > steady[0]:
        out["steady"] = steady
    return out


def node_rows(result: RunResult) -> list[dict]:
    model = result.scenario.energy_model()
    led = result.ledger
    rows = []
    for name, win in windows(result).items():
        sent, received = led.tx_bytes(win), led.rx_bytes(win)
        for node in sorted(result.nodes):
            hop = result.hop(node)
            rows.append({
                "node": node,
                "role": result.role(node),
                "hop": "" if hop is None else hop,
                "window": name,
                "tx_J": led.energy(node, "tx", model, win),
                "rx_J": led.energy(node, "rx", model, win),
                "tx_bytes": sent.get(node, 0),
                "rx_bytes": received.get(node, 0),
                "assoc_tick": led.assoc_tick.get(node, ""),
            })
    return rows


def run_metrics(result: RunResult, rows: list[dict] | None = None) -> dict[str, float]:
    """Scalar per-run metrics; the unit of aggregation across seeds."""
    rows = node_rows(result) if rows is None else rows
    led = result.ledger
    win = result.construction_window
    overhead = led.overhead_bytes(win)
    beacons = [b for bs in led.beacons.values() for b in bs if win[0] <= b[0] < win[1]]
    m: dict[str, float] = {
        "converged": 1.0 if result.converged else 0.0,
        "convergence_ticks": float(result.convergence) if result.converged else math.nan,
        "overhead_bytes": float(overhead["total"]),
        "beacons": float(len(beacons)),
        "dio_beacons": float(sum(1 for b in beacons if b[1])),
        "beacon_requests": float(overhead["by_kind"].get("beacon-request", 0) // 8),
    }
    groups: dict[str, list[dict]] = defaultdict(list)
    for row in rows:
        if row["hop"] != "":
            groups[(row["window"], f"{row['role']}_hop{row['hop']}")].append(row)
    for (window, group), members in sorted(groups.items()):
        for col in ("tx_J", "rx_J"):
            m[f"{col}_{window}_{group}"] = sum(r[col] for r in members) / len(members)
    return m


def summary_text(result: RunResult, metrics: dict[str, float]) -> str:
    sc = result.scenario
    lines = [
        f"scenario={sc.name}",
        f"scheme={sc.scheme}",
        f"seed={result.seed}",
        f"bo={sc.bo}",
        f"so={sc.so}",
        f"imin_ticks={sc.imin_ticks()}",
        f"scan_ticks={sc.scan_ticks()}",
        f"scan_sufficient={str(scan_sufficient(sc)).lower()}",
        f"imin_guarantees_dio={str(imin_guarantees_dio(sc.imin_ticks(), sc.superframe())).lower()}",
        f"converged={str(result.converged).lower()}",
        f"convergence_ticks={result.convergence if result.converged else ''}",
        f"nonconverged_nodes={'' if result.converged else ','.join(map(str, result.convergence.nodes))}",
        f"end_tick={result.end_tick}",
        f"events={result.events}",
    ]
    lines += [f"metric.{k}={v!r}" for k, v in metrics.items()]
    return "\n".join(lines) + "\n"


def parse_summary(text: str) -> tuple[dict[str, str], dict[str, float]]:
    info, metrics = {}, {}
    for line in text.splitlines():
        if "=" not in line:
            continue
        key, value = line.split("=", 1)
        if key.startswith("metric."):
            metrics[key[len("metric."):]] = float(value)
        else:
            info[key] = value
    return info, metrics


def ci95(values) -> tuple[float, float | None, float | None]:
    """Mean and Student-t 95% interval; the interval is empty for fewer than two values."""
    xs = [v for v in values if not math.isnan(v)]
    if not xs:
        return math.nan, None, None
    mean = sum(xs) / len(xs)
    if len(xs) < 2:
        return mean, None, None
    sd = math.sqrt(sum((x - mean) ** 2 for x in xs) / (len(xs) - 1))
    half = float(stats.t.ppf(0.975, len(xs) - 1)) * sd / math.sqrt(len(xs))
    return mean, mean - half, mean + half


def aggregate(per_seed: list[dict[str, float]]) -> list[dict]:
    names = sorted({k for m in per_seed for k in m})
    rows = []
    for name in names:
        values = [m[name] for m in per_seed if name in m]
        mean, lo, hi = ci95(values)
        rows.append({"metric": name, "n": sum(1 for v in values if not math.isnan(v)),
                     "mean": mean, "ci_low": "" if lo is None else lo, "ci_high": "" if hi is None else hi})
    return rows


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


@dataclass
class Batch:
    scenario: Scenario
    metrics: dict[int, dict[str, float]] = field(default_factory=dict)
    nonconverged: list[int] = field(default_factory=list)
    aggregate: list[dict] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return not self.nonconverged

    def mean(self, metric: str) -> float:
        return ci95([m[metric] for m in self.metrics.values()])[0]

    def ci(self, metric: str) -> tuple[float, float | None, float | None]:
        return ci95([m[metric] for m in self.metrics.values()])


def run_scenario(scenario: Scenario, out_dir: str | Path | None = None, trace: bool = False,
                 on_result=None) -> Batch:
    """One run per seed; optional per-seed files plus ``aggregate.csv`` in ``out_dir``."""
    scenario.validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    batch = Batch(scenario)
    for seed in scenario.seeds:
        result = simulate(scenario, seed, trace=trace)
        rows = node_rows(result)
        metrics = run_metrics(result, rows)
        batch.metrics[seed] = metrics
        if not result.converged:
            batch.nonconverged.append(seed)
        if out is not None:
            _write_csv(out / f"metrics_seed{seed}.csv", NODE_COLUMNS, rows)
            (out / f"summary_seed{seed}.txt").write_text(summary_text(result, metrics))
            if trace:
                (out / f"trace_seed{seed}.tsv").write_text("\n".join(result.trace) + "\n")
        if on_result is not None:
            on_result(result)
    batch.aggregate = aggregate([batch.metrics[s] for s in scenario.seeds])
    if out is not None:
        _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, batch.aggregate)
    return batch


def aggregate_dir(out_dir: str | Path) -> list[dict]:
    """Recompute the aggregate table from the per-seed summary files alone."""
    per_seed = []
    for path in sorted(Path(out_dir).glob("summary_seed*.txt"), key=lambda p: int(p.stem[len("summary_seed"):])):
        per_seed.append(parse_summary(path.read_text())[1])
    return aggregate(per_seed)


def parse_sweep(text: str) -> tuple[str, list]:
    """``param=v1,v2,...`` -> (scenario field, values)."""
    if "=" not in text:
        raise ScenarioError(f"sweep must look like param=v1,v2,...; got {text!r}")
    name, raw = text.split("=", 1)
    name = name.strip()
    if name not in SWEEPABLE:
        raise ScenarioError(f"cannot sweep {name!r}; choose one of bo, scan_duration, sbp_size_bytes")
    values = []
    for v in raw.split(","):
        v = v.strip()
        if not v:
            continue
        if v == "auto" and SWEEPABLE[name] == "scan_duration":
            values.append(v)
            continue
        try:
            values.append(int(v))
        except ValueError:
            raise ScenarioError(f"sweep {name}: {v!r} is not an integer") from None
    if not values:
        raise ScenarioError(f"sweep {name}: no values given")
    return SWEEPABLE[name], values


@dataclass
class SweepResult:
    param: str
    batches: dict = field(default_factory=dict)
    long_rows: list[dict] = field(default_factory=list)
    aggregate_rows: list[dict] = field(default_factory=list)


def sweep(scenario: Scenario, param: str, values, out_dir: str | Path | None = None,
          on_result=None) -> SweepResult:
    param = SWEEPABLE.get(param, param)
    if param not in SWEEPABLE.values():
        raise ScenarioError(f"cannot sweep {param!r}")
    variants = []
    for value in values:
        try:
            variants.append((value, scenario.with_(**{param: value}).validate()))
        except (ScenarioError, ValueError) as exc:
            raise ScenarioError(f"sweep {param}={value}: {exc}") from None
    res = SweepResult(param)
    for value, variant in variants:
        batch = Batch(variant)
        for seed in variant.seeds:
            try:
                result = simulate(variant, seed)
                metrics = run_metrics(result)
            except Exception as exc:
                raise SweepError(f"run failed at {param}={value}, seed={seed}: {exc}") from exc
            batch.metrics[seed] = metrics
            if not result.converged:
                batch.nonconverged.append(seed)
            if on_result is not None:
                on_result(result)
            for metric, v in metrics.items():
                res.long_rows.append({"param": param, "value": value, "seed": seed, "metric": metric, "result": v})
        batch.aggregate = aggregate([batch.metrics[s] for s in sorted(batch.metrics)])
        for row in batch.aggregate:
            res.aggregate_rows.append({"param": param, "value": value, **row})
        res.batches[value] = batch
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / f"sweep_{param}.csv", SWEEP_COLUMNS, res.long_rows)
        _write_csv(out / f"sweep_{param}_aggregate.csv", SWEEP_AGGREGATE_COLUMNS, res.aggregate_rows)
    return res
