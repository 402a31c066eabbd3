"""Acceptance checks shared by ``beaconrpl validate`` and the test suite.

Every check runs at its full stated size and tolerance and returns a
``CriterionResult``; nothing here is relaxed for speed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

from .analysis import TrickleChainParams, expected_delay_at_imin, monte_carlo_delay, occupancy, stationary
from .harness import ci95, run_metrics, sweep
from .engine import TICKS_PER_BYTE
from .mac154 import BEACON_REQUEST, MAX_MAC_FRAME
from .scenario import STEADY_6_MIN, default_scenario, star_scenario
from .simulation import RunResult, simulate


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    measured: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] C{self.number} {self.name}: {self.detail}"


@dataclass
class FrameAudit:
    """Frame-size bookkeeping over every run it is shown."""

    runs: int = 0
    frames: int = 0
    oversized: int = 0
    beacon_requests: int = 0
    bad_beacon_requests: int = 0
    largest: int = 0

    def __call__(self, result: RunResult) -> None:
        self.runs += 1
        for f in result.ledger.tx_frames:
            self.frames += 1
            self.largest = max(self.largest, f.mac_bytes)
            if f.mac_bytes > MAX_MAC_FRAME:
                self.oversized += 1
            if f.kind == BEACON_REQUEST:
                self.beacon_requests += 1
                if f.mac_bytes != 8:
                    self.bad_beacon_requests += 1


def _noop(result) -> None:
    pass


def _overlap(a, b) -> bool:
    return a[1] is not None and b[1] is not None and a[1] <= b[2] and b[1] <= a[2]


def _fmt_ci(c) -> str:
    if c[1] is None:
        return f"{c[0]:.6g}"
    return f"{c[0]:.6g} [{c[1]:.6g}, {c[2]:.6g}]"


# -- analytical model ----------------------------------------------------------

def c1_delay_at_reset(audit=None) -> CriterionResult:
    sf = default_scenario().superframe()
    imin = sf.bi // 2
    start = time.perf_counter()
    mc = monte_carlo_delay(TrickleChainParams(1.0, 8, imin, sf.bi), 5000, seed=1)
    elapsed = time.perf_counter() - start
    analytic = expected_delay_at_imin(imin, sf.bi)
    err = abs(mc.mean - analytic) / analytic
    ok = err <= 0.03 and elapsed < 1.0
    return CriterionResult(1, "reset-state delay vs closed form", ok,
                           f"mc={mc.mean:.1f} analytic={analytic:.1f} rel_err={err:.4%} (<=3%) runtime={elapsed:.3f}s (<1s)",
                           {"rel_err": err, "runtime_s": elapsed})


def c3_stationary_occupancy(audit=None) -> CriterionResult:
    start = time.perf_counter()
    worst = 0.0
    for i, p in enumerate((0.1, 0.5)):
        params = TrickleChainParams(p, 4, 1, 1)
        occ = occupancy(params, 10 ** 5, seed=i + 1)
        worst = max(worst, float(abs(occ - stationary(params)).max()))
    elapsed = time.perf_counter() - start
    ok = worst <= 0.01 and elapsed < 1.0
    return CriterionResult(3, "chain occupancy vs geometric law", ok,
                           f"max |occupancy - law| = {worst:.4f} (<=0.01) runtime={elapsed:.3f}s (<1s)",
                           {"max_abs_err": worst, "runtime_s": elapsed})


# -- simulator ----------------------------------------------------------------

def c2_solicited_delay(audit=None) -> CriterionResult:
    audit = audit or _noop
    sc = default_scenario()
    sf = sc.superframe()
    delays: list[int] = []
    for seed in range(1, 51):
        result = simulate(sc, seed)
        audit(result)
        delays.extend(result.ledger.solicited_dio_delays())
    analytic = expected_delay_at_imin(sf.bi - sf.sd, sf.bi)
    mean = sum(delays) / len(delays) if delays else float("nan")
    err = abs(mean - analytic) / analytic if delays else float("inf")
    ok = len(delays) >= 5000 and err <= 0.03
    return CriterionResult(2, "solicited DIO delay in simulation", ok,
                           f"events={len(delays)} (>=5000) mean={mean:.1f} analytic={analytic:.1f} rel_err={err:.4%} (<=3%)",
                           {"events": len(delays), "rel_err": err})


def solicitation_scenario(**overrides):
    """Small chain with staggered arrivals, cheap enough for a thousand runs."""
    base = dict(leaves_per_hop=2, boot_jitter_bi=20.0)
    base.update(overrides)
    return default_scenario(**base)


def c4_solicitation_guarantee(audit=None, runs: int = 1000, broken_runs: int = 100) -> CriterionResult:
    audit = audit or _noop
    sc = solicitation_scenario()
    outcomes: list[bool] = []
    for seed in range(1, runs + 1):
        result = simulate(sc, seed)
        audit(result)
        outcomes.extend(result.ledger.solicitation_outcomes())
    bad = solicitation_scenario(imin=2 * sc.superframe().bi)
    broken: list[bool] = []
    for seed in range(1, broken_runs + 1):
        result = simulate(bad, seed)
        audit(result)
        broken.extend(result.ledger.solicitation_outcomes())
    rate = sum(outcomes) / len(outcomes) if outcomes else 0.0
    bad_rate = sum(broken) / len(broken) if broken else 1.0
    ok = bool(outcomes) and rate == 1.0 and bool(broken) and bad_rate < 1.0
    return CriterionResult(4, "solicitation guarantee", ok,
                           f"auto: {sum(outcomes)}/{len(outcomes)} solicited beacons carried a DIO; "
                           f"Imin=2BI: {sum(broken)}/{len(broken)} ({bad_rate:.1%}, must be <100%)",
                           {"auto_rate": rate, "auto_events": len(outcomes), "bad_rate": bad_rate})


def c5_convergence_parity(audit=None) -> CriterionResult:
    audit = audit or _noop
    start = time.perf_counter()
    sc = default_scenario(sbp_size_bytes=default_scenario().dio_size_bytes // 3)
    bos = [3, 4, 5, 6, 7]
    prop = sweep(sc.with_(scheme="proposed"), "bo", bos, on_result=audit)
    sbp = sweep(sc.with_(scheme="sbp"), "bo", bos, on_result=audit)
    elapsed = time.perf_counter() - start
    parts, ok = [], True
    for bo in bos:
        a, b = prop.batches[bo].ci("convergence_ticks"), sbp.batches[bo].ci("convergence_ticks")
        conv = prop.batches[bo].all_converged and sbp.batches[bo].all_converged
        overlap = conv and _overlap(a, b)
        ok &= overlap
        parts.append(f"BO={bo} {'overlap' if overlap else 'DISJOINT'}")
    ok &= elapsed < 60.0
    return CriterionResult(5, "convergence-time parity across BO", ok,
                           f"{'; '.join(parts)}; runtime={elapsed:.1f}s (<60s)", {"runtime_s": elapsed})


def c6_overhead_crossover(audit=None) -> CriterionResult:
    audit = audit or _noop
    sc = default_scenario()
    dio = sc.dio_size_bytes
    sizes = [dio // 6, dio // 3, dio // 2, dio]
    prop = sweep(sc.with_(scheme="proposed"), "sbp_size_bytes", [dio // 3], on_result=audit)
    p_ci = prop.batches[dio // 3].ci("overhead_bytes")
    sbp = sweep(sc.with_(scheme="sbp"), "sbp_size_bytes", sizes, on_result=audit)
    ok, parts = True, [f"proposed={_fmt_ci(p_ci)}"]
    for size in sizes:
        s_ci = sbp.batches[size].ci("overhead_bytes")
        if size < dio // 3:
            good = p_ci[0] > s_ci[0]
        elif size > dio // 3:
            good = p_ci[0] < s_ci[0]
        else:
            good = _overlap(p_ci, s_ci)
        ok &= good
        parts.append(f"sbp{size}={_fmt_ci(s_ci)} {'ok' if good else 'WRONG'}")
    return CriterionResult(6, "overhead crossover near dio/3", ok, "; ".join(parts))


def c7_unknown_bo_tx(audit=None) -> CriterionResult:
    audit = audit or _noop
    base = default_scenario()
    sc = base.with_(scan_duration=4 * base.superframe().bi, sbp_size_bytes=base.dio_size_bytes // 3)
    metric = "tx_J_construction_ffd_hop1"
    means = {}
    for scheme in ("proposed", "sbp"):
        vals = []
        for seed in sc.seeds:
            result = simulate(sc.with_(scheme=scheme), seed)
            audit(result)
            vals.append(run_metrics(result)[metric])
        means[scheme] = ci95(vals)
    ok = means["proposed"][0] < means["sbp"][0]
    return CriterionResult(7, "hop-1 coordinator TX energy with a 4*BI scan", ok,
                           f"proposed={_fmt_ci(means['proposed'])} J sbp={_fmt_ci(means['sbp'])} J")


@lru_cache(maxsize=1)
def _steady_runs(seeds: tuple[int, ...]):
    """Per scheme and seed: steady-window energies, radio-on fractions and the duty bound."""
    base = default_scenario(steady_ticks=STEADY_6_MIN)
    sbp_size = base.dio_size_bytes // 3
    out = {}
    for scheme in ("proposed", "sbp"):
        sc = base.with_(scheme=scheme, sbp_size_bytes=sbp_size)
        sf = sc.superframe()
        model = sc.energy_model()
        per_seed = {}
        for seed in seeds:
            result = simulate(sc, seed)
            FrameAuditRegistry.feed(result)
            win = result.steady_window
            led = result.ledger
            info = {"converged": result.converged, "tx": {}, "rx": {}, "on": {}, "bound": {}}
            if win is not None:
                longest = max((f.phy_bytes * 2 for f in led.tx_frames if f.kind == "beacon"), default=0)
                for n, node in result.nodes.items():
                    info["tx"][n] = led.energy(n, "tx", model, win)
                    info["rx"][n] = led.energy(n, "rx", model, win)
                    if node.mac.is_coordinator:
                        on = led.ticks(n, "tx", win) + led.ticks(n, "rx", win)
                        info["on"][n] = on / (win[1] - win[0])
                        parent_cap = 0 if node.spec.role == "pan" else sf.sd + sc.wake_guard
                        info["bound"][n] = float(sf.duty_bound) + (longest + parent_cap) / sf.bi
            info["roles"] = {n: node.spec.role for n, node in result.nodes.items()}
            per_seed[seed] = info
        out[scheme] = per_seed
    return out


class FrameAuditRegistry:
    """Lets cached steady-state runs report to whichever audit is active."""

    current = None

    @classmethod
    def feed(cls, result) -> None:
        if cls.current is not None:
            cls.current(result)


def _steady(audit):
    FrameAuditRegistry.current = audit
    try:
        return _steady_runs(tuple(default_scenario().seeds))
    finally:
        FrameAuditRegistry.current = None


def c8_steady_state_energy(audit=None) -> CriterionResult:
    runs = _steady(audit)
    converged = True
    worst_rx = 0.0
    ffd_pairs = ffd_wins = rfd_nonzero = 0
    for seed, p in runs["proposed"].items():
        s = runs["sbp"][seed]
        if not (p["converged"] and s["converged"]):
            converged = False
            continue
        for n, role in p["roles"].items():
            if role == "ffd":
                ffd_pairs += 1
                ffd_wins += p["tx"][n] < s["tx"][n]
                worst_rx = max(worst_rx, abs(p["rx"][n] - s["rx"][n]) / s["rx"][n])
            elif role == "rfd" and (p["tx"][n] != 0.0 or s["tx"][n] != 0.0):
                rfd_nonzero += 1
    ok = converged and ffd_pairs > 0 and ffd_wins == ffd_pairs and rfd_nonzero == 0 and worst_rx <= 0.02
    return CriterionResult(8, "steady-state energy over 6 minutes", ok,
                           f"FFD tx proposed<sbp in {ffd_wins}/{ffd_pairs} (seed, FFD) pairs; "
                           f"RFDs with tx>0: {rfd_nonzero}; worst FFD rx mismatch {worst_rx:.3%} (<=2%)")


def c10_duty_cycle(audit=None) -> CriterionResult:
    runs = _steady(audit)
    checked = violations = 0
    worst = -1.0
    for scheme, per_seed in runs.items():
        for seed, info in per_seed.items():
            for n, on in info["on"].items():
                checked += 1
                worst = max(worst, on - info["bound"][n])
                if on > info["bound"][n]:
                    violations += 1
    ok = checked > 0 and violations == 0
    return CriterionResult(10, "coordinator duty-cycle bound", ok,
                           f"{checked} (coordinator, seed, scheme) checks, {violations} violations; "
                           f"largest on-fraction minus bound {worst:+.5f}")


def c11_scan_energy(audit=None, seeds=range(1, 6)) -> CriterionResult:
    audit = audit or _noop
    parts, ok = [], True
    skipped = 0
    for n in (1, 2, 3):
        for seed in seeds:
            sc = star_scenario(n)
            result = simulate(sc, seed)
            audit(result)
            bi = sc.superframe().bi
            boot = result.boot[99]
            entry = result.nodes[99].mac.discovered
            wakes = sum(1 for e in entry.values() if e.solicited)
            if wakes != n:
                skipped += 1  # a first beacon already carried a DIO: no wake needed for it
                continue
            model = sc.energy_model()
            measured = result.ledger.energy(99, "rx", model, (boot + bi, boot + 2 * bi))
            # T: on-air time of the DIO beacons this run actually sent
            dio_beacon = sc.empty_beacon_bytes + sc.dio_size_bytes
            t_ticks = max(f.phy_bytes for f in result.ledger.tx_frames
                          if f.kind == "beacon" and f.mac_bytes == dio_beacon) * TICKS_PER_BYTE
            expected = n * t_ticks * 16e-6 * model.i_rx * model.v
            err = abs(measured - expected) / expected
            ok &= err <= 0.05
            parts.append(f"n={n} seed={seed}: {measured * 1e6:.1f}uJ vs {expected * 1e6:.1f}uJ ({err:.2%})")
    ok &= len(parts) > 0
    detail = "; ".join(parts[:: max(1, len(parts) // 3)])
    return CriterionResult(11, "second-BI scan energy n*T*I_rx*V", ok,
                           f"{len(parts)} runs within 5%: {ok}; e.g. {detail}; skipped lucky runs: {skipped}")


def c12_determinism(audit=None) -> CriterionResult:
    import tempfile
    from pathlib import Path

    from .harness import run_scenario

    sc = default_scenario(seeds=[7])
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a"), Path(tmp, "b")
        run_scenario(sc, a, trace=True, on_result=audit)
        run_scenario(sc, b, trace=True)
        names = sorted(p.name for p in a.iterdir())
        same = names == sorted(p.name for p in b.iterdir()) and all(
            (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    return CriterionResult(12, "byte-identical reruns", same, f"{len(names)} files compared: {'identical' if same else 'DIFFER'}")


def c9_frame_sizes(audit: FrameAudit | None = None) -> CriterionResult:
    if audit is None or audit.runs == 0:
        audit = FrameAudit()
        base = default_scenario(sbp_size_bytes=default_scenario().dio_size_bytes)
        for scheme in ("proposed", "sbp"):
            for bo in (3, 7):
                for seed in (1, 2):
                    audit(simulate(base.with_(scheme=scheme, bo=bo), seed))
    ok = audit.oversized == 0 and audit.bad_beacon_requests == 0 and audit.beacon_requests > 0
    return CriterionResult(9, "frame-size invariant", ok,
                           f"{audit.frames} frames over {audit.runs} runs, largest {audit.largest}B, "
                           f"{audit.oversized} over 127B; {audit.beacon_requests} beacon-requests, "
                           f"{audit.bad_beacon_requests} not 8B")


CRITERIA = {
    1: c1_delay_at_reset,
    2: c2_solicited_delay,
    3: c3_stationary_occupancy,
    4: c4_solicitation_guarantee,
    5: c5_convergence_parity,
    6: c6_overhead_crossover,
    7: c7_unknown_bo_tx,
    8: c8_steady_state_energy,
    10: c10_duty_cycle,
    11: c11_scan_energy,
    12: c12_determinism,
    9: c9_frame_sizes,  # last: audits the frames of every run above
}


def run_all(numbers=None, report=print) -> list[CriterionResult]:
    audit = FrameAudit()
    results = []
    for number, check in CRITERIA.items():
        if numbers is not None and number not in numbers:
            continue
        res = check(audit)
        report(res.line())
        results.append(res)
    return results
