"""Trickle interval chain, DIO-in-beacon delay formulas and a Monte Carlo oracle.

A Trickle timer is modelled as a chain over doubling indices ``0..Imax``:
each interval is reset to ``Imin`` with probability ``p`` and otherwise
doubles (capped).  The DIO fires at ``X ~ U[I/2, I)`` after the interval
start, which is aligned with a beacon, and waits ``D = BI - (X mod BI)``
for the next beacon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrickleChainParams:
    p: float
    imax: int
    imin: float
    bi: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.imax < 0:
            raise ValueError("Imax must be >= 0")
        if self.imin < 1 or self.bi < 1:
            raise ValueError("Imin and BI must be >= 1 tick")

    def intervals(self) -> np.ndarray:
        return self.imin * np.exp2(np.arange(self.imax + 1))


def stationary(params: TrickleChainParams) -> np.ndarray:
    """Geometric law with an absorbing top state."""
    p, imax = params.p, params.imax
    i = np.arange(imax + 1)
    probs = (1.0 - p) ** i * p
    probs[imax] = (1.0 - p) ** imax
    return probs


def delay_sample(x, bi):
    """Wait from a DIO fire at offset ``x`` to the next beacon; lies in (0, BI]."""
    return bi - np.mod(x, bi)


def expected_delay_at_imin(imin: float, bi: float) -> float:
    """Mean delay right after a reset; only valid while one interval fits in a BI."""
    if imin > bi:
        raise ValueError(f"precondition violated: Imin ({imin}) > BI ({bi})")
    return bi - 0.75 * imin


def expected_quotient(interval: float, bi: float) -> float:
    """E[floor(X / BI)] for X uniform on [I/2, I), summed exactly over quotient bands."""
    lo, hi = interval / 2.0, float(interval)
    width = hi - lo
    if width <= 0:
        return math.floor(lo / bi)
    total = 0.0
    for m in range(math.floor(lo / bi), math.ceil(hi / bi)):
        a, b = max(lo, m * bi), min(hi, (m + 1) * bi)
        if b > a:
            total += m * (b - a)
    return total / width


def expected_delay_general(params: TrickleChainParams) -> float:
    probs = stationary(params)
    intervals = params.intervals()
    ex = float(np.dot(probs, 0.75 * intervals))
    eq = sum(float(w) * expected_quotient(float(i), params.bi) for w, i in zip(probs, intervals) if w > 0)
    return params.bi - ex + params.bi * eq


def chain_states(params: TrickleChainParams, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Doubling index of ``steps`` consecutive intervals, started in the stationary law.

    The chain begins in state 0 and runs ``Imax`` burn-in steps; the state
    after them is exactly stationary because it only depends on the time
    since the last reset, capped at ``Imax``.
    """
    imax = params.imax
    total = steps + imax
    resets = rng.random(total) < params.p
    resets[0] = True
    idx = np.arange(total)
    last = np.maximum.accumulate(np.where(resets, idx, 0))
    return np.minimum(idx - last, imax)[imax:]


def occupancy(params: TrickleChainParams, steps: int, seed: int = 0) -> np.ndarray:
    """Fraction of ``steps`` intervals spent in each doubling index."""
    states = chain_states(params, steps, np.random.default_rng(seed))
    return np.bincount(states, minlength=params.imax + 1) / steps


@dataclass(frozen=True)
class MonteCarloResult:
    mean: float
    analytic: float
    rel_error: float
    samples: int


def monte_carlo_delay(params: TrickleChainParams, samples: int, seed: int = 0) -> MonteCarloResult:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = chain_states(params, samples, rng)
    interval = params.imin * np.exp2(n)
    x = rng.uniform(interval / 2.0, interval)
    mean = float(np.mean(delay_sample(x, params.bi)))
    analytic = expected_delay_general(params)
    return MonteCarloResult(mean, analytic, abs(mean - analytic) / analytic, samples)


ANALYZE_COLUMNS = ("p", "Imax", "Imin", "BI", "E[D]_analytic", "E[D]_mc", "rel_err")


def analyze_table(ps, imaxes, imins, bi: float, samples: int, seed: int = 0) -> list[dict]:
    rows = []
    for p in ps:
        for imax in imaxes:
            for imin in imins:
                params = TrickleChainParams(float(p), int(imax), float(imin), float(bi))
                mc = monte_carlo_delay(params, samples, seed)
                rows.append(dict(zip(ANALYZE_COLUMNS, (p, imax, imin, bi, mc.analytic, mc.mean, mc.rel_error))))
    return rows
