"""Pliss times, hyperbolic times and the statistics built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import Orbit, RandomSystem, iterate, iterate_many
from .sampling import sample_base_and_point


class PreconditionError(ValueError):
    """Input outside the range where the stated conclusion is guaranteed."""


class InsufficientDataError(ValueError):
    pass


def pliss_times(a: Sequence[float], c1: float, c2: float, A: float) -> np.ndarray:
    """All indices ``m`` in ``1..N0`` with ``sum(a[n+1..m]) >= c1 (m - n)`` for every ``n < m``.

    With ``U_m = sum(a[1..m]) - c1 m`` the condition says ``U_m`` is a (weak)
    running maximum, so one pass suffices.
    """
    a = np.asarray(a, dtype=float)
    n0 = len(a)
    if n0 == 0:
        raise PreconditionError("empty sequence")
    if not 0 < c1:
        raise PreconditionError(f"need 0 < c1, got c1={c1}")
    if not c1 < c2:
        raise PreconditionError(f"need c1 < c2, got c1={c1}, c2={c2}")
    if not c2 < A:
        raise PreconditionError(f"need c2 < A, got c2={c2}, A={A}")
    if np.any(a > A):
        raise PreconditionError(f"need a_j <= A; max a_j = {a.max()} > A = {A}")
    if a.sum() < c2 * n0:
        raise PreconditionError(f"need sum a_j >= c2 N0; {a.sum()} < {c2 * n0}")
    u = np.concatenate(([0.0], np.cumsum(a))) - c1 * np.arange(n0 + 1)
    best = np.maximum.accumulate(u)
    m = np.arange(1, n0 + 1)
    return m[u[1:] >= best[:-1]]


def pliss_fraction(c1: float, c2: float, A: float) -> float:
    """The density ``(c2 - c1) / (A - c1)`` guaranteed by the Pliss lemma."""
    return (c2 - c1) / (A - c1)


@dataclass(frozen=True)
class HyperbolicTimeRecord:
    c: float
    times: np.ndarray
    horizon: int

    @property
    def density_at_horizon(self) -> float:
        return len(self.times) / self.horizon if self.horizon else 0.0

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def first_time(self) -> int | None:
        return int(self.times[0]) if len(self.times) else None


def hyperbolic_times_from_logs(log_contractions: Sequence[float], c: float) -> np.ndarray:
    """Times ``n`` whose trailing windows all satisfy ``sum <= -c k``.

    ``n`` qualifies iff ``S_n + c n <= min_{m<n} (S_m + c m)`` where ``S`` are
    prefix sums; ties count.
    """
    logs = np.asarray(log_contractions, dtype=float)
    t = np.concatenate(([0.0], np.cumsum(logs))) + c * np.arange(len(logs) + 1)
    prev_min = np.minimum.accumulate(t)[:-1]
    n = np.arange(1, len(logs) + 1)
    return n[t[1:] <= prev_min]


def hyperbolic_times(orbit: Orbit, c: float) -> HyperbolicTimeRecord:
    if orbit.length < 1:
        raise ValueError("orbit must have at least one step")
    if c <= 0:
        raise ValueError("c must be positive")
    return HyperbolicTimeRecord(float(c), hyperbolic_times_from_logs(orbit.log_contractions, c), orbit.length)


def expansion_exponent(orbit: Orbit) -> tuple[np.ndarray, float]:
    """Running Birkhoff averages of log L and their final value."""
    if orbit.length < 1:
        raise ValueError("orbit must have at least one step")
    avg = np.cumsum(orbit.log_contractions) / np.arange(1, orbit.length + 1)
    return avg, float(avg[-1])


def density_of_times(record: HyperbolicTimeRecord, n: int) -> float:
    if not 1 <= n <= record.horizon:
        raise ValueError(f"n must lie in [1, {record.horizon}]")
    return int(np.searchsorted(record.times, n, side="right")) / n


@dataclass(frozen=True)
class NonlacunarityReport:
    ratios: np.ndarray
    tail_max: float
    tail_fraction: float


def nonlacunarity(
    record: HyperbolicTimeRecord,
    gamma: Callable[[np.ndarray], np.ndarray] | None = None,
    tail_fraction: float = 0.5,
) -> NonlacunarityReport:
    """Gap ratios ``(n_{i+1} - n_i) / gamma(n_i)``; gamma defaults to the identity."""
    times = record.times
    if len(times) < 2:
        raise InsufficientDataError("need at least two hyperbolic times")
    base = times[:-1].astype(float)
    denom = base if gamma is None else np.asarray(gamma(base), dtype=float)
    ratios = np.diff(times) / denom
    start = min(int(len(ratios) * (1 - tail_fraction)), len(ratios) - 1)
    return NonlacunarityReport(ratios, float(ratios[start:].max()), tail_fraction)


# -- Monte Carlo ----------------------------------------------------------


@dataclass(frozen=True)
class FirstTimeStats:
    horizon: int
    first_times: np.ndarray  # 0 marks "censored at horizon"
    histogram: dict[int, int]
    censored: int
    mean: float
    tail: np.ndarray  # tail[n] = P(n1 > n), n = 0..horizon


def _first_time_for_sample(args) -> int:
    sys, seed, index, horizon, c = args
    base, pos, x = sample_base_and_point(sys, seed, index)
    orbit = iterate(sys.replace(base=base), pos, x, horizon)
    times = hyperbolic_times_from_logs(orbit.log_contractions, c)
    return int(times[0]) if len(times) else 0


def first_time_stats(
    sys: RandomSystem, sample_size: int, horizon: int, c: float | None = None, *, seed: int | None = None, pool=None
) -> FirstTimeStats:
    """Empirical law of the first hyperbolic time over Lebesgue x and Bernoulli w."""
    if sample_size < 1:
        raise ValueError("sample_size must be at least 1")
    c = sys.c if c is None else c
    seed = sys.base.master_seed if seed is None else seed
    tasks = [(sys, seed, i, horizon, c) for i in range(sample_size)]
    mapper = map if pool is None else pool.map
    firsts = np.array(list(mapper(_first_time_for_sample, tasks)), dtype=np.int64)
    uncensored = firsts[firsts > 0]
    hist: dict[int, int] = {}
    for v in uncensored:
        hist[int(v)] = hist.get(int(v), 0) + 1
    censored = int(np.sum(firsts == 0))
    eff = np.where(firsts == 0, horizon + 1, firsts)
    tail = np.array([(eff > n).mean() for n in range(horizon + 1)])
    mean = float(uncensored.mean()) if len(uncensored) else math.nan
    return FirstTimeStats(horizon, firsts, dict(sorted(hist.items())), censored, mean, tail)


# -- itinerary counting ---------------------------------------------------


@dataclass(frozen=True)
class ItineraryCount:
    n: int
    rho: float
    count_strict: int  # more than rho*n good positions (the I(rho, n) definition)
    count_geq: int  # at least rho*n good positions
    rate_strict: float
    binomial_bound: int
    entropy_bound: float
    q_hat: int
    p_hat: int
    k: int


def itinerary_count(sys: RandomSystem, rho: float, n: int, w_position: int = 0, k: int | None = None) -> ItineraryCount:
    """Size of ``I(rho, n)`` for the base word starting at ``w_position``.

    Itineraries are words in ``{1..k}^n`` (``k`` defaults to deg F); position
    ``j`` is good when its letter is at most ``q`` of the fiber used at step
    ``j``.  The count is exact (generating polynomial in the number of good
    positions).  Two upper bounds are reported: the binomial sum
    ``sum_{m > rho n} C(n, m) q_hat^m p_hat^(n-m)`` and its entropy form
    ``exp(n H(rho)) q_hat^n p_hat^((1-rho) n)`` (valid for rho >= 1/2).
    """
    if n < 1:
        raise ValueError("n must be positive")
    k = sys.degree if k is None else int(k)
    qs = [sys.fibers[s].q for s in sys.base.symbols(w_position, n)]
    if any(q > k for q in qs):
        raise ValueError("q exceeds the partition size k")
    # poly[m] = number of words with exactly m good positions
    poly = [1]
    for q in qs:
        nxt = [0] * (len(poly) + 1)
        for m, v in enumerate(poly):
            nxt[m] += v * (k - q)
            nxt[m + 1] += v * q
        poly = nxt
    thresh = rho * n
    strict = sum(v for m, v in enumerate(poly) if m > thresh)
    geq = sum(v for m, v in enumerate(poly) if m >= thresh)
    q_hat = max(sys.fibers[s].q for s in range(len(sys.fibers)))
    p_hat = k - min(sys.fibers[s].q for s in range(len(sys.fibers)))
    binom = sum(math.comb(n, m) * q_hat**m * p_hat ** (n - m) for m in range(n + 1) if m > thresh)
    if 0 < rho < 1:
        h = -rho * math.log(rho) - (1 - rho) * math.log(1 - rho)
    else:
        h = 0.0
    entropy = math.exp(n * h) * float(q_hat) ** n * float(p_hat) ** ((1 - rho) * n)
    rate = math.log(strict) / n if strict > 0 else -math.inf
    return ItineraryCount(n, rho, strict, geq, rate, binom, entropy, q_hat, p_hat, k)


def enumerate_itineraries(sys: RandomSystem, rho: float, n: int, w_position: int = 0, k: int | None = None) -> tuple[int, int]:
    """Brute-force ``(#strict, #geq)`` over all ``k^n`` words; small n only."""
    from itertools import product

    k = sys.degree if k is None else int(k)
    qs = [sys.fibers[s].q for s in sys.base.symbols(w_position, n)]
    strict = geq = 0
    for word in product(range(1, k + 1), repeat=n):
        good = sum(1 for letter, q in zip(word, qs) if letter <= q)
        strict += good > rho * n
        geq += good >= rho * n
    return strict, geq


# -- bad set ----------------------------------------------------------------


def bad_set_measure(
    sys: RandomSystem, rho: float, n_max: int, grid_size: int = 10_000, w_position: int = 0
) -> np.ndarray:
    """Grid estimate of Leb(B_w(n)) for ``n = 1..n_max``.

    ``B_w(n)`` holds the points whose visits to the contracting regions
    ``A_{theta^j w}``, ``j < n``, have frequency at least ``rho``.
    """
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    xs = (np.arange(grid_size) + 0.5) / grid_size
    orbits = iterate_many(sys, w_position, xs, n_max)
    syms = sys.base.symbols(w_position, n_max)
    visits = np.zeros(grid_size, dtype=np.int64)
    out = np.empty(n_max)
    for j in range(n_max):
        visits += sys.fibers[syms[j]].region_mask(orbits[j])
        n = j + 1
        out[j] = np.count_nonzero(visits >= rho * n) / grid_size
    return out


def log_slope(ns: np.ndarray, values: np.ndarray, floor: float) -> float:
    """Least-squares slope of ``log(max(values, floor))`` against ``ns``."""
    y = np.log(np.maximum(np.asarray(values, dtype=float), floor))
    return float(np.polyfit(np.asarray(ns, dtype=float), y, 1)[0])
