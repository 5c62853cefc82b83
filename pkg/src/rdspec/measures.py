"""Atomic measures on the circle, W1, Birkhoff sums and the averaging constructions.

Weak* closeness is measured by the Wasserstein-1 distance on the circle for
fiber measures, and by an invariance defect over a fixed test family
(Fourier modes on the fiber times cylinder indicators on the base) for
measures on the skew product.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dynamics import Orbit, RandomSystem, iterate_exact
from .returns import FIXPOINT_TOL, DEFAULT_DELTA, ReturnPointError, ReturnPointResult, find_return_point
from .sampling import substream
from .transfer import GridMeasure

NORMALIZATION_TOL = 1e-12


class MeasureError(ValueError):
    pass


class BoundViolation(AssertionError):
    """A bound that the construction guarantees did not hold."""


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely many weighted atoms on the circle.

    ``exact`` optionally carries rational positions (same order as given).
    Pushforwards use them when present; float positions are dyadic rationals,
    which the doubling map sends to 0 within about 53 steps.
    """

    positions: np.ndarray
    weights: np.ndarray
    exact: tuple | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(pos) != len(w):
            raise MeasureError("positions and weights differ in length")
        if len(pos) == 0:
            raise MeasureError("an atomic measure needs at least one atom")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise MeasureError("weights must be positive and finite")
        if np.any(pos < 0) or np.any(pos >= 1):
            raise MeasureError("positions must lie in [0, 1)")
        order = np.argsort(pos, kind="stable")
        object.__setattr__(self, "positions", pos[order])
        object.__setattr__(self, "weights", w[order])
        if self.exact is not None:
            if len(self.exact) != len(pos):
                raise MeasureError("exact positions differ in length")
            ex = [Fraction(self.exact[i]) for i in order]
            object.__setattr__(self, "exact", tuple(ex))

    @property
    def normalized(self) -> bool:
        return abs(float(self.weights.sum()) - 1.0) <= NORMALIZATION_TOL

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def dirac(cls, x: float) -> "AtomicMeasure":
        return cls([float(x) % 1.0], [1.0])

    @classmethod
    def uniform(cls, positions: Sequence[float]) -> "AtomicMeasure":
        pos = np.asarray(positions, dtype=float) % 1.0
        return cls(pos, np.full(len(pos), 1.0 / len(pos)))

    @classmethod
    def uniform_grid(cls, G: int) -> "AtomicMeasure":
        """Equal atoms at the exact cell centers ``(2i + 1) / (2G)``."""
        ex = [Fraction(2 * i + 1, 2 * G) for i in range(G)]
        return cls([float(e) for e in ex], np.full(G, 1.0 / G), tuple(ex))

    @classmethod
    def from_grid(cls, grid: GridMeasure) -> "AtomicMeasure":
        """Cell masses placed at the cell centers (zero cells dropped)."""
        G = grid.resolution
        keep = grid.masses > 0
        return cls(((np.arange(G) + 0.5) / G)[keep], grid.masses[keep])

    def normalize(self) -> "AtomicMeasure":
        return AtomicMeasure(self.positions, self.weights / self.weights.sum(), self.exact)

    def merged(self) -> "AtomicMeasure":
        pos, inv = np.unique(self.positions, return_inverse=True)
        w = np.zeros(len(pos))
        np.add.at(w, inv, self.weights)
        return AtomicMeasure(pos, w)

    def integrate(self, obs: "Observable") -> float:
        return math.fsum(self.weights * obs(self.positions))

    def to_grid(self, G: int) -> GridMeasure:
        """Mass moved to the containing cell; moves each atom by at most 1/(2G)."""
        m = np.zeros(G)
        idx = np.minimum((self.positions * G).astype(np.int64), G - 1)
        np.add.at(m, idx, self.weights)
        return GridMeasure(m)

    def to_dict(self) -> dict:
        return {"positions": self.positions.tolist(), "weights": self.weights.tolist()}


# -- observables ----------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """Closed-form test function on the circle.

    ``kind`` is one of ``constant``, ``cos``, ``sin`` (with ``mode`` m, meaning
    cos(2 pi m x) or sin(2 pi m x)) or ``table`` (periodic piecewise-linear
    through ``knots``/``values``).
    """

    kind: str
    value: float = 0.0
    mode: int = 1
    knots: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "cos", "sin", "table"):
            raise MeasureError(f"unknown observable kind {self.kind!r}")
        if self.kind == "table":
            if len(self.knots) < 1 or len(self.knots) != len(self.values):
                raise MeasureError("table observable needs matching knots and values")
            k = np.asarray(self.knots, dtype=float)
            if np.any(np.diff(k) <= 0) or k[0] < 0 or k[-1] >= 1:
                raise MeasureError("table knots must increase within [0, 1)")

    @classmethod
    def constant(cls, c: float) -> "Observable":
        return cls("constant", value=float(c))

    @classmethod
    def cos(cls, m: int = 1) -> "Observable":
        return cls("cos", mode=int(m))

    @classmethod
    def sin(cls, m: int = 1) -> "Observable":
        return cls("sin", mode=int(m))

    @classmethod
    def table(cls, knots: Sequence[float], values: Sequence[float]) -> "Observable":
        return cls("table", knots=tuple(float(k) for k in knots), values=tuple(float(v) for v in values))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(x.shape, self.value)
        if self.kind == "cos":
            return np.cos(2 * np.pi * self.mode * x)
        if self.kind == "sin":
            return np.sin(2 * np.pi * self.mode * x)
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        return np.interp(x % 1.0, k, v, period=1.0)

    @property
    def sup_norm(self) -> float:
        if self.kind == "constant":
            return abs(self.value)
        if self.kind in ("cos", "sin"):
            return 1.0 if self.mode != 0 or self.kind == "cos" else 0.0
        return float(np.max(np.abs(self.values)))

    @property
    def lipschitz(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind in ("cos", "sin"):
            return 2 * math.pi * abs(self.mode)
        k = np.concatenate((self.knots, [self.knots[0] + 1]))
        v = np.concatenate((self.values, [self.values[0]]))
        return float(np.max(np.abs(np.diff(v) / np.diff(k))))


# -- W1 -------------------------------------------------------------------


def _circular_w1(pos: np.ndarray, diff: np.ndarray) -> float:
    """W1 for the signed atomic measure ``sum diff_i delta_{pos_i}`` of total mass 0.

    W1 = min over a of int_0^1 |D(t) - a| dt with D the cumulative difference;
    the minimizer is a weighted median of D.
    """
    order = np.argsort(pos, kind="stable")
    pos, diff = pos[order], diff[order]
    D = np.cumsum(diff)
    lengths = np.diff(np.concatenate((pos, [pos[0] + 1.0])))
    # D on [pos_i, pos_{i+1}) is D[i]; the stretch before the first atom joins the last one
    keep = lengths > 0
    D, lengths = D[keep], lengths[keep]
    o = np.argsort(D, kind="stable")
    cum = np.cumsum(lengths[o])
    a = D[o][np.searchsorted(cum, 0.5 * cum[-1])]
    return float(math.fsum(np.abs(D - a) * lengths))


def wasserstein1(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """Exact Wasserstein-1 distance between normalized atomic measures on the circle."""
    if not (mu.normalized and nu.normalized):
        raise MeasureError("wasserstein1 needs normalized measures")
    pos = np.concatenate((mu.positions, nu.positions))
    diff = np.concatenate((mu.weights, -nu.weights))
    return _circular_w1(pos, diff)


def wasserstein1_grid(grid: GridMeasure, mu: AtomicMeasure) -> tuple[float, float]:
    """W1 between a grid measure and an atomic measure, plus the discretization bound.

    Atoms move to their cell and the grid mass sits at cell centers, so the
    returned value is within ``1/(2G)`` of W1 for the cell-uniform reading of
    the grid measure.
    """
    if abs(grid.total_mass - 1.0) > NORMALIZATION_TOL or not mu.normalized:
        raise MeasureError("both measures must be normalized")
    G = grid.resolution
    diff = grid.masses - mu.to_grid(G).masses
    return _circular_w1((np.arange(G) + 0.5) / G, diff), 1.0 / (2 * G)


def wasserstein1_lp(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """Linear-programming W1 with circle-distance cost; an oracle for small inputs."""
    from scipy.optimize import linprog

    a, b = mu.weights, nu.weights
    na, nb = len(a), len(b)
    d = np.abs(mu.positions[:, None] - nu.positions[None, :])
    cost = np.minimum(d, 1 - d).reshape(-1)
    A_eq = np.zeros((na + nb, na * nb))
    for i in range(na):
        A_eq[i, i * nb : (i + 1) * nb] = 1
    for j in range(nb):
        A_eq[na + j, j::nb] = 1
    res = linprog(cost, A_eq=A_eq, b_eq=np.concatenate((a, b)), bounds=(0, None), method="highs")
    if not res.success:
        raise MeasureError(f"LP failed: {res.message}")
    return float(res.fun)


# -- Birkhoff sums and return orbits -------------------------------------


def birkhoff_average(orbit: Orbit, obs: Observable, n: int) -> float:
    if not 1 <= n <= len(orbit.points):
        raise ValueError(f"n must lie in [1, {len(orbit.points)}]")
    return math.fsum(obs(orbit.points[:n])) / n


def _require_verified(result: ReturnPointResult) -> None:
    if not (result.fixpoint_residual <= FIXPOINT_TOL and result.shadow_error < result.eps):
        raise MeasureError("return point is not verified")


def return_orbit(sys: RandomSystem, result: ReturnPointResult) -> list[Fraction]:
    """The exact orbit ``p, f(p), ..., f^{m-1}(p)`` of a verified return point."""
    _require_verified(result)
    return iterate_exact(sys, result.w_position, result.p_exact, result.period - 1)


def return_orbit_measure(sys: RandomSystem, result: ReturnPointResult) -> AtomicMeasure:
    """Equal weights ``1/m`` on the return orbit, coinciding points merged."""
    pts = return_orbit(sys, result)
    counts: dict[Fraction, int] = {}
    for q in pts:
        counts[q] = counts.get(q, 0) + 1
    m = len(pts)
    keys = sorted(counts)
    return AtomicMeasure([float(k) for k in keys], [counts[k] / m for k in keys], tuple(keys))


@dataclass(frozen=True)
class SumComparison:
    difference: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.difference <= self.bound


def sum_comparison(sys: RandomSystem, result: ReturnPointResult, obs: Observable) -> SumComparison:
    """``|mean over the full period - mean over the first n|`` against ``2 K sup|obs| / n``."""
    n, K = result.n, result.K
    vals = obs(np.array([float(q) for q in return_orbit(sys, result)]))
    m = len(vals)
    if n > m:
        vals = np.resize(vals, n)  # the orbit of p repeats with period m
    head = math.fsum(vals[:n])
    total = head + math.fsum(vals[n:m]) if K > 0 else head
    diff = abs(total / (n + K) - head / n)
    out = SumComparison(diff, 2 * K * obs.sup_norm / n)
    if not out.holds:
        raise BoundViolation(f"sum comparison {diff} exceeds {out.bound} (n={n}, K={K})")
    return out


# -- Corollary 1: atomic approximation -----------------------------------


@dataclass(frozen=True)
class AtomicApproximation:
    measure: AtomicMeasure
    return_points: tuple
    w1: float
    bound: float
    placement_error: float
    grid_error: float


def atomic_disintegration_approx(
    sys: RandomSystem,
    mu_w: GridMeasure,
    w_position: int,
    r: int,
    eps: float | None = None,
    n: int = 1,
    delta: float = DEFAULT_DELTA,
) -> AtomicApproximation:
    """Weights ``mu_w(P_i)`` on return points found near the centers of ``r`` equal arcs."""
    if r < 2:
        raise ValueError("r must be at least 2")
    eps = min(1.0 / (2 * r), 0.9 * delta) if eps is None else eps
    if eps > 1.0 / (2 * r):
        raise ValueError("eps must not exceed half the partition mesh")
    positions, weights, points = [], [], []
    placement = 0.0
    for i in range(r):
        center = (i + 0.5) / r
        try:
            res = find_return_point(sys, w_position, center, n, eps, delta=delta)
        except ReturnPointError as exc:
            raise ReturnPointError(f"arc {i} [{i / r}, {(i + 1) / r}): {exc}") from exc
        k = mu_w.arc_mass(i / r, (i + 1) / r)
        points.append(res)
        placement = max(placement, abs(res.p - center) if abs(res.p - center) < 0.5 else 1 - abs(res.p - center))
        if k > 0:
            positions.append(res.p)
            weights.append(k)
    nu = AtomicMeasure(positions, weights)
    nu = AtomicMeasure(nu.positions, nu.weights / nu.weights.sum())
    w1, grid_err = wasserstein1_grid(mu_w, nu)
    bound = 1.0 / (2 * r) + placement
    if w1 > bound + grid_err:
        raise BoundViolation(f"W1 {w1} exceeds mesh bound {bound} + {grid_err}")
    return AtomicApproximation(nu, tuple(points), w1, bound, placement, grid_err)


def fiber_average_comparison(mu_sequence: Sequence[GridMeasure], T: int, return_measure: AtomicMeasure) -> float:
    """W1 between the uniform mixture of the first ``T`` fiber measures and a return-orbit measure."""
    if not 1 <= T <= len(mu_sequence):
        raise ValueError("T must lie in [1, len(mu_sequence)]")
    G = mu_sequence[0].resolution
    if any(m.resolution != G for m in mu_sequence[:T]):
        raise MeasureError("resolutions differ")
    mix = GridMeasure(np.mean([m.masses for m in mu_sequence[:T]], axis=0))
    mix = GridMeasure(mix.masses / mix.total_mass)
    return wasserstein1_grid(mix, return_measure)[0]


# -- Krylov-Bogolioubov --------------------------------------------------


def test_family(modes: int = 3) -> list[Observable]:
    out = [Observable.constant(1.0)]
    for m in range(1, modes + 1):
        out += [Observable.cos(m), Observable.sin(m)]
    return out


test_family.__test__ = False


@dataclass(frozen=True)
class KBResult:
    n: int
    defect: float
    bound: float
    fiber_marginal: AtomicMeasure | None = None


@dataclass(frozen=True)
class _Trajectories:
    # A[i, g, h] = (1/B) sum_b sum_a nu_a g(theta^i w_b) h(x_{b,a,i})
    A: np.ndarray
    sup_norm: float
    positions: list  # per time: array (B, atoms) of fiber positions


def _kb_trajectories(
    sys: RandomSystem, nu: AtomicMeasure, n_max: int, base_samples: int, seed: int, modes: int, depth: int, exact: bool
) -> _Trajectories:
    obs = test_family(modes)
    k = len(sys.fibers)
    words = [w for L in range(depth + 1) for w in itertools.product(range(k), repeat=L)]
    single_base = len(sys.base.weights) == 1 or np.count_nonzero(sys.base.weights) == 1
    B = 1 if single_base else base_samples
    if exact:
        atoms0 = list(nu.exact) if nu.exact is not None else [Fraction(float(p)) for p in nu.positions]
    else:
        atoms0 = [float(p) for p in nu.positions]
    weights = nu.weights
    A = np.zeros((n_max + 1, len(words), len(obs)))
    positions = []
    X = np.empty((n_max + 1, B, len(atoms0)))
    for b in range(B):
        base = sys.base if single_base else sys.base.reseeded(int(substream(seed, b).integers(0, 2**63)))
        syms = base.symbols(0, n_max + depth)
        pts = list(atoms0)
        for i in range(n_max + 1):
            X[i, b] = [float(p) for p in pts]
            if i < n_max:
                f = sys.fibers[syms[i]]
                pts = [f.eval_exact(p) for p in pts] if exact else list(f.apply(np.array(pts, dtype=float)))
        G = np.array([[all(syms[i + j] == s for j, s in enumerate(w)) for w in words] for i in range(n_max + 1)], dtype=float)
        H = np.stack([(obs_h(X[:, b]) * weights).sum(axis=1) for obs_h in obs], axis=1)
        A += G[:, :, None] * H[:, None, :]
    A /= B
    positions = [X[i] for i in range(n_max + 1)]
    return _Trajectories(A, max(o.sup_norm for o in obs), positions)


def kb_defects(
    sys: RandomSystem,
    nu: AtomicMeasure,
    ns: Sequence[int],
    *,
    base_samples: int = 256,
    seed: int | None = None,
    modes: int = 3,
    depth: int = 2,
    exact: bool = True,
) -> list[KBResult]:
    """Invariance defects of the Cesaro averages ``tau_n`` for each n in ``ns``.

    ``tau_n = (1/n) sum_{i<n} F^i (P x nu)``, with P sampled by ``base_samples``
    independent base sequences and the fiber atoms pushed forward exactly.
    The defect is ``max |int phi o F d tau_n - int phi d tau_n|`` over
    ``phi = g(w) h(x)``, g a cylinder indicator of length at most ``depth`` and
    h a Fourier mode up to ``modes``.
    """
    if not nu.normalized:
        raise MeasureError("nu must be normalized")
    ns = [int(n) for n in ns]
    if not ns or min(ns) < 1:
        raise ValueError("every n must be at least 1")
    seed = sys.base.master_seed if seed is None else seed
    tr = _kb_trajectories(sys, nu, max(ns), base_samples, seed, modes, depth, exact)
    out = []
    for n in ns:
        before = tr.A[:n].mean(axis=0)
        after = tr.A[1 : n + 1].mean(axis=0)
        defect = float(np.abs(after - before).max())
        bound = 2 * tr.sup_norm / n
        if defect > bound * (1 + 1e-12) + 1e-15:
            raise BoundViolation(f"defect {defect} exceeds telescoping bound {bound} at n={n}")
        out.append(KBResult(n, defect, bound))
    return out


def krylov_bogolioubov(
    sys: RandomSystem,
    nu: AtomicMeasure,
    n: int,
    *,
    base_samples: int = 256,
    seed: int | None = None,
    modes: int = 3,
    depth: int = 2,
    exact: bool = True,
) -> KBResult:
    """``tau_n`` (its fiber marginal) and its invariance defect."""
    seed = sys.base.master_seed if seed is None else seed
    tr = _kb_trajectories(sys, nu, n, base_samples, seed, modes, depth, exact)
    before = tr.A[:n].mean(axis=0)
    after = tr.A[1 : n + 1].mean(axis=0)
    defect = float(np.abs(after - before).max())
    bound = 2 * tr.sup_norm / n
    if defect > bound * (1 + 1e-12) + 1e-15:
        raise BoundViolation(f"defect {defect} exceeds telescoping bound {bound} at n={n}")
    B = tr.positions[0].shape[0]
    pos = np.concatenate([p.reshape(-1) for p in tr.positions[:n]])
    w = np.tile(nu.weights, B * n) / (B * n)
    marginal = AtomicMeasure(pos % 1.0, w).merged()
    return KBResult(n, defect, bound, marginal)
