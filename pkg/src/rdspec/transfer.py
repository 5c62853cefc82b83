"""Grid transfer operators for the fiber maps.

Functions live on the midpoint grid ``x_i = (i + 1/2) / G``.  Preimages of
grid points under a piecewise-affine map are computed exactly, so the only
discretization error comes from linearly interpolating ``psi`` and ``phi``
between grid points.  The dual operator is the exact transpose of the same
interpolation, which makes the adjoint identity hold to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dynamics import FiberMap, RandomSystem

MIN_RESOLUTION = 16
DEFAULT_RESOLUTION = 2**12


class GridError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


def grid_points(G: int) -> np.ndarray:
    return (np.arange(G) + 0.5) / G


def _check_resolution(G: int) -> int:
    G = int(G)
    if G < MIN_RESOLUTION:
        raise GridError(f"resolution must be at least {MIN_RESOLUTION}, got {G}")
    return G


@dataclass(frozen=True)
class GridFunction:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        _check_resolution(len(v))
        if not np.all(np.isfinite(v)):
            raise GridError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return len(self.values)

    @classmethod
    def from_callable(cls, fn, G: int) -> "GridFunction":
        return cls(np.asarray(fn(grid_points(_check_resolution(G))), dtype=float) * np.ones(G))

    @classmethod
    def constant(cls, value: float, G: int) -> "GridFunction":
        return cls(np.full(_check_resolution(G), float(value)))

    def interpolate(self, y: np.ndarray) -> np.ndarray:
        """Periodic linear interpolation, written so constants are reproduced exactly."""
        G = self.resolution
        u = np.asarray(y, dtype=float) * G - 0.5
        k = np.floor(u)
        t = u - k
        k = k.astype(np.int64) % G
        a = self.values[k]
        b = self.values[(k + 1) % G]
        return a + t * (b - a)

    def to_list(self) -> list[float]:
        return self.values.tolist()


@dataclass(frozen=True)
class GridMeasure:
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        _check_resolution(len(m))
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise GridError("masses must be finite and nonnegative")
        object.__setattr__(self, "masses", m)

    @property
    def resolution(self) -> int:
        return len(self.masses)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @classmethod
    def lebesgue(cls, G: int) -> "GridMeasure":
        G = _check_resolution(G)
        return cls(np.full(G, 1.0 / G))

    @classmethod
    def point_mass(cls, x: float, G: int) -> "GridMeasure":
        G = _check_resolution(G)
        m = np.zeros(G)
        m[int(math.floor((x % 1.0) * G)) % G] = 1.0
        return cls(m)

    def normalized(self) -> "GridMeasure":
        total = self.total_mass
        if not total > 0:
            raise NumericalError("cannot normalize a measure of zero mass")
        return GridMeasure(self.masses / total)

    def integrate(self, psi: GridFunction) -> float:
        if psi.resolution != self.resolution:
            raise GridError("resolutions differ")
        return float(psi.values @ self.masses)

    def _cdf(self, t: float) -> float:
        """Mass of [0, t) for t on the real line, mass spread uniformly within cells."""
        G = self.resolution
        k = math.floor(t)
        r = (t - k) * G
        i = min(int(r), G - 1)
        return k * self._total + self._prefix[i] + (r - i) * self.masses[i]

    @property
    def _prefix(self) -> np.ndarray:
        cached = self.__dict__.get("_prefix_cache")
        if cached is None:
            cached = np.concatenate(([0.0], np.cumsum(self.masses)))
            object.__setattr__(self, "_prefix_cache", cached)
        return cached

    @property
    def _total(self) -> float:
        return float(self._prefix[-1])

    def arc_mass(self, lo: float, hi: float) -> float:
        """Mass of the arc (lo, hi) given in lift coordinates (hi - lo <= 1)."""
        if hi < lo:
            raise GridError("arc endpoints reversed")
        if hi - lo >= 1:
            return self._total
        return self._cdf(hi) - self._cdf(lo)

    def coverage(self, lo: float, hi: float) -> np.ndarray:
        """Fraction of each cell covered by the arc (lo, hi)."""
        G = self.resolution
        edges = np.arange(G + 1) / G
        cov = np.zeros(G)
        base = math.floor(lo)
        for shift in (0, 1):
            a, b = lo - base - shift, hi - base - shift
            cov += np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0, None)
        return np.minimum(cov * G, 1.0)

    def to_list(self) -> list[float]:
        return self.masses.tolist()


@dataclass(frozen=True)
class Potential:
    """Per-symbol potentials; symbols without an entry use phi = 0."""

    by_symbol: dict = field(default_factory=dict)

    def for_symbol(self, symbol: int) -> GridFunction | None:
        return self.by_symbol.get(int(symbol))


# -- preimage tables ------------------------------------------------------

_TABLES: dict = {}


def _preimages(f: FiberMap, G: int) -> tuple[np.ndarray, np.ndarray]:
    """Preimages of every grid point: arrays (rows, ys) of length deg*G."""
    key = (id(f), G)
    hit = _TABLES.get(key)
    if hit is not None and hit[0] is f:
        return hit[1], hit[2]
    x = grid_points(G)
    rows, ys = [], []
    for p in f.pieces:
        lo, s, ilo, ihi = float(p.lo), float(p.slope), float(p.image_lo), float(p.image_hi)
        mask = (x >= ilo) & (x < ihi)
        idx = np.nonzero(mask)[0]
        rows.append(idx)
        ys.append(lo + (x[idx] - ilo) / s)
    rows_a = np.concatenate(rows)
    ys_a = np.concatenate(ys) % 1.0
    if len(rows_a) != f.degree * G:
        raise NumericalError("preimage count does not match the degree")
    if len(_TABLES) > 64:
        _TABLES.clear()
    _TABLES[key] = (f, rows_a, ys_a)
    return rows_a, ys_a


def _weights(phi: GridFunction | None, ys: np.ndarray) -> np.ndarray | None:
    if phi is None:
        return None
    return np.exp(phi.interpolate(ys))


def _operator_matrix(f: FiberMap, phi: GridFunction | None, G: int) -> sp.csr_matrix:
    rows, ys = _preimages(f, G)
    u = ys * G - 0.5
    k = np.floor(u)
    t = u - k
    k = k.astype(np.int64) % G
    w = _weights(phi, ys)
    w = np.ones_like(t) if w is None else w
    data = np.concatenate((w * (1 - t), w * t))
    r = np.concatenate((rows, rows))
    c = np.concatenate((k, (k + 1) % G))
    return sp.csr_matrix((data, (r, c)), shape=(G, G))


def apply_operator(f: FiberMap, phi: GridFunction | None, psi: GridFunction) -> GridFunction:
    """``(L psi)(x_i) = sum over preimages y of x_i of e^{phi(y)} psi(y)``."""
    G = psi.resolution
    if phi is not None and phi.resolution != G:
        raise GridError("resolutions differ")
    rows, ys = _preimages(f, G)
    vals = psi.interpolate(ys)
    w = _weights(phi, ys)
    if w is not None:
        vals = vals * w
    out = np.zeros(G)
    np.add.at(out, rows, vals)
    return GridFunction(out)


def dual_apply(f: FiberMap, phi: GridFunction | None, rho: GridMeasure) -> GridMeasure:
    """Transpose of :func:`apply_operator`: ``<psi, L* rho> = <L psi, rho>``."""
    G = rho.resolution
    if phi is not None and phi.resolution != G:
        raise GridError("resolutions differ")
    M = _operator_matrix(f, phi, G)
    return GridMeasure(np.maximum(M.T @ rho.masses, 0.0))


def lambda_of(f: FiberMap, phi: GridFunction | None, mu_next: GridMeasure) -> float:
    """``lambda = mu_next(L 1)``."""
    if not abs(mu_next.total_mass - 1.0) <= 1e-12:
        raise GridError("mu_next must be a probability measure")
    one = GridFunction.constant(1.0, mu_next.resolution)
    return mu_next.integrate(apply_operator(f, phi, one))


@dataclass(frozen=True)
class JacobianCheck:
    """Both sides of the identity.

    ``relative_error`` divides by the larger side; ``mass_error`` divides by the
    total mass of the target measure.  The grid error is an absolute O(1/G)
    effect at the arc endpoints, so only the second is uniform in the arc length.
    """

    lhs: float
    rhs: float
    relative_error: float
    mass_error: float = 0.0

    @property
    def absolute_error(self) -> float:
        return abs(self.lhs - self.rhs)


def _single_branch(f: FiberMap, a: float, b: float) -> int:
    j = f.branch_index(a)
    if not (float(f.breakpoints[j]) <= a <= b <= float(f.breakpoints[j + 1])):
        raise GridError(f"arc [{a}, {b}] straddles a branch boundary of {f.name or 'the fiber'}")
    return j


def _weighted_mass(mu: GridMeasure, a: float, b: float, log_weight: np.ndarray | None) -> float:
    dens = mu.masses * mu.coverage(a, b)
    if log_weight is not None:
        dens = dens * np.exp(log_weight)
    return float(dens.sum())


def jacobian_check(
    f: FiberMap,
    phi: GridFunction | None,
    mu: GridMeasure,
    mu_next: GridMeasure,
    A: tuple[float, float],
    lam: float | None = None,
) -> JacobianCheck:
    """Compare ``mu_next(f(A))`` with ``int_A lambda e^{-phi} d mu`` on one injectivity domain."""
    a, b = float(A[0]), float(A[1])
    if not 0 <= a <= b <= 1:
        raise GridError("A must be a subarc of [0, 1]")
    _single_branch(f, a, b)
    if a == b:
        return JacobianCheck(0.0, 0.0, 0.0)
    lam = lambda_of(f, phi, mu_next) if lam is None else lam
    lhs = mu_next.arc_mass(f.lift(a), f.lift(b))
    rhs = lam * _weighted_mass(mu, a, b, None if phi is None else -phi.values)
    return _result(lhs, rhs, mu_next.total_mass)


def _result(lhs: float, rhs: float, total: float) -> JacobianCheck:
    scale = max(abs(lhs), abs(rhs))
    err = abs(lhs - rhs)
    lhs, rhs = float(lhs), float(rhs)
    return JacobianCheck(lhs, rhs, err / scale if scale > 0 else 0.0, err / total if total > 0 else 0.0)


def jacobian_check_n(
    sys: RandomSystem,
    word: Sequence[int],
    A: tuple[float, float],
    G: int = DEFAULT_RESOLUTION,
    potential: Potential | None = None,
) -> JacobianCheck:
    """n-step identity ``mu_n(f^n(A)) = int_A lambda^n e^{-S_n phi} d mu_0`` along a word.

    The measures are the normalized backward dual iterates from Lebesgue at the
    end of the word, so consecutive measures are linked as in the one-step
    check and ``lambda^n`` is the product of the one-step eigenvalues.
    ``A`` must lie in one injectivity domain of ``f^n``.
    """
    potential = potential or Potential()
    word = [int(s) for s in word]
    seq, lams = reference_measure_sequence(sys, word, G, potential, return_lambdas=True)
    a, b = float(A[0]), float(A[1])
    if not 0 <= a <= b <= 1:
        raise GridError("A must be a subarc of [0, 1]")
    if a == b:
        return JacobianCheck(0.0, 0.0, 0.0)
    lo, hi = a, b
    x = grid_points(G)
    birkhoff = np.zeros(G)
    any_phi = False
    for s in word:
        f = sys.fibers[s]
        phi = potential.for_symbol(s)
        if phi is not None:
            birkhoff += phi.interpolate(x)
            any_phi = True
        x = f.apply(x)
        base = math.floor(lo)
        lo, hi = f.lift(lo - base), f.lift(hi - base)
    if hi - lo > 1 + 1e-12:
        raise GridError("A is not inside a single injectivity domain of the composition")
    lhs = seq[-1].arc_mass(lo, min(hi, lo + 1))
    rhs = float(np.prod(lams)) * _weighted_mass(seq[0], a, b, -birkhoff if any_phi else None)
    return _result(lhs, rhs, seq[-1].total_mass)


def reference_measure_sequence(
    sys: RandomSystem,
    base_word: Sequence[int],
    G: int = DEFAULT_RESOLUTION,
    potential: Potential | None = None,
    *,
    return_lambdas: bool = False,
):
    """Normalized backward dual iteration along ``base_word``.

    Starts from Lebesgue after the last symbol and returns ``[mu_0, ..., mu_T]``
    with ``mu_T`` the Lebesgue start and ``L*_{w_k} mu_{k+1} = lambda_k mu_k``.
    """
    word = [int(s) for s in base_word]
    if len(word) < 1:
        raise ValueError("base word must have length at least 1")
    potential = potential or Potential()
    G = _check_resolution(G)
    rho = GridMeasure.lebesgue(G)
    out = [rho]
    lams = []
    for s in reversed(word):
        f = sys.fibers[s]
        nxt = dual_apply(f, potential.for_symbol(s), rho)
        mass = nxt.total_mass
        if not (math.isfinite(mass) and mass > 1e-300):
            raise NumericalError(f"mass underflow in dual iteration (mass={mass})")
        lams.append(mass / rho.total_mass)
        rho = GridMeasure(nxt.masses / mass)
        out.append(rho)
    out.reverse()
    lams.reverse()
    return (out, lams) if return_lambdas else out
