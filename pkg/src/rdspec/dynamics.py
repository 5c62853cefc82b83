"""Bernoulli base, piecewise-affine circle fibers and skew-product orbits.

The circle is ``[0, 1)`` with the wraparound metric.  Every fiber map is a
full-branch, orientation preserving, piecewise-affine map of degree ``d``.
Its parameters are stored twice: as exact rationals (used by the return-point
machinery, where expanding dynamics destroys float accuracy after a few dozen
steps) and as floats (used for orbit statistics on large samples).
"""

from __future__ import annotations

import bisect
import json
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from gmpy2 import mpq

POINT_TOL = 1e-12
INVARIANT_TOL = 1e-10

_CONFIG_DIR = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    """Malformed system description."""


class ExactnessError(RuntimeError):
    """A ball did not cover the circle within the iteration cap."""


def as_rational(value, max_denominator: int = 10**6) -> Fraction:
    """Exact rational for a config number.

    Decimal inputs such as ``0.3`` or ``0.5333333333333333`` are mapped to the
    simple rational they denote (3/10, 8/15) when one with a small denominator
    agrees to within a few ulps; otherwise the double itself is used.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"non-finite number {value!r}")
    guess = Fraction(v).limit_denominator(max_denominator)
    if abs(float(guess) - v) <= 4 * math.ulp(max(abs(v), 1e-300)):
        return guess
    return Fraction(v)


def circle_distance(x, y):
    """Wraparound distance on [0, 1); works for floats and Fractions."""
    d = abs(x - y) % 1
    return min(d, 1 - d)


_MPQ_ONE = mpq(1)


def _floor(t) -> int:
    return math.floor(t)


@dataclass(frozen=True)
class Piece:
    lo: Fraction
    hi: Fraction
    image_lo: Fraction
    image_hi: Fraction
    branch: int

    @property
    def slope(self) -> Fraction:
        return (self.image_hi - self.image_lo) / (self.hi - self.lo)


class FiberMap:
    """Full-branch piecewise-affine circle map.

    ``pieces`` are ``(lo, hi, slope, image_lo)`` tuples (or dicts with those
    keys) in increasing order; each injectivity domain
    ``[breakpoints[j], breakpoints[j+1])`` is tiled by consecutive pieces whose
    images tile ``[0, 1)``.  The exact slope of a piece is recomputed from the
    image it must cover, so the rational map is exactly of constant degree.
    """

    def __init__(
        self,
        breakpoints: Sequence,
        pieces: Sequence,
        contracting_region: Iterable[Sequence] = (),
        sigma: float = 2.0,
        L_bound: float = 1.0,
        q: int = 1,
        name: str = "",
    ):
        self.name = name
        bps = [as_rational(b) for b in breakpoints]
        if len(bps) < 3:
            raise ConfigError(f"{name or 'fiber'}: degree must be at least 2")
        if bps[0] != 0 or bps[-1] != 1:
            raise ConfigError(f"{name or 'fiber'}: breakpoints must start at 0 and end at 1")
        for j in range(len(bps) - 1):
            if not bps[j] < bps[j + 1]:
                raise ConfigError(f"{name or 'fiber'}: breakpoints not increasing at branch {j}")
        self.degree = len(bps) - 1
        self.breakpoints = tuple(bps)

        raw = []
        for p in pieces:
            if isinstance(p, dict):
                raw.append((p["lo"], p["hi"], p["slope"], p["image_lo"]))
            else:
                raw.append(tuple(p))
        self.pieces = tuple(self._build_pieces(raw))

        self.contracting_region = tuple(_merge_intervals(contracting_region))
        self.sigma = float(sigma)
        self.L_bound = float(L_bound)
        self.q = int(q)

        # float and exact lookup tables
        self._lo_exact = [p.lo for p in self.pieces]
        self._lo = [float(p.lo) for p in self.pieces]
        self._slope_exact = [p.slope for p in self.pieces]
        self._slope = [float(s) for s in self._slope_exact]
        self._shift_exact = [p.image_lo - p.slope * p.lo for p in self.pieces]
        self._shift = [float(s) for s in self._shift_exact]
        self._lift_img_exact = [p.branch + p.image_lo for p in self.pieces]
        self._lift_img = [float(v) for v in self._lift_img_exact]
        # gmpy2 rationals: same values, much cheaper arithmetic for long exact orbits
        self._lo_q = [mpq(v) for v in self._lo_exact]
        self._slope_q = [mpq(v) for v in self._slope_exact]
        self._shift_q = [mpq(v) for v in self._shift_exact]
        self._lift_img_q = [mpq(v) for v in self._lift_img_exact]
        self._branch = [p.branch for p in self.pieces]
        self._lo_arr = np.array(self._lo)
        self._slope_arr = np.array(self._slope)
        self._shift_arr = np.array(self._shift)
        self._log_slope = np.log(self._slope_arr)

    def _build_pieces(self, raw):
        label = self.name or "fiber"
        if not raw:
            raise ConfigError(f"{label}: no pieces")
        out = []
        bps = self.breakpoints
        branch = 0
        expected_lo = Fraction(0)
        expected_img = Fraction(0)
        for idx, (lo, hi, slope, image_lo) in enumerate(raw):
            lo_q, hi_q = as_rational(lo), as_rational(hi)
            if abs(float(lo_q) - float(expected_lo)) > POINT_TOL:
                raise ConfigError(f"{label}: piece {idx} in branch {branch} does not start where the previous one ended")
            lo_q = expected_lo
            if abs(float(hi_q) - float(bps[branch + 1])) <= POINT_TOL:
                hi_q = bps[branch + 1]
            if not lo_q < hi_q or hi_q > bps[branch + 1]:
                raise ConfigError(f"{label}: piece {idx} is empty or crosses the end of branch {branch}")
            if float(slope) <= 0:
                raise ConfigError(f"{label}: piece {idx} in branch {branch} has non-positive slope")
            img_lo = as_rational(image_lo)
            if abs(float(img_lo) - float(expected_img)) > 1e-9:
                raise ConfigError(f"{label}: images in branch {branch} are not contiguous at piece {idx}")
            img_lo = expected_img
            closes_branch = hi_q == bps[branch + 1]
            if closes_branch:
                img_hi = Fraction(1)
            else:
                img_hi = as_rational(float(img_lo) + float(slope) * float(hi_q - lo_q))
            piece = Piece(lo_q, hi_q, img_lo, img_hi, branch)
            if abs(float(piece.slope) - float(slope)) > 1e-9 * float(slope):
                raise ConfigError(
                    f"{label}: branch {branch} does not map onto [0,1) (piece {idx} slope "
                    f"{float(slope)} vs required {float(piece.slope)})"
                )
            out.append(piece)
            expected_lo = hi_q
            if closes_branch:
                branch += 1
                expected_img = Fraction(0)
            else:
                expected_img = img_hi
        if branch != self.degree:
            raise ConfigError(f"{label}: pieces cover {branch} of {self.degree} branches")
        return out

    # -- lookup -----------------------------------------------------------

    def _tables(self, x):
        """(lo, slope, shift, lift_img) tables matching the number type of x."""
        if isinstance(x, Fraction):
            return self._lo_exact, self._slope_exact, self._shift_exact, self._lift_img_exact
        if type(x) is type(_MPQ_ONE):
            return self._lo_q, self._slope_q, self._shift_q, self._lift_img_q
        return self._lo, self._slope, self._shift, self._lift_img

    def piece_index(self, x) -> int:
        return bisect.bisect_right(self._tables(x)[0], x) - 1

    def branch_index(self, x) -> int:
        return self.pieces[self.piece_index(x)].branch

    def __call__(self, x: float) -> float:
        i = bisect.bisect_right(self._lo, x) - 1
        y = self._slope[i] * x + self._shift[i]
        y -= math.floor(y)
        return 0.0 if y >= 1.0 else y

    def eval_exact(self, x):
        """Exact evaluation for Fraction or gmpy2 rationals."""
        lo, slope, shift, _ = self._tables(x)
        i = bisect.bisect_right(lo, x) - 1
        y = slope[i] * x + shift[i]
        return y - math.floor(y)

    def apply(self, xs: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._lo_arr, xs, side="right") - 1
        y = self._slope_arr[idx] * xs + self._shift_arr[idx]
        y = y - np.floor(y)
        y[y >= 1.0] = 0.0
        return y

    def piece_indices(self, xs: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._lo_arr, xs, side="right") - 1

    def inverse_lipschitz(self, x) -> float:
        return 1.0 / self._slope[self.piece_index(x)]

    def log_contraction(self, x) -> float:
        return -float(self._log_slope[self.piece_index(x)])

    # -- lifts ------------------------------------------------------------

    def lift(self, t):
        """Increasing lift to the real line: lift(t + 1) = lift(t) + degree."""
        lo, slope, shift, _ = self._tables(t)
        k = _floor(t)
        r = t - k
        i = bisect.bisect_right(lo, r) - 1
        return slope[i] * r + shift[i] + self._branch[i] + self.degree * k

    def lift_inverse(self, u):
        _, slope, shift, img = self._tables(u)
        d = self.degree
        m = _floor(u / d)
        r = u - d * m
        i = bisect.bisect_right(img, r) - 1
        return (r - self._branch[i] - shift[i]) / slope[i] + m

    def lift_piece_of_image(self, r) -> int:
        """Piece whose lifted image contains ``r`` in ``[0, degree)``."""
        return bisect.bisect_right(self._tables(r)[3], r) - 1

    def lift_piece(self, t) -> int:
        """Index of the affine piece the lift uses at ``t``."""
        return self.piece_index(t - _floor(t))

    # -- region -----------------------------------------------------------

    def in_contracting_region(self, x) -> bool:
        return any(a <= x < b for a, b in self.contracting_region)

    def region_mask(self, xs: np.ndarray) -> np.ndarray:
        mask = np.zeros(np.shape(xs), dtype=bool)
        for a, b in self.contracting_region:
            mask |= (xs >= a) & (xs < b)
        return mask

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "breakpoints": [float(b) for b in self.breakpoints],
            "pieces": [
                {"lo": float(p.lo), "hi": float(p.hi), "slope": float(p.slope), "image_lo": float(p.image_lo)}
                for p in self.pieces
            ],
            "contracting_region": [[a, b] for a, b in self.contracting_region],
            "sigma": self.sigma,
            "L_bound": self.L_bound,
            "q": self.q,
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> "FiberMap":
        try:
            fm = cls(
                data["breakpoints"],
                data["pieces"],
                data.get("contracting_region", []),
                sigma=data["sigma"],
                L_bound=data["L_bound"],
                q=data["q"],
                name=name,
            )
        except KeyError as exc:
            raise ConfigError(f"{name or 'fiber'}: missing field {exc.args[0]!r}") from None
        if "degree" in data and int(data["degree"]) != fm.degree:
            raise ConfigError(f"{name or 'fiber'}: degree {data['degree']} does not match {fm.degree} branches")
        return fm

    def __repr__(self) -> str:
        return f"FiberMap(name={self.name!r}, degree={self.degree}, pieces={len(self.pieces)})"


def _merge_intervals(intervals) -> list[tuple[float, float]]:
    items = sorted((float(a), float(b)) for a, b in intervals)
    out: list[tuple[float, float]] = []
    for a, b in items:
        if not 0.0 <= a < b <= 1.0:
            raise ConfigError(f"contracting region interval [{a}, {b}) is not inside [0, 1)")
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def doubling_map() -> FiberMap:
    return FiberMap(
        [0, 0.5, 1],
        [(0, 0.5, 2.0, 0), (0.5, 1, 2.0, 0)],
        [],
        sigma=2.0,
        L_bound=1.0,
        q=1,
        name="doubling",
    )


def trap_map() -> FiberMap:
    """Degree 4; a weakly contracting piece (slope 0.9) on [0, 0.05)."""
    w = 0.7 / 3
    s = 3 / 0.7
    return FiberMap(
        [0, 0.3, 0.3 + w, 0.3 + 2 * w, 1],
        [
            (0, 0.05, 0.9, 0),
            (0.05, 0.3, 3.82, 0.045),
            (0.3, 0.3 + w, s, 0),
            (0.3 + w, 0.3 + 2 * w, s, 0),
            (0.3 + 2 * w, 1, s, 0),
        ],
        [(0.0, 0.05)],
        sigma=3.82,
        L_bound=1 / 0.9,
        q=1,
        name="trap",
    )


def preimages(f: FiberMap, y) -> list[tuple[float, int]]:
    """All ``deg(f)`` preimages of ``y`` with their branch index, by branch."""
    return [(f.lift_inverse(j + y), j) for j in range(f.degree)]


# -- base -----------------------------------------------------------------


def _zigzag(b: int) -> int:
    return 2 * b if b >= 0 else -2 * b - 1


class BaseEnvironment:
    """Two-sided i.i.d. symbol sequence with Bernoulli weights.

    Symbol ``i`` (any integer) is drawn from a block generator keyed by
    ``(master_seed, block(i))``, so the realized values never depend on the
    order in which positions are read.  The shift acts on positions:
    ``theta^k(w)`` is the same sequence read from ``position + k``.
    """

    block_size = 1024

    def __init__(self, weights: Sequence[float], master_seed: int = 0):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or len(w) == 0:
            raise ConfigError("weights must be a non-empty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights must be nonnegative and sum to 1, got {w.tolist()}")
        self.weights = tuple(float(v) for v in w)
        self.alphabet_size = len(w)
        self.master_seed = int(master_seed) % 2**64
        self._cum = np.cumsum(w)
        self._cum[-1] = np.inf
        self._blocks: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def __getstate__(self):
        # blocks are a pure function of (seed, index): workers regenerate them
        state = self.__dict__.copy()
        del state["_lock"]
        state["_blocks"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _block(self, b: int) -> np.ndarray:
        blk = self._blocks.get(b)
        if blk is None:
            if self.alphabet_size == 1:
                blk = np.zeros(self.block_size, dtype=np.int64)
            else:
                ss = np.random.SeedSequence(self.master_seed, spawn_key=(_zigzag(b),))
                u = np.random.default_rng(ss).random(self.block_size)
                blk = np.searchsorted(self._cum, u, side="right").astype(np.int64)
            with self._lock:
                blk = self._blocks.setdefault(b, blk)
        return blk

    def symbol(self, i: int) -> int:
        b, r = divmod(int(i), self.block_size)
        return int(self._block(b)[r])

    def symbols(self, start: int, n: int) -> np.ndarray:
        """Symbols at positions ``start, ..., start + n - 1``."""
        if n <= 0:
            return np.zeros(0, dtype=np.int64)
        start = int(start)
        b0 = start // self.block_size
        b1 = (start + n - 1) // self.block_size
        chunk = np.concatenate([self._block(b) for b in range(b0, b1 + 1)])
        off = start - b0 * self.block_size
        return chunk[off : off + n]

    def extend(self, lo: int, hi: int) -> None:
        """Realize every position in ``[lo, hi]``."""
        self.symbols(lo, hi - lo + 1)

    @property
    def realized_window(self) -> tuple[int, int] | None:
        with self._lock:
            keys = sorted(self._blocks)
        if not keys:
            return None
        return keys[0] * self.block_size, (keys[-1] + 1) * self.block_size - 1

    def reseeded(self, master_seed: int) -> "BaseEnvironment":
        return BaseEnvironment(self.weights, master_seed)


# -- system ---------------------------------------------------------------


@dataclass(frozen=True)
class RandomSystem:
    base: BaseEnvironment
    fibers: tuple[FiberMap, ...]
    epsilon0: float
    c: float
    rho: float
    name: str = ""

    def __post_init__(self):
        if len(self.fibers) != self.base.alphabet_size:
            raise ConfigError(
                f"{len(self.fibers)} fibers for an alphabet of size {self.base.alphabet_size}"
            )

    def fiber(self, symbol: int) -> FiberMap:
        return self.fibers[symbol]

    def fiber_at(self, position: int) -> FiberMap:
        return self.fibers[self.base.symbol(position)]

    def fibers_along(self, position: int, n: int) -> list[FiberMap]:
        return [self.fibers[s] for s in self.base.symbols(position, n)]

    @property
    def degree(self) -> int:
        return max(f.degree for f in self.fibers)

    def with_seed(self, master_seed: int) -> "RandomSystem":
        return RandomSystem(self.base.reseeded(master_seed), self.fibers, self.epsilon0, self.c, self.rho, self.name)

    def replace(self, **changes) -> "RandomSystem":
        fields = dict(base=self.base, fibers=self.fibers, epsilon0=self.epsilon0, c=self.c, rho=self.rho, name=self.name)
        fields.update(changes)
        return RandomSystem(**fields)

    def to_dict(self) -> dict:
        return {
            "alphabet_size": self.base.alphabet_size,
            "weights": list(self.base.weights),
            "master_seed": self.base.master_seed,
            "fibers": [f.to_dict() for f in self.fibers],
            "epsilon0": self.epsilon0,
            "c": self.c,
            "rho": self.rho,
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> "RandomSystem":
        required = ("alphabet_size", "weights", "master_seed", "fibers", "epsilon0", "c", "rho")
        for key in required:
            if key not in data:
                raise ConfigError(f"system config is missing field {key!r}")
        if int(data["alphabet_size"]) != len(data["weights"]):
            raise ConfigError("alphabet_size does not match the length of weights")
        fibers = tuple(FiberMap.from_dict(f, name=f"fiber {i}") for i, f in enumerate(data["fibers"]))
        c, rho = float(data["c"]), float(data["rho"])
        if c <= 0:
            raise ConfigError("c must be positive")
        if not 0 < rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        base = BaseEnvironment(data["weights"], int(data["master_seed"]))
        return cls(base, fibers, float(data["epsilon0"]), c, rho, name=name or data.get("name", ""))


def load_system(path) -> RandomSystem:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        data = json.load(fh)
    return RandomSystem.from_dict(data, name=path.stem)


def shipped_system(name: str) -> RandomSystem:
    """One of the bundled configurations: ``doubling``, ``trap`` or ``mixed``."""
    path = _CONFIG_DIR / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no shipped system named {name!r}")
    return load_system(path)


# -- orbits ---------------------------------------------------------------


@dataclass(frozen=True)
class Orbit:
    position: int
    x: float
    points: np.ndarray
    log_contractions: np.ndarray
    branch_itinerary: np.ndarray
    symbols: np.ndarray

    @property
    def length(self) -> int:
        return len(self.log_contractions)


def iterate(sys: RandomSystem, w_position: int, x: float, n: int) -> Orbit:
    """Random orbit ``f^j_w(x)``, ``j = 0..n``, of the fiber over ``theta^w_position``."""
    if not 0.0 <= x < 1.0:
        raise ValueError(f"x must lie in [0, 1), got {x}")
    syms = sys.base.symbols(w_position, n)
    pts = np.empty(n + 1)
    logs = np.empty(n)
    branches = np.empty(n, dtype=np.int64)
    pts[0] = x
    for j in range(n):
        f = sys.fibers[syms[j]]
        i = bisect.bisect_right(f._lo, x) - 1
        logs[j] = -f._log_slope[i]
        branches[j] = f.pieces[i].branch
        y = f._slope[i] * x + f._shift[i]
        x = y - math.floor(y)
        if x >= 1.0:
            x = 0.0
        pts[j + 1] = x
    return Orbit(int(w_position), float(pts[0]), pts, logs, branches, np.asarray(syms))


def iterate_exact(sys: RandomSystem, w_position: int, x, n: int) -> list[Fraction]:
    """Exact rational orbit; ``x`` may be a float (taken at its exact value)."""
    xq = Fraction(x)
    out = [xq]
    for s in sys.base.symbols(w_position, n):
        xq = sys.fibers[s].eval_exact(xq)
        out.append(xq)
    return out


def iterate_many(sys: RandomSystem, w_position: int, xs: np.ndarray, n: int) -> np.ndarray:
    """Vectorized orbits of many points over the same base word; shape (n+1, len(xs))."""
    xs = np.asarray(xs, dtype=float)
    out = np.empty((n + 1, len(xs)))
    out[0] = xs
    for j, s in enumerate(sys.base.symbols(w_position, n)):
        out[j + 1] = sys.fibers[s].apply(out[j])
    return out


def exactness_time(sys: RandomSystem, w_position: int, x: float, eps: float, max_iter: int = 64) -> int:
    """Smallest n with ``f^n_w(B(x, eps))`` equal to the whole circle."""
    if eps >= 0.5:
        return 0
    if eps <= 0:
        raise ValueError("eps must be positive")
    lo, hi = x - eps, x + eps
    syms = sys.base.symbols(w_position, max_iter)
    for k in range(max_iter):
        f = sys.fibers[syms[k]]
        lo, hi = f.lift(lo), f.lift(hi)
        shift = math.floor(lo)
        lo, hi = lo - shift, hi - shift
        if hi - lo >= 1.0:
            return k + 1
    raise ExactnessError(f"exactness not certified within max_iter={max_iter} (x={x}, eps={eps})")


# -- hypotheses -----------------------------------------------------------


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    witness: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[HypothesisCheck, ...] = field(default_factory=tuple)

    @property
    def violations(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _covered_length(lo: float, hi: float, region) -> float:
    return sum(max(0.0, min(hi, b) - max(lo, a)) for a, b in region)


def validate_system(sys: RandomSystem) -> ValidationReport:
    """Check hypotheses (I), (II), (IV), (V), (H2); (H1) and (H3) hold structurally."""
    checks = []

    parts_i = []
    ok_i = True
    for s, f in enumerate(sys.fibers):
        max_in = 0.0
        max_out = 0.0
        for p in f.pieces:
            lo, hi = float(p.lo), float(p.hi)
            L = 1.0 / float(p.slope)
            cov = _covered_length(lo, hi, f.contracting_region)
            if cov > 0:
                max_in = max(max_in, L)
            if cov < (hi - lo) - POINT_TOL:
                max_out = max(max_out, L)
        sym_ok = (
            f.sigma > 1
            and f.L_bound >= 1
            and max_in <= f.L_bound + INVARIANT_TOL
            and max_out < 1.0 / f.sigma + INVARIANT_TOL
        )
        ok_i &= sym_ok
        parts_i.append(
            f"s={s}: max L on A={max_in:.6g} (bound {f.L_bound:.6g}), "
            f"max L off A={max_out:.6g} (1/sigma={1.0 / f.sigma:.6g})"
        )
    checks.append(HypothesisCheck("I", ok_i, "; ".join(parts_i)))

    parts_ii = []
    ok_ii = True
    for s, f in enumerate(sys.fibers):
        needed = 0
        for j in range(f.degree):
            a, b = float(f.breakpoints[j]), float(f.breakpoints[j + 1])
            if _covered_length(a, b, f.contracting_region) > 0:
                needed += 1
        sym_ok = f.q < f.degree and needed <= f.q
        ok_ii &= sym_ok
        parts_ii.append(f"s={s}: q={f.q}, deg={f.degree}, domains meeting A={needed}")
    checks.append(HypothesisCheck("II", ok_ii, "; ".join(parts_ii)))

    parts_iv = []
    ok_iv = True
    for s, f in enumerate(sys.fibers):
        ratio = math.inf if f.q == 0 else f.degree / f.q
        sym_ok = math.exp(sys.epsilon0) < ratio
        ok_iv &= sym_ok
        parts_iv.append(f"s={s}: e^eps0={math.exp(sys.epsilon0):.6g} vs deg/q={ratio:.6g}")
    checks.append(HypothesisCheck("IV", ok_iv, "; ".join(parts_iv)))

    L_hat = max(f.L_bound for f in sys.fibers)
    sigma_hat = min(f.sigma for f in sys.fibers)
    lhs = L_hat**sys.rho * sigma_hat ** (-(1 - sys.rho))
    rhs = math.exp(-2 * sys.c)
    checks.append(
        HypothesisCheck(
            "V",
            lhs < rhs < 1,
            f"L_hat^rho * sigma_hat^-(1-rho) = {lhs:.6g} vs e^(-2c) = {rhs:.6g} "
            f"(L_hat={L_hat:.6g}, sigma_hat={sigma_hat:.6g}, rho={sys.rho}, c={sys.c})",
        )
    )

    inf_L = min(1.0 / float(p.slope) for f in sys.fibers for p in f.pieces)
    checks.append(HypothesisCheck("H2", inf_L > 0, f"inf L = {inf_L:.6g}"))
    auto = "holds automatically for piecewise-affine maps with finitely many pieces"
    checks.append(HypothesisCheck("H1", True, auto))
    checks.append(HypothesisCheck("H3", True, auto))
    return ValidationReport(tuple(checks))
