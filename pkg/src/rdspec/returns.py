"""Return points inside dynamical balls.

The construction follows the classical argument: take the first hyperbolic
time ``n_h >= n`` of the orbit, pull a small ball around ``f^{n_h}(x)`` back to
a pre-ball ``V`` around ``x``, push the ball forward until it covers ``V`` again
(``j`` more steps), and take the fixed point of the inverse branch of
``f^{n_h + j}`` that maps ``V`` into itself.

Everything that touches the orbit is exact rational arithmetic.  The maps are
expanding, so a float orbit loses all accuracy after ~50 steps, while an exact
periodic point can be re-verified exactly over thousands of steps.

Arcs are stored as offsets ``(a, b)`` around an orbit point ``y``: the open
arc ``(y - a, y + b)``.  Steps use the local lift ``H_k(t) = lift_k(t) - branch_k``
which carries a neighborhood of ``y_k`` onto a neighborhood of ``y_{k+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from gmpy2 import mpq

from .dynamics import RandomSystem, circle_distance, iterate_exact
from .sampling import sample_base_and_point


class ReturnPointError(RuntimeError):
    pass


class SearchHorizonError(ReturnPointError):
    """No hyperbolic time within the search horizon."""


class CoveringError(ReturnPointError):
    """The forward images did not cover the pre-ball within the cap."""


class ContractionError(ReturnPointError):
    """The inverse-branch iteration did not settle on an exact fixed point."""


class CertificateError(ReturnPointError):
    """Pre-ball contraction certificate failed; the radius is too large."""


class NotHyperbolicError(ValueError):
    pass


DEFAULT_DELTA = 0.25
FIXPOINT_TOL = 1e-10


def _fraction(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


def _mpq(x):
    q = Fraction(x)
    return mpq(q.numerator, q.denominator)


class ExactOrbit:
    """Lazily extended exact orbit with online hyperbolic-time detection."""

    def __init__(self, sys: RandomSystem, w_position: int, x, c: float | None = None):
        self.sys = sys
        self.position = int(w_position)
        self.c = sys.c if c is None else float(c)
        self.points = [_mpq(x)]
        self.fibers = []
        self.branches: list[int] = []
        self.logs: list[float] = []
        self.hyperbolic: list[int] = []
        self._s = 0.0
        self._runmin = 0.0

    def __len__(self) -> int:
        return len(self.fibers)

    def extend(self, n: int) -> None:
        k = len(self.fibers)
        if n <= k:
            return
        syms = self.sys.base.symbols(self.position + k, n - k)
        y = self.points[-1]
        for j, s in enumerate(syms, start=k):
            f = self.sys.fibers[s]
            i = f.piece_index(y)
            piece = f.pieces[i]
            self.fibers.append(f)
            self.branches.append(piece.branch)
            log_l = -float(f._log_slope[i])
            self.logs.append(log_l)
            self._s += log_l
            t = self._s + self.c * (j + 1)
            if t <= self._runmin:
                self.hyperbolic.append(j + 1)
            self._runmin = min(self._runmin, t)
            z = f._slope_q[i] * y + f._shift_q[i]
            y = z - math.floor(z)
            self.points.append(y)

    def fiber(self, k: int):
        self.extend(k + 1)
        return self.fibers[k]

    def is_hyperbolic(self, n: int) -> bool:
        self.extend(n)
        i = np.searchsorted(self.hyperbolic, n)
        return i < len(self.hyperbolic) and self.hyperbolic[i] == n

    def next_hyperbolic_time(self, n: int, horizon: int) -> int:
        """Smallest hyperbolic time ``>= n`` not beyond ``n + horizon``."""
        i = int(np.searchsorted(self.hyperbolic, n))
        while i >= len(self.hyperbolic):
            if len(self) >= n + horizon:
                raise SearchHorizonError(f"no hyperbolic time in [{n}, {n + horizon}]")
            self.extend(min(len(self) + 256, n + horizon))
            i = int(np.searchsorted(self.hyperbolic, n))
        if self.hyperbolic[i] > n + horizon:
            raise SearchHorizonError(f"no hyperbolic time in [{n}, {n + horizon}]")
        return self.hyperbolic[i]


def _local_forward(f, branch: int, y, a, b):
    """Push the arc (y - a, y + b) forward one step; offsets around f(y)."""
    u = f.lift(y)
    return u - f.lift(y - a), f.lift(y + b) - u


def _local_backward(f, branch: int, y, a, b):
    """Pull the arc (f(y) - a, f(y) + b) back along the branch through y."""
    u = f.lift(y)
    return y - f.lift_inverse(u - a), f.lift_inverse(u + b) - y


def _pullback(orbit: ExactOrbit, depth: int, a, b, clip=None):
    """Offsets ``(a_k, b_k)`` for ``k = 0..depth`` of the pulled-back arc."""
    orbit.extend(depth)
    out = [None] * (depth + 1)
    out[depth] = (a, b)
    for k in range(depth - 1, -1, -1):
        a, b = _local_backward(orbit.fibers[k], orbit.branches[k], orbit.points[k], a, b)
        if clip is not None:
            a, b = min(a, clip), min(b, clip)
        out[k] = (a, b)
    return out


@dataclass(frozen=True)
class DynamicalBall:
    center: float
    depth: int
    radius: float
    lo_exact: Fraction
    hi_exact: Fraction

    @property
    def lo(self) -> float:
        return float(self.lo_exact)

    @property
    def hi(self) -> float:
        return float(self.hi_exact)

    def contains(self, p) -> bool:
        """Membership in the open arc, on the circle."""
        p = Fraction(p)
        shift = math.floor(self.lo_exact - p) + 1
        q = p + shift
        if q <= self.lo_exact:
            q += 1
        return self.lo_exact < q < self.hi_exact


def dynamical_ball(sys: RandomSystem, w_position: int, x, n: int, eps: float) -> DynamicalBall:
    """Component of ``{y : d(f^k y, f^k x) < eps, k = 0..n}`` containing ``x``."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if n < 0:
        raise ValueError("n must be nonnegative")
    r = _mpq(eps)
    orbit = ExactOrbit(sys, w_position, x)
    offs = _pullback(orbit, n, r, r, clip=r)
    a0, b0 = offs[0]
    xq = orbit.points[0]
    return DynamicalBall(float(xq), n, float(eps), _fraction(xq - a0), _fraction(xq + b0))


@dataclass(frozen=True)
class PreBall:
    center: float
    depth: int
    radius: float
    lo_exact: Fraction
    hi_exact: Fraction
    certificate: float  # max_k of (offset at n_h - k) / (radius * e^{-ck/2}); <= 1 passes

    @property
    def lo(self) -> float:
        return float(self.lo_exact)

    @property
    def hi(self) -> float:
        return float(self.hi_exact)


def _certificate(offsets, depth: int, radius, c: float) -> float:
    worst = 0.0
    r = float(radius)
    for k in range(1, depth + 1):
        a, b = offsets[depth - k]
        bound = r * math.exp(-c * k / 2)
        worst = max(worst, float(max(a, b)) / bound)
    return worst


def hyperbolic_preball(
    sys: RandomSystem, w_position: int, z, n_h: int, delta: float, *, c: float | None = None, tol: float = 1e-9
) -> PreBall:
    """Pull ``B(f^{n_h}(z), delta)`` back along the orbit of ``z`` and certify contraction."""
    orbit = ExactOrbit(sys, w_position, z, c)
    return _preball(orbit, n_h, _mpq(delta), tol)


def _preball(orbit: ExactOrbit, n_h: int, radius, tol: float = 1e-9) -> PreBall:
    if n_h > 0 and not orbit.is_hyperbolic(n_h):
        raise NotHyperbolicError(f"{n_h} is not a hyperbolic time (c={orbit.c})")
    offs = _pullback(orbit, n_h, radius, radius)
    cert = _certificate(offs, n_h, radius, orbit.c)
    if cert > 1 + tol:
        raise CertificateError(f"contraction certificate fails (ratio {cert:.6g}); shrink the radius")
    a0, b0 = offs[0]
    z = orbit.points[0]
    return PreBall(float(z), n_h, float(radius), _fraction(z - a0), _fraction(z + b0), cert)


@dataclass(frozen=True)
class ReturnPointResult:
    p: float
    period: int
    K: int
    n: int
    eps: float
    shadow_error: float
    fixpoint_residual: float
    trace: dict = field(default_factory=dict)
    p_exact: Fraction = Fraction(0)
    w_position: int = 0
    x: float = 0.0

    @property
    def verified(self) -> bool:
        return self.shadow_error < self.eps and self.fixpoint_residual <= FIXPOINT_TOL


class ReturnPointSolver:
    """Return points for one ``(w, x)``; the exact orbit is shared across queries."""

    def __init__(
        self,
        sys: RandomSystem,
        w_position: int,
        x,
        *,
        c: float | None = None,
        delta: float = DEFAULT_DELTA,
        search_horizon: int = 4096,
        exactness_cap: int = 64,
        max_iter: int = 10_000,
        tol: float = 1e-12,
        max_shrink: int = 60,
    ):
        self.sys = sys
        self.position = int(w_position)
        self.x = float(x)
        self.orbit = ExactOrbit(sys, w_position, x, c)
        self.delta = delta
        self.search_horizon = search_horizon
        self.exactness_cap = exactness_cap
        self.max_iter = max_iter
        self.tol = tol
        self.max_shrink = max_shrink

    def solve(self, n: int, eps: float) -> ReturnPointResult:
        if n < 1:
            raise ValueError("n must be at least 1")
        if not 0 < eps < self.delta:
            raise ValueError(f"eps must lie in (0, delta={self.delta})")
        orbit = self.orbit
        eps_q = _mpq(eps)
        # a hyperbolic time whose ball sits in a trapping basin may not cover V
        # within the cap; the next hyperbolic time is then tried instead
        n_h = orbit.next_hyperbolic_time(n, self.search_horizon)
        attempts = 1
        while True:
            try:
                return self._solve_at(n, eps, eps_q, n_h, attempts)
            except CoveringError:
                if n_h + 1 > n + self.search_horizon:
                    raise
                try:
                    n_h = orbit.next_hyperbolic_time(n_h + 1, n + self.search_horizon - n_h - 1)
                except SearchHorizonError:
                    raise CoveringError(
                        f"no hyperbolic time in [{n}, {n + self.search_horizon}] whose ball covers "
                        f"the pre-ball within {self.exactness_cap} steps"
                    ) from None
                attempts += 1

    def _solve_at(self, n: int, eps: float, eps_q, n_h: int, attempts: int) -> ReturnPointResult:
        orbit = self.orbit

        # pre-ball radius: shadow within eps up to n_h and pass the contraction certificate
        gamma = eps_q
        for _ in range(self.max_shrink):
            offs = _pullback(orbit, n_h, gamma, gamma)
            widest = max(max(a, b) for a, b in offs)
            if widest <= eps_q and _certificate(offs, n_h, gamma, orbit.c) <= 1 + 1e-9:
                break
            gamma /= 2
        else:
            raise CertificateError("pre-ball radius underflow")
        a0, b0 = offs[0]
        x0 = orbit.points[0]
        v_lo, v_hi = x0 - a0, x0 + b0

        # push B(f^{n_h} x, gamma) forward until it covers V
        a, b = gamma, gamma
        shifts = None
        j = 0
        while True:
            k = n_h + j
            y = orbit.points[k] if k < len(orbit.points) else None
            if y is None:
                orbit.extend(k)
                y = orbit.points[k]
            n_lo = math.ceil(y - a - v_lo)
            n_hi = math.floor(y + b - v_hi)
            if n_lo <= n_hi:
                shifts = range(n_lo, n_hi + 1)
                break
            if j >= self.exactness_cap:
                raise CoveringError(f"no covering of the pre-ball within {self.exactness_cap} steps")
            f = orbit.fiber(k)
            a, b = _local_forward(f, orbit.branches[k], y, a, b)
            j += 1
        m = n_h + j
        orbit.extend(m)

        shift, p_exact, iters = self._fixed_point(m, shifts, v_lo, v_hi)
        p_circle = p_exact - math.floor(p_exact)

        # exact forward orbit of the candidate; distances are rounded only at the end
        q = p_circle
        shadow = 0.0
        for i in range(m):
            if i <= n:
                shadow = max(shadow, circle_distance(float(q), float(orbit.points[i])))
            q = orbit.fibers[i].eval_exact(q)
        if n >= m:
            shadow = max(shadow, circle_distance(float(q), float(orbit.points[m])))
        residual = 0.0 if q == p_circle else circle_distance(float(q), float(p_circle))
        return ReturnPointResult(
            p=float(p_circle),
            period=m,
            K=m - n,
            n=n,
            eps=float(eps),
            shadow_error=float(shadow),
            fixpoint_residual=float(residual),
            trace={
                "hyperbolic_time": n_h,
                "exactness_time": j,
                "iterations": iters,
                "gamma": float(gamma),
                "shift": shift,
                "attempts": attempts,
            },
            p_exact=_fraction(p_circle),
            w_position=self.position,
            x=self.x,
        )

    def _inverse_chain(self, m: int, t, exact: bool):
        """``g(t) = h_0(h_1(...h_{m-1}(t)))`` with ``h_k(v) = lift_k^{-1}(v + branch_k)``.

        Returns the value and, for exact evaluation, its affine form ``(A, B)``
        on the cylinder containing ``t``.
        """
        orbit = self.orbit
        if not exact:
            v = t
            for k in range(m - 1, -1, -1):
                v = orbit.fibers[k].lift_inverse(v + orbit.branches[k])
            return v
        v = t
        A, B = mpq(1), mpq(0)
        for k in range(m - 1, -1, -1):
            f = orbit.fibers[k]
            u = v + orbit.branches[k]
            d = f.degree
            mk = math.floor(u / d)
            r = u - d * mk
            i = f.lift_piece_of_image(r)
            s = f._slope_q[i]
            beta = (orbit.branches[k] - d * mk - f._branch[i] - f._shift_q[i]) / s + mk
            v = v / s + beta
            A, B = A / s, B / s + beta
        return v, A, B

    def _fixed_point(self, m: int, shifts, v_lo: Fraction, v_hi: Fraction):
        # pick the inverse branch whose image overlaps V the most (ties: smallest shift)
        best = None
        for N in shifts:
            lo = self._inverse_chain(m, float(v_lo + N), exact=False)
            hi = self._inverse_chain(m, float(v_hi + N), exact=False)
            overlap = max(0.0, min(hi, float(v_hi)) - max(lo, float(v_lo)))
            if best is None or overlap > best[0]:
                best = (overlap, N)
        N = best[1]

        # Banach iteration of the inverse branch in floats
        t = float((v_lo + v_hi) / 2)
        iters = 0
        for iters in range(1, self.max_iter + 1):
            t_next = self._inverse_chain(m, t + N, exact=False)
            done = abs(t_next - t) <= self.tol
            t = t_next
            if done:
                break
        else:
            raise ContractionError(f"inverse-branch iteration did not converge in {self.max_iter} steps (m={m})")

        # exact fixed point on the cylinder found by the float iteration
        guess = mpq(t)
        for _ in range(4):
            _, A, B = self._inverse_chain(m, guess + N, exact=True)
            if A == 1:
                break
            p = (A * N + B) / (1 - A)
            image, _, _ = self._inverse_chain(m, p + N, exact=True)
            if image == p and v_lo < p < v_hi:
                return N, p, iters
            guess = image
        raise ContractionError(f"no exact fixed point located on the selected branch (m={m})")


def find_return_point(
    sys: RandomSystem, w_position: int, x, n: int, eps: float, **options
) -> ReturnPointResult:
    """Return point in ``B_{n,w}(x, eps)`` with period ``n + K``."""
    return ReturnPointSolver(sys, w_position, x, **options).solve(n, eps)


def verify_return_point(sys: RandomSystem, result: ReturnPointResult) -> tuple[float, float]:
    """Recompute ``(shadow_error, fixpoint_residual)`` from scratch by exact forward iteration."""
    m, n = result.period, result.n
    xs = iterate_exact(sys, result.w_position, result.x, max(n, m))
    ps = iterate_exact(sys, result.w_position, result.p_exact, m)
    shadow = max(circle_distance(ps[i], xs[i]) for i in range(min(n, m) + 1))
    if n > m:
        # past the period the orbit of p repeats
        shadow = max(shadow, max(circle_distance(ps[i % m], xs[i]) for i in range(m, n + 1)))
    residual = circle_distance(ps[m], ps[0])
    return float(shadow), float(residual)


def periodic_points(sys: RandomSystem, w_position: int, m: int, lo, hi) -> list[Fraction]:
    """Every solution of ``f^m_w(p) = p`` in the closed arc ``[lo, hi]``.

    Forward cylinder enumeration with global lifts: the arc is split wherever
    an image crosses a piece boundary, and on each cylinder ``f^m`` is a single
    affine map whose fixed points are solved exactly.  Intended for small m.
    """
    lo, hi = Fraction(lo), Fraction(hi)
    if not lo <= hi or hi - lo >= 1:
        raise ValueError("need lo <= hi < lo + 1")
    fibers = sys.fibers_along(w_position, m)
    segs = [(lo, hi, Fraction(1), Fraction(0))]
    for f in fibers:
        nxt = []
        bounds = f._lo_exact
        for j_lo, j_hi, A, B in segs:
            img_lo, img_hi = A * j_lo + B, A * j_hi + B
            cuts = []
            for k in range(math.floor(img_lo), math.floor(img_hi) + 1):
                for bnd in bounds:
                    c = k + bnd
                    if img_lo < c < img_hi:
                        cuts.append(c)
            pts = [img_lo] + sorted(cuts) + [img_hi]
            for u0, u1 in zip(pts, pts[1:]):
                mid = (u0 + u1) / 2
                k = math.floor(mid)
                i = f.piece_index(mid - k)
                s = f._slope_exact[i]
                off = f._shift_exact[i] + f.pieces[i].branch + (f.degree - s) * k
                nxt.append(((u0 - B) / A, (u1 - B) / A, s * A, s * B + off))
            if img_lo == img_hi:
                k = math.floor(img_lo)
                i = f.piece_index(img_lo - k)
                s = f._slope_exact[i]
                off = f._shift_exact[i] + f.pieces[i].branch + (f.degree - s) * k
                nxt.append((j_lo, j_hi, s * A, s * B + off))
        segs = nxt
    found = set()
    for j_lo, j_hi, A, B in segs:
        if A == 1:
            continue
        a, b = sorted(((A - 1) * j_lo + B, (A - 1) * j_hi + B))
        for N in range(math.ceil(a), math.floor(b) + 1):
            t = (N - B) / (A - 1)
            if j_lo <= t <= j_hi:
                found.add(t - math.floor(t))
    return sorted(found)


# -- statistics -----------------------------------------------------------


@dataclass(frozen=True)
class SpecificationRow:
    n: int
    eps: float
    samples: int
    median_K_over_n: float
    p90_K_over_n: float
    failure_rate: float


def _sample_K(args) -> list[int | None]:
    sys, seed, index, schedule, eps, options = args
    base, pos, x = sample_base_and_point(sys, seed, index)
    solver = ReturnPointSolver(sys.replace(base=base), pos, x, **options)
    out = []
    for n in schedule:
        try:
            out.append(solver.solve(n, eps).K)
        except ReturnPointError:
            out.append(None)
    return out


def specification_statistics(
    sys: RandomSystem,
    sample_size: int,
    n_schedule,
    eps: float,
    *,
    seed: int | None = None,
    pool=None,
    **options,
) -> list[SpecificationRow]:
    """Median and 90th percentile of ``K/n`` per ``n`` over Lebesgue x and Bernoulli w."""
    schedule = [int(n) for n in n_schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("n_schedule must be increasing")
    if sample_size == 0:
        return []
    seed = sys.base.master_seed if seed is None else seed
    tasks = [(sys, seed, i, schedule, eps, options) for i in range(sample_size)]
    mapper = map if pool is None else pool.map
    per_sample = list(mapper(_sample_K, tasks))
    rows = []
    for col, n in enumerate(schedule):
        ks = [s[col] for s in per_sample if s[col] is not None]
        fails = sample_size - len(ks)
        ratios = np.array(ks, dtype=float) / n
        med = float(np.median(ratios)) if len(ratios) else math.nan
        p90 = float(np.quantile(ratios, 0.9)) if len(ratios) else math.nan
        rows.append(SpecificationRow(n, float(eps), sample_size, med, p90, fails / sample_size))
    return rows
