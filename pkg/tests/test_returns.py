import math
from fractions import Fraction

import pytest

from rdspec.dynamics import circle_distance, iterate_exact
from rdspec.returns import (
    CertificateError,
    CoveringError,
    ExactOrbit,
    NotHyperbolicError,
    ReturnPointError,
    ReturnPointSolver,
    SearchHorizonError,
    dynamical_ball,
    find_return_point,
    hyperbolic_preball,
    periodic_points,
    specification_statistics,
    verify_return_point,
)
from rdspec.hyperbolic import hyperbolic_times_from_logs
from rdspec.dynamics import iterate


def test_doubling_worked_example(doubling):
    ball = dynamical_ball(doubling, 0, 0.3, 3, 0.05)
    assert (ball.lo, ball.hi) == pytest.approx((0.29375, 0.30625))
    res = find_return_point(doubling, 0, 0.3, 3, 0.05)
    assert res.p_exact == Fraction(19, 63)
    assert (res.period, res.K) == (6, 3)
    assert res.fixpoint_residual == 0.0
    assert res.verified
    assert verify_return_point(doubling, res) == pytest.approx((res.shadow_error, 0.0))
    assert ball.contains(res.p_exact)
    assert res.p_exact in periodic_points(doubling, 0, 6, ball.lo_exact, ball.hi_exact)


def test_fixed_point_is_its_own_return(doubling):
    res = find_return_point(doubling, 0, 0.0, 5, 0.01)
    assert res.p == 0.0 and res.K == 0 and res.period == 5


def test_dynamical_ball_shrinks_and_nests(mixed):
    balls = [dynamical_ball(mixed, 0, 0.42, n, 0.05) for n in range(12)]
    assert balls[0].lo == pytest.approx(0.37) and balls[0].hi == pytest.approx(0.47)
    for outer, inner in zip(balls, balls[1:]):
        assert outer.lo_exact <= inner.lo_exact and inner.hi_exact <= outer.hi_exact


def test_dynamical_ball_membership_by_forward_orbit(mixed):
    n, eps = 6, 0.05
    ball = dynamical_ball(mixed, 0, 0.42, n, eps)
    xs = iterate_exact(mixed, 0, 0.42, n)
    width = ball.hi_exact - ball.lo_exact
    for i in range(1, 40):
        y = ball.lo_exact + width * Fraction(i, 40)
        ys = iterate_exact(mixed, 0, y, n)
        assert max(circle_distance(a, b) for a, b in zip(xs, ys)) < eps
    # just outside the arc some iterate is at least eps away
    for y in (ball.lo_exact - width / 1000, ball.hi_exact + width / 1000):
        ys = iterate_exact(mixed, 0, y, n)
        assert max(circle_distance(a, b) for a, b in zip(xs, ys)) >= eps


def test_exact_orbit_detects_the_same_hyperbolic_times(mixed):
    # the exact and float orbits part ways after a few dozen steps, so compare
    # the online detector with the batch one on the exact orbit's own logs
    orbit = ExactOrbit(mixed, 3, 0.77)
    orbit.extend(1500)
    ref = hyperbolic_times_from_logs(orbit.logs, mixed.c)
    assert orbit.hyperbolic == ref.tolist()
    head = hyperbolic_times_from_logs(iterate(mixed, 3, 0.77, 25).log_contractions, mixed.c)
    assert [h for h in orbit.hyperbolic if h <= 25] == head.tolist()


def test_preball_contracts_at_hyperbolic_times(mixed):
    orbit = ExactOrbit(mixed, 0, 0.3)
    n_h = orbit.next_hyperbolic_time(100, 4096)
    pre = hyperbolic_preball(mixed, 0, 0.3, n_h, 1e-3)
    assert pre.certificate <= 1 + 1e-9
    assert pre.hi - pre.lo <= 2e-3 * math.exp(-mixed.c * n_h / 2) * (1 + 1e-9)
    other = ExactOrbit(mixed, 0, 0.999)
    other.extend(60)
    not_hyp = next(k for k in range(1, 60) if not other.is_hyperbolic(k))
    with pytest.raises(NotHyperbolicError):
        hyperbolic_preball(mixed, 0, 0.999, not_hyp, 1e-3)


def test_preball_certificate_failure_is_reported(mixed):
    orbit = ExactOrbit(mixed, 0, 0.3)
    n_h = orbit.next_hyperbolic_time(20, 4096)
    pre = hyperbolic_preball(mixed, 0, 0.3, n_h, 0.1)
    assert 0 < pre.certificate <= 1
    with pytest.raises(CertificateError):
        hyperbolic_preball(mixed, 0, 0.3, n_h, 0.1, tol=pre.certificate / 2 - 1)


def test_solver_reuses_the_orbit(mixed):
    solver = ReturnPointSolver(mixed, 0, 0.3)
    results = [solver.solve(n, 0.01) for n in (50, 100, 200)]
    for r in results:
        assert r.verified
        assert r.trace["hyperbolic_time"] >= r.n
        assert r.period == r.trace["hyperbolic_time"] + r.trace["exactness_time"]
        assert verify_return_point(mixed, r)[1] == 0.0


def test_solver_argument_checks(mixed):
    solver = ReturnPointSolver(mixed, 0, 0.3)
    with pytest.raises(ValueError):
        solver.solve(0, 0.01)
    with pytest.raises(ValueError):
        solver.solve(10, 0.3)


def test_search_horizon_error(trap):
    # the basin of 0 holds x = 0.02 forever: no hyperbolic time ever comes
    with pytest.raises(SearchHorizonError):
        find_return_point(trap, 0, 0.02, 10, 0.01, search_horizon=200)


def test_covering_error_when_the_cap_is_tiny(mixed):
    with pytest.raises(CoveringError):
        find_return_point(mixed, 0, 0.3, 50, 0.01, exactness_cap=0, search_horizon=20)


def test_later_hyperbolic_time_rescues_a_trapped_ball(mixed):
    # at n = 200 the first hyperbolic time leads the orbit into the basin of 0
    solver = ReturnPointSolver(mixed, 0, 0.3)
    res = solver.solve(200, 0.01)
    assert res.trace["attempts"] == 2 and res.verified
    tight = ReturnPointSolver(mixed, 0, 0.3, exactness_cap=2)
    r2 = tight.solve(200, 0.01)
    assert r2.trace["exactness_time"] <= 2 and r2.verified


def test_return_point_errors_share_a_base():
    for exc in (SearchHorizonError, CoveringError, CertificateError):
        assert issubclass(exc, ReturnPointError)


def test_periodic_points_doubling_period_three(doubling):
    pts = periodic_points(doubling, 0, 3, 0, Fraction(999999, 1000000))
    assert pts == [Fraction(k, 7) for k in range(7)]


def test_periodic_points_trap_fixed_points(trap):
    pts = periodic_points(trap, 0, 1, 0, Fraction(999999, 1000000))
    assert len(pts) == 4  # degree 4 circle map: d - 1 = 3 fixed points plus 0 counted once per branch
    for p in pts:
        assert trap.fibers[0].eval_exact(p) == p


def test_specification_statistics_small(mixed):
    rows = specification_statistics(mixed, 6, [20, 40], 0.02, seed=5)
    assert [r.n for r in rows] == [20, 40]
    assert all(r.samples == 6 and 0 <= r.failure_rate <= 1 for r in rows)
    again = specification_statistics(mixed, 6, [20, 40], 0.02, seed=5)
    assert rows == again
    with pytest.raises(ValueError):
        specification_statistics(mixed, 3, [40, 20], 0.02)
