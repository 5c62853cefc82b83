import math
from fractions import Fraction

import numpy as np
import pytest

from rdspec.dynamics import iterate
from rdspec.measures import (
    AtomicMeasure,
    BoundViolation,
    MeasureError,
    Observable,
    atomic_disintegration_approx,
    birkhoff_average,
    fiber_average_comparison,
    kb_defects,
    krylov_bogolioubov,
    return_orbit,
    return_orbit_measure,
    sum_comparison,
    test_family as make_test_family,
    wasserstein1,
    wasserstein1_grid,
    wasserstein1_lp,
)
from rdspec.returns import ReturnPointResult, find_return_point
from rdspec.transfer import GridMeasure, reference_measure_sequence


# -- atomic measures and observables -----------------------------------------


def test_atomic_measure_validation():
    with pytest.raises(MeasureError):
        AtomicMeasure([0.1, 0.2], [1.0])
    with pytest.raises(MeasureError):
        AtomicMeasure([1.0], [1.0])
    with pytest.raises(MeasureError):
        AtomicMeasure([0.5], [-1.0])
    mu = AtomicMeasure([0.7, 0.2], [0.25, 0.75])
    assert mu.positions.tolist() == [0.2, 0.7] and mu.weights.tolist() == [0.75, 0.25]


def test_uniform_grid_atoms_are_exact_cell_centres():
    mu = AtomicMeasure.uniform_grid(5)
    assert mu.exact == tuple(Fraction(2 * i + 1, 10) for i in range(5))
    assert mu.normalized


def test_merged_combines_coincident_atoms():
    mu = AtomicMeasure([0.3, 0.3, 0.6], [0.2, 0.3, 0.5]).merged()
    assert mu.positions.tolist() == [0.3, 0.6] and mu.weights.tolist() == [0.5, 0.5]


def test_observables():
    assert Observable.cos(2)(np.array([0.0, 0.25])) == pytest.approx([1.0, -1.0])
    assert Observable.sin(1).sup_norm == 1.0
    assert Observable.cos(3).lipschitz == pytest.approx(6 * math.pi)
    tent = Observable.table([0.0, 0.5], [0.0, 1.0])
    assert tent(np.array([0.25, 0.75, 0.95])) == pytest.approx([0.5, 0.5, 0.1])
    assert tent.sup_norm == 1.0 and tent.lipschitz == pytest.approx(2.0)
    with pytest.raises(MeasureError):
        Observable("spline")


# -- W1 --------------------------------------------------------------------------


def test_w1_between_diracs_is_the_circle_distance():
    assert wasserstein1(AtomicMeasure.dirac(0.1), AtomicMeasure.dirac(0.9)) == pytest.approx(0.2)
    assert wasserstein1(AtomicMeasure.dirac(0.1), AtomicMeasure.dirac(0.4)) == pytest.approx(0.3)


def test_w1_uses_the_wraparound():
    mu = AtomicMeasure.uniform([0.05, 0.55])
    nu = AtomicMeasure.uniform([0.95, 0.45])
    assert wasserstein1(mu, nu) == pytest.approx(0.1)
    assert wasserstein1_lp(mu, nu) == pytest.approx(0.1)


def test_w1_requires_normalized():
    with pytest.raises(MeasureError):
        wasserstein1(AtomicMeasure([0.1], [2.0]), AtomicMeasure.dirac(0.2))


def test_w1_grid_of_lebesgue_against_uniform_atoms():
    G = 1000
    w1, err = wasserstein1_grid(GridMeasure.lebesgue(G), AtomicMeasure.uniform((np.arange(10) + 0.5) / 10))
    assert err == 1 / (2 * G)
    assert abs(w1 - 1 / 40) <= err


# -- Birkhoff sums and return orbits -------------------------------------------------


def test_birkhoff_average(doubling):
    orbit = iterate(doubling, 0, 1 / 3, 10)  # period 2 orbit 1/3, 2/3
    assert birkhoff_average(orbit, Observable.cos(1), 10) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        birkhoff_average(orbit, Observable.cos(1), 0)


def test_return_orbit_measure(doubling):
    res = find_return_point(doubling, 0, 0.3, 3, 0.05)
    orbit = return_orbit(doubling, res)
    assert len(orbit) == res.period and orbit[0] == res.p_exact
    mu = return_orbit_measure(doubling, res)
    assert mu.normalized and len(mu) == 6
    assert Fraction(38, 63) in mu.exact


def test_unverified_results_are_refused(doubling):
    bogus = ReturnPointResult(0.3, 3, 0, 3, 0.05, 0.0, 0.1)
    with pytest.raises(MeasureError):
        return_orbit(doubling, bogus)


def test_sum_comparison_bound(mixed):
    res = find_return_point(mixed, 0, 0.3, 40, 0.01)
    for obs in make_test_family(3):
        cmp = sum_comparison(mixed, res, obs)
        assert cmp.difference <= cmp.bound


def test_sum_comparison_with_no_overshoot(doubling):
    res = find_return_point(doubling, 0, 0.0, 5, 0.01)
    assert sum_comparison(doubling, res, Observable.cos(1)).difference == 0.0


# -- Corollary 1 --------------------------------------------------------------------


def test_atomic_approximation_of_lebesgue(mixed):
    approx = atomic_disintegration_approx(mixed, GridMeasure.lebesgue(1024), 0, 10)
    assert len(approx.return_points) == 10
    assert approx.w1 <= approx.bound + approx.grid_error
    assert approx.measure.normalized


def test_atomic_approximation_eps_limit(mixed):
    with pytest.raises(ValueError):
        atomic_disintegration_approx(mixed, GridMeasure.lebesgue(256), 0, 10, eps=0.2)


def test_fiber_average_comparison(mixed):
    seq = reference_measure_sequence(mixed, mixed.base.symbols(0, 8), 512)
    res = find_return_point(mixed, 0, 0.3, 8, 0.05)
    w1 = fiber_average_comparison(seq, 8, return_orbit_measure(mixed, res))
    assert 0 <= w1 <= 0.5
    with pytest.raises(ValueError):
        fiber_average_comparison(seq, 0, return_orbit_measure(mixed, res))


# -- Krylov-Bogolioubov ---------------------------------------------------------------


def test_family_size():
    assert len(make_test_family(3)) == 7


def test_invariant_start_has_no_defect(doubling):
    res = kb_defects(doubling, AtomicMeasure.uniform_grid(99), [1, 10, 50])
    assert all(r.defect <= 1e-12 for r in res)


def test_defect_obeys_telescoping_bound(mixed):
    res = kb_defects(mixed, AtomicMeasure.dirac(0.3), [5, 10, 20], base_samples=32)
    for r in res:
        assert r.defect <= r.bound


def test_float_atoms_collapse_under_doubling(doubling):
    # a float is a dyadic rational, so doubling sends it to 0 in at most ~53 steps
    orbit = iterate(doubling, 0, 0.3, 60)
    assert orbit.points[-1] == 0.0
    exact = kb_defects(doubling, AtomicMeasure.uniform_grid(9), [60])[0].defect
    assert exact <= 1e-12


def test_krylov_bogolioubov_marginal(mixed):
    res = krylov_bogolioubov(mixed, AtomicMeasure.dirac(0.3), 20, base_samples=16)
    assert res.fiber_marginal.normalized
    assert res.defect <= res.bound


def test_kb_needs_normalized_start(mixed):
    with pytest.raises(MeasureError):
        kb_defects(mixed, AtomicMeasure([0.3], [0.5]), [5])


def test_bound_violation_is_an_assertion():
    assert issubclass(BoundViolation, AssertionError)
