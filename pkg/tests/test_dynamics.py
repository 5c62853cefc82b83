import math
from fractions import Fraction

import numpy as np
import pytest

from rdspec.dynamics import (
    BaseEnvironment,
    ConfigError,
    ExactnessError,
    FiberMap,
    RandomSystem,
    circle_distance,
    doubling_map,
    exactness_time,
    iterate,
    iterate_exact,
    load_system,
    preimages,
    shipped_system,
    trap_map,
    validate_system,
)

from oracles import exactness_oracle, reference_orbit


# -- base ------------------------------------------------------------------


def test_base_weights_must_be_a_probability_vector():
    with pytest.raises(ConfigError):
        BaseEnvironment([0.5, 0.6])
    with pytest.raises(ConfigError):
        BaseEnvironment([1.2, -0.2])
    BaseEnvironment([0.3, 0.7 + 5e-13])


def test_lazy_extension_is_order_independent():
    a = BaseEnvironment([0.2, 0.8], 7)
    b = BaseEnvironment([0.2, 0.8], 7)
    first = [a.symbol(i) for i in (5000, -3, 0, 1023, 1024)]
    b.extend(-5000, 6000)
    assert [b.symbol(i) for i in (5000, -3, 0, 1023, 1024)] == first
    assert b.realized_window[0] <= -5000 and b.realized_window[1] >= 6000


def test_shift_then_unshift_restores_symbols():
    base = BaseEnvironment([0.5, 0.5], 3)
    word = base.symbols(-10, 40)
    shifted = base.symbols(-9, 40)  # theta(w) read from one position later
    assert np.array_equal(shifted[:-1], word[1:])
    assert np.array_equal(base.symbols(-10, 40), word)


def test_symbol_frequencies_follow_the_weights():
    base = BaseEnvironment([0.2, 0.8], 42)
    freq = base.symbols(0, 100_000).mean()
    assert abs(freq - 0.8) < 0.01


# -- fiber maps --------------------------------------------------------------


def test_malformed_breakpoints_name_the_branch():
    with pytest.raises(ConfigError, match="branch 1"):
        FiberMap([0, 0.5, 0.5, 1], [(0, 0.5, 2, 0), (0.5, 1, 2, 0)])
    with pytest.raises(ConfigError):
        FiberMap([0.1, 0.5, 1], [(0.1, 0.5, 2, 0), (0.5, 1, 2, 0)])


def test_branch_that_does_not_cover_the_circle_is_rejected():
    with pytest.raises(ConfigError, match="does not map onto"):
        FiberMap([0, 0.5, 1], [(0, 0.5, 1.5, 0), (0.5, 1, 2, 0)])


@pytest.mark.parametrize("f", [doubling_map(), trap_map()], ids=["doubling", "trap"])
def test_every_point_has_degree_many_preimages(f):
    for y in np.linspace(0, 1, 97, endpoint=False):
        pre = preimages(f, y)
        assert len(pre) == f.degree
        assert [b for _, b in pre] == list(range(f.degree))
        for x, _ in pre:
            assert 0 <= x < 1
            assert circle_distance(f(x), y) < 1e-12


def test_doubling_preimages():
    f = doubling_map()
    assert [x for x, _ in preimages(f, 0.5)] == [0.25, 0.75]
    assert [x for x, _ in preimages(f, 0.0)] == [0.0, 0.5]


def test_trap_preimages_of_point_seven():
    f = trap_map()
    pts = [x for x, _ in preimages(f, 0.7)]
    assert len(pts) == 4
    assert all(abs(f(x) - 0.7) < 1e-12 for x in pts)
    # the first lands on the steep piece of branch 0, past the contracting region
    assert 0.05 < pts[0] < 0.3


def test_inverse_lipschitz_is_reciprocal_slope():
    f = trap_map()
    assert f.inverse_lipschitz(0.01) == pytest.approx(1 / 0.9)
    assert f.inverse_lipschitz(0.1) == pytest.approx(1 / 3.82)
    assert f.inverse_lipschitz(0.9) == pytest.approx(0.7 / 3)
    assert f.in_contracting_region(0.049) and not f.in_contracting_region(0.05)


def test_exact_and_float_evaluation_agree():
    f = trap_map()
    for x in np.linspace(0, 1, 200, endpoint=False):
        assert abs(float(f.eval_exact(Fraction(x))) - f(x)) < 1e-14


# -- orbits ------------------------------------------------------------------


def test_doubling_orbit(doubling):
    orbit = iterate(doubling, 0, 0.3, 2)
    assert orbit.points == pytest.approx([0.3, 0.6, 0.2], abs=1e-15)
    assert orbit.log_contractions == pytest.approx([-math.log(2)] * 2)


def test_zero_is_fixed_for_doubling(doubling):
    assert np.all(iterate(doubling, 0, 0.0, 50).points == 0.0)


def test_mixed_orbit_matches_reference_evaluator(mixed):
    ref = reference_orbit(mixed, 0, 0.123, 10)
    orbit = iterate(mixed, 0, 0.123, 10)
    assert iterate_exact(mixed, 0, 0.123, 10) == ref
    for j in range(10):
        f = mixed.fiber_at(j)
        # one step of the reference applied to the float point reproduces the next point
        step = float(ref[0]) if j == 0 else orbit.points[j]
        assert circle_distance(f(step), orbit.points[j + 1]) < 1e-14
    assert max(abs(float(r) - p) for r, p in zip(ref, orbit.points)) < 1e-9


def test_orbit_records_the_piece_logs_and_branches(mixed):
    orbit = iterate(mixed, 5, 0.77, 200)
    for j in range(200):
        f = mixed.fiber_at(5 + j)
        x = orbit.points[j]
        assert orbit.log_contractions[j] == pytest.approx(math.log(f.inverse_lipschitz(x)))
        assert orbit.branch_itinerary[j] == f.branch_index(x)


def test_orbit_composition(mixed):
    n, m = 30, 25
    whole = iterate(mixed, 3, 0.41, n + m)
    tail = iterate(mixed, 3 + n, whole.points[n], m)
    assert np.array_equal(whole.points[n:], tail.points)


def test_iterate_rejects_points_off_the_circle(mixed):
    with pytest.raises(ValueError):
        iterate(mixed, 0, 1.0, 3)


# -- exactness time ------------------------------------------------------------


@pytest.mark.parametrize("x", [0.0, 0.123, 0.5, 0.97])
def test_doubling_exactness_time(doubling, x):
    assert exactness_time(doubling, 0, x, 0.1) == 3


def test_large_ball_is_already_exact(trap):
    assert exactness_time(trap, 0, 0.3, 0.5) == 0
    assert exactness_time(trap, 0, 0.3, 0.7) == 0


@pytest.mark.parametrize("name", ["trap", "mixed"])
def test_exactness_time_is_monotone_in_eps(name):
    sys_ = shipped_system(name)
    for x in (0.0, 0.4, 0.9, 0.2718):
        times = [exactness_time(sys_, 0, x, e) for e in (0.001, 0.005, 0.01, 0.05, 0.2)]
        assert times == sorted(times, reverse=True)
        assert times[2] == exactness_oracle(sys_, 0, x, 0.01)


def test_ball_inside_the_trap_basin_never_covers(trap, mixed):
    # (0, 0.05) is mapped into itself by the slope-0.9 piece: the lone trap map
    # is not exact from there, and the cap reports it
    with pytest.raises(ExactnessError):
        exactness_time(trap, 0, 0.02, 0.01)
    assert exactness_oracle(trap, 0, 0.02, 0.01) is None
    # a doubling step in the mixed system pushes the ball out
    assert exactness_time(mixed, 0, 0.02, 0.01) == exactness_oracle(mixed, 0, 0.02, 0.01)


def test_exactness_cap_is_reported(trap):
    with pytest.raises(ExactnessError, match="not certified"):
        exactness_time(trap, 0, 0.0, 1e-6, max_iter=3)


# -- hypotheses ---------------------------------------------------------------


def test_doubling_violates_V_at_c_point_three(doubling):
    report = validate_system(doubling.replace(c=0.3))
    assert report.violations == ["V"]
    assert "0.933" in report["V"].witness


def test_doubling_valid_at_small_c(doubling):
    assert validate_system(doubling.replace(c=0.03)).ok


def test_q_equal_to_degree_violates_II():
    f = FiberMap([0, 0.5, 1], [(0, 0.5, 2, 0), (0.5, 1, 2, 0)], q=2)
    sys_ = RandomSystem(BaseEnvironment([1.0]), (f,), 0.1, 0.01, 0.9)
    assert "II" in validate_system(sys_).violations


def test_trap_configuration_fails_only_V(trap):
    # L_hat^rho sigma_hat^-(1-rho) = (1/0.9)^0.95 * 3.82^-0.05 > 1, so (V) cannot
    # hold for any c > 0; everything else passes
    report = validate_system(trap)
    assert report.violations == ["V"]
    lhs = (1 / 0.9) ** 0.95 * 3.82 ** (-0.05)
    assert lhs > 1
    assert f"{lhs:.6g}" in report["V"].witness
    assert "automatically" in report["H1"].witness and "automatically" in report["H3"].witness


def test_trap_fiber_satisfies_V_at_smaller_rho(trap):
    # the threshold is rho < log 3.82 / log(3.82 / 0.9) ~ 0.927
    assert validate_system(trap.replace(rho=0.9, c=0.005)).ok


def test_shrinking_the_contracting_region_removes_violations():
    f = trap_map()
    looser = FiberMap(f.breakpoints, [(p.lo, p.hi, float(p.slope), p.image_lo) for p in f.pieces], [], sigma=0.95, L_bound=1.0, q=1)
    sys_ = RandomSystem(BaseEnvironment([1.0]), (looser,), 0.5, 0.02, 0.95)
    # without A, the slope-0.9 piece is outside A and breaks (I)
    assert "I" in validate_system(sys_).violations


def test_config_round_trip(tmp_path, mixed):
    import json

    path = tmp_path / "sys.json"
    path.write_text(json.dumps(mixed.to_dict()))
    again = load_system(path)
    assert again.to_dict() == mixed.to_dict()
    assert np.array_equal(again.base.symbols(0, 500), mixed.base.symbols(0, 500))


def test_unknown_shipped_system():
    with pytest.raises(ConfigError):
        shipped_system("nope")


def test_systems_survive_pickling(mixed):
    import pickle

    again = pickle.loads(pickle.dumps(mixed))
    assert np.array_equal(again.base.symbols(-100, 3000), mixed.base.symbols(-100, 3000))
