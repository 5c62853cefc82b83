"""Frozen Monte Carlo baselines, replayed with their stored parameters."""

import importlib.util
import json
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
BASELINES = json.loads((ROOT / "tests" / "fixtures" / "baselines.json").read_text())

spec = importlib.util.spec_from_file_location("regen_baselines", ROOT / "scripts" / "regen_baselines.py")
regen = importlib.util.module_from_spec(spec)
spec.loader.exec_module(regen)


def _replay(name):
    fn, _ = regen.BASELINES[name]
    stored = BASELINES[name]
    return fn(stored["params"]), stored


def test_expansion_exponent_is_below_minus_two_c():
    got, stored = _replay("expansion")
    assert got == stored["values"]
    assert got["mean_final_average"] <= -2 * 0.02


def test_first_time_mean():
    got, stored = _replay("first_time")
    assert got == stored["values"]
    assert got["censored"] == 0


def test_nonlacunarity_tail_decreases_with_horizon():
    got, stored = _replay("nonlacunarity")
    assert got["median_tail_max"] == pytest.approx(stored["values"]["median_tail_max"], rel=1e-12)
    tails = got["median_tail_max"]
    assert all(b < a for a, b in zip(tails, tails[1:]))


def test_stored_parameters_match_the_generator():
    for name, (_, params) in regen.BASELINES.items():
        assert BASELINES[name]["params"] == params, name
