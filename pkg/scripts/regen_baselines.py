"""Recompute the frozen regression baselines in tests/fixtures/baselines.json.

Run after an intentional change to the numerics:

    python scripts/regen_baselines.py [--only NAME ...]

Every entry stores the parameters it was computed with; the tests replay
those parameters and compare against the stored values.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from rdspec.dynamics import iterate, shipped_system
from rdspec.hyperbolic import bad_set_measure, expansion_exponent, first_time_stats, hyperbolic_times, log_slope, nonlacunarity
from rdspec.measures import AtomicMeasure, kb_defects
from rdspec.returns import specification_statistics
from rdspec.sampling import sample_base_and_point

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "baselines.json"


def spec_stats(p):
    rows = specification_statistics(shipped_system(p["system"]), p["samples"], p["n_schedule"], p["eps"], seed=p["seed"])
    return {"median_K_over_n": [r.median_K_over_n for r in rows], "failure_rate": [r.failure_rate for r in rows]}


def bad_set(p):
    sys_ = shipped_system(p["system"])
    est = bad_set_measure(sys_, p["rho"], p["n_max"], p["G"], p["position"])
    ns = np.arange(1, p["n_max"] + 1)
    return {"measure": est.tolist(), "slope": log_slope(ns, est, 0.5 / p["G"])}


def expansion(p):
    sys_ = shipped_system(p["system"])
    finals = []
    for i in range(p["samples"]):
        base, pos, x = sample_base_and_point(sys_, p["seed"], i)
        finals.append(expansion_exponent(iterate(sys_.replace(base=base), pos, x, p["horizon"]))[1])
    return {"mean_final_average": float(np.mean(finals))}


def first_time(p):
    st = first_time_stats(shipped_system(p["system"]), p["samples"], p["horizon"], seed=p["seed"])
    return {"mean": st.mean, "censored": st.censored}


def lacunarity(p):
    sys_ = shipped_system(p["system"])
    out = []
    for horizon in p["horizons"]:
        tails = []
        for i in range(p["samples"]):
            base, pos, x = sample_base_and_point(sys_, p["seed"], i)
            rec = hyperbolic_times(iterate(sys_.replace(base=base), pos, x, horizon), sys_.c)
            tails.append(nonlacunarity(rec).tail_max if len(rec.times) >= 2 else np.nan)
        out.append(float(np.nanmedian(tails)))
    return {"median_tail_max": out}


def kb(p):
    res = kb_defects(shipped_system(p["system"]), AtomicMeasure.dirac(p["x0"]), p["ns"], base_samples=p["base_samples"], seed=p["seed"])
    return {"defects": [r.defect for r in res]}


BASELINES = {
    "spec_stats": (spec_stats, {"system": "mixed", "samples": 100, "n_schedule": [50, 100, 200, 400, 800, 1600, 3200], "eps": 0.01, "seed": 42}),
    "bad_set": (bad_set, {"system": "mixed", "rho": 0.95, "n_max": 40, "G": 10_000, "position": 0}),
    "expansion": (expansion, {"system": "mixed", "samples": 1000, "horizon": 1000, "seed": 42}),
    "first_time": (first_time, {"system": "mixed", "samples": 1000, "horizon": 2000, "seed": 42}),
    "nonlacunarity": (lacunarity, {"system": "mixed", "samples": 50, "horizons": [1000, 4000, 16000], "seed": 42}),
    "kb": (kb, {"system": "mixed", "x0": 0.3, "ns": [25, 50, 100, 200], "base_samples": 1024, "seed": 42}),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", nargs="*", choices=sorted(BASELINES))
    args = ap.parse_args()
    data = json.loads(FIXTURE.read_text()) if FIXTURE.exists() else {}
    for name in args.only or BASELINES:
        fn, params = BASELINES[name]
        t0 = time.perf_counter()
        data[name] = {"params": params, "values": fn(params)}
        print(f"{name}: {time.perf_counter() - t0:.1f}s {data[name]['values'] if name not in ('bad_set',) else data[name]['values']['slope']}")
    FIXTURE.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
