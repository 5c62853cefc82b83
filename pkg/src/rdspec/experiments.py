"""Named experiments: parameter schemas, runners and output writers.

Each experiment writes one or more CSV tables into the output directory, a
``manifest.json`` describing them, and plain-text series for plotting.  All
outputs are functions of (system, parameters, seed) only; the worker count
and the wall-clock time never reach them (timing goes to ``timing.json``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .dynamics import ConfigError, RandomSystem, iterate, shipped_system, validate_system
from .hyperbolic import (
    expansion_exponent,
    first_time_stats,
    hyperbolic_times,
    itinerary_count,
    log_slope,
    nonlacunarity,
    bad_set_measure,
    InsufficientDataError,
)
from .measures import (
    AtomicMeasure,
    Observable,
    atomic_disintegration_approx,
    fiber_average_comparison,
    kb_defects,
    return_orbit_measure,
    sum_comparison,
)
from .returns import ReturnPointError, ReturnPointSolver, specification_statistics, verify_return_point
from .sampling import sample_base_and_point, substream
from .transfer import (
    GridMeasure,
    dual_apply,
    jacobian_check,
    lambda_of,
    reference_measure_sequence,
)


def _int_list(value) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.replace(";", ",").split(",") if v.strip()]
    return [int(v) for v in value]


# parameter name -> (converter, default); a default of None means "required"
SCHEMAS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "validate": {},
    "hyp-times": {"x": (float, 0.3), "horizon": (int, 10_000), "c": (float, None), "position": (int, 0)},
    "first-time": {"samples": (int, 1000), "horizon": (int, 2000), "c": (float, None)},
    "bad-set": {"rho": (float, None), "n_max": (int, 40), "G": (int, 10_000), "position": (int, 0)},
    "itineraries": {"rho": (float, None), "n_max": (int, 40), "position": (int, 0)},
    "returns": {"samples": (int, 100), "n": (int, 500), "eps": (float, 0.01)},
    "spec-stats": {"samples": (int, 100), "n_schedule": (_int_list, [50, 100, 200, 400, 800, 1600, 3200]), "eps": (float, 0.01)},
    "transfer": {"G": (int, 4096), "T": (int, 20), "position": (int, 0)},
    "jacobian": {"G": (int, 4096), "arcs": (int, 100), "symbol": (int, None)},
    "corollary1": {"G": (int, 4096), "r": (_int_list, [10, 20, 40]), "position": (int, 0)},
    "corollary2": {"samples": (int, 20), "n": (int, 200), "eps": (float, 0.01), "G": (int, 1024), "T": (int, 200)},
    "kb-average": {"n_schedule": (_int_list, [25, 50, 100, 200]), "base_samples": (int, 256), "start": (str, "dirac"), "x0": (float, 0.3), "atoms": (int, 999)},
}

EXPERIMENTS = tuple(SCHEMAS)

# documented CSV headers, one list per table
HEADERS = {
    "validation.csv": ["hypothesis", "holds", "witness"],
    "hyp_times.csv": ["index", "time", "gap"],
    "hyp_summary.csv": ["c", "horizon", "count", "density", "first_time", "expansion_exponent", "nonlacunarity_tail_max"],
    "first_time.csv": ["n1", "count"],
    "first_time_tail.csv": ["n", "tail_probability"],
    "bad_set.csv": ["n", "measure"],
    "itineraries.csv": ["n", "count_strict", "count_geq", "rate_strict", "binomial_bound", "entropy_bound"],
    "returns.csv": ["index", "x", "n", "eps", "p", "period", "K", "shadow_error", "fixpoint_residual", "hyperbolic_time", "exactness_time", "verified", "error"],
    "spec_stats.csv": ["n", "eps", "samples", "median_K_over_n", "p90_K_over_n", "failure_rate"],
    "transfer.csv": ["step", "symbol", "lambda", "degree", "min_mass", "max_mass", "empty_cells"],
    "jacobian.csv": ["index", "a", "b", "lhs", "rhs", "relative_error", "mass_error"],
    "corollary1.csv": ["r", "w1", "bound", "placement_error", "grid_error"],
    "corollary2.csv": ["index", "n", "K", "observable", "difference", "bound", "fiber_average_w1"],
    "kb.csv": ["n", "defect", "bound"],
}

SERIES = {
    "spec-stats": ("spec_stats.csv", "n", "median_K_over_n", "K/n"),
    "bad-set": ("bad_set.csv", "n", "measure", "log_measure"),
    "corollary1": ("corollary1.csv", "r", "w1", "w1"),
    "kb-average": ("kb.csv", "n", "defect", "defect"),
    "first-time": ("first_time_tail.csv", "n", "tail_probability", "tail"),
}


def parse_parameters(experiment: str, given: dict[str, Any], sys: RandomSystem) -> dict[str, Any]:
    if experiment not in SCHEMAS:
        raise ConfigError(f"experiment: unknown name {experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
    schema = SCHEMAS[experiment]
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"parameters.{unknown[0]}: not a parameter of {experiment} (allowed: {', '.join(schema) or 'none'})")
    out = {}
    for key, (conv, default) in schema.items():
        if key in given:
            try:
                out[key] = conv(given[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"parameters.{key}: cannot read {given[key]!r} ({exc})") from None
        elif default is None:
            fallback = {"c": sys.c, "rho": sys.rho}.get(key)
            if fallback is None and key == "symbol":
                fallback = len(sys.fibers) - 1
            if fallback is None:
                raise ConfigError(f"parameters.{key}: required by {experiment}")
            out[key] = fallback
        else:
            out[key] = default
    return out


# -- small output helpers -------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


@dataclass
class RunContext:
    sys: RandomSystem
    params: dict
    seed: int
    out: Path
    pool: Any = None
    tables: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    assertion_errors: list = field(default_factory=list)

    def table(self, name: str, rows) -> None:
        self.tables[name] = _csv_text(HEADERS[name], rows)

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.assertion_errors.append(message)


# -- experiments ------------------------------------------------------------


def _validate(ctx: RunContext) -> None:
    rep = validate_system(ctx.sys)
    ctx.table("validation.csv", [(h.name, h.passed, h.witness) for h in rep.checks])
    ctx.failures["violations"] = len(rep.violations)
    ctx.check(rep.ok, f"hypotheses violated: {', '.join(rep.violations)}")


def _hyp_times(ctx: RunContext) -> None:
    p = ctx.params
    orbit = iterate(ctx.sys, p["position"], p["x"], p["horizon"])
    rec = hyperbolic_times(orbit, p["c"])
    times = rec.times
    gaps = np.diff(np.concatenate(([0], times)))
    ctx.table("hyp_times.csv", [(i, t, g) for i, (t, g) in enumerate(zip(times, gaps))])
    _, lam = expansion_exponent(orbit)
    try:
        tail = nonlacunarity(rec).tail_max
    except InsufficientDataError:
        tail = math.nan
    ctx.table("hyp_summary.csv", [(p["c"], p["horizon"], len(times), rec.density_at_horizon, rec.first_time, lam, tail)])


def _first_time(ctx: RunContext) -> None:
    p = ctx.params
    st = first_time_stats(ctx.sys, p["samples"], p["horizon"], p["c"], seed=ctx.seed, pool=ctx.pool)
    ctx.table("first_time.csv", sorted(st.histogram.items()))
    ctx.table("first_time_tail.csv", [(n, v) for n, v in enumerate(st.tail)])
    ctx.failures["censored"] = st.censored


def _bad_set(ctx: RunContext) -> None:
    p = ctx.params
    est = bad_set_measure(ctx.sys, p["rho"], p["n_max"], p["G"], p["position"])
    ns = np.arange(1, p["n_max"] + 1)
    ctx.table("bad_set.csv", zip(ns, est))
    slope = log_slope(ns, est, 0.5 / p["G"])
    ctx.notes.append(f"log-measure slope {slope!r}")
    if not any(f.contracting_region for f in ctx.sys.fibers):
        ctx.check(bool(np.all(est == 0)), "empty contracting region must give an empty bad set")


def _itineraries(ctx: RunContext) -> None:
    p = ctx.params
    rows = []
    for n in range(1, p["n_max"] + 1):
        it = itinerary_count(ctx.sys, p["rho"], n, p["position"])
        rows.append((n, it.count_strict, it.count_geq, it.rate_strict, it.binomial_bound, it.entropy_bound))
        ctx.check(it.count_strict <= it.binomial_bound, f"itinerary count exceeds the binomial bound at n={n}")
    ctx.table("itineraries.csv", rows)


def _return_task(args):
    sys, seed, index, n, eps = args
    base, pos, x = sample_base_and_point(sys, seed, index)
    s = sys.replace(base=base)
    try:
        r = ReturnPointSolver(s, pos, x).solve(n, eps)
    except ReturnPointError as exc:
        return (index, x, n, eps, None, None, None, None, None, None, None, False, type(exc).__name__)
    shadow, residual = verify_return_point(s, r)
    ok = shadow < eps and residual <= 1e-10
    return (index, x, n, eps, r.p, r.period, r.K, shadow, residual, r.trace["hyperbolic_time"], r.trace["exactness_time"], ok, "")


def _mapper(ctx: RunContext):
    return map if ctx.pool is None else ctx.pool.map


def _returns(ctx: RunContext) -> None:
    p = ctx.params
    tasks = [(ctx.sys, ctx.seed, i, p["n"], p["eps"]) for i in range(p["samples"])]
    rows = list(_mapper(ctx)(_return_task, tasks))
    ctx.table("returns.csv", rows)
    failed = [r for r in rows if r[-1]]
    ctx.failures["search_failures"] = len(failed)
    bad = [r[0] for r in rows if not r[-1] and not r[-2]]
    ctx.check(not bad, f"return points failed independent verification: samples {bad}")


def _spec_stats(ctx: RunContext) -> None:
    p = ctx.params
    rows = specification_statistics(ctx.sys, p["samples"], p["n_schedule"], p["eps"], seed=ctx.seed, pool=ctx.pool)
    ctx.table("spec_stats.csv", [(r.n, r.eps, r.samples, r.median_K_over_n, r.p90_K_over_n, r.failure_rate) for r in rows])
    ctx.failures["failure_rate_max"] = max((r.failure_rate for r in rows), default=0.0)


def _transfer(ctx: RunContext) -> None:
    p = ctx.params
    word = ctx.sys.base.symbols(p["position"], p["T"])
    seq, lams = reference_measure_sequence(ctx.sys, word, p["G"], return_lambdas=True)
    rows = []
    for k, s in enumerate(word):
        f = ctx.sys.fibers[s]
        lam = lambda_of(f, None, seq[k + 1])
        ctx.check(abs(lam - f.degree) <= 1e-12, f"lambda {lam} differs from the degree {f.degree} at step {k}")
        m = seq[k].masses
        rows.append((k, int(s), lam, f.degree, m.min(), m.max(), int(np.count_nonzero(m == 0))))
    ctx.table("transfer.csv", rows)


def _jacobian(ctx: RunContext) -> None:
    p = ctx.params
    f = ctx.sys.fibers[p["symbol"]]
    G = p["G"]
    leb = GridMeasure.lebesgue(G)
    lam = lambda_of(f, None, leb)
    mu = GridMeasure(dual_apply(f, None, leb).masses / lam)
    rng = substream(ctx.seed, 0)
    rows = []
    for i in range(p["arcs"]):
        j = int(rng.integers(f.degree))
        lo, hi = float(f.breakpoints[j]), float(f.breakpoints[j + 1])
        a, b = np.sort(rng.uniform(lo, hi, 2))
        res = jacobian_check(f, None, mu, leb, (float(a), float(b)), lam)
        rows.append((i, a, b, res.lhs, res.rhs, res.relative_error, res.mass_error))
        ctx.check(res.mass_error <= 2 / G + 1e-8, f"jacobian arc {i}: error {res.mass_error} above 2/G")
    ctx.table("jacobian.csv", rows)


def _corollary1(ctx: RunContext) -> None:
    p = ctx.params
    mu = GridMeasure.lebesgue(p["G"])
    rows = []
    for r in p["r"]:
        ap = atomic_disintegration_approx(ctx.sys, mu, p["position"], r)
        rows.append((r, ap.w1, ap.bound, ap.placement_error, ap.grid_error))
    ctx.table("corollary1.csv", rows)


def _corollary2_task(args):
    sys, seed, index, n, eps, G, T = args
    base, pos, x = sample_base_and_point(sys, seed, index)
    s = sys.replace(base=base)
    try:
        r = ReturnPointSolver(s, pos, x).solve(n, eps)
    except ReturnPointError:
        return None
    seq = reference_measure_sequence(s, s.base.symbols(pos, T), G)
    w1 = fiber_average_comparison(seq, T, return_orbit_measure(s, r))
    out = []
    for name, obs in (("cos1", Observable.cos(1)), ("sin2", Observable.sin(2)), ("const", Observable.constant(1.0))):
        sc = sum_comparison(s, r, obs)
        out.append((index, n, r.K, name, sc.difference, sc.bound, w1))
    return out


def _corollary2(ctx: RunContext) -> None:
    p = ctx.params
    tasks = [(ctx.sys, ctx.seed, i, p["n"], p["eps"], p["G"], p["T"]) for i in range(p["samples"])]
    results = list(_mapper(ctx)(_corollary2_task, tasks))
    ctx.failures["search_failures"] = sum(r is None for r in results)
    ctx.table("corollary2.csv", [row for r in results if r is not None for row in r])


def _kb_average(ctx: RunContext) -> None:
    p = ctx.params
    if p["start"] == "lebesgue":
        nu = AtomicMeasure.uniform_grid(p["atoms"])
    elif p["start"] == "dirac":
        nu = AtomicMeasure.dirac(p["x0"])
    else:
        raise ConfigError("parameters.start: expected 'lebesgue' or 'dirac'")
    res = kb_defects(ctx.sys, nu, p["n_schedule"], base_samples=p["base_samples"], seed=ctx.seed)
    ctx.table("kb.csv", [(r.n, r.defect, r.bound) for r in res])


RUNNERS: dict[str, Callable[[RunContext], None]] = {
    "validate": _validate,
    "hyp-times": _hyp_times,
    "first-time": _first_time,
    "bad-set": _bad_set,
    "itineraries": _itineraries,
    "returns": _returns,
    "spec-stats": _spec_stats,
    "transfer": _transfer,
    "jacobian": _jacobian,
    "corollary1": _corollary1,
    "corollary2": _corollary2,
    "kb-average": _kb_average,
}


# -- run ------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    experiment: str
    config_hash: str
    tool_version: str
    seed: int
    parameters: dict
    outputs: list
    failure_counts: dict
    notes: list
    assertion_errors: list
    wall_time: float = 0.0  # written to timing.json, never to manifest.json

    @property
    def ok(self) -> bool:
        return not self.assertion_errors

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "parameters": self.parameters,
            "outputs": self.outputs,
            "failure_counts": self.failure_counts,
            "notes": self.notes,
            "assertion_errors": self.assertion_errors,
        }


class _OrderedPool:
    """Process pool whose ``map`` returns results in input order."""

    def __init__(self, jobs: int):
        self._ex = ProcessPoolExecutor(max_workers=jobs)
        self._jobs = jobs

    def map(self, fn, items):
        items = list(items)
        chunk = max(1, len(items) // (4 * self._jobs))
        return list(self._ex.map(fn, items, chunksize=chunk))

    def close(self):
        self._ex.shutdown()


def config_hash(sys: RandomSystem, experiment: str, params: dict, seed: int) -> str:
    blob = json.dumps({"system": sys.to_dict(), "experiment": experiment, "parameters": params, "seed": seed}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def run(
    experiment: str,
    sys: RandomSystem | None = None,
    parameters: dict | None = None,
    *,
    seed: int | None = None,
    out: str | Path = "out",
    jobs: int = 1,
) -> RunManifest:
    """Run one experiment and write its tables, series and manifest into ``out``."""
    sys = shipped_system("mixed") if sys is None else sys
    if experiment not in SCHEMAS:
        raise ConfigError(f"experiment: unknown name {experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
    if seed is not None:
        sys = sys.with_seed(int(seed))
    seed = sys.base.master_seed
    params = parse_parameters(experiment, parameters or {}, sys)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    pool = _OrderedPool(jobs) if jobs > 1 else None
    ctx = RunContext(sys, params, seed, out, pool)
    try:
        RUNNERS[experiment](ctx)
    finally:
        if pool is not None:
            pool.close()
    for name, text in ctx.tables.items():
        (out / name).write_text(text)
    jsonable = {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in params.items()}
    manifest = RunManifest(
        experiment,
        config_hash(sys, experiment, jsonable, seed),
        __version__,
        seed,
        jsonable,
        sorted(ctx.tables),
        ctx.failures,
        ctx.notes,
        ctx.assertion_errors,
        time.perf_counter() - t0,
    )
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"wall_time_seconds": manifest.wall_time}) + "\n")
    if experiment in SERIES:
        emit_plot_series(out)
    return manifest


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def emit_plot_series(out: str | Path) -> list[Path]:
    """Two-column ``x y`` series files next to the manifest."""
    out = Path(out)
    mpath = out / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"no manifest in {out}")
    manifest = json.loads(mpath.read_text())
    exp = manifest.get("experiment")
    if exp not in SERIES:
        raise ValueError(f"experiment {exp!r} has no plot series")
    table, xcol, ycol, label = SERIES[exp]
    if table not in manifest.get("outputs", []):
        raise FileNotFoundError(f"manifest lists no {table}")
    header, rows = _read_csv(out / table)
    xi, yi = header.index(xcol), header.index(ycol)
    xs = np.array([float(r[xi]) for r in rows if r[yi] not in ("", "nan")])
    ys = np.array([float(r[yi]) for r in rows if r[yi] not in ("", "nan")])
    lines = [f"# {exp}: {xcol} vs {label}"]
    if exp == "bad-set":
        G = manifest["parameters"]["G"]
        floor = 0.5 / G
        lines.append(f"# least-squares slope of log(max(measure, {floor!r})) vs n: {log_slope(xs, ys, floor)!r}")
        ys = np.log(np.maximum(ys, floor))
    lines += [f"{x!r} {y!r}" for x, y in zip(xs.tolist(), ys.tolist())]
    path = out / f"series_{label.replace('/', '_over_')}.txt"
    path.write_text("\n".join(lines) + "\n")
    return [path]
