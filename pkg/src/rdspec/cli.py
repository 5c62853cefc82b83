"""Command line entry point: ``rdspec <experiment> [options]``.

Exit codes: 0 success, 2 configuration error, 3 assertion failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dynamics import ConfigError, ExactnessError, RandomSystem, load_system, shipped_system
from .experiments import EXPERIMENTS, SCHEMAS, run
from .measures import BoundViolation
from .returns import ReturnPointError
from .transfer import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_ASSERTION, EXIT_NUMERICAL = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdspec", description="Run an experiment on a random circle-map system.")
    p.add_argument("experiment", help=f"one of: {', '.join(EXPERIMENTS)}")
    p.add_argument("--config", help="system JSON, or experiment JSON with 'system' and 'parameters'")
    p.add_argument("--system", default=None, help="shipped system name (doubling, trap, mixed); default mixed")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-p", "--param", action="append", default=[], metavar="KEY=VALUE", help="experiment parameter")
    return p


def _load(args) -> tuple[RandomSystem, dict, int | None]:
    params: dict = {}
    seed = args.seed
    if args.config and args.system:
        raise ConfigError("use either --config or --system, not both")
    if args.config:
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config: file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        if "system" in data:
            exp = data.get("experiment")
            if exp is not None and exp != args.experiment:
                raise ConfigError(f"experiment: config names {exp!r} but {args.experiment!r} was requested")
            system = data["system"]
            sys_ = shipped_system(system) if isinstance(system, str) else RandomSystem.from_dict(system)
            params = dict(data.get("parameters", {}))
            if seed is None and "master_seed" in data:
                seed = int(data["master_seed"])
        else:
            sys_ = load_system(path)
    else:
        sys_ = shipped_system(args.system or "mixed")
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param {item!r}: expected KEY=VALUE")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    return sys_, params, seed


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.experiment not in SCHEMAS:
            raise ConfigError(f"experiment: unknown name {args.experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        sys_, params, seed = _load(args)
        manifest = run(args.experiment, sys_, params, seed=seed, out=args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BoundViolation, AssertionError) as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    except (ReturnPointError, ExactnessError, NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for note in manifest.notes:
        print(note)
    if not manifest.ok:
        for err in manifest.assertion_errors:
            print(f"assertion failure: {err} (seed {manifest.seed})", file=sys.stderr)
        return EXIT_ASSERTION
    print(f"{args.experiment}: wrote {', '.join(manifest.outputs)} to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
