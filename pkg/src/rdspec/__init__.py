"""Random circle-map skew products: hyperbolic times, return points and reference measures."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: E402
    BaseEnvironment,
    ConfigError,
    FiberMap,
    RandomSystem,
    doubling_map,
    iterate,
    iterate_exact,
    load_system,
    shipped_system,
    trap_map,
    validate_system,
)

__all__ = [
    "BaseEnvironment",
    "ConfigError",
    "FiberMap",
    "RandomSystem",
    "doubling_map",
    "iterate",
    "iterate_exact",
    "load_system",
    "shipped_system",
    "trap_map",
    "validate_system",
    "__version__",
]
