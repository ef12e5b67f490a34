"""Run configuration: defaults, key=value files, and validation.

Config files hold one `key = value` pair per line with # comments; keys use
the field names below. Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


class ConfigError(ValueError):
    """Invalid configuration value or file."""


@dataclass
class RunConfig:
    k: int = 5
    alpha: float = 1.1
    seed: int = 0
    tol: float = 1e-6
    max_iters: int = 500
    test_fraction: float = 0.2
    grounding_cap: int = 10_000_000
    # stochastic schedule
    node_fraction: float = 0.1
    tau0: float = 1024.0
    kappa: float = 0.9
    iterations: int = 48000
    trace_every: int = 100
    # inner solver
    admm_rho: float = 1.0
    admm_eps_abs: float = 1e-5
    admm_eps_rel: float = 1e-4
    admm_max_iters: int = 1000
    # rule-weight learning
    learn_rate: float = 0.1
    weight_iterations: int = 100
    weight_floor: float = 0.0
    weight_cap: float = 100.0
    # distributed
    max_staleness: int = 16
    workers_expected: int = 1
    threads: int = 0  # handler thread cap; 0 picks a default

    def validate(self) -> "RunConfig":
        checks = [
            (self.k >= 1, "k must be >= 1"),
            (self.alpha > 0.0, "alpha must be positive"),
            (self.tol > 0.0, "tol must be positive"),
            (self.max_iters >= 0, "max_iters must be >= 0"),
            (0.0 < self.test_fraction < 1.0, "test_fraction must lie in (0, 1)"),
            (self.grounding_cap >= 1, "grounding_cap must be >= 1"),
            (0.0 < self.node_fraction <= 1.0, "node_fraction must lie in (0, 1]"),
            (self.tau0 >= 0.0, "tau0 must be >= 0"),
            (0.5 < self.kappa <= 1.0, "kappa must lie in (0.5, 1]"),
            (self.iterations >= 0, "iterations must be >= 0"),
            (self.trace_every >= 1, "trace_every must be >= 1"),
            (self.admm_rho > 0.0, "admm_rho must be positive"),
            (self.admm_eps_abs > 0.0, "admm_eps_abs must be positive"),
            (self.admm_eps_rel > 0.0, "admm_eps_rel must be positive"),
            (self.admm_max_iters >= 1, "admm_max_iters must be >= 1"),
            (self.learn_rate >= 0.0, "learn_rate must be >= 0"),
            (self.weight_iterations >= 0, "weight_iterations must be >= 0"),
            (self.weight_floor >= 0.0, "weight_floor must be >= 0"),
            (self.weight_cap >= self.weight_floor, "weight_cap must be >= weight_floor"),
            (self.max_staleness >= 0, "max_staleness must be >= 0"),
            (self.workers_expected >= 1, "workers_expected must be >= 1"),
            (self.threads >= 0, "threads must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError("value %r for %s is not a number" % (raw, key)) from None


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError("%s:%d: expected key = value" % (path, lineno))
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ConfigError("%s:%d: unknown key %r" % (path, lineno, key))
            setattr(cfg, key, _convert(key, raw))
    return cfg


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Set non-None overrides (flag values beat file values)."""
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError("unknown config key %r" % key)
        setattr(cfg, key, value)
    return cfg
