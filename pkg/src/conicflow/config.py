"""Run configuration: defaults per scenario, JSON file loading, validation."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError
from .geometry import MIN_NODES, Scenario
from .regularization import k_max, validate_ladder
from .scenarios import get_scenario
from .schedule import ClassSchedule, build_schedule
from .solver import SCHEMES, StopPolicy

OUTPUT_ENV = "CONICFLOW_OUTPUT_DIR"


@dataclass
class RunConfig:
    scenario: str = "round-collapse"
    N: int = 512
    beta: float | None = None
    k: float | str | None = None
    eps_ladder: tuple[float, ...] | None = None
    t_stop: float = 1.0 - 1e-3
    c_cfl: float = 0.9
    scheme: str = "ros2"
    max_conditioning: float | None = 100.0
    output_dir: str | None = None
    workers: int = 1
    checkpoints: bool = False
    auxiliary: bool = False

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(extra))}")
        cfg = cls(**data)
        if cfg.eps_ladder is not None:
            cfg.eps_ladder = tuple(float(e) for e in cfg.eps_ladder)
        return cfg

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a JSON object")
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["eps_ladder"] is not None:
            d["eps_ladder"] = list(d["eps_ladder"])
        return d

    def output_path(self) -> Path:
        root = os.environ.get(OUTPUT_ENV) or self.output_dir or "conicflow_output"
        return Path(root)


@dataclass
class ResolvedRun:
    """A validated configuration with the scenario and schedule built."""

    config: RunConfig
    scenario: Scenario
    schedule: ClassSchedule
    eps_ladder: tuple[float, ...]
    k_max: float
    policy: StopPolicy = field(default_factory=StopPolicy)


def resolve(cfg: RunConfig) -> ResolvedRun:
    """Validate every parameter before any time step is taken."""
    entry = get_scenario(cfg.scenario)
    if int(cfg.N) != cfg.N or cfg.N < MIN_NODES:
        raise ConfigurationError(f"N must be an integer >= {MIN_NODES}")
    if cfg.scheme not in SCHEMES:
        raise ConfigurationError(f"scheme must be one of {', '.join(SCHEMES)}")
    if not 0.0 < cfg.c_cfl <= 1.0:
        raise ConfigurationError("c_cfl must lie in (0, 1]")
    if int(cfg.workers) != cfg.workers or cfg.workers < 1:
        raise ConfigurationError("workers must be a positive integer")
    beta = entry.beta if cfg.beta is None else float(cfg.beta)
    ladder = entry.eps_ladder if cfg.eps_ladder is None else tuple(cfg.eps_ladder)
    validate_ladder(ladder)
    probe = entry.build(int(cfg.N), beta, 0.0)
    sched = build_schedule(probe)
    kmax = k_max(probe, sched)
    k = entry.k if cfg.k is None else cfg.k
    if k == "auto":
        k = 0.5 * kmax if math.isfinite(kmax) else 0.0
    try:
        k = float(k)
    except (TypeError, ValueError):
        raise ConfigurationError(f"k must be a number or 'auto', got {k!r}") from None
    if k < 0:
        raise ConfigurationError("k must be non-negative")
    if entry.has_cone and not k < kmax:
        raise ConfigurationError(
            f"k = {k:g} violates the positivity threshold k < k_max = {kmax:.6g}"
        )
    scenario = entry.build(int(cfg.N), beta, k)
    policy = StopPolicy(cfg.t_stop, max_conditioning=cfg.max_conditioning)
    return ResolvedRun(cfg, scenario, build_schedule(scenario), ladder, kmax, policy)
