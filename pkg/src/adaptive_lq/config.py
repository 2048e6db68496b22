"""Run configuration read from a TOML file.

Example::

    seed = 0
    grid_counts = [20, 20]
    output_dir = "runs/desk"
    checkpoint = "runs/desk/checkpoint"   # optional

    [problem]
    family = "heat"          # or "scalar"
    inner_points = 50
    time_steps = 600

    [hierarchy]
    tolerance = 1e-4
    retrain_interval = 5

    [kernel]
    shape = 1.0

Relative paths are resolved against the config file's directory. The
environment variable ``ADAPTIVE_LQ_OUTPUT_DIR`` overrides ``output_dir``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from functools import partial
from pathlib import Path

import tomli

from .heat1d import HeatConfig, ScalarConfig, build_heat_problem, build_scalar_problem
from .hierarchy import HierarchyConfig
from .mlrom import KernelConfig

__all__ = ["OUTPUT_DIR_ENV", "ConfigError", "RunConfig", "load_run_config", "parse_run_config"]

OUTPUT_DIR_ENV = "ADAPTIVE_LQ_OUTPUT_DIR"
FAMILIES = {"heat": (HeatConfig, build_heat_problem), "scalar": (ScalarConfig, build_scalar_problem)}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: HeatConfig | ScalarConfig
    hierarchy: HierarchyConfig
    grid_counts: tuple[int, ...] = (20, 20)
    seed: int = 0
    output_dir: Path = Path("runs/default")
    checkpoint: Path | None = None

    @property
    def family(self) -> str:
        return "scalar" if isinstance(self.problem, ScalarConfig) else "heat"

    def problem_builder(self):
        return partial(FAMILIES[self.family][1], self.problem)

    @property
    def bounds(self):
        return self.problem.bounds


def _build(cls, section: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"[{where}]: unknown keys {sorted(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _resolve(path, base: Path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else base / path


def parse_run_config(data: dict, base: Path = Path(".")) -> RunConfig:
    data = dict(data)
    problem = dict(data.pop("problem", {}))
    family = problem.pop("family", "heat")
    if family not in FAMILIES:
        raise ConfigError(f"unknown problem family {family!r}")
    kernel = _build(KernelConfig, data.pop("kernel", {}), "kernel")
    hierarchy = _build(HierarchyConfig, {**data.pop("hierarchy", {}), "kernel": kernel}, "hierarchy")
    top = {"grid_counts", "seed", "output_dir", "checkpoint"}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    env = os.environ.get(OUTPUT_DIR_ENV)
    output_dir = Path(env) if env else _resolve(data.get("output_dir", "runs/default"), base)
    checkpoint = data.get("checkpoint")
    counts = tuple(int(c) for c in data.get("grid_counts", (20, 20)))
    if len(counts) != 2 or min(counts) < 1:
        raise ConfigError("grid_counts must be two positive integers")
    return RunConfig(
        problem=_build(FAMILIES[family][0], problem, "problem"),
        hierarchy=hierarchy,
        grid_counts=counts,
        seed=int(data.get("seed", 0)),
        output_dir=output_dir,
        checkpoint=None if checkpoint is None else _resolve(checkpoint, base),
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_run_config(data, path.parent)
