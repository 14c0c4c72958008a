"""
Configuration records for the estimators and the command-line tool.

Config files are JSON objects, the same convention as data/meta.json.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping, Optional, Sequence, Union

from hetwls.errors import DataError, InputFileNotFound


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the combination search and the exponent solver."""

    m_interval: tuple[float, float] = (-8.0, 8.0)
    epsilon: float = 1e-6
    max_outer_iters: int = 200
    optimizer_seed: int = 0
    population: Optional[int] = None     # default 15 * p
    generations: int = 200
    w_floor: float = 1e-6
    fallback_rs: float = 0.05
    rs_tie_tol: float = 0.02             # |r_s| slack for the likelihood tie-break; 0 disables it
    uvd_m_grid: tuple[float, float, float] = (0.0, 6.0, 0.05)
    bracket_step: float = 0.25
    root_xtol: float = 1e-8
    boundary_tol: float = 0.01

    def __post_init__(self):
        lo, hi = (float(v) for v in self.m_interval)
        object.__setattr__(self, 'm_interval', (lo, hi))
        object.__setattr__(self, 'uvd_m_grid', tuple(float(v) for v in self.uvd_m_grid))
        if not lo < hi:
            raise ValueError(f"m_interval must have a nonempty interior, got {self.m_interval}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if self.population is not None and self.population < 4:
            raise ValueError("population must be at least 4")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if self.w_floor <= 0:
            raise ValueError("w_floor must be positive")
        if not 0 <= self.fallback_rs < 1:
            raise ValueError("fallback_rs must lie in [0, 1)")
        if not 0 <= self.rs_tie_tol < 1:
            raise ValueError("rs_tie_tol must lie in [0, 1)")
        g_lo, g_hi, g_step = self.uvd_m_grid
        if g_step <= 0 or g_hi < g_lo:
            raise ValueError(f"invalid uvd_m_grid {self.uvd_m_grid}")
        if self.bracket_step <= 0 or self.bracket_step > hi - lo:
            raise ValueError("bracket_step must be positive and fit inside m_interval")
        if self.optimizer_seed < 0 or self.optimizer_seed >= 2**64:
            raise ValueError("optimizer_seed must be a 64-bit unsigned integer")

    def population_for(self, p: int) -> int:
        return self.population if self.population is not None else 15 * p

    def with_seed(self, seed: int) -> 'SolverConfig':
        return replace(self, optimizer_seed=int(seed))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> 'SolverConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise DataError(f"unknown solver settings: {sorted(unknown)}")
        kwargs = dict(values)
        for key in ('m_interval', 'uvd_m_grid'):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            raise DataError(f"invalid solver settings: {e}") from e


@dataclass
class CliConfig:
    """Resolved settings for one command-line invocation."""

    response_column: Union[str, int] = -1
    feature_columns: Optional[Sequence[Union[str, int]]] = None
    standardize: bool = False
    stepwise: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: Optional[str] = None
    seed: int = 0
    workers: int = 1


CONFIG_KEYS = {
    'response': 'response_column',
    'features': 'feature_columns',
    'standardize': 'standardize',
    'stepwise': 'stepwise',
    'seed': 'seed',
    'output_dir': 'output_dir',
    'workers': 'workers',
}


def load_config_file(path: str) -> dict:
    """Load a JSON config object from disk."""
    if not os.path.isfile(path):
        raise InputFileNotFound(f"config file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            values = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(values, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    return values


def apply_config_file(config: CliConfig, values: Mapping[str, Any]) -> CliConfig:
    """Overlay config-file values on a CliConfig built from flags."""
    unknown = set(values) - set(CONFIG_KEYS) - {'solver'}
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    updates = {CONFIG_KEYS[k]: v for k, v in values.items() if k in CONFIG_KEYS}
    if 'solver' in values:
        solver_values = {f.name: getattr(config.solver, f.name) for f in fields(SolverConfig)}
        solver_values.update(values['solver'])
        updates['solver'] = SolverConfig.from_mapping(solver_values)
    return replace(config, **updates)
