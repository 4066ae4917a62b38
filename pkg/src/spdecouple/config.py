"""Flat key-value experiment configuration files.

Format: one `key = value` per line, '#' comments, blank lines ignored.
Unknown keys are errors.  The documented keys are the dataclass fields below.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .grid import Field, Grid, unit_mode


class ConfigError(ValueError):
    pass


EXPERIMENTS = ("rd_couple", "burgers_staged", "ou_validate", "lyapunov_build",
               "generator_check", "calibrate")


@dataclass
class ExperimentConfig:
    experiment: str = "rd_couple"
    n: int = 32
    dt: float = 1e-4
    M: int = 100
    t_max: float = 20.0
    k_max: int = 8
    eps_meet: float = 1e-6
    seed: int = 12345
    threads: int = 1
    blowup_guard: float = 1e6
    # reaction-diffusion drift
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    # staged Burgers / calibration
    R: float = 2.5
    rho0: float = 1.2
    rho1: float = 0.55
    T: float = 0.0          # 0 means T0 + 1
    nu: float = 1.0
    mc_budget: int = 400
    wait_coupling: str = "synchronous"
    # initial conditions: zero | const:c | sine:k:amp | mode:k:coef
    x1: str = "mode:1:1.0"
    x2: str = "zero"
    # lyapunov table
    r_max: float = 10.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if self.dt <= 0 or self.t_max <= 0 or self.eps_meet <= 0:
            raise ConfigError("dt, t_max and eps_meet must be positive")

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)!r}" if isinstance(getattr(self, f.name), str)
                 else f"{f.name} = {getattr(self, f.name)}"
                 for f in fields(self)]
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    casts = {f.name: type(getattr(ExperimentConfig(), f.name)) for f in fields(ExperimentConfig)}
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cast = casts[key]
        try:
            if cast is str:
                kwargs[key] = val.strip("'\"")
            elif cast is int:
                kwargs[key] = int(val)
            else:
                kwargs[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def initial_field(grid: Grid, profile: str) -> Field:
    """Named initial-condition profiles."""
    parts = profile.split(":")
    kind = parts[0]
    if kind == "zero":
        return Field(grid, np.zeros(grid.n_interior))
    if kind == "const":
        return Field(grid, float(parts[1]) * np.ones(grid.n_interior))
    if kind == "sine":
        k, amp = int(parts[1]), float(parts[2])
        return Field(grid, amp * np.sin(k * np.pi * grid.xi))
    if kind == "mode":
        k, coef = int(parts[1]), float(parts[2])
        return Field(grid, coef * unit_mode(grid, k).values)
    raise ConfigError(f"unknown initial profile {profile!r}")
