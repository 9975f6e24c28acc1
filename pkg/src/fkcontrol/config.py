"""Experiment config files (YAML or JSON) and their validation."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .cost import check_cost, make_cost
from .dynamics import check_model, make_system
from .errors import ConfigError, FKControlError
from .regression import TrainConfig
from .sampler import RolloutConfig

_SCHEMA = {
    "system": {"name": True, "params": False, "domain": False},
    "cost": {"preset": True, "lambda": True, "T": True, "R": False},
    "sampler": {"N": True, "M": True, "dt": True, "seed": False, "sampling_mode": False,
                "on_diverge": False, "safety_factor": False, "noise_scaling": False},
    "train": {"epochs": False, "learning_rate": False, "batch_size": False, "seed": False,
              "lr_schedule": False, "hidden": False},
    "policy": {"psi_floor": False, "clamp": False, "x0": False, "dt": False, "duration": False,
               "noise_rollouts": False, "noise_seed": False, "swing_up": False, "oracle": False,
               "oracle_grid": False, "field_counts": False},
    "output": {"dir": False, "dataset": False, "model": False, "loss": False, "rollout": False,
               "field": False, "oracle": False},
}
_REQUIRED_BLOCKS = ("system", "cost", "sampler")


@dataclass
class PolicyOptions:
    psi_floor: float = 1e-6
    clamp: Optional[float] = None
    x0: list = field(default_factory=list)
    dt: float = 0.01
    duration: Optional[float] = None
    noise_rollouts: int = 0
    noise_seed: int = 0
    swing_up: bool = False
    oracle: bool = False
    oracle_grid: dict = field(default_factory=lambda: {"lower": [-2.0, -2.0], "upper": [2.0, 2.0],
                                                       "counts": [5, 5], "M": 4096})
    field_counts: list = field(default_factory=lambda: [21, 21])


@dataclass
class OutputPaths:
    dir: str = "out"
    dataset: str = "dataset.csv"
    model: str = "model.json"
    loss: str = "loss.csv"
    rollout: str = "rollout.csv"
    field: str = "field.csv"
    oracle: str = "oracle"

    def path(self, name, out_dir=None):
        return Path(out_dir or self.dir) / getattr(self, name)


@dataclass
class RunConfig:
    system: object
    cost: object
    sampler: RolloutConfig
    train: TrainConfig
    policy: PolicyOptions
    output: OutputPaths
    raw: dict


def _check_keys(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of blocks")
    for block in raw:
        if block not in _SCHEMA:
            raise ConfigError(f"unknown config block '{block}'")
    for block in _REQUIRED_BLOCKS:
        if block not in raw:
            raise ConfigError(f"missing config block '{block}'")
    for block, spec in _SCHEMA.items():
        body = raw.get(block) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"config block '{block}' must be a mapping")
        for key in body:
            if key not in spec:
                raise ConfigError(f"unknown key '{block}.{key}'")
        for key, required in spec.items():
            if required and key not in body:
                raise ConfigError(f"missing required key '{block}.{key}'")


def parse_config(raw):
    """Validate a config mapping and build every runtime object up front."""
    _check_keys(raw)
    try:
        s = raw["system"]
        domain = None
        if s.get("domain") is not None:
            d = s["domain"]
            if set(d) != {"lower", "upper"}:
                raise ConfigError("system.domain needs exactly 'lower' and 'upper'")
            domain = (d["lower"], d["upper"])
        system = make_system(s["name"], s.get("params"), domain)
        check_model(system)

        c = raw["cost"]
        R = np.atleast_2d(np.asarray(c.get("R", 1.0), dtype=float))
        cost = make_cost(c["preset"], float(c["lambda"]), float(c["T"]), R, n=system.n)
        check_cost(cost, system)

        sm = raw["sampler"]
        rollout = RolloutConfig(
            dt=float(sm["dt"]), num_rollouts=int(sm["M"]), num_states=int(sm["N"]),
            seed=int(sm.get("seed", 0)), sampling_mode=sm.get("sampling_mode", "uniform"),
            safety_factor=float(sm.get("safety_factor", 10.0)),
            on_diverge=sm.get("on_diverge", "discard"),
            noise_scaling=sm.get("noise_scaling", "sde"),
        )
        rollout.validate(cost.horizon)

        t = dict(raw.get("train") or {})
        if "hidden" in t:
            t["hidden"] = tuple(int(h) for h in t["hidden"])
        train = TrainConfig(**t)
        train.validate()
        if train.batch_size > rollout.num_states:
            raise ConfigError(f"train.batch_size {train.batch_size} exceeds sampler.N {rollout.num_states}")

        pol = PolicyOptions(**(raw.get("policy") or {}))
        if not pol.psi_floor > 0 or not pol.dt > 0:
            raise ConfigError("policy.psi_floor and policy.dt must be positive")
        if pol.duration is not None and not pol.duration > 0:
            raise ConfigError("policy.duration must be positive")
        for x0 in pol.x0:
            if len(x0) != system.n:
                raise ConfigError(f"policy.x0 entries must have length {system.n}")
        if pol.noise_rollouts < 0:
            raise ConfigError("policy.noise_rollouts must be nonnegative")
        if len(pol.field_counts) != system.n:
            raise ConfigError(f"policy.field_counts must have length {system.n}")

        out = OutputPaths(**(raw.get("output") or {}))
    except ConfigError:
        raise
    except (FKControlError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(system, cost, rollout, train, pol, out, raw)


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return parse_config(raw)
