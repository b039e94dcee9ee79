"""Run configuration: presets, INI-style config files, staging for workers.

The file format is flat key = value lines under [run], [paths], [solver],
[reward], [ppo] and [launcher] sections (see docs/config.md for every
field).  Worker processes receive the same format plus a [worker] section
written by the launcher into their scratch directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .rlcore import Hyperparams
from .sim.grid import Grid, SolverConfig


@dataclass
class RunConfig:
    # [run]
    preset: str = "24dof"
    seed: int = 1
    iterations: int = 300
    n_parallel_envs: int = 16
    cores_per_env: int = 1
    checkpoint_every: int = 50
    eval_every: int = 10
    # [paths]
    dataset: str = "dns_24dof.rlxd"
    out_dir: str = "runs/default"
    scratch_dir: str = ""            # empty -> under out_dir; /dev/shm works too
    # [solver]
    n_points: int = 24
    n_elements: int = 4
    viscosity: float = 0.01
    forcing_coefficient: float = 0.6
    dt: float = 1.25e-3
    dealias: bool = True
    t_end: float = 5.0
    dt_rl: float = 0.1
    dns_n_points: int = 2048
    dns_dt: float = 2e-4
    dns_snapshots: int = 48
    # [reward]
    k_max: int = 9
    alpha: float = 0.4
    reward_literal: bool = False
    # [ppo]
    gamma: float = 0.995
    lambda_gae: float = 0.2
    clip_eps: float = 0.2
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    learning_rate: float = 1e-3
    value_learning_rate: float = 1e-3
    epochs_per_iter: int = 5
    minibatch_size: int = 0
    normalize_advantages: bool = True
    lr_decay: str = "linear"         # linear (to 10% at i_max) | none
    net_filters: int = 8
    log_std_init: float = -1.25
    # [launcher]
    launch_mode: str = "fork"        # fork | exec
    pinning: bool = False
    stagger_ms: float = 0.0
    poll_interval: float = 0.005
    poll_timeout: float = 60.0
    broker_bind: str = "127.0.0.1:0"
    external_broker: str = ""        # addr:port of an already-running broker

    def __post_init__(self):
        if self.n_parallel_envs < 1:
            raise ValueError("n_parallel_envs must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        n = self.t_end / self.dt_rl
        if abs(n - round(n)) > 1e-9:
            raise ValueError("t_end must be an integer multiple of dt_rl")
        if self.launch_mode not in ("fork", "exec"):
            raise ValueError(f"unknown launch mode {self.launch_mode!r}")

    @property
    def n_actions(self) -> int:
        return int(round(self.t_end / self.dt_rl))

    def grid(self) -> Grid:
        return Grid(self.n_points, self.n_elements)

    def dns_grid(self) -> Grid:
        return Grid(self.dns_n_points, self.n_elements)

    def solver(self) -> SolverConfig:
        return SolverConfig(self.viscosity, self.forcing_coefficient,
                            self.dt, self.dealias)

    def dns_solver(self) -> SolverConfig:
        return SolverConfig(self.viscosity, self.forcing_coefficient,
                            self.dns_dt, self.dealias)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(gamma=self.gamma, lambda_gae=self.lambda_gae,
                           clip_eps=self.clip_eps,
                           entropy_coef=self.entropy_coef,
                           learning_rate=self.learning_rate,
                           value_learning_rate=self.value_learning_rate,
                           epochs_per_iter=self.epochs_per_iter,
                           value_coef=self.value_coef,
                           minibatch_size=self.minibatch_size,
                           normalize_advantages=self.normalize_advantages)


_SECTION_OF = {
    "preset": "run", "seed": "run", "iterations": "run",
    "n_parallel_envs": "run", "cores_per_env": "run",
    "checkpoint_every": "run", "eval_every": "run",
    "dataset": "paths", "out_dir": "paths", "scratch_dir": "paths",
    "n_points": "solver", "n_elements": "solver", "viscosity": "solver",
    "forcing_coefficient": "solver", "dt": "solver", "dealias": "solver",
    "t_end": "solver", "dt_rl": "solver", "dns_n_points": "solver",
    "dns_dt": "solver", "dns_snapshots": "solver",
    "k_max": "reward", "alpha": "reward", "reward_literal": "reward",
    "gamma": "ppo", "lambda_gae": "ppo", "clip_eps": "ppo",
    "entropy_coef": "ppo", "value_coef": "ppo", "learning_rate": "ppo",
    "value_learning_rate": "ppo",
    "epochs_per_iter": "ppo", "minibatch_size": "ppo",
    "normalize_advantages": "ppo", "net_filters": "ppo", "log_std_init": "ppo",
    "lr_decay": "ppo",
    "launch_mode": "launcher", "pinning": "launcher", "stagger_ms": "launcher",
    "poll_interval": "launcher", "poll_timeout": "launcher",
    "broker_bind": "launcher", "external_broker": "launcher",
}

PRESETS: dict[str, dict] = {
    # Table-style presets: the reward band/scale pairs are fixed, the 1-D
    # grids mirror the DOF counts with 4 elements each.
    "24dof": {},
    "32dof": {"n_points": 32, "k_max": 12, "alpha": 0.2, "dt": 5.0e-4,
              "dataset": "dns_32dof.rlxd"},
    # Small/fast configuration for tests and demos; not a paper analogue.
    "smoke": {"n_points": 16, "n_elements": 4, "dns_n_points": 256,
              "viscosity": 0.04, "forcing_coefficient": 0.6,
              "dt": 2.0e-3, "dns_dt": 1.0e-3, "dns_snapshots": 4,
              "k_max": 4, "alpha": 0.4, "t_end": 1.0, "dt_rl": 0.1,
              "n_parallel_envs": 2, "iterations": 3,
              "dataset": "dns_smoke.rlxd"},
}


def from_preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    kw = dict(PRESETS[name])
    kw.update(overrides)
    return RunConfig(preset=name, **kw)


def _parse_value(kind, raw: str):
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return kind(raw)


def load_config(path) -> RunConfig:
    """Read a config file; a `preset` key seeds defaults, the rest override."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    preset = cp.get("run", "preset", fallback="24dof")
    cfg = from_preset(preset)
    updates = {}
    for name, section in _SECTION_OF.items():
        if cp.has_option(section, name):
            updates[name] = _parse_value(type(getattr(cfg, name)),
                                         cp.get(section, name))
    return replace(cfg, **updates)


def save_config(cfg: RunConfig, path, extra_sections: dict | None = None):
    cp = configparser.ConfigParser()
    for section in ("run", "paths", "solver", "reward", "ppo", "launcher"):
        cp.add_section(section)
    for name, section in _SECTION_OF.items():
        cp.set(section, name, str(getattr(cfg, name)))
    for section, values in (extra_sections or {}).items():
        cp.add_section(section)
        for key, val in values.items():
            cp.set(section, key, str(val))
    with open(path, "w") as fh:
        cp.write(fh)


@dataclass
class WorkerConfig:
    """Everything one environment process needs for one episode."""

    broker_address: str
    run_id: str
    env_id: int
    dataset_path: str
    state_index: int
    test: bool = False
    cores: tuple[int, ...] = ()
    run: RunConfig = field(default_factory=RunConfig)

    @property
    def n_actions(self) -> int:
        return self.run.n_actions


def load_worker_config(path) -> WorkerConfig:
    run = load_config(path)
    cp = configparser.ConfigParser()
    cp.read(path)
    if not cp.has_section("worker"):
        raise ValueError(f"{path} has no [worker] section")
    w = cp["worker"]
    cores = tuple(int(c) for c in w.get("cores", "").split(",") if c.strip())
    return WorkerConfig(
        broker_address=w["broker_address"],
        run_id=w["run_id"],
        env_id=int(w["env_id"]),
        dataset_path=w["dataset_path"],
        state_index=int(w["state_index"]),
        test=w.get("test", "false").lower() in ("1", "true", "yes"),
        cores=cores,
        run=run,
    )


def save_worker_config(wcfg: WorkerConfig, path: Path):
    save_config(wcfg.run, path, extra_sections={"worker": {
        "broker_address": wcfg.broker_address,
        "run_id": wcfg.run_id,
        "env_id": wcfg.env_id,
        "dataset_path": wcfg.dataset_path,
        "state_index": wcfg.state_index,
        "test": wcfg.test,
        "cores": ",".join(str(c) for c in wcfg.cores),
    }})
