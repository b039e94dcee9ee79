"""Stand-alone environment process: one LES episode against the broker.

Key protocol, for episode length n = t_end / dt_rl and step t:

    {run_id}.env{env_id}.state.{t}   F64 velocity field, written by worker
    {run_id}.env{env_id}.done.{t}    U8 flag, written by worker
                                     0 = running, 1 = final state,
                                     2 = blow-up (no state written)
    {run_id}.env{env_id}.action.{t}  F64 per-element Cs, written by trainer

The worker writes state/done for t = 0..n, polls the action for t = 0..n-1,
and deletes each action key after applying it.  Exit codes: 0 complete,
2 broker unreachable or poll timeout, 3 simulation blow-up.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .broker import Client, ConnectionLost, PollTimeout
from .config import WorkerConfig, load_worker_config
from .sim import BlowUp, advance, stable_dt
from .sim.dataset import load_dataset

EXIT_OK = 0
EXIT_BROKER = 2
EXIT_BLOWUP = 3

DONE_RUNNING = 0
DONE_FINAL = 1
DONE_BLOWUP = 2


def state_key(run_id: str, env_id: int, t: int) -> str:
    return f"{run_id}.env{env_id}.state.{t}"


def done_key(run_id: str, env_id: int, t: int) -> str:
    return f"{run_id}.env{env_id}.done.{t}"


def action_key(run_id: str, env_id: int, t: int) -> str:
    return f"{run_id}.env{env_id}.action.{t}"


def run_episode(cfg: WorkerConfig) -> int:
    """Run one episode; returns the process exit code."""
    if cfg.cores:
        os.sched_setaffinity(0, cfg.cores)
    run = cfg.run
    n = run.n_actions

    dataset = load_dataset(cfg.dataset_path)
    field = dataset.initial_state(cfg.state_index, test=cfg.test)
    solver_cfg = run.solver()
    bound = stable_dt(solver_cfg, field)
    if solver_cfg.dt > bound:
        raise ValueError(f"dt {solver_cfg.dt:g} exceeds stability bound "
                         f"{bound:g} for this initial state")

    address = os.environ.get("RLX_BROKER", cfg.broker_address)
    try:
        client = Client(address, connect_timeout=run.poll_timeout)
    except ConnectionLost as exc:
        print(f"env{cfg.env_id}: {exc}", file=sys.stderr)
        return EXIT_BROKER

    rid, eid = cfg.run_id, cfg.env_id
    with client:
        client.put(state_key(rid, eid, 0), field.u)
        client.put(done_key(rid, eid, 0),
                   np.array([DONE_RUNNING], dtype=np.uint8))
        for t in range(n):
            try:
                action = client.poll(action_key(rid, eid, t),
                                     interval=run.poll_interval,
                                     timeout=run.poll_timeout)
            except PollTimeout as exc:
                print(f"env{cfg.env_id}: {exc}", file=sys.stderr)
                return EXIT_BROKER
            client.delete(action_key(rid, eid, t))
            cs = np.clip(np.asarray(action, dtype=np.float64), 0.0, 0.5)
            try:
                field = advance(field, solver_cfg, cs, run.dt_rl)
            except BlowUp:
                client.put(done_key(rid, eid, t + 1),
                           np.array([DONE_BLOWUP], dtype=np.uint8))
                return EXIT_BLOWUP
            client.put(state_key(rid, eid, t + 1), field.u)
            flag = DONE_FINAL if t + 1 == n else DONE_RUNNING
            client.put(done_key(rid, eid, t + 1),
                       np.array([flag], dtype=np.uint8))
    return EXIT_OK


def run_from_file(config_path: str) -> int:
    return run_episode(load_worker_config(config_path))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="env-worker", description="single-episode LES environment process")
    parser.add_argument("--config", required=True,
                        help="staged config file with a [worker] section")
    parser.add_argument("--env-id", type=int, default=None,
                        help="override the staged env id")
    parser.add_argument("--state-index", type=int, default=None,
                        help="override the staged initial-state index")
    parser.add_argument("--test", action="store_true",
                        help="allow loading the hold-out state")
    args = parser.parse_args(argv)

    cfg = load_worker_config(args.config)
    if args.env_id is not None:
        cfg.env_id = args.env_id
    if args.state_index is not None:
        cfg.state_index = args.state_index
    if args.test:
        cfg.test = True
    return run_episode(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
