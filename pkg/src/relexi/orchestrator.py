"""Training-loop orchestration: broker lifecycle, worker batches, collection,
policy updates, evaluation and the scaling benchmark.

One iteration: draw initial states, stage per-worker scratch dirs, launch the
whole batch, then step-by-step act/observe/reward each environment through
the broker; after the synchronous barrier (every worker process exited) the
PPO update runs on the collected trajectories.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import os
import shutil
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .broker import Client, PollTimeout, Server
from .config import RunConfig, WorkerConfig, save_worker_config
from .policy import NetArchitecture, PolicyNet, log_prob_of, sample_action
from .ppo import NonFiniteLoss, Trainer
from .rlcore import Step, Trajectory, discounted_return, max_return
from .sim import BlowUp, FlowField, advance
from .sim.dataset import Dataset, load_dataset
from .spectra import energy_spectrum, reward, spectrum_error
from .worker import (DONE_BLOWUP, DONE_FINAL, EXIT_BLOWUP, action_key, done_key,
                     run_from_file, state_key)

METRICS_SCHEMA = 1
METRICS_COLUMNS = [
    "iteration", "n_envs", "n_failed", "return_mean", "return_min",
    "return_max", "return_raw_mean", "return_norm_mean", "policy_loss",
    "value_loss", "entropy", "clip_fraction", "approx_kl", "mean_ratio",
    "t_launch_s", "t_sample_s", "t_train_s", "eval_return_norm",
]


class IterationFailed(RuntimeError):
    """More than half of the batch failed; the update was skipped."""


@dataclass
class IterationRecord:
    iteration: int
    returns: list[float]
    raw_returns: list[float]
    sampling_time: float
    training_time: float
    launch_time: float
    failure_count: int
    diagnostics: object = None
    eval_return_norm: float | None = None


@dataclass
class TrainResult:
    records: list[IterationRecord]
    checkpoint_path: Path
    metrics_path: Path


# ---------------------------------------------------------------------------
# worker launching


def partition_cores(n_envs: int, cores_per_env: int, available: list[int]):
    """Disjoint consecutive core sets per environment (wrapping if scarce)."""
    sets = []
    for e in range(n_envs):
        start = e * cores_per_env
        sets.append(tuple(available[(start + i) % len(available)]
                          for i in range(cores_per_env)))
    return sets


class WorkerHandle:
    """Uniform wait/exitcode over subprocess and fork launches."""

    def __init__(self, env_id: int, proc, scratch_dir: Path):
        self.env_id = env_id
        self.proc = proc
        self.scratch_dir = scratch_dir
        self.spawn_failed = proc is None

    def wait(self, timeout: float | None = None) -> int | None:
        if self.proc is None:
            return -1
        if isinstance(self.proc, subprocess.Popen):
            try:
                return self.proc.wait(timeout)
            except subprocess.TimeoutExpired:
                return None
        self.proc.join(timeout)
        return self.proc.exitcode

    def kill(self):
        if self.proc is not None:
            self.proc.kill()


def launch_batch(cfg: RunConfig, run_id: str, iteration: int,
                 state_indices, broker_address: str,
                 scratch_root: Path) -> tuple[list[WorkerHandle], float]:
    """Stage per-worker scratch dirs, then spawn every worker back to back."""
    t0 = time.perf_counter()
    iter_dir = scratch_root / f"iter{iteration:05d}"
    if cfg.pinning:
        core_sets = partition_cores(cfg.n_parallel_envs, cfg.cores_per_env,
                                    sorted(os.sched_getaffinity(0)))
    else:
        core_sets = [()] * cfg.n_parallel_envs

    configs = []
    for e in range(cfg.n_parallel_envs):
        env_dir = iter_dir / f"env{e}"
        env_dir.mkdir(parents=True, exist_ok=True)
        wcfg = WorkerConfig(broker_address=broker_address, run_id=run_id,
                            env_id=e, dataset_path=str(cfg.dataset),
                            state_index=int(state_indices[e]),
                            cores=core_sets[e], run=cfg)
        path = env_dir / "worker.ini"
        save_worker_config(wcfg, path)
        configs.append((e, env_dir, path))

    handles = []
    ctx = multiprocessing.get_context("fork")
    for e, env_dir, path in configs:
        proc = None
        try:
            if cfg.launch_mode == "exec":
                proc = subprocess.Popen(
                    [sys.executable, "-m", "relexi.worker", "--config", str(path)])
            else:
                proc = ctx.Process(target=_fork_entry, args=(str(path),),
                                   daemon=True)
                proc.start()
        except OSError:
            proc = None
        handles.append(WorkerHandle(e, proc, env_dir))
        if cfg.stagger_ms > 0:
            time.sleep(cfg.stagger_ms / 1000.0)
    return handles, time.perf_counter() - t0


def _fork_entry(config_path: str):
    sys.exit(run_from_file(config_path))


# ---------------------------------------------------------------------------
# collection


@dataclass
class _EnvSlot:
    env_id: int
    client: Client
    traj: Trajectory
    state: np.ndarray | None = None
    pending_reward: float = 0.0
    live: bool = True
    failed: bool = False
    rng: np.random.Generator = None


def _reward_of(u: np.ndarray, e_dns: np.ndarray, cfg: RunConfig) -> float:
    l = spectrum_error(energy_spectrum(u), e_dns, cfg.k_max)
    return reward(l, cfg.alpha, cfg.reward_literal)


def collect_iteration(cfg: RunConfig, dataset: Dataset, net: PolicyNet,
                      broker_address: str, iteration: int, run_id: str,
                      scratch_root: Path, pool: ThreadPoolExecutor,
                      keep_scratch: bool = False):
    """Launch one batch and drive every environment through one episode.

    Returns (trajectories, n_failed, t_launch, t_sample); failed
    environments (spawn failure, timeouts, worker exit 2) are dropped,
    blow-ups are kept as truncated penalized trajectories.
    """
    n = cfg.n_actions
    e_dns = dataset.mean_spectrum
    rng_idx = np.random.default_rng([cfg.seed, iteration])
    train_idx = dataset.train_indices()
    indices = rng_idx.choice(train_idx, size=cfg.n_parallel_envs)

    t_sample0 = time.perf_counter()
    handles, t_launch = launch_batch(cfg, run_id, iteration, indices,
                                     broker_address, scratch_root)

    slots = []
    for e in range(cfg.n_parallel_envs):
        slot = _EnvSlot(
            env_id=e, client=Client(broker_address),
            traj=Trajectory(env_id=e, n_planned=n),
            rng=np.random.default_rng([cfg.seed, iteration, e]))
        slot.failed = handles[e].spawn_failed
        slot.live = not slot.failed
        slots.append(slot)

    def observe(slot: _EnvSlot, t: int):
        """Poll done/state for step t; returns (flag, state or None)."""
        flag_arr = slot.client.poll(done_key(run_id, slot.env_id, t),
                                    interval=cfg.poll_interval,
                                    timeout=cfg.poll_timeout)
        flag = int(flag_arr[0])
        state = None
        if flag != DONE_BLOWUP:
            state = slot.client.get(state_key(run_id, slot.env_id, t))
            slot.client.delete(state_key(run_id, slot.env_id, t))
        slot.client.delete(done_key(run_id, slot.env_id, t))
        return flag, state

    def gather(t: int):
        live = [s for s in slots if s.live]
        futures = {s.env_id: pool.submit(observe, s, t) for s in live}
        for slot in live:
            try:
                flag, state = futures[slot.env_id].result()
            except Exception as exc:
                slot.live = False
                slot.failed = True
                print(f"warning: env{slot.env_id} dropped at t={t}: {exc}",
                      file=sys.stderr)
                continue
            if flag == DONE_BLOWUP:
                slot.live = False
                slot.traj.terminal = True
                slot.traj.blown_up = True
                slot.traj.final_state = None
                slot.traj.final_reward = -1.0
                continue
            slot.state = state
            slot.pending_reward = _reward_of(state, e_dns, cfg) if t > 0 else 0.0
            if flag == DONE_FINAL:
                slot.live = False
                slot.traj.terminal = True
                slot.traj.final_state = state
                slot.traj.final_reward = slot.pending_reward

    gather(0)
    for t in range(n):
        live = [s for s in slots if s.live]
        if not live:
            break
        for slot in live:
            dist = net.policy_forward(slot.state)
            action, log_prob = sample_action(dist, slot.rng)
            value = net.value_forward(slot.state, t / n)
            slot.traj.steps.append(Step(slot.state, action, log_prob, value,
                                        slot.pending_reward))
            slot.client.put(action_key(run_id, slot.env_id, t), action)
        gather(t + 1)

    # synchronous barrier: every worker process must have exited
    deadline = time.monotonic() + cfg.poll_timeout + 30.0
    for handle in handles:
        code = handle.wait(max(0.1, deadline - time.monotonic()))
        slot = slots[handle.env_id]
        if code is None:
            handle.kill()
            handle.wait(5.0)
            slot.failed = True
        elif code == EXIT_BLOWUP:
            pass                     # kept as a truncated, penalized episode
        elif code != 0:
            slot.failed = True
    t_sample = time.perf_counter() - t_sample0

    for slot in slots:
        if slot.failed:
            _sweep_env_keys(slot.client, run_id, slot.env_id, n)
        slot.client.close()
    if not keep_scratch:
        shutil.rmtree(scratch_root / f"iter{iteration:05d}", ignore_errors=True)

    trajectories = [s.traj for s in slots if not s.failed and s.traj.terminal]
    n_failed = sum(1 for s in slots if s.failed)
    return trajectories, n_failed, t_launch, t_sample


def _sweep_env_keys(client: Client, run_id: str, env_id: int, n: int):
    for t in range(n + 1):
        client.delete(state_key(run_id, env_id, t))
        client.delete(done_key(run_id, env_id, t))
        if t < n:
            client.delete(action_key(run_id, env_id, t))


# ---------------------------------------------------------------------------
# in-process rollouts (oracle for tests, evaluation, hold-out scoring)


def rollout_episode(field0: FlowField, cfg: RunConfig, e_dns: np.ndarray,
                    act_fn) -> Trajectory:
    """Episode without broker or processes: act_fn(u, t) -> (a, logp, V).

    Uses the same advance/reward path as the worker + trainer pair, so a
    single-environment broker run must reproduce it bit for bit.  act_fn
    receives the step index and owns the value estimate's time input.
    """
    n = cfg.n_actions
    solver_cfg = cfg.solver()
    traj = Trajectory(env_id=0, n_planned=n)
    field = field0.copy()
    pending = 0.0
    for t in range(n):
        action, log_prob, value = act_fn(field.u, t)
        traj.steps.append(Step(field.u.copy(), action, log_prob, value, pending))
        cs = np.clip(np.asarray(action, dtype=np.float64), 0.0, 0.5)
        try:
            field = advance(field, solver_cfg, cs, cfg.dt_rl)
        except BlowUp:
            traj.terminal = True
            traj.blown_up = True
            traj.final_reward = -1.0
            return traj
        pending = _reward_of(field.u, e_dns, cfg)
    traj.terminal = True
    traj.final_state = field.u.copy()
    traj.final_reward = pending
    return traj


def policy_act_fn(net: PolicyNet, rng: np.random.Generator | None,
                  n_actions: int = 0):
    """Sampling actor when rng is given, deterministic-mode actor otherwise."""
    def act(u, t):
        dist = net.policy_forward(u)
        if rng is None:
            action = dist.mode()
            log_prob = log_prob_of(dist, action)
        else:
            action, log_prob = sample_action(dist, rng)
        tau = t / n_actions if n_actions else 0.0
        return action, log_prob, net.value_forward(u, tau)
    return act


def constant_act_fn(cs: float, n_elements: int):
    def act(u, t):
        return np.full(n_elements, cs), 0.0, 0.0
    return act


def holdout_return(net: PolicyNet, dataset: Dataset, cfg: RunConfig) -> float:
    """Normalized deterministic-policy return on the hold-out state."""
    field0 = dataset.initial_state(dataset.holdout_index, test=True)
    traj = rollout_episode(field0, cfg, dataset.mean_spectrum,
                           policy_act_fn(net, None))
    ret = discounted_return(traj.rewards_padded(), cfg.gamma)
    return ret / max_return(cfg.n_actions, cfg.gamma)


# ---------------------------------------------------------------------------
# training


def _net_for(cfg: RunConfig) -> PolicyNet:
    grid = cfg.grid()
    arch = NetArchitecture(grid.points_per_element, cfg.net_filters)
    return PolicyNet(arch, grid.n_elements, seed=cfg.seed,
                     log_std_init=cfg.log_std_init,
                     horizon_gamma=cfg.gamma, horizon_steps=cfg.n_actions)


class Orchestrator:
    """Owns the broker, the policy and the output directory for one run."""

    def __init__(self, cfg: RunConfig, quiet: bool = False):
        self.cfg = cfg
        self.quiet = quiet
        self.out_dir = Path(cfg.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.scratch_root = (Path(cfg.scratch_dir) if cfg.scratch_dir
                             else self.out_dir / "scratch")
        self.scratch_root.mkdir(parents=True, exist_ok=True)
        self.dataset = load_dataset(cfg.dataset)
        self._server = None
        if cfg.external_broker:
            self.broker_address = cfg.external_broker
        else:
            self._server = Server(cfg.broker_bind)
            self._server.start()
            self.broker_address = self._server.address
        self.net = _net_for(cfg)
        self._log(f"policy parameters: {self.net.theta.size}, "
                  f"value parameters: {self.net.value_params.size}")
        self.trainer = Trainer(self.net, cfg.hyperparams())
        self._last_trajectories: list[Trajectory] = []
        self.pool = ThreadPoolExecutor(max_workers=max(cfg.n_parallel_envs, 4))

    def close(self):
        self.pool.shutdown(wait=False)
        if self._server is not None:
            self._server.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def broker_key_count(self) -> int:
        if self._server is None:
            raise RuntimeError("key count is only visible for the in-process broker")
        return len(self._server.store)

    def _log(self, msg: str):
        if not self.quiet:
            print(msg, flush=True)

    def run_iteration(self, iteration: int) -> IterationRecord:
        cfg = self.cfg
        run_id = f"r{cfg.seed}.i{iteration}"
        trajs, n_failed, t_launch, t_sample = collect_iteration(
            cfg, self.dataset, self.net, self.broker_address, iteration,
            run_id, self.scratch_root, self.pool)
        self._last_trajectories = trajs

        returns = [discounted_return(t.rewards_padded(), cfg.gamma)
                   for t in trajs]
        raw_returns = [float(np.sum(t.rewards_padded())) for t in trajs]
        record = IterationRecord(iteration, returns, raw_returns,
                                 sampling_time=t_sample,
                                 training_time=0.0, launch_time=t_launch,
                                 failure_count=n_failed)
        if n_failed > cfg.n_parallel_envs / 2:
            raise IterationFailed(
                f"{n_failed}/{cfg.n_parallel_envs} environments failed")

        t0 = time.perf_counter()
        if cfg.epochs_per_iter > 0 and trajs:
            rng = np.random.default_rng([cfg.seed, iteration, 982451653])
            if cfg.lr_decay == "linear" and cfg.iterations > 1:
                frac = (iteration - 1) / cfg.iterations
                lr_scale = 1.0 - 0.9 * frac
            else:
                lr_scale = 1.0
            try:
                record.diagnostics = self.trainer.train_iteration(
                    trajs, rng, lr_scale=lr_scale)
            except NonFiniteLoss as exc:
                self._log(f"iteration {iteration}: {exc}; parameters kept")
        record.training_time = time.perf_counter() - t0
        return record

    def train(self) -> TrainResult:
        cfg = self.cfg
        metrics_path = self.out_dir / "metrics.csv"
        records = []
        norm = max_return(cfg.n_actions, cfg.gamma)
        best_ema = -math.inf
        ema = None
        ckpt = self.out_dir / "checkpoint.rlxp"
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            for i in range(1, cfg.iterations + 1):
                try:
                    rec = self.run_iteration(i)
                except IterationFailed as exc:
                    self._log(f"iteration {i} aborted: {exc}")
                    rec = IterationRecord(i, [], [], 0.0, 0.0, 0.0,
                                          cfg.n_parallel_envs)
                if cfg.eval_every > 0 and i % cfg.eval_every == 0:
                    rec.eval_return_norm = holdout_return(self.net,
                                                          self.dataset, cfg)
                if cfg.checkpoint_every > 0 and i % cfg.checkpoint_every == 0:
                    self.net.save(self.out_dir / f"checkpoint_{i:05d}.rlxp",
                                  self.trainer.adam_states())
                # model selection on smoothed training return (never on the
                # hold-out): late PPO iterations oscillate once the noise
                # scale has annealed, the best smoothed policy is kept
                if rec.returns:
                    mean_ret = float(np.mean(rec.returns))
                    ema = mean_ret if ema is None else 0.7 * ema + 0.3 * mean_ret
                    if i >= min(10, cfg.iterations) and ema > best_ema:
                        best_ema = ema
                        self.net.save(ckpt, self.trainer.adam_states())
                records.append(rec)
                writer.writerow(_metrics_row(rec, norm))
                fh.flush()
                if rec.returns:
                    self._log(
                        f"iter {i:4d}  return {np.mean(rec.returns):+8.3f} "
                        f"(norm {np.mean(rec.returns) / norm:+6.3f})  "
                        f"sample {rec.sampling_time:6.2f}s  "
                        f"train {rec.training_time:5.2f}s  fail {rec.failure_count}")
        self.net.save(self.out_dir / "checkpoint_final.rlxp",
                      self.trainer.adam_states())
        if not ckpt.exists():
            self.net.save(ckpt, self.trainer.adam_states())
        if self._server is not None:
            with open(self.out_dir / "broker_stats.json", "w") as fh:
                json.dump(self._server.store.counters(), fh, indent=2)
        return TrainResult(records, ckpt, metrics_path)


def _metrics_row(rec: IterationRecord, norm: float):
    d = rec.diagnostics
    returns = rec.returns or [math.nan]
    raw = rec.raw_returns or [math.nan]
    return [
        rec.iteration, len(rec.returns), rec.failure_count,
        f"{np.mean(returns):.6f}", f"{np.min(returns):.6f}",
        f"{np.max(returns):.6f}", f"{np.mean(raw):.6f}",
        f"{np.mean(returns) / norm:.6f}",
        f"{d.policy_loss:.6g}" if d else "",
        f"{d.value_loss:.6g}" if d else "",
        f"{d.entropy:.6g}" if d else "",
        f"{d.clip_fraction:.4f}" if d else "",
        f"{d.approx_kl:.6g}" if d else "",
        f"{d.mean_ratio:.6f}" if d else "",
        f"{rec.launch_time:.4f}", f"{rec.sampling_time:.4f}",
        f"{rec.training_time:.4f}",
        f"{rec.eval_return_norm:.6f}" if rec.eval_return_norm is not None else "",
    ]


def train_run(cfg: RunConfig, quiet: bool = False) -> TrainResult:
    with Orchestrator(cfg, quiet=quiet) as orch:
        return orch.train()


# ---------------------------------------------------------------------------
# evaluation


CS_SWEEP = [round(0.05 * i, 2) for i in range(11)]     # 0.0 .. 0.5


def evaluate(checkpoint_path, cfg: RunConfig) -> dict:
    """Hold-out comparison: trained policy vs constant-Cs closures.

    Reports per-step spectrum errors, episode returns (raw, discounted and
    normalized by the maximum achievable return), the final-time spectrum,
    and the distribution of the trained policy's coefficient predictions.
    """
    ckpt = Path(checkpoint_path)
    if not ckpt.exists():
        raise FileNotFoundError(f"missing checkpoint {ckpt}")
    net, _ = PolicyNet.load(ckpt)
    dataset = load_dataset(cfg.dataset)
    e_dns = dataset.mean_spectrum
    field0 = dataset.initial_state(dataset.holdout_index, test=True)
    norm = max_return(cfg.n_actions, cfg.gamma)

    def summarize(traj: Trajectory, actions: list[np.ndarray]):
        errors = []
        for s in traj.steps[1:]:
            errors.append(_error_of(s.state, e_dns, cfg))
        if traj.final_state is not None:
            errors.append(_error_of(traj.final_state, e_dns, cfg))
        ret = discounted_return(traj.rewards_padded(), cfg.gamma)
        final_spec = (energy_spectrum(traj.final_state).tolist()
                      if traj.final_state is not None else None)
        raw = float(np.sum(traj.rewards_padded()))
        return {
            "return": ret,
            "return_raw": raw,
            "return_norm": ret / norm,
            "return_raw_norm": raw / cfg.n_actions,
            "mean_spectrum_error": float(np.mean(errors)) if errors else None,
            "final_spectrum_error": errors[-1] if errors else None,
            "per_step_error": errors,
            "final_spectrum": final_spec,
            "blown_up": traj.blown_up,
            "actions_flat": np.concatenate(actions).tolist() if actions else [],
        }

    trained_actions: list[np.ndarray] = []

    def trained_act(u, t):
        dist = net.policy_forward(u)
        action = dist.mode()
        trained_actions.append(action)
        return action, log_prob_of(dist, action), 0.0

    report = {"preset": cfg.preset, "k_max": cfg.k_max, "alpha": cfg.alpha,
              "holdout_index": dataset.holdout_index}
    traj = rollout_episode(field0, cfg, e_dns, trained_act)
    report["trained"] = summarize(traj, trained_actions)

    grid = cfg.grid()
    report["constant"] = {}
    for cs in CS_SWEEP:
        actions: list[np.ndarray] = []

        def const_act(u, t, cs=cs):
            a = np.full(grid.n_elements, cs)
            actions.append(a)
            return a, 0.0, 0.0

        traj = rollout_episode(field0, cfg, e_dns, const_act)
        report["constant"][f"{cs:.2f}"] = summarize(traj, actions)

    hist, edges = np.histogram(report["trained"]["actions_flat"],
                               bins=20, range=(0.0, 0.5))
    report["cs_histogram"] = {"counts": hist.tolist(),
                              "bin_edges": edges.tolist()}
    return report


def _error_of(u, e_dns, cfg: RunConfig) -> float:
    return spectrum_error(energy_spectrum(u), e_dns, cfg.k_max)


# ---------------------------------------------------------------------------
# scaling benchmark


def benchmark_scaling(cfg: RunConfig, env_counts: list[int], mode: str,
                      checkpoint_path=None, repetitions: int = 12,
                      cores_list: list[int] | None = None) -> list[dict]:
    """Sampling-time scaling study with a frozen policy.

    Weak mode varies the environment count; strong mode varies cores per
    environment at fixed count.  The sequential baseline T_seq is measured
    (repetitions at a single environment), never assumed.  Speedup(n) =
    n * t1 / t(n); efficiency = speedup / n.
    """
    if mode not in ("weak", "strong"):
        raise ValueError("mode must be weak or strong")
    if checkpoint_path:
        net, _ = PolicyNet.load(checkpoint_path)
    else:
        net = _net_for(cfg)

    def sample_times(one_cfg: RunConfig) -> list[float]:
        times = []
        with Orchestrator(one_cfg, quiet=True) as orch:
            orch.net = net
            for rep in range(repetitions):
                t0 = time.perf_counter()
                collect_iteration(one_cfg, orch.dataset, net,
                                  orch.broker_address, rep + 1,
                                  f"bench{rep}", orch.scratch_root, orch.pool)
                times.append(time.perf_counter() - t0)
        return times

    base = replace(cfg, iterations=1, epochs_per_iter=0)
    t1 = sample_times(replace(base, n_parallel_envs=1))
    t1_mean = float(np.mean(t1))

    rows = []
    if mode == "weak":
        cases = [(n, cfg.cores_per_env) for n in env_counts]
    else:
        cases = [(cfg.n_parallel_envs, c) for c in (cores_list or [1, 2, 4])]
    for n_envs, cores in cases:
        if n_envs == 1 and cores == cfg.cores_per_env:
            times = t1
        else:
            times = sample_times(replace(base, n_parallel_envs=n_envs,
                                         cores_per_env=cores))
        t_mean = float(np.mean(times))
        t_seq = n_envs * t1_mean
        speedup = t_seq / t_mean
        rows.append({
            "mode": mode, "n_envs": n_envs, "cores_per_env": cores,
            "repetitions": repetitions, "t_mean_s": t_mean,
            "t_std_s": float(np.std(times)), "t1_mean_s": t1_mean,
            "t_seq_s": t_seq, "speedup": speedup,
            "efficiency": speedup / n_envs,
        })
    return rows


def write_benchmark_csv(rows: list[dict], path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# generic episode driver (used by the cross-language interop test)


def drive_episode(client: Client, run_id: str, env_id: int, n_steps: int,
                  act_fn, poll_interval: float = 0.005,
                  poll_timeout: float = 30.0) -> list[np.ndarray]:
    """Drive one externally-launched environment through the key protocol.

    Works for any state/action shapes: act_fn(state, t) -> action array.
    Returns the collected states s_0..s_n.
    """
    states = []
    for t in range(n_steps + 1):
        flag_arr = client.poll(done_key(run_id, env_id, t),
                               interval=poll_interval, timeout=poll_timeout)
        flag = int(flag_arr[0])
        state = client.get(state_key(run_id, env_id, t))
        client.delete(state_key(run_id, env_id, t))
        client.delete(done_key(run_id, env_id, t))
        states.append(state)
        if flag == DONE_FINAL or flag == DONE_BLOWUP:
            break
        if t < n_steps:
            client.put(action_key(run_id, env_id, t),
                       np.asarray(act_fn(state, t)))
    return states
