"""MDP bookkeeping: trajectories, discounted returns, GAE advantages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Step:
    """One action step: the state seen, the action taken, and PPO bookkeeping.

    `reward` is the reward received on *arriving* in `state`, so the first
    step of an episode carries a defined zero that is excluded from returns.
    """

    state: np.ndarray
    action: np.ndarray
    log_prob: float
    value_estimate: float
    reward: float = 0.0


@dataclass
class Trajectory:
    """One episode: exactly one Step per action, plus the terminal sample.

    With n actions the episode visits n+1 states; `final_state` and
    `final_reward` hold the terminal sample that no action was taken from.
    A blown-up episode is truncated: `blown_up` marks it and `n_planned`
    keeps the intended length so reporting can pad the missing rewards.
    """

    steps: list[Step] = field(default_factory=list)
    env_id: int = 0
    terminal: bool = False
    final_state: np.ndarray | None = None
    final_reward: float = 0.0
    blown_up: bool = False
    n_planned: int | None = None

    def __len__(self):
        return len(self.steps)

    def rewards(self) -> list[float]:
        """Rewards r_1..r_n (the step-0 placeholder is dropped)."""
        rs = [s.reward for s in self.steps[1:]]
        rs.append(self.final_reward)
        return rs

    def rewards_padded(self) -> list[float]:
        """Like :meth:`rewards`, with -1 for steps lost to a blow-up."""
        rs = self.rewards()
        if self.n_planned is not None and len(rs) < self.n_planned:
            rs = rs + [-1.0] * (self.n_planned - len(rs))
        return rs


@dataclass
class Hyperparams:
    gamma: float = 0.995
    lambda_gae: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.0
    learning_rate: float = 1e-4
    value_learning_rate: float = 0.0     # 0 = same as learning_rate
    epochs_per_iter: int = 5
    value_coef: float = 0.5
    minibatch_size: int = 0          # 0 = full batch
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma {self.gamma} outside (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.epochs_per_iter < 0:
            raise ValueError("epochs_per_iter must be >= 0")


class LengthMismatch(ValueError):
    pass


def discounted_return(rewards, gamma: float) -> float:
    """Episode return with rewards indexed from t=1: sum of gamma^t * r_t.

    Note the first reward is weighted by gamma, not 1; this is the reporting
    metric, not the PPO training target.
    """
    total = 0.0
    g = 1.0
    for r in rewards:
        g *= gamma
        total += g * r
    return total


def max_return(n: int, gamma: float) -> float:
    """Return of an episode scoring the maximum reward 1 at every step."""
    return discounted_return([1.0] * n, gamma)


def gae_advantages(traj: Trajectory, hp: Hyperparams):
    """Generalized advantage estimates and value targets for one episode.

    delta_t = r_{t+1} + gamma*V_{t+1} - V_t with V(terminal) = 0, and
    A_t = sum_k (gamma*lambda)^k delta_{t+k}.  Targets are A_t + V_t.
    """
    if not traj.terminal:
        raise ValueError("trajectory must be complete and terminal")
    n = len(traj.steps)
    values = np.array([s.value_estimate for s in traj.steps], dtype=np.float64)
    rewards = np.asarray(traj.rewards(), dtype=np.float64)
    if len(rewards) != n:
        raise LengthMismatch(f"{len(rewards)} rewards for {n} steps")
    advantages = np.empty(n)
    last = 0.0
    next_value = 0.0                 # terminal bootstrap
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + hp.gamma * next_value - values[t]
        last = delta + hp.gamma * hp.lambda_gae * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(adv) -> np.ndarray:
    """Shift/scale to zero mean and unit population std; zeros if degenerate."""
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        raise ValueError("need at least 2 advantages to normalize")
    std = adv.std()
    if std < 1e-8:
        return np.zeros_like(adv)
    return (adv - adv.mean()) / std
