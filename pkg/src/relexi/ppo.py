"""Clipped-surrogate PPO update over collected trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .policy import PolicyNet, AdamState, adam_step, _z_from_action, \
    LOG_STD_MIN, LOG_STD_MAX, _LOG_SQRT_2PI, _softplus
from .rlcore import Hyperparams, Trajectory, gae_advantages, normalize_advantages


class NonFiniteLoss(RuntimeError):
    """Loss or gradient went non-finite; the iteration was aborted."""


@dataclass
class TrainBatch:
    states: np.ndarray          # (B, N)
    actions: np.ndarray         # (B, E)
    old_log_probs: np.ndarray   # (B,)
    advantages: np.ndarray      # (B,)
    value_targets: np.ndarray   # (B,)
    time_frac: np.ndarray = None   # (B,) elapsed/total episode time

    def __post_init__(self):
        if self.time_frac is None:
            self.time_frac = np.zeros(len(self.states))

    def __len__(self):
        return len(self.states)


@dataclass
class Diagnostics:
    loss: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    mean_ratio: float = 1.0
    clip_fraction: float = 0.0
    approx_kl: float = 0.0
    epochs: list = field(default_factory=list)


def build_batch(trajectories: list[Trajectory], hp: Hyperparams) -> TrainBatch:
    states, actions, old_lp, taus, advs, targets = [], [], [], [], [], []
    for traj in trajectories:
        adv, tgt = gae_advantages(traj, hp)
        horizon = traj.n_planned or len(traj.steps)
        for i, s in enumerate(traj.steps):
            states.append(s.state)
            actions.append(s.action)
            old_lp.append(s.log_prob)
            taus.append(i / horizon)
        advs.append(adv)
        targets.append(tgt)
    adv = np.concatenate(advs)
    if hp.normalize_advantages and len(adv) >= 2:
        adv = normalize_advantages(adv)
    return TrainBatch(np.asarray(states), np.asarray(actions),
                      np.asarray(old_lp), adv, np.concatenate(targets),
                      np.asarray(taus))


def ppo_loss(net: PolicyNet, batch: TrainBatch, hp: Hyperparams,
             compute_grads: bool = True):
    """Loss, diagnostics and (optionally) gradients on one minibatch.

    L = -mean[min(rho*A, clip(rho, 1-eps, 1+eps)*A)]
        + value_coef * mean[(V - target)^2] - entropy_coef * H
    """
    b = len(batch)
    if b == 0:
        raise ValueError("empty batch")
    eps = hp.clip_eps
    z = _z_from_action(batch.actions)                     # (B, E)
    mu, p_cache = net.policy_mu_batch(batch.states)
    log_std = min(max(net.log_std, LOG_STD_MIN), LOG_STD_MAX)
    sigma = math.exp(log_std)

    dz = (z - mu) / sigma
    gauss = -0.5 * dz ** 2 - log_std - _LOG_SQRT_2PI
    jac = math.log(0.5) - _softplus(z) - _softplus(-z)
    log_probs = np.sum(gauss - jac, axis=1)

    log_ratio = log_probs - batch.old_log_probs
    ratio = np.exp(log_ratio)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))

    values_raw, v_cache = net.value_batch(batch.states, batch.time_frac)
    phi = net.horizon_factor(batch.time_frac)
    rate_targets = batch.value_targets / phi
    targets_norm = (rate_targets - net.value_shift) / net.value_scale
    v_err = values_raw - targets_norm
    value_loss = float(np.mean(v_err ** 2))

    n_elem = net.n_elements
    ent = n_elem * (0.5 * math.log(2.0 * math.pi * math.e) + log_std)

    loss = policy_loss + hp.value_coef * value_loss - hp.entropy_coef * ent

    diag = Diagnostics(
        loss=loss, policy_loss=policy_loss, value_loss=value_loss,
        entropy=ent, mean_ratio=float(np.mean(ratio)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
        approx_kl=float(np.mean(ratio - 1.0 - log_ratio)),
    )
    if not compute_grads:
        return loss, diag, None, None

    # gradient flows through rho only where the unclipped branch is active
    active = unclipped <= clipped
    dlogp = -(ratio * adv * active) / b                   # dL/dlog_prob, (B,)
    dmu = dlogp[:, None] * (z - mu) / sigma ** 2
    dlog_std = float(np.sum(dlogp[:, None] * (dz ** 2 - 1.0)))
    if hp.entropy_coef != 0.0:
        dlog_std -= hp.entropy_coef * n_elem
    g_theta = net.policy_backward(p_cache, dmu, dlog_std)
    g_value = net.value_backward(v_cache, hp.value_coef * 2.0 * v_err / b)
    return loss, diag, g_theta, g_value


@dataclass
class Trainer:
    """Owns the optimizer state across iterations."""

    net: PolicyNet
    hp: Hyperparams
    adam_theta: AdamState = None
    adam_value: AdamState = None

    def __post_init__(self):
        if self.adam_theta is None:
            self.adam_theta = AdamState.like(self.net.theta)
        if self.adam_value is None:
            self.adam_value = AdamState.like(self.net.value_params)
        self._scale_initialized = self.net.value_scale != 1.0 or \
            self.net.value_shift != 0.0

    def adam_states(self) -> dict:
        return {"theta": self.adam_theta, "value": self.adam_value}

    def _update_value_scale(self, targets: np.ndarray, blend: float = 0.1):
        """Running affine target scale; the critic regresses in unit scale."""
        m = float(np.mean(targets))
        s = max(float(np.std(targets)), 1e-6)
        if self._scale_initialized:
            self.net.value_shift = (1 - blend) * self.net.value_shift + blend * m
            self.net.value_scale = (1 - blend) * self.net.value_scale + blend * s
        else:
            self.net.value_shift = m
            self.net.value_scale = s
            self._scale_initialized = True

    def train_iteration(self, trajectories: list[Trajectory],
                        rng: np.random.Generator,
                        lr_scale: float = 1.0) -> Diagnostics:
        """hp.epochs_per_iter full passes of minibatch updates.

        Deterministic for a given (params, trajectories, rng state).  On a
        non-finite loss the pre-iteration parameters are restored and
        NonFiniteLoss is raised.  `lr_scale` multiplies both step sizes,
        for caller-side schedules.
        """
        if not trajectories:
            raise ValueError("no trajectories collected")
        hp = self.hp
        batch = build_batch(trajectories, hp)
        snapshot = (self.net.theta.copy(), self.net.value_params.copy(),
                    self.net.value_shift, self.net.value_scale)
        rate_targets = batch.value_targets / self.net.horizon_factor(batch.time_frac)
        self._update_value_scale(rate_targets)
        mb = hp.minibatch_size if hp.minibatch_size > 0 else len(batch)
        summary = Diagnostics()
        try:
            for _ in range(hp.epochs_per_iter):
                order = rng.permutation(len(batch))
                for lo in range(0, len(batch), mb):
                    idx = order[lo:lo + mb]
                    sub = TrainBatch(batch.states[idx], batch.actions[idx],
                                     batch.old_log_probs[idx],
                                     batch.advantages[idx],
                                     batch.value_targets[idx],
                                     batch.time_frac[idx])
                    loss, diag, g_theta, g_value = ppo_loss(self.net, sub, hp)
                    if not (np.isfinite(loss) and np.all(np.isfinite(g_theta))
                            and np.all(np.isfinite(g_value))):
                        raise NonFiniteLoss(f"loss={loss}")
                    adam_step(self.net.theta, g_theta, self.adam_theta,
                              lr_scale * hp.learning_rate)
                    adam_step(self.net.value_params, g_value, self.adam_value,
                              lr_scale * (hp.value_learning_rate
                                          or hp.learning_rate))
                    self.net.theta[-1] = min(max(self.net.theta[-1],
                                                 LOG_STD_MIN), LOG_STD_MAX)
                    summary.epochs.append(diag)
        except NonFiniteLoss:
            (self.net.theta[:], self.net.value_params[:],
             self.net.value_shift, self.net.value_scale) = snapshot
            raise
        if summary.epochs:
            last = summary.epochs[-1]
            for name in ("loss", "policy_loss", "value_loss", "entropy",
                         "mean_ratio", "clip_fraction", "approx_kl"):
                setattr(summary, name, getattr(last, name))
        return summary
