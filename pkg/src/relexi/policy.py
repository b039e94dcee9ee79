"""Stochastic control policy and value function over element-local samples.

Both heads share one architecture: a small stack of 1-D convolutions applied
independently to every element's m velocity samples, collapsing to a single
scalar per element.  The policy squashes a Gaussian over that scalar into
(0, 0.5); the value head averages the per-element scalars into one estimate.

Gradients are hand-written reverse-mode for this fixed topology and verified
against central finite differences in the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import wire

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
ACTION_SCALE = 0.5
CHECKPOINT_MAGIC = b"RLXP"
CHECKPOINT_VERSION = 1

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ShapeMismatch(ValueError):
    pass


class OutOfSupport(ValueError):
    """Action outside the open support (0, 0.5)."""


@dataclass(frozen=True)
class NetArchitecture:
    """Layer stack descriptor; `m` is the per-element input extent.

    conv1: kernel 3, 1 -> filters, zero padding, ReLU
    conv2: kernel 3, filters -> filters, no padding, ReLU
    conv3: kernel m-2, filters -> 1, no padding, linear (collapses to 1)
    policy tail: scale-sigmoid squash onto (0, 0.5) plus one log-std scalar
    value tail:  mean over elements, then a scalar linear head
    """

    m: int
    filters: int = 8

    def __post_init__(self):
        if self.m < 4:
            raise ValueError("need at least 4 points per element")

    @property
    def collapse_kernel(self) -> int:
        return self.m - 2

    def trunk_param_count(self) -> int:
        f = self.filters
        return (3 * 1 * f + f) + (3 * f * f + f) + (self.collapse_kernel * f + 1)

    def policy_param_count(self) -> int:
        return self.trunk_param_count() + 1          # + log_std

    def value_param_count(self) -> int:
        # head: state weight, two time-feature weights, bias.  Episodes are
        # finite-horizon, so the critic must see normalized time-to-go; the
        # velocity field alone cannot encode the remaining-reward horizon.
        return self.trunk_param_count() + 4

    def descriptor(self) -> dict:
        return {"m": self.m, "filters": self.filters}


@dataclass
class ActionDistribution:
    """Squashed Gaussian: z ~ N(mu, exp(log_std)), action = 0.5*sigmoid(z)."""

    mu: np.ndarray
    log_std: float

    def mode(self) -> np.ndarray:
        """Deterministic action (noise-free squash of the mean)."""
        return ACTION_SCALE * _sigmoid(self.mu)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def _z_from_action(action: np.ndarray) -> np.ndarray:
    a = np.asarray(action, dtype=np.float64)
    if np.any(a <= 0.0) or np.any(a >= ACTION_SCALE):
        raise OutOfSupport(f"action outside (0, {ACTION_SCALE})")
    return np.log(2.0 * a) - np.log1p(-2.0 * a)


def _log_prob_z(z, mu, log_std) -> np.ndarray:
    """Per-sample log density of the squashed variable, summed over elements.

    log p(a) = log N(z; mu, sigma) - log |da/dz|, with
    log |da/dz| = log(1/2) - softplus(z) - softplus(-z).
    """
    sigma = math.exp(log_std)
    gauss = -0.5 * ((z - mu) / sigma) ** 2 - log_std - _LOG_SQRT_2PI
    jac = math.log(ACTION_SCALE) - _softplus(z) - _softplus(-z)
    return np.sum(gauss - jac, axis=-1)


def sample_action(dist: ActionDistribution, rng: np.random.Generator):
    """Draw one action vector and its log probability."""
    sigma = math.exp(dist.log_std)
    z = dist.mu + sigma * rng.standard_normal(dist.mu.shape)
    action = ACTION_SCALE * _sigmoid(z)
    log_prob = float(_log_prob_z(z, dist.mu, dist.log_std))
    return action, log_prob


def log_prob_of(dist: ActionDistribution, action: np.ndarray) -> float:
    z = _z_from_action(action)
    if z.shape != dist.mu.shape:
        raise ShapeMismatch(f"action shape {z.shape} vs mu {dist.mu.shape}")
    return float(_log_prob_z(z, dist.mu, dist.log_std))


def entropy(dist_log_std: float, n_elements: int) -> float:
    """Entropy of the pre-squash Gaussian (diagnostic; closed form)."""
    return n_elements * (0.5 * math.log(2.0 * math.pi * math.e) + dist_log_std)


def _orthogonal(rows: int, cols: int, gain: float, rng) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class _Trunk:
    """The shared conv stack over flattened (batch*elements, m) inputs."""

    def __init__(self, arch: NetArchitecture):
        self.arch = arch
        nf = arch.filters
        self.shapes = [("W1", (3, 1, nf)), ("b1", (nf,)),
                       ("W2", (3, nf, nf)), ("b2", (nf,)),
                       ("W3", (arch.collapse_kernel, nf, 1)), ("b3", (1,))]

    def views(self, params: np.ndarray) -> dict:
        out = {}
        o = 0
        for name, shape in self.shapes:
            size = int(np.prod(shape))
            out[name] = params[o:o + size].reshape(shape)
            o += size
        return out

    def init(self, params: np.ndarray, rng):
        p = self.views(params)
        for name, gain in (("W1", math.sqrt(2.0)), ("W2", math.sqrt(2.0)),
                           ("W3", 0.01)):
            w = p[name]
            k, cin, cout = w.shape
            w[:] = _orthogonal(cout, k * cin, gain, rng).T.reshape(k, cin, cout)
        p["b1"][:] = 0.0
        p["b2"][:] = 0.0
        p["b3"][:] = 0.0

    def forward(self, x: np.ndarray, params: np.ndarray):
        """x: (B, m) single-channel input; returns (y (B,), cache)."""
        p = self.views(params)
        x = x[:, :, None]                                   # (B, m, 1)
        xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
        h1p = _conv_valid(xp, p["W1"]) + p["b1"]            # (B, m, F)
        h1 = np.maximum(h1p, 0.0)
        h2p = _conv_valid(h1, p["W2"]) + p["b2"]            # (B, m-2, F)
        h2 = np.maximum(h2p, 0.0)
        y = _conv_valid(h2, p["W3"]) + p["b3"]              # (B, 1, 1)
        cache = (xp, h1p, h1, h2p, h2)
        return y[:, 0, 0], cache

    def backward(self, dy: np.ndarray, params: np.ndarray, cache,
                 grad: np.ndarray):
        """Accumulate parameter gradients for upstream dy of shape (B,)."""
        p = self.views(params)
        g = self.views(grad)
        xp, h1p, h1, h2p, h2 = cache
        dy3 = dy[:, None, None]                             # (B, 1, 1)
        dh2 = _conv_backward(dy3, h2, p["W3"], g["W3"], g["b3"])
        dh2p = dh2 * (h2p > 0.0)
        dh1 = _conv_backward(dh2p, h1, p["W2"], g["W2"], g["b2"])
        dh1p = dh1 * (h1p > 0.0)
        _conv_backward(dh1p, xp, p["W1"], g["W1"], g["b1"])


def _conv_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid cross-correlation: x (B, L, Cin), w (k, Cin, Cout)."""
    k = w.shape[0]
    t_out = x.shape[1] - k + 1
    out = np.zeros((x.shape[0], t_out, w.shape[2]))
    for j in range(k):
        out += x[:, j:j + t_out, :] @ w[j]
    return out


def _conv_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray,
                   gw: np.ndarray, gb: np.ndarray) -> np.ndarray:
    """Gradients of _conv_valid; returns dx and accumulates gw, gb."""
    k = w.shape[0]
    t_out = dout.shape[1]
    dx = np.zeros_like(x)
    for j in range(k):
        gw[j] += np.einsum("btc,btf->cf", x[:, j:j + t_out, :], dout)
        dx[:, j:j + t_out, :] += dout @ w[j].T
    gb += dout.sum(axis=(0, 1))
    return dx


class PolicyNet:
    """Policy + value parameter container with batched forward/backward.

    `theta` is the flat policy vector (trunk weights then log_std);
    `value_params` is the flat value vector (trunk weights then linear head).
    `forward_count` counts policy evaluations, which the trainer uses to
    assert it never evaluates more than once per environment per step.
    """

    def __init__(self, arch: NetArchitecture, n_elements: int, seed: int = 0,
                 log_std_init: float = -1.0, horizon_gamma: float = 1.0,
                 horizon_steps: int = 1):
        self.arch = arch
        self.n_elements = n_elements
        self.horizon_gamma = horizon_gamma
        self.horizon_steps = horizon_steps
        self.trunk = _Trunk(arch)
        rng = np.random.default_rng(seed)
        self.theta = np.zeros(arch.policy_param_count())
        self.trunk.init(self.theta[:-1], rng)
        self.theta[-1] = log_std_init
        self.value_params = np.zeros(arch.value_param_count())
        self.trunk.init(self.value_params[:-4], rng)
        self.value_params[-4] = 1.0                  # state-feature weight
        # time weights and bias start at 0
        # The critic predicts a per-step reward rate; multiplying by the
        # discounted remaining-horizon factor gives the value.  Episodes are
        # finite-horizon, so the state alone cannot encode time-to-go.
        # shift/scale is an affine normalization of the regressed rate.
        self.value_shift = 0.0
        self.value_scale = 1.0
        self.forward_count = 0

    @property
    def log_std(self) -> float:
        return float(self.theta[-1])

    def _patches(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if states.ndim == 1:
            states = states[None, :]
        b, n = states.shape
        e, m = self.n_elements, self.arch.m
        if n != e * m:
            raise ShapeMismatch(f"state length {n} != {e} elements x {m} points")
        return states.reshape(b, e, m)

    # -- policy ----------------------------------------------------------

    def policy_forward(self, state: np.ndarray) -> ActionDistribution:
        self.forward_count += 1
        mu, _ = self.policy_mu_batch(state[None, :] if state.ndim == 1 else state)
        return ActionDistribution(mu[0], self.log_std)

    def policy_mu_batch(self, states: np.ndarray):
        x = self._patches(states)
        b, e, m = x.shape
        y, cache = self.trunk.forward(x.reshape(b * e, m), self.theta[:-1])
        return y.reshape(b, e), cache

    def policy_backward(self, cache, dmu: np.ndarray, dlog_std: float) -> np.ndarray:
        grad = np.zeros_like(self.theta)
        self.trunk.backward(dmu.reshape(-1), self.theta[:-1], cache, grad[:-1])
        grad[-1] = dlog_std
        return grad

    # -- value -----------------------------------------------------------

    def horizon_factor(self, time_frac) -> np.ndarray:
        """Discounted steps remaining: sum of gamma^k, k = 1..n*(1-tau)."""
        tau = np.asarray(time_frac, dtype=np.float64)
        remaining = self.horizon_steps * (1.0 - tau)
        g = self.horizon_gamma
        if abs(g - 1.0) < 1e-12:
            return np.maximum(remaining, 1.0)
        return np.maximum(g * (1.0 - g ** remaining) / (1.0 - g), g)

    def value_forward(self, state: np.ndarray, time_frac: float = 0.0) -> float:
        """Value estimate in reward units: (rate * scale + shift) * horizon.

        `time_frac` is elapsed episode time over total episode time.
        """
        states = state[None, :] if state.ndim == 1 else state
        rate, _ = self.value_batch(states, np.array([time_frac]))
        phi = self.horizon_factor(time_frac)
        return float((rate[0] * self.value_scale + self.value_shift) * phi)

    def value_batch(self, states: np.ndarray, time_frac: np.ndarray):
        """Normalized per-step reward rate (the quantity the critic regresses)."""
        x = self._patches(states)
        b, e, m = x.shape
        tau = np.broadcast_to(np.asarray(time_frac, dtype=np.float64), (b,))
        y, tcache = self.trunk.forward(x.reshape(b * e, m),
                                       self.value_params[:-4])
        h = y.reshape(b, e).mean(axis=1)
        w, wt1, wt2, bias = self.value_params[-4:]
        v = w * h + wt1 * tau + wt2 * tau ** 2 + bias
        return v, (tcache, h, tau, b, e)

    def value_backward(self, cache, dv: np.ndarray) -> np.ndarray:
        tcache, h, tau, b, e = cache
        grad = np.zeros_like(self.value_params)
        w = self.value_params[-4]
        grad[-4] = float(np.dot(dv, h))
        grad[-3] = float(np.dot(dv, tau))
        grad[-2] = float(np.dot(dv, tau ** 2))
        grad[-1] = float(np.sum(dv))
        dy = (dv[:, None] * w / e) * np.ones((b, e))
        self.trunk.backward(dy.reshape(-1), self.value_params[:-4], tcache,
                            grad[:-4])
        return grad

    # -- checkpointing -----------------------------------------------------

    def save(self, path, adam_state: dict | None = None):
        blobs = {"theta": self.theta, "value_params": self.value_params,
                 "value_affine": np.array([self.value_shift, self.value_scale])}
        if adam_state:
            for key, st in adam_state.items():
                blobs[f"adam_{key}_m"] = st.m
                blobs[f"adam_{key}_v"] = st.v
                blobs[f"adam_{key}_t"] = np.array([float(st.t)])
        desc = dict(self.arch.descriptor(), n_elements=self.n_elements,
                    horizon_gamma=self.horizon_gamma,
                    horizon_steps=self.horizon_steps, tensors=sorted(blobs))
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(CHECKPOINT_VERSION.to_bytes(4, "little"))
            fh.write(_tensor_bytes(np.frombuffer(
                json.dumps(desc, sort_keys=True).encode(), dtype=np.uint8)))
            for name in sorted(blobs):
                fh.write(_tensor_bytes(np.asarray(blobs[name], dtype=np.float64)))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a policy checkpoint")
        version = int.from_bytes(data[4:8], "little")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        cur = wire._Cursor(data)
        cur.take(8)
        desc = json.loads(wire._decode_tensor(cur).to_numpy().tobytes().decode())
        net = cls(NetArchitecture(desc["m"], desc["filters"]), desc["n_elements"],
                  horizon_gamma=desc.get("horizon_gamma", 1.0),
                  horizon_steps=desc.get("horizon_steps", 1))
        blobs = {}
        for name in desc["tensors"]:
            blobs[name] = wire._decode_tensor(cur).to_numpy()
        cur.done()
        net.theta[:] = blobs["theta"]
        net.value_params[:] = blobs["value_params"]
        if "value_affine" in blobs:
            net.value_shift, net.value_scale = blobs["value_affine"]
        adam = {}
        for key in ("theta", "value"):
            if f"adam_{key}_m" in blobs:
                adam[key] = AdamState(m=blobs[f"adam_{key}_m"],
                                      v=blobs[f"adam_{key}_v"],
                                      t=int(blobs[f"adam_{key}_t"][0]))
        return net, adam


def _tensor_bytes(arr: np.ndarray) -> bytes:
    out: list[bytes] = []
    wire._encode_tensor(wire.Tensor.from_numpy(arr), out)
    return b"".join(out)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One in-place Adam update with bias correction."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeMismatch("params/grads/state shapes differ")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads ** 2
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)
