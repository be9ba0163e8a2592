"""Clipped-surrogate PPO over the flat-parameter MLPs.

Gradients are exact analytic backprop (verified against central finite
differences by `grad_check`); the update is plain Adam with global-norm
clipping. Value targets are standardized with running return statistics so
the paper-scale learning rate can track returns of any magnitude; the
statistics ride along in the value checkpoint.
"""

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import (
    AllMasked,
    EmptyBuffer,
    LengthMismatch,
    NonFiniteLoss,
    ShapeMismatch,
)
from . import nets
from .nets import Adam, MlpParams, backward_batch, forward_batch

NEG_INF = -1e30


@dataclass(frozen=True)
class PpoHyper:
    lr: float = 5e-5               # policy learning rate
    clip: float = 0.05
    entropy_coef: float = 0.05
    gamma: float = 0.99
    lam: float = 0.95
    epochs_per_update: int = 4
    minibatch: int = 256
    value_coef: float = 0.5
    rollout_len: int = 2880        # one simulated month at 15-min steps
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_grad_norm: float = 0.5
    value_lr: float = 5e-4         # separate value optimizer (see notes)
    entropy_final: float = None    # anneal entropy_coef to this over training
    value_warmup_iters: int = 0    # iterations of value-only fitting first

    def __post_init__(self):
        if self.clip <= 0 or self.lr <= 0 or self.value_lr <= 0:
            raise ValueError("lr, value_lr and clip must be positive")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must be in [0, 1]")


def masked_probs(logits: np.ndarray, mask) -> np.ndarray:
    """Softmax over unmasked entries; masked entries get exactly zero."""
    logits = np.asarray(logits, dtype=np.float64)
    if mask is None:
        mask = np.ones(logits.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise AllMasked("no unmasked action")
    shifted = np.where(mask, logits, NEG_INF)
    shifted = shifted - shifted.max()
    p = np.where(mask, np.exp(shifted), 0.0)
    return p / p.sum()


def sample_action(logits: np.ndarray, mask, rng: np.random.Generator):
    """Sample a masked categorical action; returns (index, log_prob)."""
    p = masked_probs(logits, mask)
    idx = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    idx = min(idx, len(p) - 1)
    return idx, float(np.log(p[idx]))


def gae(rewards, values, bootstrap_value, dones, gamma, lam):
    """Generalized advantage estimation; returns (advantages, returns)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise LengthMismatch(
            f"rewards {rewards.shape}, values {values.shape}, dones {dones.shape}")
    return kernels.gae_scan(rewards, values, float(bootstrap_value), dones,
                            float(gamma), float(lam))


class RolloutBuffer:
    """On-policy storage for one agent between updates."""

    def __init__(self):
        self.clear()

    def clear(self):
        self.obs = []
        self.actions = []
        self.logps = []
        self.rewards = []
        self.dones = []
        self.masks = []
        self.final_next_obs = None

    def __len__(self):
        return len(self.obs)

    def add(self, obs, action, logp, reward, done, mask, next_obs):
        self.obs.append(obs)
        self.actions.append(action)
        self.logps.append(logp)
        self.rewards.append(reward)
        self.dones.append(done)
        self.masks.append(mask)
        self.final_next_obs = next_obs

    def stacked(self):
        return (np.asarray(self.obs, dtype=np.float64),
                np.asarray(self.actions, dtype=np.int64),
                np.asarray(self.logps, dtype=np.float64),
                np.asarray(self.rewards, dtype=np.float64),
                np.asarray(self.dones, dtype=np.float64),
                np.asarray(self.masks, dtype=bool))


@dataclass
class ReturnStats:
    """Welford running mean/std of GAE returns for value-target scaling."""

    count: float = 0.0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def std(self) -> float:
        if self.count < 2:
            return 1.0
        return max(math.sqrt(self.m2 / self.count), 1e-6)

    def update(self, xs: np.ndarray) -> None:
        n = float(xs.size)
        if n == 0:
            return
        mean_b = float(xs.mean())
        m2_b = float(((xs - mean_b) ** 2).sum())
        delta = mean_b - self.mean
        tot = self.count + n
        self.mean += delta * n / tot
        self.m2 += m2_b + delta * delta * self.count * n / tot
        self.count = tot


class PpoAgent:
    """Policy and value networks plus optimizer state for one agent."""

    def __init__(self, obs_dim: int, n_actions: int, hyper: PpoHyper,
                 rng: np.random.Generator, hidden=nets.HIDDEN_SIZES):
        self.hyper = hyper
        sizes_p = (obs_dim, *hidden, n_actions)
        sizes_v = (obs_dim, *hidden, 1)
        self.policy = nets.init_mlp(sizes_p, rng, out_scale=0.01)
        self.value = nets.init_mlp(sizes_v, rng, out_scale=1.0)
        self.opt_policy = Adam(hyper.lr, hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps)
        self.opt_value = Adam(hyper.value_lr, hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps)
        self.ret_stats = ReturnStats()

    def act(self, obs: np.ndarray, mask, rng: np.random.Generator):
        logits = nets.forward(self.policy, obs)
        return sample_action(logits, mask, rng)

    def act_greedy(self, obs: np.ndarray, mask=None) -> int:
        logits = nets.forward(self.policy, obs)
        if mask is not None:
            logits = np.where(np.asarray(mask, dtype=bool), logits, NEG_INF)
        return int(np.argmax(logits))

    def values_raw(self, obs_batch: np.ndarray) -> np.ndarray:
        out, _ = forward_batch(self.value, obs_batch)
        return out[:, 0] * self.ret_stats.std + self.ret_stats.mean


def ppo_update(agent: PpoAgent, buffer: RolloutBuffer, rng: np.random.Generator,
               entropy_coef: float = None, update_policy: bool = True) -> dict:
    """One PPO update from the buffer; clears it. Returns loss statistics.

    `entropy_coef` overrides the hyper value for this update (the trainer
    passes the annealed coefficient); `update_policy=False` fits the value
    net only (warmup). On a non-finite loss the parameters are rolled back
    to their pre-update snapshot and NonFiniteLoss is raised.
    """
    if len(buffer) == 0:
        raise EmptyBuffer("rollout buffer is empty")
    hyper = agent.hyper
    if entropy_coef is None:
        entropy_coef = hyper.entropy_coef
    obs, actions, logp_old, rewards, dones, masks = buffer.stacked()
    n = obs.shape[0]

    values = agent.values_raw(obs)
    if dones[-1]:
        bootstrap = 0.0
    else:
        bootstrap = float(agent.values_raw(buffer.final_next_obs.reshape(1, -1))[0])
    adv, ret = gae(rewards, values, bootstrap, dones, hyper.gamma, hyper.lam)
    if not (np.all(np.isfinite(adv)) and np.all(np.isfinite(ret))):
        buffer.clear()
        raise NonFiniteLoss("non-finite advantages or returns")

    adv_std = float(adv.std())
    if n >= 2 and adv_std > 1e-8:
        adv = (adv - adv.mean()) / adv_std

    agent.ret_stats.update(ret)
    targets = (ret - agent.ret_stats.mean) / agent.ret_stats.std

    snap_p = agent.policy.theta.copy()
    snap_v = agent.value.theta.copy()
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "clip_fraction": 0.0, "approx_kl": 0.0}
    n_mb = 0
    try:
        for _ in range(hyper.epochs_per_update):
            order = rng.permutation(n)
            for start in range(0, n, hyper.minibatch):
                mb = order[start:start + hyper.minibatch]
                mb_stats = _minibatch_step(agent, obs[mb], actions[mb], logp_old[mb],
                                           adv[mb], targets[mb], masks[mb], entropy_coef,
                                           update_policy)
                for k in stats:
                    stats[k] += mb_stats[k]
                n_mb += 1
    except NonFiniteLoss:
        agent.policy.theta[:] = snap_p
        agent.value.theta[:] = snap_v
        buffer.clear()
        raise
    buffer.clear()
    return {k: v / n_mb for k, v in stats.items()}


def _minibatch_step(agent: PpoAgent, obs, actions, logp_old, adv, targets, masks,
                    entropy_coef: float = None, update_policy: bool = True) -> dict:
    hyper = agent.hyper
    if entropy_coef is None:
        entropy_coef = hyper.entropy_coef
    n = obs.shape[0]
    rows = np.arange(n)

    logits, h = forward_batch(agent.policy, obs)
    shifted = np.where(masks, logits, NEG_INF)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    expv = np.where(masks, np.exp(shifted), 0.0)
    p = expv / expv.sum(axis=1, keepdims=True)
    logp_all = np.where(p > 0.0, np.log(np.maximum(p, 1e-300)), NEG_INF)
    logp_new = logp_all[rows, actions]

    ratio = np.exp(logp_new - logp_old)
    clipped = np.clip(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip)
    surr1 = ratio * adv
    surr2 = clipped * adv
    objective = np.minimum(surr1, surr2)
    plogp = np.where(p > 0.0, p * logp_all, 0.0)
    entropy = -plogp.sum(axis=1)

    policy_loss = -objective.mean() - entropy_coef * entropy.mean()
    if not np.isfinite(policy_loss):
        raise NonFiniteLoss(f"policy loss {policy_loss}")

    # d(-min(surr1, surr2))/dlogits: the clipped branch is constant in theta
    active = (surr1 <= surr2).astype(np.float64)
    one_hot = np.zeros_like(p)
    one_hot[rows, actions] = 1.0
    d_logits = -(active * ratio * adv)[:, None] * (one_hot - p) / n
    # d(-entropy_coef * mean(H))/dlogits = coef/n * p * (logp + H)
    d_logits += entropy_coef / n * p * np.where(masks, logp_all + entropy[:, None], 0.0)
    if update_policy:
        grad_p = backward_batch(agent.policy, obs, h, d_logits)
        grad_p = nets.clip_grad_norm(grad_p, hyper.max_grad_norm)
        agent.opt_policy.step(agent.policy.theta, grad_p)

    pred, hv = forward_batch(agent.value, obs)
    err = pred[:, 0] - targets
    value_loss = float(np.mean(err * err))
    if not np.isfinite(value_loss):
        raise NonFiniteLoss(f"value loss {value_loss}")
    d_out = (hyper.value_coef * 2.0 * err / n)[:, None]
    grad_v = backward_batch(agent.value, obs, hv, d_out)
    grad_v = nets.clip_grad_norm(grad_v, hyper.max_grad_norm)
    agent.opt_value.step(agent.value.theta, grad_v)

    return {
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean((ratio < 1.0 - hyper.clip) | (ratio > 1.0 + hyper.clip))),
        "approx_kl": float(np.mean(logp_old - logp_new)),
    }


def grad_check(net: MlpParams, x: np.ndarray, target: np.ndarray,
               eps: float = 1e-5) -> float:
    """Max relative error of analytic vs central-FD gradients (squared loss)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    y, h = forward_batch(net, x)
    if y.shape != target.shape:
        raise ShapeMismatch(f"output {y.shape} vs target {target.shape}")
    g_an = backward_batch(net, x, h, 2.0 * (y - target))

    def loss(theta):
        saved = net.theta.copy()
        net.theta[:] = theta
        out, _ = forward_batch(net, x)
        net.theta[:] = saved
        return float(((out - target) ** 2).sum())

    worst = 0.0
    base = net.theta.copy()
    for i in range(net.n_params):
        up = base.copy()
        up[i] += eps
        down = base.copy()
        down[i] -= eps
        g_fd = (loss(up) - loss(down)) / (2.0 * eps)
        rel = abs(g_fd - g_an[i]) / max(1e-8, abs(g_fd) + abs(g_an[i]))
        worst = max(worst, rel)
    return worst
