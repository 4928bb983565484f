"""Clipped-surrogate policy optimization with GAE over discriminator rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .config import PPOConfig
from .policy import N_ACTIONS, entropy as policy_entropy


@dataclass
class Rollout:
    """Flattened (window, action, ...) tuples; dones mark episode ends."""

    windows: np.ndarray        # (N, T, C)
    actions: np.ndarray        # (N,)
    log_probs_old: np.ndarray  # (N,)
    rewards: np.ndarray        # (N,)
    values: np.ndarray         # (N,)
    dones: np.ndarray          # (N,) bool

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class PPOStats:
    surrogate: float
    value_loss: float
    entropy: float
    mean_ratio: float
    approx_kl: float
    aborted: bool = False
    early_stop_epoch: int | None = None


def compute_advantages(rewards, values, dones, gamma: float, lam: float):
    """GAE: A_t = d_t + gamma*lam*(1-done_t)*A_{t+1},
    d_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t, terminal bootstrap 0.

    Returns (advantages, returns) with returns = advantages + values.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=bool)
    if not (len(r) == len(v) == len(d)):
        raise ValueError("rewards, values, dones must have equal length")
    adv = np.zeros_like(r)
    last = 0.0
    for t in range(len(r) - 1, -1, -1):
        nonterm = 0.0 if d[t] else 1.0
        v_next = v[t + 1] if t + 1 < len(r) else 0.0
        delta = r[t] + gamma * v_next * nonterm - v[t]
        last = delta + gamma * lam * nonterm * last
        adv[t] = last
    return adv, adv + v


def value_forward(net, params: nn.ParamSet, window: np.ndarray) -> float:
    out, _ = nn.forward(net, params, window)
    val = float(out[0])
    if not np.isfinite(val):
        raise ValueError("non-finite value output")
    return val


def value_forward_batch(net, params: nn.ParamSet, windows: np.ndarray) -> np.ndarray:
    out, _ = nn.forward(net, params, windows)
    return out[:, 0]


def policy_loss_and_grad(net, params, windows, actions, logp_old, adv,
                         cfg: PPOConfig):
    """Scalar loss (to minimize) and its exact parameter gradient.

    loss = -mean(min(ratio*A, clip(ratio)*A)) - entropy_weight * mean(H)
    """
    probs, cache = nn.forward(net, params, windows)
    n = len(actions)
    onehot = np.zeros((n, N_ACTIONS))
    onehot[np.arange(n), actions] = 1.0
    p_taken = np.maximum(probs[np.arange(n), actions], 1e-300)
    logp = np.log(p_taken)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    s1 = ratio * adv
    s2 = clipped * adv
    surr = np.minimum(s1, s2)
    use_unclipped = (s1 <= s2).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        logp_all = np.where(probs > 0, np.log(probs), 0.0)
    ent = policy_entropy(probs)

    loss = float(-surr.mean() - cfg.entropy_weight * ent.mean())
    # d surr/d logits = use * A * ratio * (onehot - probs)
    coef = (use_unclipped * adv * ratio)[:, None]
    gz = -coef * (onehot - probs) / n
    # d H/d logit_k = -p_k (log p_k + H)
    gz -= cfg.entropy_weight * (-(probs * (logp_all + ent[:, None]))) / n
    grads, _ = nn.backward(net, params, cache, gz, from_logits=True)

    parts = {
        "surrogate": float(surr.mean()),
        "entropy": float(ent.mean()),
        "mean_ratio": float(ratio.mean()),
        "approx_kl": float(np.mean((ratio - 1.0) - np.log(np.maximum(ratio, 1e-300)))),
    }
    return loss, grads, parts


def value_loss_and_grad(net, params, windows, returns, weight: float):
    out, cache = nn.forward(net, params, windows)
    v = out[:, 0]
    err = v - returns
    loss = float(weight * np.mean(err * err))
    gv = weight * 2.0 * err[:, None] / len(err)
    grads, _ = nn.backward(net, params, cache, gv)
    return loss, grads


def ppo_objective(policy_net, value_net, policy_params, value_params,
                  windows, actions, logp_old, adv, ret, cfg: PPOConfig) -> float:
    """Combined scalar objective on a fixed batch (finite-difference target)."""
    pl, _, _ = policy_loss_and_grad(policy_net, policy_params, windows, actions,
                                    logp_old, adv, cfg)
    vl, _ = value_loss_and_grad(value_net, value_params, windows, ret,
                                cfg.value_weight)
    return pl + vl


def ppo_update(policy_net, value_net, policy_params: nn.ParamSet,
               value_params: nn.ParamSet, rollout: Rollout, cfg: PPOConfig,
               rng: np.random.Generator,
               policy_opt: nn.OptimizerState | None = None,
               value_opt: nn.OptimizerState | None = None):
    """Run cfg.epochs minibatch passes of clipped-surrogate + value updates.

    Advantages are normalized to zero mean / unit variance per update.  A
    non-finite loss or gradient aborts the whole update and returns the
    original parameters untouched.

    Returns (policy_params, value_params, stats, policy_opt, value_opt).
    """
    if len(rollout) == 0:
        raise ValueError("empty rollout")
    if policy_opt is None:
        policy_opt = nn.make_optimizer(cfg.optimizer)
    if value_opt is None:
        value_opt = nn.make_optimizer(cfg.optimizer)

    adv, ret = compute_advantages(rollout.rewards, rollout.values,
                                  rollout.dones, cfg.gamma, cfg.gae_lambda)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    orig_policy, orig_value = policy_params, value_params
    orig_popt, orig_vopt = policy_opt, value_opt
    n = len(rollout)
    agg: dict[str, list[float]] = {"surrogate": [], "entropy": [],
                                   "mean_ratio": [], "approx_kl": [],
                                   "value_loss": []}
    early_stop = None
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch):
                idx = order[lo:lo + cfg.minibatch]
                pl, pg, parts = policy_loss_and_grad(
                    policy_net, policy_params, rollout.windows[idx],
                    rollout.actions[idx], rollout.log_probs_old[idx],
                    adv[idx], cfg)
                vl, vg = value_loss_and_grad(
                    value_net, value_params, rollout.windows[idx], ret[idx],
                    cfg.value_weight)
                if not (np.isfinite(pl) and np.isfinite(vl)):
                    raise FloatingPointError("non-finite PPO loss")
                policy_params, policy_opt = nn.update(policy_params, pg,
                                                      policy_opt, cfg.lr)
                value_params, value_opt = nn.update(value_params, vg,
                                                    value_opt, cfg.lr)
                for key, val in parts.items():
                    agg[key].append(val)
                agg["value_loss"].append(vl)
            if cfg.target_kl > 0 and epoch + 1 < cfg.epochs:
                # whole-rollout drift check between epochs: past the target,
                # further epochs would ride stale importance ratios
                probs, _ = nn.forward(policy_net, policy_params, rollout.windows)
                p_taken = np.maximum(
                    probs[np.arange(n), rollout.actions], 1e-300)
                ratio = np.exp(np.log(p_taken) - rollout.log_probs_old)
                kl = float(np.mean((ratio - 1.0) - np.log(ratio)))
                if kl > cfg.target_kl:
                    early_stop = epoch
                    break
    except (FloatingPointError, ValueError):
        return (orig_policy, orig_value,
                PPOStats(0.0, 0.0, 0.0, 1.0, 0.0, aborted=True),
                orig_popt, orig_vopt)

    if not agg["surrogate"]:
        stats = PPOStats(0.0, 0.0, 0.0, 1.0, 0.0, early_stop_epoch=early_stop)
        return policy_params, value_params, stats, policy_opt, value_opt
    stats = PPOStats(
        surrogate=float(np.mean(agg["surrogate"])),
        value_loss=float(np.mean(agg["value_loss"])),
        entropy=float(np.mean(agg["entropy"])),
        mean_ratio=float(np.mean(agg["mean_ratio"])),
        approx_kl=float(np.mean(agg["approx_kl"])),
        early_stop_epoch=early_stop,
    )
    return policy_params, value_params, stats, policy_opt, value_opt
