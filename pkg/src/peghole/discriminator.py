"""Expert-vs-generated classifier over (window, action) pairs.

The discriminator sees the physical channels of the policy's window (pose
and sensed wrench, layer-normed over time, flattened) plus the pair's
action one-hot, through a dense-ReLU MLP to a scalar logit.  The window's
previous-action channels are deliberately excluded: conditioning the
reward on the generator's own action history lets self-consistent action
loops score as half-expert, and trained policies fall into down/wiggle
limit cycles.  score() is sigmoid(logit) clamped away from 0 and 1 so
rewards and gradients stay finite.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .config import NetConfig
from .policy import N_ACTIONS, OBS_CHANNELS

SCORE_CLAMP = 1e-6
PHYS_CHANNELS = 11   # pose (6) + sensed wrench (5)


def build_disc_net(cfg: NetConfig) -> list[nn.LayerSpec]:
    n_in = cfg.window * PHYS_CHANNELS + N_ACTIONS
    return [
        nn.dense(n_in, cfg.hidden),
        nn.relu(cfg.hidden),
        nn.dense(cfg.hidden, cfg.hidden),
        nn.relu(cfg.hidden),
        nn.dense(cfg.hidden, 1, init_scale=cfg.head_scale),
    ]


def disc_features(windows: np.ndarray, onehots: np.ndarray,
                  eps: float = 0.1) -> np.ndarray:
    """Time-normalize the physical channels, flatten, append the one-hot."""
    w = np.asarray(windows, dtype=np.float64)
    a = np.asarray(onehots, dtype=np.float64)
    single = w.ndim == 2
    if single:
        w, a = w[None], a[None]
    normed = nn.layer_norm_time(w[:, :, :PHYS_CHANNELS], eps)
    feats = np.concatenate([normed.reshape(w.shape[0], -1), a], axis=1)
    return feats[0] if single else feats


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def score(net: list[nn.LayerSpec], params: nn.ParamSet, window: np.ndarray,
          onehot: np.ndarray, eps: float = 0.1) -> float:
    """Probability the (window, action) pair is expert, in [1e-6, 1-1e-6]."""
    return float(score_batch(net, params, window[None], onehot[None], eps)[0])


def score_batch(net, params, windows, onehots, eps: float = 0.1) -> np.ndarray:
    feats = disc_features(windows, onehots, eps)
    logits, _ = nn.forward(net, params, feats)
    logits = logits[:, 0]
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite discriminator logit")
    return np.clip(_sigmoid(logits), SCORE_CLAMP, 1.0 - SCORE_CLAMP)


def bce_loss(d: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy of clamped probabilities."""
    d = np.clip(np.asarray(d, dtype=np.float64), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    return float(-(y * np.log(d) + (1 - y) * np.log(1 - d)).mean())


def _bce_from_logits(net, params, feats, labels):
    logits, cache = nn.forward(net, params, feats)
    z = logits[:, 0]
    # softplus form: BCE = y*softplus(-z) + (1-y)*softplus(z); grad = sigmoid(z)-y
    loss = float(np.mean(np.logaddexp(0.0, z) - labels * z))
    gz = (_sigmoid(z) - labels) / z.size
    grads, _ = nn.backward(net, params, cache, gz[:, None])
    return loss, grads


def train_discriminator(net, params: nn.ParamSet, expert_batch, generated_batch,
                        iters: int, lr: float = 1e-3,
                        rng: np.random.Generator | None = None,
                        batch_size: int = 128, eps: float = 0.1,
                        opt_state: nn.OptimizerState | None = None,
                        input_noise: float = 0.0):
    """Minimize mean BCE with labels expert=1, generated=0.

    expert_batch and generated_batch are (windows, onehots) pairs of equal
    length; each iteration takes one optimizer step on an equal-sized
    minibatch from each side.  input_noise adds fresh gaussian noise to the
    normalized window features each iteration, which bounds how sharply the
    classifier can separate a finite sample set and keeps its output
    informative round after round instead of saturating.

    Returns (params, final_loss, opt_state) with final_loss the mean BCE
    over the full (noisy, when input_noise > 0) batches after training.
    """
    ew, ea = expert_batch
    gw, ga = generated_batch
    if len(ew) == 0 or len(gw) == 0:
        raise ValueError("empty discriminator batch")
    if len(ew) != len(gw):
        raise ValueError("expert and generated batches must have equal size")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(0))
    if opt_state is None:
        opt_state = nn.make_optimizer("adam")

    ef = disc_features(ew, ea, eps)
    gf = disc_features(gw, ga, eps)
    n_window_feats = ef.shape[1] - ea.shape[1]

    def noisy(feats):
        if input_noise <= 0:
            return feats
        jitter = np.zeros_like(feats)
        jitter[:, :n_window_feats] = rng.normal(0.0, input_noise,
                                                (len(feats), n_window_feats))
        return feats + jitter

    b = min(batch_size, len(ef))
    for _ in range(iters):
        ei = rng.choice(len(ef), size=b, replace=False)
        gi = rng.choice(len(gf), size=b, replace=False)
        feats = noisy(np.concatenate([ef[ei], gf[gi]]))
        labels = np.concatenate([np.ones(b), np.zeros(b)])
        _, grads = _bce_from_logits(net, params, feats, labels)
        params, opt_state = nn.update(params, grads, opt_state, lr)

    feats = noisy(np.concatenate([ef, gf]))
    labels = np.concatenate([np.ones(len(ef)), np.zeros(len(gf))])
    logits, _ = nn.forward(net, params, feats)
    d = np.clip(_sigmoid(logits[:, 0]), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    return params, bce_loss(d, labels), opt_state


def gail_reward(d, form: str = "neg_log_one_minus_d"):
    """Reward the generator for fooling the discriminator.

    Default -log(1 - d): zero for obviously-generated pairs, growing
    (bounded by -log(clamp)) as pairs look expert.  "log_d" is available
    for ablation.
    """
    d = np.clip(np.asarray(d, dtype=np.float64), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
    if form == "neg_log_one_minus_d":
        out = -np.log(1.0 - d)
    elif form == "log_d":
        out = np.log(d)
    else:
        raise ValueError(f"unknown reward form {form!r}")
    return float(out) if out.ndim == 0 else out
