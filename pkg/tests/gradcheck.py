"""Finite-difference gradient check of the classifier at toy dimensions."""

from __future__ import annotations

import numpy as np

from oracles import central_difference, relative_error
from spoofkit.classifier import LossConfig, ModelConfig, backward, forward, init_params, oc_softmax_loss

TOY = ModelConfig(num_layers_plus_one=5, feature_dim=16, hidden_dim=8, attn_dim=8, embed_dim=8)


def random_problem(seed: int, cfg: ModelConfig = TOY, frames: int = 7):
    rng = np.random.default_rng(seed)
    p = init_params(cfg, rng)
    # every coordinate random so no ReLU input or softmax sits on a symmetric point
    for _, arr in p.items():
        arr[...] = rng.normal(0.0, 0.5, arr.shape)
    feats = rng.standard_normal((cfg.num_layers_plus_one, frames, cfg.feature_dim))
    label = "genuine" if seed % 2 == 0 else "spoof"
    return p, feats, label


def check(seed: int, dropout_p: float = 0.2, step: float = 1e-5, loss_cfg: LossConfig = LossConfig()):
    """Largest relative error per parameter tensor."""
    p, feats, label = random_problem(seed)
    mask_seed = 1000 + seed

    def loss():
        score, _, _ = forward(feats, p, "train", np.random.default_rng(mask_seed), dropout_p)
        return oc_softmax_loss(score, label, loss_cfg)

    _, _, cache = forward(feats, p, "train", np.random.default_rng(mask_seed), dropout_p)
    grads = backward(cache, label, p, loss_cfg)
    worst = {}
    for name, g in grads.items():
        fd = central_difference(loss, getattr(p, name), step)
        worst[name] = float(np.max(relative_error(g, fd))) if g.size else 0.0
    return worst
