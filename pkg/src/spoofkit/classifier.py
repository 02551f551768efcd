"""Downstream spoofing classifier over layered SSL features, with hand-written backprop.

Pipeline per utterance::

    [L+1, T, D] --temporal norm--> --softmax layer mix--> [T, D]
      --FF+ReLU+dropout x2--> [T, H] --attentive stats pool--> [2H]
      --linear--> [E] --cosine vs. genuine direction--> score in [-1, 1]

Training uses the one-class softmax loss on the score.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .toyfeat import LayeredFeatures

NORM_EPS = 1e-5
POOL_EPS = 1e-6
COS_EPS = 1e-12

GENUINE = "genuine"


def is_genuine(label: str) -> bool:
    return label == GENUINE


@dataclass(frozen=True)
class ModelConfig:
    num_layers_plus_one: int = 5
    feature_dim: int = 64
    hidden_dim: int = 128
    attn_dim: int = 128
    embed_dim: int = 128


@dataclass(frozen=True)
class LossConfig:
    scale: float = 20.0
    margin_genuine: float = 0.9
    margin_spoof: float = 0.2

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("loss scale must be positive")
        if not self.margin_genuine > self.margin_spoof:
            raise ValueError("margin_genuine must exceed margin_spoof")


@dataclass
class ModelParams:
    """Trainable parameters. Field order is the checkpoint serialization order."""

    layer_logits: np.ndarray  # [L+1]
    ff1_w: np.ndarray  # [H, D]
    ff1_b: np.ndarray  # [H]
    ff2_w: np.ndarray  # [H, H]
    ff2_b: np.ndarray  # [H]
    attn_w: np.ndarray  # [A, H]
    attn_b: np.ndarray  # [A]
    attn_v: np.ndarray  # [A]
    attn_k: np.ndarray  # scalar, shape ()
    embed_w: np.ndarray  # [E, 2H]
    embed_b: np.ndarray  # [E]
    w_genuine: np.ndarray  # [E]

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def items(self):
        for name in self.names():
            yield name, getattr(self, name)

    def map(self, fn) -> "ModelParams":
        return ModelParams(**{k: fn(v) for k, v in self.items()})

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(v) for _, v in self.items()])

    def config(self) -> ModelConfig:
        H, D = self.ff1_w.shape
        return ModelConfig(
            num_layers_plus_one=self.layer_logits.shape[0],
            feature_dim=D,
            hidden_dim=H,
            attn_dim=self.attn_w.shape[0],
            embed_dim=self.embed_w.shape[0],
        )


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases and equal layer logits."""

    def glorot(fan_out, fan_in):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, (fan_out, fan_in))

    L1, D, H, A, E = (
        cfg.num_layers_plus_one,
        cfg.feature_dim,
        cfg.hidden_dim,
        cfg.attn_dim,
        cfg.embed_dim,
    )
    return ModelParams(
        layer_logits=np.zeros(L1),
        ff1_w=glorot(H, D),
        ff1_b=np.zeros(H),
        ff2_w=glorot(H, H),
        ff2_b=np.zeros(H),
        attn_w=glorot(A, H),
        attn_b=np.zeros(A),
        attn_v=rng.uniform(-1.0, 1.0, A) / np.sqrt(A),
        attn_k=np.zeros(()),
        embed_w=glorot(E, 2 * H),
        embed_b=np.zeros(E),
        w_genuine=rng.standard_normal(E),
    )


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z))
    return e / e.sum()


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def temporal_normalize(data: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance over time for every (layer, channel)."""
    x = np.asarray(data, dtype=np.float64)
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + NORM_EPS)


def layer_mix(normalized: np.ndarray, layer_logits: np.ndarray) -> np.ndarray:
    if normalized.shape[0] != layer_logits.shape[0]:
        raise ValueError(
            f"{normalized.shape[0]} layers but {layer_logits.shape[0]} layer logits"
        )
    alpha = softmax(layer_logits)
    return np.tensordot(alpha, normalized, axes=1)


def dropout_mask(shape, p: float, rng: np.random.Generator | None) -> np.ndarray | None:
    """Inverted-dropout mask, or None when dropout is inactive."""
    if p <= 0.0:
        return None
    if not p < 1.0:
        raise ValueError("dropout_p must lie in [0, 1)")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    return (rng.random(shape) >= p) / (1.0 - p)


def ff_stack(
    seq: np.ndarray,
    ff1: tuple[np.ndarray, np.ndarray],
    ff2: tuple[np.ndarray, np.ndarray],
    dropout_p: float = 0.0,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    _cache: dict | None = None,
) -> np.ndarray:
    """Two ReLU layers, each followed by dropout in train mode."""
    if not 0.0 <= dropout_p < 1.0:
        raise ValueError("dropout_p must lie in [0, 1)")
    train = mode == "train"
    z1 = seq @ ff1[0].T + ff1[1]
    a1 = np.maximum(z1, 0.0)
    m1 = dropout_mask(a1.shape, dropout_p, rng) if train else None
    d1 = a1 * m1 if m1 is not None else a1
    z2 = d1 @ ff2[0].T + ff2[1]
    a2 = np.maximum(z2, 0.0)
    m2 = dropout_mask(a2.shape, dropout_p, rng) if train else None
    out = a2 * m2 if m2 is not None else a2
    if _cache is not None:
        _cache.update(z1=z1, m1=m1, d1=d1, z2=z2, m2=m2)
    return out


def attentive_stat_pool(
    seq: np.ndarray,
    attn_w: np.ndarray,
    attn_b: np.ndarray,
    attn_v: np.ndarray,
    attn_k=0.0,
    _cache: dict | None = None,
) -> np.ndarray:
    """Attention-weighted mean and standard deviation over frames, concatenated."""
    u = np.tanh(seq @ attn_w.T + attn_b)
    logits = u @ attn_v + attn_k
    a = softmax(logits)
    mu = a @ seq
    var = a @ (seq * seq) - mu * mu
    sigma = np.sqrt(np.maximum(var, 0.0) + POOL_EPS)
    if _cache is not None:
        _cache.update(u=u, attn=a, mu=mu, var=var, sigma=sigma)
    return np.concatenate([mu, sigma])


def embed(pooled: np.ndarray, embed_w: np.ndarray, embed_b: np.ndarray) -> np.ndarray:
    return embed_w @ pooled + embed_b


def cosine_score(e: np.ndarray, w: np.ndarray) -> float:
    denom = max(np.linalg.norm(w) * np.linalg.norm(e), COS_EPS)
    return float(np.clip(np.dot(w, e) / denom, -1.0, 1.0))


def oc_softmax_loss(score, label, cfg: LossConfig = LossConfig()):
    """One-class softmax loss; works on scalars or arrays of scores/labels."""
    score = np.asarray(score, dtype=np.float64)
    genuine = np.vectorize(is_genuine, otypes=[bool])(label)
    margin = np.where(
        genuine, cfg.margin_genuine - score, score - cfg.margin_spoof
    )
    loss = softplus(cfg.scale * margin)
    return float(loss) if loss.ndim == 0 else loss


def oc_softmax_grad(score: float, label: str, cfg: LossConfig) -> float:
    """d loss / d score."""
    if is_genuine(label):
        return -cfg.scale * float(sigmoid(cfg.scale * (cfg.margin_genuine - score)))
    return cfg.scale * float(sigmoid(cfg.scale * (score - cfg.margin_spoof)))


@dataclass
class ForwardCache:
    normalized: np.ndarray
    alpha: np.ndarray
    mixed: np.ndarray
    z1: np.ndarray
    m1: np.ndarray | None
    d1: np.ndarray
    z2: np.ndarray
    m2: np.ndarray | None
    hidden: np.ndarray
    u: np.ndarray
    attn: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    sigma: np.ndarray
    pooled: np.ndarray
    embedding: np.ndarray
    score: float
    consumed: bool = False


def _as_array(f) -> np.ndarray:
    if isinstance(f, LayeredFeatures):
        return f.data
    return np.asarray(f)


def forward(
    f: LayeredFeatures | np.ndarray,
    p: ModelParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    dropout_p: float = 0.0,
    trace: list | None = None,
):
    """Score one utterance.

    Returns ``(score, embedding, cache)``; ``cache`` is None outside train mode.
    ``trace``, when given, collects the intermediate shapes in layer order.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    data = _as_array(f)
    if data.ndim != 3:
        raise ValueError(f"features must be 3-D [layers, frames, dim], got {data.shape}")
    L1, T, D = data.shape
    if T < 1:
        raise ValueError("need at least one frame")
    if L1 != p.layer_logits.shape[0]:
        raise ValueError(f"feature layers {L1} != model layers {p.layer_logits.shape[0]}")
    if D != p.ff1_w.shape[1]:
        raise ValueError(f"feature dim {D} != model input dim {p.ff1_w.shape[1]}")

    normalized = temporal_normalize(data)
    alpha = softmax(p.layer_logits)
    mixed = np.tensordot(alpha, normalized, axes=1)
    ffc: dict = {}
    hidden = ff_stack(
        mixed, (p.ff1_w, p.ff1_b), (p.ff2_w, p.ff2_b), dropout_p, mode, rng, _cache=ffc
    )
    pc: dict = {}
    pooled = attentive_stat_pool(hidden, p.attn_w, p.attn_b, p.attn_v, p.attn_k, _cache=pc)
    e = embed(pooled, p.embed_w, p.embed_b)
    score = cosine_score(e, p.w_genuine)
    if trace is not None:
        trace.extend([data.shape, mixed.shape, hidden.shape, pooled.shape, e.shape, np.shape(score)])
    if mode != "train":
        return score, e, None
    cache = ForwardCache(
        normalized=normalized,
        alpha=alpha,
        mixed=mixed,
        hidden=hidden,
        pooled=pooled,
        embedding=e,
        score=score,
        **ffc,
        **pc,
    )
    return score, e, cache


def backward(
    cache: ForwardCache,
    label: str,
    p: ModelParams,
    cfg: LossConfig = LossConfig(),
    weight: float = 1.0,
) -> ModelParams:
    """Gradient of ``weight * loss(score, label)`` w.r.t. every parameter.

    For a batch mean, call with ``weight = 1 / batch_size`` and sum the results.
    """
    if cache is None:
        raise ValueError("backward needs the cache of a train-mode forward")
    if cache.consumed:
        raise ValueError("stale cache: backward already ran on it")
    cache.consumed = True
    c = cache

    # cosine score
    g_s = weight * oc_softmax_grad(c.score, label, cfg)
    e, w = c.embedding, p.w_genuine
    ne, nw = np.linalg.norm(e), np.linalg.norm(w)
    denom = max(ne * nw, COS_EPS)
    S = np.dot(w, e) / denom
    g_e = g_s * (w / denom - S * e / max(ne * ne, COS_EPS))
    g_w = g_s * (e / denom - S * w / max(nw * nw, COS_EPS))

    # linear embedding
    g_embed_w = np.outer(g_e, c.pooled)
    g_embed_b = g_e
    g_pooled = p.embed_w.T @ g_e
    H = c.mu.shape[0]
    g_mu, g_sigma = g_pooled[:H], g_pooled[H:]

    # attentive statistics pooling
    h, a = c.hidden, c.attn
    g_var = np.where(c.var > 0.0, g_sigma / (2.0 * c.sigma), 0.0)
    g_h = a[:, None] * (g_mu + 2.0 * g_var * (h - c.mu))
    g_a = h @ g_mu + (h * h - 2.0 * c.mu * h) @ g_var
    g_logit = a * (g_a - np.dot(a, g_a))
    g_attn_v = c.u.T @ g_logit
    g_attn_k = np.asarray(g_logit.sum())
    g_q = np.outer(g_logit, p.attn_v) * (1.0 - c.u * c.u)
    g_attn_w = g_q.T @ h
    g_attn_b = g_q.sum(axis=0)
    g_h = g_h + g_q @ p.attn_w

    # FF stack
    g_a2 = g_h * c.m2 if c.m2 is not None else g_h
    g_z2 = g_a2 * (c.z2 > 0.0)
    g_ff2_w = g_z2.T @ c.d1
    g_ff2_b = g_z2.sum(axis=0)
    g_d1 = g_z2 @ p.ff2_w
    g_a1 = g_d1 * c.m1 if c.m1 is not None else g_d1
    g_z1 = g_a1 * (c.z1 > 0.0)
    g_ff1_w = g_z1.T @ c.mixed
    g_ff1_b = g_z1.sum(axis=0)
    g_mixed = g_z1 @ p.ff1_w

    # softmax layer weights
    g_alpha = np.tensordot(c.normalized, g_mixed, axes=([1, 2], [0, 1]))
    g_logits = c.alpha * (g_alpha - np.dot(c.alpha, g_alpha))

    return ModelParams(
        layer_logits=g_logits,
        ff1_w=g_ff1_w,
        ff1_b=g_ff1_b,
        ff2_w=g_ff2_w,
        ff2_b=g_ff2_b,
        attn_w=g_attn_w,
        attn_b=g_attn_b,
        attn_v=g_attn_v,
        attn_k=g_attn_k,
        embed_w=g_embed_w,
        embed_b=g_embed_b,
        w_genuine=g_w,
    )


def loss_and_grad(
    batch,
    p: ModelParams,
    cfg: LossConfig,
    dropout_p: float,
    rngs,
) -> tuple[float, ModelParams]:
    """Mean loss and its gradient over ``batch`` = [(features, label), ...].

    ``rngs`` supplies one dropout generator per utterance, in batch order.
    """
    n = len(batch)
    total = p.zeros_like()
    loss = 0.0
    for (feats, label), rng in zip(batch, rngs):
        score, _, cache = forward(feats, p, "train", rng, dropout_p)
        loss += oc_softmax_loss(score, label, cfg) / n
        g = backward(cache, label, p, cfg, weight=1.0 / n)
        for name, arr in g.items():
            getattr(total, name)[...] += arr
    return loss, total


# -- checkpoints -------------------------------------------------------------

CKPT_MAGIC = b"SPK1"
CKPT_VERSION = 1


def save_checkpoint(path, p: ModelParams, header: dict | None = None) -> None:
    """Write magic, u32 version, u32 header length, JSON header, then f64 tensors."""
    meta = dict(header or {})
    meta["model"] = asdict(p.config())
    meta["tensors"] = [[name, list(np.shape(v))] for name, v in p.items()]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for _, v in p.items():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(raw[12 : 12 + hlen])
        shapes = {name: tuple(shape) for name, shape in meta["tensors"]}
    except (ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint header") from exc
    offset = 12 + hlen
    arrays = {}
    for name in ModelParams.names():
        if name not in shapes:
            raise ValueError(f"{path}: missing tensor {name}")
        count = int(np.prod(shapes[name], dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise ValueError(f"{path}: truncated checkpoint")
        arrays[name] = np.frombuffer(raw, "<f8", count, offset).reshape(shapes[name]).copy()
        offset = end
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    p = ModelParams(**arrays)
    if not all(np.all(np.isfinite(v)) for _, v in p.items()):
        raise ValueError(f"{path}: non-finite parameters")
    return p, meta
