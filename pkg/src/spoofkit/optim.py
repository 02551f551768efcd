"""Adam with gradient accumulation, the epoch loop and dev-loss early stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import augment
from .audio_io import Waveform, read_wav
from .augment import derive_seed
from .classifier import (
    LossConfig,
    ModelParams,
    backward,
    forward,
    oc_softmax_loss,
    save_checkpoint,
    softmax,
)
from .toyfeat import ToyExtractor, load_features

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout_p: float = 0.2
    batch_size: int = 8
    accumulation_steps: int = 8
    patience_epochs: int = 10
    max_epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.accumulation_steps < 1:
            raise ValueError("accumulation_steps must be >= 1")
        if self.patience_epochs < 1:
            raise ValueError("patience_epochs must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    fir: bool = True
    fir_prob: float = 0.5
    fir_band: str = "NB"
    partial: bool = True
    partial_fraction: float = augment.SPLICE_FRACTION
    partial_label: str = "partial"


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    for name, g in grads.items():
        p = getattr(params, name)
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name} at step {state.step + 1}")
    state.step += 1
    bc1 = 1.0 - cfg.beta1**state.step
    bc2 = 1.0 - cfg.beta2**state.step
    for name, g in grads.items():
        p, m, v = getattr(params, name), getattr(state.m, name), getattr(state.v, name)
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


class GradAccumulator:
    """Running per-utterance gradient sum; ``mean()`` is the window's average gradient."""

    def __init__(self, like: ModelParams):
        self.total = like.zeros_like()
        self.count = 0
        self.batches = 0

    def add(self, batch_mean: ModelParams, batch_size: int) -> None:
        for name, g in batch_mean.items():
            getattr(self.total, name)[...] += batch_size * g
        self.count += batch_size
        self.batches += 1

    def mean(self) -> ModelParams:
        if self.count == 0:
            raise ValueError("nothing accumulated")
        return self.total.map(lambda g: g / self.count)

    def reset(self) -> None:
        for _, g in self.total.items():
            g[...] = 0.0
        self.count = 0
        self.batches = 0


class EarlyStopping:
    """Stops after ``patience`` consecutive epochs without a strictly lower dev loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.since_improvement = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.since_improvement = 0
            return True
        self.since_improvement += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_improvement >= self.patience


@dataclass
class TrainState:
    adam: AdamState
    stopper: EarlyStopping
    history: list = field(default_factory=list)


class FeatureSource:
    """Clean waveforms and features for manifest rows, cached in memory.

    Rows carry ``id``, ``label`` and ``path`` (WAV), optionally ``features`` (LFT1 file).
    """

    def __init__(self, rows: Sequence[dict], extractor: ToyExtractor):
        self.rows = {str(r["id"]): r for r in rows}
        self.extractor = extractor
        self._wave: dict[str, Waveform] = {}
        self._feat: dict[str, np.ndarray] = {}

    def waveform(self, uid: str) -> Waveform:
        if uid not in self._wave:
            self._wave[uid] = read_wav(self.rows[uid]["path"], self.extractor.cfg.sample_rate)
        return self._wave[uid]

    def features(self, uid: str) -> np.ndarray:
        if uid not in self._feat:
            row = self.rows[uid]
            if row.get("features"):
                self._feat[uid] = load_features(row["features"]).data
            else:
                self._feat[uid] = self.extractor(self.waveform(uid)).data
        return self._feat[uid]

    def augmented(self, uid: str, decision: augment.UtteranceDecision) -> tuple[np.ndarray, bool]:
        """Features for ``uid`` under ``decision``; the flag tells whether it was spliced."""
        if decision.kind == "none":
            return self.features(uid), False
        w, record = augment.apply_decision(uid, decision, self.waveform)
        return self.extractor(w).data, record is not None


@dataclass
class TrainResult:
    best_params: ModelParams
    params: ModelParams
    state: TrainState
    best_epoch: int
    epochs_run: int

    @property
    def history(self) -> list:
        return self.state.history


def dev_loss(params: ModelParams, source: FeatureSource, loss_cfg: LossConfig) -> float:
    losses = [
        oc_softmax_loss(forward(source.features(uid), params, "eval")[0], row["label"], loss_cfg)
        for uid, row in source.rows.items()
    ]
    return float(np.mean(losses))


def train_loop(
    train_rows: Sequence[dict],
    dev_rows: Sequence[dict],
    params: ModelParams,
    extractor: ToyExtractor,
    aug_cfg: AugmentConfig = AugmentConfig(),
    cfg: TrainConfig = TrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
    dev_loss_fn: Callable[[int, ModelParams], float] | None = None,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train ``params`` in place; the lowest-dev-loss snapshot is returned as ``best_params``.

    Mini-batches of ``cfg.batch_size`` utterances feed one optimizer step every
    ``cfg.accumulation_steps`` mini-batches. A partial window left at the end
    of an epoch is flushed as its own step.
    """
    if not train_rows or not dev_rows:
        raise ValueError("train and dev manifests must be non-empty")
    train_src = FeatureSource(train_rows, extractor)
    dev_src = FeatureSource(dev_rows, extractor)
    if dev_loss_fn is None:
        dev_loss_fn = lambda epoch, p: dev_loss(p, dev_src, loss_cfg)  # noqa: E731

    state = TrainState(AdamState.fresh(params), EarlyStopping(cfg.patience_epochs))
    acc = GradAccumulator(params)
    best = params.copy()
    ids = [str(r["id"]) for r in train_rows]
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        plan = None
        if aug_cfg.enabled and (aug_cfg.fir or aug_cfg.partial):
            plan = augment.build_epoch_plan(
                train_rows,
                derive_seed(cfg.seed, "epoch", epoch),
                aug_cfg.fir_prob if aug_cfg.fir else 0.0,
                fir_band=aug_cfg.fir_band,
                splice=aug_cfg.partial,
                splice_fraction=aug_cfg.partial_fraction,
                sample_rate=extractor.cfg.sample_rate,
            )
        order = np.random.default_rng(derive_seed(cfg.seed, "shuffle", epoch)).permutation(len(ids))
        epoch_loss = 0.0
        for b0 in range(0, len(order), cfg.batch_size):
            batch = [ids[i] for i in order[b0 : b0 + cfg.batch_size]]
            batch_grad = params.zeros_like()
            for uid in batch:
                label = train_src.rows[uid]["label"]
                if plan is not None:
                    feats, spliced = train_src.augmented(uid, plan.decisions[uid])
                    if spliced:
                        label = aug_cfg.partial_label
                else:
                    feats = train_src.features(uid)
                rng = np.random.default_rng(derive_seed(cfg.seed, "dropout", epoch, uid))
                score, _, cache = forward(feats, params, "train", rng, cfg.dropout_p)
                epoch_loss += oc_softmax_loss(score, label, loss_cfg)
                g = backward(cache, label, params, loss_cfg, weight=1.0 / len(batch))
                for name, arr in g.items():
                    getattr(batch_grad, name)[...] += arr
            acc.add(batch_grad, len(batch))
            if acc.batches == cfg.accumulation_steps:
                adam_step(params, acc.mean(), state.adam, cfg)
                acc.reset()
        if acc.batches:
            adam_step(params, acc.mean(), state.adam, cfg)
            acc.reset()

        train_loss = epoch_loss / len(ids)
        dloss = float(dev_loss_fn(epoch, params))
        if state.stopper.update(epoch, dloss):
            best = params.copy()
        row = {
            "epoch": epoch,
            "train_loss": train_loss,
            "dev_loss": dloss,
            "alpha": softmax(params.layer_logits).tolist(),
            "steps": state.adam.step,
        }
        state.history.append(row)
        log.info("epoch %d train %.5f dev %.5f", epoch, train_loss, dloss)
        if progress is not None:
            progress(row)
        if state.stopper.should_stop:
            break
    return TrainResult(best, params, state, state.stopper.best_epoch, epoch)


def write_history_csv(path, history: Sequence[dict]) -> None:
    n_alpha = len(history[0]["alpha"]) if history else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "dev_loss"] + [f"alpha_{i}" for i in range(n_alpha)])
        for row in history:
            writer.writerow(
                [row["epoch"], repr(row["train_loss"]), repr(row["dev_loss"])]
                + [repr(a) for a in row["alpha"]]
            )


def read_history_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        alphas = [float(v) for k, v in r.items() if k.startswith("alpha_")]
        out.append(
            {
                "epoch": int(r["epoch"]),
                "train_loss": float(r["train_loss"]),
                "dev_loss": float(r["dev_loss"]),
                "alpha": alphas,
            }
        )
    return out


def save_training_outputs(out_dir, result: TrainResult, header: dict) -> Path:
    """Best checkpoint plus history CSV; returns the checkpoint path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = dict(header)
    meta["training"] = {
        "best_epoch": result.best_epoch,
        "best_dev_loss": result.state.stopper.best,
        "epochs_run": result.epochs_run,
        "optimizer_steps": result.state.adam.step,
    }
    ckpt = out_dir / "checkpoint.spk"
    save_checkpoint(ckpt, result.best_params, meta)
    write_history_csv(out_dir / "history.csv", result.history)
    return ckpt


