"""A frozen, deterministic stand-in for a pretrained multi-layer speech encoder.

Layer 0 is a strided frame encoder (25 ms window, 20 ms hop); every further
layer is a residual block over the previous one, so the output stacks
``num_layers + 1`` hidden sequences exactly like an SSL backbone's hidden states.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import Waveform

FRAME_HOP_MS = 20
RECEPTIVE_MS = 25

FEATURE_MAGIC = b"LFT1"
_HEADER = struct.Struct("<4s3I")
# refuse headers that would describe more than 2**31 floats (8 GiB)
MAX_FEATURE_ELEMENTS = 2**31


def frame_geometry(sample_rate: int) -> tuple[int, int]:
    """(receptive_samples, hop_samples) at ``sample_rate``."""
    return sample_rate * RECEPTIVE_MS // 1000, sample_rate * FRAME_HOP_MS // 1000


def num_frames(num_samples: int, sample_rate: int = 16000) -> int:
    receptive, hop = frame_geometry(sample_rate)
    if num_samples < receptive:
        return 0
    return (num_samples - receptive) // hop + 1


@dataclass(frozen=True)
class LayeredFeatures:
    """Hidden states stacked as ``data[layer, frame, channel]``."""

    data: np.ndarray
    frame_hop_ms: int = FRAME_HOP_MS
    receptive_ms: int = RECEPTIVE_MS

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"layered features must be 3-D, got shape {self.data.shape}")
        if self.data.shape[0] < 2:
            raise ValueError("need at least the encoder output plus one contextual layer")

    @property
    def num_layers_plus_one(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ToyExtractorConfig:
    num_layers: int = 4
    feature_dim: int = 64
    init_seed: int = 0
    sample_rate: int = 16000
    # gain on the frame encoder weights; sets how far into tanh the frames land
    input_gain: float = 16.0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")


@dataclass(frozen=True, eq=False)
class ToyExtractor:
    """Parameters are drawn once from ``cfg.init_seed`` and never touched again."""

    cfg: ToyExtractorConfig
    params: dict = field(init=False, repr=False)

    def __post_init__(self):
        cfg = self.cfg
        rng = np.random.default_rng(cfg.init_seed)
        receptive, _ = frame_geometry(cfg.sample_rate)
        D = cfg.feature_dim
        window = np.blackman(receptive)
        p = {
            "enc_w": _cosine_bank(window, D, cfg.sample_rate, rng) * cfg.input_gain,
            "enc_b": rng.uniform(-0.1, 0.1, D),
        }
        for layer in range(1, cfg.num_layers + 1):
            p[f"conv{layer}"] = rng.standard_normal((3, D)) / np.sqrt(3.0)
            p[f"proj{layer}_w"] = rng.standard_normal((D, D)) / np.sqrt(D)
            p[f"proj{layer}_b"] = rng.uniform(-0.1, 0.1, D)
        for arr in p.values():
            arr.setflags(write=False)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "_window", window)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()

    def frames(self, w: Waveform) -> np.ndarray:
        receptive, hop = frame_geometry(self.cfg.sample_rate)
        T = num_frames(len(w), self.cfg.sample_rate)
        idx = np.arange(T)[:, None] * hop + np.arange(receptive)[None, :]
        return w.samples[idx] * self._window

    def __call__(self, w: Waveform) -> LayeredFeatures:
        return extract_toy_features(w, self)


def _cosine_bank(window: np.ndarray, count: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """Cosines at random frequencies and phases, one per column.

    Columns are scaled so that, combined with the frame window, each is a
    unit-norm band-pass kernel (the shape a trained conv front-end converges to).
    """
    n = np.arange(window.shape[0])
    freqs = rng.uniform(50.0, sample_rate / 2 - 50.0, count)
    phases = rng.uniform(0.0, 2 * np.pi, count)
    bank = np.cos(2 * np.pi * freqs[None, :] * n[:, None] / sample_rate + phases[None, :])
    return bank / np.linalg.norm(window[:, None] * bank, axis=0, keepdims=True)


def _temporal_conv3(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Per-channel width-3 convolution over frames, zero padded."""
    padded = np.pad(h, ((1, 1), (0, 0)))
    return k[0] * padded[:-2] + k[1] * padded[1:-1] + k[2] * padded[2:]


def extract_toy_features(w: Waveform, extractor: ToyExtractor | ToyExtractorConfig) -> LayeredFeatures:
    if isinstance(extractor, ToyExtractorConfig):
        extractor = ToyExtractor(extractor)
    cfg = extractor.cfg
    if w.sample_rate_hz != cfg.sample_rate:
        raise ValueError(f"waveform rate {w.sample_rate_hz} != extractor rate {cfg.sample_rate}")
    receptive, _ = frame_geometry(cfg.sample_rate)
    if len(w) < receptive:
        raise ValueError(f"waveform too short: {len(w)} samples < receptive field {receptive}")
    p = extractor.params
    h = np.tanh(extractor.frames(w) @ p["enc_w"] + p["enc_b"])
    layers = [h]
    for layer in range(1, cfg.num_layers + 1):
        mixed = _temporal_conv3(h, p[f"conv{layer}"])
        h = h + np.tanh(mixed @ p[f"proj{layer}_w"] + p[f"proj{layer}_b"])
        layers.append(h)
    return LayeredFeatures(np.stack(layers).astype(np.float32))


def save_features(path, f: LayeredFeatures) -> None:
    data = np.ascontiguousarray(f.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, *data.shape))
        fh.write(data.tobytes())


def load_features(path) -> LayeredFeatures:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature file")
    _, n_layers, n_frames, dim = _HEADER.unpack_from(raw)
    count = n_layers * n_frames * dim
    if count > MAX_FEATURE_ELEMENTS:
        raise ValueError(f"{path}: dimension overflow ({n_layers}x{n_frames}x{dim})")
    expected = _HEADER.size + 4 * count
    if len(raw) < expected:
        raise ValueError(f"{path}: truncated payload ({len(raw)} of {expected} bytes)")
    if len(raw) > expected:
        raise ValueError(f"{path}: trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n_layers, n_frames, dim)
    return LayeredFeatures(data.astype(np.float32))
