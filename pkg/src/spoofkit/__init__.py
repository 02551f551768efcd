"""Spoofed-speech detection from layered self-supervised speech features."""

from .audio_io import Waveform, read_wav, write_wav
from .classifier import LossConfig, ModelConfig, ModelParams, backward, forward, init_params
from .evaluation import ScoreSet, compute_eer, det_points
from .toyfeat import LayeredFeatures, ToyExtractor, ToyExtractorConfig, extract_toy_features

__version__ = "0.1.0"

__all__ = [
    "LayeredFeatures",
    "LossConfig",
    "ModelConfig",
    "ModelParams",
    "ScoreSet",
    "ToyExtractor",
    "ToyExtractorConfig",
    "Waveform",
    "backward",
    "compute_eer",
    "det_points",
    "extract_toy_features",
    "forward",
    "init_params",
    "read_wav",
    "write_wav",
]
