"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_SAMPLE_RATE = 16000


class WavFormatError(ValueError):
    """Base class for rejected WAV files."""


class MalformedWavError(WavFormatError):
    pass


class UnsupportedEncodingError(WavFormatError):
    pass


class UnsupportedChannelsError(WavFormatError):
    pass


class UnsupportedRateError(WavFormatError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats to int16 with round-half-away-from-zero and clamping."""
    x = np.asarray(samples, dtype=np.float64) * 32767.0
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform) -> None:
    if len(w) and np.max(np.abs(w.samples)) > 1.0:
        raise ValueError("sample magnitudes must not exceed 1.0")
    pcm = quantize_pcm16(w.samples)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate_hz)
        fh.writeframes(pcm.tobytes())


def read_wav(path, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    path = Path(path)
    try:
        fh = wave.open(str(path), "rb")
    except wave.Error as exc:
        msg = str(exc)
        if msg.startswith("unknown format"):
            raise UnsupportedEncodingError(f"{path}: unsupported encoding ({msg})") from exc
        raise MalformedWavError(f"{path}: malformed header ({msg})") from exc
    except EOFError as exc:
        raise MalformedWavError(f"{path}: malformed header (truncated)") from exc
    with fh:
        if fh.getsampwidth() != 2:
            raise UnsupportedEncodingError(
                f"{path}: unsupported encoding ({8 * fh.getsampwidth()}-bit PCM)"
            )
        if fh.getnchannels() != 1:
            raise UnsupportedChannelsError(
                f"{path}: unsupported channel count {fh.getnchannels()}"
            )
        if fh.getframerate() != sample_rate:
            raise UnsupportedRateError(
                f"{path}: unsupported sample rate {fh.getframerate()} (expected {sample_rate})"
            )
        n = fh.getnframes()
        raw = fh.readframes(n)
    if len(raw) != 2 * n:
        raise MalformedWavError(f"{path}: data chunk shorter than declared")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, sample_rate)


def wav_num_samples(path) -> int:
    """Sample count from the header only."""
    with wave.open(str(path), "rb") as fh:
        return fh.getnframes()
