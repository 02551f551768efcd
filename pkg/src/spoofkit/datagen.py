"""Synthetic genuine / spoof / partial-fake corpus for desk-scale experiments.

Genuine speech is a jittered harmonic source plus faint pink noise. Spoofs come
from the same generator followed by a fixed "vocoder" artifact: 4-bit amplitude
quantization then a 2-2.5 kHz band-stop. The notch sits below every NB
low-pass cutoff, so FIR augmentation never erases the class cue.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import Waveform, write_wav
from .augment import derive_seed, design_lowpass_fir, splice_partial_fake

F0_RANGE_HZ = (90.0, 250.0)
N_HARMONICS = 8
NOISE_DB = -30.0
PEAK = 0.9
QUANT_BITS = 4
NOTCH_HZ = (2000.0, 2500.0)
# design edges sit outside NOTCH_HZ so the whole nominal band is in the stopband
_NOTCH_DESIGN_HZ = (1940.0, 2560.0)
_NOTCH_TAPS = 511

SPLITS = ("train", "dev", "eval")
# share of the f0 range (simulated speaker pool) owned by each split
SPLIT_SHARES = (0.70, 0.15, 0.15)
_F0_BINS = 20


@dataclass(frozen=True)
class SynthConfig:
    """Per-split class counts; every split gets this many of each class."""

    n_genuine: int = 100
    n_spoof: int = 100
    n_partial: int = 20
    duration_s: tuple[float, float] = (1.0, 3.0)
    sample_rate: int = 16000
    seed: int = 0

    def __post_init__(self):
        if min(self.n_genuine, self.n_spoof, self.n_partial) < 0:
            raise ValueError("counts must be non-negative")
        lo, hi = self.duration_s
        if not 0.05 < lo <= hi:
            raise ValueError("durations must exceed 0.05 s and be ordered")


def split_f0_bins(split: str) -> list[tuple[float, float]]:
    """Disjoint, interleaved f0 sub-ranges for ``split``."""
    counts = np.round(np.array(SPLIT_SHARES) * _F0_BINS).astype(int)
    owner = np.repeat(np.arange(len(SPLITS)), counts)
    edges = np.linspace(*F0_RANGE_HZ, _F0_BINS + 1)
    # deal bins out in a fixed shuffled order so each split spans the whole range
    order = np.random.default_rng(12345).permutation(_F0_BINS)
    k = SPLITS.index(split)
    return [(edges[b], edges[b + 1]) for b, o in zip(order, owner) if o == k]


def _pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spectrum.size, dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(spectrum / np.sqrt(f), n)
    return x / np.sqrt(np.mean(x * x))


def _source(rng: np.random.Generator, cfg: SynthConfig, f0_ranges=None) -> tuple[np.ndarray, float]:
    """Jittered harmonic source plus pink noise, peak-normalized; returns (samples, f0)."""
    if f0_ranges is None:
        f0_ranges = [F0_RANGE_HZ]
    lo, hi = f0_ranges[int(rng.integers(len(f0_ranges)))]
    f0 = rng.uniform(lo, hi)
    n = int(round(rng.uniform(*cfg.duration_s) * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    # slow, shallow vibrato keeps the spectral peak on the nominal f0
    rates = rng.uniform(2.0, 5.0, 2)
    phases = rng.uniform(0, 2 * np.pi, 2)
    jitter = 0.002 * (np.sin(2 * np.pi * rates[0] * t + phases[0]) + np.sin(2 * np.pi * rates[1] * t + phases[1]))
    inst_f0 = f0 * (1.0 + jitter)
    phase = 2 * np.pi * np.cumsum(inst_f0) / cfg.sample_rate + rng.uniform(0, 2 * np.pi)
    harm_phase = rng.uniform(0, 2 * np.pi, N_HARMONICS)
    x = np.zeros(n)
    for k in range(1, N_HARMONICS + 1):
        x += np.sin(k * phase + harm_phase[k - 1]) / k
    rms = np.sqrt(np.mean(x * x))
    x += _pink_noise(n, rng) * rms * 10 ** (NOISE_DB / 20)
    return PEAK * x / np.max(np.abs(x)), f0


def quantize_levels(x: np.ndarray, bits: int = QUANT_BITS) -> np.ndarray:
    """Mid-tread uniform quantizer on [-1, 1) with 2**bits levels."""
    half = 2 ** (bits - 1)
    return np.clip(np.round(x * half), -half, half - 1) / half


def notch_filter() -> np.ndarray:
    lo = design_lowpass_fir(_NOTCH_DESIGN_HZ[0] / 16000, _NOTCH_TAPS).taps
    hi = design_lowpass_fir(_NOTCH_DESIGN_HZ[1] / 16000, _NOTCH_TAPS).taps
    h = lo - hi
    h[_NOTCH_TAPS // 2] += 1.0
    return h


def vocoder_artifact(x: np.ndarray, sample_rate: int = 16000) -> np.ndarray:
    """Quantize, then band-stop; output is not yet peak-normalized."""
    if sample_rate != 16000:
        raise ValueError("the notch is designed for 16 kHz audio")
    return np.convolve(quantize_levels(x), notch_filter(), mode="same")


def synth_genuine(rng: np.random.Generator, cfg: SynthConfig = SynthConfig(), f0_ranges=None) -> Waveform:
    x, _ = _source(rng, cfg, f0_ranges)
    return Waveform(x, cfg.sample_rate)


def synth_spoof(rng: np.random.Generator, cfg: SynthConfig = SynthConfig(), f0_ranges=None) -> Waveform:
    x, _ = _source(rng, cfg, f0_ranges)
    y = vocoder_artifact(x, cfg.sample_rate)
    return Waveform(PEAK * y / np.max(np.abs(y)), cfg.sample_rate)


def band_energy_ratio(w: Waveform, band=NOTCH_HZ) -> float:
    """Fraction of (Hann-windowed) signal energy inside ``band`` (Hz)."""
    spectrum = np.abs(np.fft.rfft(w.samples * np.hanning(len(w)))) ** 2
    freqs = np.fft.rfftfreq(len(w), 1.0 / w.sample_rate_hz)
    inside = (freqs >= band[0]) & (freqs <= band[1])
    return float(spectrum[inside].sum() / spectrum.sum())


def build_corpus(cfg: SynthConfig, out_dir) -> dict:
    """Write WAVs, per-split manifests and splice ground truth under ``out_dir``.

    Returns ``{split: manifest rows}``; rows hold paths relative to ``out_dir``.
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    manifests = {}
    truth = []
    for split in SPLITS:
        f0_ranges = split_f0_bins(split)
        rows = []

        def emit(uid, w, label, record=None):
            rel = f"wav/{uid}.wav"
            write_wav(out_dir / rel, w)
            row = {"id": uid, "path": rel, "label": label}
            if record is not None:
                row["splice"] = record.to_dict()
            rows.append(row)

        genuine = []
        for i in range(cfg.n_genuine):
            uid = f"{split}_gen_{i:04d}"
            w = synth_genuine(np.random.default_rng(derive_seed(cfg.seed, uid)), cfg, f0_ranges)
            genuine.append((uid, w))
            emit(uid, w, "genuine")
        spoofs = []
        for i in range(cfg.n_spoof):
            uid = f"{split}_spf_{i:04d}"
            w = synth_spoof(np.random.default_rng(derive_seed(cfg.seed, uid)), cfg, f0_ranges)
            spoofs.append((uid, w))
            emit(uid, w, "spoof")
        for i in range(cfg.n_partial):
            uid = f"{split}_prt_{i:04d}"
            rng = np.random.default_rng(derive_seed(cfg.seed, uid))
            host = synth_genuine(rng, cfg, f0_ranges)
            donor = synth_spoof(rng, cfg, f0_ranges)
            w, record = splice_partial_fake(host, donor, rng, host_id=uid, donor_id=f"{uid}_donor")
            emit(uid, w, "partial", record)
            truth.append({"id": uid, "split": split, **record.to_dict()})
        manifests[split] = rows
        write_manifest(out_dir / f"{split}.json", rows)
    (out_dir / "splices.json").write_text(json.dumps(truth, indent=1) + "\n")
    return manifests


def write_manifest(path, rows) -> None:
    Path(path).write_text(json.dumps(list(rows), indent=1) + "\n")


def load_manifest(path) -> list[dict]:
    """Read a manifest and resolve relative ``path``/``features`` against its directory."""
    path = Path(path)
    rows = json.loads(path.read_text())
    if not isinstance(rows, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    base = path.parent
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or "id" not in row or "label" not in row:
            raise ValueError(f"{path}: row {i} needs 'id' and 'label'")
        if row["label"] not in ("genuine", "spoof", "partial"):
            raise ValueError(f"{path}: row {i} has unknown label {row['label']!r}")
        row = dict(row)
        for key in ("path", "features"):
            if row.get(key):
                row[key] = str(base / row[key])
        out.append(row)
    return out
