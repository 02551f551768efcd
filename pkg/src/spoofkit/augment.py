"""On-the-fly waveform augmentation: random low-pass FIR channels and partial-fake splicing."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .audio_io import Waveform

BandClass = Literal["NB", "WB"]

# cutoff ranges in Hz for the two channel families
BAND_CUTOFF_HZ = {"NB": (3000.0, 4000.0), "WB": (6000.0, 7800.0)}
MIN_TAPS, MAX_TAPS = 51, 151
SPLICE_FRACTION = 0.20
SEGMENT_BOUNDS = (0.1, 0.9)
CROSSFADE_S = 0.010


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    cutoff_norm: float
    band_class: BandClass | None = None

    @property
    def num_taps(self) -> int:
        return self.taps.shape[0]


@dataclass(frozen=True)
class SpliceRecord:
    host_id: str
    donor_id: str
    start_sample: int
    length_samples: int
    donor_offset: int

    def validate(self, host_length: int) -> None:
        if self.length_samples <= 0:
            raise ValueError("splice length must be positive")
        if self.length_samples >= host_length:
            raise ValueError("splice must be strictly shorter than the host")
        if self.start_sample < 0 or self.start_sample + self.length_samples > host_length:
            raise ValueError("splice segment exceeds host bounds")
        if self.donor_offset < 0:
            raise ValueError("negative donor offset")

    def to_dict(self) -> dict:
        return {
            "host_id": self.host_id,
            "donor_id": self.donor_id,
            "start_sample": self.start_sample,
            "length_samples": self.length_samples,
            "donor_offset": self.donor_offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpliceRecord":
        return cls(
            str(d["host_id"]),
            str(d["donor_id"]),
            int(d["start_sample"]),
            int(d["length_samples"]),
            int(d["donor_offset"]),
        )


def design_lowpass_fir(cutoff_norm: float, num_taps: int) -> FirFilter:
    """Hamming-windowed sinc low-pass, normalized to unit DC gain.

    ``cutoff_norm`` is the cutoff as a fraction of the sample rate (0.5 = Nyquist).
    """
    if num_taps < 1 or num_taps % 2 == 0:
        raise ValueError(f"num_taps must be a positive odd integer, got {num_taps}")
    if not 0.0 < cutoff_norm <= 0.5:
        raise ValueError(f"cutoff_norm must lie in (0, 0.5], got {cutoff_norm}")
    half = (num_taps - 1) // 2
    k = np.arange(-half, half + 1, dtype=np.float64)
    if num_taps == 1:
        window = np.ones(1)
    else:
        window = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(num_taps) / (num_taps - 1))
    h = window * np.sinc(2.0 * cutoff_norm * k)
    h = 0.5 * (h + h[::-1])
    h /= h.sum()
    return FirFilter(h, float(cutoff_norm))


def sample_fir_config(
    band: BandClass, rng: np.random.Generator, sample_rate: int = 16000
) -> tuple[float, int]:
    lo, hi = BAND_CUTOFF_HZ[band]
    cutoff_hz = rng.uniform(lo, hi)
    num_taps = 2 * int(rng.integers(MIN_TAPS // 2, MAX_TAPS // 2 + 1)) + 1
    return cutoff_hz / sample_rate, num_taps


def random_fir(band: BandClass, rng: np.random.Generator, sample_rate: int = 16000) -> FirFilter:
    cutoff_norm, num_taps = sample_fir_config(band, rng, sample_rate)
    f = design_lowpass_fir(cutoff_norm, num_taps)
    return FirFilter(f.taps, f.cutoff_norm, band)


def apply_fir(w: Waveform, f: FirFilter) -> Waveform:
    """Zero-padded 'same'-length convolution; the filter is centered on each sample."""
    if f.num_taps > len(w):
        raise ValueError(f"filter ({f.num_taps} taps) longer than signal ({len(w)} samples)")
    y = np.convolve(w.samples, f.taps, mode="same")
    return Waveform(y, w.sample_rate_hz)


def splice_partial_fake(
    host: Waveform,
    donor: Waveform,
    rng: np.random.Generator,
    *,
    host_id: str = "host",
    donor_id: str = "donor",
    length: int | None = None,
    start: int | None = None,
    donor_offset: int | None = None,
) -> tuple[Waveform, SpliceRecord]:
    """Replace a random segment of ``host`` with an equally long piece of ``donor``.

    Segment length is drawn from [10%, 90%] of the host (capped by the donor
    length); ``length``/``start``/``donor_offset`` force individual draws.
    Both segment boundaries are blended with a linear crossfade of up to 10 ms.
    """
    n = len(host)
    if n < 2:
        raise ValueError("host must have at least 2 samples")
    if len(donor) == 0:
        raise ValueError("donor is empty")
    if host.sample_rate_hz != donor.sample_rate_hz:
        raise ValueError("host and donor sample rates differ")

    lo = max(1, math.ceil(SEGMENT_BOUNDS[0] * n))
    hi = min(n - 1, math.floor(SEGMENT_BOUNDS[1] * n))
    hi = max(hi, lo)
    if length is None:
        if len(donor) < lo:
            raise ValueError(
                f"donor ({len(donor)} samples) shorter than minimum segment ({lo} samples)"
            )
        length = int(rng.integers(lo, min(hi, len(donor)) + 1))
    if length <= 0:
        raise ValueError("segment length must be positive")
    if length >= n:
        raise ValueError("segment must be strictly shorter than the host")
    if length > len(donor):
        raise ValueError("segment longer than donor")
    if donor_offset is None:
        donor_offset = int(rng.integers(0, len(donor) - length + 1))
    if start is None:
        start = int(rng.integers(0, n - length + 1))

    record = SpliceRecord(host_id, donor_id, start, length, donor_offset)
    record.validate(n)
    if donor_offset + length > len(donor):
        raise ValueError("donor segment exceeds donor bounds")

    out = host.samples.copy()
    seg = donor.samples[donor_offset : donor_offset + length]
    fade = crossfade_samples(length, host.sample_rate_hz)
    mix = np.ones(length)
    if fade > 0:
        ramp = np.arange(1, fade + 1, dtype=np.float64) / (fade + 1)
        mix[:fade] = ramp
        mix[length - fade :] = ramp[::-1]
    out[start : start + length] = (1.0 - mix) * out[start : start + length] + mix * seg
    return Waveform(out, host.sample_rate_hz), record


def crossfade_samples(length: int, sample_rate: int) -> int:
    return min(int(round(CROSSFADE_S * sample_rate)), length // 2)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from ints and strings (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass(frozen=True)
class SpliceDecision:
    donor_id: str
    seed: int


@dataclass(frozen=True)
class UtteranceDecision:
    fir: FirFilter | None = None
    splice: SpliceDecision | None = None

    @property
    def kind(self) -> str:
        if self.fir is not None and self.splice is not None:
            return "fir+splice"
        if self.fir is not None:
            return "fir"
        if self.splice is not None:
            return "splice"
        return "none"


@dataclass(frozen=True)
class EpochAugmentPlan:
    epoch_seed: int
    decisions: dict[str, UtteranceDecision] = field(default_factory=dict)

    def splice_hosts(self) -> list[str]:
        return [k for k, d in self.decisions.items() if d.splice is not None]

    def fir_ids(self) -> list[str]:
        return [k for k, d in self.decisions.items() if d.fir is not None]


def build_epoch_plan(
    manifest: Sequence[dict],
    epoch_seed: int,
    fir_prob: float = 0.5,
    *,
    fir_band: str = "NB",
    splice: bool = True,
    splice_fraction: float = SPLICE_FRACTION,
    sample_rate: int = 16000,
) -> EpochAugmentPlan:
    """Per-utterance augmentation decisions for one epoch.

    Exactly floor(splice_fraction * #genuine) genuine utterances get a splice
    with a donor drawn from the rest of the manifest; every utterance
    independently gets a random low-pass filter with probability ``fir_prob``.
    ``fir_band`` is "NB", "WB" or "both" (band drawn per utterance).
    """
    if not manifest:
        raise ValueError("empty manifest")
    if not 0.0 <= fir_prob <= 1.0:
        raise ValueError("fir_prob must lie in [0, 1]")
    if fir_band not in ("NB", "WB", "both"):
        raise ValueError(f"unknown fir band {fir_band!r}")
    ids = [str(row["id"]) for row in manifest]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate utterance ids in manifest")
    rng = np.random.default_rng(derive_seed("plan", epoch_seed))

    genuine = [i for i, row in zip(ids, manifest) if row["label"] == "genuine"]
    n_splice = math.floor(splice_fraction * len(genuine) + 1e-9) if splice else 0
    splice_for: dict[str, SpliceDecision] = {}
    if n_splice and len(ids) > 1:
        hosts = rng.choice(len(genuine), size=n_splice, replace=False)
        for h in sorted(hosts):
            host = genuine[h]
            j = int(rng.integers(0, len(ids) - 1))
            donor = ids[j] if ids[j] != host else ids[-1]
            splice_for[host] = SpliceDecision(donor, derive_seed("splice", epoch_seed, host))

    fir_draws = rng.random(len(ids))
    decisions = {}
    for uid, u in zip(ids, fir_draws):
        fir = None
        if u < fir_prob:
            frng = np.random.default_rng(derive_seed("fir", epoch_seed, uid))
            band = fir_band if fir_band != "both" else ("NB" if frng.random() < 0.5 else "WB")
            fir = random_fir(band, frng, sample_rate)
        decisions[uid] = UtteranceDecision(fir, splice_for.get(uid))
    return EpochAugmentPlan(int(epoch_seed), decisions)


def apply_decision(
    uid: str,
    decision: UtteranceDecision,
    load,
) -> tuple[Waveform, SpliceRecord | None]:
    """Materialize one utterance's augmented waveform.

    ``load`` maps an utterance id to its clean Waveform. Splicing happens
    before filtering so the channel covers the whole spliced utterance.
    """
    w = load(uid)
    record = None
    if decision.splice is not None:
        donor = load(decision.splice.donor_id)
        rng = np.random.default_rng(decision.splice.seed)
        w, record = splice_partial_fake(
            w, donor, rng, host_id=uid, donor_id=decision.splice.donor_id
        )
    # very short utterances keep their clean channel
    if decision.fir is not None and decision.fir.num_taps <= len(w):
        w = apply_fir(w, decision.fir)
    return w, record
