"""Scoring, equal error rate, DET operating points and layer-weight export."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .classifier import ModelParams, forward, is_genuine, softmax
from .optim import FeatureSource
from .toyfeat import ToyExtractor


@dataclass(frozen=True)
class ScoreSet:
    genuine_scores: np.ndarray
    spoof_scores: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.genuine_scores, dtype=np.float64).ravel()
        s = np.asarray(self.spoof_scores, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(s))):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "genuine_scores", g)
        object.__setattr__(self, "spoof_scores", s)

    @classmethod
    def from_labeled(cls, scores: Sequence[float], labels: Sequence[str]) -> "ScoreSet":
        scores = np.asarray(scores, dtype=np.float64)
        mask = np.array([is_genuine(lab) for lab in labels], dtype=bool)
        return cls(scores[mask], scores[~mask])

    def check(self) -> None:
        if self.genuine_scores.size == 0 or self.spoof_scores.size == 0:
            raise ValueError("both genuine and spoof scores are required")


def _operating_counts(s: ScoreSet):
    """Thresholds (distinct scores then +inf) with integer spoof-accept / genuine-reject counts.

    At threshold t a spoof is accepted when score >= t and a genuine trial is
    rejected when score < t.
    """
    s.check()
    g = np.sort(s.genuine_scores)
    sp = np.sort(s.spoof_scores)
    thr = np.append(np.unique(np.concatenate([g, sp])), np.inf)
    fa = sp.size - np.searchsorted(sp, thr, side="left")
    fr = np.searchsorted(g, thr, side="left")
    return thr, fa, fr


def compute_eer(s: ScoreSet) -> tuple[float, float]:
    """EER and its threshold.

    FAR - FRR is non-increasing in the threshold; the EER is read at the first
    threshold where it reaches zero, or linearly interpolated between the two
    operating points that bracket the sign change.
    """
    thr, fa, fr = _operating_counts(s)
    n_s, n_g = s.spoof_scores.size, s.genuine_scores.size
    # sign of FAR - FRR in exact integer arithmetic
    diff = fa * n_g - fr * n_s
    i = int(np.argmax(diff <= 0))
    far_i, frr_i = fa[i] / n_s, fr[i] / n_g
    if diff[i] == 0 or i == 0:
        return float(far_i), float(thr[i])
    far_p, frr_p = fa[i - 1] / n_s, fr[i - 1] / n_g
    d_p, d_i = far_p - frr_p, far_i - frr_i
    lam = d_p / (d_p - d_i)
    eer = far_p + lam * (far_i - far_p)
    if np.isinf(thr[i]):
        return float(eer), float(thr[i - 1])
    return float(eer), float(thr[i - 1] + lam * (thr[i] - thr[i - 1]))


def det_points(s: ScoreSet) -> list[tuple[float, float]]:
    """(FAR, FRR) at every distinct operating point, from threshold -inf to +inf."""
    thr, fa, fr = _operating_counts(s)
    n_s, n_g = s.spoof_scores.size, s.genuine_scores.size
    points = [(1.0, 0.0)]
    for a, r in zip(fa, fr):
        pt = (float(a) / n_s, float(r) / n_g)
        if pt != points[-1]:
            points.append(pt)
    return points


def eer_report(s: ScoreSet) -> dict:
    eer, threshold = compute_eer(s)
    return {
        "eer": eer,
        "threshold": threshold,
        "n_genuine": int(s.genuine_scores.size),
        "n_spoof": int(s.spoof_scores.size),
    }


def score_dataset(
    params: ModelParams,
    rows: Sequence[dict],
    extractor: ToyExtractor,
    workers: int = 1,
) -> tuple[list[tuple[str, float, str]], ScoreSet]:
    """Eval-mode scores in manifest order, plus the resulting ScoreSet."""
    cfg = params.config()
    if cfg.feature_dim != extractor.cfg.feature_dim:
        raise ValueError(
            f"checkpoint expects {cfg.feature_dim}-dim features, extractor gives {extractor.cfg.feature_dim}"
        )
    if cfg.num_layers_plus_one != extractor.cfg.num_layers + 1:
        raise ValueError(
            f"checkpoint expects {cfg.num_layers_plus_one} layers, extractor gives {extractor.cfg.num_layers + 1}"
        )
    src = FeatureSource(rows, extractor)
    ids = [str(r["id"]) for r in rows]

    def one(uid):
        return forward(src.features(uid), params, "eval")[0]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            scores = list(pool.map(one, ids))
    else:
        scores = [one(uid) for uid in ids]
    labels = [str(r["label"]) for r in rows]
    return list(zip(ids, scores, labels)), ScoreSet.from_labeled(scores, labels)


def write_scores(path, scored: Sequence[tuple[str, float, str]]) -> None:
    with open(path, "w") as fh:
        for uid, score, label in scored:
            fh.write(f"{uid}\t{score!r}\t{label}\n")


def read_scores(path) -> list[tuple[str, float, str]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected '<id>\\t<score>\\t<label>'")
            out.append((parts[0], float(parts[1]), parts[2]))
    return out


def layer_weights(params: ModelParams) -> np.ndarray:
    return softmax(params.layer_logits)


def layer_weight_report(params: ModelParams) -> str:
    """CSV text with one (layer_index, alpha) row per hidden layer."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["layer_index", "alpha"])
    for i, a in enumerate(layer_weights(params)):
        writer.writerow([i, repr(float(a))])
    return buf.getvalue()
