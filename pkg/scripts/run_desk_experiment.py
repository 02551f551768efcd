#!/usr/bin/env python3
"""Desk-scale experiment: synthesize a corpus, train, score the eval split, report EER.

Runs the same CLI subcommands a user would, once per seed, with and without
augmentation, and writes a summary JSON next to the per-run directories.

    python scripts/run_desk_experiment.py --out runs/desk --seeds 7 8
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from spoofkit.cli import main as cli


def step(*argv) -> None:
    code = cli([str(a) for a in argv])
    if code != 0:
        raise SystemExit(f"spoofkit {argv[0]} failed with exit code {code}")


def run_one(out: Path, seed: int, augment: bool, extra: list[str]) -> dict:
    data = out / f"data_s{seed}"
    if not (data / "eval.json").exists():
        step("datagen", "--out", data, "--seed", seed, *extra)
    tag = f"s{seed}_{'aug' if augment else 'noaug'}"
    run = out / tag
    flags = ["--seed", seed, *extra] + ([] if augment else ["--set", "augment.enabled=false"])
    t0 = time.perf_counter()
    step("train", "--train", data / "train.json", "--dev", data / "dev.json", "--out", run, *flags)
    train_s = time.perf_counter() - t0
    step("score", "--checkpoint", run / "checkpoint.spk", "--manifest", data / "eval.json", "--out", run / "eval", *flags)
    step("eer", "--scores", run / "eval" / "scores.tsv", "--out", run / "eval", *flags)
    step("weights", "--checkpoint", run / "checkpoint.spk", "--out", run, *flags)
    report = json.loads((run / "eval" / "eer.json").read_text())
    return {"run": tag, "seed": seed, "augment": augment, "eer": report["eer"], "train_seconds": round(train_s, 2)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[7])
    ap.add_argument("--no-ablation", action="store_true", help="skip the augmentation-off runs")
    ap.add_argument("--set", action="append", default=[], help="extra config override, passed through")
    args = ap.parse_args()
    extra = [x for kv in args.set for x in ("--set", kv)] + ["--threads", "1"]

    results = []
    for seed in args.seeds:
        for augment in (True,) if args.no_ablation else (True, False):
            res = run_one(args.out, seed, augment, extra)
            print(json.dumps(res))
            results.append(res)
    (args.out / "summary.json").write_text(json.dumps(results, indent=2) + "\n")


if __name__ == "__main__":
    main()
