"""Command-line entry point: ``spoofkit <subcommand> [options]``.

Exit status is 0 on success, 1 for invalid input (bad flags, config, files
that fail validation) and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from .audio_io import Waveform, write_wav
from .augment import derive_seed
from .classifier import init_params, load_checkpoint
from .config import RunConfig, from_dict, load_config
from .datagen import build_corpus, load_manifest, write_manifest
from .evaluation import (
    ScoreSet,
    det_points,
    eer_report,
    layer_weight_report,
    read_scores,
    score_dataset,
    write_scores,
)
from .optim import FeatureSource, save_training_outputs, train_loop
from .toyfeat import ToyExtractor, save_features

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("SPOOFKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"SPOOFKIT_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, cfg: RunConfig) -> None:
    (out / "config.json").write_text(cfg.dumps())


def _rel(path, start: Path) -> str:
    return os.path.relpath(path, start)


def cmd_datagen(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    manifests = build_corpus(cfg.data, out)
    _echo_config(out, cfg)
    counts = {split: len(rows) for split, rows in manifests.items()}
    print(json.dumps({"out": str(out), "rows": counts}))
    return EXIT_OK


def cmd_augment(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    rows = load_manifest(args.manifest)
    a = cfg.augment
    plan = aug.build_epoch_plan(
        rows,
        derive_seed(cfg.train.seed, "epoch", args.epoch),
        a.fir_prob if a.fir else 0.0,
        fir_band=a.fir_band,
        splice=a.partial,
        splice_fraction=a.partial_fraction,
        sample_rate=cfg.extractor.sample_rate,
    )
    src = FeatureSource(rows, ToyExtractor(cfg.extractor))
    (out / "wav").mkdir(exist_ok=True)
    new_rows = []
    for row in rows:
        uid = str(row["id"])
        decision = plan.decisions[uid]
        w, record = aug.apply_decision(uid, decision, src.waveform)
        path = out / "wav" / f"{uid}.wav"
        write_wav(path, Waveform(np.clip(w.samples, -1.0, 1.0), w.sample_rate_hz))
        new = {"id": uid, "path": _rel(path, out), "label": row["label"], "augment": decision.kind}
        if record is not None:
            new["label"] = a.partial_label
            new["splice"] = record.to_dict()
        if decision.fir is not None:
            new["fir"] = {
                "band": decision.fir.band_class,
                "cutoff_hz": decision.fir.cutoff_norm * cfg.extractor.sample_rate,
                "num_taps": decision.fir.num_taps,
            }
        new_rows.append(new)
    write_manifest(out / "manifest.json", new_rows)
    _echo_config(out, cfg)
    kinds = [r["augment"] for r in new_rows]
    print(json.dumps({k: kinds.count(k) for k in ("none", "fir", "splice", "fir+splice")}))
    return EXIT_OK


def cmd_extract(args, cfg: RunConfig) -> int:
    from concurrent.futures import ThreadPoolExecutor

    out = _out_dir(args)
    rows = load_manifest(args.manifest)
    extractor = ToyExtractor(cfg.extractor)
    src = FeatureSource(rows, extractor)
    (out / "features").mkdir(exist_ok=True)

    def one(row):
        uid = str(row["id"])
        path = out / "features" / f"{uid}.lft"
        save_features(path, extractor(src.waveform(uid)))
        new = dict(row)
        new["path"] = _rel(row["path"], out)
        new["features"] = _rel(path, out)
        return new

    with ThreadPoolExecutor(_threads(args)) as pool:
        new_rows = list(pool.map(one, rows))
    write_manifest(out / "manifest.json", new_rows)
    _echo_config(out, cfg)
    print(json.dumps({"features": len(new_rows), "checksum": extractor.checksum()}))
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    train_rows = load_manifest(args.train)
    dev_rows = load_manifest(args.dev)
    extractor = ToyExtractor(cfg.extractor)
    before = extractor.checksum()
    params = init_params(cfg.model_config(), np.random.default_rng(derive_seed(cfg.train.seed, "init")))
    result = train_loop(train_rows, dev_rows, params, extractor, cfg.augment, cfg.train, cfg.loss)
    if extractor.checksum() != before:
        raise RuntimeError("extractor parameters changed during training")
    ckpt = save_training_outputs(out, result, {"config": cfg.to_dict(), "extractor_checksum": before})
    _echo_config(out, cfg)
    print(
        json.dumps(
            {
                "checkpoint": str(ckpt),
                "best_epoch": result.best_epoch,
                "best_dev_loss": result.state.stopper.best,
                "epochs_run": result.epochs_run,
            }
        )
    )
    return EXIT_OK


def _checkpoint_config(path) -> tuple:
    params, meta = load_checkpoint(path)
    if "config" not in meta:
        raise ValueError(f"{path}: checkpoint carries no run config")
    return params, from_dict(meta["config"])


def cmd_score(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    params, ckpt_cfg = _checkpoint_config(args.checkpoint)
    rows = load_manifest(args.manifest)
    if not cfg.eval.use_features:
        rows = [{k: v for k, v in r.items() if k != "features"} for r in rows]
    extractor = ToyExtractor(ckpt_cfg.extractor)
    scored, score_set = score_dataset(params, rows, extractor, workers=_threads(args))
    write_scores(out / "scores.tsv", scored)
    _echo_config(out, cfg)
    summary = {
        "scores": str(out / "scores.tsv"),
        "n_genuine": len(score_set.genuine_scores),
        "n_spoof": len(score_set.spoof_scores),
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eer(args, cfg: RunConfig) -> int:
    scored = read_scores(args.scores)
    s = ScoreSet.from_labeled([x[1] for x in scored], [x[2] for x in scored])
    report = eer_report(s)
    text = json.dumps(report)
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "eer.json").write_text(text + "\n")
        with open(out / "det.csv", "w") as fh:
            fh.write("far,frr\n")
            for far, frr in det_points(s):
                fh.write(f"{far!r},{frr!r}\n")
        _echo_config(out, cfg)
    return EXIT_OK


def cmd_weights(args, cfg: RunConfig) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    text = layer_weight_report(params)
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args)
        (out / "weights.csv").write_text(text)
        _echo_config(out, cfg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="config override"
    )
    common.add_argument("--seed", type=int, help="sets data.seed and train.seed")
    common.add_argument("--threads", type=int, help="worker cap (default: $SPOOFKIT_THREADS or all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="spoofkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("datagen", parents=[common], help="synthesize a genuine/spoof/partial corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("augment", parents=[common], help="materialize one epoch of augmentation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epoch", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("extract", parents=[common], help="write LFT1 feature files for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train the classifier")
    p.add_argument("--train", required=True, help="training manifest")
    p.add_argument("--dev", required=True, help="dev manifest (early stopping)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="score a manifest with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eer", parents=[common], help="EER report from a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eer)

    p = sub.add_parser("weights", parents=[common], help="layer weights of a checkpoint as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, args.set, args.seed)
        _threads(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"spoofkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"spoofkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
