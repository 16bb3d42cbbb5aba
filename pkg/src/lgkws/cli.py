"""Command line entry point: dataset generation, training, evaluation, inference.

Exit codes: 0 on success, 2 for configuration/validation problems, 1 for
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfgmod
from .anchors import AnchorFormatError, fallback_anchors, load_anchor_file
from .data import (
    DatasetError,
    FeatureCache,
    materialize_synthetic,
    scan_dataset,
)
from .evaluate import EvalError, evaluate, export_embeddings
from .frontend import compute_mfcc, pad_or_crop, read_wav
from .model import MODEL_FACTORIES, LgNet, count_params, load_model, save_model
from .train import Trainer

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kws",
        description="Keyword spotting: train, evaluate, and run LG-Net models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset tree")
    p.add_argument("--classes", type=int, default=8, help="number of pseudo-words")
    p.add_argument("--per-class", type=int, default=40, help="samples per pseudo-word")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--duration-ms", type=int, default=1000, help="clip length in ms")
    p.add_argument("--dim", type=int, default=768, help="anchor dimension")

    p = sub.add_parser("train", help="run two-stage training from a config file")
    _common_config_flags(p)
    p.add_argument("--workers", type=int, default=1, help="feature precompute threads")
    p.add_argument("--deterministic", action="store_true",
                   help="force single-threaded feature extraction")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _common_config_flags(p)
    p.add_argument("--ckpt", default=None, help="model checkpoint (default: <out>/model.ckpt)")
    p.add_argument("--far", type=float, default=0.005, help="false-alarm budget")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])

    p = sub.add_parser("infer", help="score one WAV file")
    p.add_argument("wav", help="path to a 16 kHz mono PCM WAV")
    _common_config_flags(p)
    p.add_argument("--ckpt", default=None)

    p = sub.add_parser("export-embeddings", help="dump speech embeddings to CSV")
    _common_config_flags(p)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])

    p = sub.add_parser("anchors-validate", help="validate an anchor JSON file")
    p.add_argument("--anchors", required=True, help="anchor file path")
    p.add_argument("--words", default=None,
                   help="optional newline-separated word list to check coverage")

    p = sub.add_parser("count-params", help="print the trainable parameter count")
    p.add_argument("--model", default="lgnet6", choices=sorted(MODEL_FACTORIES) + ["custom"])
    p.add_argument("--classes", type=int, default=12)
    p.add_argument("--config", default=None, help="config file (required for custom)")

    return parser


def _common_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override training.seed")
    p.add_argument("--loss", default=None, choices=["ce", "ce_st", "ce_tt"],
                   help="override training.loss_mode")
    p.add_argument("--model", default=None, choices=sorted(MODEL_FACTORIES) + ["custom"],
                   help="override model.name")
    p.add_argument("--out", default=None, help="override output_dir")


def _resolve(args, out_is_dir: bool = True) -> dict:
    doc = cfgmod.load_config_file(args.config)
    resolved = cfgmod.resolve_config(doc)
    if getattr(args, "seed", None) is not None:
        resolved["training"]["seed"] = args.seed
    if getattr(args, "loss", None) is not None:
        resolved["training"]["loss_mode"] = args.loss
    if getattr(args, "model", None) is not None:
        resolved["model"]["name"] = args.model
    if out_is_dir and getattr(args, "out", None) is not None:
        resolved["output_dir"] = args.out
    # overrides can invalidate a previously valid document
    return cfgmod.resolve_config(resolved)


def _load_dataset(resolved: dict):
    d = resolved["data"]
    return scan_dataset(
        d["root"],
        d["version"],
        seed=resolved["training"]["seed"],
        duration=d["duration"],
        silence_per_split=d["silence_per_split"],
        include_silence=d["include_silence"],
    )


def _load_anchors(resolved: dict, split):
    a = resolved["anchors"]
    if a["path"] is not None:
        return load_anchor_file(a["path"])
    if a["fallback_seed"] is not None:
        words = {u.word for u in split.train + split.valid + split.test}
        if resolved["anchors"]["granularity"] == "class":
            words |= set(split.label_map)
        return fallback_anchors(sorted(w for w in words if w != "silence"),
                                dim=a["dim"], seed=a["fallback_seed"])
    return None


def _build_model(resolved: dict, split, anchors) -> LgNet:
    needs_anchor = resolved["training"]["loss_mode"] == "ce_tt"
    anchor_dim = anchors.dim if (needs_anchor and anchors is not None) else None
    model_cfg = cfgmod.model_config(resolved, split.num_classes, anchor_dim)
    return LgNet(model_cfg, seed=resolved["training"]["seed"])


def _precompute_features(cache: FeatureCache, utts, workers: int) -> None:
    if workers <= 1:
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(cache.get, utts))


def cmd_gen_synthetic(args) -> int:
    duration = int(args.duration_ms * 16)
    materialize_synthetic(
        args.out, args.classes, args.per_class, args.seed,
        duration=duration, anchor_dim=args.dim,
    )
    print(f"wrote synthetic dataset: {args.classes} classes x {args.per_class} samples "
          f"-> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    resolved = _resolve(args)
    out_dir = resolved["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config_resolved.json"), "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")

    split = _load_dataset(resolved)
    anchors = _load_anchors(resolved, split)
    model = _build_model(resolved, split, anchors)
    cache = FeatureCache(cfgmod.mfcc_config(resolved), resolved["data"]["cache_dir"])

    workers = 1 if args.deterministic else max(1, args.workers)
    _precompute_features(cache, split.train + split.valid, workers)

    trainer = Trainer(
        model, split, cfgmod.training_config(resolved),
        anchors=anchors, cache=cache, out_dir=out_dir,
    )
    trainer.run()
    trainer.save(os.path.join(out_dir, "trainer.ckpt"))
    save_model(os.path.join(out_dir, "model.ckpt"), model)

    last = trainer.log[-1] if trainer.log else {}
    print(f"training done: {len(trainer.log)} epochs logged, "
          f"final valid acc {last.get('valid_acc', float('nan')):.4f}")
    print(f"checkpoints under {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    resolved = _resolve(args)
    ckpt_path = args.ckpt or os.path.join(resolved["output_dir"], "model.ckpt")
    model = load_model(ckpt_path)
    split = _load_dataset(resolved)
    cache = FeatureCache(cfgmod.mfcc_config(resolved), resolved["data"]["cache_dir"])
    report = evaluate(model, split, cache, split_name=args.split, far_target=args.far)
    print(report.summary())
    report_path = os.path.join(resolved["output_dir"], f"eval_{args.split}.json")
    os.makedirs(resolved["output_dir"], exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_infer(args) -> int:
    resolved = _resolve(args)
    ckpt_path = args.ckpt or os.path.join(resolved["output_dir"], "model.ckpt")
    model = load_model(ckpt_path)

    wav, _sr = read_wav(args.wav)
    feats = compute_mfcc(
        pad_or_crop(wav, resolved["data"]["duration"]), cfgmod.mfcc_config(resolved)
    )
    scores = model.scores(feats[None, :, :].astype(np.float32))[0]

    split_labels = _label_names(resolved, model.config.num_classes)
    best = int(np.argmax(scores))
    for i, s in enumerate(scores):
        name = split_labels[i] if split_labels else f"class{i}"
        print(f"{name}: {s:.6f}")
    name = split_labels[best] if split_labels else f"class{best}"
    print(f"-> {name}")
    return EXIT_OK


def _label_names(resolved: dict, num_classes: int) -> list[str] | None:
    try:
        split = _load_dataset(resolved)
    except (DatasetError, OSError):
        return None
    if split.num_classes != num_classes:
        return None
    inv = {i: lbl for lbl, i in split.label_map.items()}
    return [inv[i] for i in range(num_classes)]


def cmd_export_embeddings(args) -> int:
    # here --out names the CSV file rather than the run directory
    resolved = _resolve(args, out_is_dir=False)
    ckpt_path = args.ckpt or os.path.join(resolved["output_dir"], "model.ckpt")
    model = load_model(ckpt_path)
    split = _load_dataset(resolved)
    cache = FeatureCache(cfgmod.mfcc_config(resolved), resolved["data"]["cache_dir"])
    out_path = args.out or os.path.join(resolved["output_dir"], f"embeddings_{args.split}.csv")
    n = export_embeddings(model, split, cache, out_path, split_name=args.split)
    print(f"wrote {n} embeddings to {out_path}")
    return EXIT_OK


def cmd_anchors_validate(args) -> int:
    store = load_anchor_file(args.anchors)
    print(f"ok: {len(store)} anchors, dim={store.dim}, source='{store.source}'")
    if args.words:
        with open(args.words, "r", encoding="utf-8") as fh:
            words = [w.strip() for w in fh if w.strip()]
        store.require_words(words)
        print(f"coverage ok: all {len(words)} words present")
    return EXIT_OK


def cmd_count_params(args) -> int:
    if args.model == "custom":
        if not args.config:
            print("error: --config is required for --model custom", file=sys.stderr)
            return EXIT_CONFIG
        resolved = cfgmod.resolve_config(cfgmod.load_config_file(args.config))
        model_cfg = cfgmod.model_config(resolved, args.classes, None)
    else:
        model_cfg = MODEL_FACTORIES[args.model](num_classes=args.classes)
    print(count_params(model_cfg))
    return EXIT_OK


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "export-embeddings": cmd_export_embeddings,
    "anchors-validate": cmd_anchors_validate,
    "count-params": cmd_count_params,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnchorFormatError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvalError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
