"""Full-data experiment driver for a Google Speech Commands directory tree.

Scans the dataset (v1: 10 keywords + unknown + silence, v2: 14 keywords),
trains one model with the requested architecture and loss mode, and reports
test accuracy and FRR at the false-alarm budget. With text anchors
(--loss ce_tt) pass --anchors, or rely on the deterministic fallback vectors.
Expect hours on one CPU core for a full run; --limit-train exists for quick
pipeline checks.

Usage:
    python scripts/run_speech_commands.py --root ~/speech_commands_v0.01
    python scripts/run_speech_commands.py --root data/v2 --version v2 \\
        --arch lgnet6 --loss ce_tt --anchors anchors.json --out runs/v2_tt
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from lgkws.anchors import fallback_anchors, load_anchor_file
from lgkws.data import SILENCE, FeatureCache, scan_dataset
from lgkws.evaluate import evaluate
from lgkws.frontend import MfccConfig
from lgkws.model import LgNet, lgnet3_config, lgnet6_config
from lgkws.train import Trainer, TrainingConfig

FACTORIES = {"lgnet3": lgnet3_config, "lgnet6": lgnet6_config}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", required=True, help="dataset root directory")
    ap.add_argument("--version", default="v1", choices=["v1", "v2"])
    ap.add_argument("--arch", default="lgnet6", choices=sorted(FACTORIES))
    ap.add_argument("--loss", default="ce_tt", choices=["ce", "ce_st", "ce_tt"])
    ap.add_argument("--anchors", default=None, help="anchor JSON for ce_tt")
    ap.add_argument("--fallback-seed", type=int, default=0,
                    help="seed for generated anchors when --anchors is absent")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--batch-size", type=int, default=256)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--stage2-epochs", type=int, default=None,
                    help="cap stage 2 (default: run to early stop)")
    ap.add_argument("--far", type=float, default=0.005)
    ap.add_argument("--cache-dir", default=None,
                    help="on-disk feature cache (recommended for repeat runs)")
    ap.add_argument("--limit-train", type=int, default=None,
                    help="truncate the train list for pipeline smoke checks")
    ap.add_argument("--out", default="runs/speech_commands")
    args = ap.parse_args()

    split = scan_dataset(args.root, args.version, seed=args.seed)
    if args.limit_train:
        split.train = split.train[: args.limit_train]
    print(f"{args.version}: {len(split.train)}/{len(split.valid)}/{len(split.test)} "
          f"train/valid/test, {split.num_classes} classes")

    anchors = None
    if args.loss == "ce_tt":
        if args.anchors:
            anchors = load_anchor_file(args.anchors)
            print(f"anchors: {len(anchors)} words, dim {anchors.dim} from {args.anchors}")
        else:
            words = sorted(w for w in split.label_map if w != SILENCE)
            anchors = fallback_anchors(words, seed=args.fallback_seed)
            print(f"anchors: deterministic fallback vectors for {len(anchors)} words")

    cache = FeatureCache(MfccConfig(), cache_dir=args.cache_dir)
    anchor_dim = anchors.dim if anchors is not None else None
    model = LgNet(FACTORIES[args.arch](split.num_classes, anchor_dim), seed=args.seed)
    cfg = TrainingConfig(
        loss_mode=args.loss,
        batch_size=args.batch_size,
        lr_init=args.lr,
        beta=args.beta,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    trainer = Trainer(model, split, cfg, anchors=anchors, cache=cache, out_dir=args.out)

    t0 = time.monotonic()
    trainer.run_stage1()
    print(f"stage 1 done: {trainer.epoch} epochs, {time.monotonic() - t0:.0f}s")
    trainer.run_stage2(max_epochs=args.stage2_epochs)
    trainer.finalize()
    print(f"stage 2 done: {trainer.epoch} epochs, {time.monotonic() - t0:.0f}s total")

    ckpt_path = os.path.join(args.out, "trainer.ckpt")
    trainer.save(ckpt_path)

    report = evaluate(model, split, cache, "test", far_target=args.far,
                      batch_size=args.batch_size)
    print(report.summary())
    out_json = os.path.join(args.out, "eval_test.json")
    with open(out_json, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    print(f"checkpoint: {ckpt_path}\nreport: {out_json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
