"""Two-stage training: metric+CE on keywords, then CE-only head finetuning.

Stage 1 trains the extractor and both FC heads on silence-free batches with
the blended loss beta * triplet + (1 - beta) * CE. Stage 2 freezes the
extractor bit-exactly (affine BN parameters and running statistics included),
reloads the best stage-1 state, and finetunes only the embedding FC and
classifier FC with CE on the full dataset, silence included.

Every random draw comes from a stream derived from (seed, purpose, stage,
epoch), so interrupting a run and resuming from a checkpoint replays the
exact batch order and triplet choices of an uninterrupted run.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import checkpoint as ckpt
from .anchors import AnchorStore
from .autograd import Tensor, backward, no_grad, take_rows, linear, mean_pool_time
from .data import (
    SILENCE,
    Batch,
    DatasetSplit,
    FeatureCache,
    batch_iterator,
)
from .evaluate import accuracy_from_scores, collect_scores
from .losses import (
    TripletSamplingError,
    combined_loss,
    cross_entropy,
    sample_triplets,
    triplet_loss,
)
from .model import LgNet, LgNetConfig
from .rng import derive_rng

LOSS_MODES = ("ce", "ce_st", "ce_tt")


@dataclass
class TrainingConfig:
    loss_mode: str = "ce"
    batch_size: int = 256
    lr_init: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.001
    beta: float = 0.5
    margin: float = 1.0
    distance_p: float = 2.0
    lr_decay_factor: float = 3.0
    plateau_patience: int = 3
    early_stop_patience: int = 10
    max_epochs: int = 10000
    seed: int = 0
    anchor_granularity: str = "word"  # "word" | "class"
    target_train_acc: float | None = None  # optional stop for overfit smoke runs

    def validate(self) -> list[str]:
        errors = []
        if self.loss_mode not in LOSS_MODES:
            errors.append(f"training.loss_mode must be one of {LOSS_MODES}, got '{self.loss_mode}'")
        if not 0.0 <= self.beta <= 1.0:
            errors.append(f"training.beta out of [0, 1]: {self.beta}")
        if self.batch_size < 1:
            errors.append(f"training.batch_size must be positive, got {self.batch_size}")
        if self.lr_init <= 0:
            errors.append(f"training.lr_init must be positive, got {self.lr_init}")
        if self.lr_decay_factor <= 1:
            errors.append(f"training.lr_decay_factor must exceed 1, got {self.lr_decay_factor}")
        if self.plateau_patience < 1:
            errors.append(f"training.plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.early_stop_patience < 1:
            errors.append(f"training.early_stop_patience must be >= 1, got {self.early_stop_patience}")
        if self.max_epochs < 0:
            errors.append(f"training.max_epochs must be >= 0, got {self.max_epochs}")
        if self.anchor_granularity not in ("word", "class"):
            errors.append(f"training.anchor_granularity must be 'word' or 'class', got '{self.anchor_granularity}'")
        if not 0.0 <= self.momentum < 1.0:
            errors.append(f"training.momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            errors.append(f"training.weight_decay must be >= 0, got {self.weight_decay}")
        return errors


@dataclass
class ScheduleState:
    """Plateau schedule: lr = lr_init / factor^k, decay and stop counters.

    Only a strict improvement of the tracked metric resets the counters; ties
    count as stagnation. The decay counter clears after each decay, the stop
    counter only on improvement.
    """

    lr_init: float
    factor: float
    plateau_patience: int
    stop_patience: int
    decay_count: int = 0
    best: float = -math.inf
    since_improve_decay: int = 0
    since_improve_stop: int = 0
    stopped: bool = False

    @property
    def lr(self) -> float:
        return self.lr_init / self.factor ** self.decay_count

    def update(self, metric: float) -> bool:
        """Absorb one epoch's metric; returns True on strict improvement."""
        if metric > self.best:
            self.best = metric
            self.since_improve_decay = 0
            self.since_improve_stop = 0
            return True
        self.since_improve_decay += 1
        self.since_improve_stop += 1
        if self.since_improve_stop >= self.stop_patience:
            self.stopped = True
        if self.since_improve_decay >= self.plateau_patience:
            self.decay_count += 1
            self.since_improve_decay = 0
        return False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["best"] = None if self.best == -math.inf else self.best
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleState":
        d = dict(d)
        if d.get("best") is None:
            d["best"] = -math.inf
        return cls(**d)


def sgd_step(
    params: dict[str, Tensor],
    velocities: dict[str, np.ndarray],
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    """g <- grad + wd * param; v <- momentum * v + g; param <- param - lr * v.

    Parameters without a gradient this step are left untouched, velocity
    included.
    """
    for name in sorted(params):
        p = params[name]
        if p.grad is None:
            continue
        g = p.grad + weight_decay * p.data
        v = momentum * velocities[name] + g
        velocities[name] = v
        p.data = p.data - lr * v


class Trainer:
    """Drives both stages over one model/dataset/anchor-store triple."""

    def __init__(
        self,
        model: LgNet,
        split: DatasetSplit,
        cfg: TrainingConfig,
        anchors: AnchorStore | None = None,
        cache: FeatureCache | None = None,
        out_dir: str | None = None,
    ):
        errors = cfg.validate()
        if errors:
            raise ValueError("; ".join(errors))
        if cfg.loss_mode == "ce_tt":
            if anchors is None:
                raise ValueError("loss mode ce_tt needs an anchor store")
            if model.config.anchor_dim != anchors.dim:
                raise ValueError(
                    f"model anchor_dim={model.config.anchor_dim} does not match "
                    f"anchor store dim={anchors.dim}"
                )
        self.model = model
        self.split = split
        self.cfg = cfg
        self.anchors = anchors
        self.cache = cache or FeatureCache()
        self.out_dir = out_dir

        self.stage = 1
        self.epoch = 0  # completed epochs in the current stage
        self.schedule = self._fresh_schedule()
        self.velocities = self._fresh_velocities()
        self.log: list[dict] = []
        self.best_acc: float | None = None
        self.best_state: dict[str, np.ndarray] | None = None
        self.best_bn_counts: dict[str, int] | None = None

        self._word_label = {
            u.word: u.label for u in split.train + split.valid + split.test
        }
        self._word_pools: dict[str, list[int]] = {}
        for i, u in enumerate(split.train):
            if u.label != SILENCE:
                self._word_pools.setdefault(u.word, []).append(i)

        if cfg.loss_mode == "ce_tt":
            self.anchors.require_words(self._anchor_token(w) for w in self._word_pools)

        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    # ---- helpers ----

    def _fresh_schedule(self) -> ScheduleState:
        return ScheduleState(
            lr_init=self.cfg.lr_init,
            factor=self.cfg.lr_decay_factor,
            plateau_patience=self.cfg.plateau_patience,
            stop_patience=self.cfg.early_stop_patience,
        )

    def _trainable(self) -> dict[str, Tensor]:
        if self.stage == 1:
            params = dict(self.model.theta_s())
            params.update(self.model.theta_fc())
            if self.cfg.loss_mode == "ce_tt":
                params.update(self.model.theta_t())
            return params
        return self.model.theta_fc()

    def _fresh_velocities(self) -> dict[str, np.ndarray]:
        return {n: np.zeros_like(p.data) for n, p in self._trainable().items()}

    def _anchor_token(self, word: str) -> str:
        if self.cfg.anchor_granularity == "class":
            return self._word_label.get(word, word)
        return word

    def _snapshot_best(self, acc: float) -> None:
        self.best_acc = acc
        self.best_state = {n: a.copy() for n, a in self.model.state_tensors().items()}
        self.best_bn_counts = self.model.bn_counts()

    def _restore_best(self) -> None:
        if self.best_state is not None:
            self.model.load_state(self.best_state, self.best_bn_counts)

    def _validation_accuracy(self) -> float:
        utts = self.split.valid
        if self.stage == 1:
            utts = [u for u in utts if u.label != SILENCE]
        if not utts:
            raise ValueError("validation split is empty")
        scores, labels, _ = collect_scores(
            self.model, utts, self.split.label_map, self.cache, self.cfg.batch_size
        )
        return accuracy_from_scores(scores, labels)

    def _train_accuracy(self) -> float:
        utts = self.split.train
        if self.stage == 1:
            utts = [u for u in utts if u.label != SILENCE]
        scores, labels, _ = collect_scores(
            self.model, utts, self.split.label_map, self.cache, self.cfg.batch_size
        )
        return accuracy_from_scores(scores, labels)

    # ---- steps ----

    def _step_stage1(self, batch: Batch, triplet_rng: np.random.Generator):
        cfg = self.cfg
        model = self.model
        use_triplets = cfg.loss_mode in ("ce_st", "ce_tt") and cfg.beta > 0.0

        plan = None
        if use_triplets:
            try:
                plan = sample_triplets(batch.words, triplet_rng)
            except TripletSamplingError:
                plan = None  # batch trains on CE alone

        feats = batch.feats
        n_batch = feats.shape[0]
        anchor_rows = None
        if plan is not None and cfg.loss_mode == "ce_st":
            anchor_idx = [
                self._word_pools[w][int(triplet_rng.integers(len(self._word_pools[w])))]
                for w in plan.anchor_words
            ]
            anchor_feats = np.stack(
                [self.cache.get(self.split.train[i]) for i in anchor_idx], axis=0
            )
            feats = np.concatenate([feats, anchor_feats], axis=0)
            anchor_rows = np.arange(n_batch, n_batch + len(anchor_idx))

        for p in self._trainable().values():
            p.zero_grad()

        emb = model.embed(feats, train=True)
        batch_emb = take_rows(emb, np.arange(n_batch)) if anchor_rows is not None else emb
        logits = model.classify_logits(batch_emb)
        l_ce = cross_entropy(logits, batch.labels, model.config.num_classes)

        l_tri = None
        if plan is not None:
            pos = take_rows(emb, plan.pos_rows)
            neg = take_rows(emb, plan.neg_rows)
            if cfg.loss_mode == "ce_tt":
                vectors = self.anchors.matrix(
                    [self._anchor_token(w) for w in plan.anchor_words]
                )
                anc = model.project_anchors(vectors)
            else:
                anc = take_rows(emb, anchor_rows)
            l_tri = triplet_loss(anc, pos, neg, cfg.margin, cfg.distance_p)

        total = combined_loss(l_tri, l_ce, cfg.beta if plan is not None else 0.0)
        backward(total)
        sgd_step(self._trainable(), self.velocities, self.schedule.lr,
                 cfg.momentum, cfg.weight_decay)

        acc = accuracy_from_scores(logits.data, batch.labels)
        return (
            float(total.data),
            float(l_tri.data) if l_tri is not None else None,
            float(l_ce.data),
            acc,
        )

    def _step_stage2(self, batch: Batch):
        model = self.model
        with no_grad():
            pooled = mean_pool_time(
                model.extract(batch.feats, train=False).transpose(0, 2, 1)
            )
        emb = linear(Tensor(pooled.data), model.params["embed.w"], model.params["embed.b"])
        logits = model.classify_logits(emb)
        for p in self._trainable().values():
            p.zero_grad()
        l_ce = cross_entropy(logits, batch.labels, model.config.num_classes)
        backward(l_ce)
        sgd_step(self._trainable(), self.velocities, self.schedule.lr,
                 self.cfg.momentum, self.cfg.weight_decay)
        acc = accuracy_from_scores(logits.data, batch.labels)
        return float(l_ce.data), None, float(l_ce.data), acc

    # ---- epochs ----

    def _run_epoch(self) -> dict:
        cfg = self.cfg
        epoch_rng = derive_rng(cfg.seed, "shuffle", self.stage, self.epoch)
        triplet_rng = derive_rng(cfg.seed, "triplets", self.stage, self.epoch)

        sums = {"loss": 0.0, "tri": 0.0, "ce": 0.0, "acc": 0.0}
        n_batches = 0
        n_tri_batches = 0
        for batch in batch_iterator(
            self.split.train,
            self.split.label_map,
            self.cache,
            cfg.batch_size,
            rng=epoch_rng,
            drop_silence=(self.stage == 1),
        ):
            if self.stage == 1:
                loss, l_tri, l_ce, acc = self._step_stage1(batch, triplet_rng)
            else:
                loss, l_tri, l_ce, acc = self._step_stage2(batch)
            sums["loss"] += loss
            sums["ce"] += l_ce
            sums["acc"] += acc
            if l_tri is not None:
                sums["tri"] += l_tri
                n_tri_batches += 1
            n_batches += 1

        lr_used = self.schedule.lr
        valid_acc = self._validation_accuracy()
        improved = self.schedule.update(valid_acc)
        if improved:
            self._snapshot_best(valid_acc)

        record = {
            "stage": self.stage,
            "epoch": self.epoch,
            "lr": lr_used,
            "loss": sums["loss"] / n_batches,
            "loss_ce": sums["ce"] / n_batches,
            "loss_tri": (sums["tri"] / n_tri_batches) if n_tri_batches else None,
            "batch_acc": sums["acc"] / n_batches,
            "valid_acc": valid_acc,
            "improved": improved,
        }
        if cfg.target_train_acc is not None:
            record["train_acc"] = self._train_accuracy()
        self.log.append(record)
        self.epoch += 1
        return record

    def _run_stage(self, max_epochs: int | None) -> None:
        budget = self.cfg.max_epochs if max_epochs is None else max_epochs
        while self.epoch < budget and not self.schedule.stopped:
            record = self._run_epoch()
            if self.out_dir:
                self._append_log_line(record)
            if (
                self.cfg.target_train_acc is not None
                and record.get("train_acc", 0.0) >= self.cfg.target_train_acc
            ):
                break

    def run_stage1(self, max_epochs: int | None = None) -> None:
        if self.stage != 1:
            raise RuntimeError("stage 1 already finished")
        self._run_stage(max_epochs)

    def finish_stage1(self) -> None:
        """Adopt the best stage-1 state and switch to stage-2 finetuning."""
        if self.stage != 1:
            raise RuntimeError("not in stage 1")
        self._restore_best()
        self.stage = 2
        self.epoch = 0
        self.schedule = self._fresh_schedule()
        self.velocities = self._fresh_velocities()
        self.best_acc = None
        self.best_state = None
        self.best_bn_counts = None

    def run_stage2(self, max_epochs: int | None = None) -> None:
        if self.stage == 1:
            self.finish_stage1()
        self._run_stage(max_epochs)

    def finalize(self) -> None:
        """Adopt the best state of the stage that is currently running."""
        self._restore_best()

    def run(self, stage1_epochs: int | None = None, stage2_epochs: int | None = None) -> None:
        self.run_stage1(stage1_epochs)
        self.run_stage2(stage2_epochs)
        self.finalize()

    # ---- persistence ----

    def _append_log_line(self, record: dict) -> None:
        path = os.path.join(self.out_dir, "train_log.jsonl")
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def save(self, path: str) -> None:
        tensors = self.model.state_tensors()
        for name, v in self.velocities.items():
            tensors[f"opt.v.{name}"] = v
        if self.best_state is not None:
            for name, arr in self.best_state.items():
                tensors[f"best.{name}"] = arr
        meta = {
            "kind": "trainer",
            "bn_counts": self.model.bn_counts(),
            "stage": self.stage,
            "epoch": self.epoch,
            "schedule": self.schedule.to_dict(),
            "training_config": asdict(self.cfg),
            "log": self.log,
            "best_acc": self.best_acc,
            "best_bn_counts": self.best_bn_counts,
        }
        ckpt.save_container(path, self.model.config.to_dict(), meta, tensors)

    @classmethod
    def load(
        cls,
        path: str,
        split: DatasetSplit,
        anchors: AnchorStore | None = None,
        cache: FeatureCache | None = None,
        out_dir: str | None = None,
    ) -> "Trainer":
        config_dict, meta, tensors = ckpt.load_container(path)
        if meta.get("kind") != "trainer":
            raise ckpt.CheckpointError("not a trainer checkpoint")

        model = LgNet(LgNetConfig.from_dict(config_dict), seed=0)
        model_tensors = {
            n: a for n, a in tensors.items()
            if not n.startswith("opt.v.") and not n.startswith("best.")
        }
        model.load_state(model_tensors, meta["bn_counts"])

        cfg = TrainingConfig(**meta["training_config"])
        trainer = cls(model, split, cfg, anchors=anchors, cache=cache, out_dir=out_dir)
        trainer.stage = int(meta["stage"])
        trainer.epoch = int(meta["epoch"])
        trainer.schedule = ScheduleState.from_dict(meta["schedule"])
        trainer.log = list(meta["log"])
        trainer.velocities = {
            n[len("opt.v."):]: a.astype(model.dtype)
            for n, a in tensors.items()
            if n.startswith("opt.v.")
        }
        missing = set(trainer._trainable()) - set(trainer.velocities)
        if missing:
            raise ckpt.CheckpointError(f"checkpoint missing velocities: {sorted(missing)}")
        trainer.best_acc = meta.get("best_acc")
        trainer.best_bn_counts = meta.get("best_bn_counts")
        best = {
            n[len("best."):]: a for n, a in tensors.items() if n.startswith("best.")
        }
        trainer.best_state = best or None
        return trainer
