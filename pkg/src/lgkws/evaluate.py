"""Evaluation: accuracy, confusion, and FRR at a false-alarm budget.

The detection protocol treats every keyword class as a positive trigger:
a sample's detection score is the maximum sigmoid score over the keyword
classes. Negatives (`unknown`, `silence`) false-alarm when their score
clears the threshold; positives false-reject when their score stays at or
below it or the best-scoring keyword is not the right one. The operating
threshold is the smallest observed score (1.0 included as a sentinel) whose
false-alarm rate fits the budget.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Batch, DatasetSplit, FeatureCache, batch_iterator
from .model import LgNet


class EvalError(ValueError):
    """Evaluation on an empty split or without negatives where required."""


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # (C, C), rows = true, cols = predicted
    per_class_accuracy: dict[str, float]
    sample_count: int
    frr: float | None = None
    threshold: float | None = None
    far_target: float | None = None
    far_note: str = ""

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sample_count": self.sample_count,
            "confusion": self.confusion.tolist(),
            "per_class_accuracy": self.per_class_accuracy,
            "frr": self.frr,
            "threshold": self.threshold,
            "far_target": self.far_target,
            "far_note": self.far_note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"accuracy: {self.accuracy:.4f} ({self.sample_count} samples)"]
        if self.frr is not None:
            lines.append(
                f"FRR@FAR<={self.far_target}: {self.frr:.4f} (threshold {self.threshold:.6f})"
            )
        elif self.far_note:
            lines.append(f"FRR: {self.far_note}")
        return "\n".join(lines)


def collect_scores(model: LgNet, utts, label_map: dict[str, int], cache: FeatureCache,
                   batch_size: int = 256) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Eval-mode sigmoid scores for a split, in deterministic split order."""
    if not utts:
        raise EvalError("cannot evaluate an empty split")
    scores = []
    labels = []
    words: list[str] = []
    for batch in batch_iterator(utts, label_map, cache, batch_size):
        scores.append(model.scores(batch.feats))
        labels.append(batch.labels)
        words.extend(batch.words)
    return np.concatenate(scores, axis=0), np.concatenate(labels, axis=0), words


def accuracy_from_scores(scores: np.ndarray, labels: np.ndarray) -> float:
    """Argmax accuracy; ties resolve to the lowest class index."""
    return float(np.mean(np.argmax(scores, axis=1) == labels))


def confusion_matrix(scores: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    pred = np.argmax(scores, axis=1)
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (labels, pred), 1)
    return out


def frr_at_far(
    scores: np.ndarray,
    labels: np.ndarray,
    keyword_indices: list[int],
    far_target: float = 0.005,
) -> tuple[float, float]:
    """False-reject rate at the loosest threshold holding FAR <= far_target.

    Candidate thresholds are every observed detection score plus 1.0; the
    smallest candidate whose false-alarm rate fits the budget is chosen.
    Raises EvalError when the split has no negatives (FAR undefined) or no
    positives (FRR undefined).
    """
    if not 0.0 <= far_target <= 1.0:
        raise EvalError(f"far_target must lie in [0, 1], got {far_target}")
    kw = np.asarray(keyword_indices, dtype=np.int64)
    if kw.size == 0:
        raise EvalError("no keyword classes given")

    detect = scores[:, kw].max(axis=1)
    best_kw = kw[np.argmax(scores[:, kw], axis=1)]

    positive = np.isin(labels, kw)
    negative = ~positive
    n_pos = int(positive.sum())
    n_neg = int(negative.sum())
    if n_neg == 0:
        raise EvalError("FAR undefined: split has no unknown/silence samples")
    if n_pos == 0:
        raise EvalError("FRR undefined: split has no keyword samples")

    neg_scores = np.sort(detect[negative])
    pos_scores = detect[positive]
    wrong_word = best_kw[positive] != labels[positive]

    candidates = np.unique(np.concatenate([detect, [1.0]]))
    # negatives strictly above the threshold false-alarm
    fa_counts = n_neg - np.searchsorted(neg_scores, candidates, side="right")
    ok = fa_counts <= far_target * n_neg
    idx = int(np.argmax(ok))  # candidates ascend, so first True is the smallest
    if not ok[idx]:
        raise EvalError("no threshold satisfies the FAR budget")
    threshold = float(candidates[idx])

    rejected = (pos_scores <= threshold) | wrong_word
    return float(rejected.mean()), threshold


def evaluate(
    model: LgNet,
    split: DatasetSplit,
    cache: FeatureCache,
    split_name: str = "test",
    far_target: float = 0.005,
    batch_size: int = 256,
    drop_silence: bool = False,
) -> EvalReport:
    utts = split.split(split_name)
    if drop_silence:
        utts = [u for u in utts if u.label != "silence"]
    scores, labels, _words = collect_scores(model, utts, split.label_map, cache, batch_size)

    inv = {i: lbl for lbl, i in split.label_map.items()}
    conf = confusion_matrix(scores, labels, split.num_classes)
    per_class = {}
    for i in range(split.num_classes):
        total = int(conf[i].sum())
        if total:
            per_class[inv[i]] = float(conf[i, i] / total)

    report = EvalReport(
        accuracy=accuracy_from_scores(scores, labels),
        confusion=conf,
        per_class_accuracy=per_class,
        sample_count=int(labels.shape[0]),
        far_target=far_target,
    )
    try:
        report.frr, report.threshold = frr_at_far(
            scores, labels, split.keyword_indices(), far_target
        )
    except EvalError as exc:
        report.far_note = str(exc)
    return report


def export_embeddings(
    model: LgNet,
    split: DatasetSplit,
    cache: FeatureCache,
    out_path: str,
    split_name: str = "test",
    batch_size: int = 256,
) -> int:
    """Write one CSV row per utterance: label, word, then embedding values."""
    utts = split.split(split_name)
    if not utts:
        raise EvalError("cannot export an empty split")
    dim = model.config.embedding_dim
    count = 0
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "word"] + [f"e{i:03d}" for i in range(dim)])
        for batch in batch_iterator(utts, split.label_map, cache, batch_size):
            from .autograd import no_grad

            with no_grad():
                emb = model.embed(batch.feats, train=False).data
            for row, utt in zip(emb, batch.utts):
                writer.writerow([utt.label, utt.word] + [repr(float(v)) for v in row])
                count += 1
    return count
