"""Triplet metric loss, per-class sigmoid cross entropy, and their blend."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, bce_with_logits, lp_distance


class TripletSamplingError(RuntimeError):
    """A batch cannot supply negatives (fewer than two distinct words)."""


def triplet_loss(anchor: Tensor, positive: Tensor, negative: Tensor,
                 margin: float = 1.0, p: float = 2.0) -> Tensor:
    """Margin hinge on anchor distances, averaged over the batch.

    Accepts single vectors or (B, D) stacks; each row contributes
    max(d(positive, anchor) - d(negative, anchor) + margin, 0).
    """
    d_pos = lp_distance(positive, anchor, p)
    d_neg = lp_distance(negative, anchor, p)
    hinge = (d_pos - d_neg + margin).relu()
    return hinge.mean() if hinge.ndim > 0 else hinge


def cross_entropy(logits: Tensor, labels: np.ndarray, num_classes: int) -> Tensor:
    """Sigmoid cross entropy against one-hot labels, mean over the batch."""
    y = one_hot(labels, num_classes)
    return bce_with_logits(logits, y.astype(logits.dtype))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    idx = np.asarray(labels, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("labels must be a 1-d index array")
    if idx.min(initial=0) < 0 or (idx.size and idx.max() >= num_classes):
        raise ValueError(f"label out of range for {num_classes} classes")
    out = np.zeros((idx.shape[0], num_classes), dtype=np.float64)
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def combined_loss(loss_tri: Tensor | None, loss_ce: Tensor, beta: float) -> Tensor:
    """beta * triplet + (1 - beta) * cross entropy; beta == 0 is exactly CE."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if beta == 0.0 or loss_tri is None:
        return loss_ce
    return loss_tri * beta + loss_ce * (1.0 - beta)


@dataclass(frozen=True)
class TripletBatch:
    """Index plan for one batch: which rows act as positives and negatives.

    Anchors are resolved by the trainer according to the loss mode: extra
    speech-anchor rows appended to the batch, or projected text anchors laid
    out one per positive.
    """

    pos_rows: np.ndarray
    neg_rows: np.ndarray
    anchor_words: list[str]
    anchor_utt_indices: np.ndarray | None = None  # speech mode only


def sample_triplets(words: list[str], rng: np.random.Generator) -> TripletBatch:
    """Pick a random different-word negative for every sample in the batch.

    Every non-silence sample serves once as the positive of its own triplet.
    Raises TripletSamplingError when the batch holds fewer than two distinct
    words, and skips silence rows entirely.
    """
    usable = [i for i, w in enumerate(words) if w != "silence"]
    distinct = {words[i] for i in usable}
    if len(distinct) < 2:
        raise TripletSamplingError(
            f"triplet sampling needs >= 2 distinct words in the batch, got {len(distinct)}"
        )

    pos_rows = []
    neg_rows = []
    anchor_words = []
    for i in usable:
        others = [j for j in usable if words[j] != words[i]]
        neg = others[int(rng.integers(len(others)))]
        pos_rows.append(i)
        neg_rows.append(neg)
        anchor_words.append(words[i])
    return TripletBatch(
        pos_rows=np.asarray(pos_rows, dtype=np.int64),
        neg_rows=np.asarray(neg_rows, dtype=np.int64),
        anchor_words=anchor_words,
    )
