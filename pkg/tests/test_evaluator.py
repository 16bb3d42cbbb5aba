"""Detection-metric tests with a brute-force reference implementation."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lgkws.evaluate import (
    EvalError,
    accuracy_from_scores,
    confusion_matrix,
    frr_at_far,
)


def brute_force_frr(scores, labels, keyword_indices, far_target):
    """Reference: try every candidate threshold with plain loops."""
    kw = list(keyword_indices)
    detect = [max(row[k] for k in kw) for row in scores]
    best_kw = [kw[int(np.argmax([row[k] for k in kw]))] for row in scores]
    pos = [i for i, y in enumerate(labels) if y in kw]
    neg = [i for i, y in enumerate(labels) if y not in kw]

    best = None
    for theta in sorted(set(detect) | {1.0}):
        fa = sum(1 for i in neg if detect[i] > theta)
        if fa <= far_target * len(neg):
            best = theta
            break
    if best is None:
        raise AssertionError("sentinel 1.0 always satisfies FAR")
    fr = sum(
        1 for i in pos if detect[i] <= best or best_kw[i] != labels[i]
    )
    return fr / len(pos), best


class TestFrrFixtures:
    # two positives (class 0) scoring 0.9 and 0.6, two negatives (class 2)
    # whose best keyword score is 0.7 and 0.2
    SCORES = np.array(
        [
            [0.9, 0.1, 0.3],
            [0.6, 0.2, 0.1],
            [0.7, 0.3, 0.4],
            [0.2, 0.1, 0.9],
        ]
    )
    LABELS = np.array([0, 0, 2, 2])
    KW = [0, 1]

    def test_loose_budget_accepts_everything(self):
        frr, theta = frr_at_far(self.SCORES, self.LABELS, self.KW, far_target=0.5)
        assert theta == 0.2
        assert frr == 0.0

    def test_zero_budget_rejects_the_weak_positive(self):
        frr, theta = frr_at_far(self.SCORES, self.LABELS, self.KW, far_target=0.0)
        assert theta == 0.7
        assert frr == 0.5

    def test_wrong_keyword_counts_as_reject(self):
        scores = np.array([[0.1, 0.9, 0.0], [0.9, 0.1, 0.0], [0.05, 0.1, 0.9]])
        labels = np.array([0, 0, 2])  # first positive fires on keyword 1
        frr, theta = frr_at_far(scores, labels, [0, 1], far_target=1.0)
        assert frr == 0.5

    def test_perfect_separation_gives_zero_frr(self):
        scores = np.array(
            [[0.95, 0.0, 0.0], [0.9, 0.0, 0.0], [0.3, 0.1, 0.8], [0.2, 0.0, 0.9]]
        )
        labels = np.array([0, 0, 2, 2])
        for target in (0.0, 0.005, 0.1, 1.0):
            frr, _ = frr_at_far(scores, labels, [0, 1], far_target=target)
            assert frr == 0.0

    def test_no_negatives_is_an_error(self):
        with pytest.raises(EvalError, match="no unknown/silence"):
            frr_at_far(self.SCORES[:2], self.LABELS[:2], self.KW)

    def test_no_positives_is_an_error(self):
        with pytest.raises(EvalError, match="no keyword"):
            frr_at_far(self.SCORES[2:], self.LABELS[2:], self.KW)

    def test_bad_far_target(self):
        with pytest.raises(EvalError):
            frr_at_far(self.SCORES, self.LABELS, self.KW, far_target=1.5)

    def test_empty_keyword_list(self):
        with pytest.raises(EvalError):
            frr_at_far(self.SCORES, self.LABELS, [])


class TestFrrAgainstBruteForce:
    @given(
        st.integers(min_value=0, max_value=2**31 - 1),
        st.sampled_from([0.0, 0.005, 0.01, 0.05, 0.2, 0.5]),
    )
    @settings(max_examples=60, deadline=None)
    def test_matches_reference(self, seed, far_target):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 120))
        c = int(rng.integers(3, 6))
        scores = rng.uniform(0.0, 1.0, size=(n, c))
        labels = rng.integers(0, c, size=n)
        kw = list(range(c - 2))
        if not np.isin(labels, kw).any() or np.isin(labels, kw).all():
            labels[0] = 0
            labels[1] = c - 1
        frr, theta = frr_at_far(scores, labels, kw, far_target)
        ref_frr, ref_theta = brute_force_frr(scores, labels.tolist(), kw, far_target)
        assert theta == pytest.approx(ref_theta, abs=0.0)
        assert frr == pytest.approx(ref_frr, abs=1e-12)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_frr_never_rises_with_looser_budget(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.uniform(0.0, 1.0, size=(60, 4))
        labels = rng.integers(0, 4, size=60)
        labels[:5] = 0
        labels[5:10] = 3
        targets = [0.0, 0.01, 0.05, 0.2, 0.5, 1.0]
        frrs = [frr_at_far(scores, labels, [0, 1], t)[0] for t in targets]
        assert all(a >= b - 1e-12 for a, b in zip(frrs, frrs[1:]))


class TestAccuracyAndConfusion:
    def test_tie_breaks_to_lowest_index(self):
        scores = np.array([[0.5, 0.5, 0.1]])
        assert accuracy_from_scores(scores, np.array([0])) == 1.0
        assert accuracy_from_scores(scores, np.array([1])) == 0.0

    def test_accuracy_fixture(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.7], [0.6, 0.4], [0.1, 0.2]])
        labels = np.array([0, 1, 1, 0])
        assert accuracy_from_scores(scores, labels) == 0.5

    def test_confusion_totals(self):
        rng = np.random.default_rng(0)
        scores = rng.uniform(size=(50, 3))
        labels = rng.integers(0, 3, size=50)
        cm = confusion_matrix(scores, labels, 3)
        assert cm.sum() == 50
        for c in range(3):
            assert cm[c].sum() == (labels == c).sum()

    def test_confusion_diagonal_matches_accuracy(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(size=(80, 4))
        labels = rng.integers(0, 4, size=80)
        cm = confusion_matrix(scores, labels, 4)
        assert np.trace(cm) / 80 == pytest.approx(
            accuracy_from_scores(scores, labels)
        )


class TestEmbeddingExport:
    def test_csv_layout_and_precision(self, tmp_path):
        from lgkws.data import FeatureCache, synth_dataset
        from lgkws.evaluate import export_embeddings
        from lgkws.frontend import MfccConfig
        from lgkws.model import LgBlockConfig, LgNet, LgNetConfig

        split, _ = synth_dataset(2, 10, seed=0)
        cfg = LgNetConfig(
            blocks=(LgBlockConfig(in_channels=40, out_channels=8, stride=2),),
            embedding_dim=6,
            num_classes=2,
        )
        model = LgNet(cfg, seed=0)
        cache = FeatureCache(MfccConfig())
        feats = np.stack([cache.get(u) for u in split.train[:4]])
        model.extract(feats, train=True)  # running stats for eval mode

        out = tmp_path / "emb.csv"
        count = export_embeddings(model, split, cache, str(out), split_name="test")
        assert count == len(split.test)

        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["label", "word"] + [f"e{i:03d}" for i in range(6)]
        assert len(rows) == count + 1
        # values parse back to the exact floats the model produced
        from lgkws.autograd import no_grad

        batch_feats = np.stack([cache.get(u) for u in split.test])
        with no_grad():
            expected = model.embed(batch_feats, train=False).data
        got = np.array([[float(v) for v in row[2:]] for row in rows[1:]])
        np.testing.assert_array_equal(got, expected.astype(np.float64))
