"""Block-stack model tests: parameter accounting, shapes, residual wiring,
whole-model gradient flow, and checkpoint round-trips."""

import numpy as np
import pytest

from lgkws.autograd import backward, gradient_check, lp_distance, bce_with_logits
from lgkws.checkpoint import CheckpointError, load_container
from lgkws.model import (
    LgBlockConfig,
    LgNet,
    LgNetConfig,
    count_params,
    lgnet3_config,
    lgnet6_config,
    load_model,
    save_model,
)


def hand_counted_params(config: LgNetConfig) -> int:
    """Independent tally, written as a per-layer ledger rather than a formula."""
    sizes = []
    for b in config.blocks:
        i, o, k = b.in_channels, b.out_channels, b.kernel
        sizes.append(o * i * k)          # conv weight
        sizes.append(o)                  # conv bias
        sizes.extend([o, o])             # bn1 gamma, beta
        if b.use_attention:
            for _ in range(4):           # q, k, v, o projections
                sizes.append(o * o)
                sizes.append(o)
        sizes.extend([o, o])             # bn2
        if b.stride != 1 or i != o:
            sizes.append(o * i)          # 1x1 shortcut conv
            sizes.append(o)
            sizes.extend([o, o])         # shortcut bn
    last = config.blocks[-1].out_channels
    sizes.append(config.embedding_dim * last)
    sizes.append(config.embedding_dim)
    sizes.append(config.num_classes * config.embedding_dim)
    sizes.append(config.num_classes)
    return sum(sizes)


def tiny_config(**overrides) -> LgNetConfig:
    defaults = dict(
        blocks=(
            LgBlockConfig(in_channels=3, out_channels=4, stride=1),
            LgBlockConfig(in_channels=4, out_channels=6, stride=2),
        ),
        input_channels=3,
        embedding_dim=5,
        num_classes=4,
        anchor_dim=7,
        dtype="float64",
    )
    defaults.update(overrides)
    return LgNetConfig(**defaults)


class TestParameterCounts:
    def test_six_block_model_hits_target(self):
        assert count_params(lgnet6_config()) == 313_100
        assert 282_000 <= count_params(lgnet6_config()) <= 344_000

    def test_three_block_model_hits_target(self):
        assert count_params(lgnet3_config()) == 75_156
        assert 67_000 <= count_params(lgnet3_config()) <= 81_000

    @pytest.mark.parametrize("factory", [lgnet3_config, lgnet6_config, tiny_config])
    def test_formula_matches_hand_ledger(self, factory):
        cfg = factory()
        assert count_params(cfg) == hand_counted_params(cfg)

    @pytest.mark.parametrize("factory", [lgnet3_config, tiny_config])
    def test_formula_matches_built_tensors(self, factory):
        cfg = factory()
        model = LgNet(cfg, seed=0)
        built = sum(
            t.data.size
            for n, t in model.params.items()
            if not n.startswith("text_proj.")
        )
        assert count_params(cfg) == built

    def test_attention_ablation_accounting(self):
        cfg_on = lgnet3_config()
        blocks_off = tuple(
            LgBlockConfig(
                in_channels=b.in_channels,
                out_channels=b.out_channels,
                stride=b.stride,
                use_attention=False,
            )
            for b in cfg_on.blocks
        )
        cfg_off = LgNetConfig(
            blocks=blocks_off,
            input_channels=cfg_on.input_channels,
            embedding_dim=cfg_on.embedding_dim,
            num_classes=cfg_on.num_classes,
        )
        expected_gap = sum(
            4 * (b.out_channels**2 + b.out_channels) for b in cfg_on.blocks
        )
        assert count_params(cfg_on) - count_params(cfg_off) == expected_gap


class TestParameterPartition:
    def test_partition_is_exact(self):
        model = LgNet(tiny_config(), seed=1)
        s = set(model.theta_s())
        fc = set(model.theta_fc())
        t = set(model.theta_t())
        assert s & fc == set()
        assert s & t == set()
        assert fc & t == set()
        assert s | fc | t == set(model.params)

    def test_fc_holds_both_heads(self):
        model = LgNet(tiny_config(), seed=1)
        fc = set(model.theta_fc())
        assert "embed.w" in fc and "classifier.w" in fc

    def test_text_projection_only_with_anchor_dim(self):
        model = LgNet(tiny_config(anchor_dim=None), seed=1)
        assert model.theta_t() == {}


class TestForward:
    def test_six_block_shapes(self):
        cfg = lgnet6_config()
        model = LgNet(cfg, seed=0)
        feats = np.random.default_rng(0).normal(size=(2, 98, 40))
        out = model.extract(feats, train=True)
        # strides 1,2,1,2,1,2 take 98 -> 98 -> 49 -> 49 -> 25 -> 25 -> 13
        assert out.shape == (2, 108, 13)
        emb = model.embed(feats, train=True)
        assert emb.shape == (2, 128)

    def test_zeroed_main_path_leaves_relu_of_input(self):
        cfg = LgNetConfig(
            blocks=(LgBlockConfig(in_channels=4, out_channels=4, stride=1),),
            input_channels=4,
            embedding_dim=3,
            num_classes=2,
            dtype="float64",
        )
        model = LgNet(cfg, seed=2)
        model.params["blocks.0.bn2.gamma"].data[:] = 0.0
        feats = np.random.default_rng(5).normal(size=(2, 6, 4))
        out = model.extract(feats, train=True)
        expected = np.maximum(feats.transpose(0, 2, 1), 0.0)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_scores_track_logit_argmax(self):
        model = LgNet(tiny_config(dtype="float32"), seed=3)
        rng = np.random.default_rng(4)
        feats = rng.normal(size=(4, 9, 3)).astype(np.float32)
        model.extract(feats, train=True)  # populate running stats for eval
        scores = model.scores(feats)
        assert scores.shape == (4, 4)
        assert np.all((scores > 0.0) & (scores < 1.0))
        emb = model.embed(feats, train=False)
        logits = model.classify_logits(emb)
        np.testing.assert_array_equal(
            scores.argmax(axis=1), logits.data.argmax(axis=1)
        )

    def test_input_validation(self):
        model = LgNet(tiny_config(), seed=0)
        with pytest.raises(ValueError):
            model.extract(np.zeros((5, 3)), train=True)
        with pytest.raises(ValueError, match="input_channels"):
            model.extract(np.zeros((2, 6, 9)), train=True)

    def test_project_anchors_shape(self):
        model = LgNet(tiny_config(), seed=0)
        out = model.project_anchors(np.zeros((3, 7)))
        assert out.shape == (3, 5)

    def test_project_anchors_requires_anchor_dim(self):
        model = LgNet(tiny_config(anchor_dim=None), seed=0)
        with pytest.raises(RuntimeError):
            model.project_anchors(np.zeros((3, 7)))

    def test_init_is_seed_deterministic(self):
        a = LgNet(tiny_config(), seed=7)
        b = LgNet(tiny_config(), seed=7)
        c = LgNet(tiny_config(), seed=8)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)
        assert any(
            not np.array_equal(a.params[n].data, c.params[n].data) for n in a.params
        )


class TestWholeModelGradients:
    def test_gradient_check_two_block_model(self):
        model = LgNet(tiny_config(), seed=11)
        rng = np.random.default_rng(12)
        feats = rng.normal(size=(3, 9, 3))
        labels = np.eye(4)[[0, 2, 1]]
        anchors = rng.normal(size=(3, 7))

        def loss_fn():
            emb = model.embed(feats, train=True)
            logits = model.classify_logits(emb)
            ce = bce_with_logits(logits, labels)
            proj = model.project_anchors(anchors)
            return ce + lp_distance(emb, proj, 2.0).mean()

        err = gradient_check(loss_fn, list(model.params.values()))
        assert err <= 1e-4

    def test_gradients_reach_every_parameter(self):
        model = LgNet(tiny_config(), seed=11)
        rng = np.random.default_rng(13)
        feats = rng.normal(size=(3, 9, 3))
        labels = np.eye(4)[[0, 2, 1]]
        anchors = rng.normal(size=(3, 7))
        emb = model.embed(feats, train=True)
        loss = bce_with_logits(model.classify_logits(emb), labels)
        loss = loss + lp_distance(emb, model.project_anchors(anchors), 2.0).mean()
        backward(loss)
        for name, p in model.params.items():
            assert p.grad is not None, name
            assert np.abs(p.grad).max() > 0.0, name


class TestCheckpointRoundTrip:
    def make_trained_stats_model(self):
        model = LgNet(tiny_config(dtype="float32"), seed=5)
        feats = np.random.default_rng(6).normal(size=(4, 9, 3)).astype(np.float32)
        model.extract(feats, train=True)
        return model

    def test_round_trip_bit_identical(self, tmp_path):
        model = self.make_trained_stats_model()
        path = tmp_path / "model.ckpt"
        save_model(path, model)
        back = load_model(path)
        assert back.config.to_dict() == model.config.to_dict()
        for name, p in model.params.items():
            np.testing.assert_array_equal(back.params[name].data, p.data)
        for name, st in model.bn_states.items():
            np.testing.assert_array_equal(back.bn_states[name].mean, st.mean)
            np.testing.assert_array_equal(back.bn_states[name].var, st.var)
            assert back.bn_states[name].count == st.count
        # eval-mode outputs must agree bit for bit
        feats = np.random.default_rng(9).normal(size=(2, 9, 3)).astype(np.float32)
        np.testing.assert_array_equal(model.scores(feats), back.scores(feats))

    def test_corrupted_payload_rejected(self, tmp_path):
        model = self.make_trained_stats_model()
        path = tmp_path / "model.ckpt"
        save_model(path, model)
        blob = bytearray(path.read_bytes())
        blob[-40] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            load_container(path)

    def test_truncated_file_rejected(self, tmp_path):
        model = self.make_trained_stats_model()
        path = tmp_path / "model.ckpt"
        save_model(path, model)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            load_container(path)

    def test_foreign_magic_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_container(path)

    def test_load_state_validates_names_and_shapes(self):
        model = self.make_trained_stats_model()
        tensors = model.state_tensors()
        counts = model.bn_counts()
        missing = dict(tensors)
        del missing["embed.w"]
        with pytest.raises(ValueError, match="embed.w"):
            model.load_state(missing, counts)
        bad = dict(tensors)
        bad["embed.w"] = np.zeros((1, 1), dtype=np.float32)
        with pytest.raises(ValueError, match="shape"):
            model.load_state(bad, counts)
