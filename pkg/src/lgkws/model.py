"""LG-Net: stacks of temporal-conv + self-attention residual blocks.

Each block runs TConv -> BN -> ReLU, adds a sinusoidal positional encoding,
applies single-head self-attention over time, normalizes again, and joins a
residual shortcut (identity when shape allows, otherwise strided 1x1 conv
plus BN) under a final ReLU. Block outputs are mean-pooled over time and
projected to a 128-d embedding; a linear classifier scores each class with a
per-class sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import checkpoint as ckpt
from .autograd import Tensor, conv1d, linear, mean_pool_time, no_grad
from .layers import BatchNormState, batchnorm1d, positional_encoding, self_attention
from .rng import derive_rng


@dataclass(frozen=True)
class LgBlockConfig:
    in_channels: int
    out_channels: int
    stride: int = 1
    kernel: int = 3
    attention_heads: int = 1
    use_attention: bool = True

    @property
    def projects(self) -> bool:
        return self.in_channels != self.out_channels or self.stride != 1


@dataclass
class LgNetConfig:
    blocks: tuple[LgBlockConfig, ...]
    input_channels: int = 40
    embedding_dim: int = 128
    num_classes: int = 12
    anchor_dim: int | None = None
    dtype: str = "float32"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def validate(self) -> None:
        if not self.blocks:
            raise ValueError("model needs at least one block")
        prev = self.input_channels
        for i, b in enumerate(self.blocks):
            if b.in_channels != prev:
                raise ValueError(
                    f"block {i}: in_channels={b.in_channels} but previous stage emits {prev}"
                )
            if b.kernel % 2 != 1:
                raise ValueError(f"block {i}: kernel must be odd, got {b.kernel}")
            if b.out_channels % b.attention_heads != 0:
                raise ValueError(
                    f"block {i}: out_channels={b.out_channels} not divisible by "
                    f"attention_heads={b.attention_heads}"
                )
            prev = b.out_channels

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks"] = [asdict(b) for b in self.blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LgNetConfig":
        blocks = tuple(LgBlockConfig(**b) for b in d["blocks"])
        rest = {k: v for k, v in d.items() if k != "blocks"}
        return cls(blocks=blocks, **rest)


def _chain(channels, strides, input_channels=40) -> tuple[LgBlockConfig, ...]:
    blocks = []
    prev = input_channels
    for c, s in zip(channels, strides):
        blocks.append(LgBlockConfig(in_channels=prev, out_channels=c, stride=s))
        prev = c
    return tuple(blocks)


def lgnet6_config(num_classes: int = 12, anchor_dim: int | None = None) -> LgNetConfig:
    """Six-block model sized to roughly 313K trainable parameters."""
    return LgNetConfig(
        blocks=_chain([48, 48, 76, 76, 108, 108], [1, 2, 1, 2, 1, 2]),
        num_classes=num_classes,
        anchor_dim=anchor_dim,
    )


def lgnet3_config(num_classes: int = 12, anchor_dim: int | None = None) -> LgNetConfig:
    """Three-block model sized to roughly 74K trainable parameters."""
    return LgNetConfig(
        blocks=_chain([40, 52, 68], [1, 2, 2]),
        num_classes=num_classes,
        anchor_dim=anchor_dim,
    )


MODEL_FACTORIES = {"lgnet3": lgnet3_config, "lgnet6": lgnet6_config}


def count_params(config: LgNetConfig) -> int:
    """Trainable parameters in the extractor and the two FC heads.

    The text projection and BN running stats are excluded: the former is
    dropped after metric training, the latter are buffers, not parameters.
    """
    config.validate()
    total = 0
    for b in config.blocks:
        total += b.out_channels * b.in_channels * b.kernel + b.out_channels  # conv w+b
        total += 2 * b.out_channels  # bn1
        if b.use_attention:
            total += 4 * (b.out_channels ** 2 + b.out_channels)  # q, k, v, o
        total += 2 * b.out_channels  # bn2
        if b.projects:
            total += b.out_channels * b.in_channels + b.out_channels  # 1x1 conv
            total += 2 * b.out_channels  # shortcut bn
    last = config.blocks[-1].out_channels
    total += config.embedding_dim * last + config.embedding_dim  # embedding FC
    total += config.num_classes * config.embedding_dim + config.num_classes  # classifier
    return total


class LgNet:
    """Parameter container plus forward passes for the block stack."""

    def __init__(self, config: LgNetConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BatchNormState] = {}
        self._build(seed)

    # ---- construction ----

    def _weight(self, name: str, shape: tuple, fan_in: int, seed: int) -> None:
        bound = 1.0 / np.sqrt(fan_in)
        data = derive_rng(seed, "init", name).uniform(-bound, bound, size=shape)
        self.params[name] = Tensor(data.astype(self.dtype), requires_grad=True)

    def _zeros(self, name: str, shape: tuple) -> None:
        self.params[name] = Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)

    def _ones(self, name: str, shape: tuple) -> None:
        self.params[name] = Tensor(np.ones(shape, dtype=self.dtype), requires_grad=True)

    def _build(self, seed: int) -> None:
        for i, b in enumerate(self.config.blocks):
            p = f"blocks.{i}"
            self._weight(f"{p}.conv.w", (b.out_channels, b.in_channels, b.kernel),
                         b.in_channels * b.kernel, seed)
            self._zeros(f"{p}.conv.b", (b.out_channels,))
            self._ones(f"{p}.bn1.gamma", (b.out_channels,))
            self._zeros(f"{p}.bn1.beta", (b.out_channels,))
            self.bn_states[f"{p}.bn1"] = BatchNormState.fresh(b.out_channels, self.dtype)
            if b.use_attention:
                for proj in ("wq", "wk", "wv", "wo"):
                    self._weight(f"{p}.attn.{proj}", (b.out_channels, b.out_channels),
                                 b.out_channels, seed)
                for bias in ("bq", "bk", "bv", "bo"):
                    self._zeros(f"{p}.attn.{bias}", (b.out_channels,))
            self._ones(f"{p}.bn2.gamma", (b.out_channels,))
            self._zeros(f"{p}.bn2.beta", (b.out_channels,))
            self.bn_states[f"{p}.bn2"] = BatchNormState.fresh(b.out_channels, self.dtype)
            if b.projects:
                self._weight(f"{p}.shortcut.w", (b.out_channels, b.in_channels, 1),
                             b.in_channels, seed)
                self._zeros(f"{p}.shortcut.b", (b.out_channels,))
                self._ones(f"{p}.bn_sc.gamma", (b.out_channels,))
                self._zeros(f"{p}.bn_sc.beta", (b.out_channels,))
                self.bn_states[f"{p}.bn_sc"] = BatchNormState.fresh(b.out_channels, self.dtype)

        last = self.config.blocks[-1].out_channels
        self._weight("embed.w", (self.config.embedding_dim, last), last, seed)
        self._zeros("embed.b", (self.config.embedding_dim,))
        self._weight("classifier.w", (self.config.num_classes, self.config.embedding_dim),
                     self.config.embedding_dim, seed)
        self._zeros("classifier.b", (self.config.num_classes,))
        if self.config.anchor_dim is not None:
            self._weight("text_proj.w", (self.config.embedding_dim, self.config.anchor_dim),
                         self.config.anchor_dim, seed)
            self._zeros("text_proj.b", (self.config.embedding_dim,))

    # ---- parameter partition ----

    def theta_s(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.params.items() if n.startswith("blocks.")}

    def theta_fc(self) -> dict[str, Tensor]:
        return {
            n: t
            for n, t in self.params.items()
            if n.startswith("embed.") or n.startswith("classifier.")
        }

    def theta_t(self) -> dict[str, Tensor]:
        return {n: t for n, t in self.params.items() if n.startswith("text_proj.")}

    # ---- forward ----

    def _block_forward(self, i: int, x: Tensor, train: bool) -> Tensor:
        b = self.config.blocks[i]
        p = f"blocks.{i}"
        cfg = self.config
        eps, mom = cfg.bn_eps, cfg.bn_momentum

        main = conv1d(x, self.params[f"{p}.conv.w"], self.params[f"{p}.conv.b"], b.stride)
        main = batchnorm1d(main, self.params[f"{p}.bn1.gamma"], self.params[f"{p}.bn1.beta"],
                           self.bn_states[f"{p}.bn1"], train, eps, mom)
        main = main.relu()

        if b.use_attention:
            seq = main.transpose(0, 2, 1)  # (B, T, C)
            pe = positional_encoding(seq.shape[1], b.out_channels, dtype=self.dtype)
            seq = seq + Tensor(pe)
            seq = self_attention(
                seq,
                self.params[f"{p}.attn.wq"], self.params[f"{p}.attn.bq"],
                self.params[f"{p}.attn.wk"], self.params[f"{p}.attn.bk"],
                self.params[f"{p}.attn.wv"], self.params[f"{p}.attn.bv"],
                self.params[f"{p}.attn.wo"], self.params[f"{p}.attn.bo"],
                num_heads=b.attention_heads,
            )
            main = seq.transpose(0, 2, 1)

        main = batchnorm1d(main, self.params[f"{p}.bn2.gamma"], self.params[f"{p}.bn2.beta"],
                           self.bn_states[f"{p}.bn2"], train, eps, mom)

        if b.projects:
            short = conv1d(x, self.params[f"{p}.shortcut.w"], self.params[f"{p}.shortcut.b"],
                           b.stride)
            short = batchnorm1d(short, self.params[f"{p}.bn_sc.gamma"],
                                self.params[f"{p}.bn_sc.beta"],
                                self.bn_states[f"{p}.bn_sc"], train, eps, mom)
        else:
            short = x

        return (main + short).relu()

    def extract(self, feats: np.ndarray, train: bool) -> Tensor:
        """Run the block stack on (B, T, F) features; returns (B, C_last, T')."""
        f = np.asarray(feats)
        if f.ndim != 3:
            raise ValueError("expected features of shape (B, T, F)")
        if f.shape[2] != self.config.input_channels:
            raise ValueError(
                f"feature dim {f.shape[2]} does not match input_channels="
                f"{self.config.input_channels}"
            )
        x = Tensor(f.transpose(0, 2, 1).astype(self.dtype))
        for i in range(len(self.config.blocks)):
            x = self._block_forward(i, x, train)
        return x

    def embed(self, feats: np.ndarray, train: bool) -> Tensor:
        """(B, T, F) features -> (B, embedding_dim) speech embeddings."""
        x = self.extract(feats, train)
        pooled = mean_pool_time(x.transpose(0, 2, 1))
        return linear(pooled, self.params["embed.w"], self.params["embed.b"])

    def classify_logits(self, embeddings: Tensor) -> Tensor:
        return linear(embeddings, self.params["classifier.w"], self.params["classifier.b"])

    def scores(self, feats: np.ndarray) -> np.ndarray:
        """Eval-mode per-class sigmoid scores, (B, num_classes) numpy array."""
        with no_grad():
            logits = self.classify_logits(self.embed(feats, train=False))
            return logits.sigmoid().data

    def project_anchors(self, vectors: np.ndarray) -> Tensor:
        """Map raw anchor vectors (N, anchor_dim) into the embedding space.

        The input carries no gradient; only the projection parameters learn.
        """
        if self.config.anchor_dim is None:
            raise RuntimeError("model was built without a text projection")
        v = Tensor(np.asarray(vectors).astype(self.dtype))
        return linear(v, self.params["text_proj.w"], self.params["text_proj.b"])

    # ---- state ----

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {n: t.data for n, t in self.params.items()}
        for key, st in self.bn_states.items():
            out[f"{key}.running_mean"] = st.mean
            out[f"{key}.running_var"] = st.var
        return out

    def bn_counts(self) -> dict[str, int]:
        return {key: st.count for key, st in self.bn_states.items()}

    def load_state(self, tensors: dict[str, np.ndarray], bn_counts: dict[str, int]) -> None:
        for name, t in self.params.items():
            if name not in tensors:
                raise ckpt.CheckpointError(f"checkpoint missing tensor '{name}'")
            arr = tensors[name].astype(self.dtype)
            if arr.shape != t.data.shape:
                raise ckpt.CheckpointError(
                    f"tensor '{name}': shape {arr.shape} != expected {t.data.shape}"
                )
            t.data = arr
            t.grad = None
        for key, st in self.bn_states.items():
            st.mean = tensors[f"{key}.running_mean"].astype(self.dtype)
            st.var = tensors[f"{key}.running_var"].astype(self.dtype)
            st.count = int(bn_counts.get(key, 0))


def save_model(path: str, model: LgNet, extra_meta: dict | None = None) -> None:
    meta = {"kind": "model", "bn_counts": model.bn_counts()}
    if extra_meta:
        meta.update(extra_meta)
    ckpt.save_container(path, model.config.to_dict(), meta, model.state_tensors())


def load_model(path: str) -> LgNet:
    config_dict, meta, tensors = ckpt.load_container(path)
    config = LgNetConfig.from_dict(config_dict)
    model = LgNet(config, seed=0)
    model.load_state(tensors, meta.get("bn_counts", {}))
    return model
