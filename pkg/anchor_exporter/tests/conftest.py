import os

import pytest

V1_KEYWORDS = ["yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    """A miniature BERT-style encoder saved locally, so no network is needed.

    Two layers, hidden size 16, and a vocabulary covering the ten v1
    keywords plus a couple of multi-piece words.
    """
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    d = tmp_path_factory.mktemp("tiny_encoder")
    vocab = (
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        + V1_KEYWORDS
        + ["play", "##ing", "##s", "turn"]
    )
    vocab_file = d / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n", encoding="utf-8")

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=32,
    )
    torch.manual_seed(0)
    BertModel(config).save_pretrained(d)
    BertTokenizer(str(vocab_file)).save_pretrained(d)
    return str(d)


@pytest.fixture()
def word_file(tmp_path):
    def write(words, name="words.txt"):
        path = tmp_path / name
        path.write_text("\n".join(words) + "\n", encoding="utf-8")
        return str(path)

    return write
