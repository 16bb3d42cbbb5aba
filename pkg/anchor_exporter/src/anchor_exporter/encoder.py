"""Per-word anchor vectors from one layer of a pretrained contextual encoder."""

from __future__ import annotations

import numpy as np

from .errors import LayerRangeError, WordEncodingError


def encode_words(
    words: list[str],
    model_name_or_dir: str,
    layer: int,
    batch_size: int = 32,
) -> tuple[dict[str, np.ndarray], int, str]:
    """Encode each word on its own and mean-pool its subword rows at one layer.

    Layer 0 is the embedding output, layer k the output of the k-th encoder
    block. Sequence delimiters and padding never enter the pool; the mean
    runs over exactly the word's own subword tokens. Inference only, so the
    result is deterministic for fixed weights.

    Returns:
        (anchors, dim, source) where anchors maps each word to a float64
        vector of length dim.

    Raises:
        LayerRangeError: layer outside 0..num_hidden_layers.
        WordEncodingError: some word leaves no usable tokens (lists them all).
    """
    import torch
    from transformers import AutoModel, AutoTokenizer
    from transformers import logging as hf_logging

    hf_logging.set_verbosity_error()
    tokenizer = AutoTokenizer.from_pretrained(model_name_or_dir)
    model = AutoModel.from_pretrained(model_name_or_dir, output_hidden_states=True)
    model.eval()

    n_layers = int(model.config.num_hidden_layers)
    if not 0 <= layer <= n_layers:
        raise LayerRangeError(
            f"layer {layer} out of range: this encoder has hidden states "
            f"0..{n_layers} (0 is the embedding output)"
        )

    enc = tokenizer(
        list(words),
        padding=True,
        return_special_tokens_mask=True,
        return_tensors="pt",
    )
    usable = enc["special_tokens_mask"] == 0
    empty = [w for w, row in zip(words, usable) if not bool(row.any())]
    if empty:
        raise WordEncodingError("no usable tokens for: " + ", ".join(sorted(empty)))

    anchors: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for start in range(0, len(words), batch_size):
            stop = start + batch_size
            out = model(
                input_ids=enc["input_ids"][start:stop],
                attention_mask=enc["attention_mask"][start:stop],
            )
            hidden = out.hidden_states[layer]
            for i, word in enumerate(words[start:stop]):
                rows = hidden[i][usable[start + i]]
                anchors[word] = rows.mean(dim=0).double().numpy()

    dim = int(model.config.hidden_size)
    return anchors, dim, f"{model_name_or_dir}/layer{layer}"
