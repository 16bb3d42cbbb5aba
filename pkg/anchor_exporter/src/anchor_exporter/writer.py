"""Anchor file writer: the JSON format the spotting pipeline trains from."""

from __future__ import annotations

import json

import numpy as np

from .errors import ExportError

FORMAT_VERSION = 1


def write_anchor_file(
    path: str, anchors: dict[str, np.ndarray], dim: int, source: str
) -> None:
    """Write `{format_version, dim, source, anchors}` as canonical JSON.

    Keys are sorted and floats serialized by repr, so identical inputs yield
    byte-identical files. Refuses vectors of the wrong length or with
    non-finite values: a written file must always load cleanly downstream.
    """
    payload: dict[str, list[float]] = {}
    for word, vec in anchors.items():
        arr = np.asarray(vec, dtype=np.float64)
        if arr.shape != (dim,):
            raise ExportError(f"anchor '{word}': expected {dim} values, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ExportError(f"anchor '{word}': non-finite value")
        payload[word] = [float(x) for x in arr]

    doc = {
        "format_version": FORMAT_VERSION,
        "dim": dim,
        "source": source,
        "anchors": payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
