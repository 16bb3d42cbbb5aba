"""Anchor vectors from a static embedding file ("word v1 v2 ... vD" lines)."""

from __future__ import annotations

import os

import numpy as np

from .errors import MissingWordError, VectorFileError


def load_static_vectors(
    words: list[str], path: str
) -> tuple[dict[str, np.ndarray], int, str]:
    """Pull the requested words out of a whitespace-separated vectors file.

    The dimensionality is inferred from the first parseable row. Rows whose
    leading token contains spaces (some distributions carry phrase tokens)
    can never match a requested word and are skipped. The file is scanned
    once; only requested rows are materialized.

    Raises:
        VectorFileError: no parseable rows, a bad row for a requested word,
            or non-finite values.
        MissingWordError: any requested word absent, listing all of them.
    """
    wanted = set(words)
    found: dict[str, np.ndarray] = {}
    dim: int | None = None

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            if lineno == 1 and len(parts) == 2 and all(t.isdigit() for t in parts):
                continue  # "count dim" header convention
            if dim is None:
                try:
                    dim = len([float(t) for t in parts[1:]])
                except ValueError:
                    continue  # header or phrase-token row, keep looking
            word = parts[0]
            if word not in wanted or word in found:
                continue
            try:
                vec = np.array([float(t) for t in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise VectorFileError(f"line {lineno} ('{word}'): {exc}") from exc
            if vec.size != dim:
                raise VectorFileError(
                    f"line {lineno} ('{word}'): expected {dim} values, got {vec.size}"
                )
            if not np.all(np.isfinite(vec)):
                raise VectorFileError(f"line {lineno} ('{word}'): non-finite value")
            found[word] = vec
            if len(found) == len(wanted):
                break

    if dim is None:
        raise VectorFileError(f"no vector rows found in {path}")
    missing = sorted(wanted - set(found))
    if missing:
        raise MissingWordError("words missing from vectors file: " + ", ".join(missing))
    return found, dim, os.path.basename(path)
