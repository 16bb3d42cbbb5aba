"""Text anchor vectors: JSON persistence, validation, and seeded fallbacks.

An anchor file is a JSON object:

    {
      "format_version": 1,
      "dim": 768,
      "source": "free-form provenance string",
      "anchors": {"yes": [768 floats], "no": [...], ...}
    }

The silence class never has an anchor; asking for one is a programming error,
not a lookup miss.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .rng import word_rng

FORMAT_VERSION = 1


class AnchorFormatError(ValueError):
    """Malformed anchor file: bad version, dim mismatch, non-finite entries."""


class AnchorLookupError(KeyError):
    """A requested word has no anchor."""


class SilenceAnchorError(RuntimeError):
    """Silence has no text form; requesting its anchor violates the contract."""


class AnchorStore:
    """Immutable word -> vector mapping, all vectors the same dimension."""

    def __init__(self, anchors: dict[str, np.ndarray], dim: int, source: str = ""):
        self.dim = int(dim)
        self.source = source
        self._anchors = {w: np.asarray(v, dtype=np.float64) for w, v in anchors.items()}
        for word, vec in self._anchors.items():
            if vec.shape != (self.dim,):
                raise AnchorFormatError(
                    f"anchor '{word}': expected {self.dim} values, got {vec.shape}"
                )

    def __len__(self) -> int:
        return len(self._anchors)

    def __contains__(self, word: str) -> bool:
        return word in self._anchors

    def words(self) -> list[str]:
        return sorted(self._anchors)

    def get(self, word: str) -> np.ndarray:
        if word == "silence":
            raise SilenceAnchorError("silence has no anchor vector; callers must exclude it")
        if word not in self._anchors:
            raise AnchorLookupError(f"no anchor for word '{word}'")
        # copy so callers cannot mutate the store
        return self._anchors[word].copy()

    def matrix(self, words: list[str]) -> np.ndarray:
        """Stack anchors for `words` into one (len(words), dim) array."""
        return np.stack([self.get(w) for w in words], axis=0)

    def require_words(self, words) -> None:
        """Fail listing every non-silence word that has no anchor."""
        missing = sorted(
            w for w in set(words) if w != "silence" and w not in self._anchors
        )
        if missing:
            raise AnchorLookupError(f"anchors missing for words: {', '.join(missing)}")


def _reject_duplicate_keys(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise AnchorFormatError(f"duplicate word '{key}' in anchor file")
        obj[key] = value
    return obj


def load_anchor_file(path: str) -> AnchorStore:
    """Load and fully validate an anchor JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh, object_pairs_hook=_reject_duplicate_keys)
        except json.JSONDecodeError as exc:
            raise AnchorFormatError(f"not valid JSON: {exc}") from exc
    return parse_anchor_doc(doc)


def parse_anchor_doc(doc) -> AnchorStore:
    if not isinstance(doc, dict):
        raise AnchorFormatError("top level must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise AnchorFormatError(
            f"format_version: expected {FORMAT_VERSION}, got {version!r}"
        )
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim <= 0:
        raise AnchorFormatError(f"dim: expected a positive integer, got {dim!r}")
    anchors = doc.get("anchors")
    if not isinstance(anchors, dict):
        raise AnchorFormatError("anchors: expected an object mapping words to vectors")

    parsed: dict[str, np.ndarray] = {}
    for word, vec in anchors.items():
        if not isinstance(word, str) or not word:
            raise AnchorFormatError(f"anchor key {word!r} is not a non-empty string")
        if not isinstance(vec, list) or len(vec) != dim:
            got = len(vec) if isinstance(vec, list) else type(vec).__name__
            raise AnchorFormatError(f"anchor '{word}': expected {dim} floats, got {got}")
        arr = np.asarray(vec, dtype=np.float64)
        if arr.dtype.kind != "f" and arr.dtype.kind != "i":
            raise AnchorFormatError(f"anchor '{word}': non-numeric entries")
        arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise AnchorFormatError(f"anchor '{word}': non-finite value at index {bad}")
        parsed[word] = arr
    return AnchorStore(parsed, dim=dim, source=str(doc.get("source", "")))


def save_anchor_file(path: str, store: AnchorStore) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "dim": store.dim,
        "source": store.source,
        "anchors": {w: [float(v) for v in store._anchors[w]] for w in store.words()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def fallback_anchors(words, dim: int = 768, seed: int = 0) -> AnchorStore:
    """Unit-norm standard-normal anchors, one Philox stream per (seed, word).

    The counter-based generator makes the vectors reproducible across
    platforms; the same (seed, word) pair always yields the same vector
    regardless of how many other words are requested.
    """
    anchors: dict[str, np.ndarray] = {}
    for word in words:
        if word == "silence":
            continue
        vec = word_rng(seed, word).standard_normal(dim)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not math.isfinite(norm):
            raise RuntimeError(f"degenerate fallback vector for '{word}'")
        anchors[word] = vec / norm
    return AnchorStore(anchors, dim=dim, source=f"fallback:philox:seed={seed}")
