"""Anchor vector exporter: pretrained text representations -> anchor JSON."""

from .encoder import encode_words
from .errors import (
    ExportError,
    LayerRangeError,
    MissingWordError,
    VectorFileError,
    WordEncodingError,
)
from .static_vectors import load_static_vectors
from .words import read_word_list
from .writer import write_anchor_file

__all__ = [
    "ExportError",
    "LayerRangeError",
    "MissingWordError",
    "VectorFileError",
    "WordEncodingError",
    "encode_words",
    "load_static_vectors",
    "read_word_list",
    "write_anchor_file",
]
