class ExportError(ValueError):
    """Invalid export request; the CLI maps these to exit code 2."""


class LayerRangeError(ExportError):
    """Requested hidden-state layer does not exist in the encoder."""


class WordEncodingError(ExportError):
    """A word tokenized to nothing usable, or violates the word invariants."""


class MissingWordError(ExportError):
    """A requested word is absent from the static vectors file."""


class VectorFileError(ExportError):
    """The static vectors file is unusable: no rows, or bad values."""
