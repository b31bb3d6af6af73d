"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, data/format
problems exit 2, numeric failures exit 3.
"""


class VektorError(Exception):
    """Base class for all toolkit errors."""


class DataFormatError(VektorError):
    """Malformed input: bad headers, dimension mismatches, parse failures,
    corpus/teacher misalignment. Messages carry the offending location."""


class EmptyVocabularyError(VektorError):
    """An operation that needs at least one vocabulary word got none."""


class EmptyCorpusError(VektorError):
    """A trainer was asked to fit on a corpus with no usable tokens."""


class MissingWordError(VektorError):
    """A query word is not in the vocabulary."""

    def __init__(self, words):
        self.words = list(words) if not isinstance(words, str) else [words]
        super().__init__("missing from vocabulary: " + ", ".join(self.words))


class ZeroVectorError(VektorError):
    """A cosine-based operation received an all-zero vector."""


class InsufficientDataError(VektorError):
    """Too few usable items to compute the requested statistic."""


class UndefinedCorrelationError(VektorError):
    """A correlation was requested over a constant (zero-variance) input."""


class NumericError(VektorError):
    """Training produced a non-finite value (overflow or divergence)."""
