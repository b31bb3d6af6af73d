"""Corpus streaming, vocabulary construction and negative-sampling tables.

A corpus is plain UTF-8 text, one sentence per line, optionally
gzip-compressed (detected by magic bytes, not extension). Tokens are
maximal runs of non-whitespace; no case folding or punctuation stripping
is ever applied.
"""

from __future__ import annotations

import gzip
from collections import Counter
from typing import Iterable, Iterator

import numpy as np

from .errors import DataFormatError, EmptyVocabularyError
from ._validation import check_in_interval, check_positive

GZIP_MAGIC = b"\x1f\x8b"


def tokenize(line: str) -> list[str]:
    """Split a line into tokens on whitespace. Empty lines give []."""
    return line.split()


def _open_maybe_gzip(path):
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == GZIP_MAGIC:
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


class CorpusReader:
    """Restartable sentence stream over a corpus file.

    Each iteration re-opens the file, so the same reader can drive
    multi-epoch training.
    """

    def __init__(self, path):
        self.path = str(path)

    def __iter__(self) -> Iterator[list[str]]:
        try:
            with _open_maybe_gzip(self.path) as handle:
                for line in handle:
                    yield tokenize(line)
        except UnicodeDecodeError as exc:
            raise DataFormatError(
                f"{self.path}: invalid UTF-8 at byte offset {exc.start}"
            ) from exc

    def __repr__(self):
        return f"CorpusReader({self.path!r})"


class Vocabulary:
    """Word <-> dense-id map with occurrence counts.

    Ids run 0..len-1 in descending count order (ties broken
    lexicographically), so builds are deterministic. ``total_tokens``
    counts only retained words. Instances are immutable after
    construction and safe to share across threads.
    """

    def __init__(self, words: list[str], counts, min_count: int = 1):
        if len(words) != len(counts):
            raise ValueError("words and counts must have equal length")
        self.words = list(words)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.min_count = min_count
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        self.total_tokens = int(self.counts.sum())

    @classmethod
    def build(cls, sentences: Iterable[list[str]], min_count: int = 10) -> "Vocabulary":
        """Count a sentence stream and keep words with count >= min_count."""
        check_positive("min_count", min_count)
        freq = Counter()
        for sentence in sentences:
            freq.update(sentence)
        kept = sorted(
            ((w, c) for w, c in freq.items() if c >= min_count),
            key=lambda wc: (-wc[1], wc[0]),
        )
        words = [w for w, _ in kept]
        counts = [c for _, c in kept]
        return cls(words, counts, min_count=min_count)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def word_id(self, word: str) -> int:
        return self.index[word]

    def word_at(self, word_id: int) -> str:
        return self.words[word_id]

    def count(self, word: str) -> int:
        return int(self.counts[self.index[word]])

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to ids, dropping out-of-vocabulary tokens."""
        index = self.index
        return [index[t] for t in tokens if t in index]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.words[i] for i in ids]

    def save(self, path) -> None:
        """Write `#tokens=<n>` header plus one `word<TAB>count` line per id."""
        with open(path, "w", encoding="utf-8") as out:
            out.write(f"#tokens={self.total_tokens}\n")
            for word, count in zip(self.words, self.counts):
                out.write(f"{word}\t{count}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words, counts = [], []
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline()
            if not header.startswith("#tokens="):
                raise DataFormatError(f"{path}:1: expected '#tokens=<n>' header")
            try:
                declared_total = int(header[len("#tokens="):].strip())
            except ValueError:
                raise DataFormatError(f"{path}:1: bad token count in header") from None
            for lineno, line in enumerate(handle, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataFormatError(f"{path}:{lineno}: expected 'word<TAB>count'")
                try:
                    counts.append(int(parts[1]))
                except ValueError:
                    raise DataFormatError(f"{path}:{lineno}: bad count {parts[1]!r}") from None
                words.append(parts[0])
        vocab = cls(words, counts, min_count=min(counts, default=0))
        if vocab.total_tokens != declared_total:
            raise DataFormatError(
                f"{path}: header says {declared_total} tokens, lines sum to {vocab.total_tokens}"
            )
        return vocab


def build_vocabulary(sentences, min_count: int = 10) -> Vocabulary:
    """Functional alias for :meth:`Vocabulary.build`."""
    return Vocabulary.build(sentences, min_count=min_count)


class NegativeSamplingTable:
    """Smoothed unigram distribution for drawing negative samples.

    P(w) = count(w)**power / sum(count**power). Stored as a cumulative
    distribution so draws are a binary search. Immutable once built.
    """

    def __init__(self, vocab: Vocabulary, power: float = 0.75):
        check_in_interval("power", power, 0.0, 1.0, lo_open=True)
        if len(vocab) == 0:
            raise EmptyVocabularyError("cannot build a sampling table from an empty vocabulary")
        weights = vocab.counts.astype(np.float64) ** power
        cumulative = np.cumsum(weights)
        cumulative /= cumulative[-1]
        cumulative[-1] = 1.0
        self.power = power
        self.cumulative = cumulative

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(self.cumulative, prepend=0.0)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        """Draw word ids; `size` may be an int or a shape tuple."""
        return np.searchsorted(self.cumulative, rng.random(size), side="right")


def build_sampling_table(vocab: Vocabulary, power: float = 0.75) -> NegativeSamplingTable:
    return NegativeSamplingTable(vocab, power=power)
