"""Embedding persistence, nearest-neighbor queries and 2-D projection.

Two interchange formats:

* text — word2vec-compatible: a `<|V|> <d>` header line, then one
  `word v1 ... vd` row per word (8 significant digits, enough to
  round-trip within 1e-6 per element). Metadata is appended as trailing
  `#key=value` comment lines.
* binary — magic ``VEKTOR01``, little-endian u32 |V| and d, then
  length-prefixed UTF-8 words each followed by d float32 values, then a
  length-prefixed metadata block. Round trips are bit-exact.

Matrices are held as float32 (what the binary format stores); all
arithmetic on them is done in float64.
"""

from __future__ import annotations

import struct

import numpy as np

from .corpus import Vocabulary
from .errors import (
    DataFormatError,
    InsufficientDataError,
    MissingWordError,
    ZeroVectorError,
)
from ._validation import check_positive

BINARY_MAGIC = b"VEKTOR01"


class WordEmbeddings:
    """A vocabulary plus a dense |V| x d matrix.

    The universal output of every trainer/converter and the input of
    every evaluator. Immutable by convention; queries are pure and safe
    to run concurrently.
    """

    def __init__(self, vocab: Vocabulary, matrix, metadata: dict[str, str] | None = None):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError("matrix must be 2-D")
        if matrix.shape[0] != len(vocab):
            raise ValueError(
                f"matrix has {matrix.shape[0]} rows for {len(vocab)} vocabulary words"
            )
        if matrix.size and not np.isfinite(matrix).all():
            raise ValueError("matrix contains non-finite entries")
        self.vocab = vocab
        self.matrix = matrix
        self.metadata = dict(metadata or {})
        self._unit_rows = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, word):
        return word in self.vocab

    def vector(self, word: str) -> np.ndarray:
        if word not in self.vocab:
            raise MissingWordError(word)
        return self.matrix[self.vocab.word_id(word)]

    def unit_rows(self) -> np.ndarray:
        """Float64 row-normalized matrix, cached. Zero rows stay zero."""
        if self._unit_rows is None:
            rows = self.matrix.astype(np.float64)
            norms = np.linalg.norm(rows, axis=1, keepdims=True)
            np.divide(rows, norms, out=rows, where=norms > 0)
            self._unit_rows = rows
        return self._unit_rows


def save_text(emb: WordEmbeddings, path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write(f"{len(emb)} {emb.dim}\n")
        for i, word in enumerate(emb.vocab.words):
            values = " ".join("%.8g" % v for v in emb.matrix[i])
            out.write(f"{word} {values}\n")
        for key, value in emb.metadata.items():
            out.write(f"#{key}={value}\n")


def load_text(path) -> WordEmbeddings:
    words: list[str] = []
    rows: list[list[float]] = []
    metadata: dict[str, str] = {}
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise DataFormatError(f"{path}:1: expected '<vocab_size> <dim>' header")
        try:
            n_words, dim = int(header[0]), int(header[1])
        except ValueError:
            raise DataFormatError(f"{path}:1: non-integer header fields") from None
        for lineno, line in enumerate(handle, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#") and "=" in line:
                key, _, value = line[1:].partition("=")
                metadata[key] = value
                continue
            parts = line.split(" ")
            if len(parts) != dim + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}"
                )
            word = parts[0]
            if word in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate word {word!r}")
            seen.add(word)
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric value") from None
            words.append(word)
    if len(words) != n_words:
        raise DataFormatError(
            f"{path}: header declares {n_words} words, file has {len(words)}"
        )
    vocab = Vocabulary(words, np.zeros(len(words), dtype=np.int64), min_count=0)
    matrix = np.asarray(rows, dtype=np.float32).reshape(len(words), dim)
    return WordEmbeddings(vocab, matrix, metadata)


def save_binary(emb: WordEmbeddings, path) -> None:
    with open(path, "wb") as out:
        out.write(BINARY_MAGIC)
        out.write(struct.pack("<II", len(emb), emb.dim))
        for i, word in enumerate(emb.vocab.words):
            encoded = word.encode("utf-8")
            out.write(struct.pack("<I", len(encoded)))
            out.write(encoded)
            out.write(emb.matrix[i].astype("<f4").tobytes())
        out.write(struct.pack("<I", len(emb.metadata)))
        for key, value in emb.metadata.items():
            for text in (key, value):
                encoded = text.encode("utf-8")
                out.write(struct.pack("<I", len(encoded)))
                out.write(encoded)


def load_binary(path) -> WordEmbeddings:
    with open(path, "rb") as handle:
        data = handle.read()

    def take(n, what):
        nonlocal offset
        if offset + n > len(data):
            raise DataFormatError(
                f"{path}: truncated while reading {what} at byte offset {offset}"
            )
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    offset = 0
    if take(len(BINARY_MAGIC), "magic") != BINARY_MAGIC:
        raise DataFormatError(f"{path}: bad magic, not a VEKTOR01 file")
    n_words, dim = struct.unpack("<II", take(8, "header"))
    words = []
    matrix = np.empty((n_words, dim), dtype=np.float32)
    for i in range(n_words):
        (word_len,) = struct.unpack("<I", take(4, f"word {i} length"))
        words.append(take(word_len, f"word {i}").decode("utf-8"))
        matrix[i] = np.frombuffer(take(4 * dim, f"row {i}"), dtype="<f4")
    (n_meta,) = struct.unpack("<I", take(4, "metadata count"))
    metadata = {}
    for i in range(n_meta):
        (key_len,) = struct.unpack("<I", take(4, f"metadata key {i} length"))
        key = take(key_len, f"metadata key {i}").decode("utf-8")
        (val_len,) = struct.unpack("<I", take(4, f"metadata value {i} length"))
        metadata[key] = take(val_len, f"metadata value {i}").decode("utf-8")
    vocab = Vocabulary(words, np.zeros(n_words, dtype=np.int64), min_count=0)
    return WordEmbeddings(vocab, matrix, metadata)


def load_embeddings(path) -> WordEmbeddings:
    """Load either format, sniffing the binary magic."""
    with open(path, "rb") as handle:
        magic = handle.read(len(BINARY_MAGIC))
    if magic == BINARY_MAGIC:
        return load_binary(path)
    return load_text(path)


def nearest_neighbors(emb: WordEmbeddings, query, k: int = 10) -> list[tuple[str, float]]:
    """Top-k words by cosine similarity to a word or a raw vector.

    A word query excludes itself from the results. Ties break by
    vocabulary id; k is clamped to the number of candidates. Zero-norm
    matrix rows never rank (their score is -inf).
    """
    check_positive("k", k)
    exclude = None
    if isinstance(query, str):
        if query not in emb.vocab:
            raise MissingWordError(query)
        exclude = emb.vocab.word_id(query)
        target = emb.matrix[exclude].astype(np.float64)
    else:
        target = np.asarray(query, dtype=np.float64)
        if target.shape != (emb.dim,):
            raise ValueError(f"query vector must have dim {emb.dim}")
    norm = np.linalg.norm(target)
    if norm == 0.0:
        raise ZeroVectorError("query vector has zero norm")
    scores = emb.unit_rows() @ (target / norm)
    row_norms = np.linalg.norm(emb.matrix.astype(np.float64), axis=1)
    scores[row_norms == 0.0] = -np.inf
    if exclude is not None:
        scores[exclude] = -np.inf
    order = np.lexsort((np.arange(len(scores)), -scores))
    n_candidates = len(scores) - (1 if exclude is not None else 0)
    top = order[: min(k, n_candidates)]
    return [(emb.vocab.word_at(int(i)), float(scores[i])) for i in top]


class ProjectionResult:
    """2-D coordinates for a word selection plus the variance captured."""

    def __init__(self, words, coordinates, explained_variance, components, missing):
        self.words = words
        self.coordinates = coordinates
        self.explained_variance = explained_variance
        self.components = components
        self.missing = missing

    def __iter__(self):
        for word, (x, y) in zip(self.words, self.coordinates):
            yield word, float(x), float(y)


def _fix_sign(component: np.ndarray) -> np.ndarray:
    for value in component:
        if abs(value) > 1e-12:
            return component if value > 0 else -component
    return component


def _power_iteration(cov, start, tol=1e-9, max_iter=1000):
    v = start / np.linalg.norm(start)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm < 1e-300:  # null space: any unit vector is an eigenvector
            return v, 0.0
        w /= norm
        if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
            v = w
            break
        v = w
    return v, float(v @ cov @ v)


def pca_project(emb: WordEmbeddings, words) -> ProjectionResult:
    """Project selected word vectors onto their top-2 principal components.

    Components come from power iteration with deflation on the covariance
    of the mean-centered selection; the sign convention (first nonzero
    coordinate positive) keeps output stable across runs. Out-of-vocabulary
    words are skipped and reported in ``missing``.
    """
    selected, missing, seen = [], [], set()
    for word in words:
        if word in seen:
            continue
        seen.add(word)
        (selected if word in emb.vocab else missing).append(word)
    if len(selected) < 3:
        raise InsufficientDataError(
            f"projection needs at least 3 distinct in-vocabulary words, got {len(selected)}"
        )
    rows = np.stack([emb.vector(w).astype(np.float64) for w in selected])
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / (len(selected) - 1)

    rng = np.random.default_rng(0)  # fixed: projection must be reproducible
    components, variances = [], []
    for _ in range(2):
        start = rng.standard_normal(emb.dim)
        for prev in components:  # keep the start out of recovered subspace
            start -= (start @ prev) * prev
        component, variance = _power_iteration(cov, start)
        component = _fix_sign(component)
        cov = cov - variance * np.outer(component, component)
        components.append(component)
        variances.append(variance)
    components = np.stack(components)
    coordinates = centered @ components.T
    return ProjectionResult(selected, coordinates, np.array(variances), components, missing)


def average_embeddings(a: WordEmbeddings, b: WordEmbeddings, intersect: bool = False) -> WordEmbeddings:
    """Element-wise mean of two embeddings, word by word.

    Default mode requires identical vocabularies (same words, same order)
    and dimensions; --intersect keeps only shared words, in a's id order.
    """
    if a.dim != b.dim:
        raise DataFormatError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if intersect:
        words = [w for w in a.vocab.words if w in b.vocab]
        if not words:
            raise DataFormatError("no shared words between the two vocabularies")
        counts = [a.vocab.count(w) for w in words]
        rows_a = np.stack([a.vector(w) for w in words]).astype(np.float64)
        rows_b = np.stack([b.vector(w) for w in words]).astype(np.float64)
        vocab = Vocabulary(words, counts, min_count=a.vocab.min_count)
        mean = (rows_a + rows_b) / 2.0
    else:
        if a.vocab.words != b.vocab.words:
            raise DataFormatError(
                "vocabularies differ; re-run with intersect mode to keep shared words"
            )
        vocab = a.vocab
        mean = (a.matrix.astype(np.float64) + b.matrix.astype(np.float64)) / 2.0
    return WordEmbeddings(vocab, mean.astype(np.float32), {"model": "average"})
