"""Global co-occurrence counting and log-bilinear fitting with AdaGrad.

The co-occurrence matrix is symmetric and stored as its i <= j half;
a stored value is the full-matrix cell value, so a same-word pair at
distance d contributes 2/d to its diagonal cell (1/d per direction).
Counting runs over the vocabulary-filtered token stream: dropped
out-of-vocabulary tokens do not occupy positions.
"""

from __future__ import annotations

import struct
import sys
from collections import defaultdict

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Vocabulary
from .embio import WordEmbeddings
from .errors import (
    DataFormatError,
    EmptyCorpusError,
    EmptyVocabularyError,
    MissingWordError,
    NumericError,
)
from ._validation import as_restartable, check_in_interval, check_positive, check_rng

COOC_MAGIC = b"GLVCOOC1"
RESIDUAL_CLIP = 100.0  # clamp on the weighted residual, guards divergence


class CoocMatrix:
    """Sparse symmetric co-occurrence weights, sorted by (i, j), i <= j."""

    def __init__(self, rows, cols, values):
        self.rows = np.asarray(rows, dtype=np.uint32)
        self.cols = np.asarray(cols, dtype=np.uint32)
        self.values = np.asarray(values, dtype=np.float64)
        if not (len(self.rows) == len(self.cols) == len(self.values)):
            raise ValueError("rows, cols, values must have equal length")
        self._index = None

    @classmethod
    def from_dict(cls, weights: dict) -> "CoocMatrix":
        items = sorted(weights.items())
        rows = [i for (i, _), _ in items]
        cols = [j for (_, j), _ in items]
        values = [x for _, x in items]
        return cls(rows, cols, values)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def __len__(self):
        return self.nnz

    def get(self, i: int, j: int) -> float:
        if i > j:
            i, j = j, i
        if self._index is None:
            self._index = {
                (int(r), int(c)): float(x)
                for r, c, x in zip(self.rows, self.cols, self.values)
            }
        return self._index.get((i, j), 0.0)

    def save(self, path) -> None:
        with open(path, "wb") as out:
            out.write(COOC_MAGIC)
            for i, j, x in zip(self.rows, self.cols, self.values):
                out.write(struct.pack("<IId", i, j, x))

    @classmethod
    def load(cls, path) -> "CoocMatrix":
        with open(path, "rb") as handle:
            data = handle.read()
        if data[: len(COOC_MAGIC)] != COOC_MAGIC:
            raise DataFormatError(f"{path}: bad magic, not a GLVCOOC1 file")
        body = data[len(COOC_MAGIC):]
        record = struct.calcsize("<IId")
        if len(body) % record:
            raise DataFormatError(f"{path}: truncated at byte offset {len(data)}")
        rows, cols, values = [], [], []
        for off in range(0, len(body), record):
            i, j, x = struct.unpack_from("<IId", body, off)
            rows.append(i)
            cols.append(j)
            values.append(x)
        return cls(rows, cols, values)


def accumulate_cooccurrence(sentences, vocab: Vocabulary, window: int = 5) -> CoocMatrix:
    """Count 1/d-weighted co-occurrences within `window` of each token.

    Sentence boundaries truncate windows; a token never pairs with its
    own position.
    """
    check_positive("window", window)
    if len(vocab) == 0:
        raise EmptyVocabularyError("co-occurrence counting needs a nonempty vocabulary")
    weights: dict = defaultdict(float)
    for sentence in sentences:
        ids = vocab.encode(sentence)
        n = len(ids)
        for t in range(n):
            i = ids[t]
            for d in range(1, min(window, n - 1 - t) + 1):
                j = ids[t + d]
                if i == j:
                    weights[(i, j)] += 2.0 / d  # both directions share the cell
                else:
                    weights[(min(i, j), max(i, j))] += 1.0 / d
    return CoocMatrix.from_dict(weights)


def cooc_weight(x, x_max: float = 100.0, alpha: float = 0.75):
    """Down-weighting h(x): (x/x_max)**alpha below x_max, 1 beyond."""
    x = np.asarray(x, dtype=np.float64)
    scaled = np.minimum(x / x_max, 1.0)
    out = scaled ** alpha
    return float(out) if out.ndim == 0 else out


class GloveModel:
    """Target/context vectors, biases, and their AdaGrad accumulators."""

    def __init__(self, vocab_size, dim, rng):
        self.u = (rng.random((vocab_size, dim)) - 0.5) / dim
        self.v = (rng.random((vocab_size, dim)) - 0.5) / dim
        self.b = np.zeros(vocab_size)
        self.c = np.zeros(vocab_size)
        self.acc_u = np.ones((vocab_size, dim))
        self.acc_v = np.ones((vocab_size, dim))
        self.acc_b = np.ones(vocab_size)
        self.acc_c = np.ones(vocab_size)


def glove_loss(model: GloveModel, matrix: CoocMatrix,
               x_max: float = 100.0, alpha: float = 0.75) -> float:
    """Weighted squared error over the stored nonzero entries."""
    if matrix.nnz == 0:
        return 0.0
    if (matrix.values <= 0).any():
        bad = int(np.argmax(matrix.values <= 0))
        raise DataFormatError(
            f"corrupt co-occurrence entry ({matrix.rows[bad]}, {matrix.cols[bad]}): "
            f"value {matrix.values[bad]} is not positive"
        )
    i, j = matrix.rows.astype(np.intp), matrix.cols.astype(np.intp)
    diff = (
        np.einsum("nd,nd->n", model.u[i], model.v[j])
        + model.b[i] + model.c[j] - np.log(matrix.values)
    )
    return float(np.sum(cooc_weight(matrix.values, x_max, alpha) * diff * diff))


def _adagrad_pass(model, order, i_arr, j_arr, log_x, h_x, lr):
    """One shuffled sweep of per-entry AdaGrad updates; returns the loss."""
    u, v, b, c = model.u, model.v, model.b, model.c
    acc_u, acc_v, acc_b, acc_c = model.acc_u, model.acc_v, model.acc_b, model.acc_c
    total = 0.0
    for e in order:
        i = i_arr[e]
        j = j_arr[e]
        ui = u[i]
        vj = v[j]
        diff = ui @ vj + b[i] + c[j] - log_x[e]
        weighted = h_x[e] * diff
        total += weighted * diff
        g = 2.0 * min(max(weighted, -RESIDUAL_CLIP), RESIDUAL_CLIP)
        gu = g * vj
        gv = g * ui
        u[i] = ui - lr * gu / np.sqrt(acc_u[i])
        v[j] = vj - lr * gv / np.sqrt(acc_v[j])
        b[i] -= lr * g / np.sqrt(acc_b[i])
        c[j] -= lr * g / np.sqrt(acc_c[j])
        acc_u[i] += gu * gu
        acc_v[j] += gv * gv
        acc_b[i] += g * g
        acc_c[j] += g * g
    return total


class GloVe(BaseEstimator):
    """Log-bilinear embeddings fit to log co-occurrence counts.

    Each iteration shuffles the stored entries and applies per-entry
    AdaGrad steps (accumulators start at 1.0). The emitted embedding of
    a word is the sum of its target and context vectors. Deterministic
    for a fixed seed with workers=1.
    """

    def __init__(self, dim=300, window=5, x_max=100.0, alpha=0.75,
                 iterations=100, initial_lr=0.05, min_count=10, seed=1,
                 workers=1, verbose=0):
        self.dim = dim
        self.window = window
        self.x_max = x_max
        self.alpha = alpha
        self.iterations = iterations
        self.initial_lr = initial_lr
        self.min_count = min_count
        self.seed = seed
        self.workers = workers
        self.verbose = verbose

    def _check_params(self):
        check_positive("dim", self.dim)
        check_positive("window", self.window)
        check_positive("iterations", self.iterations)
        if self.x_max <= 0:
            raise ValueError(f"x_max must be positive, got {self.x_max!r}")
        check_in_interval("alpha", self.alpha, 0.0, 1.0, lo_open=True)

    def fit(self, X=None, y=None, vocab: Vocabulary | None = None,
            cooc: CoocMatrix | None = None):
        """Fit from a sentence stream, or from a prebuilt (vocab, cooc) pair."""
        self._check_params()
        if cooc is None:
            if X is None:
                raise ValueError("fit needs sentences or a precomputed cooc matrix")
            sentences = as_restartable(X)
            if vocab is None:
                vocab = Vocabulary.build(sentences, min_count=self.min_count)
            if len(vocab) == 0:
                raise EmptyCorpusError("no in-vocabulary tokens to train on")
            cooc = accumulate_cooccurrence(sentences, vocab, self.window)
        elif vocab is None:
            raise ValueError("a vocabulary must accompany a precomputed cooc matrix")
        if cooc.nnz == 0:
            raise EmptyCorpusError("co-occurrence matrix has no entries")
        if (cooc.values <= 0).any():
            raise DataFormatError("co-occurrence matrix has non-positive entries")
        if cooc.nnz and int(cooc.cols.max()) >= len(vocab):
            raise DataFormatError(
                f"co-occurrence matrix indexes word {int(cooc.cols.max())} "
                f"but the vocabulary has only {len(vocab)} words")

        rng = check_rng(self.seed)
        model = GloveModel(len(vocab), self.dim, rng)
        i_arr = cooc.rows.astype(np.intp)
        j_arr = cooc.cols.astype(np.intp)
        log_x = np.log(cooc.values)
        h_x = cooc_weight(cooc.values, self.x_max, self.alpha)
        h_x = np.atleast_1d(h_x)

        self.iteration_losses_ = []
        for it in range(self.iterations):
            order = rng.permutation(cooc.nnz)
            if self.workers > 1:
                total = self._parallel_pass(model, order, i_arr, j_arr, log_x, h_x)
            else:
                total = _adagrad_pass(model, order, i_arr, j_arr, log_x, h_x,
                                      self.initial_lr)
            if not np.isfinite(total):
                raise NumericError(f"loss diverged at iteration {it + 1}")
            self.iteration_losses_.append(total)
            if self.verbose:
                print(f"epoch={it + 1} tokens={cooc.nnz} "
                      f"lr={self.initial_lr:.6g} loss={total / cooc.nnz:.6g}",
                      file=sys.stderr)

        self.vocab_ = vocab
        self.cooc_ = cooc
        self.model_ = model
        self.embeddings_ = WordEmbeddings(vocab, model.u + model.v, {
            "model": "glove",
            "dim": str(self.dim),
            "window": str(self.window),
            "x_max": repr(self.x_max),
            "alpha": repr(self.alpha),
            "iterations": str(self.iterations),
            "initial_lr": repr(self.initial_lr),
            "seed": str(self.seed),
        })
        return self

    def _parallel_pass(self, model, order, i_arr, j_arr, log_x, h_x):
        """Shard entries across lock-free threads; loss sums are merged."""
        import threading

        chunks = np.array_split(order, self.workers)
        totals = [0.0] * len(chunks)

        def worker(w, chunk):
            totals[w] = _adagrad_pass(model, chunk, i_arr, j_arr, log_x, h_x,
                                      self.initial_lr)

        threads = [threading.Thread(target=worker, args=(w, chunk))
                   for w, chunk in enumerate(chunks)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        return float(sum(totals))

    def transform(self, words) -> np.ndarray:
        missing = [w for w in words if w not in self.vocab_]
        if missing:
            raise MissingWordError(missing)
        return np.stack([self.embeddings_.vector(w) for w in words])
