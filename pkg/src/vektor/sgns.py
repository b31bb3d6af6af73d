"""Negative-sampling SGD trainers: Skip-gram, CBOW and the subword variant.

All three share one loss: for a (center, predicted) pair and k sampled
noise words,

    loss = -log sigmoid(v_pred . h) - sum_i log sigmoid(-v_neg_i . h)

where h is the center word's input vector (skip-gram), the mean of the
context input vectors (CBOW), or the sum of the center word's character
n-gram vectors (subword mode). Updates are plain SGD with a linearly
decaying learning rate.

The step functions below are the exact functions the trainers compose,
so gradient tests on them cover training itself.
"""

from __future__ import annotations

import sys

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from .corpus import NegativeSamplingTable, Vocabulary
from .embio import WordEmbeddings
from .errors import EmptyCorpusError, MissingWordError, NumericError
from ._validation import as_restartable, check_positive, check_rng

LR_FLOOR_FRACTION = 1e-4  # final lr = initial_lr * this

FNV_OFFSET = 2166136261
FNV_PRIME = 16777619


def fnv1a(data: bytes) -> int:
    """32-bit FNV-1a hash."""
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & 0xFFFFFFFF
    return h


def extract_ngrams(word: str, min_n: int = 3, max_n: int = 6) -> list[str]:
    """Character n-grams of the boundary-marked form `<word>`.

    Every window of length min_n..max_n is kept (duplicates included);
    the full boundary-marked token is always present, even when longer
    than max_n.
    """
    if not word:
        raise ValueError("word must be nonempty")
    marked = f"<{word}>"
    length = len(marked)
    grams = []
    for n in range(min_n, min(max_n, length) + 1):
        for i in range(length - n + 1):
            grams.append(marked[i:i + n])
    if not min_n <= length <= max_n:
        grams.append(marked)
    return grams


def ngram_bucket_ids(word: str, min_n: int, max_n: int, bucket_count: int) -> np.ndarray:
    """Hash a word's n-grams (whole token included) into bucket indices."""
    check_positive("bucket_count", bucket_count)
    grams = extract_ngrams(word, min_n, max_n)
    return np.array(
        [fnv1a(g.encode("utf-8")) % bucket_count for g in grams], dtype=np.int64
    )


class SgnsModel:
    """Parameter matrices for one trainer run.

    ``input`` holds one row per vocabulary word; in subword mode it is
    extended with ``bucket_count`` n-gram rows, and each word's
    representation is the sum over its constituent rows (listed in
    ``word_ngram_rows``, already offset past the vocabulary block).
    ``output`` holds the prediction-side vectors.
    """

    def __init__(self, vocab_size, dim, mode, rng, bucket_count=0,
                 word_ngram_rows=None):
        if mode not in ("skipgram", "cbow", "fasttext"):
            raise ValueError(f"unknown mode {mode!r}")
        extra = bucket_count if mode == "fasttext" else 0
        self.input = (rng.random((vocab_size + extra, dim)) - 0.5) / dim
        self.output = np.zeros((vocab_size, dim))
        self.mode = mode
        self.vocab_size = vocab_size
        self.bucket_count = bucket_count
        self.word_ngram_rows = word_ngram_rows

    def center_vector(self, center: int) -> np.ndarray:
        if self.mode == "fasttext":
            return self.input[self.word_ngram_rows[center]].sum(axis=0)
        return self.input[center]


def _scored_step(model, h, target, negatives, lr):
    """Shared scoring/update core; returns (loss, grad_h).

    Output rows are updated here against the pre-update h; the caller
    distributes grad_h to whichever input rows produced h.
    """
    idx = np.empty(len(negatives) + 1, dtype=np.int64)
    idx[0] = target
    idx[1:] = negatives
    rows = model.output[idx]
    scores = rows @ h
    if not np.isfinite(scores).all():
        bad = idx[int(np.argmax(~np.isfinite(scores)))]
        raise NumericError(f"non-finite score against output row {bad}")
    g = expit(scores)
    g[0] -= 1.0  # d loss / d score
    loss = np.logaddexp(0.0, -scores[0]) + np.logaddexp(0.0, scores[1:]).sum()
    grad_h = g @ rows
    np.add.at(model.output, idx, np.multiply.outer(-lr * g, h))
    return float(loss), grad_h


def sgns_step(model: SgnsModel, center: int, context: int, negatives, lr: float) -> float:
    """One skip-gram pair update; returns the pre-update loss.

    In subword mode the center representation is the sum of its n-gram
    rows and the gradient is added to every constituent row.
    """
    h = model.center_vector(center)
    loss, grad_h = _scored_step(model, h, context, negatives, lr)
    if model.mode == "fasttext":
        np.add.at(model.input, model.word_ngram_rows[center], -lr * grad_h)
    else:
        model.input[center] = h - lr * grad_h
    return loss


def cbow_step(model: SgnsModel, context, target: int, negatives, lr: float) -> float:
    """One CBOW update: the averaged window predicts the target word.

    Each context row receives an equal share of the hidden gradient.
    An empty context is a no-op with loss 0.
    """
    context = np.asarray(context, dtype=np.int64)
    if context.size == 0:
        return 0.0
    h = model.input[context].mean(axis=0)
    loss, grad_h = _scored_step(model, h, target, negatives, lr)
    np.add.at(model.input, context, -lr * grad_h / context.size)
    return loss


def _draw_negatives(table, rng, n_pairs, k, targets):
    """Bulk-draw negatives per pair, redrawing collisions with the target."""
    negs = table.sample(rng, (n_pairs, k))
    for row, target in enumerate(targets):
        while True:
            hits = negs[row] == target
            if not hits.any():
                break
            negs[row, hits] = table.sample(rng, int(hits.sum()))
    return negs


class _EpochStats:
    __slots__ = ("loss_sum", "pairs", "tokens", "lr")

    def __init__(self):
        self.loss_sum = 0.0
        self.pairs = 0
        self.tokens = 0
        self.lr = 0.0


def _lr_at(initial_lr, processed, total):
    frac = min(processed / total, 1.0) if total else 1.0
    return initial_lr * (1.0 - (1.0 - LR_FLOOR_FRACTION) * frac)


def _train_sentence_sg(model, ids, table, rng, k, window, initial_lr,
                       processed, total_updates, stats):
    n = len(ids)
    radii = rng.integers(1, window + 1, size=n)
    spans = []
    targets = []
    for t in range(n):
        lo = max(0, t - radii[t])
        hi = min(n, t + radii[t] + 1)
        span = [j for j in range(lo, hi) if j != t]
        spans.append(span)
        targets.extend(ids[j] for j in span)
    negs = _draw_negatives(table, rng, len(targets), k, targets)
    pair = 0
    for t in range(n):
        lr = _lr_at(initial_lr, processed + t, total_updates)
        for j in spans[t]:
            stats.loss_sum += sgns_step(model, ids[t], ids[j], negs[pair], lr)
            pair += 1
        stats.lr = lr
    stats.pairs += pair
    stats.tokens += n
    return n


def _train_sentence_cbow(model, ids, table, rng, k, window, initial_lr,
                         processed, total_updates, stats):
    n = len(ids)
    radii = rng.integers(1, window + 1, size=n)
    negs = _draw_negatives(table, rng, n, k, ids)
    for t in range(n):
        lr = _lr_at(initial_lr, processed + t, total_updates)
        lo = max(0, t - radii[t])
        hi = min(n, t + radii[t] + 1)
        context = ids[lo:t] + ids[t + 1:hi]
        if context:
            stats.loss_sum += cbow_step(model, context, ids[t], negs[t], lr)
            stats.pairs += 1
        stats.lr = lr
    stats.tokens += n
    return n


class Word2Vec(BaseEstimator):
    """Skip-gram or CBOW word embeddings trained with negative sampling.

    Parameters follow the usual conventions: `dim` embedding size,
    `window` max context radius (the effective radius is drawn uniformly
    from [1, window] per position), `negatives` noise words per update,
    linear lr decay from `initial_lr` to 1e-4 of it over all expected
    token updates. Training is bit-reproducible for a fixed seed with
    workers=1; with more workers the matrices are updated lock-free and
    runs are only statistically equivalent.

    Attributes after fit: `vocab_`, `model_`, `embeddings_`,
    `epoch_losses_` (mean per-pair loss per epoch).
    """

    _mode_choices = ("skipgram", "cbow")

    def __init__(self, dim=300, window=5, negatives=5, epochs=10,
                 initial_lr=0.025, mode="skipgram", min_count=10,
                 sampling_power=0.75, seed=1, workers=1, verbose=0):
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.initial_lr = initial_lr
        self.mode = mode
        self.min_count = min_count
        self.sampling_power = sampling_power
        self.seed = seed
        self.workers = workers
        self.verbose = verbose

    def _check_params(self):
        check_positive("dim", self.dim)
        check_positive("window", self.window)
        check_positive("negatives", self.negatives)
        check_positive("epochs", self.epochs, minimum=0)
        if self.mode not in self._mode_choices:
            raise ValueError(f"mode must be one of {self._mode_choices}, got {self.mode!r}")

    def _make_model(self, vocab, rng):
        return SgnsModel(len(vocab), self.dim, self.mode, rng)

    def _sentence_trainer(self):
        return _train_sentence_cbow if self.mode == "cbow" else _train_sentence_sg

    def _finalize(self, vocab, model):
        """Emitted embeddings are the input rows."""
        return model.input[: len(vocab)].copy()

    def _metadata(self, extra=None):
        meta = {
            "model": getattr(self, "_model_name", self.mode),
            "dim": str(self.dim),
            "window": str(self.window),
            "negatives": str(self.negatives),
            "epochs": str(self.epochs),
            "initial_lr": repr(self.initial_lr),
            "seed": str(self.seed),
        }
        meta.update(extra or {})
        return meta

    def fit(self, X, y=None, vocab: Vocabulary | None = None):
        """Train on a restartable stream of token lists.

        A vocabulary may be passed to skip the counting pass; otherwise
        one is built from X with this estimator's min_count.
        """
        self._check_params()
        sentences = as_restartable(X)
        if vocab is None:
            vocab = Vocabulary.build(sentences, min_count=self.min_count)
        if len(vocab) == 0 or vocab.total_tokens == 0:
            raise EmptyCorpusError("no in-vocabulary tokens to train on")
        rng = check_rng(self.seed)
        model = self._make_model(vocab, rng)
        table = NegativeSamplingTable(vocab, power=self.sampling_power)
        total_updates = self.epochs * vocab.total_tokens
        trainer = self._sentence_trainer()

        processed = 0
        self.epoch_losses_ = []
        for epoch in range(self.epochs):
            stats = _EpochStats()
            if self.workers > 1:
                processed = self._fit_epoch_parallel(
                    sentences, vocab, model, table, trainer, processed,
                    total_updates, stats, epoch)
            else:
                for sentence in sentences:
                    ids = vocab.encode(sentence)
                    if not ids:
                        continue
                    processed += trainer(
                        model, ids, table, rng, self.negatives, self.window,
                        self.initial_lr, processed, total_updates, stats)
            mean_loss = stats.loss_sum / stats.pairs if stats.pairs else 0.0
            self.epoch_losses_.append(mean_loss)
            if self.verbose:
                print(f"epoch={epoch + 1} tokens={processed} "
                      f"lr={stats.lr:.6g} loss={mean_loss:.6g}", file=sys.stderr)
        if not np.isfinite(model.input).all() or not np.isfinite(model.output).all():
            raise NumericError("training produced non-finite parameters")

        self.vocab_ = vocab
        self.model_ = model
        self.embeddings_ = WordEmbeddings(vocab, self._finalize(vocab, model),
                                          self._metadata())
        return self

    def _fit_epoch_parallel(self, sentences, vocab, model, table, trainer,
                            processed, total_updates, stats, epoch):
        """Lock-free parallel epoch: workers race on the shared matrices.

        This is the documented lossy-update scheme of this algorithm
        family; results are not bit-reproducible across runs.
        """
        import queue
        import threading

        jobs: queue.Queue = queue.Queue(maxsize=self.workers * 2)
        counter_lock = threading.Lock()
        state = {"processed": processed}
        seeds = np.random.SeedSequence(entropy=(self.seed, epoch)).spawn(self.workers)

        def worker(seed_seq):
            rng = np.random.default_rng(seed_seq)
            local = _EpochStats()
            while True:
                batch = jobs.get()
                if batch is None:
                    break
                for ids in batch:
                    n = trainer(model, ids, table, rng, self.negatives,
                                self.window, self.initial_lr,
                                state["processed"], total_updates, local)
                    with counter_lock:
                        state["processed"] += n
            with counter_lock:
                stats.loss_sum += local.loss_sum
                stats.pairs += local.pairs
                stats.tokens += local.tokens
                stats.lr = max(stats.lr, local.lr)

        threads = [threading.Thread(target=worker, args=(s,)) for s in seeds]
        for t in threads:
            t.start()
        batch, batch_size = [], 256
        for sentence in sentences:
            ids = vocab.encode(sentence)
            if not ids:
                continue
            batch.append(ids)
            if len(batch) >= batch_size:
                jobs.put(batch)
                batch = []
        if batch:
            jobs.put(batch)
        for _ in threads:
            jobs.put(None)
        for t in threads:
            t.join()
        return state["processed"]

    def transform(self, words) -> np.ndarray:
        """Look up vectors for a list of words (raises on OOV)."""
        missing = [w for w in words if w not in self.vocab_]
        if missing:
            raise MissingWordError(missing)
        return np.stack([self.embeddings_.vector(w) for w in words])


class FastText(Word2Vec):
    """Skip-gram negative sampling over hashed character n-grams.

    A word is the sum of its n-gram rows during training and the mean of
    them on output, which is what makes out-of-vocabulary lookups work:
    any word decomposes into n-grams whose rows were trained.
    """

    _model_name = "fasttext"

    def __init__(self, dim=300, window=5, negatives=5, epochs=10,
                 initial_lr=0.025, min_count=10, sampling_power=0.75,
                 min_n=3, max_n=6, bucket_count=2_000_000, seed=1,
                 workers=1, verbose=0):
        super().__init__(dim=dim, window=window, negatives=negatives,
                         epochs=epochs, initial_lr=initial_lr, mode="skipgram",
                         min_count=min_count, sampling_power=sampling_power,
                         seed=seed, workers=workers, verbose=verbose)
        self.min_n = min_n
        self.max_n = max_n
        self.bucket_count = bucket_count

    def _check_params(self):
        super()._check_params()
        check_positive("min_n", self.min_n)
        if self.max_n < self.min_n:
            raise ValueError(f"max_n ({self.max_n}) must be >= min_n ({self.min_n})")
        check_positive("bucket_count", self.bucket_count)

    def _make_model(self, vocab, rng):
        ngram_rows = [
            len(vocab) + ngram_bucket_ids(w, self.min_n, self.max_n, self.bucket_count)
            for w in vocab.words
        ]
        return SgnsModel(len(vocab), self.dim, "fasttext", rng,
                         bucket_count=self.bucket_count,
                         word_ngram_rows=ngram_rows)

    def _sentence_trainer(self):
        return _train_sentence_sg

    def _finalize(self, vocab, model):
        """Write each word's mean-of-n-grams into its vocabulary row."""
        for wid in range(len(vocab)):
            rows = model.word_ngram_rows[wid]
            model.input[wid] = model.input[rows].mean(axis=0)
        return model.input[: len(vocab)].copy()

    def _metadata(self, extra=None):
        return super()._metadata({
            "min_n": str(self.min_n),
            "max_n": str(self.max_n),
            "bucket_count": str(self.bucket_count),
            **(extra or {}),
        })

    def word_vector(self, word: str) -> np.ndarray:
        """Vector for any word; OOV words compose from their n-gram rows."""
        if word in self.vocab_:
            return self.embeddings_.vector(word).astype(np.float64)
        rows = len(self.vocab_) + ngram_bucket_ids(
            word, self.min_n, self.max_n, self.bucket_count)
        return self.model_.input[rows].mean(axis=0)

    def transform(self, words) -> np.ndarray:
        return np.stack([self.word_vector(w) for w in words])
