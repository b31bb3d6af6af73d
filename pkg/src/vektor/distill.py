"""Contextual-to-static conversion: occurrence pooling and distillation.

Teacher vectors arrive precomputed in token-vector stream files; no
contextual model ever runs here. The stream format is the integration
boundary: a `#dim=<d>` header, one `token<TAB>v1 v2 ... vd` line per
token, a blank line between sentences, optionally gzip-compressed.
"""

from __future__ import annotations

import sys

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from .corpus import NegativeSamplingTable, Vocabulary, _open_maybe_gzip
from .embio import WordEmbeddings
from .errors import (
    DataFormatError,
    EmptyCorpusError,
    InsufficientDataError,
    MissingWordError,
)
from .sgns import _lr_at
from ._validation import as_restartable, check_positive, check_rng


class TokenVectorStream:
    """Per-token teacher vectors aligned sentence-by-sentence to a corpus.

    Iterating yields one sentence at a time as a list of
    (token, float64 vector) pairs. File-backed streams re-open the file
    on every pass, so they can drive multi-epoch training.
    """

    def __init__(self, dim: int, sentences=None, path=None):
        check_positive("dim", dim)
        self.dim = dim
        self._sentences = sentences
        self.path = path

    @classmethod
    def open(cls, path) -> "TokenVectorStream":
        with _open_maybe_gzip(path) as handle:
            header = handle.readline().strip()
        if not header.startswith("#dim="):
            raise DataFormatError(f"{path}:1: expected '#dim=<d>' header")
        try:
            dim = int(header[len("#dim="):])
        except ValueError:
            raise DataFormatError(f"{path}:1: bad dimension {header!r}") from None
        return cls(dim, path=path)

    @classmethod
    def from_records(cls, dim: int, sentences) -> "TokenVectorStream":
        """Wrap in-memory records: a list of [(token, vector), ...] lists."""
        checked = []
        for si, sentence in enumerate(sentences):
            record = []
            for ti, (token, vector) in enumerate(sentence):
                vector = np.asarray(vector, dtype=np.float64)
                if vector.shape != (dim,):
                    raise DataFormatError(
                        f"sentence {si}, token {ti} ({token!r}): "
                        f"vector has {vector.size} values, expected {dim}"
                    )
                if not np.isfinite(vector).all():
                    raise DataFormatError(
                        f"sentence {si}, token {ti} ({token!r}): non-finite vector value"
                    )
                record.append((token, vector))
            checked.append(record)
        return cls(dim, sentences=checked)

    def __iter__(self):
        if self._sentences is not None:
            yield from self._sentences
            return
        yield from self._read_file()

    def _read_file(self):
        with _open_maybe_gzip(self.path) as handle:
            handle.readline()  # header, validated in open()
            sentence = []
            for lineno, line in enumerate(handle, start=2):
                line = line.rstrip("\n")
                if not line:
                    if sentence:
                        yield sentence
                        sentence = []
                    continue
                token, _, rest = line.partition("\t")
                values = rest.split()
                if len(values) != self.dim:
                    raise DataFormatError(
                        f"{self.path}:{lineno}: {len(values)} values, expected {self.dim}"
                    )
                try:
                    vector = np.array(values, dtype=np.float64)
                except ValueError:
                    raise DataFormatError(
                        f"{self.path}:{lineno}: non-numeric vector value"
                    ) from None
                if not np.isfinite(vector).all():
                    raise DataFormatError(f"{self.path}:{lineno}: non-finite vector value")
                sentence.append((token, vector))
            if sentence:
                yield sentence


def write_token_vectors(path, dim: int, sentences) -> None:
    """Write a stream file; `sentences` as in TokenVectorStream records."""
    with open(path, "w", encoding="utf-8") as out:
        out.write(f"#dim={dim}\n")
        for sentence in sentences:
            for token, vector in sentence:
                values = " ".join(repr(float(v)) for v in vector)
                out.write(f"{token}\t{values}\n")
            out.write("\n")


def aggregate(stream: TokenVectorStream, vocab: Vocabulary,
              pooling: str = "mean") -> WordEmbeddings:
    """Pool each vocabulary word's teacher vectors across its occurrences.

    Mean pooling uses compensated (Kahan) summation so the result is
    independent of sentence order to ~1e-9. Words that never occur in
    the stream are absent from the output.
    """
    if pooling not in ("mean", "max"):
        raise ValueError(f"pooling must be 'mean' or 'max', got {pooling!r}")
    dim = stream.dim
    sums: dict[int, np.ndarray] = {}
    comps: dict[int, np.ndarray] = {}
    maxes: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    empty = True
    for sentence in stream:
        empty = False
        for token, vector in sentence:
            if token not in vocab:
                continue
            wid = vocab.word_id(token)
            if wid not in counts:
                counts[wid] = 1
                if pooling == "mean":
                    sums[wid] = vector.copy()
                    comps[wid] = np.zeros(dim)
                else:
                    maxes[wid] = vector.copy()
                continue
            counts[wid] += 1
            if pooling == "mean":
                y = vector - comps[wid]
                t = sums[wid] + y
                comps[wid] = (t - sums[wid]) - y
                sums[wid] = t
            else:
                np.maximum(maxes[wid], vector, out=maxes[wid])
    if empty:
        raise EmptyCorpusError("token-vector stream is empty")

    kept = [wid for wid in range(len(vocab)) if wid in counts]
    words = [vocab.word_at(wid) for wid in kept]
    out_vocab = Vocabulary(words, [counts[wid] for wid in kept], min_count=1)
    matrix = np.empty((len(kept), dim))
    for row, wid in enumerate(kept):
        if pooling == "mean":
            matrix[row] = sums[wid] / counts[wid]
        else:
            matrix[row] = maxes[wid]
    return WordEmbeddings(out_vocab, matrix, {"model": f"aggregate-{pooling}"})


def pool_context(sentence_vectors, target_index: int) -> np.ndarray:
    """Mean of a sentence's teacher vectors excluding the target position."""
    vectors = np.asarray(sentence_vectors, dtype=np.float64)
    if len(vectors) < 2:
        raise InsufficientDataError("a single-token sentence has no context to pool")
    if not 0 <= target_index < len(vectors):
        raise IndexError(f"target_index {target_index} out of range")
    total = vectors.sum(axis=0) - vectors[target_index]
    return total / (len(vectors) - 1)


class X2StaticModel:
    """Student matrices and the teacher-to-student projection."""

    def __init__(self, vocab_size, dim, teacher_dim, rng):
        self.u = (rng.random((vocab_size, dim)) - 0.5) / dim
        self.v = np.zeros((vocab_size, dim))
        scale = np.sqrt(6.0 / (teacher_dim + dim))
        self.projection = (rng.random((teacher_dim, dim)) * 2.0 - 1.0) * scale


def x2static_step(model: X2StaticModel, context_vector, target: int,
                  negatives, lr: float, alignment_weight: float) -> float:
    """One distillation update; returns the pre-update loss.

    The projected pooled context h = P^T c predicts the target word
    against sampled negatives; the alignment term pulls the target's
    input row toward h with weight lambda.
    """
    c = np.asarray(context_vector, dtype=np.float64)
    h = c @ model.projection
    idx = np.empty(len(negatives) + 1, dtype=np.int64)
    idx[0] = target
    idx[1:] = negatives
    rows = model.v[idx]
    scores = rows @ h
    g = expit(scores)
    g[0] -= 1.0
    residual = model.u[target] - h
    loss = (np.logaddexp(0.0, -scores[0]) + np.logaddexp(0.0, scores[1:]).sum()
            + alignment_weight * (residual @ residual))
    grad_h = g @ rows - 2.0 * alignment_weight * residual
    np.add.at(model.v, idx, np.multiply.outer(-lr * g, h))
    model.projection -= lr * np.multiply.outer(c, grad_h)
    model.u[target] -= lr * 2.0 * alignment_weight * residual
    return float(loss)


class X2Static(BaseEstimator):
    """CBOW-style distillation of teacher token vectors into static rows.

    For every token with at least one sentence neighbor, the pooled
    teacher context is projected into student space and trained to
    predict the token with negative sampling, plus an L2 pull of the
    token's embedding toward the projected context. Emitted embeddings
    are the student input rows.
    """

    def __init__(self, dim=300, negatives=5, epochs=10, initial_lr=0.025,
                 alignment_weight=0.1, min_count=10, sampling_power=0.75,
                 seed=1, workers=1, verbose=0):
        self.dim = dim
        self.negatives = negatives
        self.epochs = epochs
        self.initial_lr = initial_lr
        self.alignment_weight = alignment_weight
        self.min_count = min_count
        self.sampling_power = sampling_power
        self.seed = seed
        self.workers = workers
        self.verbose = verbose

    def _check_params(self):
        check_positive("dim", self.dim)
        check_positive("negatives", self.negatives)
        check_positive("epochs", self.epochs, minimum=0)
        if self.alignment_weight < 0:
            raise ValueError(
                f"alignment_weight must be >= 0, got {self.alignment_weight!r}")

    def _aligned(self, sentences, stream):
        """Yield (tokens, stacked teacher vectors), verifying alignment."""
        corpus_iter = iter(sentences)
        stream_iter = iter(stream)
        index = 0
        while True:
            tokens = next(corpus_iter, None)
            record = next(stream_iter, None)
            if tokens is None and record is None:
                return
            if tokens is None or record is None:
                longer = "teacher stream" if tokens is None else "corpus"
                raise DataFormatError(
                    f"sentence {index}: {longer} continues past the other input")
            teacher_tokens = [t for t, _ in record]
            if len(tokens) != len(teacher_tokens):
                raise DataFormatError(
                    f"sentence {index}: corpus has {len(tokens)} tokens, "
                    f"teacher stream has {len(teacher_tokens)}")
            for pos, (a, b) in enumerate(zip(tokens, teacher_tokens)):
                if a != b:
                    raise DataFormatError(
                        f"sentence {index}, position {pos}: corpus token {a!r} "
                        f"!= teacher token {b!r}")
            yield tokens, np.stack([v for _, v in record])
            index += 1

    def fit(self, X, stream: TokenVectorStream, y=None,
            vocab: Vocabulary | None = None):
        """Distill from a corpus and its aligned teacher stream."""
        self._check_params()
        sentences = as_restartable(X)
        if vocab is None:
            vocab = Vocabulary.build(sentences, min_count=self.min_count)
        if len(vocab) == 0 or vocab.total_tokens == 0:
            raise EmptyCorpusError("no in-vocabulary tokens to distill")

        # Validation pass: checks total alignment, finds the teacher dim
        # and counts trainable targets for the lr schedule.
        teacher_dim = stream.dim
        total_targets = 0
        for tokens, vectors in self._aligned(sentences, stream):
            if len(tokens) < 2:
                continue
            total_targets += sum(1 for t in tokens if t in vocab)
        if total_targets == 0:
            raise EmptyCorpusError(
                "no trainable tokens (every sentence is too short or out of vocabulary)")

        rng = check_rng(self.seed)
        model = X2StaticModel(len(vocab), self.dim, teacher_dim, rng)
        table = NegativeSamplingTable(vocab, power=self.sampling_power)
        total_updates = self.epochs * total_targets

        state = {"processed": 0}
        self.epoch_losses_ = []
        for epoch in range(self.epochs):
            if self.workers > 1:
                loss_sum, steps, lr = self._fit_epoch_parallel(
                    sentences, stream, vocab, model, table, state,
                    total_updates, epoch)
            else:
                loss_sum, steps, lr = self._train_pass(
                    self._aligned(sentences, stream), vocab, model, table,
                    rng, state, total_updates)
            mean_loss = loss_sum / steps if steps else 0.0
            self.epoch_losses_.append(mean_loss)
            if self.verbose:
                print(f"epoch={epoch + 1} tokens={state['processed']} "
                      f"lr={lr:.6g} loss={mean_loss:.6g}", file=sys.stderr)

        self.vocab_ = vocab
        self.teacher_dim_ = teacher_dim
        self.model_ = model
        self.total_targets_ = total_targets
        self.embeddings_ = WordEmbeddings(vocab, model.u, {
            "model": "x2static",
            "dim": str(self.dim),
            "negatives": str(self.negatives),
            "epochs": str(self.epochs),
            "initial_lr": repr(self.initial_lr),
            "alignment_weight": repr(self.alignment_weight),
            "teacher_dim": str(teacher_dim),
            "seed": str(self.seed),
        })
        return self

    def _train_pass(self, aligned, vocab, model, table, rng, state, total_updates):
        """Run distillation steps over aligned sentences; returns epoch stats."""
        loss_sum = 0.0
        steps = 0
        lr = self.initial_lr
        for tokens, vectors in aligned:
            if len(tokens) < 2:
                continue
            targets = [(pos, vocab.word_id(t)) for pos, t in enumerate(tokens)
                       if t in vocab]
            if not targets:
                continue
            total = vectors.sum(axis=0)
            denom = len(tokens) - 1
            negs = table.sample(rng, (len(targets), self.negatives))
            for row, (pos, wid) in enumerate(targets):
                while True:
                    hits = negs[row] == wid
                    if not hits.any():
                        break
                    negs[row, hits] = table.sample(rng, int(hits.sum()))
                lr = _lr_at(self.initial_lr, state["processed"], total_updates)
                context = (total - vectors[pos]) / denom
                loss_sum += x2static_step(model, context, wid, negs[row],
                                          lr, self.alignment_weight)
                state["processed"] += 1
                steps += 1
        return loss_sum, steps, lr

    def _fit_epoch_parallel(self, sentences, stream, vocab, model, table,
                            state, total_updates, epoch):
        """Lock-free threads race on the shared student matrices."""
        import queue
        import threading

        jobs: queue.Queue = queue.Queue(maxsize=self.workers * 2)
        merge_lock = threading.Lock()
        merged = [0.0, 0, self.initial_lr]
        seeds = np.random.SeedSequence(entropy=(self.seed, epoch)).spawn(self.workers)

        def worker(seed_seq):
            rng = np.random.default_rng(seed_seq)
            while True:
                batch = jobs.get()
                if batch is None:
                    break
                loss_sum, steps, lr = self._train_pass(
                    batch, vocab, model, table, rng, state, total_updates)
                with merge_lock:
                    merged[0] += loss_sum
                    merged[1] += steps
                    merged[2] = lr

        threads = [threading.Thread(target=worker, args=(s,)) for s in seeds]
        for t in threads:
            t.start()
        batch = []
        for pair in self._aligned(sentences, stream):
            batch.append(pair)
            if len(batch) >= 256:
                jobs.put(batch)
                batch = []
        if batch:
            jobs.put(batch)
        for _ in threads:
            jobs.put(None)
        for t in threads:
            t.join()
        return merged[0], merged[1], merged[2]

    def transform(self, words) -> np.ndarray:
        missing = [w for w in words if w not in self.vocab_]
        if missing:
            raise MissingWordError(missing)
        return np.stack([self.embeddings_.vector(w) for w in words])
