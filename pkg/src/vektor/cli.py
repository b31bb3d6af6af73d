"""Command-line entry point for the whole pipeline.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
failure. All randomness derives from --seed (default: the VEKTOR_SEED
environment variable, else 1).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import embio, evaluate
from .corpus import CorpusReader, Vocabulary
from .distill import TokenVectorStream, X2Static, aggregate
from .errors import NumericError, VektorError
from .glove import GloVe
from .sgns import FastText, Word2Vec


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _default_seed():
    return int(os.environ.get("VEKTOR_SEED", "1"))


def _add_common_train_flags(p):
    p.add_argument("--dim", type=int, default=300, help="embedding dimension")
    p.add_argument("--window", type=int, default=5, help="context size")
    p.add_argument("--min-count", type=int, default=10,
                   help="minimum word frequency")
    p.add_argument("--vocab", help="prebuilt vocabulary file (skips counting)")
    p.add_argument("--seed", type=int, default=_default_seed(), help="RNG seed")
    p.add_argument("--workers", type=int, default=1,
                   help="trainer threads (1 = deterministic)")
    p.add_argument("--quiet", action="store_true",
                   help="suppress progress lines on stderr")
    p.add_argument("--format", choices=("binary", "text"), default="binary",
                   help="output embedding format")
    p.add_argument("-o", "--output", required=True, help="output embedding file")


def build_parser():
    parser = _Parser(prog="vektor",
                     description="Static word embedding trainer and evaluator")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("build-vocab", formatter_class=fmt,
                       help="count a corpus into a vocabulary file")
    p.add_argument("corpus", help="text corpus, one sentence per line (gzip ok)")
    p.add_argument("--min-count", type=int, default=10,
                   help="minimum word frequency")
    p.add_argument("-o", "--output", required=True, help="vocabulary file")

    p = sub.add_parser("train", formatter_class=fmt,
                       help="train embeddings on a corpus")
    p.add_argument("corpus")
    p.add_argument("--model", required=True,
                   choices=("w2v-sg", "w2v-cbow", "fasttext", "glove"))
    p.add_argument("--negatives", type=int, default=5,
                   help="negative samples per update (w2v/fasttext)")
    p.add_argument("--epochs", type=int, default=10,
                   help="training epochs (w2v/fasttext)")
    p.add_argument("--lr", type=float, default=None,
                   help="initial learning rate (default 0.025; glove 0.05)")
    p.add_argument("--min-n", type=int, default=3, help="fasttext min n-gram")
    p.add_argument("--max-n", type=int, default=6, help="fasttext max n-gram")
    p.add_argument("--buckets", type=int, default=2_000_000,
                   help="fasttext n-gram hash buckets")
    p.add_argument("--iterations", type=int, default=100,
                   help="glove AdaGrad iterations")
    p.add_argument("--x-max", type=float, default=100.0,
                   help="glove weighting cutoff")
    p.add_argument("--alpha", type=float, default=0.75,
                   help="glove weighting exponent")
    _add_common_train_flags(p)

    p = sub.add_parser("convert", formatter_class=fmt,
                       help="convert teacher token vectors to static embeddings")
    p.add_argument("corpus", nargs="?",
                   help="aligned corpus (required for x2static)")
    p.add_argument("--method", required=True, choices=("aggregate", "x2static"))
    p.add_argument("--teacher", required=True,
                   help="token-vector stream file (gzip ok)")
    p.add_argument("--pooling", choices=("mean", "max"), default="mean",
                   help="aggregate pooling")
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--alignment-weight", type=float, default=0.1,
                   help="x2static L2 pull toward the projected context")
    _add_common_train_flags(p)

    p = sub.add_parser("average", formatter_class=fmt,
                       help="element-wise mean of two embedding files")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--intersect", action="store_true",
                   help="keep shared words instead of requiring equal vocabularies")
    p.add_argument("--format", choices=("binary", "text"), default="binary")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("eval-analogy", formatter_class=fmt,
                       help="mean reciprocal rank over an analogy dataset")
    p.add_argument("embeddings")
    p.add_argument("dataset", help="': category' headers + 'a b c d' lines")
    p.add_argument("--top-k", type=int, default=10, help="ranking cutoff")
    p.add_argument("--tsv", action="store_true", help="machine-readable output")

    p = sub.add_parser("eval-sim", formatter_class=fmt,
                       help="correlation against a similarity dataset")
    p.add_argument("embeddings")
    p.add_argument("dataset", help="'w1<TAB>w2<TAB>score' lines")
    p.add_argument("--tsv", action="store_true", help="machine-readable output")

    p = sub.add_parser("query", formatter_class=fmt,
                       help="nearest-neighbor or analogy lookup")
    p.add_argument("kind", choices=("nn", "analogy"))
    p.add_argument("embeddings")
    p.add_argument("words", nargs="+",
                   help="one word for nn; three words a b c for analogy")
    p.add_argument("-k", "--top-k", type=int, default=10,
                   help="number of results")

    p = sub.add_parser("project", formatter_class=fmt,
                       help="2-D PCA projection of selected words")
    p.add_argument("embeddings")
    p.add_argument("--words", nargs="*", default=[], help="words to project")
    p.add_argument("--words-file", help="file with one word per line")
    p.add_argument("-o", "--output", help="output TSV (default: stdout)")
    return parser


def _check_writable(path):
    """Fail before any expensive work if the output location is unusable."""
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise _UsageError(f"output directory does not exist: {parent}")
    if not os.access(parent, os.W_OK):
        raise _UsageError(f"output directory is not writable: {parent}")


def _save(emb, path, fmt):
    if fmt == "text":
        embio.save_text(emb, path)
    else:
        embio.save_binary(emb, path)


def _load_vocab(args, sentences):
    if args.vocab:
        return Vocabulary.load(args.vocab)
    return Vocabulary.build(sentences, min_count=args.min_count)


def _cmd_build_vocab(args):
    _check_writable(args.output)
    vocab = Vocabulary.build(CorpusReader(args.corpus), min_count=args.min_count)
    vocab.save(args.output)
    print(f"{len(vocab)} words, {vocab.total_tokens} tokens -> {args.output}")
    return 0


def _cmd_train(args):
    _check_writable(args.output)
    sentences = CorpusReader(args.corpus)
    vocab = _load_vocab(args, sentences)
    verbose = 0 if args.quiet else 1
    if args.model == "glove":
        est = GloVe(dim=args.dim, window=args.window, x_max=args.x_max,
                    alpha=args.alpha, iterations=args.iterations,
                    initial_lr=args.lr if args.lr is not None else 0.05,
                    min_count=args.min_count, seed=args.seed,
                    workers=args.workers, verbose=verbose)
        est.fit(sentences, vocab=vocab)
    else:
        lr = args.lr if args.lr is not None else 0.025
        common = dict(dim=args.dim, window=args.window, negatives=args.negatives,
                      epochs=args.epochs, initial_lr=lr, min_count=args.min_count,
                      seed=args.seed, workers=args.workers, verbose=verbose)
        if args.model == "fasttext":
            est = FastText(min_n=args.min_n, max_n=args.max_n,
                           bucket_count=args.buckets, **common)
        else:
            mode = "skipgram" if args.model == "w2v-sg" else "cbow"
            est = Word2Vec(mode=mode, **common)
        est.fit(sentences, vocab=vocab)
    _save(est.embeddings_, args.output, args.format)
    return 0


def _cmd_convert(args):
    _check_writable(args.output)
    stream = TokenVectorStream.open(args.teacher)
    if args.method == "aggregate":
        if args.vocab:
            vocab = Vocabulary.load(args.vocab)
        elif args.corpus:
            vocab = Vocabulary.build(CorpusReader(args.corpus),
                                     min_count=args.min_count)
        else:
            raise _UsageError("aggregate needs --vocab or a corpus argument")
        emb = aggregate(stream, vocab, pooling=args.pooling)
    else:
        if not args.corpus:
            raise _UsageError("x2static needs the aligned corpus argument")
        sentences = CorpusReader(args.corpus)
        vocab = _load_vocab(args, sentences)
        est = X2Static(dim=args.dim, negatives=args.negatives, epochs=args.epochs,
                       initial_lr=args.lr, alignment_weight=args.alignment_weight,
                       min_count=args.min_count, seed=args.seed,
                       workers=args.workers, verbose=0 if args.quiet else 1)
        est.fit(sentences, stream, vocab=vocab)
        emb = est.embeddings_
    _save(emb, args.output, args.format)
    return 0


def _cmd_average(args):
    _check_writable(args.output)
    first = embio.load_embeddings(args.first)
    second = embio.load_embeddings(args.second)
    _save(embio.average_embeddings(first, second, intersect=args.intersect),
          args.output, args.format)
    return 0


def _cmd_eval_analogy(args):
    emb = embio.load_embeddings(args.embeddings)
    dataset = evaluate.load_analogy_dataset(args.dataset)
    report = evaluate.mrr_evaluate(emb, dataset, top_k=args.top_k)
    print(evaluate.format_analogy_report(report, tsv=args.tsv))
    return 0


def _cmd_eval_sim(args):
    emb = embio.load_embeddings(args.embeddings)
    dataset = evaluate.load_similarity_dataset(args.dataset)
    report = evaluate.similarity_evaluate(emb, dataset)
    print(evaluate.format_similarity_report(report, tsv=args.tsv))
    return 0


def _cmd_query(args):
    emb = embio.load_embeddings(args.embeddings)
    if args.kind == "nn":
        if len(args.words) != 1:
            raise _UsageError("query nn takes exactly one word")
        results = embio.nearest_neighbors(emb, args.words[0], k=args.top_k)
    else:
        if len(args.words) != 3:
            raise _UsageError("query analogy takes exactly three words: a b c")
        a, b, c = args.words
        results = evaluate.analogy_query(emb, a, b, c, top_k=args.top_k)
    for word, score in results:
        print(f"{word}\t{score:.6f}")
    return 0


def _cmd_project(args):
    emb = embio.load_embeddings(args.embeddings)
    words = list(args.words)
    if args.words_file:
        with open(args.words_file, "r", encoding="utf-8") as handle:
            words.extend(w for w in (line.strip() for line in handle) if w)
    if not words:
        raise _UsageError("project needs --words or --words-file")
    if args.output:
        _check_writable(args.output)
    result = embio.pca_project(emb, words)
    if result.missing:
        print("skipped out-of-vocabulary words: " + " ".join(result.missing),
              file=sys.stderr)
    lines = ["#explained_variance=%.6g,%.6g" % tuple(result.explained_variance)]
    lines += [f"{word}\t{x:.6g}\t{y:.6g}" for word, x, y in result]
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as out:
            out.write(text)
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "build-vocab": _cmd_build_vocab,
    "train": _cmd_train,
    "convert": _cmd_convert,
    "average": _cmd_average,
    "eval-analogy": _cmd_eval_analogy,
    "eval-sim": _cmd_eval_sim,
    "query": _cmd_query,
    "project": _cmd_project,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # parameter constraint violations
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except VektorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
