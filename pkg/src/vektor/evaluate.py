"""Intrinsic evaluation: analogy ranking, similarity correlation, intervals.

Analogy queries use vector offset (b - a + c) scored by cosine over the
whole vocabulary with the three query words excluded. Reports mirror the
shape of the usual result tables: one row per category plus an overall
row, with out-of-vocabulary misses tracked separately from ranking
quality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import t as t_dist

from .embio import WordEmbeddings
from .errors import (
    DataFormatError,
    InsufficientDataError,
    MissingWordError,
    UndefinedCorrelationError,
    ZeroVectorError,
)
from ._validation import check_in_interval, check_positive


# ---------------------------------------------------------------------------
# datasets

@dataclass
class AnalogyDataset:
    """Named categories of (a, b, c, d) quadruples: a:b :: c:d."""

    categories: list[tuple[str, list[tuple[str, str, str, str]]]]

    def __post_init__(self):
        names = [name for name, _ in self.categories]
        if len(set(names)) != len(names):
            raise DataFormatError("duplicate analogy category names")
        for name, quads in self.categories:
            for quad in quads:
                if len(quad) != 4 or not all(quad):
                    raise DataFormatError(
                        f"category {name!r}: quadruple {quad!r} is malformed")

    def __len__(self):
        return sum(len(quads) for _, quads in self.categories)


@dataclass
class SimilarityDataset:
    """Word pairs with gold similarity scores on a 0..10 scale."""

    pairs: list[tuple[str, str, float]]

    def __post_init__(self):
        for w1, w2, gold in self.pairs:
            if not (0.0 <= gold <= 10.0):
                raise DataFormatError(
                    f"pair ({w1!r}, {w2!r}): score {gold} outside [0, 10]")

    def __len__(self):
        return len(self.pairs)


def load_analogy_dataset(path) -> AnalogyDataset:
    """Parse `: category` headers and `a b c d` query lines."""
    categories: list[tuple[str, list]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(":"):
                categories.append((line[1:].strip(), []))
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 'a b c d', got {len(parts)} words")
            if not categories:
                raise DataFormatError(
                    f"{path}:{lineno}: query before any ': <category>' header")
            categories[-1][1].append(tuple(parts))
    return AnalogyDataset(categories)


def load_similarity_dataset(path) -> SimilarityDataset:
    """Parse `w1<TAB>w2<TAB>score` lines."""
    pairs = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 'w1<TAB>w2<TAB>score'")
            try:
                gold = float(parts[2])
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: bad score {parts[2]!r}") from None
            if not 0.0 <= gold <= 10.0:
                raise DataFormatError(
                    f"{path}:{lineno}: score {gold} outside [0, 10]")
            pairs.append((parts[0], parts[1], gold))
    return SimilarityDataset(pairs)


# ---------------------------------------------------------------------------
# scalar metrics

def cosine(u, v) -> float:
    """Cosine similarity, computed in float64 and clipped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine of a zero vector is undefined")
    return float(np.clip((u @ v) / (nu * nv), -1.0, 1.0))


def pearson(xs, ys) -> float:
    """Product-moment correlation of two equal-length lists."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    if len(xs) < 3:
        raise InsufficientDataError("correlation needs at least 3 points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = np.sqrt(dx @ dx)
    sy = np.sqrt(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation of a constant input is undefined")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; ties share the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation: Pearson over average-rank vectors."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    if len(xs) < 3:
        raise InsufficientDataError("correlation needs at least 3 points")
    return pearson(_average_ranks(xs), _average_ranks(ys))


def correlation_p_value(r: float, n: int) -> float:
    """Two-sided p-value for a correlation via the t approximation."""
    if n < 3:
        raise InsufficientDataError("p-value needs at least 3 points")
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * t_dist.sf(abs(t), df=n - 2))


def confidence_interval(c_hat: float, n: int, z: float = 1.96) -> tuple[float, float]:
    """Normal-approximation interval c_hat +/- z*sqrt(c_hat(1-c_hat)/n),
    clamped to [0, 1]."""
    check_in_interval("c_hat", c_hat, 0.0, 1.0)
    check_positive("n", n)
    if z <= 0:
        raise ValueError(f"z must be positive, got {z!r}")
    half = z * np.sqrt(c_hat * (1.0 - c_hat) / n)
    return (max(0.0, c_hat - half), min(1.0, c_hat + half))


# ---------------------------------------------------------------------------
# analogy evaluation

def analogy_query(emb: WordEmbeddings, a: str, b: str, c: str,
                  top_k: int = 10) -> list[tuple[str, float]]:
    """Rank candidates by cosine to b - a + c; a, b, c never rank."""
    check_positive("top_k", top_k)
    missing = [w for w in (a, b, c) if w not in emb.vocab]
    if missing:
        raise MissingWordError(missing)
    target = (emb.vector(b).astype(np.float64)
              - emb.vector(a).astype(np.float64)
              + emb.vector(c).astype(np.float64))
    norm = np.linalg.norm(target)
    if norm == 0.0:
        raise ZeroVectorError(f"target vector of ({a!r}, {b!r}, {c!r}) is zero")
    scores = emb.unit_rows() @ (target / norm)
    row_norms = np.linalg.norm(emb.matrix.astype(np.float64), axis=1)
    scores[row_norms == 0.0] = -np.inf
    excluded = [emb.vocab.word_id(w) for w in (a, b, c)]
    scores[excluded] = -np.inf
    order = np.lexsort((np.arange(len(scores)), -scores))
    n_candidates = len(scores) - len(set(excluded))
    top = order[: min(top_k, n_candidates)]
    return [(emb.vocab.word_at(int(i)), float(np.clip(scores[i], -1.0, 1.0)))
            for i in top]


@dataclass
class CategoryScore:
    mrr: float
    miss_ratio: float
    answered: int
    missed: int


@dataclass
class AnalogyReport:
    """Per-category and overall MRR with miss accounting.

    MRR averages over answered queries only; queries whose a, b or c is
    out of vocabulary count toward miss_ratio instead.
    """

    categories: dict[str, CategoryScore] = field(default_factory=dict)
    overall: CategoryScore = field(
        default_factory=lambda: CategoryScore(0.0, 0.0, 0, 0))


def mrr_evaluate(emb: WordEmbeddings, dataset: AnalogyDataset,
                 top_k: int = 10) -> AnalogyReport:
    """Score every analogy query by the reciprocal rank of its answer.

    The answer must appear in the top_k ranking to score; below the
    cutoff (or when the answer word itself is out of vocabulary) the
    query scores 0 but still counts as answered.
    """
    if len(dataset) == 0:
        raise InsufficientDataError("analogy dataset has no queries")
    report = AnalogyReport()
    total_score = 0.0
    total_answered = 0
    total_missed = 0
    for name, quads in dataset.categories:
        score_sum = 0.0
        answered = 0
        missed = 0
        for a, b, c, d in quads:
            try:
                ranking = analogy_query(emb, a, b, c, top_k=top_k)
            except MissingWordError:
                missed += 1
                continue
            except ZeroVectorError:  # degenerate b-a+c target: no ranking
                answered += 1
                continue
            answered += 1
            for rank, (word, _) in enumerate(ranking, start=1):
                if word == d:
                    score_sum += 1.0 / rank
                    break
        total = answered + missed
        report.categories[name] = CategoryScore(
            mrr=score_sum / answered if answered else 0.0,
            miss_ratio=missed / total if total else 0.0,
            answered=answered,
            missed=missed,
        )
        total_score += score_sum
        total_answered += answered
        total_missed += missed
    grand_total = total_answered + total_missed
    report.overall = CategoryScore(
        mrr=total_score / total_answered if total_answered else 0.0,
        miss_ratio=total_missed / grand_total if grand_total else 0.0,
        answered=total_answered,
        missed=total_missed,
    )
    return report


# ---------------------------------------------------------------------------
# similarity evaluation

@dataclass
class SimilarityReport:
    pearson: float
    spearman: float
    pearson_p: float
    spearman_p: float
    oov_ratio: float
    evaluated_pairs: int


def similarity_evaluate(emb: WordEmbeddings, dataset: SimilarityDataset) -> SimilarityReport:
    """Correlate embedding cosines with gold scores over in-vocabulary pairs.

    Pairs with either word missing are dropped and accounted in
    oov_ratio; fewer than 3 usable pairs is an error.
    """
    if len(dataset) == 0:
        raise InsufficientDataError("similarity dataset has no pairs")
    golds = []
    cosines = []
    dropped = 0
    for w1, w2, gold in dataset.pairs:
        if w1 not in emb.vocab or w2 not in emb.vocab:
            dropped += 1
            continue
        golds.append(gold)
        cosines.append(cosine(emb.vector(w1), emb.vector(w2)))
    if len(golds) < 3:
        raise InsufficientDataError(
            f"only {len(golds)} in-vocabulary pairs; need at least 3")
    r_p = pearson(cosines, golds)
    r_s = spearman(cosines, golds)
    n = len(golds)
    return SimilarityReport(
        pearson=r_p,
        spearman=r_s,
        pearson_p=correlation_p_value(r_p, n),
        spearman_p=correlation_p_value(r_s, n),
        oov_ratio=dropped / len(dataset),
        evaluated_pairs=n,
    )


# ---------------------------------------------------------------------------
# report rendering (shared by the CLI)

def format_analogy_report(report: AnalogyReport, tsv: bool = False) -> str:
    rows = list(report.categories.items()) + [("overall", report.overall)]
    if tsv:
        return "\n".join(
            f"{name}\t{s.mrr:.6f}\t{s.miss_ratio:.6f}\t{s.answered}\t{s.missed}"
            for name, s in rows)
    width = max(len(name) for name, _ in rows)
    lines = [f"{'category':<{width}}  {'mrr':>8}  {'miss':>8}  {'answered':>8}  {'missed':>6}"]
    for name, s in rows:
        lines.append(f"{name:<{width}}  {s.mrr:>8.4f}  {s.miss_ratio:>8.4f}  "
                     f"{s.answered:>8}  {s.missed:>6}")
    return "\n".join(lines)


def format_similarity_report(report: SimilarityReport, tsv: bool = False) -> str:
    if tsv:
        return ("pearson\tspearman\tpearson_p\tspearman_p\toov_ratio\tevaluated_pairs\n"
                f"{report.pearson:.6f}\t{report.spearman:.6f}\t"
                f"{report.pearson_p:.3e}\t{report.spearman_p:.3e}\t"
                f"{report.oov_ratio:.6f}\t{report.evaluated_pairs}")
    return (f"pearson    {report.pearson:.4f} (p={report.pearson_p:.3e})\n"
            f"spearman   {report.spearman:.4f} (p={report.spearman_p:.3e})\n"
            f"oov ratio  {report.oov_ratio:.4f}\n"
            f"evaluated  {report.evaluated_pairs} pairs")
