import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from vektor.corpus import Vocabulary
from vektor.embio import WordEmbeddings
from vektor.errors import (
    DataFormatError,
    InsufficientDataError,
    MissingWordError,
    UndefinedCorrelationError,
    ZeroVectorError,
)
from vektor.evaluate import (
    AnalogyDataset,
    SimilarityDataset,
    analogy_query,
    confidence_interval,
    correlation_p_value,
    cosine,
    format_analogy_report,
    format_similarity_report,
    load_analogy_dataset,
    load_similarity_dataset,
    mrr_evaluate,
    pearson,
    similarity_evaluate,
    spearman,
)


def make_embeddings(words, matrix):
    vocab = Vocabulary(words, np.ones(len(words), dtype=np.int64), min_count=1)
    return WordEmbeddings(vocab, np.asarray(matrix, dtype=np.float32))


class TestCosine:
    def test_self_similarity(self):
        assert cosine([1.0, 2.0, -3.0], [1.0, 2.0, -3.0]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_closed_form(self):
        assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_zero_vector(self):
        with pytest.raises(ZeroVectorError):
            cosine([0.0, 0.0], [1.0, 0.0])

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=6),
           st.floats(0.1, 50.0))
    @settings(max_examples=100, deadline=None)
    def test_symmetry_and_scale_invariance(self, values, scale):
        u = np.array(values)
        v = np.arange(1.0, len(values) + 1.0)
        if np.linalg.norm(u) == 0:
            return
        assert cosine(u, v) == cosine(v, u)
        assert cosine(scale * u, v) == pytest.approx(cosine(u, v), abs=1e-12)


class TestCorrelations:
    def test_pearson_affine(self):
        xs = [1.0, 2.0, 5.0, 7.0]
        assert pearson(xs, [2 * x + 3 for x in xs]) == pytest.approx(1.0, abs=1e-12)

    def test_pearson_negation(self):
        xs = [0.5, 1.5, -2.0]
        assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0, abs=1e-12)

    def test_pearson_hand_fixture(self):
        assert pearson([0, 1, 2], [0, 1, 4]) == pytest.approx(0.9608, abs=1e-4)

    def test_pearson_matches_scipy(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            xs = rng.normal(size=20)
            ys = rng.normal(size=20)
            want = scipy.stats.pearsonr(xs, ys)
            assert pearson(xs, ys) == pytest.approx(want.statistic, abs=1e-12)
            assert correlation_p_value(pearson(xs, ys), 20) == pytest.approx(
                want.pvalue, rel=1e-9)

    def test_spearman_identical(self):
        assert spearman([3.0, 1.0, 2.0], [3.0, 1.0, 2.0]) == pytest.approx(1.0, abs=1e-12)

    def test_spearman_reversed(self):
        assert spearman([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0, abs=1e-12)

    def test_spearman_hand_fixture(self):
        # 1 - 6*sum(d^2)/(n(n^2-1)) with d^2 sum 2: 1 - 12/24
        assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_spearman_matches_scipy_with_ties(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            xs = rng.integers(0, 6, size=30).astype(float)  # plenty of ties
            ys = rng.integers(0, 6, size=30).astype(float)
            want = scipy.stats.spearmanr(xs, ys)
            try:
                got = spearman(xs, ys)
            except UndefinedCorrelationError:
                assert math.isnan(want.statistic)
                continue
            assert got == pytest.approx(want.statistic, abs=1e-12)
            assert correlation_p_value(got, 30) == pytest.approx(want.pvalue, rel=1e-9)

    @given(st.lists(st.integers(-100, 100), min_size=3, max_size=12, unique=True))
    @settings(max_examples=100, deadline=None)
    def test_spearman_monotone_transform_invariant(self, xs):
        # separated inputs keep exp() injective in float arithmetic
        ys = list(range(len(xs)))
        transformed = [math.exp(x / 50.0) for x in xs]  # strictly monotone
        assert spearman(transformed, ys) == pytest.approx(spearman(xs, ys), abs=1e-12)

    def test_constant_input_undefined(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(UndefinedCorrelationError):
            spearman([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            pearson([1.0, 2.0], [1.0, 2.0])


class TestConfidenceInterval:
    def test_fixture_900(self):
        lo, hi = confidence_interval(0.9, 900, 1.96)
        assert (lo, hi) == (pytest.approx(0.8804, abs=1e-10),
                            pytest.approx(0.9196, abs=1e-10))

    def test_fixture_100(self):
        lo, hi = confidence_interval(0.5, 100, 1.96)
        assert (lo, hi) == (pytest.approx(0.402, abs=1e-10),
                            pytest.approx(0.598, abs=1e-10))

    def test_degenerate_estimate(self):
        assert confidence_interval(1.0, 37, 1.96) == (1.0, 1.0)
        assert confidence_interval(0.0, 37, 2.5) == (0.0, 0.0)

    def test_clamped_to_unit_interval(self):
        lo, hi = confidence_interval(0.99, 5, 1.96)
        assert 0.0 <= lo <= hi <= 1.0

    def test_width_monotone_in_n_and_maximal_at_half(self):
        widths = []
        for n in (10, 40, 160, 640):
            lo, hi = confidence_interval(0.3, n, 1.96)
            widths.append(hi - lo)
        assert widths == sorted(widths, reverse=True)
        half = confidence_interval(0.5, 100, 1.96)
        for c in (0.1, 0.3, 0.7, 0.9):
            lo, hi = confidence_interval(c, 100, 1.96)
            assert hi - lo <= half[1] - half[0]

    def test_validation(self):
        with pytest.raises(ValueError):
            confidence_interval(1.5, 10, 1.96)
        with pytest.raises(ValueError):
            confidence_interval(0.5, 0, 1.96)
        with pytest.raises(ValueError):
            confidence_interval(0.5, 10, 0.0)


def analogy_embedding():
    """emb(d) = emb(b) - emb(a) + emb(c) exactly; everything else orthogonal."""
    words = ["a", "b", "c", "d", "x", "y"]
    matrix = np.zeros((6, 8))
    matrix[0, 0] = 1.0   # a
    matrix[1, 1] = 1.0   # b
    matrix[2, 2] = 1.0   # c
    matrix[3] = matrix[1] - matrix[0] + matrix[2]  # d: the constructed optimum
    matrix[4, 4] = 1.0
    matrix[5, 5] = 1.0
    return make_embeddings(words, matrix)


class TestAnalogyQuery:
    def test_constructed_optimum_ranks_first(self):
        emb = analogy_embedding()
        results = analogy_query(emb, "a", "b", "c", top_k=3)
        assert results[0][0] == "d"
        assert results[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_query_words_never_returned(self):
        emb = analogy_embedding()
        words = [w for w, _ in analogy_query(emb, "a", "b", "c", top_k=10)]
        assert not {"a", "b", "c"} & set(words)

    def test_c_excluded_next_best_wins(self):
        # target = b - a + c is closest to c itself; c must be skipped
        words = ["a", "b", "c", "near"]
        matrix = np.zeros((4, 4))
        matrix[0, 0] = 1.0
        matrix[1, 1] = 0.05
        matrix[2, 2] = 1.0
        target = matrix[1] - matrix[0] + matrix[2]
        matrix[3] = 0.6 * target / np.linalg.norm(target)
        matrix[3, 3] = 0.8  # near: high but not perfect cosine with target
        emb = make_embeddings(words, matrix)
        # brute-force oracle over the toy vocabulary
        scored = []
        for w in words:
            if w in ("a", "b", "c"):
                continue
            v = emb.vector(w).astype(np.float64)
            scored.append((w, v @ target / (np.linalg.norm(v) * np.linalg.norm(target))))
        scored.sort(key=lambda t: -t[1])
        got = analogy_query(emb, "a", "b", "c", top_k=2)
        assert [w for w, _ in got] == [w for w, _ in scored]
        assert got[0][0] == "near"

    def test_missing_word_named(self):
        emb = analogy_embedding()
        with pytest.raises(MissingWordError, match="zzz"):
            analogy_query(emb, "zzz", "b", "c")

    def test_top_k_limits_length(self):
        emb = analogy_embedding()
        assert len(analogy_query(emb, "a", "b", "c", top_k=2)) == 2


def ranked_fixture_embedding():
    """Three queries whose answers land at rank 1, rank 2, and rank 11."""
    words = []
    rows = []
    dim = 64

    def unit(i):
        v = np.zeros(dim)
        v[i] = 1.0
        return v

    base = 0
    for k, (d_cos, above) in enumerate([(0.9, 0), (0.9, 1), (0.1, 10)]):
        a, b, c = unit(base), unit(base + 1), unit(base + 2)
        target = b - a + c
        that = target / np.linalg.norm(target)
        words += [f"a{k}", f"b{k}", f"c{k}", f"d{k}"]
        rows += [a, b, c,
                 d_cos * that + math.sqrt(1 - d_cos ** 2) * unit(base + 3)]
        for m in range(above):
            cos_m = 0.91 + 0.005 * m  # all strictly above the answer's cosine
            words.append(f"f{k}_{m}")
            rows.append(cos_m * that + math.sqrt(1 - cos_m ** 2) * unit(base + 4 + m))
        base += 4 + above
    return make_embeddings(words, np.stack(rows))


class TestMrrEvaluate:
    def test_all_rank_one(self):
        emb = analogy_embedding()
        dataset = AnalogyDataset([("cat", [("a", "b", "c", "d")])])
        report = mrr_evaluate(emb, dataset)
        assert report.overall.mrr == 1.0
        assert report.overall.miss_ratio == 0.0

    def test_ranks_one_two_and_outside_cutoff(self):
        emb = ranked_fixture_embedding()
        dataset = AnalogyDataset([
            ("r", [("a0", "b0", "c0", "d0"),
                   ("a1", "b1", "c1", "d1"),
                   ("a2", "b2", "c2", "d2")]),
        ])
        report = mrr_evaluate(emb, dataset, top_k=10)
        assert report.overall.mrr == pytest.approx((1.0 + 0.5 + 0.0) / 3, abs=1e-12)
        assert report.overall.answered == 3

    def test_miss_ratio_excludes_from_mrr(self):
        emb = analogy_embedding()
        dataset = AnalogyDataset([
            ("cat", [("a", "b", "c", "d")] * 3 + [("gone", "b", "c", "d")]),
        ])
        report = mrr_evaluate(emb, dataset)
        assert report.overall.miss_ratio == 0.25
        assert report.overall.mrr == 1.0
        assert report.overall.answered == 3
        assert report.overall.missed == 1

    def test_oov_answer_scores_zero_but_answered(self):
        emb = analogy_embedding()
        dataset = AnalogyDataset([("cat", [("a", "b", "c", "notaword")])])
        report = mrr_evaluate(emb, dataset)
        assert report.overall.mrr == 0.0
        assert report.overall.answered == 1
        assert report.overall.missed == 0

    def test_overall_is_answered_weighted_mean(self):
        emb = ranked_fixture_embedding()
        dataset = AnalogyDataset([
            ("one", [("a0", "b0", "c0", "d0")]),
            ("two", [("a1", "b1", "c1", "d1"), ("a2", "b2", "c2", "d2")]),
        ])
        report = mrr_evaluate(emb, dataset)
        weighted = sum(s.mrr * s.answered for s in report.categories.values())
        total = sum(s.answered for s in report.categories.values())
        assert report.overall.mrr == pytest.approx(weighted / total, abs=1e-12)

    def test_category_order_preserved(self):
        emb = analogy_embedding()
        dataset = AnalogyDataset([
            ("zeta", [("a", "b", "c", "d")]),
            ("alpha", [("a", "b", "c", "d")]),
        ])
        report = mrr_evaluate(emb, dataset)
        assert list(report.categories) == ["zeta", "alpha"]

    def test_mrr_bounded_and_monotone_under_additions(self):
        emb = ranked_fixture_embedding()
        base = [("a1", "b1", "c1", "d1"), ("a2", "b2", "c2", "d2")]
        before = mrr_evaluate(emb, AnalogyDataset([("r", base)]))
        assert 0.0 <= before.overall.mrr <= 1.0

        # a query answered at rank 1 never decreases MRR
        plus_hit = mrr_evaluate(emb, AnalogyDataset(
            [("r", base + [("a0", "b0", "c0", "d0")])]))
        assert plus_hit.overall.mrr >= before.overall.mrr

        # a missed query never changes MRR but raises miss_ratio
        plus_miss = mrr_evaluate(emb, AnalogyDataset(
            [("r", base + [("absent", "b0", "c0", "d0")])]))
        assert plus_miss.overall.mrr == pytest.approx(before.overall.mrr, abs=1e-15)
        assert plus_miss.overall.miss_ratio > before.overall.miss_ratio


class TestSimilarityEvaluate:
    def embeddings_with_cosines(self, cosines):
        """Pair i = (p{i}, q{i}) with an exact prescribed cosine."""
        words, rows = [], []
        dim = 2 * len(cosines)
        for i, c in enumerate(cosines):
            x = np.zeros(dim)
            x[2 * i] = 1.0
            y = np.zeros(dim)
            y[2 * i] = c
            y[2 * i + 1] = math.sqrt(1 - c * c)
            words += [f"p{i}", f"q{i}"]
            rows += [x, y]
        return make_embeddings(words, np.stack(rows))

    def test_linear_rescale_gives_pearson_one(self):
        cosines = [0.1, 0.35, 0.6, 0.85]
        emb = self.embeddings_with_cosines(cosines)
        dataset = SimilarityDataset(
            [(f"p{i}", f"q{i}", 10 * (c + 1) / 2) for i, c in enumerate(cosines)])
        report = similarity_evaluate(emb, dataset)
        assert report.pearson == pytest.approx(1.0, abs=1e-5)
        assert report.oov_ratio == 0.0
        assert report.evaluated_pairs == 4

    def test_reversed_order_gives_spearman_minus_one(self):
        cosines = [0.9, 0.5, 0.2, -0.3]
        emb = self.embeddings_with_cosines(cosines)
        dataset = SimilarityDataset(
            [(f"p{i}", f"q{i}", float(i)) for i in range(len(cosines))])
        report = similarity_evaluate(emb, dataset)
        assert report.spearman == pytest.approx(-1.0, abs=1e-12)

    def test_oov_pairs_counted_and_dropped(self):
        cosines = [0.1, 0.4, 0.7]
        emb = self.embeddings_with_cosines(cosines)
        pairs = [(f"p{i}", f"q{i}", 5.0 * c + 2) for i, c in enumerate(cosines)]
        pairs.append(("p0", "missing", 3.0))
        report = similarity_evaluate(emb, SimilarityDataset(pairs))
        assert report.oov_ratio == 0.25
        assert report.evaluated_pairs == 3

    def test_insufficient_pairs(self):
        emb = self.embeddings_with_cosines([0.5, 0.6])
        dataset = SimilarityDataset([("p0", "q0", 1.0), ("p1", "q1", 2.0),
                                     ("p0", "nope", 3.0)])
        with pytest.raises(InsufficientDataError):
            similarity_evaluate(emb, dataset)


class TestDatasetFiles:
    def test_analogy_loader(self, tmp_path):
        path = tmp_path / "an.txt"
        path.write_text(
            ": kinship\nadam kral kadın kraliçe\n\n: tense\ngit gider gel gelir\n",
            encoding="utf-8")
        dataset = load_analogy_dataset(path)
        assert [name for name, _ in dataset.categories] == ["kinship", "tense"]
        assert dataset.categories[0][1] == [("adam", "kral", "kadın", "kraliçe")]

    def test_analogy_bad_arity(self, tmp_path):
        path = tmp_path / "an.txt"
        path.write_text(": c\na b c\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match=":2"):
            load_analogy_dataset(path)

    def test_analogy_query_before_header(self, tmp_path):
        path = tmp_path / "an.txt"
        path.write_text("a b c d\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="header"):
            load_analogy_dataset(path)

    def test_duplicate_categories_rejected(self):
        with pytest.raises(DataFormatError, match="duplicate"):
            AnalogyDataset([("c", []), ("c", [])])

    def test_similarity_loader(self, tmp_path):
        path = tmp_path / "sim.txt"
        path.write_text("kitap\thikaye\t5.401\nkuş\tköpek\t7.5\n", encoding="utf-8")
        dataset = load_similarity_dataset(path)
        assert dataset.pairs[0] == ("kitap", "hikaye", 5.401)

    def test_similarity_score_range_enforced(self, tmp_path):
        path = tmp_path / "sim.txt"
        path.write_text("a\tb\t11.0\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="outside"):
            load_similarity_dataset(path)

    def test_similarity_bad_columns(self, tmp_path):
        path = tmp_path / "sim.txt"
        path.write_text("a b 1.0\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match=":1"):
            load_similarity_dataset(path)


class TestReportFormatting:
    def test_tsv_lines(self):
        emb = analogy_embedding()
        dataset = AnalogyDataset([("cat", [("a", "b", "c", "d")])])
        report = mrr_evaluate(emb, dataset)
        lines = format_analogy_report(report, tsv=True).splitlines()
        assert lines[0].split("\t") == ["cat", "1.000000", "0.000000", "1", "0"]
        assert lines[-1].startswith("overall\t")

    def test_human_table_has_header_and_overall(self):
        emb = analogy_embedding()
        dataset = AnalogyDataset([("cat", [("a", "b", "c", "d")])])
        text = format_analogy_report(mrr_evaluate(emb, dataset))
        assert "category" in text.splitlines()[0]
        assert any(line.startswith("overall") for line in text.splitlines())

    def test_similarity_formats(self):
        report_cls = similarity_evaluate(
            TestSimilarityEvaluate().embeddings_with_cosines([0.2, 0.5, 0.8]),
            SimilarityDataset([("p0", "q0", 2.0), ("p1", "q1", 5.0), ("p2", "q2", 8.0)]))
        tsv = format_similarity_report(report_cls, tsv=True)
        assert tsv.splitlines()[0].split("\t")[0] == "pearson"
        human = format_similarity_report(report_cls)
        assert "evaluated" in human
