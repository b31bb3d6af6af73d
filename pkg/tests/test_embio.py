import numpy as np
import pytest

from vektor.corpus import Vocabulary
from vektor.embio import (
    WordEmbeddings,
    average_embeddings,
    load_binary,
    load_embeddings,
    load_text,
    nearest_neighbors,
    pca_project,
    save_binary,
    save_text,
)
from vektor.errors import (
    DataFormatError,
    InsufficientDataError,
    MissingWordError,
    ZeroVectorError,
)


def make_embeddings(words, matrix, metadata=None):
    vocab = Vocabulary(words, np.arange(len(words), 0, -1), min_count=1)
    return WordEmbeddings(vocab, np.asarray(matrix, dtype=np.float32), metadata)


@pytest.fixture
def random_emb():
    rng = np.random.default_rng(42)
    words = [f"w{i}" for i in range(30)]
    return make_embeddings(words, rng.normal(size=(30, 12)).astype(np.float32),
                           {"model": "test", "dim": "12"})


class TestTextFormat:
    def test_round_trip(self, tmp_path, random_emb):
        path = tmp_path / "emb.txt"
        save_text(random_emb, path)
        loaded = load_text(path)
        assert loaded.vocab.words == random_emb.vocab.words
        np.testing.assert_allclose(loaded.matrix, random_emb.matrix,
                                   rtol=1e-6, atol=1e-6)
        assert loaded.metadata == random_emb.metadata

    def test_header_shape(self, tmp_path, random_emb):
        path = tmp_path / "emb.txt"
        save_text(random_emb, path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "30 12"

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 3\na 1 2 3\nb 1 2 3 4\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match=":3"):
            load_text(path)

    def test_duplicate_word(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 2\na 1 2\na 3 4\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="duplicate"):
            load_text(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("banana\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match=":1"):
            load_text(path)

    def test_empty_vocabulary(self, tmp_path):
        path = tmp_path / "emb.txt"
        emb = make_embeddings([], np.zeros((0, 4), dtype=np.float32))
        save_text(emb, path)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "0 4"
        loaded = load_text(path)
        assert len(loaded) == 0 and loaded.dim == 4


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, tmp_path, random_emb):
        path = tmp_path / "emb.bin"
        save_binary(random_emb, path)
        loaded = load_binary(path)
        assert loaded.vocab.words == random_emb.vocab.words
        assert loaded.metadata == random_emb.metadata
        assert (loaded.matrix.view(np.uint32) == random_emb.matrix.view(np.uint32)).all()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "emb.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(DataFormatError, match="magic"):
            load_binary(path)

    def test_truncation_reports_offset(self, tmp_path, random_emb):
        path = tmp_path / "emb.bin"
        save_binary(random_emb, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(DataFormatError, match="byte offset"):
            load_binary(path)

    def test_text_binary_text_composition(self, tmp_path, random_emb):
        t1, b1, t2 = (tmp_path / n for n in ("a.txt", "a.bin", "b.txt"))
        save_text(random_emb, t1)
        first = load_text(t1)
        save_binary(first, b1)
        save_text(load_binary(b1), t2)
        second = load_text(t2)
        np.testing.assert_allclose(second.matrix, first.matrix, rtol=1e-6, atol=1e-6)

    def test_sniffing_loader(self, tmp_path, random_emb):
        tp, bp = tmp_path / "e.txt", tmp_path / "e.bin"
        save_text(random_emb, tp)
        save_binary(random_emb, bp)
        assert load_embeddings(bp).vocab.words == random_emb.vocab.words
        assert load_embeddings(tp).vocab.words == random_emb.vocab.words


def brute_force_neighbors(emb, target, exclude_ids, k):
    """Oracle: plain python cosine over every row, sorted by (-cos, id)."""
    target = np.asarray(target, dtype=np.float64)
    scored = []
    for i in range(len(emb)):
        if i in exclude_ids:
            continue
        row = emb.matrix[i].astype(np.float64)
        denom = np.linalg.norm(row) * np.linalg.norm(target)
        if np.linalg.norm(row) == 0:
            continue
        scored.append((i, float(row @ target / denom)))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return [(emb.vocab.word_at(i), s) for i, s in scored[:k]]


class TestNearestNeighbors:
    def test_scalar_multiple_gives_cosine_one(self):
        emb = make_embeddings(["a", "b", "c"],
                              [[1.0, 0.0], [3.0, 0.0], [0.0, 1.0]])
        results = nearest_neighbors(emb, "a", k=1)
        assert results[0][0] == "b"
        assert results[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_matches_brute_force(self, random_emb):
        for word in ["w0", "w7", "w19"]:
            got = nearest_neighbors(random_emb, word, k=8)
            wid = random_emb.vocab.word_id(word)
            want = brute_force_neighbors(
                random_emb, random_emb.matrix[wid], {wid}, 8)
            assert [w for w, _ in got] == [w for w, _ in want]
            np.testing.assert_allclose([s for _, s in got], [s for _, s in want],
                                       atol=1e-12)

    def test_vector_query(self, random_emb):
        got = nearest_neighbors(random_emb, random_emb.matrix[3], k=1)
        assert got[0][0] == "w3"  # vector queries exclude nothing

    def test_k_clamped(self, random_emb):
        assert len(nearest_neighbors(random_emb, "w0", k=500)) == len(random_emb) - 1

    def test_oov_query(self, random_emb):
        with pytest.raises(MissingWordError):
            nearest_neighbors(random_emb, "nope", k=1)

    def test_zero_vector_query(self, random_emb):
        with pytest.raises(ZeroVectorError):
            nearest_neighbors(random_emb, np.zeros(random_emb.dim), k=1)

    def test_sorted_non_increasing_and_ties_by_id(self):
        emb = make_embeddings(["a", "b", "c", "d"],
                              [[1, 0], [2, 0], [4, 0], [0, 1]])
        got = nearest_neighbors(emb, "a", k=3)
        scores = [s for _, s in got]
        assert scores == sorted(scores, reverse=True)
        assert [w for w, _ in got] == ["b", "c", "d"]  # tie between b/c by id


class TestPcaProject:
    def test_planar_points_keep_distances(self):
        rng = np.random.default_rng(1)
        coords2 = rng.normal(size=(8, 2))
        basis, _ = np.linalg.qr(rng.normal(size=(10, 2)))
        matrix = coords2 @ basis.T  # rank-2 point cloud in 10-D
        emb = make_embeddings([f"w{i}" for i in range(8)], matrix)
        result = pca_project(emb, emb.vocab.words)
        got = result.coordinates
        want = matrix - matrix.mean(axis=0)
        for i in range(8):
            for j in range(8):
                dist_got = np.linalg.norm(got[i] - got[j])
                dist_want = np.linalg.norm(want[i] - want[j])
                assert dist_got == pytest.approx(dist_want, abs=1e-6)

    def test_collinear_second_variance_vanishes(self):
        matrix = np.outer([1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 0.0])
        emb = make_embeddings(["a", "b", "c", "d"], matrix)
        result = pca_project(emb, ["a", "b", "c", "d"])
        assert result.explained_variance[1] < 1e-9

    def test_matches_full_eigendecomposition(self):
        rng = np.random.default_rng(7)
        matrix = rng.normal(size=(10, 50))
        emb = make_embeddings([f"w{i}" for i in range(10)], matrix)
        result = pca_project(emb, emb.vocab.words)

        centered = emb.matrix.astype(np.float64) - emb.matrix.astype(np.float64).mean(axis=0)
        cov = centered.T @ centered / 9
        eigvals, eigvecs = np.linalg.eigh(cov)
        top = eigvecs[:, np.argsort(eigvals)[::-1][:2]].T
        for got, want in zip(result.components, top):
            sign = 1.0 if abs(got @ want) == got @ want else -1.0
            np.testing.assert_allclose(got, sign * want, atol=1e-6)
        np.testing.assert_allclose(
            result.explained_variance, np.sort(eigvals)[::-1][:2], rtol=1e-6)

    def test_components_orthonormal_variance_ordered(self, random_emb):
        result = pca_project(random_emb, random_emb.vocab.words)
        c1, c2 = result.components
        assert abs(c1 @ c2) < 1e-8
        assert np.linalg.norm(c1) == pytest.approx(1.0, abs=1e-8)
        assert result.explained_variance[0] >= result.explained_variance[1] >= -1e-12

    def test_oov_reported_and_skipped(self, random_emb):
        result = pca_project(random_emb, ["w0", "w1", "w2", "nope"])
        assert result.missing == ["nope"]
        assert result.words == ["w0", "w1", "w2"]

    def test_too_few_words(self, random_emb):
        with pytest.raises(InsufficientDataError):
            pca_project(random_emb, ["w0", "w1", "nope"])

    def test_deterministic(self, random_emb):
        r1 = pca_project(random_emb, random_emb.vocab.words)
        r2 = pca_project(random_emb, random_emb.vocab.words)
        assert (r1.coordinates == r2.coordinates).all()


class TestAverage:
    def test_identical_inputs_bit_equal(self, random_emb):
        avg = average_embeddings(random_emb, random_emb)
        assert (avg.matrix.view(np.uint32) == random_emb.matrix.view(np.uint32)).all()

    def test_exact_mean(self):
        a = make_embeddings(["x", "y"], [[1.0, 3.0], [5.0, 7.0]])
        b = make_embeddings(["x", "y"], [[2.0, 4.0], [6.0, 8.0]])
        avg = average_embeddings(a, b)
        np.testing.assert_array_equal(avg.matrix, [[1.5, 3.5], [5.5, 7.5]])

    def test_vocabulary_mismatch_fails_fast(self):
        a = make_embeddings(["x", "y"], [[1.0], [2.0]])
        b = make_embeddings(["x", "z"], [[1.0], [2.0]])
        with pytest.raises(DataFormatError):
            average_embeddings(a, b)

    def test_intersect_mode(self):
        a = make_embeddings(["x", "y"], [[2.0], [4.0]])
        b = make_embeddings(["z", "x"], [[8.0], [6.0]])
        avg = average_embeddings(a, b, intersect=True)
        assert avg.vocab.words == ["x"]
        np.testing.assert_array_equal(avg.matrix, [[4.0]])

    def test_dim_mismatch(self):
        a = make_embeddings(["x"], [[1.0, 2.0]])
        b = make_embeddings(["x"], [[1.0]])
        with pytest.raises(DataFormatError):
            average_embeddings(a, b)
