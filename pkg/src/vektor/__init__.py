"""Training and intrinsic evaluation toolkit for static word embeddings."""

from .corpus import (
    CorpusReader,
    NegativeSamplingTable,
    Vocabulary,
    build_sampling_table,
    build_vocabulary,
    tokenize,
)
from .distill import (
    TokenVectorStream,
    X2Static,
    aggregate,
    pool_context,
    write_token_vectors,
    x2static_step,
)
from .embio import (
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
from .evaluate import (
    AnalogyDataset,
    AnalogyReport,
    SimilarityDataset,
    SimilarityReport,
    analogy_query,
    confidence_interval,
    cosine,
    load_analogy_dataset,
    load_similarity_dataset,
    mrr_evaluate,
    pearson,
    similarity_evaluate,
    spearman,
)
from .glove import (
    CoocMatrix,
    GloVe,
    accumulate_cooccurrence,
    cooc_weight,
    glove_loss,
)
from .sgns import FastText, Word2Vec, cbow_step, extract_ngrams, ngram_bucket_ids, sgns_step
from . import errors

__version__ = "0.1.0"

__all__ = [
    "AnalogyDataset",
    "AnalogyReport",
    "CoocMatrix",
    "CorpusReader",
    "FastText",
    "GloVe",
    "NegativeSamplingTable",
    "SimilarityDataset",
    "SimilarityReport",
    "TokenVectorStream",
    "Vocabulary",
    "Word2Vec",
    "WordEmbeddings",
    "X2Static",
    "accumulate_cooccurrence",
    "aggregate",
    "analogy_query",
    "average_embeddings",
    "build_sampling_table",
    "build_vocabulary",
    "cbow_step",
    "confidence_interval",
    "cooc_weight",
    "cosine",
    "errors",
    "extract_ngrams",
    "glove_loss",
    "load_analogy_dataset",
    "load_binary",
    "load_embeddings",
    "load_similarity_dataset",
    "load_text",
    "mrr_evaluate",
    "nearest_neighbors",
    "ngram_bucket_ids",
    "pca_project",
    "pearson",
    "pool_context",
    "save_binary",
    "save_text",
    "sgns_step",
    "similarity_evaluate",
    "spearman",
    "tokenize",
    "write_token_vectors",
    "x2static_step",
]
