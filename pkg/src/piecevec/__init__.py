"""Chess piece embeddings from move-count matrix factorization."""

__version__ = "0.1.0"
