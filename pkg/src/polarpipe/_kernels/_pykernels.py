"""Numpy/scipy reference implementations of the hot kernels.

Always importable; the compiled extension in ``_ckernels`` implements the
same functions with the same contracts. Integer-valued results (hashes,
confusion counts) are bit-identical across the two backends; float results
agree to rounding because the accumulation orders differ.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

FNV_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte string."""
    h = FNV_BASIS
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def hash_ngrams(tokens: list[str], unigrams: bool, bigrams: bool, hash_dim: int) -> np.ndarray:
    """Hashed feature indices for a token sequence: unigrams, then bigrams.

    Bigrams hash the two tokens' UTF-8 bytes joined by a single space, so the
    bigram of ("a", "b") and the unigram "a b" collide by construction.
    """
    encoded = [t.encode("utf-8") for t in tokens]
    out: list[int] = []
    if unigrams:
        for tok in encoded:
            out.append(fnv1a64(tok) % hash_dim)
    if bigrams:
        for a, b in zip(encoded, encoded[1:]):
            out.append(fnv1a64(a + b" " + b) % hash_dim)
    return np.asarray(out, dtype=np.int64)


def csr_logits(indptr, indices, data, weights, bias):
    """Dense ``X @ W + b`` for CSR-encoded X; returns float64 (n, L)."""
    n = indptr.shape[0] - 1
    matrix = sparse.csr_matrix((data, indices, indptr), shape=(n, weights.shape[0]))
    return np.asarray(matrix @ weights) + bias


def csr_grad_weights(indptr, indices, data, dlogits, out):
    """Accumulate ``X^T @ G`` into ``out`` (shape (n_features, L)); returns out."""
    n = indptr.shape[0] - 1
    matrix = sparse.csr_matrix((data, indices, indptr), shape=(n, out.shape[0]))
    out += np.asarray(matrix.T @ dlogits)
    return out


def sweep_confusion(probs, gold, thetas):
    """tp/fp/fn counts of ``probs >= theta`` against gold, per threshold.

    Returns int64 (K, 3) with columns tp, fp, fn.
    """
    preds = probs[None, :] >= thetas[:, None]
    positive = gold.astype(bool)
    tp = (preds & positive).sum(axis=1)
    fp = (preds & ~positive).sum(axis=1)
    fn = (~preds & positive).sum(axis=1)
    return np.stack([tp, fp, fn], axis=1).astype(np.int64)
