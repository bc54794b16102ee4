# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels; mirrors ``_pykernels``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef unsigned long long u64

cdef u64 FNV_BASIS = 0xCBF29CE484222325ULL
cdef u64 FNV_PRIME = 0x100000001B3ULL


cdef inline u64 _fnv_update(u64 h, const unsigned char* p, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        h = (h ^ <u64>p[i]) * FNV_PRIME
    return h


def fnv1a64(bytes data):
    """64-bit FNV-1a over a byte string."""
    cdef const unsigned char* p = data
    return _fnv_update(FNV_BASIS, p, len(data))


def hash_ngrams(list tokens, bint unigrams, bint bigrams, long long hash_dim):
    """Hashed feature indices for a token sequence: unigrams, then bigrams."""
    cdef Py_ssize_t n = len(tokens)
    cdef Py_ssize_t count = 0
    if unigrams:
        count += n
    if bigrams and n > 1:
        count += n - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(count, dtype=np.int64)
    cdef list encoded = [t.encode("utf-8") for t in tokens]
    cdef Py_ssize_t k = 0, i
    cdef bytes first, second
    cdef const unsigned char* p
    cdef u64 h
    cdef u64 dim = <u64>hash_dim
    if unigrams:
        for i in range(n):
            first = encoded[i]
            p = first
            h = _fnv_update(FNV_BASIS, p, len(first))
            out[k] = <cnp.int64_t>(h % dim)
            k += 1
    if bigrams:
        for i in range(n - 1):
            first = encoded[i]
            second = encoded[i + 1]
            p = first
            h = _fnv_update(FNV_BASIS, p, len(first))
            h = (h ^ <u64>0x20) * FNV_PRIME
            p = second
            h = _fnv_update(h, p, len(second))
            out[k] = <cnp.int64_t>(h % dim)
            k += 1
    return out


def csr_logits(cnp.ndarray[cnp.int64_t, ndim=1] indptr,
               cnp.ndarray[cnp.int64_t, ndim=1] indices,
               cnp.ndarray[cnp.float64_t, ndim=1] data,
               cnp.ndarray[cnp.float64_t, ndim=2] weights,
               cnp.ndarray[cnp.float64_t, ndim=1] bias):
    """Dense ``X @ W + b`` for CSR-encoded X; returns float64 (n, L)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t n_labels = weights.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, n_labels), dtype=np.float64)
    cdef Py_ssize_t i, k, l
    cdef cnp.int64_t j
    cdef double v
    for i in range(n):
        for l in range(n_labels):
            out[i, l] = bias[l]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            v = data[k]
            for l in range(n_labels):
                out[i, l] += v * weights[j, l]
    return out


def csr_grad_weights(cnp.ndarray[cnp.int64_t, ndim=1] indptr,
                     cnp.ndarray[cnp.int64_t, ndim=1] indices,
                     cnp.ndarray[cnp.float64_t, ndim=1] data,
                     cnp.ndarray[cnp.float64_t, ndim=2] dlogits,
                     cnp.ndarray[cnp.float64_t, ndim=2] out):
    """Accumulate ``X^T @ G`` into ``out`` (shape (n_features, L)); returns out."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t n_labels = dlogits.shape[1]
    cdef Py_ssize_t i, k, l
    cdef cnp.int64_t j
    cdef double v
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            v = data[k]
            for l in range(n_labels):
                out[j, l] += v * dlogits[i, l]
    return out


def sweep_confusion(cnp.ndarray[cnp.float64_t, ndim=1] probs,
                    cnp.ndarray[cnp.int64_t, ndim=1] gold,
                    cnp.ndarray[cnp.float64_t, ndim=1] thetas):
    """tp/fp/fn counts of ``probs >= theta`` against gold, per threshold."""
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t n_thetas = thetas.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.zeros((n_thetas, 3), dtype=np.int64)
    cdef Py_ssize_t k, i
    cdef double t
    cdef cnp.int64_t tp, fp, fn
    for k in range(n_thetas):
        t = thetas[k]
        tp = 0
        fp = 0
        fn = 0
        for i in range(n):
            if probs[i] >= t:
                if gold[i]:
                    tp += 1
                else:
                    fp += 1
            elif gold[i]:
                fn += 1
        out[k, 0] = tp
        out[k, 1] = fp
        out[k, 2] = fn
    return out
