"""Hot-loop kernels with a compiled and a pure-Python backend.

The compiled extension (``_ckernels``, built from Cython at install time) is
preferred when the import succeeds; otherwise the numpy/scipy fallback in
``_pykernels`` is used. Selection can be forced with the environment
variable ``POLARPIPE_BACKEND`` (``cython`` or ``python``) or at runtime with
:func:`use_backend`. Integer kernels (token hashing, confusion counts)
return bit-identical results on both backends.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_modules = {"python": _pykernels}
if _ckernels is not None:
    _modules["cython"] = _ckernels


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_modules))


def active_backend() -> str:
    return _active


def use_backend(name: str) -> None:
    """Switch the process-wide kernel backend."""
    global _active
    if name not in _modules:
        raise ValueError(
            f"backend {name!r} is not available; choices: {sorted(_modules)}"
        )
    _active = name


_requested = os.environ.get("POLARPIPE_BACKEND", "").strip().lower()
if _requested:
    if _requested not in _modules:
        raise ImportError(
            f"POLARPIPE_BACKEND={_requested!r} is not available; choices: {sorted(_modules)}"
        )
    _active = _requested
else:
    _active = "cython" if "cython" in _modules else "python"


def fnv1a64(data: bytes) -> int:
    return _modules[_active].fnv1a64(data)


def hash_ngrams(tokens: list[str], unigrams: bool, bigrams: bool, hash_dim: int) -> np.ndarray:
    return _modules[_active].hash_ngrams(list(tokens), bool(unigrams), bool(bigrams), int(hash_dim))


def csr_logits(indptr, indices, data, weights, bias) -> np.ndarray:
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    data = np.ascontiguousarray(data, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    return _modules[_active].csr_logits(indptr, indices, data, weights, bias)


def csr_grad_weights(indptr, indices, data, dlogits, out) -> np.ndarray:
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    data = np.ascontiguousarray(data, dtype=np.float64)
    dlogits = np.ascontiguousarray(dlogits, dtype=np.float64)
    if out.dtype != np.float64 or not out.flags.c_contiguous:
        raise ValueError("out must be a C-contiguous float64 array")
    return _modules[_active].csr_grad_weights(indptr, indices, data, dlogits, out)


def sweep_confusion(probs, gold, thetas) -> np.ndarray:
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    gold = np.ascontiguousarray(gold, dtype=np.int64)
    thetas = np.ascontiguousarray(thetas, dtype=np.float64)
    return _modules[_active].sweep_confusion(probs, gold, thetas)
