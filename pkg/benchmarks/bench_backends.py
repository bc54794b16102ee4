"""Compare the compiled and pure-Python kernel backends on realistic shapes.

Each kernel is timed on both backends (when the compiled one is available)
and the outputs are cross-checked first, so a speedup line is only printed
for work that agrees. Run from a checkout:

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from polarpipe import _kernels as kernels


def _time(fn, repeats: int) -> float:
    fn()  # warm-up, also materializes any lazy allocation
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _docs(rng: np.random.RandomState, n_docs: int, doc_len: int) -> list[list[str]]:
    vocab = [f"tok{i}" for i in range(5000)]
    return [
        [vocab[j] for j in rng.randint(0, len(vocab), size=doc_len)]
        for _ in range(n_docs)
    ]


def _csr(rng: np.random.RandomState, n_rows: int, nnz_per_row: int, dim: int):
    indptr = [0]
    indices = []
    for _ in range(n_rows):
        cols = np.unique(rng.randint(0, dim, size=nnz_per_row))
        indices.extend(cols.tolist())
        indptr.append(len(indices))
    return (
        np.array(indptr, dtype=np.int64),
        np.array(indices, dtype=np.int64),
        rng.rand(len(indices)),
    )


def build_workloads(rng: np.random.RandomState):
    dim = 2**18
    n_labels = 5
    docs = _docs(rng, n_docs=300, doc_len=25)
    indptr, indices, data = _csr(rng, n_rows=2000, nnz_per_row=40, dim=dim)
    weights = rng.randn(dim, n_labels) * 0.1
    bias = rng.randn(n_labels) * 0.1
    dlogits = rng.randn(len(indptr) - 1, n_labels)
    probs = rng.rand(20000)
    gold = (rng.rand(20000) < 0.3).astype(np.int64)
    thetas = np.arange(10, 91) / 100.0

    def run_hash():
        for tokens in docs:
            kernels.hash_ngrams(tokens, True, True, dim)

    def run_logits():
        return kernels.csr_logits(indptr, indices, data, weights, bias)

    def run_grad():
        out = np.zeros_like(weights)
        return kernels.csr_grad_weights(indptr, indices, data, dlogits, out)

    def run_sweep():
        return kernels.sweep_confusion(probs, gold, thetas)

    return {
        "hash_ngrams (300 docs x 25 tokens)": run_hash,
        "csr_logits (2000 x 262144, 5 labels)": run_logits,
        "csr_grad_weights (same shape)": run_grad,
        "sweep_confusion (20000 probs, 81 thetas)": run_sweep,
    }


def check_agreement(workloads) -> None:
    """Every kernel with a return value must agree across backends."""
    if len(kernels.available_backends()) < 2:
        return
    for name, fn in workloads.items():
        results = {}
        for backend in kernels.available_backends():
            kernels.use_backend(backend)
            results[backend] = fn()
        a, b = results["python"], results["cython"]
        if a is None:
            continue
        if np.issubdtype(a.dtype, np.integer):
            assert np.array_equal(a, b), f"{name}: integer outputs differ"
        else:
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12), f"{name}: outputs differ"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per kernel (best kept)")
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"backends available: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled extension not built; timing the python backend only")

    rng = np.random.RandomState(7)
    workloads = build_workloads(rng)
    check_agreement(workloads)

    width = max(len(n) for n in workloads)
    header = f"{'kernel'.ljust(width)}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, fn in workloads.items():
        times = {}
        for backend in backends:
            kernels.use_backend(backend)
            times[backend] = _time(fn, args.repeats)
        row = name.ljust(width) + "  " + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
