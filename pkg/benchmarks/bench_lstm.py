"""Benchmark the recurrence kernels: numba-compiled vs pure numpy.

Runs the forward and backward kernels at the training batch shape and
prints per-call times for both code paths. The numpy path is the same
function body, undecorated (kernel.py_func), which is exactly what the
package falls back to with EGOGEST_KERNELS=numpy.

Usage: python benchmarks/bench_lstm.py [iters]
"""

import sys
import time

import numpy as np

import egogest  # noqa: F401  (pins BLAS threads)
from egogest.kernels import (
    ACTIVE_BACKEND,
    lstm_backward_kernel,
    lstm_forward_kernel,
    numpy_reference,
)

T, M, H, D = 40, 32, 128, 32


def timeit(fn, args, iters):
    fn(*args)  # warmup / JIT
    start = time.perf_counter()
    for _ in range(iters):
        fn(*args)
    return (time.perf_counter() - start) / iters


def main() -> int:
    iters = int(sys.argv[1]) if len(sys.argv) > 1 else 30
    rng = np.random.default_rng(0)
    pre = rng.normal(size=(T, M, 4 * H))
    w_hh = rng.normal(size=(H, 4 * H)) * 0.05
    h0 = np.zeros((M, H))
    c0 = np.zeros((M, H))
    hs, cs, gi, gf, gg, go, tc = lstm_forward_kernel(pre, w_hh, h0, c0)
    dh = rng.normal(size=(T, M, H))
    w_hh_t = np.ascontiguousarray(w_hh.T)
    bwd_args = (dh, w_hh_t, hs, cs, gi, gf, gg, go, tc)

    rows = []
    rows.append(("forward", ACTIVE_BACKEND,
                 timeit(lstm_forward_kernel, (pre, w_hh, h0, c0), iters)))
    rows.append(("backward", ACTIVE_BACKEND,
                 timeit(lstm_backward_kernel, bwd_args, iters)))
    np_fwd = numpy_reference(lstm_forward_kernel)
    np_bwd = numpy_reference(lstm_backward_kernel)
    if np_fwd is not lstm_forward_kernel:
        rows.append(("forward", "numpy", timeit(np_fwd, (pre, w_hh, h0, c0), iters)))
        rows.append(("backward", "numpy", timeit(np_bwd, bwd_args, iters)))
        a = lstm_forward_kernel(pre, w_hh, h0, c0)
        b = np_fwd(pre, w_hh, h0, c0)
        parity = max(float(np.abs(x - y).max()) for x, y in zip(a, b))
        print(f"# backend parity: max abs diff {parity:.3e}")
    else:
        print("# numba unavailable or disabled; timing the numpy path only")

    print(f"# shape T={T} M={M} H={H} D={D}, {iters} iters")
    print(f"{'kernel':<10} {'backend':<8} {'ms/call':>9}")
    for kernel, backend, sec in rows:
        print(f"{kernel:<10} {backend:<8} {sec * 1e3:9.2f}")
    by_key = {(k, b): s for k, b, s in rows}
    if ("forward", "numpy") in by_key and ACTIVE_BACKEND == "numba":
        for kernel in ("forward", "backward"):
            ratio = by_key[(kernel, "numpy")] / by_key[(kernel, "numba")]
            print(f"# {kernel}: numba is {ratio:.2f}x the numpy path")
    return 0


if __name__ == "__main__":
    sys.exit(main())
