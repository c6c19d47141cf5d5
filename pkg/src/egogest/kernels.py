"""Recurrence kernels for the sequence model.

The per-timestep LSTM loop dominates training time, so it is compiled
with numba when available. Set EGOGEST_KERNELS=numpy to force the pure
numpy path (same function bodies, undecorated), or =numba to fail hard
when numba is missing. Large batched matrix products stay outside the
kernels where BLAS already handles them.

Gate layout along the last axis is [input | forget | cell | output].
Time-major layout (T, M, .) keeps per-step slices contiguous.
"""

import os

import numpy as np

BACKEND_ENV = "EGOGEST_KERNELS"


def _pick_backend() -> str:
    choice = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if choice not in {"auto", "numba", "numpy"}:
        raise ValueError(f"{BACKEND_ENV} must be one of auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise RuntimeError("EGOGEST_KERNELS=numba but numba is not importable")
        return "numpy"
    return "numba"


ACTIVE_BACKEND = _pick_backend()

if ACTIVE_BACKEND == "numba":
    from numba import njit
else:

    def njit(*args, **kwargs):
        # no-op decorator so the same bodies run under plain numpy
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def lstm_forward_kernel(pre, w_hh, h0, c0):
    """Run the LSTM recurrence.

    pre:  (T, M, 4H) input projections, bias already added
    w_hh: (H, 4H) recurrent weights
    h0, c0: (M, H) initial states

    Returns hidden/cell stacks (step 0 = initial state) and the gate and
    tanh(c) activations needed by the backward pass.
    """
    T, M, H4 = pre.shape
    H = H4 // 4
    hs = np.empty((T + 1, M, H))
    cs = np.empty((T + 1, M, H))
    hs[0] = h0
    cs[0] = c0
    gi = np.empty((T, M, H))
    gf = np.empty((T, M, H))
    gg = np.empty((T, M, H))
    go = np.empty((T, M, H))
    tc = np.empty((T, M, H))
    for t in range(T):
        a = pre[t] + np.dot(hs[t], w_hh)
        i = 1.0 / (1.0 + np.exp(-a[:, 0:H]))
        f = 1.0 / (1.0 + np.exp(-a[:, H : 2 * H]))
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = 1.0 / (1.0 + np.exp(-a[:, 3 * H : 4 * H]))
        c = f * cs[t] + i * g
        th = np.tanh(c)
        gi[t] = i
        gf[t] = f
        gg[t] = g
        go[t] = o
        cs[t + 1] = c
        tc[t] = th
        hs[t + 1] = o * th
    return hs, cs, gi, gf, gg, go, tc


@njit(cache=True)
def lstm_backward_kernel(dh_out, w_hh_t, hs, cs, gi, gf, gg, go, tc):
    """Backpropagate through time.

    dh_out: (T, M, H) gradient flowing into each emitted hidden state
    w_hh_t: (4H, H) transposed recurrent weights (C-contiguous)

    Returns pre-activation gate gradients (T, M, 4H) plus gradients for
    the initial hidden and cell state. Weight gradients are reduced
    outside with single large matrix products.
    """
    T, M, H = dh_out.shape
    da = np.empty((T, M, 4 * H))
    dh = np.zeros((M, H))
    dc = np.zeros((M, H))
    for t in range(T - 1, -1, -1):
        dht = dh_out[t] + dh
        do = dht * tc[t]
        dct = dc + dht * go[t] * (1.0 - tc[t] * tc[t])
        di = dct * gg[t]
        dg = dct * gi[t]
        df = dct * cs[t]
        dc = dct * gf[t]
        da[t, :, 0:H] = di * gi[t] * (1.0 - gi[t])
        da[t, :, H : 2 * H] = df * gf[t] * (1.0 - gf[t])
        da[t, :, 2 * H : 3 * H] = dg * (1.0 - gg[t] * gg[t])
        da[t, :, 3 * H : 4 * H] = do * go[t] * (1.0 - go[t])
        dh = np.dot(da[t], w_hh_t)
    return da, dh, dc


def numpy_reference(kernel):
    """Return the plain-python body of a kernel (the numpy fallback)."""
    return getattr(kernel, "py_func", kernel)
