"""Motion-based head and eye gesture recognition from frame-pair homographies."""

import os

__version__ = "0.1.0"

# The recurrence makes many small BLAS calls; on small machines the
# OpenBLAS thread pool thrashes badly between them. Default to one BLAS
# thread, overridable through EGOGEST_THREADS.
_threads = os.environ.get("EGOGEST_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", _threads)
os.environ.setdefault("OMP_NUM_THREADS", _threads)
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits

    _blas_limiter = _threadpool_limits(limits=int(_threads), user_api="blas")
except Exception:  # pragma: no cover - numpy still honors the env vars
    _blas_limiter = None
