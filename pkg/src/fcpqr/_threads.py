"""Scoped single-threaded BLAS.

The solver's matrices are small enough that threaded BLAS loses badly to
thread-pool wake-up latency (well over 10x per call on small boxes), and
experiment campaigns parallelize at the process level anyway.  Entry
points wrap their hot loops in this context; nesting is a no-op.
"""

import contextlib
import threading

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - environment without threadpoolctl
    threadpool_limits = None

_local = threading.local()


@contextlib.contextmanager
def single_thread_blas():
    if threadpool_limits is None or getattr(_local, "active", False):
        yield
        return
    _local.active = True
    try:
        with threadpool_limits(limits=1, user_api="blas"):
            yield
    finally:
        _local.active = False
