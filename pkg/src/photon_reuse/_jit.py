"""Kernel decorator with a numba fast path and a plain-Python fallback.

Set ``PHOTON_REUSE_JIT=0`` to run every kernel as ordinary Python. Both paths
execute the same source, so results agree bit for bit; the fallback exists for
debugging and for platforms without numba.
"""

import os

JIT_ENV = "PHOTON_REUSE_JIT"
THREADS_ENV = "PHOTON_REUSE_THREADS"

# numba sizes its thread pool at import; leave room for --workers up to 8
# even on small machines.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(os.cpu_count() or 1, 8)))
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")


def _flag_enabled(value):
    return value.strip().lower() not in ("0", "false", "off", "no")


JIT_ENABLED = _flag_enabled(os.environ.get(JIT_ENV, "1"))

if JIT_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if JIT_ENABLED:
    prange = numba.prange

    def kernel(fn=None, *, parallel=False):
        deco = numba.njit(cache=True, nogil=True, parallel=parallel, error_model="numpy")
        return deco if fn is None else deco(fn)

    def max_workers():
        return numba.config.NUMBA_NUM_THREADS

    def set_workers(n):
        n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
        return n

else:
    prange = range

    def kernel(fn=None, *, parallel=False):
        if fn is None:
            return lambda f: f
        return fn

    def max_workers():
        return 1

    def set_workers(n):
        return 1


def default_workers():
    env = os.environ.get(THREADS_ENV)
    if env:
        return int(env)
    return os.cpu_count() or 1
