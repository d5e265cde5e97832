"""BLAS thread control for the Monte Carlo hot paths.

The matrices here are small (N up to a few hundred), where BLAS thread-pool
synchronization costs far more than it saves; replicate-level parallelism is
handled by our own worker pools instead.
"""

from __future__ import annotations

import contextlib

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - threadpoolctl ships with scipy stacks
    def threadpool_limits(limits=None, user_api=None):
        return contextlib.nullcontext()


def single_threaded_blas():
    """Context manager pinning BLAS pools to one thread."""
    return threadpool_limits(limits=1, user_api="blas")
