"""Kernel backend selection.

The numpy backend rides BLAS for the bag-sized matmuls and wins at every
realistic embedding width (see benchmarks/bench_gma.py), so it is the
default; the compiled twin stays available via ``MILBENCH_BACKEND=cython``
for cross-checking the hand-derived gradients against an independent
implementation.
"""

import os

from . import pure as _pure

_requested = os.environ.get("MILBENCH_BACKEND", "").lower()

if _requested == "cython":
    from . import _core as _impl  # raises if the extension did not build
else:
    _impl = _pure

BACKEND = _impl.BACKEND
KIND_CLASSIFICATION = _impl.KIND_CLASSIFICATION
KIND_REGRESSION = _impl.KIND_REGRESSION
gma_forward = _impl.gma_forward
gma_value_and_grad = _impl.gma_value_and_grad


def get_backend(name: str | None = None):
    """Return the module for an explicitly named backend (for benchmarks)."""
    if name in (None, "", "active"):
        return _impl
    if name == "pure":
        return _pure
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
