"""Benchmarking engine for pathology foundation-model features: slide
tiling, gated-attention MIL training over frozen tile embeddings, Monte-
Carlo cross-validated metrics, and significance-aware encoder comparison.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend  # noqa: F401
