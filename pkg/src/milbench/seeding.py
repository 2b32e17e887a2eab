"""Content-addressed seed derivation.

Every random decision in the pipeline draws from a generator seeded by a
hash of the identifying context (task id, split index, run index, ...), so
results are independent of scheduling and identical across platforms.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Map an ordered tuple of context values to a stable 64-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_from(*parts) -> np.random.Generator:
    """Generator keyed by context; PCG64 is stable across platforms."""
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
