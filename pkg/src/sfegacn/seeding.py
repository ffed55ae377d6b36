"""Named random streams derived from a single master seed."""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed, tag):
    """Return a 64-bit seed for the stream ``tag`` under master ``seed``.

    The derivation is ``blake2b(f"{seed}:{tag}")`` truncated to 8 bytes, so
    streams are stable across platforms and Python versions.
    """
    digest = hashlib.blake2b(f"{int(seed) & MASK64}:{tag}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def rng_for(seed, tag):
    return np.random.default_rng(derive_seed(seed, tag))
