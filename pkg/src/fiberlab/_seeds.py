"""Deterministic, platform-stable random stream derivation.

Every random draw in the package flows from an explicit master seed through
:func:`derive_rng`.  Streams are keyed by (master_seed, role, *indices) so any
component (one span's ASE, one candidate's scramble mask, ...) can be
regenerated in isolation.  Philox is counter-based, so streams are independent
of each other and bit-stable across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_rng", "derive_key"]


def derive_key(master_seed: int, *tags) -> int:
    """Hash (master_seed, *tags) into a 128-bit integer Philox key.

    Tags may be ints or short strings; the encoding is unambiguous
    (length-prefixed) so ("a", 1) and ("a1",) cannot collide.
    """
    h = hashlib.sha256()
    h.update(int(master_seed).to_bytes(32, "little", signed=True))
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            raw = b"i" + int(tag).to_bytes(32, "little", signed=True)
        elif isinstance(tag, str):
            raw = b"s" + tag.encode("utf-8")
        else:
            raise TypeError(f"unsupported tag type: {type(tag)!r}")
        h.update(len(raw).to_bytes(2, "little"))
        h.update(raw)
    return int.from_bytes(h.digest()[:16], "little")


def derive_rng(master_seed: int, *tags) -> np.random.Generator:
    """Return a Generator for the stream keyed by (master_seed, *tags)."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *tags)))
