"""Small shared helpers."""

from __future__ import annotations

import hashlib


def derive_seed(root, *parts):
    """Deterministic 63-bit child seed from a root seed and a tag path.

    All randomness flows from one root seed split hierarchically, so any
    sub-computation is reproducible in isolation.
    """
    blob = ":".join([str(root)] + [str(p) for p in parts]).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1
