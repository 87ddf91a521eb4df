"""Named sub-seeds derived from the single run seed.

``derive_seed(seed, name)`` is the first 8 bytes (big-endian) of
``sha256(f"{seed}:{name}")``. Each consumer draws from its own name, so
adding a new consumer never shifts the random streams of existing ones.
"""

import hashlib


def derive_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")
