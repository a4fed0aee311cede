"""Seeded, order-independent random substreams.

Every stream is a Philox counter generator keyed by ``(seed, *key)``, so a
chunk of slots produces the same numbers no matter which worker runs it or in
which order chunks are processed.
"""
import zlib

import numpy as np


def label_key(label: str) -> int:
    """Stable 32-bit integer for a text label (``hash`` is salted per process)."""
    return zlib.crc32(label.encode("utf-8"))


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# stream purposes; used as the first key element
SPACES = 1
WARMUP = 2
SLOTS = 3
TABLES = 4
