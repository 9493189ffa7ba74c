"""Counter-based random streams keyed by (master seed, purpose, index).

Every stream is a Philox generator seeded from a ``SeedSequence`` whose
spawn key names the consumer, so a draw depends only on the seed and its
position, never on how work is split across threads.
"""

import zlib

import numpy as np

# spawn-key tags
SHARD = 0
RESTART = 1
ORACLE = 2
DECOUPLED = 3
UNDECOUPLED = 4
FIXTURE = 5


def stream(master_seed: int, tag: int, *index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(tag),) + tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(seq))


def name_key(name: str) -> int:
    """Stable integer for a text label (for fixture seeding)."""
    return zlib.crc32(name.encode())
