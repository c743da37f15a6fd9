"""Counter-based random number generation.

Uniforms come from Philox with the key set to the user seed and the
counter's third word set to a block index, so any block of draws is
reproducible from (seed, block) alone, independent of how many blocks
other workers consume and in what order.  Normals are the inverse-CDF
transform of those uniforms.
"""

import numpy as np
from scipy.special import ndtri

# Paths are striped into fixed-size blocks so the draw layout never
# depends on the requested path count.
PATH_BLOCK = 16384

_INV53 = 1.0 / (1 << 53)


def block_uniforms(seed: int, block: int, n: int) -> np.ndarray:
    """``n`` uniforms in the open interval (0, 1) for the given block."""
    bg = np.random.Philox(key=np.uint64(seed), counter=[0, 0, np.uint64(block), 0])
    raw = bg.random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def block_normals(seed: int, block: int, n: int) -> np.ndarray:
    return ndtri(block_uniforms(seed, block, n))


def iter_blocks(n_total: int):
    """Yield (block_index, start, count) covering ``n_total`` items."""
    block = 0
    start = 0
    while start < n_total:
        count = min(PATH_BLOCK, n_total - start)
        yield block, start, count
        block += 1
        start += count
