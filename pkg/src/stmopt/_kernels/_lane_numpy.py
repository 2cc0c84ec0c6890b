"""Vectorized numpy lane of the draw-stream scheme.

Must stay byte-identical to the compiled lane: same word layout, same
uniform mapping, same inverse-CDF (both lanes end up in the identical
cephes ``ndtri`` routine shipped with scipy).
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_INV53 = 2.0**-53
_SHIFT = np.uint64(11)

# Rows per chunk when accumulating a mean; bounds peak memory without
# changing the accumulation order.
_CHUNK_ROWS = 8192


def _blocks_per_sample(n: int) -> int:
    return (n + 3) // 4


def _words(key: np.ndarray, first_block: int, n_blocks: int) -> np.ndarray:
    return Philox(key=key, counter=first_block).random_raw(4 * n_blocks)


def normal_rows_at(key: np.ndarray, start: int, m: int, n: int) -> np.ndarray:
    b = _blocks_per_sample(n)
    words = _words(key, start * b, m * b).reshape(m, 4 * b)[:, :n]
    u = ((words >> _SHIFT).astype(np.float64) + 0.5) * _INV53
    return ndtri(u)


def normal_rows(key: np.ndarray, m: int, n: int) -> np.ndarray:
    return normal_rows_at(key, 0, m, n)


def normal_mean(key: np.ndarray, m: int, n: int) -> np.ndarray:
    acc = np.zeros(n, dtype=np.float64)
    done = 0
    while done < m:
        take = min(_CHUNK_ROWS, m - done)
        rows = normal_rows_at(key, done, take, n)
        # One add per row keeps the accumulation order identical to the
        # compiled lane's sample-order loop.
        for i in range(take):
            acc += rows[i]
        done += take
    return acc / m


def uniform_indices(key: np.ndarray, m: int, n_choices: int) -> np.ndarray:
    n_blocks = (m + 3) // 4
    words = _words(key, 0, n_blocks)[:m]
    v = (words >> _SHIFT).astype(np.float64) * _INV53
    idx = (v * n_choices).astype(np.int64)
    return np.minimum(idx, n_choices - 1)
