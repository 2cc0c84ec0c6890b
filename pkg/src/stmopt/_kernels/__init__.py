"""Counter-addressed random-draw kernels shared by every stochastic oracle.

Draws come from keyed Philox4x64 streams with a fixed per-sample footprint:
normal sample ``i`` of dimension ``n`` owns the 4-word counter blocks
``[i*b, (i+1)*b)`` with ``b = ceil(n/4)``, one word per coordinate and the
remainder discarded as padding.  Each word maps to a uniform through its top
53 bits, ``u = ((word >> 11) + 0.5) * 2**-53``, and to a normal through the
inverse normal CDF.  Unlike rejection-based normal generators, the inverse
CDF consumes a fixed number of words per sample, which is what makes the
counter addressing exact: any sample can be regenerated, or drawn in
parallel, independently of the rest of its batch, and redrawing a batch
under a fresh key never disturbs neighbouring streams.

Two interchangeable lanes implement the scheme: a compiled Cython kernel
(single pass over the bit stream, no intermediate arrays) and a vectorized
numpy fallback.  They produce byte-identical output; the compiled lane is
preferred at import time when the extension is built.  Set the environment
variable ``STMOPT_KERNEL`` to ``compiled`` or ``numpy`` to force a lane.
"""

from __future__ import annotations

import os

import numpy as np

from . import _lane_numpy

try:
    from . import _lane_c
except ImportError:  # extension not built; fall back silently
    _lane_c = None

_forced = os.environ.get("STMOPT_KERNEL", "").strip().lower()
if _forced == "numpy":
    _lane = _lane_numpy
elif _forced == "compiled":
    if _lane_c is None:
        raise ImportError(
            "STMOPT_KERNEL=compiled requested but the compiled kernel is not built"
        )
    _lane = _lane_c
elif _forced:
    raise ImportError(f"unknown STMOPT_KERNEL value {_forced!r}")
else:
    _lane = _lane_c if _lane_c is not None else _lane_numpy

ACTIVE_LANE = "compiled" if _lane is _lane_c else "numpy"


def derive_key(*path: int) -> np.ndarray:
    """Hash integer path components into a 2-word Philox key.

    The path is fed through ``numpy.random.SeedSequence``, so distinct paths
    give statistically independent streams.  Components must be nonnegative.
    """
    return np.random.SeedSequence(tuple(int(p) for p in path)).generate_state(
        2, np.uint64
    )


def _as_key(key) -> np.ndarray:
    key = np.asarray(key, dtype=np.uint64)
    if key.shape != (2,):
        raise ValueError(f"key must be two uint64 words, got shape {key.shape}")
    return key


def normal_rows(key, m: int, n: int) -> np.ndarray:
    """Draw ``m`` independent standard-normal rows of dimension ``n``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    return _lane.normal_rows(_as_key(key), int(m), int(n))


def normal_rows_at(key, start: int, m: int, n: int) -> np.ndarray:
    """Rows ``[start, start+m)`` of the stream, independent of batch size."""
    if start < 0 or m < 1 or n < 1:
        raise ValueError("start must be >= 0, m and n positive")
    return _lane.normal_rows_at(_as_key(key), int(start), int(m), int(n))


def normal_mean(key, m: int, n: int) -> np.ndarray:
    """Mean of ``normal_rows(key, m, n)``, accumulated in sample order."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    return _lane.normal_mean(_as_key(key), int(m), int(n))


def uniform_indices(key, m: int, n_choices: int) -> np.ndarray:
    """Draw ``m`` uniform indices in ``[0, n_choices)``, one stream word each."""
    if m < 1 or n_choices < 1:
        raise ValueError("m and n_choices must be positive")
    return _lane.uniform_indices(_as_key(key), int(m), int(n_choices))
