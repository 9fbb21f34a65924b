"""Small shared helpers: seeded RNG streams and thread wiring."""

from __future__ import annotations

import os
import zlib

import numpy as np


def rng_for(seed, tag):
    """Deterministic per-operation generator derived from (seed, tag)."""
    mix = zlib.crc32(tag.encode()) & 0xFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, mix]))


def configure_threads():
    """Apply the ENGINE_THREADS override (default: single-threaded)."""
    n = int(os.environ.get("ENGINE_THREADS", "1"))
    from . import grid

    grid.set_fft_workers(n)
    try:
        import numba

        numba.set_num_threads(max(1, n))
    except Exception:
        pass
    return n


def wrap_unit(x):
    """Map coordinates into [0, 1)."""
    return np.mod(x, 1.0)


def periodic_delta(a, b):
    """Shortest signed displacement a - b on the unit torus, componentwise."""
    d = a - b
    return d - np.round(d)
