"""Buffered random-number stream shared by every simulation engine.

One ``RandomStream`` wraps a PCG64 generator and serves scalar uniforms and
standard normals out of fixed-size blocks. Both the pure-Python and the
compiled engine consume draws through the same block discipline (refill whole
blocks of ``BLOCK`` values, hand them out in order), so a given seed produces
bit-identical trajectories on either engine. The block state is exposed
through the underscore attributes on purpose — the compiled engine reads the
buffers directly and calls the refill methods once per block.

Seeds are derived with ``numpy.random.SeedSequence``; replicate fan-out uses
``spawn_key`` so that (master seed, replicate index) is a documented,
version-stable keyed hash and no two replicates share a stream.
"""

from __future__ import annotations

import numpy as np

BLOCK = 4096


def seed_for_replicate(master_seed: int, *indices: int) -> np.random.SeedSequence:
    """Derive the SeedSequence for one replicate (keyed hash of master+indices)."""
    return np.random.SeedSequence(master_seed, spawn_key=tuple(indices))


class RandomStream:
    """Buffered scalar uniform/normal stream over a PCG64 generator."""

    def __init__(self, seed: int | np.random.SeedSequence | np.random.Generator):
        if isinstance(seed, np.random.Generator):
            self.generator = seed
        else:
            self.generator = np.random.Generator(np.random.PCG64(seed))
        self._ubuf = np.empty(BLOCK, dtype=np.float64)
        self._nbuf = np.empty(BLOCK, dtype=np.float64)
        self._iu = BLOCK  # next index to hand out; BLOCK means exhausted
        self._in = BLOCK

    # -- refills (called by either engine, one Python call per BLOCK draws) --

    def _refill_uniform(self) -> None:
        self._ubuf[:] = self.generator.random(BLOCK)
        self._iu = 0

    def _refill_normal(self) -> None:
        self._nbuf[:] = self.generator.standard_normal(BLOCK)
        self._in = 0

    # -- scalar draws --

    def next_uniform(self) -> float:
        """One uniform draw in [0, 1)."""
        if self._iu >= BLOCK:
            self._refill_uniform()
        u = self._ubuf[self._iu]
        self._iu += 1
        return float(u)

    def next_normal(self) -> float:
        """One standard-normal draw."""
        if self._in >= BLOCK:
            self._refill_normal()
        x = self._nbuf[self._in]
        self._in += 1
        return float(x)

    # -- bulk draws (same consumption order as repeated scalar draws) --

    def take_uniforms(self, k: int) -> np.ndarray:
        out = np.empty(k, dtype=np.float64)
        i = 0
        while i < k:
            if self._iu >= BLOCK:
                self._refill_uniform()
            take = min(k - i, BLOCK - self._iu)
            out[i : i + take] = self._ubuf[self._iu : self._iu + take]
            self._iu += take
            i += take
        return out

    def take_normals(self, k: int) -> np.ndarray:
        out = np.empty(k, dtype=np.float64)
        i = 0
        while i < k:
            if self._in >= BLOCK:
                self._refill_normal()
            take = min(k - i, BLOCK - self._in)
            out[i : i + take] = self._nbuf[self._in : self._in + take]
            self._in += take
            i += take
        return out
