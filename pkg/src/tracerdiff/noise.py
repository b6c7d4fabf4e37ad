"""Reproducible Gaussian increments for parallel particle ensembles.

Every Brownian increment consumed anywhere in this package is a pure function
of ``(master_seed, particle index, step index, component)``.  That makes
trajectories bit-reproducible no matter how the ensemble is split across
worker processes, and no matter how a run is segmented into successive
``advance`` calls.

The mapping is realized with counter-keyed SFC64 streams: particles are
grouped into fixed chunks of ``CHUNK`` consecutive indices, steps into fixed
blocks of ``BLOCK`` consecutive indices, and each (chunk, block) pair owns an
independent bit stream derived from the master seed through
``numpy.random.SeedSequence`` spawn keys.  One stream fills a
``(BLOCK, dim, CHUNK)`` array of standard normals in a single vectorized call;
the value for (particle p, step s, component j) is entry
``[s % BLOCK, j, p % CHUNK]`` of the block owned by
``(p // CHUNK, s // BLOCK)``.

``CHUNK`` and ``BLOCK`` are part of the reproducibility contract: changing
them changes every draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Frozen layout constants (part of the determinism contract).
CHUNK = 8192   # particles per stream chunk
BLOCK = 128    # steps per noise block

# Stream kinds, kept disjoint via the first spawn-key word.
_KIND_INIT = 0    # initial particle positions
_KIND_STEPS = 1   # per-step Gaussian increments


def _generator(master_seed: int, kind: int, chunk_index: int, block_index: int):
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(kind, chunk_index, block_index))
    return np.random.Generator(np.random.SFC64(ss))


def normal_block(master_seed: int, chunk_index: int, block_index: int, dim: int) -> np.ndarray:
    """Standard-normal draws for one (chunk, block) tile, shape (BLOCK, dim, CHUNK).

    ``out[s, j, p]`` is the unit normal for step ``block_index*BLOCK + s``,
    component ``j``, particle ``chunk_index*CHUNK + p``.
    """
    g = _generator(master_seed, _KIND_STEPS, chunk_index, block_index)
    return g.standard_normal((BLOCK, dim, CHUNK))


def uniform_chunk(master_seed: int, chunk_index: int, dim: int) -> np.ndarray:
    """Uniform [0, 1) draws used for initial positions, shape (CHUNK, dim)."""
    g = _generator(master_seed, _KIND_INIT, chunk_index, 0)
    return g.random((CHUNK, dim))


def derive_seed(master_seed: int, tag: int) -> int:
    """A child 64-bit seed, for runs that need independent randomness."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(2, tag, 0))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class RngStream:
    """Counter-based view of one particle's increment stream.

    The draw at ``counter`` is component ``counter % dim`` of step
    ``counter // dim`` -- identical to what the ensemble machinery consumes
    for that particle, so a replayed stream reproduces a trajectory's noise
    exactly.
    """

    master_seed: int
    stream_id: int
    counter: int = 0

    def gaussian_increments(self, dim: int, dt: float) -> np.ndarray:
        """Next ``dim`` independent sqrt(dt)*N(0,1) increments; advances the counter."""
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if dt <= 0:
            raise ValueError("dt must be positive")
        if self.counter % dim != 0:
            raise ValueError("counter is not aligned to a step boundary")
        step = self.counter // dim
        block = normal_block(self.master_seed, self.stream_id // CHUNK,
                             step // BLOCK, dim)
        z = block[step % BLOCK, :, self.stream_id % CHUNK].copy()
        self.counter += dim
        return np.sqrt(dt) * z


def gaussian_increments(stream: RngStream, dim: int, dt: float) -> np.ndarray:
    """Functional form of :meth:`RngStream.gaussian_increments`."""
    return stream.gaussian_increments(dim, dt)
