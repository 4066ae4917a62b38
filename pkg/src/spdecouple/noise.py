"""Reproducible discrete space-time white-noise increments.

Streams are counter-based: every block of draws is generated from a fresh
Philox generator keyed by (master_seed, stream_id, counter), so the sequence a
trajectory sees depends only on its identifiers, never on scheduling or on how
many other trajectories run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid


@dataclass
class NoiseStream:
    master_seed: int
    stream_id: int
    counter: int = 0

    def standard_block(self, shape) -> np.ndarray:
        """Next block of standard normals; advances the substream counter."""
        g = generator_for(self.master_seed, self.stream_id, self.counter)
        self.counter += 1
        return g.standard_normal(shape)

    def spawn(self, offset: int) -> "NoiseStream":
        """Fresh stream with a shifted stream_id (counter reset)."""
        return NoiseStream(self.master_seed, self.stream_id + offset)


def generator_for(master_seed: int, stream_id: int, counter: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(stream_id, counter))
    return np.random.Generator(np.random.Philox(seq))


def sample_white_increment(grid: Grid, dt: float, stream: NoiseStream) -> Field:
    """One discrete space-time white-noise increment over a step of length dt.

    Entries are i.i.d. Normal(0, dt/dx) in the normalized-indicator basis, so
    the projection onto any discretely-orthonormal direction is Normal(0, dt).
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    z = stream.standard_block(grid.n_interior)
    return Field(grid, np.sqrt(dt / grid.dx) * z)
