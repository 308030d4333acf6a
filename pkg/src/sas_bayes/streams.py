"""Named random streams.

Every stream is a Philox (counter-based) generator keyed by the run seed and
a purpose tag, plus an index for per-replica streams. Streams never share
state, so results do not depend on how work is scheduled.
"""
import numpy as np

DATA = 0
REPLICA = 1
EXCHANGE = 2


def stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(ss))


class UniformBlock:
    """Buffered uniform draws from one stream, ``width`` numbers per call."""

    def __init__(self, gen: np.random.Generator, width: int, block: int = 1024):
        self._gen = gen
        self._width = width
        self._block = block
        self._buf = np.empty((0, width))
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self._buf.shape[0]:
            self._buf = self._gen.random((self._block, self._width))
            self._pos = 0
        row = self._buf[self._pos]
        self._pos += 1
        return row
