"""Splittable counter-based random streams.

Every stream is a numpy ``Philox`` generator keyed by ``(seed hash, stream key)``.
Individuals draw their diffusion increments from the stream keyed by their
serial number, so a trajectory does not depend on the order in which the
engine happens to touch individuals.
"""
from __future__ import annotations

import numpy as np

EVENT_STREAM_KEY = 2**63
AUX_STREAM_KEY = 2**63 + 1

_BUFFER_SIZE = 4096


def _seed_word(seed: int) -> int:
    return int(np.random.SeedSequence(int(seed)).generate_state(1, dtype=np.uint64)[0])


class StreamFactory:
    """Hands out independent generators derived from one integer seed."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._word = _seed_word(self.seed)

    def generator(self, key: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[self._word, int(key)]))

    def individual_stream(self, serial: int) -> np.random.Generator:
        return self.generator(serial)

    def event_stream(self) -> EventStream:
        return EventStream(self.generator(EVENT_STREAM_KEY))

    def aux_stream(self) -> np.random.Generator:
        return self.generator(AUX_STREAM_KEY)

    def spawn(self, index: int) -> StreamFactory:
        """Child factory for replicate ``index`` (replicates never share keys)."""
        child = np.random.SeedSequence(self.seed, spawn_key=(int(index),))
        return StreamFactory(int(child.generate_state(1, dtype=np.uint32)[0]) + (int(index) << 32))


class EventStream:
    """Buffered scalar draws for the event loop.

    numpy scalar calls cost far more than a list pop, so uniforms and unit
    exponentials are drawn in blocks.
    """

    def __init__(self, generator: np.random.Generator) -> None:
        self.generator = generator
        self._uniforms: list[float] = []
        self._exponentials: list[float] = []

    def uniform(self) -> float:
        if not self._uniforms:
            self._uniforms = self.generator.random(_BUFFER_SIZE).tolist()
            self._uniforms.reverse()
        return self._uniforms.pop()

    def exponential(self) -> float:
        """Unit-mean exponential."""
        if not self._exponentials:
            self._exponentials = self.generator.standard_exponential(_BUFFER_SIZE).tolist()
            self._exponentials.reverse()
        return self._exponentials.pop()

    def normal(self, loc: float = 0.0, scale: float = 1.0) -> float:
        return float(self.generator.normal(loc, scale))
