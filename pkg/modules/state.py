from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np

from .errors import DomainError
from .rng import StreamFactory

EVENT_KINDS = ("natural_death", "competition_death", "clonal_birth", "mutant_birth", "no_op")


class Individual:
    """One atom (x, u) of the population measure; ``t_sync`` is when x was last advanced."""

    __slots__ = ("x", "u", "t_sync", "serial", "stream")

    def __init__(
        self,
        x: float,
        u: float,
        t_sync: float = 0.0,
        serial: int = -1,
        stream: Optional[np.random.Generator] = None,
    ) -> None:
        self.x = x
        self.u = u
        self.t_sync = t_sync
        self.serial = serial
        self.stream = stream

    def __repr__(self) -> str:
        return f"Individual(x={self.x!r}, u={self.u!r}, t_sync={self.t_sync!r}, serial={self.serial})"


@dataclass
class Population:
    individuals: List[Individual] = field(default_factory=list)
    t: float = 0.0
    streams: Optional[StreamFactory] = None
    next_serial: int = 0

    @classmethod
    def from_points(
        cls,
        points: Iterable[tuple[float, float]],
        *,
        domain=None,
        streams: Optional[StreamFactory] = None,
        t: float = 0.0,
    ) -> Population:
        pop = cls(t=t, streams=streams)
        for x, u in points:
            if domain is not None and not (domain.contains_x(x) and domain.contains_u(u)):
                raise DomainError(f"initial individual ({x}, {u}) lies outside the boxes")
            pop.spawn(float(x), float(u))
        return pop

    @property
    def size(self) -> int:
        return len(self.individuals)

    def __len__(self) -> int:
        return len(self.individuals)

    def spawn(self, x: float, u: float) -> Individual:
        serial = self.next_serial
        self.next_serial += 1
        stream = self.streams.individual_stream(serial) if self.streams is not None else None
        ind = Individual(x, u, self.t, serial, stream)
        self.individuals.append(ind)
        return ind

    def remove(self, index: int) -> Individual:
        """O(1) removal; the last individual takes the freed slot."""
        inds = self.individuals
        last = inds.pop()
        if index < len(inds):
            removed = inds[index]
            inds[index] = last
            return removed
        return last

    def positions(self) -> np.ndarray:
        return np.fromiter((ind.x for ind in self.individuals), dtype=float, count=len(self.individuals))

    def traits(self) -> np.ndarray:
        return np.fromiter((ind.u for ind in self.individuals), dtype=float, count=len(self.individuals))

    def serials(self) -> np.ndarray:
        return np.fromiter((ind.serial for ind in self.individuals), dtype=np.int64, count=len(self.individuals))

    def copy(self, streams: Optional[StreamFactory] = None) -> Population:
        """Deep copy; with ``streams`` every individual is rekeyed to that factory."""
        factory = streams if streams is not None else self.streams
        inds = []
        for ind in self.individuals:
            stream = factory.individual_stream(ind.serial) if streams is not None else ind.stream
            inds.append(Individual(ind.x, ind.u, ind.t_sync, ind.serial, stream))
        return Population(individuals=inds, t=self.t, streams=factory, next_serial=self.next_serial)


@dataclass(frozen=True)
class EventOutcome:
    kind: str
    actor: int
    partner: Optional[int] = None
    mutant_trait: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if (self.partner is not None) != (self.kind == "competition_death"):
            raise ValueError("partner is set exactly for competition deaths")
        if (self.mutant_trait is not None) != (self.kind == "mutant_birth"):
            raise ValueError("mutant_trait is set exactly for mutant births")

    def to_record(self, t: float) -> dict:
        record = {"t": t, "kind": self.kind, "actor": self.actor}
        if self.partner is not None:
            record["partner"] = self.partner
        if self.mutant_trait is not None:
            record["trait"] = self.mutant_trait
        return record


@dataclass(frozen=True)
class Snapshot:
    t: float
    ids: np.ndarray
    x: np.ndarray
    u: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ids.size)

    @classmethod
    def of(cls, pop: Population, t: float) -> Snapshot:
        return cls(t=t, ids=pop.serials(), x=pop.positions(), u=pop.traits())

    @classmethod
    def empty(cls, t: float) -> Snapshot:
        return cls(t=t, ids=np.zeros(0, dtype=np.int64), x=np.zeros(0), u=np.zeros(0))


@dataclass
class Trajectory:
    seed: int
    snapshots: List[Snapshot] = field(default_factory=list)
    event_log: Optional[List[tuple[float, EventOutcome]]] = None
    event_count: int = 0
    extinct_at: Optional[float] = None
    max_size: int = 0

    def append(self, snapshot: Snapshot) -> None:
        if self.snapshots and snapshot.t <= self.snapshots[-1].t:
            raise ValueError("snapshot times must be strictly increasing")
        self.snapshots.append(snapshot)

    def sizes(self) -> list[int]:
        return [s.size for s in self.snapshots]

    def at(self, t: float) -> Snapshot:
        for snap in self.snapshots:
            if abs(snap.t - t) <= 1e-12 * max(1.0, abs(t)):
                return snap
        raise KeyError(t)
