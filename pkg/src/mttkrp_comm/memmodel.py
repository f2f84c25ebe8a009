"""Two-level sequential memory machine.

The machine audits traffic declared by an algorithm. Addresses are symbolic
hashables (array id plus index or index range) with a word size; nothing is
cached or replaced behind the algorithm's back.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Hashable, Sequence

from .errors import CapacityViolation, SimulatorBugError

CSV_HEADER = "alg,N,dims,R,M,b,loads,stores,nary,adds"


@dataclass
class CostLedger:
    loads: int = 0
    stores: int = 0
    nary_multiplies: int = 0
    additions: int = 0
    credited: int = 0  # words waived by a warm start

    @property
    def words(self) -> int:
        """Loads plus stores, net of any warm-start allowance."""
        return self.loads + self.stores - self.credited

    def __iadd__(self, other: "CostLedger") -> "CostLedger":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def csv_row(self, alg: str, dims: Sequence[int], R: int, M: int, b: int | str = "") -> str:
        return ",".join(
            map(
                str,
                (alg, len(dims), "x".join(map(str, dims)), R, M, b,
                 self.loads, self.stores, self.nary_multiplies, self.additions),
            )
        )


class MemoryMachine:
    """Fast memory of ``capacity`` words in front of an unbounded slow memory.

    With ``warm_start`` the first ``capacity`` words ever loaded and the last
    ``capacity`` words stored are waived, modelling inputs that begin and
    outputs that end in fast memory.
    """

    def __init__(self, capacity: int, warm_start: bool = False):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.warm_start = warm_start
        self.ledger = CostLedger()
        self.resident: dict[Hashable, int] = {}
        self.occupancy = 0
        self.peak = 0
        self._seen: set[Hashable] = set()
        self._warm_loads = 0
        self._finished = False

    def load(self, address: Hashable, size: int = 1) -> None:
        if address in self.resident:
            raise SimulatorBugError(f"{address!r} is already resident")
        if self.occupancy + size > self.capacity:
            raise CapacityViolation(
                f"loading {size} word(s) at {address!r} exceeds capacity "
                f"{self.capacity} (occupancy {self.occupancy})"
            )
        self.resident[address] = size
        self.occupancy += size
        self.peak = max(self.peak, self.occupancy)
        self.ledger.loads += size
        if self.warm_start and address not in self._seen:
            free = min(size, self.capacity - self._warm_loads)
            self._warm_loads += free
            self.ledger.credited += free
        if self.warm_start:
            self._seen.add(address)

    def evict(self, address: Hashable, dirty: bool = False) -> None:
        try:
            size = self.resident.pop(address)
        except KeyError:
            raise SimulatorBugError(f"evicting non-resident address {address!r}") from None
        self.occupancy -= size
        if dirty:
            self.ledger.stores += size

    def store(self, address: Hashable) -> None:
        """Write a live value back to slow memory and free its slot."""
        self.evict(address, dirty=True)

    def multiply(self, count: int = 1) -> None:
        self.ledger.nary_multiplies += count

    def add(self, count: int = 1) -> None:
        self.ledger.additions += count

    def finish(self) -> CostLedger:
        """Close the run: everything must be evicted; apply the store allowance."""
        if self.resident:
            raise SimulatorBugError(f"{len(self.resident)} address(es) still resident at exit")
        if self.warm_start and not self._finished:
            self.ledger.credited += min(self.capacity, self.ledger.stores)
        self._finished = True
        return self.ledger
