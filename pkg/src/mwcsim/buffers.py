"""Per-cluster FIFO buffers with delay bookkeeping."""

from __future__ import annotations

from collections import deque

from mwcsim.netcoding import XorPacketEntry

__all__ = ["BufferError", "CloudBufferSet"]


class BufferError(RuntimeError):
    """Overflow or underflow; the selection step should have prevented it."""


class CloudBufferSet:
    """``n_buffers`` FIFOs of capacity ``J`` packets, moved in groups of ``Ms``.

    MWC uses one buffer per cluster; the MW-Max-Link baseline reuses this
    class with one buffer per (cluster, relay).
    """

    def __init__(self, n_buffers: int, J: int, Ms: int):
        if J % Ms:
            raise ValueError(f"buffer size J={J} must be a multiple of Ms={Ms}")
        self.J = J
        self.Ms = Ms
        self._fifos = [deque() for _ in range(n_buffers)]
        self.stored = 0
        self.retrieved = 0

    def __len__(self) -> int:
        return len(self._fifos)

    @property
    def groups_per_buffer(self) -> int:
        return self.J // self.Ms

    def occupancy(self, k: int) -> int:
        return len(self._fifos[k]) * self.Ms

    def occupancies(self) -> list[int]:
        return [len(f) * self.Ms for f in self._fifos]

    def can_store(self, k: int) -> bool:
        return self.occupancy(k) + self.Ms <= self.J

    def can_retrieve(self, k: int) -> bool:
        return bool(self._fifos[k])

    def store(self, k: int, entry: XorPacketEntry, current_slot: int) -> None:
        if not self.can_store(k):
            raise BufferError(f"buffer {k} is full ({self.occupancy(k)}/{self.J} packets)")
        entry.stored_slot = current_slot
        self._fifos[k].append(entry)
        self.stored += self.Ms

    def retrieve(self, k: int, current_slot: int) -> tuple[XorPacketEntry, int]:
        """Pop the oldest group and return it with its delay in slots."""
        if not self._fifos[k]:
            raise BufferError(f"buffer {k} is empty")
        entry = self._fifos[k].popleft()
        self.retrieved += self.Ms
        return entry, current_slot - entry.stored_slot

    def fullest(self) -> int | None:
        """Index of the fullest buffer (lowest index on ties), None if all empty."""
        occ = self.occupancies()
        best = max(occ)
        return occ.index(best) if best > 0 else None

    def total_packets(self) -> int:
        return sum(self.occupancies())
