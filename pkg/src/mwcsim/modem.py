"""BPSK mapping and exhaustive candidate enumeration."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Constellation",
    "BPSK",
    "Packet",
    "map_bits",
    "demap_symbols",
    "enumerate_candidates",
    "candidate_differences",
    "MAX_CANDIDATES",
]

MAX_CANDIDATES = 2**20


@dataclass(frozen=True)
class Constellation:
    name: str
    points: tuple
    bits_per_symbol: int

    def __post_init__(self):
        if len(self.points) != 2**self.bits_per_symbol:
            raise ValueError("constellation size must be 2**bits_per_symbol")
        energy = np.mean(np.abs(np.asarray(self.points)) ** 2)
        if not np.isclose(energy, 1.0):
            raise ValueError(f"constellation must have unit average energy, got {energy}")

    @property
    def size(self) -> int:
        return len(self.points)


# bit 0 -> +1, bit 1 -> -1
BPSK = Constellation("BPSK", (1.0 + 0j, -1.0 + 0j), 1)


@dataclass
class Packet:
    bits: np.ndarray
    origin: int
    cluster: int
    created_slot: int


def map_bits(bits, constellation: Constellation = BPSK) -> np.ndarray:
    """Map bits to symbols. Works elementwise on arrays of any shape for BPSK."""
    b = np.asarray(bits, dtype=np.int64)
    if constellation.bits_per_symbol != 1:
        if b.shape[-1] % constellation.bits_per_symbol:
            raise ValueError("bit count not divisible by bits per symbol")
        b = b.reshape(*b.shape[:-1], -1, constellation.bits_per_symbol)
        b = b @ (1 << np.arange(constellation.bits_per_symbol)[::-1])
    if np.any((b < 0) | (b >= constellation.size)):
        raise ValueError("bits must be 0 or 1")
    return np.asarray(constellation.points, dtype=np.complex128)[b]


def demap_symbols(symbols, constellation: Constellation = BPSK) -> np.ndarray:
    """Inverse of :func:`map_bits`; every entry must be an exact constellation point."""
    s = np.asarray(symbols, dtype=np.complex128)
    pts = np.asarray(constellation.points, dtype=np.complex128)
    hits = s[..., None] == pts
    if not np.all(hits.any(axis=-1)):
        raise ValueError("input contains values that are not constellation points")
    idx = hits.argmax(axis=-1)
    if constellation.bits_per_symbol == 1:
        return idx.astype(np.uint8)
    shifts = np.arange(constellation.bits_per_symbol)[::-1]
    bits = (idx[..., None] >> shifts) & 1
    return bits.reshape(*idx.shape[:-1], -1).astype(np.uint8)


def enumerate_candidates(n_symbols: int, constellation: Constellation = BPSK) -> np.ndarray:
    """All ``size**n_symbols`` symbol vectors, one per row, lexicographic by symbol index."""
    count = constellation.size**n_symbols
    if n_symbols < 1:
        raise ValueError("need at least one symbol per vector")
    if count > MAX_CANDIDATES:
        raise ValueError(
            f"{count} candidate vectors exceed the exhaustive-search limit of {MAX_CANDIDATES}"
        )
    pts = np.asarray(constellation.points, dtype=np.complex128)
    idx = np.array(list(itertools.product(range(constellation.size), repeat=n_symbols)))
    return pts[idx]


def candidate_differences(candidates: np.ndarray) -> np.ndarray:
    """Differences ``x_l - x_n`` for every unordered pair ``l < n``, one per row."""
    c = np.asarray(candidates)
    left, right = np.triu_indices(len(c), k=1)
    return c[left] - c[right]
