"""Bitwise XOR network coding at the cloud and partner recovery at the sources."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["XorPacketEntry", "xor_combine", "recover_partner"]


def _bits(a) -> np.ndarray:
    b = np.asarray(a, dtype=np.uint8)
    if np.any(b > 1):
        raise ValueError("bit arrays may only hold 0 and 1")
    return b


def xor_combine(a_bits, b_bits) -> np.ndarray:
    a = _bits(a_bits)
    b = _bits(b_bits)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a ^ b


def recover_partner(own_bits, z_hat_bits) -> np.ndarray:
    """Partner's bits from own bits and the detected XOR packet."""
    return xor_combine(own_bits, z_hat_bits)


@dataclass
class XorPacketEntry:
    """One MA slot's worth of stored data: ``Ms`` XOR packets of ``T`` bits.

    ``truth_x1``/``truth_x2`` are the bits the sources really sent. They are
    only read when scoring a delivery.
    """

    z_bits: np.ndarray
    truth_x1: np.ndarray
    truth_x2: np.ndarray
    stored_slot: int = -1

    def __post_init__(self):
        shapes = {np.shape(self.z_bits), np.shape(self.truth_x1), np.shape(self.truth_x2)}
        if len(shapes) != 1:
            raise ValueError(f"entry bit fields differ in shape: {shapes}")

    @property
    def n_packets(self) -> int:
        # bit arrays are (T, Ms): one column per packet
        return int(np.shape(self.z_bits)[-1])
