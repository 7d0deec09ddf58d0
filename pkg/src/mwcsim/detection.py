"""AWGN links and exhaustive maximum-likelihood detection.

Symbol blocks are ``(T, n)`` arrays: one row per channel use within a slot.
A single vector of shape ``(n,)`` is also accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mwcsim.channel import complex_gaussian

__all__ = ["NoiseModel", "transmit", "transmit_ma", "transmit_bc", "ml_table", "ml_detect",
           "ml_detect_indices"]


@dataclass(frozen=True)
class NoiseModel:
    n0: float = 1.0

    def __post_init__(self):
        if not self.n0 > 0:
            raise ValueError(f"noise power must be positive, got {self.n0!r}")


def transmit(h, x, scale: float, noise: NoiseModel | None, rng) -> np.ndarray:
    """``y = scale * h @ x + n`` for every row of ``x``; ``noise=None`` means noiseless."""
    h = np.asarray(h, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    if h.ndim != 2 or x.shape[-1] != h.shape[1]:
        raise ValueError(f"channel {h.shape} does not match symbol vectors {x.shape}")
    y = scale * (x @ h.T)
    if noise is not None:
        y = y + complex_gaussian(y.shape, noise.n0, rng)
    return y


def transmit_ma(h, x, es: float, ms: int, noise: NoiseModel | None, rng) -> np.ndarray:
    """Both sources of a cluster to one relay; ``h`` is ``2UMs x 2Ms``."""
    return transmit(h, x, np.sqrt(es / ms), noise, rng)


def transmit_bc(h_combined, z, erj: float, m_rtx: int, noise: NoiseModel | None,
                rng) -> np.ndarray:
    """Selected relay(s) to one source; ``h_combined`` is ``Ms x Ms``."""
    h = np.asarray(h_combined)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"combined BC channel must be square, got {h.shape}")
    return transmit(h, z, np.sqrt(erj / (2 * m_rtx)), noise, rng)


def ml_table(h_est, scale: float, candidates) -> np.ndarray:
    """Noise-free received vector of every candidate, shape ``(C, rows)``.

    The channel is constant over a slot, so the table is built once and
    reused for all T channel uses.
    """
    c = np.asarray(candidates, dtype=np.complex128)
    if c.ndim != 2 or len(c) == 0:
        raise ValueError("candidate set must be a non-empty 2-D array")
    h = np.asarray(h_est, dtype=np.complex128)
    if h.shape[1] != c.shape[1]:
        raise ValueError(f"channel {h.shape} does not match candidates of length {c.shape[1]}")
    return scale * (c @ h.T)


def ml_detect_indices(y, table: np.ndarray) -> np.ndarray:
    """Index of the closest table row for every received vector (first index wins ties)."""
    y = np.asarray(y, dtype=np.complex128)
    diff = y[..., None, :] - table
    dist = np.sum(diff.real**2 + diff.imag**2, axis=-1)
    return np.argmin(dist, axis=-1)


def ml_detect(y, h_est, scale: float, candidates) -> np.ndarray:
    """Candidate minimising ``||y - scale * h_est @ x||^2``."""
    c = np.asarray(candidates, dtype=np.complex128)
    return c[ml_detect_indices(y, ml_table(h_est, scale, c))]
