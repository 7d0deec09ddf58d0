"""Rayleigh block-fading channel draws and the imperfect-CSI error model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Topology",
    "CsiErrorModel",
    "SlotChannels",
    "complex_gaussian",
    "draw_matrix",
    "draw_slot",
    "corrupt_csi",
    "corrupt_slot",
]


@dataclass(frozen=True)
class Topology:
    """Network dimensions.

    ``K`` clusters (source pairs), ``N`` relays, ``Ms`` antennas per source.
    Each relay receives on ``2*U*Ms`` antennas and transmits on ``V*Ms``.
    """

    K: int = 5
    N: int = 10
    Ms: int = 2
    U: int = 2
    V: int = 1

    def __post_init__(self):
        for name in ("K", "N", "Ms", "U", "V"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.m_rtx > self.m_rrx:
            raise ValueError(
                f"transmit antennas V*Ms={self.m_rtx} exceed receive antennas 2*U*Ms={self.m_rrx}"
            )

    @property
    def m_rrx(self) -> int:
        return 2 * self.U * self.Ms

    @property
    def m_rtx(self) -> int:
        return self.V * self.Ms


@dataclass(frozen=True)
class CsiErrorModel:
    """Channel estimate error with variance ``beta * E**(-alpha)`` per entry."""

    beta: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta!r}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")

    @property
    def perfect(self) -> bool:
        return self.beta == 0

    def error_variance(self, energy: float) -> float:
        if energy <= 0:
            raise ValueError(f"energy must be positive, got {energy!r}")
        return self.beta * energy ** (-self.alpha)


@dataclass
class SlotChannels:
    """All channel realizations of one time slot.

    Shapes: ``sr_*`` is ``(K, N, 2*U*Ms, 2*Ms)`` (both sources of cluster k to
    relay n), ``rs_*`` is ``(K, N, 2, Ms, Ms)`` (relay n to source s of
    cluster k, already summed over the V transmit sub-blocks).
    """

    sr_true: np.ndarray
    rs_true: np.ndarray
    sr_est: np.ndarray | None = None
    rs_est: np.ndarray | None = None


def complex_gaussian(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    parts = rng.standard_normal((*tuple(np.atleast_1d(shape)), 2))
    out = parts[..., 0] + 1j * parts[..., 1]
    out *= np.sqrt(variance / 2.0)
    return out


def draw_matrix(rows: int, cols: int, variance: float, rng: np.random.Generator) -> np.ndarray:
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance!r}")
    return complex_gaussian((rows, cols), variance, rng)


def draw_slot(topology: Topology, rng: np.random.Generator) -> SlotChannels:
    t = topology
    sr = complex_gaussian((t.K, t.N, t.m_rrx, 2 * t.Ms), 1.0, rng)
    rs = complex_gaussian((t.V, t.K, t.N, 2, t.Ms, t.Ms), 1.0, rng).sum(axis=0)
    return SlotChannels(sr_true=sr, rs_true=rs)


def corrupt_csi(h, energy: float, model: CsiErrorModel, rng: np.random.Generator) -> np.ndarray:
    """Return ``h + e`` with ``e`` drawn at variance ``beta * energy**(-alpha)``.

    With ``beta == 0`` the input is returned unchanged (as a copy) and no
    random numbers are consumed.
    """
    var = model.error_variance(energy)
    h = np.asarray(h, dtype=np.complex128)
    if var == 0:
        return h.copy()
    return h + complex_gaussian(h.shape, var, rng)


def corrupt_slot(slot: SlotChannels, es: float, model: CsiErrorModel,
                 rng: np.random.Generator) -> SlotChannels:
    """Fill in the estimated channels: MA links at energy ``es``, BC links at ``es/2``."""
    slot.sr_est = corrupt_csi(slot.sr_true, es, model, rng)
    slot.rs_est = corrupt_csi(slot.rs_true, es / 2.0, model, rng)
    return slot
