"""Closed-form helpers: Gaussian tail, worst-case pairwise error probability, sum-rates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from mwcsim import linalg
from mwcsim.modem import candidate_differences

__all__ = [
    "MA",
    "BC",
    "PepResult",
    "q_function",
    "pep_ct",
    "min_distance_sq",
    "pep_worst",
    "log2_det_rate",
    "sumrate_ma",
    "sumrate_bc",
    "average_sumrate",
]

log = logging.getLogger(__name__)

MA = "MA"
BC = "BC"


def q_function(x: float) -> float:
    """Standard normal tail probability ``P(Z > x)``."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def pep_ct(p: float) -> float:
    """Two-hop error probability when each hop fails independently with ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p!r}")
    return 1.0 - (1.0 - p) ** 2


@dataclass(frozen=True)
class PepResult:
    d_min_sq: float
    pep_single: float
    pep_ct: float


def min_distance_sq(h, candidates) -> float:
    """``min ||h (x_l - x_n)||^2`` over all distinct candidate pairs."""
    h = linalg.as_matrix(h)
    d = candidate_differences(candidates)
    if len(d) == 0:
        raise ValueError("need at least two candidates")
    v = d @ h.T
    return float(np.min(np.sum(v.real**2 + v.imag**2, axis=-1)))


def pep_worst(h, es: float, n0: float, m: int, phase: str, candidates) -> PepResult:
    """Worst-case PEP for channel ``h``.

    ``m`` is the per-source antenna count in the MA phase and the number of
    relay transmit antennas in the BC phase; the BC distance carries an
    extra factor 1/2.
    """
    if phase not in (MA, BC):
        raise ValueError(f"phase must be {MA!r} or {BC!r}, got {phase!r}")
    d = min_distance_sq(h, candidates)
    if phase == BC:
        d *= 0.5
    p = q_function(math.sqrt(es / (2.0 * n0 * m) * d))
    return PepResult(d_min_sq=d, pep_single=p, pep_ct=pep_ct(p))


def log2_det_rate(h, power: float) -> float:
    """``(1/2) log2 det(power * h h^H + I)``."""
    h = linalg.as_matrix(h)
    gram = linalg.multiply(h, linalg.conj_transpose(h)) * power
    det = linalg.determinant(linalg.add(gram, np.eye(h.shape[0])))
    if abs(det.imag) > 1e-9 * max(1.0, abs(det.real)):
        log.warning("determinant of Hermitian+I matrix has imaginary residue %g", det.imag)
    return 0.5 * math.log2(det.real)


def sumrate_ma(h, es: float, ms: int, n0: float) -> float:
    return log2_det_rate(h, es / (ms * n0))


def sumrate_bc(h_combined, es: float, m_rtx: int, n0: float) -> float:
    return log2_det_rate(h_combined, es / (2.0 * m_rtx * n0))


def average_sumrate(sr_slots: Sequence[float],
                    rs_slot_pairs: Iterable[tuple[float, float]]) -> float:
    """Average over all slots; a BC slot contributes the rates to both sources."""
    sr = list(sr_slots)
    rs = [a + b for a, b in rs_slot_pairs]
    n = len(sr) + len(rs)
    if n == 0:
        raise ValueError("average sum-rate needs at least one slot")
    return (sum(sr) + sum(rs)) / n
