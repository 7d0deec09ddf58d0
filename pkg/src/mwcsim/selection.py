"""Maximum-minimum-distance relay selection and the MA/BC mode decision.

Metric naming follows the protocol description: for every cluster and relay
the MA metric is the smallest scaled distance over the relay's square
receive sub-blocks; for every cluster and relay pair the BC metric is the
smaller of the two per-source distances through the summed channel of the
pair. The best MA link and the best BC pair are then compared against the
threshold ``g``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np

from mwcsim.channel import CsiErrorModel, SlotChannels, Topology, corrupt_slot, draw_slot
from mwcsim.modem import candidate_differences, enumerate_candidates

__all__ = [
    "MA",
    "BC",
    "ModeDecision",
    "GThreshold",
    "MmdSelector",
    "relay_pairs",
    "mmd_metric_ma_sub",
    "mmd_metric_bc",
    "ma_relay_metric",
    "select_ma",
    "select_bc",
    "estimate_g",
    "choose_mode",
]

MA = "MA"
BC = "BC"


@functools.lru_cache(maxsize=None)
def _differences(n_symbols: int) -> np.ndarray:
    """Distinct pair differences, one of each ``+-d`` kept.

    ``||h d|| == ||h (-d)||`` and the minimum over a multiset equals the
    minimum over its distinct elements, so this shrinks the search without
    changing any metric (40 instead of 120 rows for four BPSK symbols).
    """
    d = candidate_differences(enumerate_candidates(n_symbols))
    lead = d[np.arange(len(d)), np.argmax(d != 0, axis=1)]
    d = d * np.where(lead.real < 0, -1, 1)[:, None]
    d = np.unique(d, axis=0)
    d.setflags(write=False)
    return d


@functools.lru_cache(maxsize=None)
def relay_pairs(n_relays: int) -> tuple[tuple[int, int], ...]:
    """Unordered relay pairs ``(i, j)`` with ``i <= j``, lexicographic order."""
    return tuple((i, j) for i in range(n_relays) for j in range(i, n_relays))


def _min_dist(h: np.ndarray, diffs: np.ndarray) -> np.ndarray:
    """``min_p ||h d_p||^2`` over the trailing two axes of ``h``."""
    v = h @ diffs.T
    return np.min(np.sum(v.real**2 + v.imag**2, axis=-2), axis=-1)


def _diffs_for(candidates) -> np.ndarray:
    d = candidate_differences(np.asarray(candidates, dtype=np.complex128))
    if len(d) == 0:
        raise ValueError("need at least two candidate vectors")
    return d


def mmd_metric_ma_sub(h_u, es: float, ms: int, candidates_2ms) -> float:
    h = np.asarray(h_u, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"MA sub-block must be square, got {h.shape}")
    return float(es / ms * _min_dist(h, _diffs_for(candidates_2ms)))


def mmd_metric_bc(h_combined, es: float, m_rtx: int, candidates_ms) -> float:
    h = np.asarray(h_combined, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"BC channel must be square, got {h.shape}")
    return float(es / (2 * m_rtx) * _min_dist(h, _diffs_for(candidates_ms)))


def _ma_metrics(sr: np.ndarray, es: float, ms: int) -> np.ndarray:
    """MA metric for stacked ``(..., 2UMs, 2Ms)`` channels, shape ``(...)``."""
    rows, cols = sr.shape[-2:]
    if cols != 2 * ms or rows % cols:
        raise ValueError(f"SR channel of shape {sr.shape} is not a stack of {cols}x{cols} blocks")
    blocks = sr.reshape(*sr.shape[:-2], rows // cols, cols, cols)
    return es / ms * _min_dist(blocks, _differences(cols)).min(axis=-1)


def ma_relay_metric(h_full, es: float, ms: int, U: int) -> float:
    h = np.asarray(h_full, dtype=np.complex128)
    if h.ndim != 2 or h.shape != (2 * U * ms, 2 * ms):
        if h.ndim == 2 and h.shape[0] % (2 * ms):
            raise ValueError(f"row count {h.shape[0]} is not a multiple of 2*Ms={2 * ms}")
        raise ValueError(f"expected a {2 * U * ms}x{2 * ms} channel, got {h.shape}")
    return float(_ma_metrics(h, es, ms))


@dataclass(frozen=True)
class ModeDecision:
    mode: str
    cluster: int | None = None
    relays: tuple[int, ...] = ()
    forced_by_latency: bool = False


@dataclass(frozen=True)
class GThreshold:
    g: float
    calibration_draws: int

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"threshold must be positive, got {self.g!r}")


class MmdSelector:
    """Vectorised MMD metrics for every cluster/relay (pair) of one slot.

    Relays transmit on ``m_rtx`` antennas; the BC metric uses scale
    ``es / (2 * m_rtx)``.
    """

    def __init__(self, topology: Topology, es: float):
        self.topology = topology
        self.es = es
        self.pairs = np.array(relay_pairs(topology.N), dtype=np.intp)
        self._bc_diffs = _differences(topology.Ms)

    def ma_metrics(self, sr: np.ndarray) -> np.ndarray:
        """``(K, N)`` MA metrics."""
        return _ma_metrics(sr, self.es, self.topology.Ms)

    def single_relay_bc_metrics(self, rs: np.ndarray) -> np.ndarray:
        """``(K, N)`` worst-source BC metrics with each relay transmitting alone."""
        scale = self.es / (2 * self.topology.m_rtx)
        return scale * _min_dist(rs, self._bc_diffs).min(axis=-1)

    def combined(self, rs: np.ndarray, cluster: int, pair) -> np.ndarray:
        """Summed ``(2, Ms, Ms)`` channel of a relay pair towards both sources."""
        i, j = pair
        return rs[cluster, i] + rs[cluster, j]

    def bc_metrics(self, rs: np.ndarray) -> np.ndarray:
        """``(K, P)`` pair metrics, pairs ordered as :func:`relay_pairs`."""
        comb = rs[:, self.pairs[:, 0]] + rs[:, self.pairs[:, 1]]
        scale = self.es / (2 * self.topology.m_rtx)
        return scale * _min_dist(comb, self._bc_diffs).min(axis=-1)

    def select_ma(self, slot: SlotChannels, eligible, metrics=None):
        """Best ``(cluster, relay, metric)`` over eligible clusters, or None."""
        eligible = np.asarray(eligible, dtype=bool)
        if not eligible.any():
            return None
        m = self.ma_metrics(_est(slot.sr_est, slot.sr_true)) if metrics is None else metrics
        m = np.where(eligible[:, None], m, -np.inf)
        k, n = np.unravel_index(int(np.argmax(m)), m.shape)
        return int(k), int(n), float(m[k, n])

    def select_bc(self, slot: SlotChannels, eligible, metrics=None):
        """Best ``(cluster, (i, j), metric)`` over eligible clusters, or None."""
        eligible = np.asarray(eligible, dtype=bool)
        if not eligible.any():
            return None
        m = self.bc_metrics(_est(slot.rs_est, slot.rs_true)) if metrics is None else metrics
        m = np.where(eligible[:, None], m, -np.inf)
        k, p = np.unravel_index(int(np.argmax(m)), m.shape)
        i, j = self.pairs[p]
        return int(k), (int(i), int(j)), float(m[k, p])


def _est(est, true):
    return true if est is None else est


def select_ma(slot: SlotChannels, eligible_clusters, topology: Topology, es: float):
    """Module-level form of :meth:`MmdSelector.select_ma`."""
    return MmdSelector(topology, es).select_ma(slot, _mask(eligible_clusters, topology.K))


def select_bc(slot: SlotChannels, eligible_clusters, topology: Topology, es: float):
    """Module-level form of :meth:`MmdSelector.select_bc`."""
    return MmdSelector(topology, es).select_bc(slot, _mask(eligible_clusters, topology.K))


def _mask(eligible, k: int) -> np.ndarray:
    e = np.asarray(eligible)
    if e.dtype == bool:
        return e
    mask = np.zeros(k, dtype=bool)
    mask[e.astype(int)] = True
    return mask


def estimate_g(topology: Topology, es: float, csi: CsiErrorModel, rng: np.random.Generator,
               draws: int = 1000) -> GThreshold:
    """Ratio of the sample means of the best MA and best BC metric.

    Every cluster is treated as eligible in both modes.
    """
    if draws < 1:
        raise ValueError("need at least one calibration draw")
    sel = MmdSelector(topology, es)
    sr_sum = rs_sum = 0.0
    for _ in range(draws):
        slot = corrupt_slot(draw_slot(topology, rng), es, csi, rng)
        sr_sum += float(sel.ma_metrics(slot.sr_est).max())
        rs_sum += float(sel.bc_metrics(slot.rs_est).max())
    if rs_sum <= 0:
        raise ValueError("mean BC metric is zero; threshold undefined")
    return GThreshold(g=sr_sum / rs_sum, calibration_draws=draws)


def choose_mode(n_packets_total: int, ms: int, lol: int, a_max_sr: float | None,
                a_max_rs: float | None, g: float, ma_possible: bool,
                bc_possible: bool) -> ModeDecision:
    """Pick MA or BC for this slot.

    Returns a decision without cluster/relays; the caller fills those in
    from the matching selection. ``forced_by_latency`` marks the branch
    where the fullest buffer must be drained.
    """
    if not (ma_possible or bc_possible):
        raise RuntimeError("neither MA nor BC is possible in this slot")
    if bc_possible and n_packets_total / ms > lol:
        return ModeDecision(BC, forced_by_latency=True)
    if ma_possible and bc_possible:
        if a_max_rs > 0:
            ratio_ok = a_max_sr / a_max_rs >= g
        else:
            ratio_ok = True
        return ModeDecision(MA if ratio_ok else BC)
    return ModeDecision(MA if ma_possible else BC)


def with_selection(decision: ModeDecision, cluster: int, relays) -> ModeDecision:
    return replace(decision, cluster=cluster, relays=tuple(relays))
