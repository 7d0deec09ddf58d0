"""Slot-by-slot protocol simulation for MWC-Best-User-Link and MW-Max-Link.

Every slot draws fresh channels, forms the CSI estimates, selects a mode and
link(s), then either runs an MA transmission (both sources of a cluster send
``T`` symbol vectors, the receiver ML-detects them and stores the XOR of
the two decisions) or a BC transmission (a stored XOR group is sent to both
sources, detected, and used to recover the partner's bits). BER is scored
against the bits the sources actually sent.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from mwcsim.analysis import average_sumrate, sumrate_bc, sumrate_ma
from mwcsim.buffers import BufferError, CloudBufferSet
from mwcsim.channel import CsiErrorModel, SlotChannels, Topology, corrupt_slot, draw_slot
from mwcsim.detection import NoiseModel, ml_detect_indices, ml_table, transmit_bc, transmit_ma
from mwcsim.modem import BPSK, Constellation, demap_symbols, enumerate_candidates, map_bits
from mwcsim.netcoding import XorPacketEntry, recover_partner, xor_combine
from mwcsim.selection import BC, MA, MmdSelector, ModeDecision, choose_mode, estimate_g

__all__ = [
    "MWC",
    "MAXLINK",
    "PROTOCOLS",
    "SimConfig",
    "SlotRecord",
    "RunMetrics",
    "Simulation",
    "score_delivery",
    "run",
]

MWC = "MWC"
MAXLINK = "MAXLINK"
PROTOCOLS = (MWC, MAXLINK)


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    ``J`` is the buffer size in packets and ``n_packets_target`` the number
    of stored (XOR) packets that must reach the sources before the run
    stops; every BC slot delivers ``Ms`` of them. ``g`` may be given to skip
    the threshold calibration.
    """

    topology: Topology = field(default_factory=Topology)
    snr_db: float = 10.0
    n0: float = 1.0
    J: int = 6
    LoL: int = 1_000_000
    T: int = 100
    n_packets_target: int = 2000
    csi: CsiErrorModel = field(default_factory=CsiErrorModel)
    seed: int = 0
    protocol: str = MWC
    g_calibration_draws: int = 1000
    g: float | None = None
    keep_log: bool = False
    max_slots: int | None = None
    constellation: Constellation = BPSK

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.J < self.topology.Ms or self.J % self.topology.Ms:
            raise ValueError(f"J={self.J} must be a positive multiple of Ms={self.topology.Ms}")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.LoL < 0:
            raise ValueError("LoL must be non-negative")
        if self.n_packets_target < 1:
            raise ValueError("n_packets_target must be at least 1")
        if not self.n0 > 0:
            raise ValueError("n0 must be positive")
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.g_calibration_draws < 1:
            raise ValueError("g_calibration_draws must be at least 1")
        if self.g is not None and not self.g > 0:
            raise ValueError("g must be positive")

    @property
    def es(self) -> float:
        return self.n0 * 10.0 ** (self.snr_db / 10.0)

    @property
    def slot_limit(self) -> int:
        if self.max_slots is not None:
            return self.max_slots
        return 100 * math.ceil(self.n_packets_target / self.topology.Ms) + 1000


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    mode: str
    cluster: int
    relays: tuple[int, ...]
    forced_by_latency: bool
    rates: tuple[float, ...]
    bit_errors: int = 0
    delay: int | None = None


@dataclass
class RunMetrics:
    ber: float = 0.0
    bit_errors: int = 0
    bits_delivered: int = 0
    ber_std_error: float = 0.0
    sum_rate_avg: float = 0.0
    delays: list[int] = field(default_factory=list)
    avg_delay: float = float("nan")
    n_sr: int = 0
    n_rs: int = 0
    slots: int = 0
    packets_delivered: int = 0
    packets_stored: int = 0
    g: float | None = None
    log: list[SlotRecord] | None = None


def score_delivery(truth_x1, truth_x2, recovered_at_s1, recovered_at_s2) -> int:
    """Bit errors of both directions: S1's estimate of x2 and S2's estimate of x1."""
    arrays = [np.asarray(a, dtype=np.uint8) for a in
              (truth_x1, truth_x2, recovered_at_s1, recovered_at_s2)]
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("all bit arrays must have the same shape")
    t1, t2, r1, r2 = arrays
    return int(np.count_nonzero(r1 != t2) + np.count_nonzero(r2 != t1))


class Simulation:
    """Mutable state of one run. Use :func:`run` unless stepping manually."""

    def __init__(self, config: SimConfig):
        self.config = config
        top = config.topology
        self.es = config.es
        self.noise = NoiseModel(config.n0)
        # Calibration and the measured run use separate child streams so the
        # slot sequence does not depend on the calibration length.
        cal_seq, run_seq = np.random.SeedSequence(config.seed).spawn(2)
        self.rng = np.random.default_rng(run_seq)
        self.selector = MmdSelector(top, self.es)
        self.const = config.constellation
        if self.const.bits_per_symbol != 1:
            raise ValueError("only one-bit-per-symbol constellations are simulated")
        self.cand_ma = enumerate_candidates(2 * top.Ms, self.const)
        self.cand_bc = enumerate_candidates(top.Ms, self.const)
        if config.protocol == MWC:
            self.buffers = CloudBufferSet(top.K, config.J, top.Ms)
            if config.g is None:
                cal_rng = np.random.default_rng(cal_seq)
                self.g = estimate_g(top, self.es, config.csi, cal_rng,
                                    config.g_calibration_draws).g
            else:
                self.g = config.g
        else:
            self.buffers = CloudBufferSet(top.K * top.N, config.J, top.Ms)
            self.g = None
        self.slot = 0
        self.sr_rates: list[float] = []
        self.rs_rates: list[tuple[float, float]] = []
        self.slot_errors: list[int] = []
        self.delays: list[int] = []
        self.bit_errors = 0
        self.bits_delivered = 0
        self.packets_delivered = 0
        self.log: list[SlotRecord] | None = [] if config.keep_log else None

    # -- channel and link helpers -------------------------------------------------

    def _draw(self) -> SlotChannels:
        slot = draw_slot(self.config.topology, self.rng)
        return corrupt_slot(slot, self.es, self.config.csi, self.rng)

    def _ma_transmit(self, h: np.ndarray, h_est: np.ndarray) -> XorPacketEntry:
        cfg = self.config
        ms = cfg.topology.Ms
        x1 = self.rng.integers(0, 2, size=(cfg.T, ms), dtype=np.uint8)
        x2 = self.rng.integers(0, 2, size=(cfg.T, ms), dtype=np.uint8)
        x = map_bits(np.concatenate([x1, x2], axis=1), self.const)
        y = transmit_ma(h, x, self.es, ms, self.noise, self.rng)
        table = ml_table(h_est, math.sqrt(self.es / ms), self.cand_ma)
        detected = demap_symbols(self.cand_ma[ml_detect_indices(y, table)], self.const)
        z = xor_combine(detected[:, :ms], detected[:, ms:])
        return XorPacketEntry(z_bits=z, truth_x1=x1, truth_x2=x2)

    def _bc_receive(self, entry: XorPacketEntry, h: np.ndarray, h_est: np.ndarray) -> np.ndarray:
        """Detected XOR bits at one source, given its combined channel."""
        m_rtx = self.config.topology.m_rtx
        z = map_bits(entry.z_bits, self.const)
        y = transmit_bc(h, z, self.es, m_rtx, self.noise, self.rng)
        table = ml_table(h_est, math.sqrt(self.es / (2 * m_rtx)), self.cand_bc)
        return demap_symbols(self.cand_bc[ml_detect_indices(y, table)], self.const)

    def _deliver(self, entry: XorPacketEntry, delay: int, h_s1, h_s1_est, h_s2,
                 h_s2_est) -> int:
        z_at_s1 = self._bc_receive(entry, h_s1, h_s1_est)
        z_at_s2 = self._bc_receive(entry, h_s2, h_s2_est)
        x2_at_s1 = recover_partner(entry.truth_x1, z_at_s1)
        x1_at_s2 = recover_partner(entry.truth_x2, z_at_s2)
        errors = score_delivery(entry.truth_x1, entry.truth_x2, x2_at_s1, x1_at_s2)
        ms = entry.n_packets
        self.bit_errors += errors
        self.bits_delivered += 2 * entry.z_bits.size
        self.slot_errors.append(errors)
        self.packets_delivered += ms
        self.delays.extend([delay] * ms)
        return errors

    def _record(self, decision: ModeDecision, rates, errors=0, delay=None):
        if self.log is not None:
            self.log.append(SlotRecord(self.slot, decision.mode, decision.cluster,
                                       decision.relays, decision.forced_by_latency,
                                       tuple(rates), errors, delay))

    # -- protocol steps -----------------------------------------------------------

    def step_mwc(self) -> ModeDecision:
        cfg = self.config
        top = cfg.topology
        buf = self.buffers
        ch = self._draw()
        ma_metrics = self.selector.ma_metrics(ch.sr_est)
        bc_metrics = self.selector.bc_metrics(ch.rs_est)
        ma_ok = np.array([buf.can_store(k) for k in range(top.K)])
        bc_ok = np.array([buf.can_retrieve(k) for k in range(top.K)])
        ma_sel = self.selector.select_ma(ch, ma_ok, ma_metrics)
        bc_sel = self.selector.select_bc(ch, bc_ok, bc_metrics)
        decision = choose_mode(buf.total_packets(), top.Ms, cfg.LoL,
                               ma_sel[2] if ma_sel else None,
                               bc_sel[2] if bc_sel else None,
                               self.g, ma_sel is not None, bc_sel is not None)
        if decision.mode == MA:
            k, n, _ = ma_sel
            decision = dataclasses.replace(decision, cluster=k, relays=(n,))
            entry = self._ma_transmit(ch.sr_true[k, n], ch.sr_est[k, n])
            buf.store(k, entry, self.slot)
            rate = sumrate_ma(ch.sr_true[k, n], self.es, top.Ms, cfg.n0)
            self.sr_rates.append(rate)
            self._record(decision, (rate,))
        else:
            if decision.forced_by_latency:
                k = buf.fullest()
                p = int(np.argmax(bc_metrics[k]))
                pair = tuple(int(r) for r in self.selector.pairs[p])
            else:
                k, pair, _ = bc_sel
            decision = dataclasses.replace(decision, cluster=k, relays=pair)
            h = self.selector.combined(ch.rs_true, k, pair)
            h_est = self.selector.combined(ch.rs_est, k, pair)
            entry, delay = buf.retrieve(k, self.slot)
            errors = self._deliver(entry, delay, h[0], h_est[0], h[1], h_est[1])
            rates = tuple(sumrate_bc(h[s], self.es, top.m_rtx, cfg.n0) for s in (0, 1))
            self.rs_rates.append(rates)
            self._record(decision, rates, errors, delay)
        self.slot += 1
        return decision

    def step_maxlink(self) -> ModeDecision:
        cfg = self.config
        top = cfg.topology
        buf = self.buffers
        ch = self._draw()
        sr = self.selector.ma_metrics(ch.sr_est)
        rs = self.selector.single_relay_bc_metrics(ch.rs_est)
        occ = np.array(buf.occupancies()).reshape(top.K, top.N)
        sr = np.where(occ + top.Ms <= cfg.J, sr, -np.inf)
        rs = np.where(occ > 0, rs, -np.inf)
        best_sr = int(np.argmax(sr))
        best_rs = int(np.argmax(rs))
        sr_val = sr.flat[best_sr]
        rs_val = rs.flat[best_rs]
        if sr_val == -np.inf and rs_val == -np.inf:
            raise BufferError("no SR or RS link is available")
        if sr_val >= rs_val:
            k, n = divmod(best_sr, top.N)
            decision = ModeDecision(MA, k, (n,))
            entry = self._ma_transmit(ch.sr_true[k, n], ch.sr_est[k, n])
            buf.store(k * top.N + n, entry, self.slot)
            rate = sumrate_ma(ch.sr_true[k, n], self.es, top.Ms, cfg.n0)
            self.sr_rates.append(rate)
            self._record(decision, (rate,))
        else:
            k, n = divmod(best_rs, top.N)
            decision = ModeDecision(BC, k, (n,))
            h = ch.rs_true[k, n]
            h_est = ch.rs_est[k, n]
            entry, delay = buf.retrieve(k * top.N + n, self.slot)
            errors = self._deliver(entry, delay, h[0], h_est[0], h[1], h_est[1])
            rates = tuple(sumrate_bc(h[s], self.es, top.m_rtx, cfg.n0) for s in (0, 1))
            self.rs_rates.append(rates)
            self._record(decision, rates, errors, delay)
        self.slot += 1
        return decision

    def step(self) -> ModeDecision:
        if self.config.protocol == MWC:
            return self.step_mwc()
        return self.step_maxlink()

    def run(self) -> RunMetrics:
        limit = self.config.slot_limit
        while self.packets_delivered < self.config.n_packets_target:
            if self.slot >= limit:
                raise RuntimeError(
                    f"only {self.packets_delivered} of {self.config.n_packets_target} packets "
                    f"delivered after {self.slot} slots"
                )
            self.step()
        return self.metrics()

    def metrics(self) -> RunMetrics:
        bits = self.bits_delivered
        ber = self.bit_errors / bits if bits else 0.0
        se = 0.0
        n = len(self.slot_errors)
        if n > 1 and bits:
            per_slot_bits = bits / n
            se = float(np.std(self.slot_errors, ddof=1)) / math.sqrt(n) / per_slot_bits
        return RunMetrics(
            ber=ber,
            bit_errors=self.bit_errors,
            bits_delivered=bits,
            ber_std_error=se,
            sum_rate_avg=average_sumrate(self.sr_rates, self.rs_rates) if self.slot else 0.0,
            delays=list(self.delays),
            avg_delay=float(np.mean(self.delays)) if self.delays else float("nan"),
            n_sr=len(self.sr_rates),
            n_rs=len(self.rs_rates),
            slots=self.slot,
            packets_delivered=self.packets_delivered,
            packets_stored=self.buffers.stored,
            g=self.g,
            log=list(self.log) if self.log is not None else None,
        )


def run(config: SimConfig) -> RunMetrics:
    """Simulate until ``config.n_packets_target`` packets reach their destinations."""
    return Simulation(config).run()
