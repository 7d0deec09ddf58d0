"""Experiment files, SNR sweeps and CSV output.

An experiment file is plain text, one ``key = value`` per line, ``#`` starts a
comment. List-valued keys take comma-separated values. See the README for
the full key table.
"""

from __future__ import annotations

import csv
import io
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from mwcsim.channel import CsiErrorModel, Topology
from mwcsim.engine import MAXLINK, MWC, PROTOCOLS, SimConfig, run
from mwcsim.selection import estimate_g

__all__ = [
    "ConfigError",
    "Experiment",
    "RunSpec",
    "COLUMNS",
    "AGG_COLUMNS",
    "parse_config",
    "parse_text",
    "derive_seed",
    "schedule",
    "run_experiment",
    "format_rows",
    "aggregate",
    "write_atomic",
]

COLUMNS = ("snr_db", "protocol", "lol", "beta", "alpha", "seed", "ber", "avg_sum_rate",
           "avg_delay", "n_sr", "n_rs", "slots", "wall_time")
AGG_COLUMNS = ("snr_db", "protocol", "lol", "beta", "alpha", "runs", "ber", "avg_sum_rate",
               "avg_delay", "n_sr", "n_rs", "slots")

# receive sub-block count used when the file does not set U (M_rRx = 8 vs 4 for Ms = 2)
DEFAULT_U = {MWC: 2, MAXLINK: 1}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class Experiment:
    name: str
    base: SimConfig
    snr_grid: tuple[float, ...]
    protocols: tuple[str, ...]
    lol_values: tuple[int, ...]
    csi_variants: tuple[CsiErrorModel, ...]
    repetitions: int = 1
    u_per_protocol: dict = field(default_factory=lambda: dict(DEFAULT_U))

    def __post_init__(self):
        for name in ("snr_grid", "protocols", "lol_values", "csi_variants"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")

    def topology_for(self, protocol: str) -> Topology:
        return replace(self.base.topology, U=self.u_per_protocol[protocol])


def _int(value: str) -> int:
    f = float(value)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {value!r}")
    return int(f)


def _float(value: str) -> float:
    f = float(value)
    if not math.isfinite(f):
        raise ValueError(f"expected a finite number, got {value!r}")
    return f


def _list(value: str, conv) -> list:
    items = [v.strip() for v in value.split(",")]
    if not items or any(v == "" for v in items):
        raise ValueError(f"malformed list {value!r}")
    return [conv(v) for v in items]


def _protocol(value: str) -> str:
    p = value.upper()
    if p not in PROTOCOLS:
        raise ValueError(f"unknown protocol {value!r} (choose from {', '.join(PROTOCOLS)})")
    return p


def _u_spec(value: str) -> dict:
    if ":" not in value:
        u = _int(value)
        return {MWC: u, MAXLINK: u}
    out = dict(DEFAULT_U)
    for item in _list(value, str):
        proto, _, u = item.partition(":")
        out[_protocol(proto.strip())] = _int(u)
    return out


_SCALARS = {
    "K": _int, "N": _int, "Ms": _int, "V": _int, "J": _int, "T": _int,
    "n_packets": _int, "repetitions": _int, "g_calibration_draws": _int,
}
_LISTS = {
    "LoL": _int, "snr_db_list": _float, "protocols": _protocol,
    "beta": _float, "alpha": _float,
}
KEYS = tuple(_SCALARS) + tuple(_LISTS) + ("U",)


def parse_text(text: str, name: str = "experiment", path: str | None = None) -> Experiment:
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        try:
            if key == "U":
                values[key] = _u_spec(value)
            elif key in _SCALARS:
                values[key] = _SCALARS[key](value)
            else:
                values[key] = _list(value, _LISTS[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", path, lineno) from None
        lines[key] = lineno

    def fail(msg, *keys):
        ln = min((lines[k] for k in keys if k in lines), default=None)
        raise ConfigError(msg, path, ln)

    Ms = values.get("Ms", 2)
    K = values.get("K", 5)
    J = values.get("J", 3 * Ms)
    if Ms < 1 or J < 1 or J % Ms:
        fail(f"J={J} must be a positive multiple of Ms={Ms}", "J", "Ms")
    u_map = values.get("U", dict(DEFAULT_U))
    try:
        topo = Topology(K=K, N=values.get("N", 10), Ms=Ms, U=u_map[MWC], V=values.get("V", 1))
        for u in u_map.values():
            replace(topo, U=u)
    except ValueError as exc:
        fail(str(exc), "K", "N", "Ms", "U", "V")

    default_lol = K * (J // Ms) + 1  # exceeds K*L: latency rule never fires
    betas = values.get("beta", [0.0])
    alphas = values.get("alpha", [1.0])
    if len(betas) != len(alphas) and 1 not in (len(betas), len(alphas)):
        fail("beta and alpha lists must have equal length (or one of them a single value)",
             "beta", "alpha")
    n = max(len(betas), len(alphas))
    try:
        csi = tuple(CsiErrorModel(b, a) for b, a in
                    zip(betas * n if len(betas) == 1 else betas,
                        alphas * n if len(alphas) == 1 else alphas))
    except ValueError as exc:
        fail(str(exc), "beta", "alpha")

    try:
        base = SimConfig(
            topology=topo,
            J=J,
            T=values.get("T", 100),
            n_packets_target=values.get("n_packets", 10000 * Ms),
            g_calibration_draws=values.get("g_calibration_draws", 1000),
        )
        lols = tuple(values.get("LoL", [default_lol]))
        if any(v < 0 for v in lols):
            raise ValueError("LoL values must be non-negative")
        return Experiment(
            name=name,
            base=base,
            snr_grid=tuple(values.get("snr_db_list", [0.0, 2.0, 4.0, 6.0, 8.0, 10.0])),
            protocols=tuple(dict.fromkeys(values.get("protocols", list(PROTOCOLS)))),
            lol_values=lols,
            csi_variants=csi,
            repetitions=values.get("repetitions", 1),
            u_per_protocol=u_map,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def parse_config(path) -> Experiment:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", str(p)) from None
    return parse_text(text, name=p.stem, path=str(p))


def derive_seed(master_seed: int, protocol: str, snr_index: int, repetition: int) -> int:
    """Run seed from ``(master_seed, protocol, snr index, repetition)``.

    The four integers (protocol as its index in ``PROTOCOLS``) are fed to
    ``numpy.random.SeedSequence`` and the first 63 bits of its state are
    used. LoL and CSI variants of a point share the seed on purpose, so
    they are compared on common random numbers.
    """
    entropy = [int(master_seed), PROTOCOLS.index(protocol), int(snr_index), int(repetition)]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31 | int(state[1]) >> 1) & ((1 << 63) - 1)


def _g_seed(master_seed: int, snr_index: int, csi_index: int) -> int:
    entropy = [int(master_seed), 0xC0FFEE, int(snr_index), int(csi_index)]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RunSpec:
    key: tuple
    config: SimConfig


def schedule(exp: Experiment, master_seed: int = 0, g_values: dict | None = None) -> list[RunSpec]:
    """All runs in output order: protocol, LoL, CSI variant, SNR, repetition."""
    g_values = g_values or {}
    specs = []
    for p_idx, proto in enumerate(exp.protocols):
        topo = exp.topology_for(proto)
        for lol in exp.lol_values:
            for c_idx, csi in enumerate(exp.csi_variants):
                for s_idx, snr in enumerate(exp.snr_grid):
                    for rep in range(exp.repetitions):
                        cfg = replace(exp.base, topology=topo, snr_db=snr, LoL=lol, csi=csi,
                                      protocol=proto,
                                      seed=derive_seed(master_seed, proto, s_idx, rep),
                                      g=g_values.get((s_idx, c_idx)) if proto == MWC else None)
                        specs.append(RunSpec((p_idx, lol, c_idx, s_idx, rep), cfg))
    return specs


def calibrate(exp: Experiment, master_seed: int = 0) -> dict:
    """Threshold per (SNR index, CSI index), shared by every MWC run of that point."""
    if MWC not in exp.protocols:
        return {}
    topo = exp.topology_for(MWC)
    out = {}
    for s_idx, snr in enumerate(exp.snr_grid):
        es = replace(exp.base, snr_db=snr).es
        for c_idx, csi in enumerate(exp.csi_variants):
            rng = np.random.default_rng(_g_seed(master_seed, s_idx, c_idx))
            out[(s_idx, c_idx)] = estimate_g(topo, es, csi, rng,
                                             exp.base.g_calibration_draws).g
    return out


def _execute(spec: RunSpec):
    t0 = time.perf_counter()
    try:
        metrics = run(spec.config)
    except Exception as exc:  # reported by the caller, the sweep continues
        return spec, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0
    metrics.delays = []
    metrics.log = None
    return spec, metrics, None, time.perf_counter() - t0


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.6g}"


def _row(spec: RunSpec, m, wall: float | None) -> dict:
    c = spec.config
    return {
        "snr_db": c.snr_db, "protocol": c.protocol, "lol": c.LoL,
        "beta": c.csi.beta, "alpha": c.csi.alpha, "seed": c.seed,
        "ber": m.ber, "avg_sum_rate": m.sum_rate_avg, "avg_delay": m.avg_delay,
        "n_sr": m.n_sr, "n_rs": m.n_rs, "slots": m.slots,
        "wall_time": wall,
    }


def run_experiment(exp: Experiment, master_seed: int = 0, workers: int = 1,
                   timing: bool = False, progress=None):
    """Run every scheduled point.

    Returns ``(rows, failures)``: rows are dicts keyed by :data:`COLUMNS` in
    schedule order; failures are ``(config, message)`` pairs. ``wall_time``
    is only filled when ``timing`` is set, so default output is reproducible
    byte for byte.
    """
    g_values = calibrate(exp, master_seed)
    specs = schedule(exp, master_seed, g_values)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, specs))
    else:
        results = []
        for spec in specs:
            results.append(_execute(spec))
            if progress:
                progress(len(results), len(specs))
    results.sort(key=lambda r: r[0].key)
    rows, failures = [], []
    for spec, metrics, error, wall in results:
        if error is not None:
            failures.append((spec.config, error))
            continue
        rows.append(_row(spec, metrics, wall if timing else None))
    return rows, failures


def format_rows(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow(["" if r[c] is None else _fmt(r[c]) for c in columns])
    return buf.getvalue()


def aggregate(rows) -> list[dict]:
    """Mean over seeds for every (protocol, LoL, CSI, SNR) point, first-seen order."""
    groups: dict = {}
    for r in rows:
        key = (r["protocol"], r["lol"], r["beta"], r["alpha"], r["snr_db"])
        groups.setdefault(key, []).append(r)
    out = []
    for (proto, lol, beta, alpha, snr), rs in groups.items():
        mean = lambda c: float(np.mean([r[c] for r in rs]))  # noqa: E731
        out.append({"snr_db": snr, "protocol": proto, "lol": lol, "beta": beta, "alpha": alpha,
                    "runs": len(rs), "ber": mean("ber"), "avg_sum_rate": mean("avg_sum_rate"),
                    "avg_delay": mean("avg_delay"), "n_sr": mean("n_sr"),
                    "n_rs": mean("n_rs"), "slots": mean("slots")})
    return out


def write_atomic(path, text: str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stderr_progress(done: int, total: int) -> None:
    print(f"\r{done}/{total} runs", end="" if done < total else "\n", file=sys.stderr)
