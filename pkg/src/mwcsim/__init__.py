"""Link-level simulator for cloud-aided multi-way buffer-aided MIMO relaying.

Implements the MWC-Best-User-Link protocol (cloud buffers, maximum minimum
distance relay selection, joint ML detection, XOR network coding) and the
MW-Max-Link baseline, and reports BER, average sum-rate and average delay.
"""

from mwcsim.channel import CsiErrorModel, Topology
from mwcsim.engine import MAXLINK, MWC, RunMetrics, SimConfig, run

__all__ = [
    "CsiErrorModel",
    "Topology",
    "SimConfig",
    "RunMetrics",
    "MWC",
    "MAXLINK",
    "run",
]

__version__ = "0.1.0"
