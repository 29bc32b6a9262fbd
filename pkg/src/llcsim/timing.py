"""Two arbitrated resources: the shared LLC port and a single FIFO DRAM channel."""
from __future__ import annotations

from dataclasses import dataclass, fields

from .cache import AccessOutcome


@dataclass(frozen=True)
class TimingParams:
    llc_hit_cycles: int = 32
    dram_latency_cycles: int = 200
    dram_service_interval_cycles: int = 4
    llc_port_interval_cycles: int = 1

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ValueError(f"{f.name} must be a positive integer, got {value!r}")
        if self.dram_latency_cycles < self.dram_service_interval_cycles:
            raise ValueError(
                "dram_latency_cycles must be >= dram_service_interval_cycles "
                f"({self.dram_latency_cycles} < {self.dram_service_interval_cycles})"
            )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.llc_hit_cycles, self.dram_latency_cycles,
                self.dram_service_interval_cycles, self.llc_port_interval_cycles)


@dataclass
class ChannelState:
    llc_port_free_at: int = 0
    dram_free_at: int = 0


def service_transaction(channel: ChannelState, params: TimingParams, outcome: AccessOutcome,
                        issue_time: int, fill: bool = False) -> int:
    """Reserve the port (and DRAM on a miss or fill) and return the completion cycle.

    Fills always take the DRAM path, even when the line was already resident.
    """
    if issue_time < 0:
        raise ValueError(f"issue_time must be >= 0, got {issue_time}")
    port_start = max(issue_time, channel.llc_port_free_at)
    channel.llc_port_free_at = port_start + params.llc_port_interval_cycles
    if outcome.hit and not fill:
        return port_start + params.llc_hit_cycles
    dram_start = max(port_start, channel.dram_free_at)
    channel.dram_free_at = dram_start + params.dram_service_interval_cycles
    return dram_start + params.dram_latency_cycles
