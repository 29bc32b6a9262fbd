"""Concurrent replay of stream traces through the shared cache and memory channel."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._core import replay
from .cache import CacheGeometry, CacheStats
from .timing import TimingParams
from .workloads import (BumpAllocator, CompiledTrace, CopyLoop, KernelSpec, Requestor,
                        allocate_buffers, compile_trace)


@dataclass(frozen=True)
class StreamBinding:
    stream_id: int
    requestor: Requestor
    kernel: KernelSpec


@dataclass(frozen=True)
class SimConfig:
    geometry: CacheGeometry = field(default_factory=CacheGeometry)
    timing: TimingParams = field(default_factory=TimingParams)
    streams: tuple[StreamBinding, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "streams", tuple(self.streams))
        if not self.streams:
            raise ValueError("SimConfig needs at least one stream")
        ids = [s.stream_id for s in self.streams]
        if len(set(ids)) != len(ids):
            raise ValueError(f"stream ids must be unique, got {ids}")
        sms = [s.requestor for s in self.streams if s.requestor is not Requestor.COPY_ENGINE]
        if len(set(sms)) != len(sms):
            raise ValueError("at most one compute kernel per SM")
        for s in self.streams:
            is_copy = isinstance(s.kernel, CopyLoop)
            if is_copy != (s.requestor is Requestor.COPY_ENGINE):
                raise ValueError(
                    f"stream {s.stream_id}: copy loops run on the copy engine and only there"
                )


@dataclass(frozen=True)
class SimResult:
    total_cycles: int
    per_stream_cycles: dict
    cache_stats: CacheStats
    transactions_issued: int
    per_stream_stats: dict = field(default_factory=dict, compare=True)


def compile_streams(config: SimConfig) -> list[CompiledTrace]:
    """Allocate buffers in stream order and compile each stream's trace."""
    alloc = BumpAllocator(config.geometry)
    traces = []
    for binding in config.streams:
        buffers = allocate_buffers(binding.kernel, alloc)
        traces.append(compile_trace(binding.kernel, buffers, config.geometry))
    return traces


def run(config: SimConfig, measured_stream: int) -> SimResult:
    """Replay all streams until the measured stream's trace is exhausted.

    Each stream keeps one issue group outstanding and issues the next one
    when every transaction of the previous group has completed. The stream
    with the earliest ready cycle issues next; ties rotate round-robin after
    the last issuer. Streams other than the measured one restart their trace
    whenever it ends.
    """
    ids = [s.stream_id for s in config.streams]
    if measured_stream not in ids:
        raise KeyError(f"unknown stream id {measured_stream}")
    traces = compile_streams(config)

    g_first, g_last, offset, line_offset = [], [], 0, 0
    for tr in traces:
        g_first.append(offset)
        offset += tr.num_groups
        g_last.append(offset)
    lines = np.concatenate([tr.lines for tr in traces])
    kinds = np.concatenate([tr.kinds for tr in traces])
    bounds = [np.zeros(1, np.int64)]
    for tr in traces:
        bounds.append(tr.bounds[1:] + line_offset)
        line_offset += len(tr)
    bounds = np.concatenate(bounds)
    cyclic = np.array([sid != measured_stream for sid in ids])

    geometry, p = config.geometry, config.timing
    out = replay(lines, kinds, bounds, np.array(g_first, np.int64), np.array(g_last, np.int64),
                 cyclic, ids.index(measured_stream), geometry.num_sets, geometry.associativity,
                 p.llc_hit_cycles, p.dram_latency_cycles, p.dram_service_interval_cycles,
                 p.llc_port_interval_cycles)

    per_stream_stats = {}
    for sid, (_, issued, hits, misses, evictions) in zip(ids, out.tolist()):
        per_stream_stats[sid] = CacheStats(issued, hits, misses, evictions)
    total = CacheStats(*(sum(getattr(st, key) for st in per_stream_stats.values())
                         for key in ("accesses", "hits", "misses", "evictions")))
    per_stream_cycles = {sid: row[0] for sid, row in zip(ids, out.tolist())}
    return SimResult(
        total_cycles=per_stream_cycles[measured_stream],
        per_stream_cycles=per_stream_cycles,
        cache_stats=total,
        transactions_issued=total.accesses,
        per_stream_stats=per_stream_stats,
    )


def run_isolated(kernel: KernelSpec, geometry: CacheGeometry | None = None,
                 timing: TimingParams | None = None, requestor: Requestor | None = None) -> SimResult:
    if requestor is None:
        requestor = Requestor.COPY_ENGINE if isinstance(kernel, CopyLoop) else Requestor.SM0
    config = SimConfig(geometry or CacheGeometry(), timing or TimingParams(),
                       (StreamBinding(0, requestor, kernel),))
    return run(config, 0)


def slowdown(contended: SimResult, baseline: SimResult) -> float:
    if baseline.total_cycles <= 0:
        raise ZeroDivisionError("baseline has zero cycles; slowdown undefined")
    return contended.total_cycles / baseline.total_cycles
