"""Warp-coalesced transaction traces for the four workloads.

A trace is a list of issue groups. One group holds the transactions produced
by a single coalesced memory instruction (or one copy-engine burst); the
simulator issues a group at once and the stream blocks until all of it
completes.
"""
from __future__ import annotations

import math

import numpy as np
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Union

from .cache import CacheGeometry, Kind

WARP_SIZE = 32
MAX_THREADS_PER_BLOCK = 1024


class Requestor(str, Enum):
    SM0 = "SM0"
    SM1 = "SM1"
    COPY_ENGINE = "CopyEngine"


class Transaction(NamedTuple):
    line_address: int
    kind: Kind
    requestor: Requestor
    stream_id: int


Group = tuple  # tuple[Transaction, ...]


@dataclass(frozen=True)
class Buffer:
    base_address: int
    element_size_bytes: int
    length_elements: int

    @property
    def extent_bytes(self) -> int:
        return self.element_size_bytes * self.length_elements

    @property
    def end_address(self) -> int:
        return self.base_address + self.extent_bytes

    def address(self, index: int) -> int:
        return self.base_address + index * self.element_size_bytes

    def __contains__(self, address: int) -> bool:
        return self.base_address <= address < self.end_address


class BumpAllocator:
    """Places buffers back to back in a flat address space, line aligned."""

    def __init__(self, geometry: CacheGeometry, start: int = 0):
        self.line_size = geometry.line_size_bytes
        self.next_address = self._align(start)

    def _align(self, address: int) -> int:
        return -(-address // self.line_size) * self.line_size

    def allocate(self, length_elements: int, element_size_bytes: int = 1) -> Buffer:
        buf = Buffer(self.next_address, element_size_bytes, length_elements)
        self.next_address = self._align(buf.end_address)
        return buf


@dataclass(frozen=True)
class WarpModel:
    warp_size: int = WARP_SIZE
    threads_per_block: int = MAX_THREADS_PER_BLOCK

    def __post_init__(self):
        if self.warp_size <= 0:
            raise ValueError("warp_size must be positive")
        if not 0 < self.threads_per_block <= MAX_THREADS_PER_BLOCK:
            raise ValueError(
                f"threads_per_block must be in [1, {MAX_THREADS_PER_BLOCK}], "
                f"got {self.threads_per_block}"
            )

    @property
    def num_warps(self) -> int:
        return math.ceil(self.threads_per_block / self.warp_size)

    def warp_threads(self, warp: int) -> range:
        start = warp * self.warp_size
        return range(start, min(start + self.warp_size, self.threads_per_block))


def _check_count(name: str, value: int, minimum: int = 0):
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")


@dataclass(frozen=True)
class Vadd:
    n: int
    runs: int = 1
    warp: WarpModel = field(default_factory=WarpModel)
    element_size: int = 4

    def __post_init__(self):
        _check_count("n", self.n)
        _check_count("runs", self.runs)


@dataclass(frozen=True)
class Gemm:
    m: int
    n: int
    k: int
    runs: int = 1
    warp: WarpModel = field(default_factory=WarpModel)
    element_size: int = 4

    def __post_init__(self):
        for key in ("m", "n", "k", "runs"):
            _check_count(key, getattr(self, key))


@dataclass(frozen=True)
class Interference:
    n: int
    stride: int
    runs: int = 1
    warp: WarpModel = field(default_factory=WarpModel)

    def __post_init__(self):
        _check_count("n", self.n)
        _check_count("runs", self.runs)
        if not isinstance(self.stride, int) or self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride!r}")


@dataclass(frozen=True)
class CopyLoop:
    cache_lines: int
    runs: int = 1
    burst_lines: int = 1

    def __post_init__(self):
        _check_count("cache_lines", self.cache_lines)
        _check_count("runs", self.runs)
        _check_count("burst_lines", self.burst_lines, 1)


KernelSpec = Union[Vadd, Gemm, Interference, CopyLoop]


def coalesce_warp(addresses, geometry: CacheGeometry, kind: Kind = Kind.READ,
                  requestor: Requestor = Requestor.SM0, stream_id: int = 0) -> list[Transaction]:
    """Merge one warp instruction's byte addresses into line requests, ascending."""
    mask = ~(geometry.line_size_bytes - 1)
    lines = sorted({a & mask for a in addresses})
    return [Transaction(line, kind, requestor, stream_id) for line in lines]


def _group(addresses, mask, kind, requestor, stream_id) -> Group:
    return tuple(Transaction(line, kind, requestor, stream_id)
                 for line in sorted({a & mask for a in addresses}))


def _shifted(lines, offset, kind, requestor, stream_id) -> Group:
    return tuple(Transaction(line + offset, kind, requestor, stream_id) for line in lines)


def iter_interference(spec: Interference, r: Buffer, w: Buffer, geometry: CacheGeometry,
                      requestor: Requestor = Requestor.SM1, stream_id: int = 1) -> Iterator[Group]:
    # Literal loop: idx = tid * stride; while idx < n: w[idx] = r[idx]; idx += blockDim.x
    line_size = geometry.line_size_bytes
    mask = ~(line_size - 1)
    warp = spec.warp
    block = warp.threads_per_block
    n, stride = spec.n, spec.stride
    warps = [warp.warp_threads(i) for i in range(warp.num_warps)]
    # thread 0 starts lowest, so it runs the most iterations
    iterations = -(-n // block) if n > 0 else 0
    # iterations where every thread is active repeat iteration 0 shifted by it * block bytes
    full = max(0, -(-(n - (block - 1) * stride) // block)) if block % line_size == 0 else 0
    patterns = [sorted({(t * stride) & mask for t in threads}) for threads in warps]
    for _ in range(spec.runs):
        for it in range(iterations):
            offset = it * block
            if it < full:
                for lines in patterns:
                    yield _shifted(lines, r.base_address + offset, Kind.READ, requestor, stream_id)
                    yield _shifted(lines, w.base_address + offset, Kind.WRITE, requestor, stream_id)
                continue
            for threads in warps:
                idxs = [t * stride + offset for t in threads]
                idxs = [i for i in idxs if i < n]
                if not idxs:
                    continue
                yield _group((r.base_address + i for i in idxs), mask, Kind.READ, requestor, stream_id)
                yield _group((w.base_address + i for i in idxs), mask, Kind.WRITE, requestor, stream_id)


def iter_vadd(spec: Vadd, a: Buffer, b: Buffer, c: Buffer, geometry: CacheGeometry,
              requestor: Requestor = Requestor.SM0, stream_id: int = 0) -> Iterator[Group]:
    """c[i] = a[i] + b[i] over a single block with a grid-stride loop."""
    mask = ~(geometry.line_size_bytes - 1)
    warp = spec.warp
    block = warp.threads_per_block
    warps = [warp.warp_threads(i) for i in range(warp.num_warps)]
    iterations = -(-spec.n // block) if spec.n > 0 else 0
    for _ in range(spec.runs):
        for it in range(iterations):
            for threads in warps:
                elems = [t + it * block for t in threads if t + it * block < spec.n]
                if not elems:
                    continue
                yield _group((a.address(e) for e in elems), mask, Kind.READ, requestor, stream_id)
                yield _group((b.address(e) for e in elems), mask, Kind.READ, requestor, stream_id)
                yield _group((c.address(e) for e in elems), mask, Kind.WRITE, requestor, stream_id)


def iter_gemm(spec: Gemm, A: Buffer, B: Buffer, C: Buffer, geometry: CacheGeometry,
              requestor: Requestor = Requestor.SM0, stream_id: int = 0) -> Iterator[Group]:
    """Naive row-major C = A @ B, one thread per C element, grid-stride."""
    mask = ~(geometry.line_size_bytes - 1)
    m, n, k = spec.m, spec.n, spec.k
    total = m * n
    warp = spec.warp
    block = warp.threads_per_block
    warps = [warp.warp_threads(i) for i in range(warp.num_warps)]
    iterations = -(-total // block) if total > 0 else 0
    for _ in range(spec.runs):
        for it in range(iterations):
            for threads in warps:
                elems = [t + it * block for t in threads if t + it * block < total]
                if not elems:
                    continue
                rows = [e // n for e in elems]
                cols = [e % n for e in elems]
                for l in range(k):
                    yield _group((A.address(i * k + l) for i in rows), mask, Kind.READ, requestor, stream_id)
                    yield _group((B.address(l * n + j) for j in cols), mask, Kind.READ, requestor, stream_id)
                yield _group((C.address(e) for e in elems), mask, Kind.WRITE, requestor, stream_id)


def iter_copy(spec: CopyLoop, dst: Buffer, geometry: CacheGeometry,
              requestor: Requestor = Requestor.COPY_ENGINE, stream_id: int = 2) -> Iterator[Group]:
    if spec.cache_lines > geometry.num_lines:
        raise ValueError(
            f"cache_lines exceeds num_lines ({spec.cache_lines} > {geometry.num_lines})"
        )
    line = geometry.line_size_bytes
    if dst.extent_bytes < line * spec.cache_lines:
        raise ValueError("destination buffer smaller than the copy length")
    base = geometry.line_address(dst.base_address)
    burst = spec.burst_lines
    for _ in range(spec.runs):
        for start in range(0, spec.cache_lines, burst):
            stop = min(start + burst, spec.cache_lines)
            yield tuple(Transaction(base + i * line, Kind.FILL, requestor, stream_id)
                        for i in range(start, stop))


def flatten(groups) -> list[Transaction]:
    return [tx for group in groups for tx in group]


def gen_interference_trace(spec: Interference, r: Buffer, w: Buffer,
                           geometry: CacheGeometry | None = None, **kw) -> list[Group]:
    geometry = geometry or CacheGeometry()
    if r.extent_bytes < spec.n or w.extent_bytes < spec.n:
        raise ValueError("interference buffers must hold n bytes each")
    return list(iter_interference(spec, r, w, geometry, **kw))


def gen_vadd_trace(spec: Vadd, a: Buffer, b: Buffer, c: Buffer,
                   geometry: CacheGeometry | None = None, **kw) -> list[Group]:
    return list(iter_vadd(spec, a, b, c, geometry or CacheGeometry(), **kw))


def gen_gemm_trace(spec: Gemm, A: Buffer, B: Buffer, C: Buffer,
                   geometry: CacheGeometry | None = None, **kw) -> list[Group]:
    return list(iter_gemm(spec, A, B, C, geometry or CacheGeometry(), **kw))


def gen_copy_trace(spec: CopyLoop, dst: Buffer,
                   geometry: CacheGeometry | None = None, **kw) -> list[Group]:
    return list(iter_copy(spec, dst, geometry or CacheGeometry(), **kw))


def allocate_buffers(spec: KernelSpec, alloc: BumpAllocator) -> tuple[Buffer, ...]:
    """Buffers a kernel needs, in the order its generator takes them."""
    if isinstance(spec, Vadd):
        return tuple(alloc.allocate(spec.n, spec.element_size) for _ in range(3))
    if isinstance(spec, Gemm):
        return (alloc.allocate(spec.m * spec.k, spec.element_size),
                alloc.allocate(spec.k * spec.n, spec.element_size),
                alloc.allocate(spec.m * spec.n, spec.element_size))
    if isinstance(spec, Interference):
        return alloc.allocate(spec.n), alloc.allocate(spec.n)
    if isinstance(spec, CopyLoop):
        return (alloc.allocate(spec.cache_lines * alloc.line_size),)
    raise TypeError(f"unknown kernel spec {spec!r}")


def iter_groups(spec: KernelSpec, buffers, geometry: CacheGeometry,
                requestor: Requestor, stream_id: int) -> Iterator[Group]:
    if isinstance(spec, Vadd):
        return iter_vadd(spec, *buffers, geometry, requestor, stream_id)
    if isinstance(spec, Gemm):
        return iter_gemm(spec, *buffers, geometry, requestor, stream_id)
    if isinstance(spec, Interference):
        return iter_interference(spec, *buffers, geometry, requestor, stream_id)
    if isinstance(spec, CopyLoop):
        return iter_copy(spec, *buffers, geometry, requestor, stream_id)
    raise TypeError(f"unknown kernel spec {spec!r}")


class CompiledTrace(NamedTuple):
    """Array form of a trace: line numbers, kind codes, and group bounds.

    Group g spans lines[bounds[g]:bounds[g + 1]].
    """

    lines: np.ndarray
    kinds: np.ndarray
    bounds: np.ndarray

    @property
    def num_groups(self) -> int:
        return len(self.bounds) - 1

    def __len__(self) -> int:
        return len(self.lines)


KIND_CODES = {Kind.READ: 0, Kind.WRITE: 1, Kind.FILL: 2}
KIND_FROM_CODE = {v: k for k, v in KIND_CODES.items()}

_EMPTY = CompiledTrace(np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(1, np.int64))


def _coalesce_rows(addresses: np.ndarray, valid: np.ndarray, kinds: np.ndarray,
                   shift: int) -> CompiledTrace:
    # addresses, valid: (groups, lanes); kinds: (groups,)
    sentinel = np.iinfo(np.int64).max
    lines = np.where(valid, addresses >> shift, sentinel)
    lines.sort(axis=1)
    keep = lines != sentinel
    keep[:, 1:] &= lines[:, 1:] != lines[:, :-1]
    counts = keep.sum(axis=1)
    nonempty = counts > 0
    counts = counts[nonempty]
    bounds = np.zeros(len(counts) + 1, np.int64)
    np.cumsum(counts, out=bounds[1:])
    flat = lines[nonempty][keep[nonempty]]
    return CompiledTrace(flat.astype(np.int64), np.repeat(kinds[nonempty], counts), bounds)


def _repeat(trace: CompiledTrace, runs: int) -> CompiledTrace:
    if runs == 1 or len(trace) == 0:
        return trace if runs else _EMPTY
    size = len(trace)
    offsets = (np.arange(runs, dtype=np.int64) * size)[:, None]
    bounds = np.concatenate([[0], (trace.bounds[1:][None, :] + offsets).ravel()])
    return CompiledTrace(np.tile(trace.lines, runs), np.tile(trace.kinds, runs), bounds)


def _grid_stride(total: int, warp: WarpModel):
    """(iterations, warps, lanes) element indices and validity for a grid-stride loop."""
    block = warp.threads_per_block
    iterations = -(-total // block)
    lanes = np.arange(warp.num_warps * warp.warp_size).reshape(warp.num_warps, warp.warp_size)
    lane_ok = lanes < block
    elems = np.arange(iterations)[:, None, None] * block + lanes[None]
    return elems, (elems < total) & lane_ok[None]


def compile_trace(spec: KernelSpec, buffers, geometry: CacheGeometry) -> CompiledTrace:
    """Vectorized equivalent of iter_groups, as line-number arrays."""
    shift = geometry.offset_bits
    if isinstance(spec, CopyLoop):
        if spec.cache_lines > geometry.num_lines:
            raise ValueError(
                f"cache_lines exceeds num_lines ({spec.cache_lines} > {geometry.num_lines})"
            )
        if spec.cache_lines == 0 or spec.runs == 0:
            return _EMPTY
        first = buffers[0].base_address >> shift
        lines = np.arange(first, first + spec.cache_lines, dtype=np.int64)
        bounds = np.append(np.arange(0, spec.cache_lines, spec.burst_lines), spec.cache_lines)
        one = CompiledTrace(lines, np.full(spec.cache_lines, KIND_CODES[Kind.FILL], np.int8),
                            bounds.astype(np.int64))
        return _repeat(one, spec.runs)

    if isinstance(spec, Interference):
        r, w = buffers
        block = spec.warp.threads_per_block
        if spec.n == 0 or spec.runs == 0:
            return _EMPTY
        iterations = -(-spec.n // block)
        t = np.arange(spec.warp.num_warps * spec.warp.warp_size)
        t = t.reshape(spec.warp.num_warps, spec.warp.warp_size)
        idx = t[None] * spec.stride + np.arange(iterations)[:, None, None] * block
        valid = (idx < spec.n) & (t < block)[None]
        addrs = np.stack([r.base_address + idx, w.base_address + idx], axis=2)
        valid = np.stack([valid, valid], axis=2)
        kinds = np.tile(np.array([KIND_CODES[Kind.READ], KIND_CODES[Kind.WRITE]], np.int8),
                        iterations * spec.warp.num_warps)
        lanes = spec.warp.warp_size
        return _repeat(_coalesce_rows(addrs.reshape(-1, lanes), valid.reshape(-1, lanes),
                                      kinds, shift), spec.runs)

    if isinstance(spec, Vadd):
        if spec.n == 0 or spec.runs == 0:
            return _EMPTY
        elems, valid = _grid_stride(spec.n, spec.warp)
        addrs = np.stack([buf.base_address + elems * spec.element_size for buf in buffers], axis=2)
        valid = np.repeat(valid[:, :, None, :], 3, axis=2)
        codes = np.array([KIND_CODES[Kind.READ], KIND_CODES[Kind.READ], KIND_CODES[Kind.WRITE]],
                         np.int8)
        kinds = np.tile(codes, elems.shape[0] * elems.shape[1])
        lanes = spec.warp.warp_size
        return _repeat(_coalesce_rows(addrs.reshape(-1, lanes), valid.reshape(-1, lanes),
                                      kinds, shift), spec.runs)

    if isinstance(spec, Gemm):
        A, B, C = buffers
        m, n, k = spec.m, spec.n, spec.k
        if m * n == 0 or spec.runs == 0:
            return _EMPTY
        elems, valid = _grid_stride(m * n, spec.warp)
        rows, cols = elems // n, elems % n
        l = np.arange(k)[None, None, :, None]
        size = spec.element_size
        a_addr = A.base_address + (rows[:, :, None, :] * k + l) * size
        b_addr = B.base_address + (l * n + cols[:, :, None, :]) * size
        steps = np.stack([a_addr, b_addr], axis=3)  # (it, warp, k, 2, lanes)
        steps = steps.reshape(elems.shape[0], elems.shape[1], 2 * k, elems.shape[2])
        c_addr = (C.base_address + elems * size)[:, :, None, :]
        addrs = np.concatenate([steps, c_addr], axis=2)
        valid = np.repeat(valid[:, :, None, :], 2 * k + 1, axis=2)
        codes = np.array([KIND_CODES[Kind.READ]] * (2 * k) + [KIND_CODES[Kind.WRITE]], np.int8)
        kinds = np.tile(codes, elems.shape[0] * elems.shape[1])
        lanes = spec.warp.warp_size
        return _repeat(_coalesce_rows(addrs.reshape(-1, lanes), valid.reshape(-1, lanes),
                                      kinds, shift), spec.runs)

    raise TypeError(f"unknown kernel spec {spec!r}")


def to_groups(trace: CompiledTrace, geometry: CacheGeometry, requestor: Requestor,
              stream_id: int) -> list[Group]:
    """Expand a compiled trace back into Transaction groups."""
    shift = geometry.offset_bits
    lines = trace.lines.tolist()
    kinds = [KIND_FROM_CODE[c] for c in trace.kinds.tolist()]
    b = trace.bounds.tolist()
    return [tuple(Transaction(lines[i] << shift, kinds[i], requestor, stream_id)
                  for i in range(b[g], b[g + 1]))
            for g in range(len(b) - 1)]
