import itertools

import pytest

from llcsim.cache import CacheGeometry, Kind
from llcsim.workloads import (Buffer, BumpAllocator, CopyLoop, Gemm, Interference, Requestor,
                              Vadd, WarpModel, allocate_buffers, coalesce_warp, compile_trace,
                              flatten, gen_copy_trace, gen_gemm_trace, gen_interference_trace,
                              gen_vadd_trace, iter_groups, to_groups)

from oracles import literal_interference

G = CacheGeometry()


def lines_of(group):
    return [tx.line_address // G.line_size_bytes for tx in group]


def test_coalesce_examples():
    assert len(coalesce_warp(range(32), G)) == 1
    assert len(coalesce_warp([t * 32 for t in range(32)], G)) == 32
    txs = coalesce_warp(range(0, 64, 2), G)
    assert [tx.line_address for tx in txs] == [0, 32]
    assert all(tx.kind is Kind.READ for tx in txs)


def test_buffers_are_line_aligned_and_disjoint():
    alloc = BumpAllocator(G)
    a = alloc.allocate(3, 4)
    b = alloc.allocate(100)
    assert a.base_address == 0 and b.base_address == 32
    assert a.end_address <= b.base_address
    assert 12 not in a and 11 in a


def _interference_buffers(n):
    alloc = BumpAllocator(G)
    return alloc.allocate(n), alloc.allocate(n)


def test_interference_stride_one_single_line():
    spec = Interference(32, 1, warp=WarpModel(threads_per_block=32))
    r, w = _interference_buffers(32)
    groups = gen_interference_trace(spec, r, w)
    assert [(g[0].kind, len(g)) for g in groups] == [(Kind.READ, 1), (Kind.WRITE, 1)]
    assert groups[0][0].line_address == r.base_address
    assert groups[1][0].line_address == w.base_address


def test_interference_stride_32_touches_32_lines_per_buffer():
    spec = Interference(1024, 32, warp=WarpModel(threads_per_block=32))
    r, w = _interference_buffers(1024)
    txs = flatten(gen_interference_trace(spec, r, w))
    reads = {tx.line_address for tx in txs if tx.kind is Kind.READ}
    writes = {tx.line_address for tx in txs if tx.kind is Kind.WRITE}
    assert len(reads) == len(writes) == 32
    # the loop advances idx by blockDim, so thread t keeps running after its first line:
    # iteration k has 32 - k live threads, each on its own line
    assert len(txs) == 2 * sum(32 - k for k in range(32))


def test_interference_wide_stride_first_iteration_skips_odd_lines():
    spec = Interference(1024, 64, warp=WarpModel(threads_per_block=16))
    r, w = _interference_buffers(1024)
    groups = gen_interference_trace(spec, r, w)
    first = lines_of(groups[0])
    assert len(first) == 16 and all(line % 2 == 0 for line in first)
    # with a full 1024-thread block every iteration shifts by 1 KB, so only even lines appear
    spec = Interference(1 << 16, 64)
    r, w = _interference_buffers(1 << 16)
    assert all(line % 2 == 0 for g in gen_interference_trace(spec, r, w) for line in lines_of(g))


def test_interference_runs_repeat():
    one = gen_interference_trace(Interference(300, 3, runs=1, warp=WarpModel(threads_per_block=64)),
                                 *_interference_buffers(300))
    two = gen_interference_trace(Interference(300, 3, runs=2, warp=WarpModel(threads_per_block=64)),
                                 *_interference_buffers(300))
    assert two == one + one


def test_interference_rejects_zero_stride():
    with pytest.raises(ValueError):
        Interference(10, 0)


@pytest.mark.parametrize("n,stride,threads", [(1024, 32, 32), (5000, 7, 96), (4096, 64, 1024),
                                              (2000, 1, 40), (777, 256, 33), (0, 4, 32)])
def test_interference_matches_literal_enumeration(n, stride, threads):
    warp = WarpModel(threads_per_block=threads)
    r, w = _interference_buffers(n)
    got = gen_interference_trace(Interference(n, stride, warp=warp), r, w)
    expected = []
    for it in literal_interference(n, stride, threads):
        for wi in range(warp.num_warps):
            live = [i for i in it[wi * 32:(wi + 1) * 32] if i is not None]
            if not live:
                continue
            for buf, kind in ((r, Kind.READ), (w, Kind.WRITE)):
                expected.append((kind, sorted({(buf.base_address + i) // 32 for i in live})))
    assert [(g[0].kind, lines_of(g)) for g in got] == expected


def _vadd(n, **kw):
    spec = Vadd(n, **kw)
    return spec, allocate_buffers(spec, BumpAllocator(G))


def test_vadd_examples():
    spec, bufs = _vadd(8)
    assert len(flatten(gen_vadd_trace(spec, *bufs))) == 3
    spec, bufs = _vadd(16)
    assert len(flatten(gen_vadd_trace(spec, *bufs))) == 6
    spec, bufs = _vadd(0)
    assert gen_vadd_trace(spec, *bufs) == []


def test_vadd_matches_thread_enumeration():
    n, threads = 3000, 96
    spec, (a, b, c) = _vadd(n, warp=WarpModel(threads_per_block=threads))
    expected = []
    for it in range(-(-n // threads)):
        for wi in range(3):
            elems = [t + it * threads for t in range(wi * 32, wi * 32 + 32) if t + it * threads < n]
            if elems:
                for buf in (a, b, c):
                    expected.append(sorted({(buf.base_address + 4 * e) // 32 for e in elems}))
    assert [lines_of(g) for g in gen_vadd_trace(spec, a, b, c)] == expected


def _gemm(m, n, k, **kw):
    spec = Gemm(m, n, k, **kw)
    return spec, allocate_buffers(spec, BumpAllocator(G))


def test_gemm_examples():
    spec, bufs = _gemm(1, 1, 1)
    kinds = [tx.kind for tx in flatten(gen_gemm_trace(spec, *bufs))]
    assert kinds == [Kind.READ, Kind.READ, Kind.WRITE]
    spec, bufs = _gemm(0, 4, 4)
    assert gen_gemm_trace(spec, *bufs) == []
    spec, bufs = _gemm(1, 1, 2)
    txs = flatten(gen_gemm_trace(spec, *bufs))
    # per l: one A line and one B line, then the C write
    assert len(txs) == 5
    assert len({tx.line_address for tx in txs if tx.kind is Kind.READ}) == 2
    spec, bufs = _gemm(2, 3, 0)
    assert [tx.kind for tx in flatten(gen_gemm_trace(spec, *bufs))] == [Kind.WRITE]


def test_gemm_matches_thread_enumeration():
    m, n, k = 5, 19, 7
    spec, (A, B, C) = _gemm(m, n, k, warp=WarpModel(threads_per_block=64))
    expected = []
    for it in range(-(-(m * n) // 64)):
        for wi in range(2):
            elems = [t + it * 64 for t in range(wi * 32, wi * 32 + 32) if t + it * 64 < m * n]
            if not elems:
                continue
            for l in range(k):
                expected.append(sorted({(A.base_address + 4 * ((e // n) * k + l)) // 32 for e in elems}))
                expected.append(sorted({(B.base_address + 4 * (l * n + e % n)) // 32 for e in elems}))
            expected.append(sorted({(C.base_address + 4 * e) // 32 for e in elems}))
    assert [lines_of(g) for g in gen_gemm_trace(spec, A, B, C)] == expected


def test_copy_examples():
    alloc = BumpAllocator(G)
    dst = alloc.allocate(32)
    txs = flatten(gen_copy_trace(CopyLoop(1), dst))
    assert [(tx.kind, tx.requestor) for tx in txs] == [(Kind.FILL, Requestor.COPY_ENGINE)]
    full = CopyLoop(16384)
    dst = BumpAllocator(G).allocate(16384 * 32)
    txs = flatten(gen_copy_trace(full, dst))
    assert len(txs) == 16384 and len({tx.line_address // 32 % 1024 for tx in txs}) == 1024
    assert gen_copy_trace(CopyLoop(0), dst) == []


def test_copy_rejects_more_lines_than_cache():
    dst = BumpAllocator(G).allocate(20000 * 32)
    with pytest.raises(ValueError, match="cache_lines exceeds num_lines"):
        gen_copy_trace(CopyLoop(20000), dst)


def test_copy_bursts_group_lines():
    dst = BumpAllocator(G).allocate(10 * 32)
    groups = gen_copy_trace(CopyLoop(10, runs=2, burst_lines=4), dst)
    assert [len(g) for g in groups] == [4, 4, 2] * 2


SPECS = [Vadd(0), Vadd(1), Vadd(1000, runs=2), Vadd(5000, warp=WarpModel(threads_per_block=100)),
         Gemm(0, 3, 3), Gemm(3, 3, 0), Gemm(4, 70, 9), Gemm(2, 33, 5, runs=2),
         Interference(0, 1), Interference(5000, 1), Interference(5000, 33, runs=2),
         Interference(70000, 256), Interference(3000, 5, warp=WarpModel(threads_per_block=50)),
         CopyLoop(0), CopyLoop(1), CopyLoop(77, runs=3, burst_lines=8)]


@pytest.mark.parametrize("geometry", [CacheGeometry(16), G, CacheGeometry(64, 8192, 8)])
@pytest.mark.parametrize("spec", SPECS, ids=lambda s: repr(s)[:40])
def test_compiled_trace_matches_generators(spec, geometry):
    bufs = allocate_buffers(spec, BumpAllocator(geometry))
    requestor = Requestor.COPY_ENGINE if isinstance(spec, CopyLoop) else Requestor.SM0
    expected = list(iter_groups(spec, bufs, geometry, requestor, 3))
    got = to_groups(compile_trace(spec, bufs, geometry), geometry, requestor, 3)
    assert got == expected


def test_every_transaction_is_line_aligned():
    for spec in SPECS:
        bufs = allocate_buffers(spec, BumpAllocator(G))
        for tx in itertools.chain.from_iterable(iter_groups(spec, bufs, G, Requestor.SM1, 1)):
            assert tx.line_address % 32 == 0
