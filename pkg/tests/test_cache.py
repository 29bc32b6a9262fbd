import random

import pytest
from hypothesis import given, settings, strategies as st

from llcsim.cache import (CacheGeometry, CacheState, Kind, Outcome, access, footprint_lines,
                          set_index)

from oracles import BruteLRU

G = CacheGeometry()


def test_default_geometry():
    assert G.num_sets == 1024
    assert G.capacity_bytes == 512 * 1024


@pytest.mark.parametrize("kwargs", [
    dict(line_size_bytes=0), dict(line_size_bytes=24), dict(num_lines=-1),
    dict(associativity=3), dict(associativity=0), dict(num_lines=True),
])
def test_geometry_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        CacheGeometry(**kwargs)


@pytest.mark.parametrize("addr,expected", [(0, 0), (32768, 0), (40, 1), (31, 0), (32767, 1023)])
def test_set_index(addr, expected):
    assert set_index(G, addr) == expected


@pytest.mark.parametrize("base,length,expected", [(0, 32, 1), (0, 0, 0), (16, 32, 2), (31, 2, 2),
                                                  (0, 33, 2), (64, 1, 1)])
def test_footprint_lines(base, length, expected):
    assert footprint_lines(G, base, length) == expected


def test_footprint_rejects_negative_length():
    with pytest.raises(ValueError):
        footprint_lines(G, 0, -1)


def test_cold_miss_then_hit():
    state = CacheState(G)
    first = access(state, 0)
    assert first.kind is Outcome.MISS and first.evicted_line is None
    assert access(state, 0).hit
    assert access(state, 31, Kind.WRITE).hit


def test_seventeen_lines_in_one_set_evict_the_first():
    state = CacheState(G)
    for k in range(17):
        out = access(state, k * 32 * 1024)
    assert out.evicted_line == 0
    assert not access(state, 0).hit


def test_hit_refreshes_recency():
    state = CacheState(G)
    for k in range(16):
        access(state, k * 32 * 1024)
    access(state, 0)  # line 0 becomes most recent
    out = access(state, 16 * 32 * 1024)
    assert out.evicted_line == 1024  # the second line inserted is now the oldest
    assert state.contains(0)


def test_fill_and_write_allocate():
    state = CacheState(G)
    assert not access(state, 64, Kind.FILL).hit
    assert access(state, 64).hit
    assert not access(state, 96, Kind.WRITE).hit
    assert access(state, 96).hit


def _compare(geometry, addresses):
    ours, ref = CacheState(geometry), BruteLRU(geometry.line_size_bytes, geometry.num_lines,
                                               geometry.associativity)
    kinds = (Kind.READ, Kind.WRITE, Kind.FILL)
    for i, a in enumerate(addresses):
        got = ours.access(a, kinds[i % 3])
        hit, victim = ref.access(a)
        assert (got.hit, got.evicted_line) == (hit, victim), f"access {i} to {a}"
    return ours


def test_matches_brute_force_lru_small_cache():
    rng = random.Random(7)
    g = CacheGeometry(line_size_bytes=16, num_lines=64, associativity=4)
    _compare(g, [rng.randrange(0, 16 * 400) for _ in range(20000)])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1 << 16), max_size=400),
       st.sampled_from([(16, 32, 2), (32, 64, 4), (64, 16, 16), (32, 8, 1)]))
def test_property_lru_equivalence_and_conservation(addresses, shape):
    g = CacheGeometry(*shape)
    state = _compare(g, addresses)
    s = state.stats
    assert s.hits + s.misses == s.accesses == len(addresses)
    assert state.resident_lines() <= g.num_lines
    assert all(len(ways) <= g.associativity for ways in state.sets)
    assert s.evictions == s.misses - state.resident_lines()
