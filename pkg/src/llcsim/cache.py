"""Set-associative last-level cache with LRU replacement."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Kind(str, Enum):
    READ = "Read"
    WRITE = "Write"
    FILL = "Fill"


class Outcome(str, Enum):
    HIT = "Hit"
    MISS = "Miss"


@dataclass(frozen=True)
class CacheGeometry:
    line_size_bytes: int = 32
    num_lines: int = 16384
    associativity: int = 16

    def __post_init__(self):
        for key in ("line_size_bytes", "num_lines", "associativity"):
            value = getattr(self, key)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ValueError(f"{key} must be a positive integer, got {value!r}")
        if self.line_size_bytes & (self.line_size_bytes - 1):
            raise ValueError(f"line_size_bytes must be a power of two, got {self.line_size_bytes}")
        if self.num_lines % self.associativity:
            raise ValueError(
                f"associativity ({self.associativity}) must divide num_lines ({self.num_lines})"
            )

    @property
    def num_sets(self) -> int:
        return self.num_lines // self.associativity

    @property
    def capacity_bytes(self) -> int:
        return self.line_size_bytes * self.num_lines

    @property
    def offset_bits(self) -> int:
        return self.line_size_bytes.bit_length() - 1

    def line_of(self, address: int) -> int:
        return address >> self.offset_bits

    def line_address(self, address: int) -> int:
        return address & ~(self.line_size_bytes - 1)


@dataclass(frozen=True)
class AccessOutcome:
    kind: Outcome
    evicted_line: int | None = None

    @property
    def hit(self) -> bool:
        return self.kind is Outcome.HIT


HIT = AccessOutcome(Outcome.HIT)
MISS = AccessOutcome(Outcome.MISS)


@dataclass
class CacheStats:
    accesses: int = 0
    hits: int = 0
    misses: int = 0
    evictions: int = 0

    @property
    def hit_rate(self) -> float:
        return self.hits / self.accesses if self.accesses else 0.0


def set_index(geometry: CacheGeometry, address: int) -> int:
    return (address // geometry.line_size_bytes) % geometry.num_sets


def footprint_lines(geometry: CacheGeometry, base: int, length: int) -> int:
    """Number of distinct lines overlapped by the byte range [base, base + length)."""
    if length < 0:
        raise ValueError(f"length must be non-negative, got {length}")
    if length == 0:
        return 0
    first = base // geometry.line_size_bytes
    last = (base + length - 1) // geometry.line_size_bytes
    return last - first + 1


@dataclass
class CacheState:
    """Mutable cache contents.

    Each set is a list of line numbers ordered from least to most recently
    used. Tags are stored as full line numbers, which keeps evicted_line
    directly usable as an identifier.
    """

    geometry: CacheGeometry = field(default_factory=CacheGeometry)
    stats: CacheStats = field(default_factory=CacheStats)
    sets: list[list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.sets = [[] for _ in range(self.geometry.num_sets)]

    def contains(self, address: int) -> bool:
        line = self.geometry.line_of(address)
        return line in self.sets[line % self.geometry.num_sets]

    def resident_lines(self) -> int:
        return sum(len(ways) for ways in self.sets)

    def access(self, address: int, kind: Kind = Kind.READ) -> AccessOutcome:
        # Read, Write and Fill share the allocate-on-miss path; write-backs are free.
        line = address >> self.geometry.offset_bits
        ways = self.sets[line % self.geometry.num_sets]
        stats = self.stats
        stats.accesses += 1
        if line in ways:
            if ways[-1] != line:
                ways.remove(line)
                ways.append(line)
            stats.hits += 1
            return HIT
        stats.misses += 1
        ways.append(line)
        if len(ways) > self.geometry.associativity:
            stats.evictions += 1
            return AccessOutcome(Outcome.MISS, ways.pop(0))
        return MISS


def access(state: CacheState, address: int, kind: Kind = Kind.READ) -> AccessOutcome:
    return state.access(address, kind)
