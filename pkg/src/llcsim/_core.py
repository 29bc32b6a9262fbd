"""Compiled replay loop shared by every simulation."""
import numba
import numpy as np

FILL = 2


@numba.njit(cache=True)
def replay(lines, kinds, bounds, g_first, g_last, cyclic, measured,
           num_sets, assoc, hit_cycles, latency, dram_interval, port_interval):
    """Replay concatenated group arrays through an LRU cache and FIFO channel.

    Stream s owns groups g_first[s] .. g_last[s] - 1. Returns per-stream
    (last completion, issued transactions, hits, misses, evictions).
    """
    nstreams = g_first.shape[0]
    tags = np.full((num_sets, assoc), -1, np.int64)
    fill = np.zeros(num_sets, np.int64)
    cursor = g_first.copy()
    ready = np.zeros(nstreams, np.int64)
    idle = np.zeros(nstreams, np.bool_)
    out = np.zeros((nstreams, 5), np.int64)
    for s in range(nstreams):
        if g_first[s] == g_last[s]:
            idle[s] = True
    port_free = 0
    dram_free = 0
    last = nstreams - 1
    while True:
        pick = -1
        best = 0
        for step in range(1, nstreams + 1):
            i = (last + step) % nstreams
            if idle[i]:
                continue
            if pick < 0 or ready[i] < best:
                best = ready[i]
                pick = i
        if pick < 0:
            break
        g = cursor[pick]
        if g == g_last[pick]:
            if cyclic[pick]:
                g = g_first[pick]
            else:
                idle[pick] = True
                if pick == measured:
                    break
                continue
        cursor[pick] = g + 1
        last = pick
        t = ready[pick]
        done = t
        for j in range(bounds[g], bounds[g + 1]):
            line = lines[j]
            row = line % num_sets
            n = fill[row]
            pos = -1
            for w in range(n):
                if tags[row, w] == line:
                    pos = w
                    break
            port_start = t if t > port_free else port_free
            port_free = port_start + port_interval
            if pos >= 0:
                out[pick, 2] += 1
                for w in range(pos, n - 1):
                    tags[row, w] = tags[row, w + 1]
                tags[row, n - 1] = line
                if kinds[j] != FILL:
                    c = port_start + hit_cycles
                    if c > done:
                        done = c
                    continue
            else:
                out[pick, 3] += 1
                if n == assoc:
                    out[pick, 4] += 1
                    for w in range(assoc - 1):
                        tags[row, w] = tags[row, w + 1]
                    tags[row, assoc - 1] = line
                else:
                    tags[row, n] = line
                    fill[row] = n + 1
            dram_start = port_start if port_start > dram_free else dram_free
            dram_free = dram_start + dram_interval
            c = dram_start + latency
            if c > done:
                done = c
        out[pick, 1] += bounds[g + 1] - bounds[g]
        ready[pick] = done
        out[pick, 0] = done
    return out
