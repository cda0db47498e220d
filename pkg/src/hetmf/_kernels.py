"""Numba event-loop kernels for the stochastic simulator.

The direct method is organised around a mismatch counter per rule (how many
participants are away from their source states) so that each event only
touches the rules sharing a participant with the objects that moved; active
rules are kept in a swap-remove list and the total rate is maintained
incrementally (refreshed periodically against float drift).

Randomness is xoshiro256++ with splitmix64-derived per-stream states, fully
deterministic and independent of threading.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U64 = np.uint64
_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_R23 = _U64(23)
_R45 = _U64(45)
_R17 = _U64(17)
_R11 = _U64(11)
_R64 = _U64(64)
_ONE = _U64(1)
_INV53 = float(2.0 ** -53)

_REFRESH_MASK = (1 << 20) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, (z ^ (z >> 31)) & _MASK


def stream_state(seed: int, stream: int) -> np.ndarray:
    """Four xoshiro256++ state words for (seed, stream); distinct streams come
    from distinct splitmix64 starting points."""
    state = (int(seed) ^ ((int(stream) + 1) * _GOLDEN)) & _MASK
    words = []
    for _ in range(4):
        state, w = _splitmix64(state)
        words.append(w)
    if not any(words):
        words[0] = 1
    return np.array(words, dtype=np.uint64)


@njit(cache=True, nogil=True, inline="always")
def _next_u64(s):
    x = s[0] + s[3]
    result = ((x << _R23) | (x >> (_R64 - _R23))) + s[0]
    t = s[1] << _R17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << _R45) | (s[3] >> (_R64 - _R45))
    return result


@njit(cache=True, nogil=True, inline="always")
def _uniform(s):
    """Uniform draw in (0, 1]; safe under log()."""
    return ((_next_u64(s) >> _R11) + _ONE) * _INV53


@njit(cache=True, nogil=True)
def _init_books(part_obj, part_from, part_off, rates, state,
                mismatch, active_list, active_pos):
    n_rules = rates.size
    n_active = 0
    total = 0.0
    for r in range(n_rules):
        mm = 0
        for pi in range(part_off[r], part_off[r + 1]):
            if state[part_obj[pi]] != part_from[pi]:
                mm += 1
        mismatch[r] = mm
        active_pos[r] = -1
        if mm == 0:
            active_list[n_active] = r
            active_pos[r] = n_active
            n_active += 1
            total += rates[r]
    return n_active, total


@njit(cache=True, nogil=True, inline="always")
def _leave(k, a, num_states, touch_off, touch_rule, rates,
           mismatch, active_list, active_pos, n_active, total):
    base = k * num_states + a
    for ti in range(touch_off[base], touch_off[base + 1]):
        rr = touch_rule[ti]
        if mismatch[rr] == 0:
            pos = active_pos[rr]
            n_active -= 1
            last = active_list[n_active]
            active_list[pos] = last
            active_pos[last] = pos
            active_pos[rr] = -1
            total -= rates[rr]
        mismatch[rr] += 1
    return n_active, total


@njit(cache=True, nogil=True, inline="always")
def _enter(k, b, num_states, touch_off, touch_rule, rates,
           mismatch, active_list, active_pos, n_active, total):
    base = k * num_states + b
    for ti in range(touch_off[base], touch_off[base + 1]):
        rr = touch_rule[ti]
        mismatch[rr] -= 1
        if mismatch[rr] == 0:
            active_list[n_active] = rr
            active_pos[rr] = n_active
            n_active += 1
            total += rates[rr]
    return n_active, total


@njit(cache=True, nogil=True, inline="always")
def _pick(rng, rates, active_list, n_active, total):
    target = _uniform(rng) * total
    acc = 0.0
    chosen = active_list[n_active - 1]
    for ai in range(n_active):
        r = active_list[ai]
        acc += rates[r]
        if acc >= target:
            chosen = r
            break
    return chosen


@njit(cache=True, nogil=True, inline="always")
def _apply(chosen, part_obj, part_from, part_to, part_off, num_states,
           touch_off, touch_rule, rates, state,
           mismatch, active_list, active_pos, n_active, total):
    for pi in range(part_off[chosen], part_off[chosen + 1]):
        a = part_from[pi]
        b = part_to[pi]
        if a == b:
            continue
        k = part_obj[pi]
        n_active, total = _leave(k, a, num_states, touch_off, touch_rule, rates,
                                 mismatch, active_list, active_pos, n_active, total)
        state[k] = b
        n_active, total = _enter(k, b, num_states, touch_off, touch_rule, rates,
                                 mismatch, active_list, active_pos, n_active, total)
    return n_active, total


@njit(cache=True, nogil=True, inline="always")
def _refresh_total(rates, active_list, n_active):
    total = 0.0
    for ai in range(n_active):
        total += rates[active_list[ai]]
    return total


@njit(cache=True, nogil=True)
def transient_kernel(part_obj, part_from, part_to, part_off, rates,
                     touch_off, touch_rule, num_states, state0, grid, rng):
    """One replica: states of every object at each grid time (right-
    continuous sample path)."""
    n = state0.size
    n_rules = rates.size
    state = state0.copy()
    mismatch = np.empty(n_rules, dtype=np.int64)
    active_list = np.empty(n_rules, dtype=np.int64)
    active_pos = np.empty(n_rules, dtype=np.int64)
    n_active, total = _init_books(part_obj, part_from, part_off, rates, state,
                                  mismatch, active_list, active_pos)
    n_grid = grid.size
    out = np.empty((n_grid, n), dtype=np.int64)
    gi = 0
    t = 0.0
    while gi < n_grid and grid[gi] <= t:
        out[gi] = state
        gi += 1
    events = 0
    while gi < n_grid:
        if n_active == 0 or total <= 0.0:
            while gi < n_grid:
                out[gi] = state
                gi += 1
            break
        t_next = t - np.log(_uniform(rng)) / total
        while gi < n_grid and grid[gi] < t_next:
            out[gi] = state
            gi += 1
        if gi >= n_grid:
            break
        chosen = _pick(rng, rates, active_list, n_active, total)
        n_active, total = _apply(chosen, part_obj, part_from, part_to, part_off,
                                 num_states, touch_off, touch_rule, rates, state,
                                 mismatch, active_list, active_pos, n_active, total)
        t = t_next
        events += 1
        if events & _REFRESH_MASK == 0:
            total = _refresh_total(rates, active_list, n_active)
        while gi < n_grid and grid[gi] <= t:
            out[gi] = state
            gi += 1
    return out


@njit(cache=True, nogil=True)
def path_kernel(part_obj, part_from, part_to, part_off, rates,
                touch_off, touch_rule, num_states, state, t_start, t_end, rng,
                ev_times, ev_rules):
    """Record every event up to t_end into the given buffers; returns
    (events_written, final_time, done). Call again with fresh buffers to
    resume when done is False."""
    n_rules = rates.size
    mismatch = np.empty(n_rules, dtype=np.int64)
    active_list = np.empty(n_rules, dtype=np.int64)
    active_pos = np.empty(n_rules, dtype=np.int64)
    n_active, total = _init_books(part_obj, part_from, part_off, rates, state,
                                  mismatch, active_list, active_pos)
    cap = ev_times.size
    written = 0
    t = t_start
    while written < cap:
        if n_active == 0 or total <= 0.0:
            return written, t_end, True
        t_next = t - np.log(_uniform(rng)) / total
        if t_next > t_end:
            return written, t_end, True
        chosen = _pick(rng, rates, active_list, n_active, total)
        n_active, total = _apply(chosen, part_obj, part_from, part_to, part_off,
                                 num_states, touch_off, touch_rule, rates, state,
                                 mismatch, active_list, active_pos, n_active, total)
        t = t_next
        ev_times[written] = t
        ev_rules[written] = chosen
        written += 1
        if written & _REFRESH_MASK == 0:
            total = _refresh_total(rates, active_list, n_active)
    return written, t, False


@njit(cache=True, nogil=True)
def steady_kernel(part_obj, part_from, part_to, part_off, rates,
                  touch_off, touch_rule, num_states, state0,
                  warmup_events, batch_size, n_batches, rng):
    """Time-averaged occupancy after warmup, split into event-count batches.

    Returns (integrals (B, n, S), durations (B,), absorbed flag). If the
    chain absorbs, the remaining batches hold the absorbed indicator with
    unit duration (the limiting time average)."""
    n = state0.size
    n_rules = rates.size
    state = state0.copy()
    mismatch = np.empty(n_rules, dtype=np.int64)
    active_list = np.empty(n_rules, dtype=np.int64)
    active_pos = np.empty(n_rules, dtype=np.int64)
    n_active, total = _init_books(part_obj, part_from, part_off, rates, state,
                                  mismatch, active_list, active_pos)
    integ = np.zeros((n_batches, n, num_states))
    durations = np.zeros(n_batches)
    last_t = np.zeros(n)
    t = 0.0
    absorbed = False
    events = 0
    # warmup: evolve without accounting
    while events < warmup_events:
        if n_active == 0 or total <= 0.0:
            absorbed = True
            break
        t = t - np.log(_uniform(rng)) / total
        chosen = _pick(rng, rates, active_list, n_active, total)
        n_active, total = _apply(chosen, part_obj, part_from, part_to, part_off,
                                 num_states, touch_off, touch_rule, rates, state,
                                 mismatch, active_list, active_pos, n_active, total)
        events += 1
        if events & _REFRESH_MASK == 0:
            total = _refresh_total(rates, active_list, n_active)
    for b in range(n_batches):
        if absorbed:
            for k in range(n):
                integ[b, k, state[k]] = 1.0
            durations[b] = 1.0
            continue
        batch_start = t
        for k in range(n):
            last_t[k] = t
        done_in_batch = 0
        while done_in_batch < batch_size:
            if n_active == 0 or total <= 0.0:
                absorbed = True
                break
            t_next = t - np.log(_uniform(rng)) / total
            chosen = _pick(rng, rates, active_list, n_active, total)
            for pi in range(part_off[chosen], part_off[chosen + 1]):
                if part_from[pi] != part_to[pi]:
                    k = part_obj[pi]
                    integ[b, k, state[k]] += t_next - last_t[k]
                    last_t[k] = t_next
            n_active, total = _apply(chosen, part_obj, part_from, part_to, part_off,
                                     num_states, touch_off, touch_rule, rates, state,
                                     mismatch, active_list, active_pos, n_active, total)
            t = t_next
            done_in_batch += 1
            if done_in_batch & _REFRESH_MASK == 0:
                total = _refresh_total(rates, active_list, n_active)
        if absorbed:
            # replace the partial batch by the limiting (absorbed) average
            for k in range(n):
                for s in range(num_states):
                    integ[b, k, s] = 1.0 if s == state[k] else 0.0
            durations[b] = 1.0
            continue
        for k in range(n):
            integ[b, k, state[k]] += t - last_t[k]
        durations[b] = t - batch_start
    return integ, durations, absorbed
