"""Stochastic simulation of the model's continuous-time chain and statistical
estimation of transient and steady-state occupancy.

Replicas run on split random streams (replica r uses stream r of the given
seed) and are reduced with integer counts, so estimates are bit-identical for
a given seed regardless of how many worker threads run them. Worker count is
capped by the HETMF_THREADS environment variable.
"""

from __future__ import annotations

import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import BudgetError
from .model import ModelSpec

_CI_FACTOR = 1.96  # normal-approximation 95% interval
DEFAULT_BATCHES = 20


@dataclass
class SimEstimate:
    """Per-cell estimates: arrays are (len(times), n, |S|) for transient
    estimates and (n, |S|) for steady-state ones. ``count`` is the number of
    replicas (transient) or batches (steady state)."""

    mean: np.ndarray
    variance: np.ndarray
    ci_halfwidth: np.ndarray
    count: int
    times: np.ndarray | None = None


@dataclass
class EventLog:
    """Sample path: initial assignment plus (time, rule index) per event.
    Rule indices refer to ``model.rules``."""

    model: ModelSpec
    initial: list[str]
    times: np.ndarray
    rule_indices: np.ndarray

    def __len__(self) -> int:
        return self.times.size

    def replay(self) -> Iterator[tuple[float, int, list[str], list[str]]]:
        """Yield (time, rule_index, pre, post) assignments per event."""
        current = list(self.initial)
        for t, ri in zip(self.times, self.rule_indices):
            pre = list(current)
            for k, _a, b in self.model.rules[ri].participants:
                current[k] = b
            yield float(t), int(ri), pre, list(current)

    @property
    def final(self) -> list[str]:
        current = list(self.initial)
        for ri in self.rule_indices:
            for k, _a, b in self.model.rules[ri].participants:
                current[k] = b
        return current


@dataclass
class _SimTables:
    part_obj: np.ndarray
    part_from: np.ndarray
    part_to: np.ndarray
    part_off: np.ndarray
    rates: np.ndarray
    touch_off: np.ndarray
    touch_rule: np.ndarray
    rule_ids: np.ndarray  # compiled rule -> index in model.rules


_tables_cache: "weakref.WeakKeyDictionary[ModelSpec, _SimTables]" = weakref.WeakKeyDictionary()


def _tables(model: ModelSpec) -> _SimTables:
    cached = _tables_cache.get(model)
    if cached is not None:
        return cached
    S = model.num_states
    live = [(i, r) for i, r in enumerate(model.rules) if r.rate > 0.0]
    part_obj, part_from, part_to = [], [], []
    part_off = [0]
    rates = []
    rule_ids = []
    touch: list[list[int]] = [[] for _ in range(model.n * S)]
    for ci, (i, r) in enumerate(live):
        rates.append(r.rate)
        rule_ids.append(i)
        for k, a, b in r.participants:
            ai, bi = model.state_index(a), model.state_index(b)
            part_obj.append(k)
            part_from.append(ai)
            part_to.append(bi)
            touch[k * S + ai].append(ci)
        part_off.append(len(part_obj))
    touch_off = np.zeros(model.n * S + 1, dtype=np.int64)
    for p, lst in enumerate(touch):
        touch_off[p + 1] = touch_off[p] + len(lst)
    touch_rule = np.fromiter((r for lst in touch for r in lst), dtype=np.int64,
                             count=int(touch_off[-1]))
    tables = _SimTables(
        part_obj=np.asarray(part_obj, dtype=np.int64),
        part_from=np.asarray(part_from, dtype=np.int64),
        part_to=np.asarray(part_to, dtype=np.int64),
        part_off=np.asarray(part_off, dtype=np.int64),
        rates=np.asarray(rates, dtype=np.float64),
        touch_off=touch_off,
        touch_rule=touch_rule,
        rule_ids=np.asarray(rule_ids, dtype=np.int64),
    )
    _tables_cache[model] = tables
    return tables


def _state_codes(model: ModelSpec, s0: Sequence[str]) -> np.ndarray:
    if len(s0) != model.n:
        raise ValueError(f"assignment length {len(s0)} != n={model.n}")
    return np.array([model.state_index(str(lbl)) for lbl in s0], dtype=np.int64)


def _workers() -> int:
    env = os.environ.get("HETMF_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, limit)


def simulate_path(model: ModelSpec, s0: Sequence[str], t_end: float, seed: int, *,
                  max_events: int = 5_000_000) -> EventLog:
    """One statistically exact sample path; deterministic in (model, s0,
    t_end, seed). Raises :class:`BudgetError` past ``max_events``."""
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    tb = _tables(model)
    state = _state_codes(model, s0)
    rng = _kernels.stream_state(seed, 0)
    chunk = 65_536
    times, rules = [], []
    t = 0.0
    total = 0
    while True:
        ev_t = np.empty(chunk)
        ev_r = np.empty(chunk, dtype=np.int64)
        written, t, done = _kernels.path_kernel(
            tb.part_obj, tb.part_from, tb.part_to, tb.part_off, tb.rates,
            tb.touch_off, tb.touch_rule, model.num_states, state, t, float(t_end),
            rng, ev_t, ev_r)
        times.append(ev_t[:written])
        rules.append(ev_r[:written])
        total += written
        if done:
            break
        if total >= max_events:
            raise BudgetError(f"path exceeded max_events={max_events} before t_end")
    times = np.concatenate(times) if times else np.empty(0)
    rules = np.concatenate(rules).astype(np.int64) if rules else np.empty(0, dtype=np.int64)
    return EventLog(model=model, initial=[str(s) for s in s0], times=times,
                    rule_indices=tb.rule_ids[rules])


def transient_mean(model: ModelSpec, s0: Sequence[str], grid, replicas: int,
                   seed: int) -> SimEstimate:
    """Sample mean, variance and 95% interval of every indicator X_(k,s) at
    each grid time, over independent replicas."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty, nonnegative, strictly increasing")
    if replicas < 2:
        raise ValueError("need at least 2 replicas for a variance estimate")
    tb = _tables(model)
    state0 = _state_codes(model, s0)
    n, S, T = model.n, model.num_states, grid.size

    def run_block(block: range) -> np.ndarray:
        counts = np.zeros((T, n, S), dtype=np.int64)
        t_idx = np.arange(T)[:, None]
        k_idx = np.arange(n)[None, :]
        for r in block:
            res = _kernels.transient_kernel(
                tb.part_obj, tb.part_from, tb.part_to, tb.part_off, tb.rates,
                tb.touch_off, tb.touch_rule, model.num_states, state0, grid,
                _kernels.stream_state(seed, r))
            np.add.at(counts, (t_idx, k_idx, res), 1)
        return counts

    workers = min(_workers(), replicas)
    if workers == 1:
        counts = run_block(range(replicas))
    else:
        bounds = np.linspace(0, replicas, workers + 1).astype(int)
        blocks = [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            counts = sum(pool.map(run_block, blocks))
    mean = counts / replicas
    variance = (mean - mean ** 2) * (replicas / (replicas - 1))
    ci = _CI_FACTOR * np.sqrt(variance / replicas)
    return SimEstimate(mean=mean, variance=variance, ci_halfwidth=ci,
                       count=replicas, times=grid)


def steady_state_mean(model: ModelSpec, s0: Sequence[str], warmup_events: int,
                      events: int, seed: int, *,
                      n_batches: int = DEFAULT_BATCHES) -> SimEstimate:
    """Time-averaged occupancy over ``events`` post-warmup events of a single
    long run; the variance comes from batch means (events are serially
    correlated, so per-event variance would be meaningless).

    ``events`` is rounded down to a multiple of ``n_batches``.
    """
    if events < n_batches:
        raise ValueError(f"events={events} leaves an empty averaging window "
                         f"(need >= n_batches={n_batches})")
    if warmup_events < 0:
        raise ValueError("warmup_events must be >= 0")
    tb = _tables(model)
    state0 = _state_codes(model, s0)
    batch_size = events // n_batches
    integ, durations, _absorbed = _kernels.steady_kernel(
        tb.part_obj, tb.part_from, tb.part_to, tb.part_off, tb.rates,
        tb.touch_off, tb.touch_rule, model.num_states, state0,
        int(warmup_events), int(batch_size), int(n_batches),
        _kernels.stream_state(seed, 0))
    mean = integ.sum(axis=0) / durations.sum()
    batch_means = integ / durations[:, None, None]
    variance = batch_means.var(axis=0, ddof=1)
    ci = _CI_FACTOR * np.sqrt(variance / n_batches)
    return SimEstimate(mean=mean, variance=variance, ci_halfwidth=ci,
                       count=n_batches, times=None)
