"""Two-choice load balancing with heterogeneous server speeds.

Each arriving job samples an ordered pair of distinct servers and joins the
shorter queue (ties split evenly; a tie between two full buffers discards the
job). Server k serves at rate mu_k; states are queue lengths "0".."b".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelError
from .model import ModelSpec, TransitionRule

DEFAULT_BUFFER = 12


@dataclass(frozen=True)
class LBConfig:
    mus: tuple[float, ...]
    arrival_rate: float
    buffer: int = DEFAULT_BUFFER

    def __post_init__(self):
        if any((not math.isfinite(m)) or m <= 0 for m in self.mus):
            raise ModelError("service rates must be finite and positive")
        if not (math.isfinite(self.arrival_rate) and self.arrival_rate > 0):
            raise ModelError("arrival rate must be finite and positive")
        if int(self.buffer) != self.buffer or self.buffer < 1:
            raise ModelError("buffer must be an integer >= 1")

    @property
    def n(self) -> int:
        return len(self.mus)


def lb_config(mus, arrival_rate, buffer=DEFAULT_BUFFER) -> LBConfig:
    return LBConfig(tuple(float(m) for m in mus), float(arrival_rate), int(buffer))


def paper_mix_rates(n: int, seed: int, *, fast: float = 2.0, slow: float = 0.5,
                    lo: float = 1.0, hi: float = 1.4) -> tuple[float, ...]:
    """Speed profile used throughout the experiments: one fifth fast servers,
    one fifth slow, the rest drawn uniformly from [lo, hi]. The draw is
    seeded; the seed is a recorded experiment parameter."""
    fifth = n // 5
    rng = np.random.default_rng(seed)
    rest = rng.uniform(lo, hi, n - 2 * fifth)
    return tuple(np.concatenate([np.full(fifth, fast), np.full(fifth, slow), rest]))


def homogeneous_baseline(cfg: LBConfig) -> LBConfig:
    """Replace every service rate by the common mean; total capacity kept."""
    mu_bar = sum(cfg.mus) / cfg.n
    return replace(cfg, mus=(mu_bar,) * cfg.n)


def build_two_choice(cfg: LBConfig) -> ModelSpec:
    """Transitions: unilateral departures (k, s -> s-1) at rate mu_k, and for
    each ordered server pair (k, k1) an arrival moving k from s to s+1 while
    k1 stays at s1, at rate (2 lambda 1{s1 >= s+1} + lambda 1{s1 = s}) / n.
    Zero-rate combinations (k1 strictly shorter) are omitted; a tie of two
    full buffers generates no rule since s ranges below the buffer."""
    n, b = cfg.n, cfg.buffer
    states = tuple(str(s) for s in range(b + 1))
    lam = cfg.arrival_rate
    rules = []
    for k in range(n):
        for s in range(1, b + 1):
            rules.append(TransitionRule(((k, states[s], states[s - 1]),), cfg.mus[k]))
    for k in range(n):
        for k1 in range(n):
            if k1 == k:
                continue
            for s in range(b):
                rules.append(TransitionRule(
                    ((k, states[s], states[s + 1]), (k1, states[s], states[s])),
                    lam / n))
                for s1 in range(s + 1, b + 1):
                    rules.append(TransitionRule(
                        ((k, states[s], states[s + 1]), (k1, states[s1], states[s1])),
                        2.0 * lam / n))
    # tight uniform bound on rate * d * n^(d-1) over the rules above
    hint = max(max(cfg.mus), 4.0 * lam)
    return ModelSpec(n=n, states=states, rules=tuple(rules), rate_bound_hint=hint)


def _queue_matrix(model: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"state vector length {x.shape} != ({model.dim},)")
    return x.reshape(model.n, model.num_states)


def average_queue_length(model: ModelSpec, x) -> float:
    """(1/n) sum_k sum_s s * x_(k, s), with s read from the state labels."""
    lengths = np.array([int(lbl) for lbl in model.states], dtype=float)
    return float((_queue_matrix(model, x) @ lengths).mean())


def tail_distribution(model: ModelSpec, x) -> np.ndarray:
    """(1/n) sum_k P[queue of k >= s] for s = 0..b; tail[0] = total mass / n."""
    X = _queue_matrix(model, x)
    return X[:, ::-1].cumsum(axis=1)[:, ::-1].mean(axis=0)
