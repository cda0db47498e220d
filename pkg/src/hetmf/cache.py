"""List-based cache under the randomized promotion policy: object k is
requested at rate lambda_k; a request promotes it to the next list and demotes
a uniformly chosen object of that list. States are "0" (outside the cache)
then "1".."l" for the lists; list s holds exactly m_s objects at all times.

The stationary law has a product form over admissible placements, which a
capacity-vector recurrence turns into exact per-object marginals; that is the
ground truth the approximation errors are measured against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, ModelError
from .model import ModelSpec, TransitionRule

DEFAULT_DP_BUDGET = 200_000_000


@dataclass(frozen=True)
class CacheConfig:
    lambdas: tuple[float, ...]
    list_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.list_sizes) < 1:
            raise ModelError("need at least one list")
        if any((not math.isfinite(l)) or l <= 0 for l in self.lambdas):
            raise ModelError("request rates must be finite and positive")
        if any(int(m) != m or m <= 0 for m in self.list_sizes):
            raise ModelError("list sizes must be positive integers")
        if sum(self.list_sizes) > len(self.lambdas):
            raise ModelError(
                f"cache capacity {sum(self.list_sizes)} exceeds object count {len(self.lambdas)}")

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def num_lists(self) -> int:
        return len(self.list_sizes)


def cache_config(lambdas, list_sizes) -> CacheConfig:
    return CacheConfig(tuple(float(l) for l in lambdas), tuple(int(m) for m in list_sizes))


def zipf_popularities(n: int, alpha: float, scale=1.0) -> np.ndarray:
    """Request rates lambda_k = scale / k**alpha, k = 1..n.

    ``scale="normalize"`` picks the constant so the rates sum to 1. Steady
    states of the cache model are invariant under a common rescaling of the
    rates (it only rescales time), so the choice is cosmetic there.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    base = np.arange(1, n + 1, dtype=float) ** -alpha
    if isinstance(scale, str):
        if scale != "normalize":
            raise ValueError(f"unknown scale mode {scale!r}")
        return base / base.sum()
    if not scale > 0:
        raise ValueError("scale must be positive")
    return float(scale) * base


def build_random_m(cfg: CacheConfig) -> ModelSpec:
    """Pairwise exchange model: for every ordered object pair (k, k1) and
    list boundary s, object k in s swaps with object k1 in s+1 at rate
    lambda_k / m_{s+1}. No unilateral transitions."""
    n, ell = cfg.n, cfg.num_lists
    states = tuple(str(s) for s in range(ell + 1))
    rules = []
    for s in range(ell):
        up, down = states[s], states[s + 1]
        m_next = cfg.list_sizes[s]
        for k in range(n):
            rate = cfg.lambdas[k] / m_next
            for k1 in range(n):
                if k1 != k:
                    rules.append(TransitionRule(((k, up, down), (k1, down, up)), rate))
    hint = max(r.rate * 2 * n for r in rules)
    return ModelSpec(n=n, states=states, rules=tuple(rules), rate_bound_hint=hint)


def default_assignment(cfg: CacheConfig) -> list[str]:
    """Admissible start: the least popular objects fill the lists in order,
    everything else outside."""
    labels = ["0"] * cfg.n
    pos = cfg.n - sum(cfg.list_sizes)
    for s, m in enumerate(cfg.list_sizes, start=1):
        for _ in range(m):
            labels[pos] = str(s)
            pos += 1
    return labels


def _capacity_dp(shape, pows, objects) -> np.ndarray:
    """C[m'] = sum over placements of ``objects`` filling capacity m' exactly
    of prod_k lambda_k^(list of k). Base case: empty capacity -> 1."""
    ell = len(shape)
    C = np.zeros(shape)
    C[(0,) * ell] = 1.0
    for k in objects:
        new = C.copy()
        for s in range(ell):
            lo = [slice(None)] * ell
            hi = [slice(None)] * ell
            hi[s] = slice(1, None)
            lo[s] = slice(0, shape[s] - 1)
            new[tuple(hi)] += pows[k][s] * C[tuple(lo)]
        C = new
    return C


def exact_steady_state(cfg: CacheConfig, budget: int = DEFAULT_DP_BUDGET) -> np.ndarray:
    """Exact stationary marginals pi[k, s], s = 0..l, via the product form.

    For each object the others are folded into a capacity-vector recurrence
    (the object order is irrelevant, so one reordering per object suffices);
    cost is O(n^2 * prod(m_s + 1) * l).
    """
    n, ell = cfg.n, cfg.num_lists
    shape = tuple(m + 1 for m in cfg.list_sizes)
    cells = int(np.prod(shape))
    if n * n * cells * ell > budget:
        raise BudgetError(
            f"recurrence cost ~{n * n * cells * ell:.2e} exceeds budget {budget:.2e}")
    pows = [np.array([lam ** s for s in range(1, ell + 1)]) for lam in cfg.lambdas]
    full = tuple(cfg.list_sizes)
    norm = _capacity_dp(shape, pows, range(n))[full]
    pi = np.zeros((n, ell + 1))
    for k in range(n):
        C = _capacity_dp(shape, pows, [j for j in range(n) if j != k])
        pi[k, 0] = C[full] / norm
        for s in range(1, ell + 1):
            reduced = list(full)
            reduced[s - 1] -= 1
            pi[k, s] = pows[k][s - 1] * C[tuple(reduced)] / norm
    return pi


def cache_error(pi_est: np.ndarray, pi_exact: np.ndarray, *,
                include_outside: bool = False) -> float:
    """Average per-object absolute error (1/n) sum_k sum_s |est - exact|.

    By default the sum runs over the in-cache states s >= 1 only, the
    convention behind the published error tables; ``include_outside=True``
    adds the outside state as well.
    """
    est = np.asarray(pi_est, dtype=float)
    exact = np.asarray(pi_exact, dtype=float)
    if est.shape != exact.shape or est.ndim != 2:
        raise ValueError(f"shape mismatch: {est.shape} vs {exact.shape}")
    start = 0 if include_outside else 1
    return float(np.abs(est[:, start:] - exact[:, start:]).sum() / est.shape[0])


def list_popularity(lambdas, x) -> np.ndarray:
    """Aggregate popularity per state, sum_k lambda_k x_(k, s) for every s
    (index 0 is the mass outside the cache)."""
    lam = np.asarray(lambdas, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.size % lam.size:
            raise ValueError(f"state vector length {x.size} not a multiple of n={lam.size}")
        x = x.reshape(lam.size, -1)
    if x.shape[0] != lam.size:
        raise ValueError(f"shape mismatch: {x.shape} vs n={lam.size}")
    return lam @ x
