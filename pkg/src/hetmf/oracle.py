"""Exact transient and stationary analysis of the full chain on small
instances (|S|^n global states); the ground truth for accuracy tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import ReducibleChainError, StateSpaceCapError
from .model import ModelSpec

DEFAULT_STATE_CAP = 200_000

_POISSON_TAIL = 1e-12
_MAX_RATE_STEP = 500.0  # split uniformization steps so exp(-Lambda dt) stays normal


@dataclass
class FullChain:
    """Enumerated global chain: ``assignments[i]`` is the per-object state row
    of global state i, ``generator`` the sparse rate matrix (rows sum to 0)."""

    model: ModelSpec
    assignments: np.ndarray          # (N, n) int16 state indices
    generator: sp.csr_matrix         # (N, N)
    radix: np.ndarray                # index = assignments @ radix

    @property
    def num_states(self) -> int:
        return self.assignments.shape[0]

    def state_index(self, assignment: Sequence[str]) -> int:
        if len(assignment) != self.model.n:
            raise ValueError(f"assignment length {len(assignment)} != n={self.model.n}")
        codes = np.array([self.model.state_index(str(lbl)) for lbl in assignment])
        return int(codes @ self.radix)


def build_full_chain(model: ModelSpec, cap: int = DEFAULT_STATE_CAP) -> FullChain:
    """Enumerate all |S|^n assignments and assemble the generator, one
    transition per (global state, applicable rule)."""
    n, S = model.n, model.num_states
    total = S ** n
    if total > cap:
        raise StateSpaceCapError(f"|S|^n = {total} exceeds cap {cap}")
    radix = S ** np.arange(n - 1, -1, -1, dtype=np.int64)
    grids = np.indices((S,) * n).reshape(n, total).T
    assignments = grids.astype(np.int16)

    rows, cols, vals = [], [], []
    diag = np.zeros(total)
    for r in model.rules:
        if r.rate == 0.0:
            continue
        mask = np.ones(total, dtype=bool)
        offset = 0
        changes = False
        for k, a, b in r.participants:
            ai, bi = model.state_index(a), model.state_index(b)
            mask &= assignments[:, k] == ai
            offset += (bi - ai) * radix[k]
            changes = changes or ai != bi
        if not changes:
            continue
        src = np.nonzero(mask)[0]
        rows.append(src)
        cols.append(src + offset)
        vals.append(np.full(src.size, r.rate))
        np.add.at(diag, src, -r.rate)
    if rows:
        gen = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(total, total))
    else:
        gen = sp.csr_matrix((total, total))
    gen = gen + sp.diags(diag)
    return FullChain(model=model, assignments=assignments, generator=gen.tocsr(), radix=radix)


def _reachable(chain: FullChain, start: int) -> np.ndarray:
    order = csgraph.breadth_first_order(chain.generator, start, directed=True,
                                        return_predecessors=False)
    return np.sort(order)


def _marginals(chain: FullChain, idx: np.ndarray, p: np.ndarray) -> np.ndarray:
    n, S = chain.model.n, chain.model.num_states
    out = np.zeros((n, S))
    sub = chain.assignments[idx]
    for k in range(n):
        np.add.at(out[k], sub[:, k].astype(np.int64), p)
    return out


def transient_marginals(chain: FullChain, s0: Sequence[str], grid) -> np.ndarray:
    """P[object k in state s at t] for every grid time, by uniformization of
    the chain restricted to the states reachable from ``s0``.

    Returns an array of shape (len(grid), n, |S|). Poisson truncation keeps
    the per-step error below 1e-12.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty, nonnegative, strictly increasing")
    start = chain.state_index(s0)
    idx = _reachable(chain, start)
    gen = chain.generator[np.ix_(idx, idx)].tocsr()
    pos = int(np.searchsorted(idx, start))
    rate = -gen.diagonal().min()
    p = np.zeros(idx.size)
    p[pos] = 1.0
    out = np.empty((grid.size, chain.model.n, chain.model.num_states))
    t_prev = 0.0
    for gi, t in enumerate(grid):
        dt = t - t_prev
        while dt > 0:
            step = min(dt, _MAX_RATE_STEP / rate) if rate > 0 else dt
            p = _uniformization_step(gen, rate, p, step)
            dt -= step
        t_prev = t
        out[gi] = _marginals(chain, idx, p)
    return out


def _uniformization_step(gen: sp.csr_matrix, rate: float, p: np.ndarray, dt: float) -> np.ndarray:
    if rate <= 0 or dt <= 0:
        return p
    lam = 1.02 * rate
    a = lam * dt
    transition = sp.eye(gen.shape[0], format="csr") + gen.T / lam
    weight = np.exp(-a)
    cum = weight
    acc = weight * p
    term = p
    j = 0
    while 1.0 - cum > _POISSON_TAIL:
        j += 1
        term = transition @ term
        weight *= a / j
        cum += weight
        acc += weight * term
    return acc / acc.sum()  # renormalise away the truncated tail


def _recurrent_classes(gen: sp.csr_matrix) -> list[np.ndarray]:
    ncomp, labels = csgraph.connected_components(gen, directed=True, connection="strong")
    coo = gen.tocoo()
    leaves = np.zeros(ncomp, dtype=bool)
    cross = labels[coo.row] != labels[coo.col]
    leaves[np.unique(labels[coo.row[cross & (coo.data > 0)]])] = True
    return [np.nonzero(labels == c)[0] for c in range(ncomp) if not leaves[c]]


def stationary_marginals(chain: FullChain, s0: Sequence[str] | None = None) -> np.ndarray:
    """Per-object stationary marginals, shape (n, |S|).

    With ``s0`` the analysis is restricted to the class reachable from that
    assignment (closed exchange models are reducible on the full cube).
    Raises :class:`ReducibleChainError` when several recurrent classes are
    present, naming one example state per class.
    """
    if s0 is not None:
        idx = _reachable(chain, chain.state_index(s0))
    else:
        idx = np.arange(chain.num_states)
    gen = chain.generator[np.ix_(idx, idx)].tocsr()
    classes = _recurrent_classes(gen)
    if len(classes) != 1:
        examples = []
        for cls in classes[:4]:
            row = chain.assignments[idx[cls[0]]]
            examples.append("(" + ",".join(chain.model.states[s] for s in row) + ")")
        raise ReducibleChainError(
            f"{len(classes)} recurrent classes (e.g. {', '.join(examples)}); "
            "stationary marginals require a unique recurrent class",
            classes=[idx[cls] for cls in classes])
    cls = classes[0]
    sub = gen[np.ix_(cls, cls)].tocsc()
    # balance equations pi^T G = 0 with one equation replaced by normalisation
    m = sub.T.tolil()
    m[-1, :] = 1.0
    rhs = np.zeros(cls.size)
    rhs[-1] = 1.0
    pi = spla.spsolve(m.tocsc(), rhs)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    return _marginals(chain, idx[cls], pi)
