"""Drift, derivatives and covariance production of a model, by enumeration
over its transition rules.

Every rule is a monomial: it fires at ``rate * prod_i x[src_i]`` (the src_i
are distinct flat indices because participants are distinct objects) and
shifts the state by a constant change vector Delta. Everything below follows
from the product rule applied to these monomials, so one code path covers any
interaction arity. Closed-form expressions for specific models exist only in
the test suite, as independent oracles.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import ModelSpec

_EIG_CUTOFF = 1e-12


@dataclass
class _RuleGroup:
    """Rules of one arity d: src (R, d) flat source indices, rates (R,)."""

    src: np.ndarray
    rates: np.ndarray

    @property
    def arity(self) -> int:
        return self.src.shape[1]

    @property
    def size(self) -> int:
        return self.src.shape[0]

    def intensities(self, x: np.ndarray) -> np.ndarray:
        return self.rates * x[self.src].prod(axis=1)


@dataclass
class CompiledDynamics:
    dim: int
    groups: list[_RuleGroup]          # one per arity present, in rule order within group
    delta: sp.csr_matrix              # dim x R_total, change vectors column-wise
    group_cols: list[np.ndarray]      # per group, column ids into delta

    def all_intensities(self, x: np.ndarray) -> np.ndarray:
        beta = np.empty(self.delta.shape[1])
        for g, cols in zip(self.groups, self.group_cols):
            beta[cols] = g.intensities(x)
        return beta


_compile_cache: "weakref.WeakKeyDictionary[ModelSpec, CompiledDynamics]" = weakref.WeakKeyDictionary()


def compile_dynamics(model: ModelSpec) -> CompiledDynamics:
    """Array form of the rule list; cached per model instance."""
    cached = _compile_cache.get(model)
    if cached is not None:
        return cached
    dim = model.dim
    by_arity: dict[int, list[int]] = {}
    for i, r in enumerate(model.rules):
        by_arity.setdefault(r.arity, []).append(i)

    rows, cols, vals = [], [], []
    groups, group_cols = [], []
    col = 0
    for d in sorted(by_arity):
        idxs = by_arity[d]
        src = np.empty((len(idxs), d), dtype=np.int64)
        rates = np.empty(len(idxs))
        gcols = np.arange(col, col + len(idxs))
        for j, i in enumerate(idxs):
            r = model.rules[i]
            rates[j] = r.rate
            for a, (k, s_from, s_to) in enumerate(r.participants):
                fi = model.flat_index(k, s_from)
                ti = model.flat_index(k, s_to)
                src[j, a] = fi
                if fi != ti:
                    rows.extend((ti, fi))
                    cols.extend((col + j, col + j))
                    vals.extend((1.0, -1.0))
        groups.append(_RuleGroup(src=src, rates=rates))
        group_cols.append(gcols)
        col += len(idxs)
    delta = sp.csr_matrix(
        (np.asarray(vals), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(dim, col),
    )
    compiled = CompiledDynamics(dim=dim, groups=groups, delta=delta, group_cols=group_cols)
    _compile_cache[model] = compiled
    return compiled


def _as_compiled(model) -> CompiledDynamics:
    if isinstance(model, CompiledDynamics):
        return model
    return compile_dynamics(model)


def _check_len(c: CompiledDynamics, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (c.dim,):
        raise ValueError(f"state vector length {x.shape} does not match model dimension {c.dim}")
    return x


def drift(model, x: np.ndarray) -> np.ndarray:
    """f(x) = sum over rules of rate * prod(source entries) * Delta."""
    c = _as_compiled(model)
    x = _check_len(c, x)
    return c.delta @ c.all_intensities(x)


def jacobian_sparse(model, x: np.ndarray) -> sp.csr_matrix:
    c = _as_compiled(model)
    x = _check_len(c, x)
    R = c.delta.shape[1]
    if R == 0:
        return sp.csr_matrix((c.dim, c.dim))
    rows, cols, vals = [], [], []
    for g, gcols in zip(c.groups, c.group_cols):
        d = g.arity
        for a in range(d):
            others = [b for b in range(d) if b != a]
            coef = g.rates * x[g.src[:, others]].prod(axis=1) if others else g.rates.copy()
            rows.append(gcols)
            cols.append(g.src[:, a])
            vals.append(coef)
    dbeta = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(R, c.dim),
    )
    return (c.delta @ dbeta).tocsr()


def drift_jacobian(model, x: np.ndarray) -> np.ndarray:
    """Dense Jacobian df_i/dx_j; exact polynomial derivative."""
    return jacobian_sparse(model, x).toarray()


class HessianTensor:
    """Second derivative of the drift, kept in rule-indexed sparse form.

    ``contract(w)`` returns ``sum_{u,l} H[:, u, l] * w[u, l]`` without ever
    materialising the (dim)^3 array; ``to_dense`` exists for small models.
    """

    def __init__(self, compiled: CompiledDynamics, x: np.ndarray):
        self._c = compiled
        self._x = x

    @property
    def dim(self) -> int:
        return self._c.dim

    def _pair_terms(self):
        """Yield (cols, idx_u, idx_l, coef) for ordered slot pairs of each group."""
        for g, gcols in zip(self._c.groups, self._c.group_cols):
            d = g.arity
            if d < 2:
                continue
            for a in range(d):
                for b in range(d):
                    if a == b:
                        continue
                    rest = [i for i in range(d) if i not in (a, b)]
                    coef = g.rates * self._x[g.src[:, rest]].prod(axis=1) if rest else g.rates
                    yield gcols, g.src[:, a], g.src[:, b], coef

    def contract(self, w: np.ndarray) -> np.ndarray:
        c = self._c
        acc = np.zeros(c.delta.shape[1])
        for cols, iu, il, coef in self._pair_terms():
            acc[cols] += coef * w[iu, il]
        return c.delta @ acc

    def to_dense(self) -> np.ndarray:
        dim = self._c.dim
        H = np.zeros((dim, dim, dim))
        delta = self._c.delta.toarray()
        for cols, iu, il, coef in self._pair_terms():
            for j, (u, l) in enumerate(zip(iu, il)):
                H[:, u, l] += coef[j] * delta[:, cols[j]]
        return H


def drift_hessian(model, x: np.ndarray) -> HessianTensor:
    c = _as_compiled(model)
    return HessianTensor(c, _check_len(c, x))


def q_matrix(model, x: np.ndarray) -> np.ndarray:
    """Covariance production Q(x) = sum over rules of intensity * Delta Delta^T."""
    c = _as_compiled(model)
    x = _check_len(c, x)
    beta = c.all_intensities(x)
    q = (c.delta.multiply(beta) @ c.delta.T).toarray()
    return 0.5 * (q + q.T)  # exact symmetry despite sparse rounding


_subspace_cache: "weakref.WeakKeyDictionary[ModelSpec, np.ndarray]" = weakref.WeakKeyDictionary()


def move_subspace(model: ModelSpec) -> np.ndarray:
    """Orthonormal basis (dim x d_V) of the span of all rule change vectors.

    The drift, Q, and the Hessian contraction all take values in this
    subspace, and every linear functional conserved by the dynamics vanishes
    on it (per-object totals always; additional invariants such as per-list
    occupancy in closed exchange models are picked up automatically). Fixed
    points and steady-state corrections are solved in these coordinates,
    which removes every structural zero eigenvalue of the Jacobian at once.
    """
    cached = _subspace_cache.get(model)
    if cached is not None:
        return cached
    c = compile_dynamics(model)
    gram = (c.delta @ c.delta.T).toarray()
    evals, evecs = np.linalg.eigh(gram)
    if evals.size == 0 or evals[-1] <= 0:
        basis = np.zeros((c.dim, 0))
    else:
        basis = evecs[:, evals > _EIG_CUTOFF * evals[-1]]
    basis = np.ascontiguousarray(basis)
    _subspace_cache[model] = basis
    return basis
