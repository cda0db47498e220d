"""Independent oracles for the test suite: brute-force enumerations, hand
transcriptions of closed-form drifts/covariances, and finite differences.

Nothing here reuses the package's rule-enumeration machinery; that is the
point. Where a closed form is only valid on indicator states or on the
admissible occupancy manifold, the docstring says so.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from hetmf import ModelSpec, TransitionRule, drift, new_model


# ---------------------------------------------------------------------------
# cache model: brute-force product form


def admissible_assignments(n: int, m):
    """All per-object list assignments with exactly m_s objects in list s."""
    ell = len(m)
    slots = []
    for s, ms in enumerate(m, start=1):
        slots.extend([s] * ms)
    outside = n - sum(m)
    for chosen in permutations(range(n), sum(m)):
        a = np.zeros(n, dtype=int)
        for obj, lst in zip(chosen, slots):
            a[obj] = lst
        yield a
    # note: permutations of objects across equal-size slots of the SAME list
    # produce duplicate assignments; we deduplicate in the caller via weights
    # being recomputed per unique assignment.


def brute_force_cache_steady_state(lambdas, m) -> np.ndarray:
    """Stationary marginals by direct summation of the product form over all
    distinct admissible assignments."""
    lam = np.asarray(lambdas, dtype=float)
    n, ell = lam.size, len(m)
    seen = {}
    for a in admissible_assignments(n, m):
        seen[tuple(a)] = np.prod(lam ** a)
    total = sum(seen.values())
    pi = np.zeros((n, ell + 1))
    for a, w in seen.items():
        for k, s in enumerate(a):
            pi[k, s] += w / total
    return pi


def cache_drift_closed_form(lambdas, m, x) -> np.ndarray:
    """Literal per-list drift of the cache model, with aggregate popularities
    P_s = sum_k lambda_k x_(k,s) running over ALL objects and the request
    gain simplified to lambda_k x_(k,s-1).

    This transcription agrees with the pairwise-exchange dynamics only at
    admissible indicator states (full lists, one state per object).
    """
    lam = np.asarray(lambdas, dtype=float)
    n, ell = lam.size, len(m)
    X = np.asarray(x, dtype=float).reshape(n, ell + 1)
    P = lam @ X
    f = np.zeros((n, ell + 1))
    for s in range(ell + 1):
        if s >= 1:
            f[:, s] += lam * X[:, s - 1] - (P[s - 1] / m[s - 1]) * X[:, s]
        if s <= ell - 1:
            f[:, s] += (P[s] / m[s]) * X[:, s + 1] - lam * X[:, s]
    return f.ravel()


def cache_q_closed_form(lambdas, m, x) -> np.ndarray:
    """Covariance production of the cache model from its per-entry closed
    form (hand-derived; valid at any x)."""
    lam = np.asarray(lambdas, dtype=float)
    n, ell = lam.size, len(m)
    S = ell + 1
    X = np.asarray(x, dtype=float).reshape(n, S)
    Q = np.zeros((n * S, n * S))

    def a_rate(k, kp, s):
        """Channel: k requested in list s swaps with kp in list s+1."""
        return lam[k] / m[s] * X[k, s] * X[kp, s + 1]

    for k in range(n):
        # same-object block: channels crossing boundary s involving k
        for s in range(ell):
            rate = sum(a_rate(k, i, s) + a_rate(i, k, s) for i in range(n) if i != k)
            for sig, sig2, sign in ((s, s, 1.0), (s + 1, s + 1, 1.0),
                                    (s, s + 1, -1.0), (s + 1, s, -1.0)):
                Q[k * S + sig, k * S + sig2] += sign * rate
        for kp in range(n):
            if kp == k:
                continue
            for s in range(ell):
                rate = a_rate(k, kp, s) + a_rate(kp, k, s)
                # k and kp move through {s, s+1} in opposite directions
                for sig, u in ((s + 1, 1.0), (s, -1.0)):
                    for sig2, v in ((s, 1.0), (s + 1, -1.0)):
                        Q[k * S + sig, kp * S + sig2] += rate * u * v
    return Q


# ---------------------------------------------------------------------------
# two-choice model: tail-fraction drift


def lb_drift_closed_form(mus, lam, b, x) -> np.ndarray:
    """Drift of the two-choice model written through per-server tail
    fractions, with the sampled pair restricted to distinct servers (the
    builder generates no self-pair channel)."""
    mus = np.asarray(mus, dtype=float)
    n = mus.size
    S = b + 1
    X = np.asarray(x, dtype=float).reshape(n, S)
    tails = X[:, ::-1].cumsum(axis=1)[:, ::-1]           # tails[k, s] = sum_{s'>=s} X[k,s']
    f = np.zeros((n, S))
    for k in range(n):
        g = (tails.sum(axis=0) - tails[k]) / n           # exclude server k itself
        def h(s):
            return g[s] + (g[s + 1] if s + 1 <= b else 0.0)
        for s in range(S):
            if s < b:
                f[k, s] += mus[k] * X[k, s + 1] - lam * X[k, s] * h(s)
            if s >= 1:
                f[k, s] += lam * X[k, s - 1] * h(s - 1) - mus[k] * X[k, s]
    return f.ravel()


# ---------------------------------------------------------------------------
# finite differences


def fd_jacobian(model: ModelSpec, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    dim = x.size
    J = np.empty((dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        J[:, j] = (drift(model, x + e) - drift(model, x - e)) / (2 * h)
    return J


def fd_hessian(model: ModelSpec, x, h: float = 5e-4) -> np.ndarray:
    """Nested central differences. Rule intensities are multilinear, so the
    truncation error vanishes identically and the step only has to keep the
    eps/h^2 roundoff noise below the comparison tolerance (1e-5 would not)."""
    x = np.asarray(x, dtype=float)
    dim = x.size
    H = np.empty((dim, dim, dim))
    for u in range(dim):
        e = np.zeros(dim)
        e[u] = h
        H[:, :, u] = (fd_jacobian(model, x + e, h) - fd_jacobian(model, x - e, h)) / (2 * h)
    return H


# ---------------------------------------------------------------------------
# random models for property tests


def random_model(rng: np.random.Generator, n: int = None, num_states: int = None,
                 unilateral: int = 4, pairwise: int = 4) -> ModelSpec:
    """Seeded random model with a mix of unilateral and pairwise rules."""
    n = int(rng.integers(2, 5)) if n is None else n
    num_states = int(rng.integers(2, 4)) if num_states is None else num_states
    states = tuple(chr(ord("a") + i) for i in range(num_states))
    rules = []
    for _ in range(unilateral):
        k = int(rng.integers(n))
        a, b = rng.choice(num_states, size=2, replace=False)
        rules.append(TransitionRule(((k, states[a], states[b]),), float(rng.uniform(0.1, 2.0))))
    for _ in range(pairwise):
        if n < 2:
            break
        k1, k2 = rng.choice(n, size=2, replace=False)
        a1, b1 = rng.choice(num_states, size=2, replace=False)
        a2 = int(rng.integers(num_states))
        b2 = int(rng.integers(num_states))
        rules.append(TransitionRule(
            ((int(k1), states[a1], states[b1]), (int(k2), states[a2], states[b2])),
            float(rng.uniform(0.1, 2.0) / n)))
    base = new_model(n, states)
    return ModelSpec(n=base.n, states=base.states, rules=tuple(rules))


def random_state(rng: np.random.Generator, n: int, num_states: int) -> np.ndarray:
    """Random continuous state vector with per-object simplex rows."""
    raw = rng.random((n, num_states)) + 1e-3
    return (raw / raw.sum(axis=1, keepdims=True)).ravel()


def random_assignment(rng: np.random.Generator, model: ModelSpec) -> list[str]:
    return [model.states[int(rng.integers(model.num_states))] for _ in range(model.n)]
