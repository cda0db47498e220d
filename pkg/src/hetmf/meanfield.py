"""Mean-field ODE: integrate dx/dt = f(x) and locate its fixed point."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import dynamics
from .errors import ConvergenceError, IntegrationError, MultipleEquilibriaWarning
from .model import ModelSpec, check_state_vector

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10

_BOX_TOL = 1e-9
_MASS_TOL = 1e-8


@dataclass
class Trajectory:
    """Discrete-grid view of a mean-field solution. ``states[i]`` is the state
    vector at ``times[i]``, clamped to [0, 1] entrywise."""

    times: np.ndarray
    states: np.ndarray
    nfev: int = 0

    def at(self, i: int) -> np.ndarray:
        return self.states[i]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _resolve_grid(t_end, grid) -> np.ndarray:
    if grid is None:
        if t_end is None or t_end <= 0:
            raise ValueError("need t_end > 0 or an explicit grid")
        return np.linspace(0.0, float(t_end), 101)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a 1-d array of times")
    if grid[0] != 0.0:
        raise ValueError("grid must start at 0")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be strictly increasing")
    if t_end is not None and abs(float(t_end) - grid[-1]) > 1e-12:
        raise ValueError("t_end conflicts with grid[-1]; give one or the other")
    return grid


def _postprocess(model: ModelSpec, ys: np.ndarray, where: str) -> np.ndarray:
    if ys.min() < -_BOX_TOL or ys.max() > 1 + _BOX_TOL:
        raise IntegrationError(
            f"{where}: solution left [0,1] by {max(-ys.min(), ys.max() - 1):.2e}")
    mass = ys.reshape(ys.shape[0], model.n, model.num_states).sum(axis=2)
    worst = np.abs(mass - 1.0).max()
    if worst > _MASS_TOL:
        raise IntegrationError(f"{where}: per-object mass drifted by {worst:.2e}")
    return np.clip(ys, 0.0, 1.0)


def integrate(model: ModelSpec, x0: np.ndarray, t_end: float | None = None, *,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              grid=None) -> Trajectory:
    """Solve the mean-field ODE from ``x0`` and report it on a time grid.

    Uses an adaptive embedded Runge-Kutta 5(4) pair with dense output; the
    dynamics are polynomial and non-stiff on [0,1]^dim.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    grid = _resolve_grid(t_end, grid)
    x0 = check_state_vector(model, x0)
    compiled = dynamics.compile_dynamics(model)
    if grid[-1] == 0.0:
        return Trajectory(times=grid, states=x0[None, :].copy(), nfev=0)
    sol = solve_ivp(lambda _t, y: dynamics.drift(compiled, y), (0.0, grid[-1]), x0,
                    method="RK45", t_eval=grid, rtol=rtol, atol=atol)
    if not sol.success:
        t_fail = sol.t[-1] if sol.t.size else 0.0
        raise IntegrationError(f"solver failed near t={t_fail:g}: {sol.message}")
    states = _postprocess(model, sol.y.T.copy(), "integrate")
    return Trajectory(times=grid, states=states, nfev=sol.nfev)


def _uniform_state(model: ModelSpec) -> np.ndarray:
    return np.full(model.dim, 1.0 / model.num_states)


def _newton_on_subspace(compiled, basis, x_ref, y, tol, max_iter):
    """Damped Newton for f(x_ref + U y) = 0 in subspace coordinates."""
    for it in range(max_iter):
        x = x_ref + basis @ y
        f = dynamics.drift(compiled, x)
        if np.abs(f).max() <= tol:
            return y, np.abs(f).max(), True
        jac_red = basis.T @ (dynamics.jacobian_sparse(compiled, x) @ basis)
        rhs = basis.T @ f
        try:
            step = np.linalg.solve(jac_red, -rhs)
        except np.linalg.LinAlgError:
            return y, np.abs(f).max(), False
        base = np.linalg.norm(rhs)
        alpha = 1.0
        for _ in range(50):
            trial = basis.T @ dynamics.drift(compiled, x_ref + basis @ (y + alpha * step))
            if np.linalg.norm(trial) < base:
                break
            alpha *= 0.5
        else:
            return y, np.abs(f).max(), False
        y = y + alpha * step
    x = x_ref + basis @ y
    return y, np.abs(dynamics.drift(compiled, x)).max(), False


def _solve_from(model, compiled, basis, x_start, tol, max_iter, max_restarts):
    """Newton with long-run integration fallback; returns x* or raises.

    Newton iterates move along ``basis`` only, so they respect the invariant
    manifold of ``x_start``; after a failed round we restart from a point
    further along the flow (which stays on the manifold by construction).
    """
    x_flow = x_start.copy()
    for round_ in range(max_restarts + 1):
        y, resid, converged = _newton_on_subspace(
            compiled, basis, x_flow, np.zeros(basis.shape[1]), tol, max_iter)
        if converged:
            x = x_flow + basis @ y
            if x.min() >= -_BOX_TOL and x.max() <= 1 + _BOX_TOL:
                return x
        horizon = 20.0 * 2 ** round_
        traj = integrate(model, x_flow, horizon, grid=np.array([0.0, horizon]))
        x_flow = traj.final
    resid = np.abs(dynamics.drift(compiled, x_flow)).max()
    raise ConvergenceError(
        f"fixed point not found: residual {resid:.2e} after {max_restarts + 1} rounds",
        residual=resid)


def fixed_point(model: ModelSpec, x_init: np.ndarray | None = None, tol: float = 1e-10, *,
                max_iter: int = 60, max_restarts: int = 4,
                check_uniqueness: bool = True) -> np.ndarray:
    """Find x* with ||f(x*)||_inf <= tol, reachable from ``x_init``.

    The search moves only along the span of the rule change vectors, so every
    quantity conserved by the dynamics keeps the value it has at ``x_init``
    (per-object totals, and e.g. per-list occupancy in closed exchange
    models). The default start is the uniform per-object distribution; pass
    an admissible state when the model has extra invariants.

    A second solve from a perturbed start probes for multiple equilibria on
    the same invariant manifold; disagreement raises
    :class:`MultipleEquilibriaWarning` and the first solution is returned.
    """
    x_init = _uniform_state(model) if x_init is None else check_state_vector(model, x_init)
    compiled = dynamics.compile_dynamics(model)
    basis = dynamics.move_subspace(model)
    if basis.shape[1] == 0:
        return x_init.copy()
    x_star = _solve_from(model, compiled, basis, x_init, tol, max_iter, max_restarts)
    if check_uniqueness:
        probe = _manifold_probe(model, basis, x_init)
        if probe is not None:
            try:
                x_alt = _solve_from(model, compiled, basis, probe, tol, max_iter, max_restarts)
            except ConvergenceError:
                x_alt = None
            if x_alt is not None and np.abs(x_alt - x_star).max() > max(100 * tol, 1e-7):
                warnings.warn(
                    f"fixed-point solves disagree by {np.abs(x_alt - x_star).max():.2e}; "
                    "multiple equilibria suspected, returning the first",
                    MultipleEquilibriaWarning, stacklevel=2)
    return x_star


def _manifold_probe(model, basis, x_init):
    """A second starting point on x_init's invariant manifold, inside the box.

    Moves a little along the flow (indicator starts sit on the box boundary),
    then perturbs along the rule-move subspace as far as the box allows.
    """
    x_mid = integrate(model, x_init, 0.5, grid=np.array([0.0, 0.5])).final
    rng = np.random.default_rng(0)
    direction = basis @ rng.standard_normal(basis.shape[1])
    scale = np.abs(direction).max()
    margin = min(x_mid.min(), 1.0 - x_mid.max())
    if scale <= 0 or margin < 1e-6:
        return None
    return x_mid + (0.5 * margin / scale) * direction
