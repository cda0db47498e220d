"""First-order correction (v, w) to the mean field and the refined estimate
phi + v.

The pair solves a linear ODE system driven along the mean-field trajectory:

    dv/dt = J(phi) v + 1/2 H(phi) : w          v(0) = 0
    dw/dt = J(phi) w + w J(phi)^T + Q(phi)     w(0) = 0

with J the drift Jacobian, H its second derivative and Q the covariance
production. v corrects the per-entry mean, w the covariance. The steady-state
pair solves the corresponding linear equations at a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from . import dynamics
from .errors import BudgetError, IntegrationError, NonHurwitzError
from .meanfield import DEFAULT_ATOL, DEFAULT_RTOL, Trajectory, _resolve_grid
from .model import ModelSpec, check_state_vector

_HURWITZ_TOL = 1e-9


@dataclass
class RefinementState:
    """Correction pair at one (x0, t): v is a per-entry mean correction with
    zero per-object sums, w a symmetric covariance correction."""

    v: np.ndarray
    w: np.ndarray


@dataclass
class RefinedTrajectory:
    times: np.ndarray
    phi: np.ndarray                 # (T, dim) mean field, clamped to [0,1]
    v: np.ndarray                   # (T, dim) correction
    w_final: np.ndarray             # (dim, dim) at times[-1]
    w: np.ndarray | None = None     # (T, dim, dim) when requested
    nfev: int = 0

    @property
    def refined(self) -> np.ndarray:
        """phi + v per grid point (may leave [0,1] by the correction size)."""
        return self.phi + self.v

    def mean_field(self) -> Trajectory:
        return Trajectory(times=self.times, states=self.phi, nfev=self.nfev)

    def state_at(self, i: int) -> RefinementState:
        if self.w is None and i not in (-1, len(self.times) - 1):
            raise ValueError("per-point w not stored; pass store_w=True")
        w = self.w_final if self.w is None else self.w[i]
        return RefinementState(v=self.v[i], w=w)


def _unpack_sym(flat: np.ndarray, dim: int, iu) -> np.ndarray:
    w = np.zeros((dim, dim))
    w[iu] = flat
    return w + np.triu(w, 1).T


def integrate_refined(model: ModelSpec, x0: np.ndarray, t_end: float | None = None, *,
                      rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                      grid=None, store_w: bool = False,
                      max_dim: int = 1000) -> RefinedTrajectory:
    """Jointly integrate (phi, v, w) and return the refined estimate per grid
    point.

    The coupled system has dim + dim + dim(dim+1)/2 variables (w is stored as
    its upper triangle); models with dim > ``max_dim`` are refused since the
    workspace grows quadratically.
    """
    if model.dim > max_dim:
        raise BudgetError(
            f"n*|S| = {model.dim} exceeds max_dim={max_dim}; "
            "raise max_dim explicitly if the memory cost is acceptable")
    grid = _resolve_grid(t_end, grid)
    x0 = check_state_vector(model, x0)
    compiled = dynamics.compile_dynamics(model)
    dim = model.dim
    iu = np.triu_indices(dim)

    def rhs(_t, y):
        phi = y[:dim]
        v = y[dim:2 * dim]
        w = _unpack_sym(y[2 * dim:], dim, iu)
        jac = dynamics.jacobian_sparse(compiled, phi)
        hess = dynamics.drift_hessian(compiled, phi)
        dphi = dynamics.drift(compiled, phi)
        dv = jac @ v + 0.5 * hess.contract(w)
        jw = jac @ w
        dw = jw + jw.T + dynamics.q_matrix(compiled, phi)
        return np.concatenate([dphi, dv, dw[iu]])

    y0 = np.concatenate([x0, np.zeros(dim), np.zeros(iu[0].size)])
    if grid[-1] == 0.0:
        return RefinedTrajectory(times=grid, phi=x0[None, :].copy(),
                                 v=np.zeros((1, dim)), w_final=np.zeros((dim, dim)),
                                 w=np.zeros((1, dim, dim)) if store_w else None)
    sol = solve_ivp(rhs, (0.0, grid[-1]), y0, method="RK45", t_eval=grid,
                    rtol=rtol, atol=atol)
    if not sol.success:
        t_fail = sol.t[-1] if sol.t.size else 0.0
        raise IntegrationError(f"refined solver failed near t={t_fail:g}: {sol.message}")
    ys = sol.y.T
    phi = np.clip(ys[:, :dim], 0.0, 1.0)
    v = ys[:, dim:2 * dim]
    w_final = _unpack_sym(ys[-1, 2 * dim:], dim, iu)
    w_all = None
    if store_w:
        w_all = np.stack([_unpack_sym(row, dim, iu) for row in ys[:, 2 * dim:]])
    return RefinedTrajectory(times=grid, phi=phi, v=v, w_final=w_final, w=w_all,
                             nfev=sol.nfev)


def refined_steady_state(model: ModelSpec, x_star: np.ndarray, *,
                         residual_tol: float = 1e-8) -> RefinementState:
    """Correction pair at a fixed point, via direct linear solves.

    Restricted to the rule-move subspace (see
    :func:`hetmf.dynamics.move_subspace`), w* solves the continuous Lyapunov
    equation J w + w J^T + Q(x*) = 0 and v* solves J v = -1/2 H : w*. The
    Jacobian must be Hurwitz on that subspace; otherwise the long-run
    correction is undefined and this raises :class:`NonHurwitzError`.
    """
    compiled = dynamics.compile_dynamics(model)
    x_star = np.asarray(x_star, dtype=float)
    resid = np.abs(dynamics.drift(compiled, x_star)).max()
    if resid > residual_tol:
        raise ValueError(f"x_star is not a fixed point: ||f||_inf = {resid:.2e}")
    basis = dynamics.move_subspace(model)
    if basis.shape[1] == 0:
        dim = model.dim
        return RefinementState(v=np.zeros(dim), w=np.zeros((dim, dim)))
    jac_red = basis.T @ (dynamics.jacobian_sparse(compiled, x_star) @ basis)
    eigs = np.linalg.eigvals(jac_red)
    bound = _HURWITZ_TOL * max(1.0, np.abs(eigs).max())
    if eigs.real.max() >= -bound:
        raise NonHurwitzError(
            f"Jacobian at the fixed point has eigenvalue with Re = {eigs.real.max():.3e} "
            "on the rule-move subspace; steady-state refinement is undefined")
    q_red = basis.T @ dynamics.q_matrix(compiled, x_star) @ basis
    w_red = sla.solve_continuous_lyapunov(jac_red, -q_red)
    w_red = 0.5 * (w_red + w_red.T)
    w = basis @ w_red @ basis.T
    hess = dynamics.drift_hessian(compiled, x_star)
    v_red = np.linalg.solve(jac_red, basis.T @ (-0.5 * hess.contract(w)))
    return RefinementState(v=basis @ v_red, w=w)


def refined_integral_form(model: ModelSpec, x0: np.ndarray, t: float, *,
                          n_quad: int = 24, fd_eps: float = 3e-3,
                          max_dim: int = 12) -> RefinementState:
    """Correction pair by quadrature of its integral representation; a slow
    cross-check oracle, independent of the linear-ODE route.

        v(x0, t) = 1/2 int_0^t sum_ij Q_ij(phi(tau)) d2 phi_. / dx_i dx_j (phi(tau), t - tau) dtau
        w(x0, t) =     int_0^t (Dphi) Q(phi(tau)) (Dphi)^T dtau

    The flow sensitivities are taken by central finite differences of
    re-integrated flows along the eigenvectors of Q (Q is PSD, so the double
    sum collapses to directional second derivatives). Cost is cubic in the
    dimension times quadrature order; models with n*|S| > ``max_dim`` are
    refused.
    """
    if model.dim > max_dim:
        raise BudgetError(f"integral form limited to n*|S| <= {max_dim}, got {model.dim}")
    x0 = check_state_vector(model, x0)
    compiled = dynamics.compile_dynamics(model)
    dim = model.dim
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return RefinementState(v=np.zeros(dim), w=np.zeros((dim, dim)))

    def flow(y, horizon):
        if horizon == 0.0:
            return np.asarray(y, dtype=float)
        sol = solve_ivp(lambda _t, z: dynamics.drift(compiled, z), (0.0, horizon), y,
                        method="RK45", rtol=1e-12, atol=1e-14)
        if not sol.success:
            raise IntegrationError(f"inner flow failed: {sol.message}")
        return sol.y[:, -1]

    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    taus = 0.5 * t * (nodes + 1.0)
    weights = 0.5 * t * weights

    v = np.zeros(dim)
    w = np.zeros((dim, dim))
    for tau, wt in zip(taus, weights):
        y = flow(x0, tau)
        horizon = t - tau
        q = dynamics.q_matrix(compiled, y)
        evals, evecs = np.linalg.eigh(q)
        center = flow(y, horizon)
        for lam, u in zip(evals, evecs.T):
            if lam <= 1e-14 * max(evals.max(), 1e-300):
                continue
            plus = flow(y + fd_eps * u, horizon)
            minus = flow(y - fd_eps * u, horizon)
            second = (plus - 2.0 * center + minus) / fd_eps ** 2
            first = (plus - minus) / (2.0 * fd_eps)
            v += wt * 0.5 * lam * second
            w += wt * lam * np.outer(first, first)
    return RefinementState(v=v, w=w)
