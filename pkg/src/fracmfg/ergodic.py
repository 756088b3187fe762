"""Stationary solvers: discounted value functions, the ergodic constant via
vanishing discount, and the stationary coupled system.

The discounted and ergodic equations share a policy-style iteration: freeze
the flux's upwind linearization, solve the resulting linear system, repeat.
The ergodic pair is seeded by Richardson extrapolation over a discount
ladder (the constant is the discounted value at the origin scaled by the
discount) and then polished by a bordered Newton step that pins the value
at the origin to zero, so both stationary residuals reach solver precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fokker_planck import _pair_one_step, solve_stationary
from .hjb import control_velocities, numerical_hamiltonian, stepper_for
from .model import ProblemInstance


@dataclass
class DiscountedSolution:
    delta: float
    u: np.ndarray
    residual: float
    iterations: int


@dataclass
class ErgodicHjb:
    lambda_: float
    u_bar: np.ndarray
    residual: float
    ladder: list
    ladder_spread: float


@dataclass
class ErgodicSolution:
    lambda_: float
    u_bar: np.ndarray
    m_bar: np.ndarray
    residual_hjb: float
    residual_fp: float
    iterations: int
    moment_2k: float
    moment_2k_boundary_share: float
    history: list

    @property
    def moment_2k_resolved(self) -> bool:
        """False when the edge carries a visible share of the 2k-moment,
        i.e. the moment is not trusted at this truncation/resolution."""
        return self.moment_2k_boundary_share <= 0.1


def _generator_matrix(instance: ProblemInstance) -> np.ndarray:
    """Dense linear backbone -A + B (jumps plus upwinded confining drift)."""
    st = stepper_for(instance)
    return (st.implicit_matrix - np.eye(instance.grid.n)) / instance.dt


def _transport_matrix(instance: ProblemInstance, vm: np.ndarray, vp: np.ndarray) -> np.ndarray:
    g = instance.grid
    n, h = g.n, g.h
    W = np.zeros((n, n))
    ii = np.arange(n)
    W[ii[1:], ii[1:]] += vm[1:] / h
    W[ii[1:], ii[1:] - 1] -= vm[1:] / h
    W[ii[:-1], ii[:-1]] -= vp[:-1] / h
    W[ii[:-1], ii[:-1] + 1] += vp[:-1] / h
    return W


def _stationary_residual_vec(instance: ProblemInstance, L: np.ndarray,
                             u: np.ndarray, f: np.ndarray, lam: float = 0.0,
                             delta: float = 0.0) -> np.ndarray:
    ham = instance.hamiltonian
    return delta * u + lam + L @ u + numerical_hamiltonian(ham, instance.grid.h, u) - f


def solve_discounted(instance: ProblemInstance, f: np.ndarray, delta: float,
                     u_init: np.ndarray | None = None, tol: float = 1e-10,
                     max_iter: int = 80) -> DiscountedSolution:
    """delta u + L u + H(x, Du) = f by frozen-velocity linear solves."""
    if delta <= 0:
        raise ValueError("discount must be positive")
    g = instance.grid
    ham = instance.hamiltonian
    L = _generator_matrix(instance)
    u = np.zeros(g.n) if u_init is None else u_init.copy()
    eye = np.eye(g.n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        vm, vp = control_velocities(ham, g.h, u)
        W = _transport_matrix(instance, vm, vp)
        flux = numerical_hamiltonian(ham, g.h, u)
        rhs = f - flux + W @ u
        u_new = np.linalg.solve(delta * eye + L + W, rhs)
        u = u_new
        residual = float(np.abs(_stationary_residual_vec(instance, L, u, f,
                                                         delta=delta)).max())
        if residual <= tol:
            return DiscountedSolution(delta, u, residual, it)
    raise RuntimeError(f"discounted iteration stalled at residual {residual:.3e}")


def solve_ergodic_hjb(instance: ProblemInstance, f: np.ndarray,
                      deltas=(0.1, 0.05, 0.025), tol: float = 1e-12,
                      ladder_tol: float = 0.05) -> ErgodicHjb:
    """(lambda, u_bar) with u_bar(0) = 0: discount ladder, then Newton polish.

    The ladder gives first-order extrapolants of lambda; their spread is the
    extrapolation health check.  The bordered Newton system enforces the
    stationarity residual and the origin normalization simultaneously.
    """
    g = instance.grid
    ham = instance.hamiltonian
    c = g.center
    ladder = []
    u = None
    for d in sorted(deltas, reverse=True):
        sol = solve_discounted(instance, f, d, u_init=u)
        u = sol.u
        ladder.append((d, d * sol.u[c], sol.u - sol.u[c]))
    lam_vals = [lv for _, lv, _ in ladder]
    extraps = [2.0 * lam_vals[i + 1] - lam_vals[i] for i in range(len(lam_vals) - 1)]
    spread = max(abs(a - b) for a in extraps for b in extraps) if len(extraps) > 1 else 0.0
    scale = max(1.0, max(abs(v) for v in lam_vals))
    if spread > ladder_tol * scale:
        raise RuntimeError(f"discount-ladder extrapolants disagree by {spread:.3e}")

    lam = extraps[-1] if extraps else lam_vals[-1]
    u_bar = ladder[-1][2].copy()

    # bordered Newton polish on the stationary system with u(0) = 0
    L = _generator_matrix(instance)
    n = g.n
    J = np.zeros((n + 1, n + 1))
    rhs = np.zeros(n + 1)
    residual = np.inf
    for _ in range(60):
        res = _stationary_residual_vec(instance, L, u_bar, f, lam=lam)
        residual = float(np.abs(res).max())
        if residual <= tol and abs(u_bar[c]) == 0.0:
            break
        vm, vp = control_velocities(ham, g.h, u_bar)
        J[:n, :n] = L + _transport_matrix(instance, vm, vp)
        J[:n, n] = 1.0
        J[n, :n] = 0.0
        J[n, c] = 1.0
        J[n, n] = 0.0
        rhs[:n] = -res
        rhs[n] = -u_bar[c]
        step = np.linalg.solve(J, rhs)
        u_bar = u_bar + step[:n]
        lam = lam + step[n]
        u_bar[c] = 0.0  # keep the normalization exact
    return ErgodicHjb(float(lam), u_bar, residual, [(d, lv) for d, lv, _ in ladder], spread)


def ergodic_residuals(instance: ProblemInstance, lam: float, u_bar: np.ndarray,
                      m_bar: np.ndarray, f: np.ndarray) -> tuple[float, float]:
    L = _generator_matrix(instance)
    res_u = float(np.abs(_stationary_residual_vec(instance, L, u_bar, f, lam=lam)).max())
    vm, vp = control_velocities(instance.hamiltonian, instance.grid.h, u_bar)
    S = _pair_one_step(instance, vm, vp)
    res_m = float(np.abs(S @ m_bar - m_bar).sum())
    return res_u, res_m


def solve_ergodic_mfg(instance: ProblemInstance, theta: float = 0.5,
                      tol: float = 1e-8, max_iters: int = 300,
                      mu_init: np.ndarray | None = None) -> ErgodicSolution:
    """Damped fixed point on the stationary density.

    Each pass: ergodic value problem with the coupling at the current
    density, stationary density of the resulting feedback drift, blend.
    Stops when the plain TV gap between successive densities reaches tol.
    """
    g = instance.grid
    if mu_init is None:
        mu = solve_stationary(instance, instance.drift.values)
    else:
        mu = mu_init / g.measure_sum(mu_init)
    history = []
    erg = None
    for it in range(1, max_iters + 1):
        f = instance.coupling.evaluate(mu)
        erg = solve_ergodic_hjb(instance, f)
        vm, vp = control_velocities(instance.hamiltonian, g.h, erg.u_bar)
        m_new = solve_stationary(instance, velocity_pairs=(vm, vp))
        gap = g.measure_sum(np.abs(m_new - mu))
        history.append(gap)
        mu = (1.0 - theta) * mu + theta * m_new
        if gap <= tol:
            break
    else:
        raise RuntimeError(f"stationary fixed point stalled; last TV gap {history[-1]:.3e}")

    # refresh so the returned triple is self-consistent
    f = instance.coupling.evaluate(mu)
    erg = solve_ergodic_hjb(instance, f)
    vm, vp = control_velocities(instance.hamiltonian, g.h, erg.u_bar)
    m_bar = solve_stationary(instance, velocity_pairs=(vm, vp))
    res_u, res_m = ergodic_residuals(instance, erg.lambda_, erg.u_bar, m_bar,
                                     instance.coupling.evaluate(m_bar))

    w2k = g.weight(2.0 * instance.k)
    moment_2k = g.measure_sum(m_bar, w2k)
    edge = np.zeros(g.n)
    sel = np.abs(g.nodes) >= g.x_max - 1.0
    edge[sel] = m_bar[sel]
    boundary_share = g.measure_sum(edge, w2k) / moment_2k
    return ErgodicSolution(erg.lambda_, erg.u_bar, m_bar, res_u, res_m,
                           len(history), moment_2k, boundary_share, history)
