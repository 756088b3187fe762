"""Forward density solver: the exact transpose of the linearized backward step.

One step of the backward linear equation with a frozen velocity field is
u^n = P (u^{n+1} - dt * W u^{n+1}) with P the implicit solve map and W the
upwind transport of the velocity.  The density marches with the transposed
factors, m^{n+1} = (I - dt W)^T (P^T m^n), so the grid duality pairing
between the two equations holds to roundoff at every step.  P has
nonnegative entries and unit row sums, and the explicit factor is
nonnegative under the CFL bound, so mass is conserved and nonnegativity is
preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fitting import ExponentialFit, fit_exponential
from .hjb import LinearStepper, split_velocity, stepper_for, transport_apply_adjoint
from .model import DriftField, ProblemInstance


@dataclass
class FpSolution:
    times: np.ndarray
    m: np.ndarray          # (n_steps+1, n)
    masses: np.ndarray
    moments_k: np.ndarray

    def at(self, t: float) -> np.ndarray:
        idx = int(round(t / (self.times[1] - self.times[0])))
        return self.m[idx]


def _velocity_rows(instance: ProblemInstance, drift_field,
                   backbone: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split the effective drift minus the implicit backbone into upwind pairs."""
    N, n = instance.n_steps, instance.grid.n
    field = np.asarray(drift_field, dtype=float)
    if field.ndim == 1:
        field = np.broadcast_to(field, (N + 1, n))
    if field.shape != (N + 1, n):
        raise ValueError(f"drift field has shape {field.shape}, expected ({N + 1}, {n})")
    w = field - backbone[None, :]
    vmax = float(np.abs(w).max())
    if instance.dt > instance.grid.h / max(2.0 * vmax, 1e-300):
        raise ValueError("explicit transport violates the CFL bound")
    vm = np.maximum(w, 0.0)
    vp = np.minimum(w, 0.0)
    return vm, vp


def _march(instance: ProblemInstance, st: LinearStepper, vm: np.ndarray, vp: np.ndarray,
           m0: np.ndarray, source_rows: np.ndarray | None = None) -> FpSolution:
    """Forward marching with per-level velocity pairs (explicit level n+1)."""
    g = instance.grid
    N = instance.n_steps
    dt = instance.dt
    wk = g.weight(instance.k)
    M = np.empty((N + 1, g.n))
    M[0] = m0
    for nstep in range(N):
        y = st.implicit_solve_adjoint(M[nstep])
        y = y - dt * transport_apply_adjoint(g.h, vm[nstep + 1], vp[nstep + 1], y)
        if source_rows is not None:
            y = y + dt * source_rows[nstep + 1]
        M[nstep + 1] = y
    masses = g.h * M.sum(axis=1)
    moments = g.h * (np.abs(M) * wk[None, :]).sum(axis=1)
    return FpSolution(instance.times, M, masses, moments)


def solve_forward(instance: ProblemInstance, drift_field, m0: np.ndarray | None = None,
                  drift: DriftField | None = None,
                  velocity_pairs: tuple[np.ndarray, np.ndarray] | None = None) -> FpSolution:
    """Evolve the density under the effective drift field.

    drift_field: (n_steps+1, n) samples of the full drift b + w (a single
    static field broadcasts); step n -> n+1 uses the field at level n+1,
    mirroring where the backward solver evaluates its explicit part.  The
    coupled solver passes `velocity_pairs` directly so the density sees the
    same upwind selection as the value-function flux.
    """
    instance.check_cfl()
    st = stepper_for(instance, drift)
    if velocity_pairs is None:
        vm, vp = _velocity_rows(instance, drift_field, st.drift.values)
    else:
        vm, vp = velocity_pairs
    m0 = instance.m0 if m0 is None else m0
    sol = _march(instance, st, vm, vp, m0)
    if sol.m.min() < -1e-14:
        raise RuntimeError(f"density dipped to {sol.m.min()}: assembly fault")
    return sol


def one_step_matrix(instance: ProblemInstance, w: np.ndarray,
                    drift: DriftField | None = None) -> np.ndarray:
    """Dense forward one-step matrix for a static velocity perturbation w
    (the part of the effective drift not carried by the implicit backbone)."""
    vm, vp = split_velocity(np.asarray(w, dtype=float))
    return _pair_one_step(instance, vm, vp, drift)


def solve_stationary(instance: ProblemInstance, drift_field=None,
                     drift: DriftField | None = None,
                     velocity_pairs: tuple[np.ndarray, np.ndarray] | None = None,
                     tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Stationary density: unit eigenvector of the one-step matrix.

    Inverse iteration with a shift just above 1; the matrix is column
    stochastic and irreducible, so the eigenvector is positive and simple.
    """
    g = instance.grid
    backbone = (drift or instance.drift).values
    if velocity_pairs is not None:
        vm, vp = velocity_pairs
        w = vm + vp
        S = _pair_one_step(instance, vm, vp, drift)
    else:
        field = np.asarray(drift_field, dtype=float)
        w = field - backbone
        S = one_step_matrix(instance, w, drift)
    vmax = float(np.abs(w).max())
    if instance.dt > g.h / max(2.0 * vmax, 1e-300):
        raise ValueError("explicit transport violates the CFL bound")

    shift = 1.0 + 1e-8
    from scipy.linalg import lu_factor, lu_solve
    lu = lu_factor(S - shift * np.eye(g.n))
    m = np.full(g.n, 1.0 / (2 * g.x_max))
    residual = np.inf
    for _ in range(max_iter):
        m_new = lu_solve(lu, m)
        m_new = np.abs(m_new)
        m_new /= g.measure_sum(m_new)
        residual = float(np.abs(S @ m_new - m_new).sum())
        if np.abs(m_new - m).max() < tol:
            m = m_new
            break
        m = m_new
    else:
        raise RuntimeError(f"inverse iteration stalled; one-step residual {residual:.3e}")
    m = np.maximum(m, 0.0)
    m /= g.measure_sum(m)
    return m


def _pair_one_step(instance: ProblemInstance, vm: np.ndarray, vp: np.ndarray,
                   drift: DriftField | None = None) -> np.ndarray:
    st = stepper_for(instance, drift)
    g = instance.grid
    n, h, dt = g.n, g.h, instance.dt
    E = np.eye(n)
    ii = np.arange(n)
    E[ii[1:], ii[1:]] -= dt * vm[1:] / h
    E[ii[1:], ii[1:] - 1] += dt * vm[1:] / h
    E[ii[:-1], ii[:-1]] += dt * vp[:-1] / h
    E[ii[:-1], ii[:-1] + 1] -= dt * vp[:-1] / h
    return (st.solve_matrix @ E).T


def stationary_residual(instance: ProblemInstance, drift_field, m_bar: np.ndarray,
                        drift: DriftField | None = None) -> float:
    field = np.asarray(drift_field, dtype=float)
    backbone = (drift or instance.drift).values
    S = one_step_matrix(instance, field - backbone, drift)
    return float(np.abs(S @ m_bar - m_bar).sum())


def decay_rate(instance: ProblemInstance, drift_field, m0_a: np.ndarray,
               m0_b: np.ndarray) -> ExponentialFit:
    """Weighted total-variation gap of two runs, fitted exponentially."""
    g = instance.grid
    for m0 in (m0_a, m0_b):
        if abs(g.measure_sum(m0) - 1.0) > 1e-10:
            raise ValueError("both initial densities must have unit mass")
    sol_a = solve_forward(instance, drift_field, m0=m0_a)
    sol_b = solve_forward(instance, drift_field, m0=m0_b)
    wk = g.weight(instance.k)
    gap = np.array([g.measure_sum(np.abs(sol_a.m[i] - sol_b.m[i]), wk)
                    for i in range(instance.n_steps + 1)])
    return fit_exponential(instance.times, gap, (0.5, instance.T - 0.5))
