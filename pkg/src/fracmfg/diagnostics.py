"""Weighted norms, exponential fits, and the long-horizon verification
reports: stationarity envelope (turnpike), linear backward decay, Duhamel
envelopes, and the forced-density estimates.

Norm conventions: densities are discrete measures with uniform node weight
h, so TV-type quantities are h-weighted sums; oscillation and weighted sup
norms are pointwise over nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fitting import FLOOR, ExponentialFit, fit_exponential
from .fokker_planck import _march, solve_forward
from .grid import Grid
from .hjb import split_velocity, stepper_for, transport_apply, transport_apply_adjoint
from .model import ProblemInstance


# ---------------------------------------------------------------------------
# norms


def tv_k(grid: Grid, mu: np.ndarray, k: float) -> float:
    """Weighted total variation of a (signed) density."""
    return grid.measure_sum(np.abs(mu), grid.weight(k))


def osc_k(grid: Grid, v: np.ndarray, k: float) -> float:
    """sup |v(x)-v(y)| / (<x>^k + <y>^k); kills additive constants."""
    w = grid.weight(k)
    diff = np.abs(v[:, None] - v[None, :])
    return float((diff / (w[:, None] + w[None, :])).max())


def grad_linf_k(grid: Grid, v: np.ndarray, k: float) -> float:
    """Weighted sup norm of the gradient, |Dv| / <x>^k."""
    return float((np.abs(grid.gradient(v)) / grid.weight(k)).max())


def sup_weighted(grid: Grid, v: np.ndarray, k: float) -> float:
    return float((np.abs(v) / grid.weight(k)).max())


def weighted_inf_const(grid: Grid, v: np.ndarray, k: float) -> float:
    """inf over constants c of ||v + c||_{L^inf(<x>^-k)} (convex in c)."""
    w = grid.weight(k)
    lo = float(-(v / w).max() * w.max() - np.abs(v).max())
    hi = -lo

    def val(c):
        return float((np.abs(v + c) / w).max())

    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if val(m1) <= val(m2):
            hi = m2
        else:
            lo = m1
        if hi - lo < 1e-14 * (1.0 + abs(hi)):
            break
    return val(0.5 * (lo + hi))


def d0_distance(grid: Grid, mu: np.ndarray, nu: np.ndarray) -> float:
    """Bounded-Lipschitz distance via the 1D dual: the cumulative-difference
    integral, clipped by the total-variation and diameter bounds."""
    diff = mu - nu
    cdf = np.cumsum(diff) * grid.h
    w1 = float(np.abs(cdf).sum() * grid.h)
    tv = grid.measure_sum(np.abs(diff))
    return min(w1, tv, 2.0)


# ---------------------------------------------------------------------------
# linear backward equation driver (value-type probe solutions)


def solve_linear_backward(instance: ProblemInstance, drift_field, v_T: np.ndarray,
                          source_rows: np.ndarray | None = None) -> np.ndarray:
    """March -dv/dt - L v + B.Dv = f backward; returns (n_steps+1, n)."""
    instance.check_cfl()
    g = instance.grid
    N = instance.n_steps
    st = stepper_for(instance)
    field = np.asarray(drift_field, dtype=float)
    if field.ndim == 1:
        field = np.broadcast_to(field, (N + 1, g.n))
    w = field - instance.drift.values[None, :]
    dt = instance.dt
    V = np.empty((N + 1, g.n))
    V[N] = v_T
    for nstep in range(N - 1, -1, -1):
        upper = V[nstep + 1]
        vm, vp = split_velocity(w[nstep + 1])
        rhs = upper - dt * transport_apply(g.h, vm, vp, upper)
        if source_rows is not None:
            rhs = rhs + dt * source_rows[nstep + 1]
        V[nstep] = st.implicit_solve(rhs)
    return V


# ---------------------------------------------------------------------------
# turnpike report


@dataclass
class TurnpikeReport:
    times: np.ndarray
    tv_series: np.ndarray
    osc_series: np.ndarray
    grad_series: np.ndarray
    raw_sup_series: np.ndarray
    fits: dict
    plateau: dict
    envelope: dict
    boundary_mass: float

    @property
    def omega_left(self) -> float:
        return self.fits["tv"][0].rate

    @property
    def omega_right(self) -> float:
        return self.fits["tv"][1].rate

    @property
    def plateau_main(self) -> float:
        return self.plateau["tv"]

    @property
    def envelope_M(self) -> float:
        return max(v[0] for v in self.envelope.values())


def _series_stride(n_steps: int, target: int = 640) -> int:
    return max(1, (n_steps + 1) // target)


def turnpike_report(instance: ProblemInstance, evo, erg) -> TurnpikeReport:
    """Distance of the horizon-T solution to the stationary state over time.

    evo: coupled solution (hjb/fp pair); erg: stationary solution with
    fields lambda_, u_bar, m_bar.  The value comparison subtracts the
    lambda*(T-t) gauge; the oscillation seminorm is blind to it, the raw
    weighted sup series is emitted alongside for transparency.
    """
    g = instance.grid
    k = instance.k
    T = instance.T
    stride = _series_stride(instance.n_steps)
    idx = np.arange(0, instance.n_steps + 1, stride)
    times = evo.hjb.times[idx]
    wk = g.weight(k)
    dubar = g.gradient(erg.u_bar)

    tv = np.empty(len(idx))
    osc = np.empty(len(idx))
    grad = np.empty(len(idx))
    raw = np.empty(len(idx))
    for j, i in enumerate(idx):
        t = evo.hjb.times[i]
        mu = evo.fp.m[i] - erg.m_bar
        tv[j] = g.measure_sum(np.abs(mu), wk)
        v = evo.hjb.u[i] - erg.u_bar - erg.lambda_ * (T - t)
        osc[j] = osc_k(g, v, k)
        grad[j] = float((np.abs(evo.hjb.du[i] - dubar) / wk).max())
        raw[j] = sup_weighted(g, evo.hjb.u[i] - erg.u_bar, k)

    fits, plateau, envelope = {}, {}, {}
    for name, series in (("tv", tv), ("osc", osc), ("grad", grad)):
        left = fit_exponential(times, series, (0.1 * T, 0.4 * T))
        right = fit_exponential(times, series, (0.6 * T, 0.9 * T), reversed_time=T)
        fits[name] = (left, right)
        plateau[name] = float(series[np.argmin(np.abs(times - T / 2))])
        om = min(left.rate, right.rate)
        if np.isfinite(om) and om > 0:
            env = np.exp(-om * times) + np.exp(-om * (T - times))
            M = float((series / env).max())
        else:
            M, om = float("nan"), float("nan")
        envelope[name] = (M, om)
    bmass = instance.boundary_mass(evo.fp.m[len(evo.fp.m) // 2])
    return TurnpikeReport(times, tv, osc, grad, raw, fits, plateau, envelope, bmass)


# ---------------------------------------------------------------------------
# linear decay and Duhamel envelopes


def linear_decay_check(instance: ProblemInstance, drift_field,
                       v_T: np.ndarray) -> ExponentialFit:
    """Source-free backward run fitted against K exp(-omega (T-t))."""
    V = solve_linear_backward(instance, drift_field, v_T)
    g = instance.grid
    stride = _series_stride(instance.n_steps)
    idx = np.arange(0, instance.n_steps + 1, stride)
    series = np.array([osc_k(g, V[i], instance.k) for i in idx])
    T = instance.T
    return fit_exponential(instance.times[idx], series, (0.1 * T, 0.9 * T),
                           reversed_time=T)


@dataclass
class DuhamelReport:
    K: float
    omega: float
    max_ratio_osc: float
    max_ratio_grad: float
    terminal_slope: float
    saturation_bound: float


def duhamel_check(instance: ProblemInstance, drift_field, v_T: np.ndarray,
                  f_rows) -> DuhamelReport:
    """Sourced backward run against the fitted two-term decay envelope.

    Constants: omega from the source-free run started at v_T; the prefactor
    is max-calibrated on source-free runs from both the terminal shape and
    the source shape, so the sourced envelopes below are genuine
    superposition checks, not refits.
    """
    g = instance.grid
    k = instance.k
    N = instance.n_steps
    T = instance.T
    dt = instance.dt
    f_rows = np.asarray(f_rows, dtype=float)
    if f_rows.ndim == 1:
        f_rows = np.broadcast_to(f_rows, (N + 1, g.n))

    stride = _series_stride(N)
    idx = np.arange(0, N + 1, stride)
    times = instance.times[idx]

    # calibration shapes: any probe with visible oscillation can anchor the
    # rate (the terminal datum may be flat when only the source matters)
    shapes = [s for s in (v_T, f_rows[N].copy()) if osc_k(g, s, k) > 1e-12]
    if not shapes:
        raise ValueError("both the terminal datum and the source are constant")
    free_runs = [solve_linear_backward(instance, drift_field, s) for s in shapes]
    free_osc = np.array([osc_k(g, free_runs[0][i], k) for i in idx])
    fit = fit_exponential(times, free_osc, (0.1 * T, 0.9 * T), reversed_time=T)
    omega = fit.rate

    K = 0.0
    for shape, Vs in zip(shapes, free_runs):
        s_osc = np.array([osc_k(g, Vs[i], k) for i in idx])
        s_grad = np.array([grad_linf_k(g, Vs[i], k) for i in idx])
        ref = osc_k(g, shape, k)
        env = np.exp(-omega * (T - times)) * ref
        interior = times <= T - 1.0
        K = max(K, float((s_osc / np.maximum(env, FLOOR)).max()))
        if interior.any():
            K = max(K, float((s_grad[interior] / np.maximum(env[interior], FLOOR)).max()))

    # sourced run
    V = solve_linear_backward(instance, drift_field, v_T, source_rows=f_rows)
    osc_f_full = np.array([osc_k(g, f_rows[i], k) for i in range(N + 1)])
    osc_v = np.array([osc_k(g, V[i], k) for i in idx])
    grad_v = np.array([grad_linf_k(g, V[i], k) for i in idx])

    ratios_osc, ratios_grad = [], []
    for j, i in enumerate(idx):
        t = instance.times[i]
        s = np.arange(i, N + 1)
        kernel = np.exp(-omega * (instance.times[s] - t))
        integral = float(np.trapezoid(kernel * osc_f_full[s], dx=dt)) if len(s) > 1 else 0.0
        rhs = K * (np.exp(-omega * (T - t)) * osc_k(g, v_T, k) + integral)
        ratios_osc.append(osc_v[j] / max(rhs, FLOOR))
        if t <= T - 1.0:
            sup_win = float(osc_f_full[(instance.times >= t) & (instance.times <= t + 1.0)].max())
            ratios_grad.append(grad_v[j] / max(rhs + K * sup_win, FLOOR))

    # terminal layer: growth of the weighted gradient excess as t -> T
    grad_T = grad_linf_k(g, v_T, k)
    taus, excess = [], []
    for i in range(N, -1, -1):
        tau = T - instance.times[i]
        if tau < 2 * dt or tau > 0.3:
            continue
        e = grad_linf_k(g, V[i], k) - grad_T
        if e > 1e-12:
            taus.append(tau)
            excess.append(e)
    if len(taus) >= 5:
        slope = float(np.polyfit(np.log(taus), np.log(excess), 1)[0])
    else:
        slope = float("nan")

    sat = K / max(omega, 1e-12) * float(osc_f_full.max())
    return DuhamelReport(K, omega, float(max(ratios_osc)),
                         float(max(ratios_grad)) if ratios_grad else float("nan"),
                         slope, sat)


# ---------------------------------------------------------------------------
# forced density estimates


@dataclass
class ForcedDensityReport:
    K_decay: float
    K_forced: float
    omega: float
    max_ratio: float
    gamma_prime: float
    gamma_integral: float
    tv_series: np.ndarray
    times: np.ndarray


def _forced_march(instance: ProblemInstance, drift_field, mu0: np.ndarray,
                  Phi_rows: np.ndarray, m_bar: np.ndarray):
    """Density equation with divergence forcing div(m_bar Phi)."""
    g = instance.grid
    N = instance.n_steps
    st = stepper_for(instance)
    field = np.asarray(drift_field, dtype=float)
    if field.ndim == 1:
        field = np.broadcast_to(field, (N + 1, g.n))
    w = field - instance.drift.values[None, :]
    vm = np.maximum(w, 0.0)
    vp = np.minimum(w, 0.0)
    src = np.empty((N + 1, g.n))
    for i in range(N + 1):
        pm, pp = split_velocity(Phi_rows[i])
        src[i] = -transport_apply_adjoint(g.h, pm, pp, m_bar)
    return _march(instance, st, vm, vp, mu0, source_rows=src)


def nonhomogeneous_fp_check(instance: ProblemInstance, drift_field, mu0: np.ndarray,
                            Phi_rows, m_bar: np.ndarray,
                            deltas=(0.25, 0.5, 1.0, 2.0)) -> ForcedDensityReport:
    """Forced density run against the split decay + layer + energy envelope.

    The decay prefactor is calibrated on the unforced run from mu0, the
    forcing prefactor on a forced run from zero; the reported ratio checks
    the combined envelope on the joint run.
    """
    g = instance.grid
    k = instance.k
    N = instance.n_steps
    dt = instance.dt
    sigma = instance.kernel.sigma
    wk = g.weight(k)
    if abs(g.measure_sum(mu0)) > 1e-10:
        raise ValueError("mu0 must have zero total mass")
    Phi_rows = np.asarray(Phi_rows, dtype=float)
    if Phi_rows.ndim == 1:
        Phi_rows = np.broadcast_to(Phi_rows, (N + 1, g.n))

    def tvk_series(sol):
        return g.h * (np.abs(sol.m) * wk[None, :]).sum(axis=1)

    mu0_norm = tv_k(g, mu0, k)
    if mu0_norm > FLOOR:
        # calibration 1: pure decay
        free = _forced_march(instance, drift_field, mu0, np.zeros_like(Phi_rows), m_bar)
        free_tv = tvk_series(free)
        fit = fit_exponential(instance.times, free_tv, (0.5, instance.T - 0.5))
        omega = fit.rate
        decay_env = np.exp(-omega * instance.times) * mu0_norm
        K_decay = float((free_tv / np.maximum(decay_env, FLOOR)).max())
    else:
        omega = 0.0
        decay_env = np.zeros_like(instance.times)
        K_decay = 0.0

    phi_sup = np.array([sup_weighted(g, Phi_rows[i], k) for i in range(N + 1)])
    phi_energy = g.h * ((Phi_rows**2) * m_bar[None, :]).sum(axis=1)

    def layer_env(i):
        # best delta in the ladder for the two forcing terms at time node i
        t = instance.times[i]
        best = np.inf
        for d in deltas:
            lo = max(t - d, 0.0)
            sel = (instance.times >= lo) & (instance.times <= t)
            term1 = d ** (1.0 - 1.0 / sigma) * float(phi_sup[sel].max())
            upto = instance.times <= lo
            energy = float(np.trapezoid(phi_energy[upto], dx=dt)) if upto.sum() > 1 else 0.0
            term2 = d ** (0.5 - 1.0 / sigma) * np.sqrt(energy)
            best = min(best, term1 + term2)
        return best

    stride = _series_stride(N)
    idx = np.arange(0, N + 1, stride)

    # calibration 2: forced from zero
    forced0 = _forced_march(instance, drift_field, np.zeros(g.n), Phi_rows, m_bar)
    forced_tv = tvk_series(forced0)
    K_forced = 0.0
    for i in idx:
        env = layer_env(i)
        if env > FLOOR:
            K_forced = max(K_forced, forced_tv[i] / env)

    # joint run against the combined fitted envelope
    joint = _forced_march(instance, drift_field, mu0, Phi_rows, m_bar)
    joint_tv = tvk_series(joint)
    ratios = []
    for i in idx:
        rhs = K_decay * decay_env[i] + K_forced * layer_env(i)
        ratios.append(joint_tv[i] / max(rhs, FLOOR))

    gamma = 0.5 * (1.0 + sigma)
    gamma_prime = gamma / (gamma - 1.0)
    gamma_integral = float(np.trapezoid(joint_tv**gamma_prime, dx=dt))
    return ForcedDensityReport(K_decay, K_forced, omega, float(max(ratios)),
                               gamma_prime, gamma_integral, joint_tv[idx],
                               instance.times[idx])
