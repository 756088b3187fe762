import numpy as np
import pytest

from fracmfg.ergodic import (ergodic_residuals, solve_discounted, solve_ergodic_hjb,
                             solve_ergodic_mfg)
from fracmfg.fokker_planck import solve_stationary
from fracmfg.hjb import control_velocities, lipschitz_seminorm, solve_backward
from fracmfg.model import default_instance, gaussian_density
from helpers import bare_instance


def test_discounted_pure_algebra():
    inst = bare_instance()  # all dynamic terms off
    c = 2.5
    sol = solve_discounted(inst, np.full(inst.grid.n, c), 0.1)
    assert np.abs(sol.u - c / 0.1).max() <= 1e-9


def test_discounted_sup_bound(inst_default, rng):
    inst = inst_default
    f = 0.8 * np.tanh(rng.standard_normal() * inst.grid.nodes) \
        + 0.2 * np.cos(2 * inst.grid.nodes)
    for delta in (0.1, 0.05):
        sol = solve_discounted(inst, f, delta)
        bound = np.abs(inst.hamiltonian.h0).max() + np.abs(f).max()
        assert delta * np.abs(sol.u).max() <= bound + 1e-9
        assert sol.residual <= 1e-10


def test_discount_ladder_richardson_structure(inst_default):
    inst = inst_default
    f = inst.coupling.f0
    c = inst.grid.center
    lams = {}
    u = None
    for d in (0.1, 0.05, 0.025):
        sol = solve_discounted(inst, f, d, u_init=u)
        u = sol.u
        lams[d] = d * sol.u[c]
    d1 = abs(lams[0.05] - lams[0.1])
    d2 = abs(lams[0.025] - lams[0.05])
    assert 1.5 <= d1 / d2 <= 3.0  # first-order ladder differences halve


def test_ergodic_hjb_gauge_invariance(inst_default):
    inst = inst_default
    f = inst.coupling.f0
    erg = solve_ergodic_hjb(inst, f)
    assert erg.u_bar[inst.grid.center] == 0.0
    assert erg.residual <= 1e-10
    shifted = solve_ergodic_hjb(inst, f + 0.7)
    assert abs(shifted.lambda_ - erg.lambda_ - 0.7) <= 1e-8
    assert np.abs(shifted.u_bar - erg.u_bar).max() <= 1e-8


def test_ergodic_constant_monotone_in_f(inst_default):
    inst = inst_default
    f = inst.coupling.f0
    bump = 0.3 * np.exp(-inst.grid.nodes**2)
    lam1 = solve_ergodic_hjb(inst, f).lambda_
    lam2 = solve_ergodic_hjb(inst, f + bump).lambda_
    assert lam2 >= lam1 - 1e-10


def test_lambda_cross_validates_against_parabolic_slope(inst_default):
    inst10 = default_instance(T=10.0)
    inst20 = default_instance(T=20.0)
    f = inst10.coupling.f0
    erg = solve_ergodic_hjb(inst10, f)
    c = inst10.grid.center
    inst10.uT[:] = 0.0
    inst20.uT[:] = 0.0
    u10 = solve_backward(inst10, f).u[0][c]
    u20 = solve_backward(inst20, f).u[0][c]
    slope = (u20 - u10) / 10.0
    assert abs(slope - erg.lambda_) <= 0.02 * max(abs(erg.lambda_), 1e-12)


def test_ubar_lipschitz_stable_across_ladder(inst_default):
    inst = inst_default
    f = inst.coupling.f0
    semis = []
    u = None
    for d in (0.1, 0.05, 0.025):
        sol = solve_discounted(inst, f, d, u_init=u)
        u = sol.u
        semis.append(np.abs(np.diff(sol.u - sol.u[inst.grid.center])).max() / inst.grid.h)
    assert max(semis) / min(semis) <= 1.10


def test_ergodic_mfg_decoupled_one_pass(inst_default):
    inst = default_instance(T=2.0, strength=0.0)
    em = solve_ergodic_mfg(inst, theta=1.0)
    assert em.iterations <= 2
    erg0 = solve_ergodic_hjb(inst, inst.coupling.f0)
    vm, vp = control_velocities(inst.hamiltonian, inst.grid.h, erg0.u_bar)
    mbar0 = solve_stationary(inst, velocity_pairs=(vm, vp))
    assert inst.grid.measure_sum(np.abs(em.m_bar - mbar0)) <= 1e-10


def test_ergodic_mfg_unique_and_consistent(inst_default, ergodic_default):
    inst = inst_default
    em = ergodic_default
    assert em.residual_hjb <= 1e-7
    assert em.residual_fp <= 1e-7
    assert abs(inst.grid.measure_sum(em.m_bar) - 1.0) <= 1e-12
    assert em.m_bar.min() >= 0.0
    assert np.isfinite(em.moment_2k)

    other = solve_ergodic_mfg(inst, mu_init=gaussian_density(inst.grid, 1.0, 1.2))
    assert inst.grid.measure_sum(np.abs(em.m_bar - other.m_bar)) <= 1e-6
    assert abs(em.lambda_ - other.lambda_) <= 1e-6


def test_gauge_invariance_of_stationary_density(inst_default, ergodic_default):
    """Adding a constant to u_bar leaves its feedback density unchanged."""
    inst = inst_default
    em = ergodic_default
    vm1, vp1 = control_velocities(inst.hamiltonian, inst.grid.h, em.u_bar)
    vm2, vp2 = control_velocities(inst.hamiltonian, inst.grid.h, em.u_bar + 3.3)
    assert np.abs(vm1 - vm2).max() <= 1e-12
    assert np.abs(vp1 - vp2).max() <= 1e-12
    m1 = solve_stationary(inst, velocity_pairs=(vm1, vp1))
    m2 = solve_stationary(inst, velocity_pairs=(vm2, vp2))
    assert inst.grid.measure_sum(np.abs(m1 - m2)) <= 1e-10


def test_turnpike_consistency_with_long_horizon(turnpike20):
    inst, erg, evo, rep = turnpike20
    mid = np.argmin(np.abs(rep.times - 10.0))
    for name, series in (("tv", rep.tv_series), ("osc", rep.osc_series),
                         ("grad", rep.grad_series)):
        M, om = rep.envelope[name]
        env = M * (np.exp(-om * 10.0) + np.exp(-om * (inst.T - 10.0)))
        assert series[mid] <= env * (1.0 + 1e-9)
