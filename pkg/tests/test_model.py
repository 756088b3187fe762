import numpy as np
import pytest

from fracmfg.grid import make_grid
from fracmfg.levy import LevyKernel
from fracmfg.model import (Coupling, DriftField, Hamiltonian, ProblemInstance,
                           default_instance, gaussian_density, point_mass_density,
                           truncate_drift, uniform_density, validate)


def test_ou_drift_confinement_identity(inst_default):
    rep = validate(inst_default)
    assert rep.passed["drift_confinement"]
    assert rep.constants["drift_confinement_min_gap"] >= -1e-10
    assert inst_default.drift.alpha == 1.0
    assert inst_default.drift.beta == 0.0


def test_kinetic_hamiltonian_constants():
    g = make_grid(5.0, 101)
    ham = Hamiltonian.kinetic(g, c_H=1.0)
    aK, CK = ham.convexity_bounds(2.0)
    assert aK == pytest.approx((1.0 + 4.0) ** -1.5, abs=1e-6)
    assert CK == pytest.approx(1.0, abs=1e-12)
    assert ham.L_H == 1.0
    # p-part at rest: value and slope both vanish
    assert ham.value(np.array([0.0]))[0] == 0.0
    assert ham.dp(np.array([0.0]))[0] == 0.0


def test_coupling_monotonicity_is_sum_of_squares(inst_default, rng):
    g = inst_default.grid
    cpl = inst_default.coupling
    for _ in range(100):
        a = np.abs(rng.standard_normal(g.n))
        b = np.abs(rng.standard_normal(g.n))
        a /= g.quadrature(a)
        b /= g.quadrature(b)
        gap = cpl.monotonicity_gap(a, b)
        assert gap >= -1e-12
        d = a - b
        direct = cpl.strength * g.h * float(np.dot(cpl.smooth(d), cpl.smooth(d)))
        assert gap == pytest.approx(direct, rel=1e-12)


def test_validate_report_is_deterministic(inst_default):
    r1 = validate(inst_default)
    r2 = validate(inst_default)
    assert r1.passed == r2.passed
    assert r1.constants == r2.constants


def test_validate_all_pass_on_default(inst_default):
    rep = validate(inst_default)
    assert rep.all_passed, rep.summary_lines()
    assert rep.certificate.omega0 > 0


def test_truncate_drift_plateau_and_support():
    g = make_grid(8.0, 321)
    drift = DriftField.ou(g, 1.0)
    R = 2.0
    bR = truncate_drift(g, drift, R)
    inner = np.abs(g.nodes) <= R
    outer = np.abs(g.nodes) >= 2 * R
    assert np.all(bR.values[inner] == drift.values[inner])
    assert np.all(bR.values[outer] == 0.0)
    mid = np.abs(g.nodes) <= 2 * R
    assert bR.max_abs() <= np.abs(drift.values[mid]).max()
    # cutoff slope bound 2/R, checked through the profile derivative
    chi = np.where(drift.values != 0, bR.values / np.where(drift.values == 0, 1, drift.values), 1.0)
    dchi = np.abs(np.diff(chi)) / g.h
    assert dchi.max() <= 2.0 / R + 1e-6


def test_truncate_drift_rejects_bad_radius():
    g = make_grid(8.0, 321)
    with pytest.raises(ValueError):
        truncate_drift(g, DriftField.ou(g), -1.0)


def test_cubic_saturated_drift_validates():
    g = make_grid(5.0, 201)
    d = DriftField.cubic_saturated(g, alpha=1.0, cubic=0.5)
    x, b = g.nodes, d.values
    dx = x[:, None] - x[None, :]
    db = b[:, None] - b[None, :]
    gap = db * dx - d.alpha * dx**2 + d.beta * np.abs(dx)
    assert gap.min() >= -1e-10


def test_instance_invariants():
    inst = default_instance()
    g = inst.grid
    assert abs(g.quadrature(inst.m0) - 1.0) <= 1e-12
    assert inst.m0.min() >= 0.0
    assert 0 < inst.k < inst.kernel.sigma
    assert np.isfinite(inst.moment_k(inst.m0))


def test_instance_rejects_bad_data():
    inst = default_instance()
    g = inst.grid
    kw = dict(grid=g, kernel=inst.kernel, drift=inst.drift,
              hamiltonian=inst.hamiltonian, coupling=inst.coupling,
              uT=inst.uT, T=1.0, dt=inst.dt, R=2.5)
    with pytest.raises(ValueError):
        ProblemInstance(m0=2.0 * inst.m0, k=0.6, **kw)  # mass 2
    with pytest.raises(ValueError):
        ProblemInstance(m0=inst.m0, k=1.7, **kw)  # k >= sigma
    bad = inst.m0.copy()
    bad[3] = -1.0
    bad /= g.quadrature(bad)
    with pytest.raises(ValueError):
        ProblemInstance(m0=bad, k=0.6, **kw)
    with pytest.raises(ValueError):
        ProblemInstance(m0=inst.m0, k=0.6, grid=g, kernel=inst.kernel,
                        drift=inst.drift, hamiltonian=inst.hamiltonian,
                        coupling=inst.coupling, uT=inst.uT,
                        T=1.0, dt=0.3, R=2.5)  # T not a multiple of dt


def test_cfl_guard():
    inst = default_instance(dt=0.00390625)
    inst.check_cfl()
    loose = default_instance(T=1.0, dt=0.125)
    with pytest.raises(ValueError):
        loose.check_cfl()


def test_density_constructors():
    g = make_grid(5.0, 201)
    for m in (gaussian_density(g, -1.0, 0.8), uniform_density(g),
              point_mass_density(g, g.center)):
        assert abs(g.quadrature(m) - 1.0) <= 1e-12
        assert m.min() >= 0.0
    with pytest.raises(ValueError):
        point_mass_density(g, 0)  # boundary node carries no interior mass


def test_boundary_mass_report(inst_default):
    # off-center start keeps ~1e-4 of mass within one unit of the edge
    assert inst_default.boundary_mass(inst_default.m0) <= 1e-3
    edge = np.zeros(inst_default.grid.n)
    edge[-2] = 1.0 / inst_default.grid.h
    assert inst_default.boundary_mass(edge) == pytest.approx(1.0)
