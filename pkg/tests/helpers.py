import numpy as np

from fracmfg.grid import make_grid
from fracmfg.levy import LevyKernel
from fracmfg.model import (Coupling, DriftField, Hamiltonian, ProblemInstance,
                           gaussian_density)


def bare_instance(x_max=4.0, n=129, T=1.0, dt=2.0**-6, c_H=0.0, alpha=0.0,
                  kernel_scale=1e-30, sigma=1.5):
    """Strip-down instance: optional zero Hamiltonian/drift/vanishing noise."""
    g = make_grid(x_max, n)
    kern = LevyKernel(sigma, density_scale=kernel_scale, z_cut=4 * x_max)
    if alpha == 0.0:
        drift = DriftField.table(g, np.zeros(g.n), 0.0, 0.0)
    else:
        drift = DriftField.ou(g, alpha)
    ham = Hamiltonian.kinetic(g, c_H)
    cpl = Coupling(g, strength=0.0)
    m0 = gaussian_density(g, 0.0, 0.7)
    return ProblemInstance(g, kern, drift, ham, cpl, m0, np.zeros(g.n),
                           T=T, dt=dt, k=0.6, R=x_max / 2)
