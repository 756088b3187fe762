import numpy as np
import pytest

from fracmfg.coupler import FixedPointConfig, solve_mfg
from fracmfg.diagnostics import turnpike_report
from fracmfg.ergodic import solve_ergodic_mfg
from fracmfg.model import default_instance


@pytest.fixture(scope="session")
def inst_default():
    return default_instance(T=5.0)


@pytest.fixture(scope="session")
def ergodic_default(inst_default):
    return solve_ergodic_mfg(inst_default)


@pytest.fixture(scope="session")
def mfg_default(inst_default):
    return solve_mfg(inst_default, FixedPointConfig(theta=0.5, max_iters=100, tol=1e-7))


def _turnpike_bundle(T, n):
    inst = default_instance(T=T, n=n)
    erg = solve_ergodic_mfg(inst)
    evo = solve_mfg(inst, FixedPointConfig(theta=0.5, max_iters=100, tol=1e-7))
    rep = turnpike_report(inst, evo, erg)
    return inst, erg, evo, rep


@pytest.fixture(scope="session")
def turnpike10():
    return _turnpike_bundle(10.0, 401)


@pytest.fixture(scope="session")
def turnpike20():
    return _turnpike_bundle(20.0, 401)


@pytest.fixture(scope="session")
def turnpike10_fine():
    return _turnpike_bundle(10.0, 801)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
