"""Problem data: confining drift, Hamiltonian, smoothing monotone coupling,
initial/terminal data, and the assumption validators.

The default building blocks are chosen so the structural hypotheses hold by
construction: an Ornstein-Uhlenbeck drift (confinement is an identity), a
globally Lipschitz kinetic Hamiltonian with bounded second derivative in p,
and a double-mollified coupling whose monotonicity is a sum of squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, make_grid
from .levy import LevyKernel, LevyOperator, LyapunovCertificate, assemble, lyapunov_certificate


# ---------------------------------------------------------------------------
# drift


@dataclass
class DriftField:
    """Confining vector field sampled on the grid.

    alpha/beta are the declared confinement rate and one-sided defect in
    (b(x)-b(y))(x-y) >= alpha (x-y)^2 - beta |x-y|; the validator measures
    how tight they are on grid pairs.
    """

    kind: str
    alpha: float
    beta: float
    values: np.ndarray
    dvalues: np.ndarray

    @classmethod
    def ou(cls, grid: Grid, alpha: float = 1.0) -> "DriftField":
        x = grid.nodes
        return cls("ou", alpha, 0.0, alpha * x, alpha * np.ones_like(x))

    @classmethod
    def cubic_saturated(cls, grid: Grid, alpha: float = 1.0, cubic: float = 0.5) -> "DriftField":
        """b = alpha x + cubic x^3/(1+x^2): linear growth, nonlinear core."""
        x = grid.nodes
        vals = alpha * x + cubic * x**3 / (1.0 + x**2)
        dvals = alpha + cubic * (x**4 + 3.0 * x**2) / (1.0 + x**2) ** 2
        beta = 0.0 if cubic >= 0 else abs(cubic) * 2.0 * grid.x_max
        return cls("cubic_saturated", alpha, beta, vals, dvals)

    @classmethod
    def table(cls, grid: Grid, values: np.ndarray, alpha: float, beta: float) -> "DriftField":
        vals = np.asarray(values, dtype=float)
        return cls("table", alpha, beta, vals, grid.gradient(vals))

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


def _cutoff_profile(r: np.ndarray) -> np.ndarray:
    """Smooth plateau cutoff: 1 on r<=1, 0 on r>=2, slope bounded by 15/8."""
    t = np.clip(r - 1.0, 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def truncate_drift(grid: Grid, drift: DriftField, R: float) -> DriftField:
    """b * chi_R with chi_R = 1 on |x|<=R, 0 on |x|>=2R, |chi_R'| <= 2/R."""
    if R <= 0:
        raise ValueError("truncation radius must be positive")
    r = np.abs(grid.nodes) / R
    chi = _cutoff_profile(r)
    t = np.clip(r - 1.0, 0.0, 1.0)
    dchi = -(30.0 * t**2 * (1.0 - t) ** 2) * np.sign(grid.nodes) / R
    vals = drift.values * chi
    dvals = drift.dvalues * chi + drift.values * dchi
    out = DriftField(drift.kind + f"_trunc{R:g}", drift.alpha, drift.beta, vals, dvals)
    return out


# ---------------------------------------------------------------------------
# Hamiltonian


@dataclass
class Hamiltonian:
    """H(x,p) with globally Lipschitz, locally uniformly convex p-dependence.

    The default kinetic form is c_H (sqrt(1+p^2) - 1) + h0(x) with bounded
    h0.  Custom Hamiltonians provide the three callables and constants.
    """

    kind: str
    c_H: float
    C_H: float
    L_H: float
    h0: np.ndarray  # sampled x-part on the grid
    _H: object = field(repr=False, default=None)
    _Hp: object = field(repr=False, default=None)
    _Hpp: object = field(repr=False, default=None)

    @classmethod
    def kinetic(cls, grid: Grid, c_H: float = 1.0, h0: np.ndarray | None = None) -> "Hamiltonian":
        h0v = np.zeros(grid.n) if h0 is None else np.asarray(h0, dtype=float)
        H = lambda p: c_H * (np.sqrt(1.0 + p * p) - 1.0)
        Hp = lambda p: c_H * p / np.sqrt(1.0 + p * p)
        Hpp = lambda p: c_H * (1.0 + p * p) ** (-1.5)
        return cls("kinetic", c_H, c_H + float(np.abs(h0v).max(initial=0.0)), c_H,
                   h0v, H, Hp, Hpp)

    @classmethod
    def custom(cls, grid: Grid, H, Hp, Hpp, C_H: float, L_H: float,
               h0: np.ndarray | None = None) -> "Hamiltonian":
        h0v = np.zeros(grid.n) if h0 is None else np.asarray(h0, dtype=float)
        return cls("custom", L_H, C_H, L_H, h0v, H, Hp, Hpp)

    def value(self, p: np.ndarray) -> np.ndarray:
        """p-part of H (the x-part h0 is added by the schemes)."""
        return self._H(p)

    def dp(self, p: np.ndarray) -> np.ndarray:
        return self._Hp(p)

    def dpp(self, p: np.ndarray) -> np.ndarray:
        return self._Hpp(p)

    def convexity_bounds(self, K: float, samples: int = 401) -> tuple[float, float]:
        """(alpha_K, C_K) bracketing H_pp on |p| <= K."""
        p = np.linspace(-K, K, samples)
        hpp = self.dpp(p)
        return float(hpp.min()), float(hpp.max())


# ---------------------------------------------------------------------------
# coupling


class Coupling:
    """F(x, m) = strength * (rho * rho * m)(x) + f0(x), rho a bump.

    The double mollification makes Lasry-Lions monotonicity an algebraic
    identity: the pairing of F differences against a density difference is
    strength * ||rho * dm||^2 in the grid metric.
    """

    def __init__(self, grid: Grid, strength: float = 0.5, width: float = 1.0,
                 f0: np.ndarray | None = None):
        if width <= 0:
            raise ValueError("mollifier width must be positive")
        self.grid = grid
        self.strength = float(strength)
        self.width = float(width)
        self.f0 = np.zeros(grid.n) if f0 is None else np.asarray(f0, dtype=float)
        # symmetric convolution matrix K_ij = h * rho(x_i - x_j)
        diff = grid.nodes[:, None] - grid.nodes[None, :]
        rho = np.maximum(0.0, 1.0 - np.abs(diff) / width) / width
        self._K = grid.h * rho

    def smooth(self, m: np.ndarray) -> np.ndarray:
        """Single mollification rho * m."""
        return self._K @ m

    def evaluate(self, m: np.ndarray) -> np.ndarray:
        return self.strength * (self._K @ (self._K @ m)) + self.f0

    def monotonicity_gap(self, m1: np.ndarray, m2: np.ndarray) -> float:
        """h-weighted pairing of (F(m1)-F(m2)) against (m1-m2): a square."""
        d = m1 - m2
        return float(self.strength * self.grid.h * np.dot(self._K @ d, self._K @ d))


def _normalized_density(grid: Grid, m: np.ndarray) -> np.ndarray:
    # zero endpoints: the trapezoid and uniform node-weight masses then agree
    # exactly, and initial data touching the edge signals under-truncation
    m = m.copy()
    m[0] = 0.0
    m[-1] = 0.0
    return m / grid.quadrature(m)


def gaussian_density(grid: Grid, center: float = 0.0, std: float = 1.0) -> np.ndarray:
    return _normalized_density(grid, np.exp(-0.5 * ((grid.nodes - center) / std) ** 2))


def uniform_density(grid: Grid) -> np.ndarray:
    return _normalized_density(grid, np.ones(grid.n))


def point_mass_density(grid: Grid, node: int) -> np.ndarray:
    if not 0 < node < grid.n - 1:
        raise ValueError("point mass must sit at an interior node")
    m = np.zeros(grid.n)
    m[node] = 1.0
    return m / grid.quadrature(m)


# ---------------------------------------------------------------------------
# the full problem instance


@dataclass
class ProblemInstance:
    grid: Grid
    kernel: LevyKernel
    drift: DriftField
    hamiltonian: Hamiltonian
    coupling: Coupling
    m0: np.ndarray
    uT: np.ndarray
    T: float
    dt: float
    k: float
    R: float

    operator: LevyOperator = field(init=False, repr=False)

    def __post_init__(self):
        g = self.grid
        if not (0.0 < self.k < self.kernel.sigma):
            raise ValueError(f"weight exponent k={self.k} must lie in (0, sigma)")
        mass = g.quadrature(self.m0)
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"m0 mass {mass} != 1")
        if self.m0.min() < 0:
            raise ValueError("m0 must be nonnegative")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("need T, dt > 0")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("T must be an integer multiple of dt")
        self.operator = assemble(self.kernel, g)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def cfl_bound(self) -> float:
        """Explicit-part monotonicity bound on dt.

        The drift-augmented constant L_H + max|b| dominates whenever the
        drift tops the Hamiltonian slope; 2 L_H guards the opposite case
        (both one-sided flux derivatives can be active at a kink).
        """
        lh = self.hamiltonian.L_H
        denom = max(lh + self.drift.max_abs(), 2.0 * lh)
        return np.inf if denom == 0.0 else self.grid.h / denom

    def check_cfl(self):
        bound = self.cfl_bound()
        if self.dt > bound * (1.0 + 1e-12):
            raise ValueError(f"dt={self.dt} violates the CFL bound {bound:.6g}")

    def moment_k(self, m: np.ndarray) -> float:
        return self.grid.measure_sum(np.abs(m), self.grid.weight(self.k))

    def boundary_mass(self, m: np.ndarray, margin: float = 1.0) -> float:
        """Mass within `margin` of the domain edge (under-truncation gauge)."""
        sel = np.abs(self.grid.nodes) >= self.grid.x_max - margin
        mm = np.where(sel, m, 0.0)
        return self.grid.measure_sum(mm)


def default_instance(x_max: float = 5.0, n: int = 401, sigma: float = 1.5,
                     alpha: float = 1.0, c_H: float = 1.0, strength: float = 1.0,
                     width: float = 1.0, anchor: float = 0.5, k: float = 0.6,
                     T: float = 5.0, dt: float | None = None,
                     m0_center: float = -1.0, m0_std: float = 0.8,
                     uT_scale: float = 0.3) -> ProblemInstance:
    """Reference configuration used across the verification suite.

    Crowd-averse double-mollified coupling with a bounded anchor favoring
    x=1, confining linear drift, kinetic Hamiltonian, an off-center start,
    and a sloped Lipschitz terminal datum, so both ends of a long-horizon
    run sit well off the stationary state.
    """
    grid = make_grid_cached(x_max, n)
    kernel = LevyKernel.fractional(sigma, z_cut=4.0 * x_max)
    drift = DriftField.ou(grid, alpha)
    x = grid.nodes
    f0 = anchor * (x - 1.0) ** 2 / (1.0 + (x - 1.0) ** 2)
    coupling = Coupling(grid, strength=strength, width=width, f0=f0)
    ham = Hamiltonian.kinetic(grid, c_H)
    if dt is None:
        bound = grid.h / (ham.L_H + drift.max_abs())
        dt = 2.0 ** np.floor(np.log2(bound))  # largest power of two under CFL
    m0 = gaussian_density(grid, m0_center, m0_std)
    uT = uT_scale * np.tanh(x)
    return ProblemInstance(grid, kernel, drift, ham, coupling, m0, uT,
                           T=T, dt=float(dt), k=k, R=x_max / 2.0)


_GRID_CACHE: dict[tuple[float, int], Grid] = {}


def make_grid_cached(x_max: float, n: int) -> Grid:
    key = (float(x_max), int(n))
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = make_grid(x_max, n)
    return _GRID_CACHE[key]


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    passed: dict
    constants: dict
    certificate: LyapunovCertificate

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def summary_lines(self) -> list[str]:
        lines = []
        for name, ok in self.passed.items():
            lines.append(f"{'PASS' if ok else 'FAIL'}  {name}")
        for name, val in self.constants.items():
            lines.append(f"      {name} = {val:.6g}")
        lines.append(f"      lyapunov omega0 = {self.certificate.omega0:.6g}, "
                     f"K = {self.certificate.K:.6g}, valid = {self.certificate.valid}")
        return lines


def validate(instance: ProblemInstance, n_random: int = 100, seed: int = 0) -> ValidationReport:
    """Check the structural assumptions on the instance; report constants."""
    g = instance.grid
    rng = np.random.default_rng(seed)
    passed: dict = {}
    consts: dict = {}

    # confinement: (b(x)-b(y))(x-y) >= alpha (x-y)^2 - beta |x-y| on grid pairs
    b = instance.drift.values
    x = g.nodes
    dx = x[:, None] - x[None, :]
    db = b[:, None] - b[None, :]
    gap = db * dx - instance.drift.alpha * dx**2 + instance.drift.beta * np.abs(dx)
    passed["drift_confinement"] = bool(gap.min() >= -1e-10)
    consts["alpha_declared"] = instance.drift.alpha
    consts["beta_declared"] = instance.drift.beta
    consts["drift_confinement_min_gap"] = float(gap.min())
    consts["drift_local_lipschitz"] = float(np.abs(np.diff(b)).max() / g.h)

    # Hamiltonian growth / Lipschitz / convexity on a p-lattice
    ham = instance.hamiltonian
    p = np.linspace(-8.0, 8.0, 321)
    Hvals = ham.value(p)
    growth = np.abs(Hvals[None, :] + ham.h0[:, None]) - ham.C_H * (1.0 + np.abs(p))[None, :]
    passed["hamiltonian_growth"] = bool(growth.max() <= 1e-10)
    dq = np.abs(Hvals[:, None] - Hvals[None, :])
    dpq = np.abs(p[:, None] - p[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        quot = np.where(dpq > 0, dq / dpq, 0.0)
    consts["L_H_measured"] = float(quot.max())
    passed["hamiltonian_p_lipschitz"] = bool(quot.max() <= ham.L_H + 1e-10)

    K = 2.0
    aK, CK = ham.convexity_bounds(K)
    passed["hamiltonian_convexity"] = bool(aK > 0)
    consts["alpha_K(K=2)"] = aK
    consts["C_K(K=2)"] = CK

    # x-Lipschitz: the x-dependence sits in the bounded smooth h0 part
    xlip = float(np.abs(g.gradient(ham.h0)).max())
    consts["C_H3_xlip"] = xlip
    passed["hamiltonian_x_lipschitz"] = bool(np.isfinite(xlip))

    # H_p against finite differences of H
    ps = np.linspace(-3.0, 3.0, 41)
    eps = 1e-6
    fd = (ham.value(ps + eps) - ham.value(ps - eps)) / (2 * eps)
    hp = ham.dp(ps)
    rel = np.abs(fd - hp) / (1.0 + np.abs(hp))
    passed["hamiltonian_dp_consistent"] = bool(rel.max() <= 1e-6)

    # coupling monotonicity on random density pairs (sum-of-squares identity)
    worst = np.inf
    for _ in range(n_random):
        a = np.abs(rng.standard_normal(g.n)) + 1e-3
        c = np.abs(rng.standard_normal(g.n)) + 1e-3
        a /= g.quadrature(a)
        c /= g.quadrature(c)
        worst = min(worst, instance.coupling.monotonicity_gap(a, c))
    passed["coupling_monotone"] = bool(worst >= -1e-12)
    consts["coupling_min_monotonicity_gap"] = float(worst)

    # coupling boundedness/Lipschitz constants (F-side)
    Fz = instance.coupling.evaluate(instance.m0)
    consts["C_F_bound"] = float(np.abs(Fz).max())
    consts["C_F_xlip"] = float(np.abs(g.gradient(Fz)).max())

    # smoothing estimate: weighted response to zero-average perturbations;
    # the two addends are reported separately (the bound does not weigh them)
    wk = g.weight(instance.k)
    best_osc, best_grad = 0.0, 0.0
    for _ in range(20):
        mu = rng.standard_normal(g.n)
        mu -= mu.mean()
        tvk = g.quadrature(np.abs(mu), wk)
        if tvk < 1e-12:
            continue
        dF = instance.coupling.evaluate(instance.m0 + mu) - instance.coupling.evaluate(instance.m0)
        best_osc = max(best_osc, _osc_weighted(dF, wk) / tvk)
        best_grad = max(best_grad, float((np.abs(g.gradient(dF)) / wk).max()) / tvk)
    consts["F3_osc_addend"] = best_osc
    consts["F3_grad_addend"] = best_grad
    consts["F3_response_constant"] = best_osc + best_grad
    passed["coupling_smoothing_bounded"] = bool(best_osc + best_grad < 1e3)

    cert = lyapunov_certificate(instance.operator, instance.drift.values,
                                gamma=instance.k, L0=ham.L_H)
    passed["lyapunov_certificate"] = bool(cert.valid and cert.omega0 > 0)

    consts["m0_moment_k"] = instance.moment_k(instance.m0)
    consts["uT_lipschitz"] = float(np.abs(g.gradient(instance.uT)).max())
    return ValidationReport(passed, consts, cert)


def _osc_weighted(v: np.ndarray, wk: np.ndarray) -> float:
    diff = np.abs(v[:, None] - v[None, :])
    den = wk[:, None] + wk[None, :]
    return float((diff / den).max())
