"""Configuration ingestion, experiment orchestration, and persistence.

Config files are INI-style section/key documents, parsed strictly: unknown
sections or keys are rejected with the offending line number.  Each run
writes into an output directory addressed by the config hash:

    series.csv    one row per (thinned) time node, header
                  t,tv_k,osc_k,grad_linf_k,mass,moment_k
    summary.json  keys omega_left, omega_right, plateau, M, lambda,
                  residual_hjb, residual_fp, iterations (null when a field
                  does not apply to the mode)
    record.json   config hash, versions, wall clock, outputs, extra metrics

Floats are serialized with 17 significant digits, so identical configs
reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .coupler import FixedPointConfig, solve_mfg
from .diagnostics import (DuhamelReport, duhamel_check, nonhomogeneous_fp_check,
                          linear_decay_check, osc_k, sup_weighted, turnpike_report)
from .ergodic import solve_ergodic_mfg
from .fitting import ExponentialFit
from .fokker_planck import decay_rate, solve_forward
from .grid import make_grid
from .hjb import lipschitz_seminorm, solve_backward
from .levy import LevyKernel, fractional_scale
from .model import (Coupling, DriftField, Hamiltonian, ProblemInstance,
                    gaussian_density, point_mass_density, uniform_density, validate)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# strict config parsing

_SCHEMA = {
    "grid": {"x_max": float, "n": int},
    "kernel": {"sigma": float, "density_scale": str, "tempering": float},
    "drift": {"kind": str, "alpha": float, "cubic": float},
    "hamiltonian": {"kind": str, "c_H": float},
    "coupling": {"strength": float, "width": float, "anchor": float},
    "data": {"m0": str, "m0_b": str, "uT": str},
    "time": {"T": float, "dt": float},
    "weights": {"k": float},
    "experiment": {"mode": str, "sweep_T": str, "R_list": str, "seed": int},
    "fixed_point": {"theta": float, "max_iters": int, "tol": float},
    "output": {"directory": str},
}

_MODES = ("mfg", "ergodic", "turnpike", "fp-decay", "hjb-lipschitz", "duhamel", "fp-forced")

_DEFAULTS = {
    ("grid", "x_max"): 5.0, ("grid", "n"): 401,
    ("kernel", "sigma"): 1.5, ("kernel", "density_scale"): "fractional",
    ("kernel", "tempering"): 0.0,
    ("drift", "kind"): "ou", ("drift", "alpha"): 1.0, ("drift", "cubic"): 0.5,
    ("hamiltonian", "kind"): "kinetic", ("hamiltonian", "c_H"): 1.0,
    ("coupling", "strength"): 1.0, ("coupling", "width"): 1.0,
    ("coupling", "anchor"): 0.5,
    ("data", "m0"): "gaussian:-1,0.8", ("data", "m0_b"): "gaussian:1,0.8",
    ("data", "uT"): "tanh:0.3",
    ("time", "T"): 5.0, ("time", "dt"): 0.0,  # 0 = auto (power of two)
    ("weights", "k"): 0.6,
    ("experiment", "mode"): "turnpike", ("experiment", "sweep_T"): "",
    ("experiment", "R_list"): "", ("experiment", "seed"): 0,
    ("fixed_point", "theta"): 0.5, ("fixed_point", "max_iters"): 100,
    ("fixed_point", "tol"): 1e-7,
    ("output", "directory"): "runs",
}


def parse_config(text: str) -> dict:
    values = dict(_DEFAULTS)
    section = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{section}]")
        seen.add((section, key))
        typ = _SCHEMA[section][key]
        try:
            values[(section, key)] = typ(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: cannot read {key} = {val!r}: {exc}") from None
    mode = values[("experiment", "mode")]
    if mode not in _MODES:
        raise ConfigError(f"unknown experiment mode {mode!r}; pick one of {_MODES}")
    return values


def config_hash(values: dict) -> str:
    canon = "\n".join(f"{s}.{k}={values[(s, k)]!r}" for s, k in sorted(values))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# instance construction


def _parse_density(grid, spec: str):
    kind, _, args = spec.partition(":")
    if kind == "gaussian":
        center, std = (float(a) for a in args.split(","))
        return gaussian_density(grid, center, std)
    if kind == "uniform":
        return uniform_density(grid)
    if kind == "point":
        return point_mass_density(grid, int(args))
    raise ConfigError(f"unknown density spec {spec!r}")


def _parse_terminal(grid, spec: str):
    kind, _, args = spec.partition(":")
    if kind == "zero":
        return np.zeros(grid.n)
    if kind == "tanh":
        return float(args) * np.tanh(grid.nodes)
    if kind == "holder":
        scale = float(args) if args else 1.0
        return scale * np.sqrt(np.abs(np.sin(grid.nodes)))
    raise ConfigError(f"unknown terminal datum spec {spec!r}")


def build_instance(values: dict, T: float | None = None) -> ProblemInstance:
    grid = make_grid(values[("grid", "x_max")], values[("grid", "n")])
    sigma = values[("kernel", "sigma")]
    scale_spec = values[("kernel", "density_scale")]
    if scale_spec == "fractional":
        scale = fractional_scale(sigma)
    elif "," in scale_spec:
        left, right = (float(s) for s in scale_spec.split(","))
        scale = (left, right)
    else:
        scale = float(scale_spec)
    kernel = LevyKernel(sigma=sigma, density_scale=scale,
                        tempering=values[("kernel", "tempering")],
                        z_cut=4.0 * grid.x_max)

    kind = values[("drift", "kind")]
    if kind == "ou":
        drift = DriftField.ou(grid, values[("drift", "alpha")])
    elif kind == "cubic_saturated":
        drift = DriftField.cubic_saturated(grid, values[("drift", "alpha")],
                                           values[("drift", "cubic")])
    else:
        raise ConfigError(f"unknown drift kind {kind!r}")

    if values[("hamiltonian", "kind")] != "kinetic":
        raise ConfigError("only the kinetic Hamiltonian is configurable from file")
    ham = Hamiltonian.kinetic(grid, values[("hamiltonian", "c_H")])

    x = grid.nodes
    f0 = values[("coupling", "anchor")] * (x - 1.0) ** 2 / (1.0 + (x - 1.0) ** 2)
    coupling = Coupling(grid, strength=values[("coupling", "strength")],
                        width=values[("coupling", "width")], f0=f0)

    T = values[("time", "T")] if T is None else T
    dt = values[("time", "dt")]
    if dt <= 0:
        bound = grid.h / (ham.L_H + drift.max_abs())
        dt = float(2.0 ** np.floor(np.log2(bound)))
    m0 = _parse_density(grid, values[("data", "m0")])
    uT = _parse_terminal(grid, values[("data", "uT")])
    return ProblemInstance(grid, kernel, drift, ham, coupling, m0, uT,
                           T=T, dt=dt, k=values[("weights", "k")],
                           R=grid.x_max / 2.0)


# ---------------------------------------------------------------------------
# serialization helpers


def fmt(x) -> str:
    return format(float(x), ".17g")


def _json_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            return "null"
        return fmt(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    if isinstance(v, dict):
        items = ", ".join(f'{_json_value(str(k))}: {_json_value(x)}' for k, x in v.items())
        return "{" + items + "}"
    raise TypeError(f"cannot serialize {type(v)}")


def write_json(path: Path, payload: dict):
    path.write_text(_json_value(payload) + "\n")


def write_series(path: Path, times, tv, osc, grad, mass, moment):
    lines = ["t,tv_k,osc_k,grad_linf_k,mass,moment_k"]
    for row in zip(times, tv, osc, grad, mass, moment):
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _summary(omega_left=None, omega_right=None, plateau=None, M=None,
             lambda_=None, residual_hjb=None, residual_fp=None, iterations=None) -> dict:
    return {"omega_left": omega_left, "omega_right": omega_right,
            "plateau": plateau, "M": M, "lambda": lambda_,
            "residual_hjb": residual_hjb, "residual_fp": residual_fp,
            "iterations": iterations}


# ---------------------------------------------------------------------------
# experiment drivers; each returns (summary dict, metrics dict)


def _fp_cfg(values) -> FixedPointConfig:
    return FixedPointConfig(theta=values[("fixed_point", "theta")],
                            max_iters=values[("fixed_point", "max_iters")],
                            tol=values[("fixed_point", "tol")])


def _run_turnpike(values, outdir: Path, with_fits: bool):
    inst = build_instance(values)
    erg = solve_ergodic_mfg(inst)
    sol = solve_mfg(inst, _fp_cfg(values))
    rep = turnpike_report(inst, sol, erg)
    g = inst.grid
    stride_idx = np.searchsorted(inst.times, rep.times)
    mass = sol.fp.masses[stride_idx]
    moment = sol.fp.moments_k[stride_idx]
    write_series(outdir / "series.csv", rep.times, rep.tv_series, rep.osc_series,
                 rep.grad_series, mass, moment)
    metrics = {"boundary_mass": rep.boundary_mass,
               "picard_converged": sol.converged,
               "final_residual": sol.final_residual,
               "moment_2k": erg.moment_2k,
               "moment_2k_boundary_share": erg.moment_2k_boundary_share}
    if with_fits:
        for name in ("tv", "osc", "grad"):
            left, right = rep.fits[name]
            metrics[f"omega_left_{name}"] = left.rate
            metrics[f"omega_right_{name}"] = right.rate
            metrics[f"r2_left_{name}"] = left.r_squared
            metrics[f"r2_right_{name}"] = right.r_squared
            metrics[f"plateau_{name}"] = rep.plateau[name]
        summary = _summary(omega_left=rep.omega_left, omega_right=rep.omega_right,
                           plateau=rep.plateau_main, M=rep.envelope_M,
                           lambda_=erg.lambda_, residual_hjb=erg.residual_hjb,
                           residual_fp=erg.residual_fp, iterations=sol.iterations)
    else:
        summary = _summary(lambda_=erg.lambda_, residual_hjb=erg.residual_hjb,
                           residual_fp=erg.residual_fp, iterations=sol.iterations)
    return summary, metrics


def _run_ergodic(values, outdir: Path):
    inst = build_instance(values)
    erg = solve_ergodic_mfg(inst)
    g = inst.grid
    write_series(outdir / "series.csv", [0.0], [0.0], [0.0], [0.0],
                 [g.measure_sum(erg.m_bar)], [g.measure_sum(erg.m_bar, g.weight(inst.k))])
    prof = ["x,u_bar,m_bar"]
    for i in range(g.n):
        prof.append(f"{fmt(g.nodes[i])},{fmt(erg.u_bar[i])},{fmt(erg.m_bar[i])}")
    (outdir / "profiles.csv").write_text("\n".join(prof) + "\n")
    summary = _summary(lambda_=erg.lambda_, residual_hjb=erg.residual_hjb,
                       residual_fp=erg.residual_fp, iterations=erg.iterations)
    return summary, {"moment_2k": erg.moment_2k,
                     "moment_2k_boundary_share": erg.moment_2k_boundary_share}


def _run_fp_decay(values, outdir: Path):
    inst = build_instance(values)
    g = inst.grid
    m0a = _parse_density(g, values[("data", "m0")])
    m0b = _parse_density(g, values[("data", "m0_b")])
    R_current = values.get(("experiment", "R_current"))
    drift = inst.drift
    if R_current is not None:
        from .model import truncate_drift
        drift = truncate_drift(g, inst.drift, float(R_current))
    sol_a = solve_forward(inst, drift.values, m0=m0a, drift=drift)
    sol_b = solve_forward(inst, drift.values, m0=m0b, drift=drift)
    wk = g.weight(inst.k)
    gap = g.h * (np.abs(sol_a.m - sol_b.m) * wk[None, :]).sum(axis=1)
    from .fitting import fit_exponential
    fit = fit_exponential(inst.times, gap, (0.5, inst.T - 0.5))
    write_series(outdir / "series.csv", inst.times, gap, np.zeros_like(gap),
                 np.zeros_like(gap), sol_a.masses, sol_a.moments_k)
    if fit.floored:
        print("decayed to floor (rate is a lower bound)")
    summary = _summary(omega_left=fit.rate, M=fit.amplitude, iterations=0)
    metrics = {"floored": fit.floored, "r_squared": fit.r_squared,
               "moment_growth": float(sol_a.moments_k.max() / sol_a.moments_k[0])}
    if R_current is not None:
        metrics["truncation_radius"] = float(R_current)
    return summary, metrics


def _run_hjb_lipschitz(values, outdir: Path):
    inst = build_instance(values)
    sol = solve_backward(inst, inst.coupling.f0)
    semis = np.array([lipschitz_seminorm(sol, inst.grid, t) for t in inst.times])
    zeros = np.zeros_like(semis)
    write_series(outdir / "series.csv", inst.times, zeros, zeros, semis,
                 np.ones_like(semis), zeros)
    summary = _summary(M=float(semis.max()), iterations=0)
    return summary, {"sup_lipschitz": float(semis.max())}


def _run_duhamel(values, outdir: Path):
    inst = build_instance(values)
    g = inst.grid
    v_T = _parse_terminal(g, values[("data", "uT")])
    f_row = inst.coupling.f0 + 0.3 * np.sin(2.0 * g.nodes)
    rep = duhamel_check(inst, inst.drift.values, v_T, f_row)
    fit = linear_decay_check(inst, inst.drift.values, v_T)
    zeros = np.zeros(1 + inst.n_steps)
    # series: oscillation of the sourced run is recomputed compactly here
    from .diagnostics import solve_linear_backward, _series_stride
    V = solve_linear_backward(inst, inst.drift.values, v_T,
                              source_rows=np.broadcast_to(f_row, (inst.n_steps + 1, g.n)))
    stride = _series_stride(inst.n_steps)
    idx = np.arange(0, inst.n_steps + 1, stride)
    osc = np.array([osc_k(g, V[i], inst.k) for i in idx])
    grad = np.array([sup_weighted(g, g.gradient(V[i]), inst.k) for i in idx])
    z = np.zeros_like(osc)
    write_series(outdir / "series.csv", inst.times[idx], z, osc, grad,
                 np.ones_like(osc), z)
    summary = _summary(omega_left=rep.omega, M=rep.K, iterations=0)
    return summary, {"max_ratio_osc": rep.max_ratio_osc,
                     "max_ratio_grad": rep.max_ratio_grad,
                     "terminal_slope": rep.terminal_slope,
                     "free_fit_rate": fit.rate, "free_fit_r2": fit.r_squared}


def _run_fp_forced(values, outdir: Path):
    inst = build_instance(values)
    g = inst.grid
    m0a = _parse_density(g, values[("data", "m0")])
    m0b = _parse_density(g, values[("data", "m0_b")])
    mu0 = m0a - m0b
    from .fokker_planck import solve_stationary
    m_bar = solve_stationary(inst, inst.drift.values)
    Phi = 0.2 * np.tanh(g.nodes)
    rep = nonhomogeneous_fp_check(inst, inst.drift.values, mu0, Phi, m_bar)
    z = np.zeros_like(rep.tv_series)
    write_series(outdir / "series.csv", rep.times, rep.tv_series, z, z,
                 np.ones_like(z), z)
    summary = _summary(omega_left=rep.omega, M=rep.K_decay, iterations=0)
    return summary, {"K_forced": rep.K_forced, "max_ratio": rep.max_ratio,
                     "gamma_prime": rep.gamma_prime,
                     "gamma_integral": rep.gamma_integral}


def run_single(values: dict, out_root: Path, T: float | None = None) -> Path:
    """Execute one experiment; returns the record directory."""
    if T is not None:
        values = dict(values)
        values[("time", "T")] = T
    mode = values[("experiment", "mode")]
    h = config_hash(values)
    outdir = out_root / f"{mode}-{h}"
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    try:
        if mode == "turnpike":
            summary, metrics = _run_turnpike(values, outdir, with_fits=True)
        elif mode == "mfg":
            summary, metrics = _run_turnpike(values, outdir, with_fits=False)
        elif mode == "ergodic":
            summary, metrics = _run_ergodic(values, outdir)
        elif mode == "fp-decay":
            summary, metrics = _run_fp_decay(values, outdir)
        elif mode == "hjb-lipschitz":
            summary, metrics = _run_hjb_lipschitz(values, outdir)
        elif mode == "duhamel":
            summary, metrics = _run_duhamel(values, outdir)
        elif mode == "fp-forced":
            summary, metrics = _run_fp_forced(values, outdir)
        else:  # unreachable after parse
            raise ConfigError(f"unhandled mode {mode}")
    except Exception:
        shutil.rmtree(outdir, ignore_errors=True)
        raise
    write_json(outdir / "summary.json", summary)
    record = {"config_hash": h, "mode": mode,
              "config": {f"{s}.{k}": values[(s, k)] for s, k in sorted(values)},
              "versions": {"fracmfg": __version__, "numpy": np.__version__},
              "wall_clock_s": time.time() - t0,
              "outputs": sorted(p.name for p in outdir.iterdir()),
              "metrics": metrics}
    write_json(outdir / "record.json", record)
    return outdir


def run(config_path: str, out: str | None = None, threads: int = 1) -> list[Path]:
    text = Path(config_path).read_text()
    values = parse_config(text)
    out_root = Path(out) if out else Path(values[("output", "directory")])
    sweep = values[("experiment", "sweep_T")]
    r_list = values[("experiment", "R_list")]
    if sweep:
        Ts = [float(s) for s in sweep.split(",")]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                dirs = list(ex.map(lambda T: run_single(values, out_root, T=T), Ts))
        else:
            dirs = [run_single(values, out_root, T=T) for T in Ts]
        _print_sweep_table(dirs)
        return dirs
    if r_list:
        if values[("experiment", "mode")] != "fp-decay":
            raise ConfigError("R_list sweeps are supported in fp-decay mode")
        variants = []
        for R in (float(s) for s in r_list.split(",")):
            v = dict(values)
            v[("experiment", "R_current")] = R
            variants.append(v)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                dirs = list(ex.map(lambda v: run_single(v, out_root), variants))
        else:
            dirs = [run_single(v, out_root) for v in variants]
        _print_sweep_table(dirs)
        return dirs
    d = run_single(values, out_root)
    _print_summary(d)
    return [d]


def _load_json(path: Path) -> dict:
    import json
    return json.loads(path.read_text())


def _print_summary(d: Path):
    s = _load_json(d / "summary.json")
    print(f"record: {d}")
    for k, v in s.items():
        print(f"  {k} = {v}")


def _print_sweep_table(dirs: list[Path]):
    print("sweep results:")
    print(f"{'record':<40}{'omega_left':>12}{'omega_right':>12}{'plateau':>12}")
    for d in dirs:
        s = _load_json(d / "summary.json")
        def _f(x):
            return f"{x:.4g}" if isinstance(x, (int, float)) and x is not None else "-"
        print(f"{d.name:<40}{_f(s['omega_left']):>12}{_f(s['omega_right']):>12}"
              f"{_f(s['plateau']):>12}")


# ---------------------------------------------------------------------------
# compare


_INCOMPARABLE_GUARDS = ("kernel.sigma", "weights.k")


def compare(dir_a: str, dir_b: str, tol: float = 0.1) -> int:
    """Metric-by-metric relative differences; nonzero exit when over tol.

    Records from different operator orders or weight exponents measure
    different quantities: the comparison refuses and lists those fields.
    """
    a, b = Path(dir_a), Path(dir_b)
    ra, rb = _load_json(a / "record.json"), _load_json(b / "record.json")
    if ra["mode"] != rb["mode"]:
        print(f"mode mismatch: {ra['mode']} vs {rb['mode']}")
        return 2
    mismatched = [key for key in _INCOMPARABLE_GUARDS
                  if ra.get("config", {}).get(key) != rb.get("config", {}).get(key)]
    if mismatched:
        print("refusing rate comparison; incomparable fields:")
        for key in mismatched:
            print(f"  {key}: {ra['config'][key]} vs {rb['config'][key]}")
        return 2
    sa, sb = _load_json(a / "summary.json"), _load_json(b / "summary.json")
    worst = 0.0
    lines = []
    for key in sa:
        va, vb = sa.get(key), sb.get(key)
        if va is None and vb is None:
            continue
        if va is None or vb is None:
            lines.append(f"  {key}: present on one side only")
            worst = np.inf
            continue
        rel = abs(va - vb) / max(abs(va), abs(vb), 1e-300)
        lines.append(f"  {key}: {va:.6g} vs {vb:.6g}  rel {rel:.3g}")
        worst = max(worst, rel)
    print(f"compare {a.name} vs {b.name} (tol {tol}):")
    for line in lines:
        print(line)
    if worst > tol:
        print("DIFFER")
        return 1
    print("within tolerance")
    return 0


def validate_config(config_path: str) -> int:
    values = parse_config(Path(config_path).read_text())
    inst = build_instance(values)
    report = validate(inst)
    for line in report.summary_lines():
        print(line)
    return 0 if report.all_passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fracmfg",
                                     description="jump-diffusion mean field game workbench")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_cmp = sub.add_parser("compare", help="diff two record directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--tol", type=float, default=0.1)
    p_val = sub.add_parser("validate", help="assumption checks only")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    try:
        if args.cmd == "run":
            run(args.config, out=args.out, threads=args.threads)
            return 0
        if args.cmd == "compare":
            return compare(args.dir_a, args.dir_b, tol=args.tol)
        if args.cmd == "validate":
            return validate_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
