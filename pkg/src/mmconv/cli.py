"""``mmconv`` command line: solve, converge, bench, gamma, yukawa-table."""

import argparse
import io
import json
import math
import statistics
import sys
import time

import numpy as np

from . import config as cfgmod
from . import moments as mm
from .grid import FieldSamples, GridError, make_grid, read_field, sample, write_field
from .kernels import DDI3D, KernelError, parse_kernel
from .oracles import BumpDensity, GaussianDensitySpec, OracleError, oracle_gaussian_potential
from .solvers import SolveRequest, parse_method, solve
from .tensor import build_tensor_fs, build_tensor_sp

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("solve", "converge", "bench", "gamma", "yukawa-table")


class NumericalFailure(RuntimeError):
    pass


class Problem:
    """Kernel, base grid, density and (when available) its oracle."""

    def __init__(self, cfg):
        self.cfg = cfg
        try:
            self.kernel = parse_kernel(cfg["kernel"])
        except KernelError as exc:
            raise cfgmod.ConfigError(str(exc)) from exc
        d = self.kernel.d
        self.d = d
        N = cfg["N"] or ("128" if d == 2 else "64")
        try:
            self.grid = make_grid(d, cfgmod.as_float(cfg["L"], "L"), cfgmod.as_int_list(N, "N")[0])
        except GridError as exc:
            raise cfgmod.ConfigError(str(exc)) from exc
        self.sigma = cfgmod.as_float(cfg["sigma"], "sigma")
        self.centered = cfgmod.as_bool(cfg["centered"], "centered")
        self.gspec = None
        dens = cfg["density"].strip()
        if dens == "gaussian":
            x0 = cfgmod.as_vec(cfg["x0"], "x0") if cfg["x0"] else (1.0, 2.0, 3.0)[:d]
            if len(x0) != d:
                raise cfgmod.ConfigError(f"x0 needs {d} components")
            self.gspec = GaussianDensitySpec(cfgmod.as_float(cfg["A"], "A"),
                                             cfgmod.as_float(cfg["s"], "s"), x0)
            self.density = sample(self.grid, "fs", self.gspec)
        elif dens == "bump":
            c = cfgmod.as_vec(cfg["bump_center"], "bump_center") if cfg["bump_center"] else (0.0,) * d
            if len(c) != d:
                raise cfgmod.ConfigError(f"bump_center needs {d} components")
            self.density = sample(self.grid, "fs", BumpDensity(c, cfgmod.as_float(cfg["bump_radius"], "bump_radius")))
        elif dens.startswith("file:"):
            try:
                f = read_field(dens[5:])
            except (OSError, GridError) as exc:
                raise cfgmod.ConfigError(f"cannot load density: {exc}") from exc
            if f.grid.with_S(1) != self.grid or f.expanded:
                raise cfgmod.ConfigError(
                    f"density file is on d={f.grid.d} L={f.grid.L} N={f.grid.N}, config asks for "
                    f"d={d} L={self.grid.L} N={self.grid.N}")
            self.density = FieldSamples(self.grid, f.layout, f.values)
        else:
            raise cfgmod.ConfigError(f"unknown density {dens!r}")

    def has_oracle(self):
        return self.gspec is not None

    def error(self, phi):
        """Relative max-norm error against the Gaussian oracle."""
        X = np.stack(np.broadcast_arrays(*phi.coords()), axis=-1)
        try:
            ref = oracle_gaussian_potential(self.kernel, self.gspec, X)
        except OracleError:
            return None
        scale = np.max(np.abs(ref))
        return float(np.max(np.abs(phi.values - ref)) / scale)

    def request(self, method, m, S, tensor=None):
        # a rejected request is a bad setting, not a numerical failure
        try:
            return SolveRequest(self.kernel, self.density, m=m, sigma=self.sigma, S=S,
                                method=method, centered=self.centered, tensor=tensor)
        except ValueError as exc:
            raise cfgmod.ConfigError(str(exc)) from exc


def _methods(cfg):
    try:
        return [parse_method(t) for t in cfg["method"].split(",") if t.strip()]
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc)) from exc


def _fmt(x):
    return "" if x is None else f"{x:.6e}"


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(cfg, header, rows):
    buf = io.StringIO()
    buf.write(f"# {cfgmod.render(cfg)}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(str(v) for v in row) + "\n")
    return buf.getvalue()


def _check_error(cfg, err):
    if cfg["max_error"] and err is not None and err > cfgmod.as_float(cfg["max_error"], "max_error"):
        raise NumericalFailure(f"error {err:.3e} exceeds max_error={cfg['max_error']}")


def fitted_slope(S_values, errors):
    """Least-squares order p in error ~ S**-p."""
    x = np.log(np.asarray(S_values, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(-np.polyfit(x, y, 1)[0])


def cmd_solve(cfg):
    prob = Problem(cfg)
    method = _methods(cfg)[0]
    m = cfgmod.as_int_list(cfg["m"], "m")[0]
    S = cfgmod.as_int_list(cfg["S"], "S")[0]
    sol = solve(prob.request(method, m, S))
    err = prob.error(sol.phi) if prob.has_oracle() else None
    out = {
        "config": cfgmod.render(cfg),
        "kernel": prob.kernel.key,
        "method": method.value,
        "m": m,
        "S": S,
        "layout": sol.phi.layout,
        "error_relmax": err,
        "residual_moments": sol.diagnostics.get("residual_moments", {}),
        "timings": sol.diagnostics.get("timings", {}),
    }
    if sol.gamma is not None:
        out["gamma"] = {"".join(map(str, a)): g for a, g in sol.gamma.gamma.items()}
    stem = cfg["output"]
    if stem:
        write_field(stem + ".field", sol.phi)
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", stem + ".json" if stem else "")
    _check_error(cfg, err)


def cmd_converge(cfg):
    prob = Problem(cfg)
    if not prob.has_oracle():
        raise cfgmod.ConfigError("converge needs a Gaussian density (closed-form oracle)")
    Ss = cfgmod.as_int_list(cfg["S"], "S")
    rows = []
    worst = 0.0
    for method in _methods(cfg):
        for m in cfgmod.as_int_list(cfg["m"], "m"):
            errs = []
            for S in Ss:
                e = prob.error(solve(prob.request(method, m, S)).phi)
                if e is None:
                    raise cfgmod.ConfigError(f"no oracle for {prob.kernel.key}")
                errs.append(e)
            slope = fitted_slope(Ss, errs) if len(Ss) > 1 else float("nan")
            for S, e in zip(Ss, errs):
                rows.append((prob.kernel.key, method.value, m, S, _fmt(e), f"{slope:.4f}"))
            worst = max(worst, max(errs))
    _emit(_csv(cfg, ["kernel", "method", "m", "S", "error", "slope"], rows),
          cfg["output"] + ".csv" if cfg["output"] else "")
    _check_error(cfg, worst)


def cmd_bench(cfg):
    prob = Problem(cfg)
    reps = max(1, cfgmod.as_int_list(cfg["repeats"], "repeats")[0])
    m = cfgmod.as_int_list(cfg["m"], "m")[0]
    rows = []
    for method in _methods(cfg):
        for S in cfgmod.as_int_list(cfg["S"], "S"):
            T = None
            pre = 0.0
            if method.tensor and not isinstance(prob.kernel, DDI3D):
                g = prob.grid.with_S(S)
                t0 = time.perf_counter()
                T = build_tensor_fs(prob.kernel, g) if method.family == "fs" else build_tensor_sp(prob.kernel, g)
                T.spectrum()
                pre = time.perf_counter() - t0
            solve(prob.request(method, m, S, T))  # warm-up
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                solve(prob.request(method, m, S, T))
                times.append(time.perf_counter() - t0)
            rows.append((prob.kernel.key, method.value, S, f"{pre:.6f}", f"{statistics.median(times):.6f}"))
    _emit(_csv(cfg, ["kernel", "method", "S", "precompute_s", "execute_s"], rows),
          cfg["output"] + ".csv" if cfg["output"] else "")


def cmd_gamma(cfg):
    prob = Problem(cfg)
    m = cfgmod.as_int_list(cfg["m"], "m")[0]
    center = mm.centroid(prob.density) if prob.centered else None
    mom = mm.compute_moments(prob.density, m, center=center)
    gset = mm.solve_gamma(mom, prob.sigma)
    rows = [("".join(map(str, a)), sum(a), f"{mom.P[a]:.16e}", f"{gset.gamma[a]:.16e}")
            for a in mm.multi_indices(prob.d, m)]
    _emit(_csv(cfg, ["alpha", "order", "P", "gamma"], rows),
          cfg["output"] + ".csv" if cfg["output"] else "")


YUKAWA_TABLE = {"L": 16.0, "N": 64, "s": math.sqrt(2.0), "lambdas": (1.0, 2.0, 3.0), "S": (1, 2, 3)}


def yukawa_table(L=16.0, N=64, lambdas=(1.0, 2.0, 3.0), Ss=(1, 2, 3), dims=(2, 3)):
    """Plain SP errors for a centered Gaussian exp(-|x|^2/4) under Yukawa kernels."""
    out = []
    for d in dims:
        gspec = GaussianDensitySpec(1.0, math.sqrt(2.0), (0.0,) * d)
        rho = sample(make_grid(d, L, N), "fs", gspec)
        for lam in lambdas:
            ker = parse_kernel(f"yukawa{d}d:lambda={lam}")
            errs = []
            for S in Ss:
                sol = solve(SolveRequest(ker, rho, S=S, method="sp-plain"))
                X = np.stack(np.broadcast_arrays(*sol.phi.coords()), axis=-1)
                ref = oracle_gaussian_potential(ker, gspec, X)
                errs.append(float(np.max(np.abs(sol.phi.values - ref)) / np.max(np.abs(ref))))
            out.append((d, lam, errs))
    return out


def cmd_yukawa_table(cfg):
    L = cfgmod.as_float(cfg["L"], "L")
    N = cfgmod.as_int_list(cfg["N"], "N")[0] if cfg["N"] else YUKAWA_TABLE["N"]
    Ss = cfgmod.as_int_list(cfg["S"], "S") if cfg["S"] != cfgmod.DEFAULTS["S"] else YUKAWA_TABLE["S"]
    table = yukawa_table(L, N, YUKAWA_TABLE["lambdas"], Ss)
    rows = [(d, f"{lam:g}", *[_fmt(e) for e in errs]) for d, lam, errs in table]
    _emit(_csv(cfg, ["d", "lambda", *[f"S={S}" for S in Ss]], rows),
          cfg["output"] + ".csv" if cfg["output"] else "")


HANDLERS = {
    "solve": cmd_solve,
    "converge": cmd_converge,
    "bench": cmd_bench,
    "gamma": cmd_gamma,
    "yukawa-table": cmd_yukawa_table,
}


def build_parser():
    p = argparse.ArgumentParser(prog="mmconv", description="Moment-matching free-space convolution solvers.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value configuration file")
    for key in cfgmod.DEFAULTS:
        p.add_argument(f"--{key}", dest=f"opt_{key}", metavar="VALUE", help=f"override config key {key}")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
    try:
        cfg = cfgmod.load(args.config, overrides)
    except cfgmod.ConfigError as exc:
        print(f"mmconv: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        HANDLERS[args.command](cfg)
    except (cfgmod.ConfigError, KernelError) as exc:
        print(f"mmconv: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, OracleError, GridError, FloatingPointError) as exc:
        print(f"mmconv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
