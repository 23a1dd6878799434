"""SP-MM and FS-MM solvers, the DDI route, and assembly of phi = phi1 + phi2."""

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from . import moments as mm
from .grid import FieldSamples, GridError, extend, restrict, to_layout
from .kernels import DDI3D, KernelError, Poisson3D
from .transforms import (IMAG_TOL, dst1_forward, dst1_synthesize, half_shift_multiply,
                         half_wavenumbers, sine_wavenumbers)


class Method(str, enum.Enum):
    SP_MM = "sp-mm"
    FS_MM = "fs-mm"
    SP_TENSOR = "sp-tensor"
    FS_TENSOR = "fs-tensor"
    SP_PLAIN = "sp-plain"
    FS_PLAIN = "fs-plain"

    @property
    def family(self):
        return "sp" if self.value.startswith("sp") else "fs"

    @property
    def plain(self):
        return self.value.endswith("plain")

    @property
    def tensor(self):
        return self.value.endswith("tensor")


def parse_method(text):
    try:
        return Method(str(text).strip().lower().replace("_", "-"))
    except ValueError:
        names = ", ".join(m.value for m in Method)
        raise ValueError(f"unknown method {text!r}; choose from {names}") from None


@dataclass
class SolveRequest:
    kernel: object
    density: FieldSamples
    m: int = 0
    sigma: float = 2.0
    S: int = 1
    method: Method = Method.FS_MM
    centered: bool = False
    tensor: object = None
    exact_sp_tensor: bool = False

    def __post_init__(self):
        self.method = parse_method(self.method) if not isinstance(self.method, Method) else self.method
        if self.density.expanded:
            raise GridError("the density must be given on the base grid")
        if self.kernel.d != self.density.grid.d:
            raise KernelError(f"{self.kernel.key} is {self.kernel.d}D but the grid is {self.density.grid.d}D")
        if self.method.family == "sp" and not self.kernel.has_op_symbol and not isinstance(self.kernel, DDI3D):
            raise KernelError(f"{self.kernel.key} has no operator symbol; use an FS method")
        if not self.method.plain:
            mm._check_order(self.m)
        if self.S < 1:
            raise GridError("S must be a positive integer")

    @property
    def grid(self):
        return self.density.grid.with_S(self.S)

    @property
    def order(self):
        return None if self.method.plain else self.m


@dataclass
class Solution:
    phi: FieldSamples
    phi1: FieldSamples = None
    phi2: FieldSamples = None
    gamma: object = None
    diagnostics: dict = field(default_factory=dict)


class _Timer:
    def __init__(self):
        self.times = {}
        self._t = time.perf_counter()

    def lap(self, name):
        now = time.perf_counter()
        self.times[name] = self.times.get(name, 0.0) + now - self._t
        self._t = now


def _rebase(f, grid):
    """Same samples, grid carrying the requested S."""
    return FieldSamples(grid, f.layout, f.values, f.expanded)


def _gamma_for(req, rho):
    if req.method.plain:
        return mm.GammaSet(rho.grid.d, 0, req.sigma, {(0,) * rho.grid.d: 0.0})
    _, gset = mm.match(rho, req.m, req.sigma, centered=req.centered)
    return gset


def _rho2_expanded(rho, gset, grid, layout):
    vals = extend(to_layout(_rebase(rho, grid), layout)).values.copy()
    if any(v != 0.0 for v in gset.gamma.values()):
        vals -= mm.rho1_on_grid(gset, grid, layout, expanded=True)
    return FieldSamples(grid, layout, vals, expanded=True)


def _phi1(gset, kernel, grid, layout):
    if all(v == 0.0 for v in gset.gamma.values()):
        return FieldSamples(grid, layout, np.zeros(grid.shape(layout)))
    return FieldSamples(grid, layout, mm.phi1_on_grid(gset, kernel, grid, layout))


def _k2_grid(axes):
    d = len(axes)
    out = 0.0
    for i, a in enumerate(axes):
        shape = [1] * d
        shape[i] = -1
        out = out + (a * a).reshape(shape)
    return out


def assemble(phi1, phi2, **diagnostics):
    if phi1.grid != phi2.grid or phi1.layout != phi2.layout or phi1.expanded != phi2.expanded:
        raise GridError("phi1 and phi2 live on different grids or layouts")
    return Solution(phi1 + phi2, phi1, phi2, diagnostics=diagnostics)


def residual_moments(rho2, m, center=None):
    if m is None:
        return {}
    mom = mm.compute_moments(rho2, m, center=center, warn=False)
    return {"".join(map(str, b)): v for b, v in mom.P.items()}


def solve_sp_mm(req):
    grid = req.grid
    tm = _Timer()
    rho = _rebase(req.density, grid)
    gset = _gamma_for(req, rho)
    tm.lap("moments")
    rho2 = _rho2_expanded(rho, gset, grid, "sp")
    tm.lap("rho2")
    coeffs = dst1_forward(rho2)
    mu = sine_wavenumbers(grid, expanded=True)
    coeffs /= req.kernel.op_symbol_mu2(_k2_grid([mu] * grid.d))
    phi2 = restrict(dst1_synthesize(coeffs, grid, expanded=True))
    del coeffs
    tm.lap("transform")
    phi1 = _phi1(gset, req.kernel, grid, "sp")
    tm.lap("phi1")
    sol = assemble(phi1, phi2, timings=tm.times)
    sol.gamma = gset
    sol.diagnostics["residual_moments"] = residual_moments(rho2, req.order, gset.center)
    return sol


def fs_multiplier(kernel, grid, expanded=True):
    """``U-hat`` at the half-integer frequencies, FFT bin order."""
    nu = half_wavenumbers(grid, expanded, centered=False)
    return kernel.symbol_k2(_k2_grid([nu] * grid.d))


def _fs_convolve(rho2, mult, imag_tol=IMAG_TOL):
    out = half_shift_multiply(rho2.values, mult)
    scale = np.max(np.abs(out.real))
    resid = np.max(np.abs(out.imag))
    if resid > imag_tol * max(scale, np.finfo(float).tiny):
        raise GridError(f"imaginary residue {resid:.2e} after the half-shifted transform")
    return FieldSamples(rho2.grid, rho2.layout, out.real, rho2.expanded)


def solve_fs_mm(req):
    grid = req.grid
    tm = _Timer()
    rho = _rebase(req.density, grid)
    gset = _gamma_for(req, rho)
    tm.lap("moments")
    rho2 = _rho2_expanded(rho, gset, grid, "fs")
    tm.lap("rho2")
    phi2 = restrict(_fs_convolve(rho2, fs_multiplier(req.kernel, grid)))
    tm.lap("transform")
    phi1 = _phi1(gset, req.kernel, grid, "fs")
    tm.lap("phi1")
    sol = assemble(phi1, phi2, timings=tm.times)
    sol.gamma = gset
    sol.diagnostics["residual_moments"] = residual_moments(rho2, req.order, gset.center)
    return sol


def directional_second_derivative(rho, n, m_vec):
    """``d_n d_m rho`` by FFT differentiation on the fs grid (integer frequencies)."""
    if rho.layout != "fs":
        rho = to_layout(rho, "fs")
    g = rho.grid
    npts = rho.values.shape[0]
    k = 2.0 * math.pi * sfft.fftfreq(npts, d=g.h)
    ks = []
    for i in range(g.d):
        shape = [1] * g.d
        shape[i] = -1
        ks.append(k.reshape(shape))
    kn = sum(n[i] * ks[i] for i in range(g.d))
    km = sum(m_vec[i] * ks[i] for i in range(g.d))
    # (i k.n)(i k.m) = -(k.n)(k.m); Nyquist planes dropped (not resolved for odd orders)
    mult = np.broadcast_to(-(kn * km), (npts,) * g.d).copy()
    if npts % 2 == 0:
        for i in range(g.d):
            idx = [slice(None)] * g.d
            idx[i] = npts // 2
            mult[tuple(idx)] = 0.0
    # the base grid stores k from -N/2; the shift only changes the phase convention
    vals = sfft.ifftn(sfft.fftn(rho.values) * mult).real
    return FieldSamples(g, "fs", vals, rho.expanded)


def solve_ddi(req):
    if req.density.grid.d != 3 or not isinstance(req.kernel, DDI3D):
        raise KernelError("the DDI route needs a 3D density and a ddi3d kernel")
    ker = req.kernel
    tm = _Timer()
    rho_fs = to_layout(req.density, "fs")
    g = directional_second_derivative(rho_fs, ker.n, ker.m_vec)
    tm.lap("derivative")
    inner = SolveRequest(Poisson3D(), to_layout(g, req.density.layout), req.m, req.sigma, req.S,
                         req.method, req.centered, req.tensor, req.exact_sp_tensor)
    psol = solve(inner)
    tm.lap("poisson")
    rho_n = to_layout(req.density, psol.phi.layout)
    rho_n = FieldSamples(psol.phi.grid, rho_n.layout, rho_n.values)
    local = rho_n * (-(ker.m_vec @ ker.n))
    phi = local + psol.phi * -3.0
    sol = Solution(phi, gamma=psol.gamma,
                   diagnostics={"timings": {**tm.times, **{"poisson." + k: v for k, v in
                                                          psol.diagnostics.get("timings", {}).items()}},
                                "residual_moments": psol.diagnostics.get("residual_moments", {})})
    if psol.phi1 is not None:
        sol.phi1 = psol.phi1 * -3.0
        sol.phi2 = local + psol.phi2 * -3.0
    return sol


def solve(req):
    """Dispatch on the requested method."""
    if isinstance(req.kernel, DDI3D):
        return solve_ddi(req)
    if req.method.tensor:
        from .tensor import solve_tensor

        return solve_tensor(req)
    if req.method.family == "sp":
        return solve_sp_mm(req)
    return solve_fs_mm(req)
