"""Precomputed convolution tensors: one zero-padded FFT convolution per solve.

FS tensor on the offset window ``n in [-N, N-1]^d``::

    T_n = (S N)**-d sum_p U-hat(nu_{p+1/2}) exp(i pi (2p+1).n / (S N))

The sum is antiperiodic with period S N in each index, so
``T_n = prod_i exp(i pi n_i / M) * ifftn(U-hat)[n mod M]`` with ``M = S N``;
this covers S = 1 (where the window wraps) and S > 1 alike.

The SP tensor uses ``1 / L-hat`` at the same frequencies (the even-even term
of the sine expansion).  ``exact=True`` instead builds the full sine-series
kernel and applies it as a sum of Toeplitz and Hankel convolutions, which
reproduces the SP solve on the expanded grid.

Cache files (``$MMCONV_CACHE_DIR``), little-endian::

    4s magic b"MMTC" | I version (1) | I d | I N | I S | d L
    | 4s method (b"fs\\0\\0" or b"sp\\0\\0") | I len(key) | key (utf-8)
    | float64 values, C order, shape (2N,)*d
"""

import math
import os
import struct
import tempfile
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from . import moments as mm
from .grid import FieldSamples, GridError, to_layout
from .kernels import KernelError
from .solvers import (_gamma_for, _k2_grid, _phi1, _rebase, _Timer, assemble,
                      residual_moments, fs_multiplier)
from .transforms import half_wavenumbers, sine_wavenumbers

IMAG_TOL = 1e-12
CACHE_ENV = "MMCONV_CACHE_DIR"
_HEAD = struct.Struct("<4sIIIId4sI")
_MAGIC = b"MMTC"


@dataclass
class PrecomputedTensor:
    kernel_key: str
    d: int
    L: float
    N: int
    S: int
    method: str
    values: np.ndarray = field(repr=False)
    build_time: float = 0.0
    exact: bool = False
    _spectrum: np.ndarray = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def window(self):
        """T on offsets [-N, N-1]^d, centered ordering (index 0 is offset -N)."""
        return self.values

    def matches(self, kernel, grid, method):
        return (self.kernel_key == kernel.key and self.d == grid.d and self.L == grid.L
                and self.N == grid.N and self.S == grid.S and self.method == method)

    def spectrum(self):
        """rfftn of the circular embedding, built once and shared (read-only)."""
        if self._spectrum is None:
            with self._lock:
                if self._spectrum is None:
                    circ = np.fft.ifftshift(self.values) if not self.exact else None
                    spec = sfft.rfftn(circ)
                    spec.setflags(write=False)
                    self._spectrum = spec
        return self._spectrum


def _windowed(inv, M, N, d):
    """Periodic lookup of an FFT-ordered (M,)*d array at offsets [-N, N-1]."""
    n = np.arange(-N, N)
    idx = np.mod(n, M)
    phase = np.exp(1j * math.pi * n / M)
    out = inv[np.ix_(*([idx] * d))]
    for ax in range(d):
        shape = [1] * d
        shape[ax] = -1
        out = out * phase.reshape(shape)
    return out


def _tensor_from_symbol(symbol, grid):
    M, N, d = grid.M, grid.N, grid.d
    inv = sfft.ifftn(symbol.astype(complex), overwrite_x=True)
    T = _windowed(inv, M, N, d)
    scale = np.max(np.abs(T.real))
    resid = np.max(np.abs(T.imag))
    if resid > IMAG_TOL * scale:
        raise GridError(f"tensor has an imaginary residue {resid:.2e} (scale {scale:.2e})")
    return np.ascontiguousarray(T.real)


def build_tensor_fs(kernel, grid):
    t0 = time.perf_counter()
    vals = _tensor_from_symbol(fs_multiplier(kernel, grid), grid)
    return PrecomputedTensor(kernel.key, grid.d, grid.L, grid.N, grid.S, "fs", vals,
                             time.perf_counter() - t0)


def build_tensor_sp(kernel, grid, exact=False):
    if not kernel.has_op_symbol:
        raise KernelError(f"{kernel.key} has no operator symbol")
    t0 = time.perf_counter()
    if exact:
        vals = _sine_kernel(kernel, grid)
    else:
        nu = half_wavenumbers(grid, expanded=True, centered=False)
        vals = _tensor_from_symbol(1.0 / kernel.op_symbol_mu2(_k2_grid([nu] * grid.d)), grid)
    return PrecomputedTensor(kernel.key, grid.d, grid.L, grid.N, grid.S, "sp", vals,
                             time.perf_counter() - t0, exact=exact)


def _sine_kernel(kernel, grid):
    """``K_n = M**-d sum_{p=1}^{M-1} prod cos(pi p_i n_i / M) / L-hat(mu_p)`` for
    n_i in [0, M], via DCT-I.  K is even and 2M-periodic in each index."""
    M, d = grid.M, grid.d
    mu = np.concatenate([[0.0], sine_wavenumbers(grid, expanded=True), [0.0]])
    inv = np.zeros((M + 1,) * d)
    inner = (slice(1, M),) * d
    inv[inner] = 1.0 / kernel.op_symbol_mu2(_k2_grid([mu[1:M]] * d))
    # dct-I: y_k = x_0 + (-1)^k x_M + 2 sum x_n cos(pi k n / M); x_0 = x_M = 0
    return sfft.dctn(inv, type=1) / (2.0 * M) ** d


def apply_tensor(T, rho2):
    """``phi_j = sum_j' T_{j - j'} rho2_j'`` on the base fs grid via (2N)**d FFTs."""
    g = rho2.grid
    if T.exact:
        raise GridError("exact SP tensors are applied by solve_tensor")
    if rho2.layout != "fs" or rho2.expanded:
        raise GridError("apply_tensor expects a base-grid fs field")
    if (T.d, T.L, T.N) != (g.d, g.L, g.N):
        raise GridError("tensor and density live on different grids")
    N, d = g.N, g.d
    spec = T.spectrum()
    pad = np.zeros((2 * N,) * d)
    pad[(slice(0, N),) * d] = rho2.values
    out = sfft.irfftn(sfft.rfftn(pad) * spec, s=pad.shape)
    return FieldSamples(g, "fs", out[(slice(0, N),) * d])


def _fold(n, M):
    """Map offsets to [0, M] using evenness and 2M-periodicity."""
    n = np.mod(n, 2 * M)
    return np.where(n > M, 2 * M - n, n)


def _apply_sine_kernel(K, rho2_sp, M):
    """Exact sine-series solve restricted to the base grid:
    ``sum_{s in {T,H}^d} (-1)**#H sum_j' K(n_s) rho_j'`` with ``n = j - j'``
    (Toeplitz axes) or ``n = j + j' + M`` (Hankel axes)."""
    vals = rho2_sp.values
    d = vals.ndim
    n_pts = vals.shape[0]  # N - 1
    offs_t = np.arange(-(n_pts - 1), n_pts)
    size = 2 * n_pts
    total = np.zeros(vals.shape)
    for code in range(2**d):
        hank = [(code >> ax) & 1 for ax in range(d)]
        src = vals
        idx = []
        for ax in range(d):
            if hank[ax]:
                src = np.flip(src, axis=ax)
                idx.append(_fold(offs_t + M, M))
            else:
                idx.append(_fold(offs_t, M))
        win = K[np.ix_(*idx)]
        # circular embedding: offset o stored at o mod size
        circ = np.zeros((size,) * d)
        pos = np.mod(offs_t, size)
        circ[np.ix_(*([pos] * d))] = win
        pad = np.zeros((size,) * d)
        pad[(slice(0, n_pts),) * d] = src
        conv = sfft.irfftn(sfft.rfftn(pad) * sfft.rfftn(circ), s=pad.shape)
        sign = -1.0 if sum(hank) % 2 else 1.0
        total += sign * conv[(slice(0, n_pts),) * d]
    return total


# disk cache -------------------------------------------------------------

def _cache_path(kernel, grid, method):
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    safe = "".join(c if c.isalnum() or c in "-_.=" else "_" for c in kernel.key)
    name = f"{method}_{safe}_d{grid.d}_L{grid.L:g}_N{grid.N}_S{grid.S}.mmt"
    return os.path.join(root, name)


def save_tensor(path, T):
    key = T.kernel_key.encode()
    head = _HEAD.pack(_MAGIC, 1, T.d, T.N, T.S, T.L, T.method.encode().ljust(4, b"\0"), len(key))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(head)
            fh.write(key)
            fh.write(np.ascontiguousarray(T.values, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_tensor(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEAD.size:
        raise GridError(f"{path}: truncated tensor file")
    magic, version, d, N, S, L, method, klen = _HEAD.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise GridError(f"{path}: not a tensor file")
    key = raw[_HEAD.size:_HEAD.size + klen].decode()
    data = np.frombuffer(raw, dtype="<f8", offset=_HEAD.size + klen)
    shape = (2 * N,) * d
    if data.size != int(np.prod(shape)):
        raise GridError(f"{path}: wrong payload size")
    return PrecomputedTensor(key, d, L, N, S, method.rstrip(b"\0").decode(),
                             data.reshape(shape).copy())


def get_tensor(kernel, grid, method):
    """Build or fetch from the disk cache."""
    path = _cache_path(kernel, grid, method)
    if path and os.path.exists(path):
        try:
            T = load_tensor(path)
            if T.matches(kernel, grid, method):
                return T
        except (OSError, GridError):
            pass
    T = build_tensor_fs(kernel, grid) if method == "fs" else build_tensor_sp(kernel, grid)
    if path:
        save_tensor(path, T)
    return T


def solve_tensor(req):
    grid = req.grid
    fam = req.method.family
    tm = _Timer()
    T = req.tensor
    if T is None:
        if fam == "sp" and req.exact_sp_tensor:
            T = build_tensor_sp(req.kernel, grid, exact=True)
        else:
            T = get_tensor(req.kernel, grid, fam)
    elif not T.matches(req.kernel, grid, fam):
        raise GridError("supplied tensor does not match the request")
    tm.lap("precompute")
    rho = _rebase(req.density, grid)
    gset = _gamma_for(req, rho)
    tm.lap("moments")
    if T.exact:
        vals = to_layout(rho, "sp").values.copy()
        if any(v != 0.0 for v in gset.gamma.values()):
            vals -= mm.rho1_on_grid(gset, grid, "sp")
        rho2 = FieldSamples(grid, "sp", vals)
        tm.lap("rho2")
        phi2 = FieldSamples(grid, "sp", _apply_sine_kernel(T.values, rho2, grid.M))
        tm.lap("execute")
        layout = "sp"
    else:
        vals = to_layout(rho, "fs").values.copy()
        if any(v != 0.0 for v in gset.gamma.values()):
            vals -= mm.rho1_on_grid(gset, grid, "fs")
        rho2 = FieldSamples(grid, "fs", vals)
        tm.lap("rho2")
        phi2 = apply_tensor(T, rho2)
        tm.lap("execute")
        layout = fam
        phi2 = to_layout(phi2, layout)
    phi1 = _phi1(gset, req.kernel, grid, layout)
    tm.lap("phi1")
    sol = assemble(phi1, phi2, timings=tm.times)
    sol.gamma = gset
    sol.diagnostics["residual_moments"] = residual_moments(rho2, req.order, gset.center)
    sol.diagnostics["tensor"] = T
    return sol
