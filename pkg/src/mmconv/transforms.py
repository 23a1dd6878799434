"""DST-I and half-shifted FFT pairs on :class:`~mmconv.grid.Grid` fields.

Sine coefficients:  ``c_p = (2/M)**d sum_j f_j prod sin(pi j_i p_i / M)`` with
``j`` counted from the lower boundary (``j = k + M/2``), ``p = 1..M-1``.

Half-frequency spectrum: ``F_p = h**d sum_k f_k exp(-i pi (2p+1) . k / M)``
for ``p = -M/2..M/2-1``, i.e. samples of the continuous Fourier transform at
``nu = pi (2p+1) / (2 S L)``.  Its inverse carries the ``(2 S L)**-d`` factor.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .grid import FieldSamples, GridError

IMAG_TOL = 1e-10


def _m(f):
    return f.grid.M if f.expanded else f.grid.N


def _extent(grid, expanded):
    return grid.SL if expanded else grid.L


def dst1_forward(f):
    if f.layout != "sp":
        raise GridError("the sine transform needs the sp layout")
    return sfft.dstn(f.values, type=1) / _m(f) ** f.grid.d


def dst1_synthesize(coeffs, grid, expanded=False):
    """Inverse of :func:`dst1_forward`: ``f_j = sum_p c_p prod sin(...)``."""
    vals = sfft.dstn(np.asarray(coeffs, dtype=float), type=1) * 0.5**grid.d
    return FieldSamples(grid, "sp", vals, expanded)


def sine_wavenumbers(grid, expanded=False):
    """``mu_p = pi p / (2 L')`` for p = 1..M-1 along one axis."""
    m = grid.M if expanded else grid.N
    return math.pi * np.arange(1, m) / (2.0 * _extent(grid, expanded))


def half_wavenumbers(grid, expanded=False, centered=True):
    """``nu_p = pi (2p + 1) / (2 L')``.  ``centered`` orders p = -M/2..M/2-1;
    otherwise the FFT bin order is used (p congruent to the bin index mod M)."""
    m = grid.M if expanded else grid.N
    p = np.arange(-m // 2, m // 2)
    if not centered:
        p = np.fft.ifftshift(p)
    return math.pi * (2 * p + 1) / (2.0 * _extent(grid, expanded))


@dataclass(frozen=True)
class SpectrumHalf:
    grid: object
    values: np.ndarray = field(repr=False)
    expanded: bool = False

    def wavenumbers(self):
        return half_wavenumbers(self.grid, self.expanded)


def _phase(grid, expanded, sign):
    m = grid.M if expanded else grid.N
    k = grid.indices("fs", expanded)
    return np.exp(sign * 1j * math.pi * k / m)


def _apply_axis_factor(a, vec):
    d = a.ndim
    for ax in range(d):
        shape = [1] * d
        shape[ax] = -1
        a *= vec.reshape(shape)
    return a


def fft_half_forward(f):
    if f.layout != "fs":
        raise GridError("the half-shifted FFT needs the fs layout")
    g = f.grid
    a = _apply_axis_factor(f.values.astype(complex), _phase(g, f.expanded, -1.0))
    spec = np.fft.fftshift(sfft.fftn(np.fft.ifftshift(a), overwrite_x=True))
    return SpectrumHalf(g, spec * g.h**g.d, f.expanded)


def fft_half_inverse(spec, imag_tol=IMAG_TOL):
    """Back to real samples; raises if the imaginary residue is not negligible."""
    g = spec.grid
    m = g.M if spec.expanded else g.N
    a = np.fft.fftshift(sfft.ifftn(np.fft.ifftshift(spec.values), overwrite_x=True))
    a = _apply_axis_factor(a, _phase(g, spec.expanded, 1.0))
    a *= (m / (2.0 * _extent(g, spec.expanded))) ** g.d
    scale = np.max(np.abs(a.real)) if a.size else 0.0
    resid = np.max(np.abs(a.imag)) if a.size else 0.0
    if resid > imag_tol * max(scale, np.finfo(float).tiny):
        raise GridError(f"inverse transform left an imaginary residue {resid:.3e} (scale {scale:.3e})")
    return FieldSamples(g, "fs", a.real, spec.expanded)


def half_shift_multiply(values, multiplier):
    """Apply a half-frequency Fourier multiplier to fs samples without
    re-centering the spectrum.

    ``multiplier`` is given in FFT bin order (see ``half_wavenumbers(centered=False)``).
    Works by phase-modulating the samples by ``exp(-i pi k/M)`` and using plain
    FFTs; the ``(-1)**q`` factors introduced by storing ``k`` from ``-M/2``
    cancel between the forward and inverse transforms.
    """
    m = values.shape[0]
    k = np.arange(-m // 2, m // 2)
    down = np.exp(-1j * math.pi * k / m)
    a = _apply_axis_factor(values.astype(complex), down)
    a = sfft.fftn(a, overwrite_x=True)
    a *= multiplier
    a = sfft.ifftn(a, overwrite_x=True)
    a = _apply_axis_factor(a, down.conj())
    return a
