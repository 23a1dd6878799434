"""Reference potentials for testing the solvers.

Two independent routes:

* closed forms for Gaussian densities, ``A (2 pi s**2)**(d/2) W_s(|x - x0|)``,
  plus the separately derived Yukawa expressions (erfc in 3D, a K0 I0
  radial integral in 2D);
* direct adaptive quadrature of ``int U(x - y) rho(y) dy`` in polar or
  spherical coordinates centred at x, which absorbs the kernel singularity.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .kernels import DDI3D, KernelError, Yukawa2D, Yukawa3D, w_radial, yukawa3d_w_closed
from .moments import GammaSet, multi_indices, eval_phi1


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianDensitySpec:
    """``rho(x) = A exp(-|x - x0|**2 / (2 s**2))``."""

    A: float = 1.0
    s: float = math.sqrt(2.0)
    x0: tuple = (1.0, 2.0)

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("Gaussian width must be positive")

    @property
    def d(self):
        return len(self.x0)

    @property
    def mass(self):
        return self.A * (2.0 * math.pi * self.s**2) ** (self.d / 2.0)

    def __call__(self, *x):
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, self.x0))
        return self.A * np.exp(-r2 / (2.0 * self.s**2))


def default_density(d):
    """``exp(-|x - x0|**2 / 4)`` with x0 = (1, 2) or (1, 2, 3)."""
    return GaussianDensitySpec(1.0, math.sqrt(2.0), (1.0, 2.0, 3.0)[:d])


def _yukawa2d_k0i0(r, gspec, lam):
    """Potential of A exp(-|x|**2/w2) (w2 = 2 s**2) under K0(lam r)/(2 pi):
    ``A int_0^inf K0(lam u) u exp(-(r - u)**2/w2) I0e(2 r u / w2) du``."""
    w2 = 2.0 * gspec.s**2

    def f(u):
        if u == 0.0:
            return 0.0
        return special.k0(lam * u) * u * math.exp(-((r - u) ** 2) / w2) * special.i0e(2.0 * r * u / w2)

    top = r + math.sqrt(w2) * 9.0
    pts = sorted({p for p in (r, max(r - 3.0 * gspec.s, 0.0), r + 3.0 * gspec.s) if 0.0 < p < top})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, 0.0, top, epsabs=0.0, epsrel=1e-13, limit=400, points=pts or None)
    return gspec.A * val


def oracle_gaussian_potential(kernel, gspec, x, yukawa_closed=True):
    """Closed-form potential of a Gaussian density at points x (last axis d).

    ``yukawa_closed`` selects the erfc/K0-I0 forms for Yukawa kernels instead
    of the generic W route.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != gspec.d or kernel.d != gspec.d:
        raise OracleError("dimension mismatch between kernel, density and points")
    if gspec.A == 0.0:
        return np.zeros(x.shape[:-1])
    off = x - np.asarray(gspec.x0)
    r = np.sqrt(np.sum(off * off, axis=-1))
    if isinstance(kernel, DDI3D):
        return _ddi_gaussian(kernel, gspec, off)
    if yukawa_closed and isinstance(kernel, Yukawa3D):
        rr = np.maximum(r, 1e-300)
        w = yukawa3d_w_closed(rr, gspec.s, kernel.lam)
        # r -> 0 limit by the subordination form
        small = r < 1e-6 * gspec.s
        if np.any(small):
            w = np.where(small, kernel.w_t(np.zeros_like(r), 0, gspec.s), w)
        return gspec.mass * w
    if yukawa_closed and isinstance(kernel, Yukawa2D):
        flat = r.ravel()
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.array([_yukawa2d_k0i0(float(v), gspec, kernel.lam) for v in uniq])
        return vals[inv].reshape(r.shape)
    try:
        return gspec.mass * w_radial(kernel, r, gspec.s, 0)
    except KernelError as exc:
        raise OracleError(f"no closed-form potential for {kernel.key}") from exc


def _ddi_gaussian(kernel, gspec, off):
    """``-(m.n) rho - 3 d_n d_m phi_poisson`` for a Gaussian density."""
    from .kernels import Poisson3D

    n, mv = kernel.n, kernel.m_vec
    # d_n d_m = sum_ij n_i m_j d_i d_j; build gamma on second derivatives
    gam = {}
    for i in range(3):
        for j in range(3):
            c = n[i] * mv[j]
            if c == 0.0:
                continue
            a = [0, 0, 0]
            a[i] += 1
            a[j] += 1
            gam[tuple(a)] = gam.get(tuple(a), 0.0) + c
    full = {a: gam.get(a, 0.0) for a in multi_indices(3, 2)}
    gset = GammaSet(3, 2, gspec.s, full)
    dd_phi = gspec.mass * eval_phi1(gset, Poisson3D(), off)
    rho = gspec.A * np.exp(-np.sum(off * off, axis=-1) / (2.0 * gspec.s**2))
    return -(mv @ n) * rho - 3.0 * dd_phi


# Compact bump -------------------------------------------------------------

@dataclass(frozen=True)
class BumpDensity:
    """``exp(-1/(1 - |x - c|**2/R**2))`` inside the ball of radius R, else 0."""

    center: tuple = (0.0, 0.0)
    R: float = 1.0

    @property
    def d(self):
        return len(self.center)

    def __call__(self, *x):
        q = sum((xi - ci) ** 2 for xi, ci in zip(x, self.center)) / self.R**2
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape)
        inside = q < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - q[inside]))
        return out


# Direct quadrature ------------------------------------------------------

def _quad(f, a, b, tol, points=None, limit=400):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=1e-12, limit=limit,
                                      points=points)
        except integrate.IntegrationWarning as exc:
            raise OracleError(f"quadrature refinement budget exhausted: {exc}") from exc
    return val


def _support(density):
    """(center, radius) of a disc/ball containing the numerical support."""
    if isinstance(density, BumpDensity):
        return np.asarray(density.center, dtype=float), float(density.R)
    if isinstance(density, GaussianDensitySpec):
        # exp(-q**2/2) < 1e-18 beyond q = 9.1
        return np.asarray(density.x0, dtype=float), 9.2 * density.s
    raise OracleError("density needs a known support (BumpDensity or GaussianDensitySpec)")


def _disc_arc(rad, D, R):
    """Half-angle of the arc of the circle |y - x| = rad inside the disc of
    radius R whose center is at distance D from x."""
    if D == 0.0:
        return math.pi if rad < R else 0.0
    if rad + D <= R:
        return math.pi
    c = (rad * rad + D * D - R * R) / (2.0 * rad * D)
    if c >= 1.0:
        return 0.0
    if c <= -1.0:
        return math.pi
    return math.acos(c)


def oracle_quadrature(kernel, density, x, tol=1e-9):
    """``int U(x - y) rho(y) dy`` at one point x by nested adaptive quadrature."""
    x = np.asarray(x, dtype=float)
    d = kernel.d
    if x.shape != (d,):
        raise OracleError("x must be a single point")
    if isinstance(density, GaussianDensitySpec) and density.A == 0.0:
        return 0.0
    center, R = _support(density)
    v = center - x
    D = float(np.linalg.norm(v))
    theta0 = math.atan2(v[1], v[0]) if D > 0 else 0.0
    rad_lo = max(D - R, 0.0)
    rad_hi = D + R
    if d == 2:
        return _quad2d(kernel, density, x, D, R, theta0, rad_lo, rad_hi, tol)
    if d == 3:
        return _quad3d(kernel, density, x, v, D, rad_lo, rad_hi, tol)
    raise OracleError("only 2D and 3D are supported")


def _quad2d(kernel, density, x, D, R, theta0, lo, hi, tol):
    def ring(rad):
        half = _disc_arc(rad, D, R)
        if half == 0.0:
            return 0.0

        def g(th):
            return float(density(x[0] + rad * math.cos(th), x[1] + rad * math.sin(th)))

        a, b = theta0 - half, theta0 + half
        return _quad(g, a, b, tol * 1e-2, points=[theta0] if half < math.pi else None)

    def outer(rad):
        if rad == 0.0:
            return 0.0
        return float(kernel.radial(rad)) * rad * ring(rad)

    pts = sorted({p for p in (D, abs(R - D)) if lo < p < hi})
    return _quad(outer, lo, hi, tol, points=pts or None)


def _rotation_to(v):
    """Orthonormal frame whose third column points along v."""
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return np.eye(3)
    e3 = v / nrm
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, e3)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.column_stack([e1, e2, e3])


def _quad3d(kernel, density, x, v, D, lo, hi, tol, n_phi=48):
    """Spherical shells around x: adaptive in the radius and in cos(polar angle)
    measured from the direction of the density center, trapezoid in azimuth."""
    Q = _rotation_to(v)
    phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
    cph, sph = np.cos(phis), np.sin(phis)

    def shell(rad):
        def g(ct):
            st = math.sqrt(max(0.0, 1.0 - ct * ct))
            local = np.stack([st * cph, st * sph, np.full(n_phi, ct)])
            pts = x[:, None] + rad * (Q @ local)
            return float(np.mean(density(pts[0], pts[1], pts[2]))) * 2.0 * math.pi

        return _quad(g, -1.0, 1.0, tol * 1e-2, points=None)

    def outer(rad):
        if rad == 0.0:
            return 0.0
        return float(kernel.radial(rad)) * rad * rad * shell(rad)

    pts = [D] if lo < D < hi else None
    return _quad(outer, lo, hi, tol, points=pts)
