"""Kernel registry: Fourier symbols, operator symbols and W = U * G.

Every scalar kernel exposes ``w_t(t, k, sigma)``, the k-th derivative of
``W`` with respect to ``t = r**2 / (2 sigma**2)`` where ``G`` is the unit-mass
Gaussian of width ``sigma``.  Radial and Cartesian derivatives are built from
it (see :func:`w_radial` and :mod:`mmconv.moments`).

Sign convention for the biharmonic kernels: ``U = r/(8 pi)`` (3D) and
``U = -r**2 (log r - 1)/(8 pi)`` (2D) both satisfy ``-Delta**2 U = delta``, so
their operator symbol is ``-|mu|**4`` and the Fourier symbol ``-1/|k|**4``.
"""

import math
import threading
import warnings

import numpy as np
from scipy import integrate, special

from .specfun import EULER_GAMMA, chebyshev_laplace, ein, jint

EXPONENTIAL_DECAY = math.inf
MAX_W_ORDER = 6


class KernelError(ValueError):
    pass


def _check_order(k):
    if not 0 <= k <= MAX_W_ORDER:
        raise KernelError(f"unsupported derivative order {k}")


class Kernel:
    """Base class; subclasses fill in the symbols they support."""

    name = "kernel"
    d = 0
    singular_symbol = True
    has_op_symbol = True
    has_closed_w = True

    @property
    def key(self):
        return self.name

    def __repr__(self):
        return f"<Kernel {self.key}>"

    def __eq__(self, other):
        return isinstance(other, Kernel) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    # symbols -----------------------------------------------------------
    def symbol_k2(self, k2):
        raise NotImplementedError

    def op_symbol_mu2(self, mu2):
        raise KernelError(f"{self.name} has no operator symbol")

    def fourier_symbol(self, k):
        """Fourier symbol at wave vector(s) ``k`` (last axis has length d)."""
        k = np.asarray(k, dtype=float)
        k2 = np.sum(k * k, axis=-1)
        if self.singular_symbol and np.any(k2 == 0.0):
            raise KernelError(f"{self.name}: symbol is singular at k = 0")
        return self.symbol_k2(k2)

    def op_symbol(self, mu):
        mu = np.asarray(mu, dtype=float)
        return self.op_symbol_mu2(np.sum(mu * mu, axis=-1))

    # real space --------------------------------------------------------
    def radial(self, r):
        """U(r) for radial kernels."""
        raise NotImplementedError

    def w_t(self, t, k, sigma):
        raise KernelError(f"{self.name}: no closed form for W, use the general-kernel path")

    def farfield_exponent(self, m):
        raise NotImplementedError


class Poisson2D(Kernel):
    name = "poisson2d"
    d = 2

    def symbol_k2(self, k2):
        return 1.0 / k2

    def op_symbol_mu2(self, mu2):
        return mu2

    def radial(self, r):
        return -np.log(r) / (2.0 * math.pi)

    def w_t(self, t, k, sigma):
        _check_order(k)
        t = np.asarray(t, dtype=float)
        if k == 0:
            return -(ein(t) - EULER_GAMMA + math.log(2.0 * sigma**2)) / (4.0 * math.pi)
        return -((-1.0) ** (k - 1)) * jint(k, t) / (4.0 * math.pi)

    def farfield_exponent(self, m):
        return m + 1


class Poisson3D(Kernel):
    name = "poisson3d"
    d = 3

    def symbol_k2(self, k2):
        return 1.0 / k2

    def op_symbol_mu2(self, mu2):
        return mu2

    def radial(self, r):
        return 1.0 / (4.0 * math.pi * r)

    def w_t(self, t, k, sigma):
        _check_order(k)
        pref = 0.5 * sigma**2 * (2.0 * math.pi * sigma**2) ** -1.5
        return pref * (-1.0) ** k * jint(0.5 + k, t)

    def farfield_exponent(self, m):
        return m + 2


class Coulomb2D(Kernel):
    name = "coulomb2d"
    d = 2

    def symbol_k2(self, k2):
        return 1.0 / np.sqrt(k2)

    def op_symbol_mu2(self, mu2):
        return np.sqrt(mu2)

    def radial(self, r):
        return 1.0 / (2.0 * math.pi * r)

    def w_t(self, t, k, sigma):
        _check_order(k)
        pref = 1.0 / (2.0 * math.sqrt(2.0) * math.pi**1.5 * sigma)
        return pref * chebyshev_laplace(t, k)

    def farfield_exponent(self, m):
        return m + 2


class Biharmonic2D(Kernel):
    name = "biharmonic2d"
    d = 2

    def symbol_k2(self, k2):
        return -1.0 / (k2 * k2)

    def op_symbol_mu2(self, mu2):
        return -(mu2 * mu2)

    def radial(self, r):
        return -(r**2) * (np.log(r) - 1.0) / (8.0 * math.pi)

    def w_t(self, t, k, sigma):
        _check_order(k)
        t = np.asarray(t, dtype=float)
        c = math.log(2.0 * sigma**2) - EULER_GAMMA

        def e_der(j):
            if j == 0:
                return ein(t) + c
            return (-1.0) ** (j - 1) * jint(j, t)

        val = (1.0 + t) * e_der(k) - (-1.0) ** k * np.exp(-t)
        if k >= 1:
            val = val + k * e_der(k - 1)
        if k == 0:
            val = val - 2.0 * t
        elif k == 1:
            val = val - 2.0
        return -(sigma**2) / (8.0 * math.pi) * val

    def farfield_exponent(self, m):
        return m - 1


class Biharmonic3D(Kernel):
    name = "biharmonic3d"
    d = 3

    def symbol_k2(self, k2):
        return -1.0 / (k2 * k2)

    def op_symbol_mu2(self, mu2):
        return -(mu2 * mu2)

    def radial(self, r):
        return r / (8.0 * math.pi)

    def w_t(self, t, k, sigma):
        _check_order(k)
        t = np.asarray(t, dtype=float)
        pref = sigma / (8.0 * math.pi * math.sqrt(2.0 * math.pi))
        val = (1.0 + 2.0 * t) * (-1.0) ** k * jint(0.5 + k, t) + 2.0 * (-1.0) ** k * np.exp(-t)
        if k >= 1:
            val = val + 2.0 * k * (-1.0) ** (k - 1) * jint(0.5 + k - 1, t)
        return pref * val

    def farfield_exponent(self, m):
        return m


class _Yukawa(Kernel):
    singular_symbol = False

    def __init__(self, lam=1.0):
        lam = float(lam)
        if lam <= 0:
            raise KernelError("Yukawa screening parameter must be positive")
        self.lam = lam
        self._cache = {}
        self._lock = threading.Lock()

    @property
    def key(self):
        return f"{self.name}:lambda={self.lam:g}"

    def symbol_k2(self, k2):
        return 1.0 / (k2 + self.lam**2)

    def op_symbol_mu2(self, mu2):
        return mu2 + self.lam**2

    def farfield_exponent(self, m):
        return EXPONENTIAL_DECAY

    def w_t(self, t, k, sigma):
        """Subordinated-Gaussian form, valid in any dimension d:

        ``W^(k)(t) = sigma**2/2 (2 pi sigma**2)**(-d/2)
        int_0^1 (-u)**k u**(d/2-2) exp(-beta (1-u)/u - t u) du``
        with ``beta = lam**2 sigma**2 / 2``.  Evaluated once per distinct ``t``.
        """
        _check_order(k)
        t = np.asarray(t, dtype=float)
        uniq, inv = np.unique(t, return_inverse=True)
        vals = np.array([self._wt_scalar(float(tv), k, float(sigma)) for tv in uniq])
        return vals[inv].reshape(t.shape)

    def _wt_scalar(self, tv, k, sigma):
        key = (tv, k, sigma)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        d = self.d
        beta = 0.5 * self.lam**2 * sigma**2
        pref = 0.5 * sigma**2 * (2.0 * math.pi * sigma**2) ** (-0.5 * d)

        def f(u):
            if u <= 0.0:
                return 0.0
            return (-u) ** k * u ** (0.5 * d - 2.0) * math.exp(-beta * (1.0 - u) / u - tv * u)

        pts = []
        if tv > 0:
            ustar = math.sqrt(beta / tv)
            if ustar < 1.0:
                pts = [0.5 * ustar, ustar, min(1.0, 2.0 * ustar)]
                pts = sorted(set(p for p in pts if 0.0 < p < 1.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=2e-14, limit=400,
                                    points=pts or None)
        val *= pref
        with self._lock:
            self._cache[key] = val
        return val


class Yukawa2D(_Yukawa):
    name = "yukawa2d"
    d = 2

    def radial(self, r):
        return special.k0(self.lam * r) / (2.0 * math.pi)


class Yukawa3D(_Yukawa):
    name = "yukawa3d"
    d = 3

    def radial(self, r):
        return np.exp(-self.lam * r) / (4.0 * math.pi * r)


def yukawa3d_w_closed(r, sigma, lam):
    """erfc closed form of W for the 3D Yukawa kernel (unit-mass Gaussian), r > 0.

    Rewritten with ``erfcx`` so that no factor ``exp(lam r)`` overflows.
    """
    r = np.asarray(r, dtype=float)
    s2 = math.sqrt(2.0)
    t = r**2 / (2.0 * sigma**2)
    w = lam * sigma / s2 - r / (s2 * sigma)
    z = lam * sigma / s2 + r / (s2 * sigma)
    beta = 0.5 * lam**2 * sigma**2
    first = np.where(
        w >= 0,
        special.erfcx(np.maximum(w, 0.0)) * np.exp(-t),
        np.exp(np.minimum(beta - lam * r, 0.0)) * special.erfc(np.minimum(w, 0.0)),
    )
    second = special.erfcx(z) * np.exp(-t)
    return (first - second) / (8.0 * math.pi * r)


class DDI3D(Kernel):
    """Dipole-dipole kernel; evaluated through the 3D Poisson route."""

    name = "ddi3d"
    d = 3
    has_op_symbol = False
    has_closed_w = False

    def __init__(self, n=(0.0, 0.0, 1.0), m_vec=(0.0, 0.0, 1.0)):
        n = np.asarray(n, dtype=float)
        m_vec = np.asarray(m_vec, dtype=float)
        if n.shape != (3,) or m_vec.shape != (3,):
            raise KernelError("dipole orientations must be 3-vectors")
        if abs(np.linalg.norm(n) - 1) > 1e-12 or abs(np.linalg.norm(m_vec) - 1) > 1e-12:
            raise KernelError("dipole orientations must be unit vectors")
        self.n = n
        self.m_vec = m_vec

    @property
    def key(self):
        fmt = lambda v: ",".join(f"{x:g}" for x in v)
        return f"ddi3d:n={fmt(self.n)};m={fmt(self.m_vec)}"

    def fourier_symbol(self, k):
        k = np.asarray(k, dtype=float)
        k2 = np.sum(k * k, axis=-1)
        if np.any(k2 == 0.0):
            raise KernelError("ddi3d: symbol is undefined at k = 0")
        kn = k @ self.n
        km = k @ self.m_vec
        return -(self.m_vec @ self.n) + 3.0 * kn * km / k2

    def value(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        r = np.sqrt(r2)
        num = self.m_vec @ self.n - 3.0 * (x @ self.m_vec) * (x @ self.n) / r2
        return 3.0 / (4.0 * math.pi) * num / r**3

    def farfield_exponent(self, m):
        return m + 2


_REGISTRY = {
    "poisson2d": Poisson2D,
    "poisson3d": Poisson3D,
    "coulomb2d": Coulomb2D,
    "biharmonic2d": Biharmonic2D,
    "biharmonic3d": Biharmonic3D,
    "yukawa2d": Yukawa2D,
    "yukawa3d": Yukawa3D,
    "ddi3d": DDI3D,
}

KERNEL_NAMES = tuple(_REGISTRY)


def _vec(text):
    return tuple(float(v) for v in text.split(","))


def parse_kernel(text):
    """Build a kernel from ``"name"`` or ``"name:key=value;key=value"``.

    >>> parse_kernel("yukawa3d:lambda=2").lam
    2.0
    """
    name, _, rest = text.strip().partition(":")
    name = name.lower()
    if name not in _REGISTRY:
        raise KernelError(f"unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}")
    params = {}
    for item in filter(None, rest.split(";")):
        key, eq, val = item.partition("=")
        if not eq:
            raise KernelError(f"bad kernel parameter {item!r}")
        params[key.strip().lower()] = val.strip()
    try:
        if name in ("yukawa2d", "yukawa3d"):
            kernel = _REGISTRY[name](float(params.pop("lambda", 1.0)))
        elif name == "ddi3d":
            kernel = DDI3D(_vec(params.pop("n", "0,0,1")), _vec(params.pop("m", "0,0,1")))
        else:
            kernel = _REGISTRY[name]()
    except (TypeError, ValueError) as exc:
        raise KernelError(f"bad parameters for {name}: {exc}") from exc
    if params:
        raise KernelError(f"unexpected parameters for {name}: {sorted(params)}")
    return kernel


def _radial_chain_coeff(k, j):
    return math.factorial(k) / (
        math.factorial(2 * j - k) * math.factorial(k - j) * 2 ** (k - j)
    )


def w_radial(kernel, r, sigma, k=0):
    """k-th derivative of ``W(r)`` in r, assembled from the t-derivatives.

    ``d^k/dr^k F(r**2/(2 sigma**2)) = sum_j c_kj r**(2j-k) sigma**(-2j) F^(j)``;
    every power of r is non-negative, so r = 0 needs no special casing.
    """
    if not 0 <= k <= 4:
        raise KernelError(f"unsupported radial derivative order {k}")
    r = np.asarray(r, dtype=float)
    t = r**2 / (2.0 * sigma**2)
    out = np.zeros_like(r)
    for j in range((k + 1) // 2, k + 1):
        out = out + _radial_chain_coeff(k, j) * r ** (2 * j - k) * sigma ** (-2 * j) * kernel.w_t(t, j, sigma)
    return out


def w_general_radial_2d(u_radial, sigma, r, tol=1e-12):
    """W(r) = int_0^inf U(s) s ds int_0^2pi G(|x - y|) dtheta by nested adaptive GK.

    Works for any radial 2D kernel whose ``U(s) s`` is integrable at 0.
    """
    r = float(r)
    g0 = 1.0 / (2.0 * math.pi * sigma**2)
    s_max = r + sigma * math.sqrt(2.0 * math.log(1e18))

    def inner(s):
        def g(th):
            return g0 * math.exp(-(r * r + s * s - 2.0 * s * r * math.cos(th)) / (2.0 * sigma**2))

        val, _ = integrate.quad(g, 0.0, math.pi, epsabs=tol * 1e-2, epsrel=1e-13, limit=200)
        return 2.0 * val

    def outer(s):
        if s == 0.0:
            return 0.0
        u = float(u_radial(s))
        if u == 0.0:
            return 0.0
        return u * s * inner(s)

    pts = [p for p in (r,) if 0.0 < p < s_max]
    val, err = integrate.quad(outer, 0.0, s_max, epsabs=tol, epsrel=1e-13, limit=400,
                              points=pts or None)
    if not np.isfinite(val) or err > 1e3 * tol + 1e-10 * abs(val):
        raise KernelError(f"general radial quadrature did not converge (err={err:.2e})")
    return val
