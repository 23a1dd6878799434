"""Special-function helpers used by the closed-form W = U*G expressions.

Everything is written in terms of the scaled radial variable
``t = r**2 / (2 sigma**2)``; the smooth-in-``t`` forms avoid the removable
singularities that ``erf(r)/r`` or ``E1(r**2) + 2 log r`` have at the origin.
"""

import math

import numpy as np
from scipy import special

EULER_GAMMA = float(np.euler_gamma)

_SERIES_CUT = 1.0
_SERIES_TERMS = 30


def jint(a, t):
    """Return ``J(a, t) = int_0^1 v**(a-1) exp(-t v) dv`` for ``a > 0``, ``t >= 0``.

    ``d/dt J(a, t) = -J(a + 1, t)``.  Small ``t`` uses the power series, larger
    ``t`` the regularized lower incomplete gamma function.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t < _SERIES_CUT
    if np.any(small):
        ts = t[small]
        acc = np.zeros_like(ts)
        term = np.ones_like(ts)
        for j in range(_SERIES_TERMS):
            acc += term / (a + j)
            term = term * (-ts) / (j + 1)
        out[small] = acc
    big = ~small
    if np.any(big):
        tb = t[big]
        out[big] = special.gamma(a) * special.gammainc(a, tb) / tb**a
    return out


def ein(t):
    """Entire exponential integral ``Ein(t) = int_0^t (1 - exp(-s))/s ds``.

    ``Ein(t) = E1(t) + log(t) + gamma`` for ``t > 0``.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t < 2.0
    if np.any(small):
        ts = t[small]
        acc = np.zeros_like(ts)
        term = np.ones_like(ts)
        for n in range(1, 45):
            term = term * (-ts) / n
            acc -= term / n
        out[small] = acc
    big = ~small
    if np.any(big):
        tb = t[big]
        out[big] = special.exp1(tb) + np.log(tb) + EULER_GAMMA
    return out


def chebyshev_laplace(t, k, n=None):
    """``int_0^1 (-u)**k exp(-t u) / sqrt(u (1 - u)) du`` by Gauss-Chebyshev.

    The integrand is positive up to the sign, so the rule is stable for all
    ``t >= 0``; the node count grows like ``sqrt(t)`` to resolve the
    ``exp(-t u)`` boundary layer.
    """
    t = np.asarray(t, dtype=float)
    if n is None:
        tmax = float(t.max()) if t.size else 0.0
        n = int(4.0 * math.sqrt(tmax + 1.0)) + 32
    theta = (2.0 * np.arange(1, n + 1) - 1.0) * math.pi / (2.0 * n)
    u = 0.5 * (1.0 + np.cos(theta))
    flat = t.reshape(-1, 1)
    vals = ((-u) ** k) * np.exp(-flat * u)
    return (math.pi / n) * vals.sum(axis=1).reshape(t.shape)


def hermite_e(n, x):
    """Probabilists' Hermite polynomial He_n(x)."""
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    return np.polynomial.hermite_e.hermeval(x, coeffs)
