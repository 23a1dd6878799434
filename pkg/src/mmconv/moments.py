"""Moment matching with a Gaussian-derivative auxiliary density.

``rho1 = sum_alpha gamma_alpha d^alpha G`` has the same moments as ``rho`` up
to order m, so ``rho - rho1`` has vanishing moments and its potential decays
fast.  ``phi1 = U * rho1 = sum_alpha gamma_alpha d^alpha W`` is evaluated in
closed form.
"""

import itertools
import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelError, MAX_W_ORDER
from .specfun import hermite_e

M_MAX = 4
LEAK_TOL = 1e-12


class SupportLeakWarning(UserWarning):
    """Density is not negligible on the base-domain boundary."""


def multi_indices(d, m):
    """All alpha with |alpha| <= m in graded order, lexicographic in each degree."""
    out = []
    for n in range(m + 1):
        level = [a for a in itertools.product(range(n + 1), repeat=d) if sum(a) == n]
        out.extend(sorted(level))
    return out


def n_coefficients(d, m):
    return math.comb(m + d, d)


@dataclass(frozen=True)
class MomentSet:
    d: int
    m: int
    P: dict
    center: tuple = None

    def __post_init__(self):
        missing = [b for b in multi_indices(self.d, self.m) if b not in self.P]
        if missing:
            raise ValueError(f"moment set is missing {missing}")
        if self.center is None:
            object.__setattr__(self, "center", (0.0,) * self.d)

    def scale(self):
        return max((abs(v) for v in self.P.values()), default=0.0)


@dataclass(frozen=True)
class GammaSet:
    d: int
    m: int
    sigma: float
    gamma: dict
    center: tuple = field(default=None)

    def __post_init__(self):
        if self.center is None:
            object.__setattr__(self, "center", (0.0,) * self.d)


def _check_order(m):
    if not 0 <= m <= M_MAX:
        raise ValueError(f"matching order must be in 0..{M_MAX}, got {m}")


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def boundary_level(values):
    """max |f| over the outermost layer of samples, relative to max |f|."""
    a = np.abs(values)
    top = a.max() if a.size else 0.0
    if top == 0.0:
        return 0.0
    edge = 0.0
    for ax in range(a.ndim):
        edge = max(edge, np.take(a, 0, axis=ax).max(), np.take(a, -1, axis=ax).max())
    return edge / top


def compute_moments(f, m, center=None, warn=True):
    """Trapezoidal moments ``P_beta = int rho (x - center)**beta dx`` on the base grid.

    The sp layout is padded with its (zero Dirichlet) boundary so the rule
    covers the full interval.  Fields on the expanded grid use all samples.
    """
    _check_order(m)
    g = f.grid
    d = g.d
    vals = f.values
    ax = g.axis(f.layout, f.expanded)
    if f.layout == "sp":
        vals = np.pad(vals, [(1, 1)] * d)
        ax = np.concatenate([[ax[0] - g.h], ax, [ax[-1] + g.h]])
    else:
        # fs omits the upper boundary point; append it as zero (periodic image)
        vals = np.pad(vals, [(0, 1)] * d)
        ax = np.concatenate([ax, [ax[-1] + g.h]])
    if warn:
        lvl = boundary_level(f.values)
        if lvl > LEAK_TOL:
            warnings.warn(f"density reaches {lvl:.1e} of its maximum on the domain boundary",
                          SupportLeakWarning, stacklevel=2)
    c = (0.0,) * d if center is None else tuple(float(v) for v in center)
    w = _trapezoid_weights(ax.size, g.h)
    # V[i][p, j] = w_j (x_j - c_i)**p
    V = [w * (ax - c[i])[None, :] ** np.arange(m + 1)[:, None] for i in range(d)]
    P = {}
    if d == 1:
        full = V[0] @ vals
        for b in multi_indices(1, m):
            P[b] = float(full[b[0]])
    elif d == 2:
        full = V[0] @ vals @ V[1].T
        for b in multi_indices(2, m):
            P[b] = float(full[b])
    else:
        full = np.einsum("ai,bj,ck,ijk->abc", V[0], V[1], V[2], vals, optimize=True)
        for b in multi_indices(3, m):
            P[b] = float(full[b])
    return MomentSet(d, m, P, c)


def centroid(f):
    mom = compute_moments(f, 1, warn=False)
    d = f.grid.d
    p0 = mom.P[(0,) * d]
    if p0 == 0.0:
        return (0.0,) * d
    return tuple(mom.P[tuple(int(i == j) for j in range(d))] / p0 for i in range(d))


def _double_factorial_odd(n):
    # (n - 1)!! for even n >= 0
    out = 1
    for k in range(n - 1, 0, -2):
        out *= k
    return out


def _h0(gam, sigma):
    if any(g % 2 for g in gam):
        return 0.0
    val = 1.0
    for g in gam:
        val *= sigma**g * _double_factorial_odd(g)
    return val


def h_entry(alpha, beta, sigma):
    """``H^alpha_beta = int d^alpha G(x) x**beta dx``."""
    if len(alpha) != len(beta):
        raise ValueError("multi-indices of different dimension")
    if any((a + b) % 2 for a, b in zip(alpha, beta)) or any(a > b for a, b in zip(alpha, beta)):
        return 0.0
    val = (-1.0) ** sum(alpha)
    for a, b in zip(alpha, beta):
        val *= math.factorial(b) / math.factorial(b - a)
    return val * _h0(tuple(b - a for a, b in zip(alpha, beta)), sigma)


def solve_gamma(moments, sigma):
    """Back substitution in graded order (H is lower triangular in that order)."""
    d, m = moments.d, moments.m
    idx = multi_indices(d, m)
    gamma = {}
    for beta in idx:
        acc = moments.P[beta]
        for alpha in idx:
            if sum(alpha) >= sum(beta):
                break
            acc -= h_entry(alpha, beta, sigma) * gamma[alpha]
        diag = (-1.0) ** sum(beta) * math.prod(math.factorial(b) for b in beta)
        gamma[beta] = acc / diag
    return GammaSet(d, m, float(sigma), gamma, moments.center)


def forward_moments(gset):
    """``sum_alpha H^alpha_beta gamma_alpha`` for every beta (check of solve_gamma)."""
    idx = multi_indices(gset.d, gset.m)
    return {b: sum(h_entry(a, b, gset.sigma) * gset.gamma[a] for a in idx) for b in idx}


def _gauss_der_1d(n, sigma, x):
    """n-th derivative of the unit-mass 1D Gaussian."""
    x = np.asarray(x, dtype=float)
    g = np.exp(-0.5 * (x / sigma) ** 2) / math.sqrt(2.0 * math.pi * sigma**2)
    if n == 0:
        return g
    return (-1.0) ** n * sigma ** (-n) * hermite_e(n, x / sigma) * g


def eval_gaussian_derivative(alpha, sigma, x):
    """``d^alpha G`` at points ``x`` (last axis has length d)."""
    x = np.asarray(x, dtype=float)
    out = np.ones(x.shape[:-1])
    for i, a in enumerate(alpha):
        out = out * _gauss_der_1d(a, sigma, x[..., i])
    return out


def eval_rho1(gset, x):
    x = np.asarray(x, dtype=float) - np.asarray(gset.center)
    out = np.zeros(x.shape[:-1])
    for alpha, g in gset.gamma.items():
        if g != 0.0:
            out = out + g * eval_gaussian_derivative(alpha, gset.sigma, x)
    return out


def rho1_on_grid(gset, grid, layout, expanded=False):
    """rho1 on a full grid using separable per-axis factors."""
    d = grid.d
    ax = grid.axis(layout, expanded)
    fac = [[_gauss_der_1d(n, gset.sigma, ax - gset.center[i]) for n in range(gset.m + 1)]
           for i in range(d)]
    out = np.zeros(grid.shape(layout, expanded))
    for alpha, g in gset.gamma.items():
        if g == 0.0:
            continue
        if d == 1:
            out += g * fac[0][alpha[0]]
        elif d == 2:
            out += g * np.multiply.outer(fac[0][alpha[0]], fac[1][alpha[1]])
        else:
            out += g * np.multiply.outer(np.multiply.outer(fac[0][alpha[0]], fac[1][alpha[1]]),
                                         fac[2][alpha[2]])
    return out


# Cartesian derivatives of a radial function written as F(t), t = |x|**2/(2 s**2).
# A term (c, gam, k) stands for c * x**gam * s**(-2k) * F^(k)(t); the set is
# closed under d/dx_i:
#   d_i [x**gam s**(-2k) F^(k)] = gam_i x**(gam - e_i) s**(-2k) F^(k)
#                                 + x**(gam + e_i) s**(-2(k+1)) F^(k+1)
_TERM_CACHE = {}
_TERM_LOCK = threading.Lock()


def derivative_terms(alpha):
    alpha = tuple(int(a) for a in alpha)
    hit = _TERM_CACHE.get(alpha)
    if hit is not None:
        return hit
    d = len(alpha)
    terms = {((0,) * d, 0): 1}
    for i, a in enumerate(alpha):
        for _ in range(a):
            nxt = {}
            for (gam, k), c in terms.items():
                if gam[i]:
                    key = (gam[:i] + (gam[i] - 1,) + gam[i + 1:], k)
                    nxt[key] = nxt.get(key, 0) + c * gam[i]
                key = (gam[:i] + (gam[i] + 1,) + gam[i + 1:], k + 1)
                nxt[key] = nxt.get(key, 0) + c
            terms = {key: c for key, c in nxt.items() if c}
    out = tuple(sorted((c, gam, k) for (gam, k), c in terms.items()))
    with _TERM_LOCK:
        _TERM_CACHE[alpha] = out
    return out


def _phi1_from_offsets(gset, kernel, offs):
    """offs: list of d broadcastable coordinate arrays (x_i - center_i)."""
    if any(sum(a) > MAX_W_ORDER for a in gset.gamma):
        raise KernelError("requested derivative order exceeds the available W derivatives")
    s = gset.sigma
    r2 = sum(o * o for o in offs)
    t = r2 / (2.0 * s * s)
    shape = np.broadcast(*offs).shape if len(offs) > 1 else np.shape(offs[0])
    jets = {}
    out = np.zeros(shape)
    pw = [{0: 1.0} for _ in offs]
    for alpha, g in gset.gamma.items():
        if g == 0.0:
            continue
        for c, gam, k in derivative_terms(alpha):
            if k not in jets:
                jets[k] = kernel.w_t(t, k, s)
            mono = 1.0
            for i, p in enumerate(gam):
                if p not in pw[i]:
                    pw[i][p] = offs[i] ** p
                mono = mono * pw[i][p]
            out = out + (g * c * s ** (-2 * k)) * mono * jets[k]
    return out


def eval_phi1(gset, kernel, x):
    """``phi1 = sum gamma_alpha d^alpha W(x - center)`` at points x (last axis d)."""
    x = np.asarray(x, dtype=float) - np.asarray(gset.center)
    return _phi1_from_offsets(gset, kernel, [x[..., i] for i in range(x.shape[-1])])


def phi1_on_grid(gset, kernel, grid, layout, expanded=False):
    offs = [o - c for o, c in zip(grid.mesh(layout, expanded), gset.center)]
    return np.broadcast_to(_phi1_from_offsets(gset, kernel, offs),
                           grid.shape(layout, expanded)).copy()


def match(f, m, sigma, centered=False):
    """Moments (about the origin or the centroid) and their gamma coefficients."""
    center = centroid(f) if centered else None
    mom = compute_moments(f, m, center=center)
    return mom, solve_gamma(mom, sigma)
