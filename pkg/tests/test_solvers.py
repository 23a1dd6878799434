import math
import warnings

import numpy as np
import pytest

from mmconv import kernels as K
from mmconv.grid import FieldSamples, GridError, make_grid, sample
from mmconv.moments import SupportLeakWarning, compute_moments, eval_gaussian_derivative
from mmconv.oracles import GaussianDensitySpec, default_density, oracle_gaussian_potential
from mmconv.solvers import (Method, SolveRequest, assemble, directional_second_derivative,
                            fs_multiplier, parse_method, solve)
from mmconv.transforms import sine_wavenumbers


def rel_error(sol, kernel, gspec):
    X = np.stack(np.broadcast_arrays(*sol.phi.coords()), axis=-1)
    ref = oracle_gaussian_potential(kernel, gspec, X)
    return np.abs(sol.phi.values - ref).max() / np.abs(ref).max()


def run(kernel, N=64, L=16.0, m=0, S=1, method="fs-mm", gspec=None, layout="fs", **kw):
    gspec = gspec or default_density(kernel.d)
    rho = sample(make_grid(kernel.d, L, N), layout, gspec)
    sol = solve(SolveRequest(kernel, rho, m=m, S=S, method=method, **kw))
    return sol, rel_error(sol, kernel, gspec)


class TestMethod:
    def test_parse(self):
        assert parse_method("SP_MM") is Method.SP_MM
        assert Method.FS_TENSOR.tensor and Method.FS_TENSOR.family == "fs"
        assert Method.SP_PLAIN.plain
        with pytest.raises(ValueError):
            parse_method("mm")


class TestValidation:
    def setup_method(self):
        self.rho = sample(make_grid(2, 4.0, 16), "fs", lambda x, y: np.exp(-x * x - y * y))

    def test_expanded_density(self):
        g = make_grid(2, 4.0, 16, 2)
        rho = sample(g, "fs", lambda x, y: 0 * x + 0 * y, expanded=True)
        with pytest.raises(GridError):
            SolveRequest(K.Poisson2D(), rho)

    def test_dimension_mismatch(self):
        with pytest.raises(K.KernelError):
            SolveRequest(K.Poisson3D(), self.rho)

    def test_order_limit(self):
        with pytest.raises(ValueError):
            SolveRequest(K.Poisson2D(), self.rho, m=5)

    def test_plain_ignores_order(self):
        assert SolveRequest(K.Poisson2D(), self.rho, m=9, method="fs-plain").order is None

    def test_bad_S(self):
        with pytest.raises(GridError):
            SolveRequest(K.Poisson2D(), self.rho, S=0)


class TestPlain:
    def test_sine_eigenfunction(self):
        g = make_grid(2, 3.0, 32)
        mu = sine_wavenumbers(g)
        p, q = 3, 7
        rho = sample(g, "sp", lambda x, y: np.sin(mu[p - 1] * (x + 3)) * np.sin(mu[q - 1] * (y + 3)))
        sol = solve(SolveRequest(K.Poisson2D(), rho, method="sp-plain"))
        np.testing.assert_allclose(sol.phi.values, rho.values / (mu[p - 1] ** 2 + mu[q - 1] ** 2),
                                   atol=1e-14)

    @pytest.mark.parametrize("method", ["sp-plain", "fs-plain", "sp-mm", "fs-mm"])
    def test_zero_density(self, method):
        g = make_grid(2, 4.0, 16)
        rho = FieldSamples(g, "fs", np.zeros(g.shape("fs")))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SupportLeakWarning)
            sol = solve(SolveRequest(K.Poisson2D(), rho, m=2, S=2, method=method))
        assert np.all(sol.phi.values == 0.0)

    def test_fs_direct_sum(self):
        # the half-shifted FFT path equals the literal trigonometric sum
        ker = K.Coulomb2D()
        g = make_grid(2, 2.0, 16, 2)
        rng = np.random.default_rng(9)
        vals = rng.standard_normal(g.shape("fs"))
        rho = FieldSamples(g, "fs", vals)
        sol = solve(SolveRequest(ker, rho, S=2, method="fs-plain"))
        M, SL, h = g.M, g.SL, g.h
        nu = math.pi * (np.arange(-M // 2, M // 2) + 0.5) / SL
        x = g.axis("fs")
        E = np.exp(-1j * np.outer(nu, x))
        spec = h * h * E @ vals @ E.T
        U = ker.symbol_k2(nu[:, None] ** 2 + nu[None, :] ** 2)
        direct = (E.conj().T @ (U * spec) @ E.conj()).real / (2 * SL) ** 2
        np.testing.assert_allclose(sol.phi.values, direct, atol=1e-12 * np.abs(direct).max())

    def test_fs_multiplier_is_symbol(self):
        g = make_grid(2, 1.0, 8, 2)
        mult = fs_multiplier(K.Poisson2D(), g)
        assert mult.shape == (16, 16)
        assert mult.min() > 0
        assert mult.max() == pytest.approx(1 / (2 * (math.pi / 4) ** 2))


class TestAssemble:
    def test_sum(self):
        g = make_grid(1, 1.0, 8)
        a = sample(g, "sp", np.sin)
        b = sample(g, "sp", np.cos)
        sol = assemble(a, b, note=1)
        np.testing.assert_array_equal(sol.phi.values, a.values + b.values)
        assert sol.diagnostics == {"note": 1}

    def test_layout_mismatch(self):
        g = make_grid(1, 1.0, 8)
        with pytest.raises(GridError):
            assemble(sample(g, "sp", np.sin), sample(g, "fs", np.sin))

    @pytest.mark.parametrize("method", ["sp-mm", "fs-mm"])
    def test_linear_in_density(self, method):
        g = make_grid(2, 16.0, 64)
        f1 = sample(g, "fs", default_density(2))
        f2 = sample(g, "fs", GaussianDensitySpec(1.0, 1.5, (-2.0, 0.5)))
        req = lambda f: solve(SolveRequest(K.Poisson2D(), f, m=3, S=2, method=method)).phi.values
        np.testing.assert_allclose(req(f1 * 2.0 + f2 * -0.5), 2 * req(f1) - 0.5 * req(f2),
                                   atol=1e-12)

    def test_gaussian_density_leaves_no_remainder(self):
        # rho equal to the auxiliary Gaussian: rho2 is zero, phi is all phi1
        sigma = 2.0
        g = make_grid(2, 16.0, 128)
        rho = sample(g, "fs", lambda x, y: eval_gaussian_derivative((0, 0), sigma, np.stack([x + 0 * y, y + 0 * x], -1)) * 3.0)
        sol = solve(SolveRequest(K.Poisson2D(), rho, m=0, sigma=sigma, S=1, method="fs-mm"))
        assert np.abs(sol.phi2.values).max() <= 1e-12 * np.abs(sol.phi1.values).max()


class TestAccuracy:
    def test_methods_agree(self):
        sp, e_sp = run(K.Poisson2D(), m=4, S=4, method="sp-mm")
        fs, e_fs = run(K.Poisson2D(), m=4, S=4, method="fs-mm")
        assert e_sp <= 1e-9 and e_fs <= 1e-9
        assert sp.phi.layout == "sp" and fs.phi.layout == "fs"

    def test_matching_beats_plain(self):
        _, plain = run(K.Poisson2D(), S=2, method="fs-plain")
        _, matched = run(K.Poisson2D(), m=2, S=2, method="fs-mm")
        assert matched < 1e-2 * plain

    def test_residual_moments_reported(self):
        sol, _ = run(K.Poisson2D(), m=2, S=2, method="fs-mm")
        res = sol.diagnostics["residual_moments"]
        assert set(res) == {"00", "01", "10", "02", "11", "20"}
        assert max(abs(v) for v in res.values()) <= 1e-10 * 4 * math.pi

    def test_converges_with_S(self):
        errs = [run(K.Coulomb2D(), m=2, S=S, method="fs-mm")[1] for S in (1, 2, 4)]
        assert errs[2] < errs[1] < errs[0]

    def test_yukawa_saturates_without_expansion(self):
        ker = K.Yukawa3D(2.0)
        gs = GaussianDensitySpec(1.0, math.sqrt(2.0), (0.0, 0.0, 0.0))
        _, e = run(ker, N=64, m=0, S=1, method="sp-plain", gspec=gs)
        assert e <= 1e-12

    def test_centered_option(self):
        _, e0 = run(K.Poisson2D(), m=1, S=3, method="fs-mm")
        _, e1 = run(K.Poisson2D(), m=1, S=3, method="fs-mm", centered=True)
        assert e1 <= 1e-5 and e0 <= 1e-3


class TestDDI:
    def test_derivative_has_no_low_moments(self):
        g = make_grid(3, 16.0, 64)
        rho = sample(g, "fs", default_density(3))
        out = directional_second_derivative(rho, (0.0, 0.0, 1.0), (0.0, 0.6, 0.8))
        mom = compute_moments(out, 1, warn=False)
        assert max(abs(v) for v in mom.P.values()) <= 1e-14 * default_density(3).mass

    def test_derivative_of_gaussian(self):
        g = make_grid(3, 16.0, 64)
        sp = GaussianDensitySpec(1.0, 2.0, (0.0, 0.0, 0.0))
        out = directional_second_derivative(sample(g, "fs", sp), (0.0, 0.0, 1.0), (0.0, 0.0, 1.0))
        z = g.mesh("fs")[2]
        want = sample(g, "fs", sp).values * (z * z / 16 - 0.25)
        np.testing.assert_allclose(out.values, want, atol=1e-10)

    def test_against_oracle(self):
        _, e = run(K.DDI3D(), N=64, m=3, S=4, method="fs-mm")
        assert e <= 1e-6

    def test_wrong_dimension(self):
        with pytest.raises(K.KernelError):
            SolveRequest(K.DDI3D(), sample(make_grid(2, 1.0, 8), "fs", np.add))
