import math

import numpy as np
import pytest

from mmconv import kernels as K
from mmconv.oracles import (BumpDensity, GaussianDensitySpec, OracleError, default_density,
                            oracle_gaussian_potential, oracle_quadrature)

KERNELS_2D = [K.Poisson2D(), K.Coulomb2D(), K.Biharmonic2D(), K.Yukawa2D(1.0), K.Yukawa2D(3.0)]
KERNELS_3D = [K.Poisson3D(), K.Biharmonic3D(), K.Yukawa3D(1.0), K.Yukawa3D(2.0)]


@pytest.mark.parametrize("ker", KERNELS_2D + KERNELS_3D, ids=lambda k: k.key)
def test_closed_form_matches_quadrature(ker):
    rng = np.random.default_rng(11)
    gs = default_density(ker.d)
    npts = 5 if ker.d == 2 else 3
    for _ in range(npts):
        x = rng.uniform(-8, 8, ker.d)
        a = float(oracle_gaussian_potential(ker, gs, x))
        b = oracle_quadrature(ker, gs, x)
        assert abs(a - b) <= 1e-8 * max(1.0, abs(a))


# reference from a 30-digit 1D radial integral of the same density
YUKAWA3D_R1_S1 = 0.252300046955226412932056069927
YUKAWA3D_R0_S1 = 0.344320457581201528456128769269


class TestYukawa:
    def test_frozen_3d(self):
        gs = GaussianDensitySpec(1.0, 1.0, (0.0, 0.0, 0.0))
        v = oracle_gaussian_potential(K.Yukawa3D(1.0), gs, np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
        assert v[0] == pytest.approx(YUKAWA3D_R1_S1, rel=1e-13)
        assert v[1] == pytest.approx(YUKAWA3D_R0_S1, rel=1e-12)

    @pytest.mark.parametrize("ker", [K.Yukawa2D(2.0), K.Yukawa3D(0.5)], ids=lambda k: k.key)
    def test_closed_and_generic_routes_agree(self, ker):
        gs = default_density(ker.d)
        x = np.array([[0.0] * ker.d, [3.0] + [1.0] * (ker.d - 1), [-4.0] * ker.d])
        a = oracle_gaussian_potential(ker, gs, x, yukawa_closed=True)
        b = oracle_gaussian_potential(ker, gs, x, yukawa_closed=False)
        np.testing.assert_allclose(a, b, rtol=1e-11)


class TestGaussianOracle:
    @pytest.mark.parametrize("ker", [K.Poisson2D(), K.Coulomb2D(), K.Poisson3D()], ids=lambda k: k.key)
    def test_linear_in_amplitude(self, ker):
        x = np.array([[0.5] * ker.d, [4.0] * ker.d])
        x0 = (1.0, 2.0, 3.0)[: ker.d]
        one = oracle_gaussian_potential(ker, GaussianDensitySpec(1.0, 1.3, x0), x)
        three = oracle_gaussian_potential(ker, GaussianDensitySpec(-3.0, 1.3, x0), x)
        np.testing.assert_allclose(three, -3.0 * one, rtol=1e-14)

    def test_zero_amplitude(self):
        gs = GaussianDensitySpec(0.0, 1.0, (0.0, 0.0))
        assert np.all(oracle_gaussian_potential(K.Poisson2D(), gs, np.ones((4, 2))) == 0.0)
        assert oracle_quadrature(K.Poisson2D(), gs, np.ones(2)) == 0.0

    @pytest.mark.parametrize("ker", [K.Poisson2D(), K.Poisson3D()], ids=lambda k: k.key)
    def test_far_field_is_point_mass(self, ker):
        s = 0.8
        gs = GaussianDensitySpec(2.0, s, (0.0,) * ker.d)
        r = 12.0 * s
        x = np.zeros((1, ker.d))
        x[0, 0] = r
        got = oracle_gaussian_potential(ker, gs, x)[0]
        assert got == pytest.approx(gs.mass * float(ker.radial(r)), rel=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(OracleError):
            oracle_gaussian_potential(K.Poisson3D(), default_density(2), np.zeros(2))

    def test_ddi_matches_generic_derivative(self):
        # the closed form pulls d_n d_m through the Poisson potential; check it
        # against centered differences of the Poisson oracle
        n = np.array([0.0, 0.6, 0.8])
        ker = K.DDI3D(n=tuple(n), m_vec=tuple(n))
        gs = default_density(3)
        x = np.array([0.3, -1.0, 4.0])
        h = 1e-3
        pot = lambda p: float(oracle_gaussian_potential(K.Poisson3D(), gs, p))
        dd = (pot(x + h * n) - 2 * pot(x) + pot(x - h * n)) / h**2
        want = -gs(*x) - 3.0 * dd
        assert float(oracle_gaussian_potential(ker, gs, x)) == pytest.approx(want, rel=1e-5)


class TestQuadrature:
    def test_bump_symmetric(self):
        b = BumpDensity((0.0, 0.0), 1.0)
        u = oracle_quadrature(K.Poisson2D(), b, np.array([2.0, 0.0]))
        v = oracle_quadrature(K.Poisson2D(), b, np.array([0.0, -2.0]))
        assert u == pytest.approx(v, rel=1e-10)

    def test_bump_outside_is_point_mass_poisson3d(self):
        # Newton's shell theorem: outside a radial density the potential is M/(4 pi r)
        from scipy import integrate
        b = BumpDensity((0.0, 0.0, 0.0), 1.0)
        mass = integrate.quad(lambda r: 4 * math.pi * r * r * math.exp(-1 / (1 - r * r)), 0, 1,
                              epsabs=0, epsrel=1e-13)[0]
        u = oracle_quadrature(K.Poisson3D(), b, np.array([0.0, 2.5, 0.0]))
        assert u == pytest.approx(mass / (4 * math.pi * 2.5), rel=1e-8)

    def test_bump_zero_outside_support(self):
        b = BumpDensity((1.0, 1.0), 0.5)
        assert float(b(np.array(3.0), np.array(3.0))) == 0.0

    def test_unknown_density(self):
        with pytest.raises(OracleError):
            oracle_quadrature(K.Poisson2D(), lambda x, y: x, np.zeros(2))

    def test_rejects_batch(self):
        with pytest.raises(OracleError):
            oracle_quadrature(K.Poisson2D(), default_density(2), np.zeros((2, 2)))
