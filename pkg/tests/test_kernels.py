from fractions import Fraction
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernbandit.errors import ConfigError
from kernbandit.kernels import (
    KernelSpec,
    empirical_fourier_decay,
    fourier_constant,
    fourier_decay_rate,
    gram_matrix,
    matern_eval,
    matern_fourier,
    matern_scaled,
)

HALF_INTEGERS = [Fraction(1, 2), Fraction(3, 2), Fraction(5, 2)]


def bessel_oracle(nu, z):
    """2^{1-nu} / Gamma(nu) z^nu K_nu(z) in 50-digit arithmetic."""
    with mpmath.workdps(50):
        nu = mpmath.mpf(nu.numerator) / nu.denominator
        if z == 0:
            return 1.0
        z = mpmath.mpf(z)
        return float(2 ** (1 - nu) / mpmath.gamma(nu) * z**nu * mpmath.besselk(nu, z))


class TestClosedForms:
    @pytest.mark.parametrize("nu", HALF_INTEGERS)
    def test_matches_bessel_oracle(self, nu):
        spec = KernelSpec(nu)
        zs = np.linspace(0.0, 20.0, 201)
        ours = matern_scaled(spec, zs)
        ref = np.array([bessel_oracle(nu, z) for z in zs])
        np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-10)

    def test_known_values(self):
        assert matern_eval(KernelSpec(Fraction(1, 2)), 0.0) == 1.0
        assert matern_eval(KernelSpec(Fraction(1, 2)), 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
        assert matern_eval(KernelSpec(Fraction(3, 2)), 2.0) == pytest.approx(3 * math.exp(-2), abs=1e-15)

    def test_default_lengthscale_makes_z_equal_r(self):
        for nu in HALF_INTEGERS:
            spec = KernelSpec(nu)
            assert spec.lengthscale == pytest.approx(math.sqrt(2 * float(nu)))
            assert spec.inv_scale == pytest.approx(1.0)

    @given(st.sampled_from(HALF_INTEGERS + [Fraction(7, 2)]), st.floats(0.05, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_bounded_and_decreasing(self, nu, ls):
        spec = KernelSpec(nu, ls)
        r = np.linspace(0.0, 10.0, 500)
        k = matern_eval(spec, r)
        assert k[0] == 1.0
        assert np.all(k > 0) and np.all(k <= 1)
        assert np.all(np.diff(k) < 0)


class TestSpec:
    @pytest.mark.parametrize("bad", [Fraction(1), Fraction(0), Fraction(-1, 2), Fraction(9, 2), "2"])
    def test_rejects_bad_nu(self, bad):
        with pytest.raises(ConfigError):
            KernelSpec(bad)

    def test_rejects_nonpositive_lengthscale(self):
        with pytest.raises(ConfigError):
            KernelSpec(Fraction(3, 2), 0.0)

    def test_text_round_trip(self):
        spec = KernelSpec(Fraction(5, 2), 0.37)
        assert KernelSpec.from_text(spec.to_text()) == spec
        text = spec.to_text()
        assert "family=matern" in text and "nu=5/2" in text


class TestFourier:
    def test_decay_rate_is_exact_fraction(self):
        assert fourier_decay_rate(KernelSpec(Fraction(1, 2))) == 1
        assert fourier_decay_rate(KernelSpec(Fraction(3, 2))) == 2

    def test_value_at_zero(self):
        spec = KernelSpec(Fraction(3, 2), 0.8)
        expected = fourier_constant(spec) * (2 * 1.5 / 0.8**2) ** (-2.0)
        assert matern_fourier(spec, 0.0) == pytest.approx(expected, rel=1e-14)

    def test_transform_integrates_back_to_one(self):
        # (1 / 2 pi) int k_hat = k(0) = 1
        from scipy.integrate import quad

        for nu in HALF_INTEGERS:
            spec = KernelSpec(nu, 0.6)
            val, _ = quad(lambda w: matern_fourier(spec, w), -np.inf, np.inf, limit=400)
            assert val / (2 * math.pi) == pytest.approx(1.0, rel=1e-7)

    def test_exponential_kernel_transform(self):
        spec = KernelSpec(Fraction(1, 2), 1.0)
        w = np.array([0.0, 0.5, 3.0])
        np.testing.assert_allclose(matern_fourier(spec, w), 2.0 / (1.0 + w**2), rtol=1e-13)

    @pytest.mark.parametrize("nu", HALF_INTEGERS)
    def test_closed_form_loglog_slope(self, nu):
        spec = KernelSpec(nu)
        w = np.array([1e2, 1e4])
        slope = np.diff(np.log(matern_fourier(spec, w)))[0] / np.diff(np.log(w))[0]
        assert abs(slope + 2 * (float(nu) + 0.5)) < 0.05

    @pytest.mark.parametrize("nu", HALF_INTEGERS)
    def test_empirical_decay(self, nu):
        m_hat = empirical_fourier_decay(KernelSpec(nu), 2**16)
        assert abs(m_hat - (float(nu) + 0.5)) < 0.1

    def test_empirical_decay_stable_under_refinement(self):
        spec = KernelSpec(Fraction(3, 2))
        a = empirical_fourier_decay(spec, 2**15)
        b = empirical_fourier_decay(spec, 2**16)
        assert abs(a - b) < 0.02


class TestGram:
    def test_single_point(self):
        np.testing.assert_array_equal(gram_matrix(KernelSpec(Fraction(3, 2)), [0.3]), [[1.0]])

    def test_coincident_points(self):
        K = gram_matrix(KernelSpec(Fraction(3, 2)), [0.4, 0.4])
        np.testing.assert_allclose(K, np.ones((2, 2)))
        np.testing.assert_allclose(np.linalg.eigvalsh(K), [0.0, 2.0], atol=1e-14)

    @pytest.mark.parametrize("n", [20, 200])
    def test_psd(self, n):
        rng = np.random.default_rng(n)
        for nu in HALF_INTEGERS:
            K = gram_matrix(KernelSpec(nu), rng.uniform(0, 1, n))
            np.testing.assert_array_equal(K, K.T)
            assert np.linalg.eigvalsh(K + 1e-10 * np.eye(n)).min() >= -1e-8
