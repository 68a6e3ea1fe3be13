import numpy as np
import pytest

from kno.numerics import (ComplexSpectrum, Rng, fft_forward, fft_inverse,
                          gauss_legendre, make_grid, mode_values)


class TestMakeGrid:
    def test_bgk_grid_spacing_and_weight_sum(self):
        g = make_grid(1, 3.0, 64, "trapezoid")
        assert g.spacing == pytest.approx(6.0 / 63)
        assert np.sum(g.axis_weights) == pytest.approx(6.0)
        # trapezoid rule: half weight at both endpoints
        assert g.axis_weights[0] == pytest.approx(0.5 * g.spacing)
        assert g.axis_weights[-1] == pytest.approx(0.5 * g.spacing)
        assert np.all(g.axis_weights[1:-1] == g.axis_weights[1])

    def test_periodic_grid_spacing_and_weight_sum(self):
        L = 4.8437
        g = make_grid(2, L, 16, "periodic")
        assert g.spacing == pytest.approx(2 * L / 16)
        assert np.sum(g.quad_weights) == pytest.approx((2 * L) ** 2)
        assert np.all(g.quad_weights == g.quad_weights.flat[0])

    def test_points_increasing_and_symmetric(self):
        for kind in ("trapezoid", "periodic"):
            g = make_grid(1, 2.5, 16, kind)
            assert np.all(np.diff(g.axis) > 0)
            np.testing.assert_allclose(g.axis, -g.axis[::-1], atol=1e-15)

    def test_trapezoid_exact_for_linear_function(self):
        g = make_grid(1, 3.0, 64, "trapezoid")
        vals = 2.0 * g.axis + 1.0
        # integral of 2v+1 over [-3, 3] is 6
        assert np.sum(g.axis_weights * vals) == pytest.approx(6.0, abs=1e-13)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            make_grid(1, 3.0, 2, "trapezoid")
        with pytest.raises(ValueError):
            make_grid(1, 0.0, 64, "trapezoid")
        with pytest.raises(ValueError):
            make_grid(1, -1.0, 64, "periodic")
        with pytest.raises(ValueError):
            make_grid(3, 1.0, 8, "periodic")
        with pytest.raises(ValueError):
            make_grid(1, 1.0, 8, "simpson")

    def test_grid_arrays_immutable(self):
        g = make_grid(1, 3.0, 8, "trapezoid")
        with pytest.raises(ValueError):
            g.axis[0] = 0.0


class TestFft:
    def test_constant_field_dc_component(self):
        spec = fft_forward(np.full(16, 2.5))
        assert spec.coefficients[0] == pytest.approx(2.5 * 16)
        assert np.max(np.abs(spec.coefficients[1:])) < 1e-12

    def test_round_trip_identity(self):
        rng = Rng(1)
        for shape in [(32,), (8, 8)]:
            x = rng.uniform(-1, 1, size=shape)
            back = fft_inverse(fft_forward(x))
            rel = np.max(np.abs(back - x)) / np.max(np.abs(x))
            assert rel < 1e-13

    def test_cosine_two_modes_direct_dft_oracle(self):
        # direct DFT summation oracle on N=8
        n, k0, L = 8, 3, 1.0
        g = make_grid(1, L, n, "periodic")
        field = np.cos(np.pi * g.axis * k0 / L)
        oracle = np.array([np.sum(field * np.exp(-2j * np.pi * k *
                                                 np.arange(n) / n))
                           for k in range(n)])
        spec = fft_forward(field)
        np.testing.assert_allclose(spec.coefficients, oracle, atol=1e-12)
        mags = np.abs(spec.coefficients)
        nonzero = np.where(mags > 1e-9)[0]
        assert set(mode_values(n)[nonzero]) == {k0, -k0}
        assert mags[nonzero[0]] == pytest.approx(mags[nonzero[1]])

    def test_parseval(self):
        rng = Rng(2)
        x = rng.uniform(-1, 1, size=(16, 16))
        spec = fft_forward(x)
        lhs = np.sum(np.abs(x) ** 2)
        rhs = np.sum(np.abs(spec.coefficients) ** 2) / 16**2
        assert abs(lhs - rhs) / lhs < 1e-12

    def test_linearity(self):
        rng = Rng(3)
        x = rng.uniform(-1, 1, size=32)
        y = rng.uniform(-1, 1, size=32)
        lhs = fft_forward(2.0 * x - 0.5 * y).coefficients
        rhs = 2.0 * fft_forward(x).coefficients - 0.5 * fft_forward(y).coefficients
        assert np.max(np.abs(lhs - rhs)) < 1e-13 * np.max(np.abs(lhs))

    def test_rejects_non_power_of_two_and_mismatch(self):
        with pytest.raises(ValueError):
            fft_forward(np.zeros(12))
        with pytest.raises(ValueError):
            fft_forward(np.zeros((8, 4)))
        with pytest.raises(ValueError):
            ComplexSpectrum(1, 8, np.zeros(4, dtype=complex))


class TestRng:
    def test_uniform_mean(self):
        r = Rng(0)
        draws = r.uniform(0.0, 1.0, size=100_000)
        assert 0.49 <= np.mean(draws) <= 0.51

    def test_degenerate_interval_rejected(self):
        r = Rng(0)
        with pytest.raises(ValueError):
            r.uniform(1.0, 1.0)
        with pytest.raises(ValueError):
            r.uniform(2.0, 1.0)

    def test_same_seed_identical_streams(self):
        a = Rng(123).uniform(0, 1, size=64)
        b = Rng(123).uniform(0, 1, size=64)
        np.testing.assert_array_equal(a, b)

    def test_sign_values(self):
        s = Rng(5).sign(size=1000)
        assert set(np.unique(s)) == {-1, 1}

    def test_spawn_and_streams_differ(self):
        base = Rng(7)
        a = base.spawn(1).uniform(0, 1, size=8)
        b = base.spawn(2).uniform(0, 1, size=8)
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, Rng(8).uniform(0, 1, size=8))


def test_gauss_legendre_polynomial_exactness():
    x, w = gauss_legendre(6, 0.0, 2.0)
    # exact for degree <= 11: check v^7 over [0, 2] = 2^8/8 = 32
    assert np.sum(w * x**7) == pytest.approx(32.0, rel=1e-13)
    with pytest.raises(ValueError):
        gauss_legendre(0, 0.0, 1.0)
