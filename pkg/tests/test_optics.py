import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from irisdefocus.image import EyeImage
from irisdefocus.optics import (
    OpticalConfig,
    SeparabilityModel,
    band_energy_fraction,
    blur_array,
    defocus_sigma,
    estimate_eye_distance,
    gaussian_blur,
    gaussian_kernel,
    solve_lens_equation,
    spectral_attenuation,
)


@pytest.fixture
def reference():
    return OpticalConfig.from_reference_distance(25.1)


class TestLensGeometry:
    def test_unit_magnification(self, reference):
        w_px = reference.iris_width_mm / reference.pixel_pitch_mm
        assert estimate_eye_distance(w_px, reference) == pytest.approx(reference.sensor_to_lens_mm)

    @pytest.mark.parametrize("w_px, d", [(150, 25.83), (100, 38.75)])
    def test_worked_distances(self, w_px, d):
        cfg = OpticalConfig(1.014, 1.05, 0.003, 1.0567)
        assert estimate_eye_distance(w_px, cfg) == pytest.approx(d, abs=0.01)

    def test_distance_decreases_with_width(self, reference):
        d = [estimate_eye_distance(w, reference) for w in (50, 100, 150, 200)]
        assert all(a > b for a, b in zip(d, d[1:]))

    def test_rejects_non_positive_width(self, reference):
        with pytest.raises(ValueError):
            estimate_eye_distance(0, reference)

    def test_lens_equation(self):
        assert solve_lens_equation(1.014, 1e9) == pytest.approx(1.014, abs=1e-6)
        assert solve_lens_equation(1.014, 2.028) == pytest.approx(2.028)
        assert solve_lens_equation(1.014, 25.1) == pytest.approx(1.0567, abs=1e-4)

    def test_no_real_image(self):
        with pytest.raises(ValueError):
            solve_lens_equation(1.014, 1.0)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            OpticalConfig(1.014, 1.05, 0.003, 1.0)
        with pytest.raises(ValueError):
            OpticalConfig(1.014, -1.0, 0.003, 1.05)

    def test_round_trip_from_rendered_width(self, reference):
        # an iris of known distance projects to W u'/d... with the sensor at u
        for d in (20.0, 25.1, 33.1):
            w_px = reference.iris_width_mm * reference.sensor_to_lens_mm / d / reference.pixel_pitch_mm
            assert estimate_eye_distance(round(w_px), reference) == pytest.approx(d, rel=0.02)


class TestDefocusSigma:
    def test_published_constants(self, reference):
        res = defocus_sigma(reference, 33.1)
        assert res.sigma_px == pytest.approx(3.6, abs=0.05)
        assert res.sigma_px == pytest.approx(res.sigma_mm / reference.pixel_pitch_mm)

    def test_zero_at_reference(self, reference):
        assert defocus_sigma(reference, 25.1).sigma_px == 0.0

    def test_linear_in_aperture(self, reference):
        wide = OpticalConfig.from_reference_distance(25.1, lens_diameter_mm=2.1)
        assert defocus_sigma(wide, 33.1).sigma_px == pytest.approx(
            2 * defocus_sigma(reference, 33.1).sigma_px)

    def test_monotone_both_directions(self, reference):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            far = [defocus_sigma(reference, d).sigma_px for d in (26, 30, 35, 40)]
            near = [defocus_sigma(reference, d).sigma_px for d in (24, 20, 15, 10)]
        assert all(a < b for a, b in zip(far, far[1:]))
        assert all(a < b for a, b in zip(near, near[1:]))

    def test_closer_is_clamped_with_warning(self, reference):
        with pytest.warns(UserWarning):
            res = defocus_sigma(reference, 20.0)
        assert res.clamped and res.sigma_px > 0


class TestKernel:
    def test_identity(self):
        k = gaussian_kernel(0)
        assert k.taps.tolist() == [1.0] and k.radius == 0

    def test_center_tap(self):
        k = gaussian_kernel(1.0)
        x = np.arange(-4, 5)
        z = np.sum(np.exp(-0.5 * x ** 2) / math.sqrt(2 * math.pi))
        assert k.taps[4] == pytest.approx(0.398942 / z, rel=1e-5)

    @given(st.floats(0.1, 12.0))
    def test_normalized_and_symmetric(self, sigma):
        k = gaussian_kernel(sigma)
        assert abs(k.taps.sum() - 1.0) <= 1e-9
        assert np.allclose(k.taps, k.taps[::-1])
        assert k.radius == math.ceil(4 * sigma)

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            gaussian_kernel(-1)


class TestBlur:
    def test_zero_sigma_bit_identical(self):
        px = np.random.default_rng(0).integers(0, 256, (40, 50), dtype=np.uint8)
        out = gaussian_blur(EyeImage(px), 0)
        assert np.array_equal(out.pixels, px)

    def test_constant_unchanged(self):
        px = np.full((30, 30), 137, np.uint8)
        assert np.array_equal(gaussian_blur(EyeImage(px), 3.0).pixels, px)

    def test_impulse_is_outer_product(self):
        img = np.zeros((41, 41))
        img[20, 20] = 1.0
        k = gaussian_kernel(2.5)
        out = blur_array(img, 2.5)
        expected = np.zeros_like(img)
        r = k.radius
        expected[20 - r:21 + r, 20 - r:21 + r] = np.outer(k.taps, k.taps)
        assert np.max(np.abs(out - expected)) <= 1e-6

    @pytest.mark.parametrize("sigma", [1.0, 2.0, 3.7])
    def test_matches_scipy_correlate(self, sigma):
        img = np.random.default_rng(1).random((48, 64)) * 255
        k = gaussian_kernel(sigma).taps
        ref = ndimage.correlate1d(ndimage.correlate1d(img, k, axis=1, mode="nearest"),
                                  k, axis=0, mode="nearest")
        assert np.max(np.abs(blur_array(img, sigma) - ref)) < 1e-9

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            blur_array(np.zeros((0, 4)), 1.0)
        with pytest.raises(ValueError):
            blur_array(np.zeros((4, 4)), 1.0, border="mirror")

    def test_output_shape_and_dtype(self):
        px = np.random.default_rng(2).integers(0, 256, (33, 17), dtype=np.uint8)
        out = gaussian_blur(EyeImage(px), 1.5)
        assert out.pixels.shape == px.shape and out.pixels.dtype == np.uint8


class TestSpectral:
    def test_worked_gains(self):
        assert spectral_attenuation(3.0, 0.0) == 1.0
        assert spectral_attenuation(5.0, 0.1) == pytest.approx(0.0072, abs=5e-5)
        assert spectral_attenuation(1.0, 0.5) == pytest.approx(0.0072, abs=5e-5)

    def test_band_edge_gain_at_sigma5(self):
        # closed form; this is the value at the default texture band edge
        assert spectral_attenuation(5.0, 0.08) == pytest.approx(
            math.exp(-2 * math.pi ** 2 * 25 * 0.0064))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            spectral_attenuation(1.0, 0.6)

    def test_constant_image_is_degenerate(self):
        res = band_energy_fraction(np.full((32, 32), 9.0), 0.2)
        assert res.fraction == 0.0 and res.degenerate

    @staticmethod
    def _bandpassed(lo, hi, n=128, seed=3):
        rng = np.random.default_rng(seed)
        f = np.hypot(np.fft.fftfreq(n)[:, None], np.fft.fftfreq(n)[None, :])
        spec = np.fft.fft2(rng.standard_normal((n, n))) * ((f >= lo) & (f <= hi))
        img = np.fft.ifft2(spec).real
        return 128 + 40 * img / img.std()

    def test_band_energy_of_bandpassed_noise(self):
        img = self._bandpassed(0.2, 0.4)
        assert band_energy_fraction(img, 0.15).fraction >= 0.95

    def test_blur_moves_energy_below_cutoff(self):
        # The fraction is relative, so a pure band image stays "all high"
        # however weak it gets; a faint low-frequency layer (as in any eye
        # image) gives the blurred power somewhere to remain.
        n = 128
        xx = np.arange(n)[None, :].repeat(n, axis=0)
        img = self._bandpassed(0.2, 0.4, n) + 7.0 * np.sin(2 * np.pi * 2 * xx / n)
        assert band_energy_fraction(img, 0.15).fraction >= 0.95
        blurred = np.rint(blur_array(img, 5.0, border="periodic"))
        assert band_energy_fraction(blurred, 0.15).fraction <= 0.05

    def test_periodic_blur_is_frequency_multiplication(self):
        img = self._bandpassed(0.02, 0.45, 64, seed=5)
        for sigma in (1, 2, 3, 5, 8):
            k = gaussian_kernel(sigma)
            kern = np.zeros(64)
            for i, w in enumerate(k.taps):
                kern[(i - k.radius) % 64] += w
            h = np.fft.fft(kern)
            ref = np.fft.ifft2(np.fft.fft2(img) * np.outer(h, h)).real
            assert np.max(np.abs(blur_array(img, sigma, border="periodic") - ref)) <= 1e-3


class TestSeparability:
    def test_iris_destroyed_tracking_kept(self):
        m = SeparabilityModel(sigma_c_px=15.0, band_lo_cpp=0.1, band_hi_cpp=0.5)
        assert m.iris_band_gain(5.0) <= 0.01
        assert m.tracking_energy_retained(5.0) >= 0.5

    def test_min_sigma_reaches_residual(self):
        m = SeparabilityModel(15.0, 0.1, 0.5)
        s = m.min_sigma(0.01)
        assert m.iris_band_gain(s) == pytest.approx(0.01)

    def test_invalid_band(self):
        with pytest.raises(ValueError):
            SeparabilityModel(15.0, 0.3, 0.2)
