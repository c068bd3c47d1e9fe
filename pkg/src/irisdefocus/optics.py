"""Thin-lens distance and defocus math, Gaussian blur, and spectral checks.

Frequencies are in cycles per pixel (cpp). Under that convention a Gaussian
blur of standard deviation ``sigma`` pixels has the continuous transfer
function ``exp(-2 pi^2 sigma^2 f^2)``. The angular-frequency form with
reciprocal width ``1/sigma`` is the same function with ``f = omega / (2 pi)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .image import EyeImage, to_uint8

# Calibrated camera constants of the reference eye tracker.
FOCAL_LENGTH_MM = 1.014
LENS_DIAMETER_MM = 1.05
PIXEL_PITCH_MM = 0.003
IRIS_WIDTH_MM = 11.0


@dataclass(frozen=True)
class OpticalConfig:
    focal_length_mm: float
    lens_diameter_mm: float
    pixel_pitch_mm: float
    sensor_to_lens_mm: float
    iris_width_mm: float = IRIS_WIDTH_MM

    def __post_init__(self):
        for name in ("focal_length_mm", "lens_diameter_mm", "pixel_pitch_mm",
                     "sensor_to_lens_mm", "iris_width_mm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.sensor_to_lens_mm <= self.focal_length_mm:
            raise ValueError("sensor_to_lens_mm must exceed focal_length_mm for a real image")

    @classmethod
    def from_reference_distance(
        cls,
        reference_distance_mm: float,
        focal_length_mm: float = FOCAL_LENGTH_MM,
        lens_diameter_mm: float = LENS_DIAMETER_MM,
        pixel_pitch_mm: float = PIXEL_PITCH_MM,
        iris_width_mm: float = IRIS_WIDTH_MM,
    ) -> "OpticalConfig":
        """Fix the sensor plane so that ``reference_distance_mm`` is in focus."""
        u = solve_lens_equation(focal_length_mm, reference_distance_mm)
        return cls(focal_length_mm, lens_diameter_mm, pixel_pitch_mm, u, iris_width_mm)

    def to_dict(self) -> dict:
        return {
            "focal_length_mm": self.focal_length_mm,
            "lens_diameter_mm": self.lens_diameter_mm,
            "pixel_pitch_mm": self.pixel_pitch_mm,
            "sensor_to_lens_mm": self.sensor_to_lens_mm,
            "iris_width_mm": self.iris_width_mm,
        }


@dataclass(frozen=True)
class DefocusResult:
    eye_distance_mm: float
    conjugate_plane_mm: float
    sigma_mm: float
    sigma_px: float
    clamped: bool = False  # eye was closer than the in-focus distance


def estimate_eye_distance(iris_width_px: float, config: OpticalConfig) -> float:
    """Lens-to-iris distance from the apparent iris width (similar triangles)."""
    if not iris_width_px > 0:
        raise ValueError("iris_width_px must be positive")
    w_img_mm = iris_width_px * config.pixel_pitch_mm
    return config.iris_width_mm * config.sensor_to_lens_mm / w_img_mm


def solve_lens_equation(focal_length_mm: float, object_distance_mm: float) -> float:
    """Image distance ``u`` from ``1/f = 1/d + 1/u``."""
    if object_distance_mm <= focal_length_mm:
        raise ValueError(
            f"object at {object_distance_mm} mm is inside the focal length "
            f"{focal_length_mm} mm; no real image"
        )
    return 1.0 / (1.0 / focal_length_mm - 1.0 / object_distance_mm)


def defocus_sigma(config: OpticalConfig, secure_distance_mm: float) -> DefocusResult:
    """Blur spread on the sensor when the eye moves to ``secure_distance_mm``.

    The sensor stays at ``config.sensor_to_lens_mm`` while the eye's image
    plane moves to ``u'``; a point then spreads over ``D (u - u') / u'`` mm.
    Eyes closer than the in-focus distance give the same blur by magnitude.
    """
    u = config.sensor_to_lens_mm
    u_prime = solve_lens_equation(config.focal_length_mm, secure_distance_mm)
    sigma_mm = config.lens_diameter_mm * (u - u_prime) / u_prime
    clamped = sigma_mm < 0
    if clamped:
        warnings.warn(
            "secure distance is closer than the in-focus distance; using |sigma|",
            stacklevel=2,
        )
        sigma_mm = -sigma_mm
    return DefocusResult(
        eye_distance_mm=secure_distance_mm,
        conjugate_plane_mm=u_prime,
        sigma_mm=sigma_mm,
        sigma_px=sigma_mm / config.pixel_pitch_mm,
        clamped=clamped,
    )


@dataclass(frozen=True)
class Kernel:
    taps: np.ndarray
    radius: int


def gaussian_kernel(sigma_px: float) -> Kernel:
    """Sampled 1-D Gaussian truncated at ``ceil(4 sigma)`` and renormalized."""
    if sigma_px < 0:
        raise ValueError("sigma_px must be non-negative")
    if sigma_px == 0:
        return Kernel(taps=np.ones(1), radius=0)
    radius = int(math.ceil(4.0 * sigma_px))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (x / sigma_px) ** 2)
    taps /= taps.sum()
    return Kernel(taps=taps, radius=radius)


def _convolve_axis(values: np.ndarray, kernel: Kernel, axis: int, pad_mode: str) -> np.ndarray:
    r = kernel.radius
    if r == 0:
        return values.copy()
    pad = [(0, 0)] * values.ndim
    pad[axis] = (r, r)
    padded = np.pad(values, pad, mode=pad_mode)
    n = values.shape[axis]
    out = np.zeros_like(values, dtype=np.float64)
    for i, w in enumerate(kernel.taps):
        out += w * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def blur_array(values: np.ndarray, sigma_px: float, border: str = "replicate") -> np.ndarray:
    """Separable Gaussian blur of a float raster, horizontal pass first.

    ``border`` is ``"replicate"`` (default) or ``"periodic"``.
    """
    modes = {"replicate": "edge", "periodic": "wrap"}
    if border not in modes:
        raise ValueError(f"unknown border handling {border!r}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("expected a non-empty 2-D raster")
    kernel = gaussian_kernel(sigma_px)
    out = _convolve_axis(values, kernel, axis=1, pad_mode=modes[border])
    return _convolve_axis(out, kernel, axis=0, pad_mode=modes[border])


def gaussian_blur(image: EyeImage, sigma_px: float) -> EyeImage:
    if sigma_px < 0:
        raise ValueError("sigma_px must be non-negative")
    if sigma_px == 0:
        return image.with_pixels(image.pixels.copy())
    return image.with_pixels(to_uint8(blur_array(image.pixels, sigma_px)))


def spectral_attenuation(sigma_px: float, freq_cpp: float | np.ndarray) -> float | np.ndarray:
    """Gain of a Gaussian blur at spatial frequency ``freq_cpp``."""
    if sigma_px < 0:
        raise ValueError("sigma_px must be non-negative")
    f = np.asarray(freq_cpp, dtype=np.float64)
    if np.any(f < 0) or np.any(f > 0.5):
        raise ValueError("frequency must lie in [0, 0.5] cycles/pixel")
    gain = np.exp(-2.0 * math.pi ** 2 * sigma_px ** 2 * f ** 2)
    return float(gain) if gain.ndim == 0 else gain


class BandEnergy(NamedTuple):
    fraction: float
    degenerate: bool


def radial_frequency(shape: tuple[int, int]) -> np.ndarray:
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    return np.hypot(fy, fx)


def band_energy_fraction(image: EyeImage | np.ndarray, cutoff_cpp: float) -> BandEnergy:
    """Share of non-DC spectral power at radial frequencies above ``cutoff_cpp``."""
    values = image.pixels if isinstance(image, EyeImage) else np.asarray(image)
    values = values.astype(np.float64)
    if values.ndim != 2 or min(values.shape) < 16:
        raise ValueError("band_energy_fraction needs at least a 16x16 raster")
    if not 0 < cutoff_cpp < 0.5:
        raise ValueError("cutoff must lie strictly inside (0, 0.5)")
    if np.ptp(values) == 0:
        return BandEnergy(0.0, True)
    power = np.abs(np.fft.fft2(values)) ** 2
    power[0, 0] = 0.0
    total = power.sum()
    high = power[radial_frequency(values.shape) > cutoff_cpp].sum()
    return BandEnergy(float(high / total), False)


@dataclass(frozen=True)
class SeparabilityModel:
    """Tracking-feature width, iris band and detectability floor.

    ``epsilon`` is the smallest frequency-domain standard deviation (cpp) at
    which the blurred tracking feature still counts as detectable. It only
    feeds :meth:`max_sigma`; detectability in the pipeline is decided by the
    pupil detector itself.
    """

    sigma_c_px: float
    band_lo_cpp: float
    band_hi_cpp: float
    epsilon: float = 1e-3

    def __post_init__(self):
        if not self.sigma_c_px > 0:
            raise ValueError("sigma_c_px must be positive")
        if not 0 < self.band_lo_cpp < self.band_hi_cpp <= 0.5:
            raise ValueError("need 0 < band_lo < band_hi <= 0.5")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def iris_band_gain(self, sigma_px: float) -> float:
        """Largest gain the blur leaves anywhere in the iris band."""
        return spectral_attenuation(sigma_px, self.band_lo_cpp)

    def tracking_energy_retained(self, sigma_px: float) -> float:
        """Fraction of a 2-D Gaussian feature's spectral energy kept by the blur.

        Both spectra are Gaussian, so the ratio of the energy integrals is
        ``sigma_c^2 / (sigma_c^2 + sigma^2)``.
        """
        s2 = self.sigma_c_px ** 2
        return s2 / (s2 + sigma_px ** 2)

    def blurred_feature_bandwidth(self, sigma_px: float) -> float:
        """Frequency-domain standard deviation (cpp) of the blurred feature."""
        return 1.0 / (2.0 * math.pi * math.hypot(self.sigma_c_px, sigma_px))

    def min_sigma(self, residual_gain: float = 0.01) -> float:
        """Smallest blur that pushes the whole iris band below ``residual_gain``."""
        return math.sqrt(-math.log(residual_gain) / (2.0 * math.pi ** 2)) / self.band_lo_cpp

    def max_sigma(self) -> float:
        """Largest blur keeping the feature bandwidth at or above ``epsilon``."""
        total = 1.0 / (2.0 * math.pi * self.epsilon)
        if total <= self.sigma_c_px:
            return 0.0
        return math.sqrt(total ** 2 - self.sigma_c_px ** 2)
