"""1-D Log-Gabor phase encoding of normalized irises."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .normalize import NormalizedIris

# Defaults: one filter, wavelength 18 angular samples, sigma/f0 = 0.5.
F0_CPP = 1.0 / 18.0
SIGMA_OVER_F0 = 0.5
AMPLITUDE_FLOOR = 1e-3


@dataclass(frozen=True)
class IrisCode:
    """Phase bits and validity mask, both shaped ``(H, W, 2)``.

    The last axis holds the (real, imaginary) sign bits of one sample.
    """

    bits: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        mask = np.asarray(self.mask, dtype=bool)
        if bits.shape != mask.shape or bits.ndim != 3 or bits.shape[2] != 2:
            raise ValueError("bits and mask must share an (H, W, 2) shape")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape[0], self.bits.shape[1]

    @property
    def noise_fraction(self) -> float:
        return 1.0 - self.mask.sum() / self.mask.size

    def rotate(self, columns: int) -> "IrisCode":
        """Circularly shift the angular axis by ``columns`` samples."""
        return IrisCode(np.roll(self.bits, columns, axis=1),
                        np.roll(self.mask, columns, axis=1))

    def packed_bits(self) -> np.ndarray:
        return np.packbits(self.bits.ravel(), bitorder="little")

    def packed_mask(self) -> np.ndarray:
        return np.packbits(self.mask.ravel(), bitorder="little")


def log_gabor_response(n: int, f0_cpp: float, sigma_over_f0: float) -> np.ndarray:
    """Frequency response on ``np.fft.fftfreq(n)``: positive side only, zero DC."""
    f = np.fft.fftfreq(n)
    g = np.zeros(n)
    pos = f > 0
    g[pos] = np.exp(-np.log(f[pos] / f0_cpp) ** 2 / (2.0 * np.log(sigma_over_f0) ** 2))
    return g


def encode(
    normalized: NormalizedIris,
    f0_cpp: float = F0_CPP,
    sigma_over_f0: float = SIGMA_OVER_F0,
    amplitude_floor: float = AMPLITUDE_FLOOR,
) -> IrisCode:
    """Filter every angular row and quantize the complex response to two bits.

    Masked samples are replaced by the mean of the row's valid samples before
    filtering. A bit pair is masked where the source sample is masked or the
    response modulus is below ``amplitude_floor`` times the row's RMS
    intensity.
    """
    if not 0 < f0_cpp < 0.5:
        raise ValueError("f0 must lie in (0, 0.5) cycles per sample")
    if not 0 < sigma_over_f0 < 1:
        raise ValueError("sigma_over_f0 must lie in (0, 1)")
    raster = normalized.raster.astype(np.float64).copy()
    src_mask = normalized.mask
    h, w = raster.shape
    for i in range(h):
        valid = src_mask[i]
        raster[i, ~valid] = raster[i, valid].mean() if valid.any() else 0.0

    g = log_gabor_response(w, f0_cpp, sigma_over_f0)
    response = np.fft.ifft(np.fft.fft(raster, axis=1) * g[None, :], axis=1)

    rms = np.sqrt(np.mean(raster ** 2, axis=1, keepdims=True))
    strong = np.abs(response) >= amplitude_floor * rms
    if not src_mask.any():
        strong[:] = False
    valid = src_mask & strong
    bits = np.stack([response.real > 0, response.imag > 0], axis=2)
    mask = np.stack([valid, valid], axis=2)
    return IrisCode(bits, mask)
