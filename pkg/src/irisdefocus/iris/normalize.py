"""Rubber-sheet unwrapping of the iris annulus."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from ..image import EyeImage
from .segment import IrisBoundary


@dataclass(frozen=True)
class NormalizedIris:
    """``raster[i, j]``: radial fraction i (pupil -> limbus), angle j."""

    raster: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.raster.shape != self.mask.shape:
            raise ValueError("raster and mask shapes differ")


def normalize(
    image: EyeImage,
    boundary: IrisBoundary,
    h_radial: int = 20,
    w_angular: int = 240,
    eyelid_k: float = 2.0,
) -> NormalizedIris:
    """Sample the iris on ``h_radial`` x ``w_angular`` polar points.

    Each ray runs from the pupil circle to the limbus circle, so
    non-concentric boundaries are handled. Samples are bilinear, radial
    fractions are cell centres ``(i + 0.5) / h_radial``. Samples outside the
    image are masked and left at zero. Samples brighter than the iris mean
    plus ``eyelid_k`` standard deviations (and at least half a gray level),
    both estimated per radial row on the lower half of the annulus, are
    masked as eyelid.
    """
    if h_radial < 8 or w_angular < 64:
        raise ValueError("need h_radial >= 8 and w_angular >= 64")
    h, w = image.height, image.width
    p, l = boundary.pupil, boundary.limbus
    if p.x < 0 or p.x > w - 1 or p.y < 0 or p.y > h - 1:
        raise ValueError("pupil centre lies outside the image")

    theta = 2.0 * math.pi * np.arange(w_angular) / w_angular
    rho = (np.arange(h_radial) + 0.5) / h_radial
    cos, sin = np.cos(theta), np.sin(theta)
    x_in, y_in = p.x + p.r * cos, p.y + p.r * sin
    x_out, y_out = l.x + l.r * cos, l.y + l.r * sin
    xs = (1.0 - rho[:, None]) * x_in[None, :] + rho[:, None] * x_out[None, :]
    ys = (1.0 - rho[:, None]) * y_in[None, :] + rho[:, None] * y_out[None, :]

    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    raster = np.zeros((h_radial, w_angular))
    raster[inside] = map_coordinates(
        image.pixels.astype(np.float64), [ys[inside], xs[inside]], order=1
    )
    mask = inside.copy()

    # Per radial row, so the pupil-to-sclera brightness gradient does not
    # inflate the spread.
    lower = inside & (sin[None, :] > 0)
    for i in range(h_radial):
        ref = raster[i, lower[i]]
        if ref.size >= 2:
            mask[i] &= raster[i] <= ref.mean() + max(eyelid_k * ref.std(), 0.5)
    return NormalizedIris(raster, mask)
