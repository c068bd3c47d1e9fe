"""Pupil and limbus localisation with the integro-differential operator.

For a candidate centre the operator takes the mean intensity along circles of
growing radius, differentiates it in radius, smooths the derivative and keeps
the strongest rise that is present all around the contour. The pupil is
searched first on a 4x downsampled image and refined at full resolution; the limbus search is then restricted to centres
within a few pixels of the pupil centre and to the lateral/lower arc, which
the upper eyelid does not cover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d, map_coordinates

from ..image import Circle, EyeImage, Truth


class SegmentationError(RuntimeError):
    """No credible pupil/limbus boundary in the frame."""


@dataclass(frozen=True)
class IrisBoundary:
    pupil: Circle
    limbus: Circle
    confidence: float = 1.0

    def __post_init__(self):
        if not self.pupil.r < self.limbus.r:
            raise ValueError("pupil radius must be smaller than limbus radius")
        d = math.hypot(self.pupil.x - self.limbus.x, self.pupil.y - self.limbus.y)
        if d >= self.limbus.r:
            raise ValueError("pupil centre must lie inside the limbus circle")


@dataclass(frozen=True)
class SegmentParams:
    pupil_radius_range: tuple[float, float] = (10.0, 48.0)
    limbus_max_radius: float = 115.0
    limbus_min_gap: float = 8.0
    concentric_tol_px: float = 5.0
    limbus_arc_deg: tuple[float, float] = (-20.0, 200.0)  # y axis points down
    downsample: int = 4
    confidence_floor: float = 0.05


def boundary_from_truth(truth: Truth) -> IrisBoundary:
    """Segmentation read from generator ground truth (oracle mode)."""
    return IrisBoundary(truth.pupil, truth.limbus, 1.0)


N_SECTORS = 8
FINE_SMOOTH = 3.0  # radius samples (0.5 px each)


def _sector_means(img, cx, cy, radii, angles, order=1):
    """Mean intensity on circle arcs: shape (n_centres, n_radii, N_SECTORS).

    ``angles`` are split into ``N_SECTORS`` consecutive runs of equal length.
    """
    cos, sin = np.cos(angles), np.sin(angles)
    xs = cx[:, None, None] + radii[None, :, None] * cos[None, None, :]
    ys = cy[:, None, None] + radii[None, :, None] * sin[None, None, :]
    vals = map_coordinates(img, [ys.ravel(), xs.ravel()], order=order, mode="nearest")
    vals = vals.reshape(xs.shape[0], xs.shape[1], N_SECTORS, -1)
    return vals.mean(axis=3)


def _contour_means(img, cx, cy, radii, angles, order=1):
    return _sector_means(img, cx, cy, radii, angles, order).mean(axis=2)


def _operator(sector_means, smooth=1.0):
    """Smoothed radial derivative, penalised when it is uneven around the contour.

    A true boundary rises on every arc; a circle grazing some other edge only
    rises on a few, so the spread across arcs is subtracted from the mean.
    ``smooth`` is the Gaussian scale of the derivative smoothing, in radius
    samples; a symmetric kernel leaves the peak of a symmetric edge in place.
    """
    d = np.diff(sector_means, axis=1)
    sm = gaussian_filter1d(d, smooth, axis=1, mode="nearest")
    return sm.mean(axis=2) - sm.std(axis=2)


def _best(score, cx, cy, radii):
    """Centre/radius of the largest score; the radius sits between samples."""
    idx = int(np.argmax(score))
    c, r = np.unravel_index(idx, score.shape)
    radius = 0.5 * (radii[r] + radii[r + 1])
    return float(score[c, r]), float(cx[c]), float(cy[c]), radius


def _edge_step(img, x, y, r, angles, half_width=4.0):
    """Intensity rise across a found circle, sampled just inside and outside."""
    radii = np.array([max(r - half_width, 0.5), r + half_width])
    m = _contour_means(img, np.array([x]), np.array([y]), radii, angles)[0]
    return float(m[1] - m[0])


def _pupil(img, params, dark_level, contrast):
    h, w = img.shape
    k = params.downsample
    hs, ws = h // k, w // k
    small = img[:hs * k, :ws * k].reshape(hs, k, ws, k).mean(axis=(1, 3))
    rmin, rmax = params.pupil_radius_range
    # candidate centres: dark coarse pixels away from the border
    margin = int(math.ceil(rmin / k))
    yy, xx = np.nonzero(small[margin:hs - margin, margin:ws - margin] < dark_level)
    if yy.size == 0:
        raise SegmentationError("no dark region to seed the pupil search")
    cy = (yy + margin).astype(np.float64)
    cx = (xx + margin).astype(np.float64)
    radii = np.arange(rmin / k, rmax / k + 0.5, 0.5)
    angles = np.linspace(0, 2 * math.pi, 32, endpoint=False)
    sectors = _sector_means(small, cx, cy, radii, angles, order=0)
    means = sectors.mean(axis=2)
    score = _operator(sectors)
    # the rise must start from dark pupil intensities
    score[means[:, :-1] > dark_level] = -np.inf
    if not np.isfinite(score).any():
        raise SegmentationError("no dark-to-mid transition found")
    _, x0, y0, r0 = _best(score, cx, cy, radii)
    x0, y0, r0 = (x0 + 0.5) * k - 0.5, (y0 + 0.5) * k - 0.5, r0 * k

    # Full-resolution refinement. The dark-start test is not repeated: on a
    # blurred edge the contour just inside the true radius is already brighter
    # than the dark level, and the coarse stage has ruled out the limbus.
    angles = np.linspace(0, 2 * math.pi, 96, endpoint=False)
    x, y, r = x0, y0, r0
    for step, reach, rreach in ((1.0, 4.0, 6.0), (0.5, 1.0, 2.0)):
        offs = np.arange(-reach, reach + step / 2, step)
        gx, gy = np.meshgrid(x + offs, y + offs)
        cx, cy = gx.ravel(), gy.ravel()
        radii = np.arange(max(rmin, r - rreach), min(rmax, r + rreach) + 0.25, 0.5)
        _, x, y, r = _best(_operator(_sector_means(img, cx, cy, radii, angles), FINE_SMOOTH),
                           cx, cy, radii)
    return Circle(x, y, r), _edge_step(img, x, y, r, angles) / contrast


def _limbus(img, pupil, params, contrast):
    tol = params.concentric_tol_px
    offs = np.arange(-tol, tol + 0.5, 1.0)
    gx, gy = np.meshgrid(pupil.x + offs, pupil.y + offs)
    keep = np.hypot(gx - pupil.x, gy - pupil.y) <= tol
    cx, cy = gx[keep], gy[keep]
    h, w = img.shape
    rmax = min(params.limbus_max_radius, max(h, w))
    radii = np.arange(pupil.r + params.limbus_min_gap, rmax, 1.0)
    if radii.size < 4:
        raise SegmentationError("no room for a limbus outside the pupil")
    a0, a1 = np.deg2rad(params.limbus_arc_deg)
    angles = np.linspace(a0, a1, 8 * N_SECTORS)
    _, x, y, r = _best(_operator(_sector_means(img, cx, cy, radii, angles), FINE_SMOOTH / 2),
                       cx, cy, radii)
    # refine radius and centre on a half-pixel lattice
    offs = np.arange(-1.0, 1.25, 0.5)
    gx, gy = np.meshgrid(x + offs, y + offs)
    cx, cy = gx.ravel(), gy.ravel()
    radii = np.arange(r - 3.0, r + 3.25, 0.5)
    _, x, y, r = _best(_operator(_sector_means(img, cx, cy, radii, angles), FINE_SMOOTH),
                       cx, cy, radii)
    return Circle(x, y, r), _edge_step(img, x, y, r, angles) / contrast


def segment_iris(image: EyeImage, params: SegmentParams = SegmentParams()) -> IrisBoundary:
    """Locate pupil and limbus circles.

    Raises
    ------
    SegmentationError
        When either operator response falls below ``params.confidence_floor``
        (for instance on flat or washed-out frames).
    """
    img = image.pixels.astype(np.float64)
    if min(img.shape) < 64:
        raise ValueError("segmentation needs at least a 64x64 image")
    lo, med = np.percentile(img, [1, 50])
    contrast = med - lo
    if contrast <= 0:
        raise SegmentationError("image has no intensity contrast")
    dark_level = lo + 0.35 * contrast
    pupil, pconf = _pupil(img, params, dark_level, contrast)
    limbus, lconf = _limbus(img, pupil, params, contrast)
    conf = float(np.clip(min(pconf, lconf), 0.0, 1.0))
    if conf < params.confidence_floor:
        raise SegmentationError(f"operator response {conf:.3f} below floor")
    try:
        return IrisBoundary(pupil, limbus, conf)
    except ValueError as exc:
        raise SegmentationError(str(exc)) from exc
