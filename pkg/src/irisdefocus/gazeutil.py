"""Gaze-tracking utility under defocus.

Pupil detection, a polynomial gaze calibration, angular accuracy and
precision, the CRR-versus-distance sigmoid and the gaze retargeting used by
the avatar stimuli, plus a small synthetic target-viewing simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .image import EyeImage
from .logistic import fit_logistic, logistic
from .optics import IRIS_WIDTH_MM
from .synth import EyeScene, IrisIdentity, mix_seed, render_eye_image


@dataclass(frozen=True)
class PupilObservation:
    found: bool
    center: Optional[tuple[float, float]] = None
    radius: Optional[float] = None
    confidence: float = 0.0

    def __post_init__(self):
        if not self.found and (self.center is not None or self.radius is not None):
            raise ValueError("a missing pupil has no centre or radius")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class PupilDetector:
    percentile: float = 2.0
    min_area: int = 200
    max_area: int = 20000
    min_circularity: float = 0.6


def circularity(mask: np.ndarray) -> float:
    """``A^2 / (2 pi sum r^2)`` about the centroid: 1 for a disk, less otherwise."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return 0.0
    second = np.sum((xs - xs.mean()) ** 2 + (ys - ys.mean()) ** 2)
    if second == 0:
        return 1.0
    return float(min(1.0, xs.size ** 2 / (2.0 * math.pi * second)))


def detect_pupil(image: EyeImage, detector: PupilDetector = PupilDetector()) -> PupilObservation:
    """Dark-blob pupil detector.

    Pixels at or below the ``percentile``-th intensity are labelled into
    8-connected components; holes are filled so sensor noise does not
    perforate the blob. The largest component within the area bounds and
    above the circularity floor wins.
    """
    px = image.pixels.astype(np.float64)
    thr = np.percentile(px, detector.percentile)
    if thr >= px.max():
        return PupilObservation(False)  # flat image, nothing is darker
    labels, n = ndimage.label(px <= thr, structure=np.ones((3, 3), bool))
    if n == 0:
        return PupilObservation(False)
    areas = np.bincount(labels.ravel())[1:]
    for idx in np.argsort(-areas, kind="stable"):
        blob = ndimage.binary_fill_holes(labels == idx + 1)
        area = int(blob.sum())
        if not detector.min_area <= area <= detector.max_area:
            continue
        circ = circularity(blob)
        if circ < detector.min_circularity:
            continue
        ys, xs = np.nonzero(blob)
        return PupilObservation(True, (float(xs.mean()), float(ys.mean())),
                                math.sqrt(area / math.pi), circ)
    return PupilObservation(False)


def detection_rate(observations: Sequence[PupilObservation]) -> float:
    if len(observations) == 0:
        raise ValueError("no observations")
    return sum(o.found for o in observations) / len(observations)


class CalibrationError(ValueError):
    pass


def _poly_terms(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])


@dataclass(frozen=True)
class GazeMapping:
    """Degree-2 polynomial per screen axis over terms 1, x, y, x^2, xy, y^2."""

    coeffs_x: tuple[float, ...]
    coeffs_y: tuple[float, ...]
    residual_rms: float

    def __call__(self, pupil_centers) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pupil_centers, dtype=np.float64))
        t = _poly_terms(pts)
        return np.column_stack([t @ np.asarray(self.coeffs_x), t @ np.asarray(self.coeffs_y)])


def calibrate_polynomial(pupil_centers, targets) -> GazeMapping:
    """Least-squares degree-2 mapping from pupil centres to screen pixels.

    Raises
    ------
    CalibrationError
        Fewer than six correspondences or a rank-deficient design
        (for instance collinear pupil positions).
    """
    p = np.asarray(pupil_centers, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 2 or p.shape[1] != 2:
        raise ValueError("need matching (n, 2) point lists")
    if len(p) < 6:
        raise CalibrationError(f"need at least 6 calibration points, got {len(p)}")
    # scale to unit range so the rank test is not fooled by pixel magnitudes
    mid = p.mean(axis=0)
    span = np.maximum(np.abs(p - mid).max(axis=0), 1e-12)
    design = _poly_terms((p - mid) / span)
    if np.linalg.matrix_rank(design) < 6:
        raise CalibrationError("calibration points are degenerate (rank-deficient design)")
    cu, *_ = np.linalg.lstsq(design, t, rcond=None)
    # expand the scaled polynomial back to raw pixel coordinates
    mx, my = mid
    sx, sy = span
    coeffs = []
    for c in cu.T:
        c0, c1, c2, c3, c4, c5 = c
        ax, ay = 1 / sx, 1 / sy
        raw = np.array([
            c0 - c1 * mx * ax - c2 * my * ay + c3 * (mx * ax) ** 2
            + c4 * mx * my * ax * ay + c5 * (my * ay) ** 2,
            c1 * ax - 2 * c3 * mx * ax * ax - c4 * my * ax * ay,
            c2 * ay - c4 * mx * ax * ay - 2 * c5 * my * ay * ay,
            c3 * ax * ax,
            c4 * ax * ay,
            c5 * ay * ay,
        ])
        coeffs.append(tuple(float(v) for v in raw))
    resid = design @ cu - t
    rms = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
    return GazeMapping(coeffs[0], coeffs[1], rms)


@dataclass(frozen=True)
class ScreenGeometry:
    screen_distance_mm: float = 570.0
    px_size_mm: float = 0.5

    def __post_init__(self):
        if self.screen_distance_mm <= 0 or self.px_size_mm <= 0:
            raise ValueError("screen geometry must be positive")


def angular_error(gaze_px, target_px, screen_distance_mm: float = 570.0,
                  px_size_mm: float = 0.5) -> float:
    """Visual angle in degrees: ``atan(on-screen displacement / distance)``."""
    if screen_distance_mm <= 0 or px_size_mm <= 0:
        raise ValueError("screen geometry must be positive")
    d = math.hypot(gaze_px[0] - target_px[0], gaze_px[1] - target_px[1])
    return math.degrees(math.atan2(d * px_size_mm, screen_distance_mm))


def precision_rms(samples, screen_distance_mm: float = 570.0, px_size_mm: float = 0.5) -> float:
    """RMS of the angular deviations between consecutive gaze samples (degrees)."""
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("need at least two gaze samples")
    steps = np.hypot(*np.diff(pts, axis=0).T) * px_size_mm
    angles = np.degrees(np.arctan2(steps, screen_distance_mm))
    return float(np.sqrt(np.mean(angles ** 2)))


@dataclass(frozen=True)
class SigmoidFit:
    """``f(x) = 1 / (1 + exp(-(a x + b)))``; ``domain`` names what x measures."""

    a: float
    b: float
    domain: str = "distance"

    def __post_init__(self):
        if self.a == 0:
            raise ValueError("a sigmoid fit needs a non-zero slope")
        if self.domain not in ("distance", "sigma"):
            raise ValueError("domain must be 'distance' or 'sigma'")

    def __call__(self, x):
        return logistic(x, self.a, self.b)

    @property
    def midpoint(self) -> float:
        return -self.b / self.a


def fit_crr_sigmoid(points: Sequence[tuple[float, int, int]], domain: str = "distance") -> SigmoidFit:
    """Binomial maximum-likelihood sigmoid through (x, matches, trials) counts.

    Raises :class:`~irisdefocus.logistic.SeparationError` when matches and
    non-matches are perfectly split along x.
    """
    if len(points) == 0:
        raise ValueError("no points")
    x, k, n = (np.array(v, dtype=np.float64) for v in zip(*points))
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct x values")
    fit = fit_logistic(x, k, n)
    return SigmoidFit(fit.a, fit.b, domain)


def gaze_retarget(reference, sample) -> np.ndarray:
    """Offset ``sample`` by ``(-ref.x, -ref.y, 0)`` so the reference looks straight ahead."""
    ref = np.asarray(reference, dtype=np.float64)
    s = np.asarray(sample, dtype=np.float64)
    if ref.shape != (3,) or s.shape != (3,):
        raise ValueError("gaze vectors must have three components")
    if ref[2] == 0 or s[2] == 0:
        raise ValueError("gaze vectors need a non-zero z component")
    return s + np.array([-ref[0], -ref[1], 0.0])


# ---------------------------------------------------------------- simulation

EYE_ROTATION_RADIUS_MM = 10.0  # pupil plane to centre of rotation


@dataclass(frozen=True)
class TargetViewing:
    """Nine-point target grid viewed by one synthetic eye."""

    geometry: ScreenGeometry = ScreenGeometry()
    target_spacing_px: float = 70.0
    calibration_frames: int = 3
    validation_frames: int = 10

    def targets(self) -> np.ndarray:
        s = self.target_spacing_px
        return np.array([(x, y) for y in (-s, 0.0, s) for x in (-s, 0.0, s)])


def pupil_offset_px(target_px, geometry: ScreenGeometry, scene: EyeScene) -> tuple[float, float]:
    """Image displacement of the pupil when the eye turns toward a screen point."""
    px_per_mm = 2.0 * scene.iris_radius_px / IRIS_WIDTH_MM
    out = []
    for t in target_px:
        theta = math.atan2(t * geometry.px_size_mm, geometry.screen_distance_mm)
        out.append(EYE_ROTATION_RADIUS_MM * math.sin(theta) * px_per_mm)
    return out[0], out[1]


@dataclass(frozen=True)
class GazeLevelResult:
    sigma_px: float
    detection_rate: float
    mean_error_deg: float
    precision_deg: float
    calibration_rms_px: float
    failed: bool = False


def simulate_target_viewing(
    identity: IrisIdentity,
    scene: EyeScene,
    sigma_px: float,
    seed: int,
    task: TargetViewing = TargetViewing(),
    detector: PupilDetector = PupilDetector(),
) -> GazeLevelResult:
    """Calibrate on one pass over the grid, then measure on a second pass.

    Every frame is rendered at ``sigma_px`` defocus with its own noise seed.
    Accuracy is the mean angular error of the mapped validation samples;
    precision pools consecutive-sample deviations within each fixation.
    """
    targets = task.targets()
    cx, cy = scene.pupil_center

    def observe(phase, t_idx, n):
        dx, dy = pupil_offset_px(targets[t_idx], task.geometry, scene)
        sc = replace(scene, pupil_center=(cx + dx, cy + dy))
        obs = []
        for f in range(n):
            img = render_eye_image(identity, sc, mix_seed(seed, phase, t_idx, f),
                                   defocus_sigma_px=sigma_px)
            obs.append(detect_pupil(img, detector))
        return obs

    cal = [observe(0, i, task.calibration_frames) for i in range(len(targets))]
    val = [observe(1, i, task.validation_frames) for i in range(len(targets))]
    rate = detection_rate([o for group in cal + val for o in group])

    cal_pts, cal_tgt = [], []
    for i, group in enumerate(cal):
        found = [o.center for o in group if o.found]
        if found:
            cal_pts.append(np.mean(found, axis=0))
            cal_tgt.append(targets[i])
    try:
        mapping = calibrate_polynomial(cal_pts, cal_tgt)
    except CalibrationError:
        return GazeLevelResult(sigma_px, rate, math.nan, math.nan, math.nan, True)

    g = task.geometry
    errors = []
    sq_sum, n_steps = 0.0, 0
    for i, group in enumerate(val):
        found = [o.center for o in group if o.found]
        if not found:
            continue
        gaze = mapping(found)
        errors += [angular_error(p, targets[i], g.screen_distance_mm, g.px_size_mm) for p in gaze]
        if len(gaze) >= 2:
            sq_sum += precision_rms(gaze, g.screen_distance_mm, g.px_size_mm) ** 2 * (len(gaze) - 1)
            n_steps += len(gaze) - 1
    if not errors:
        return GazeLevelResult(sigma_px, rate, math.nan, math.nan, mapping.residual_rms, True)
    prec = math.sqrt(sq_sum / n_steps) if n_steps else math.nan
    return GazeLevelResult(sigma_px, rate, float(np.mean(errors)), prec, mapping.residual_rms)
