"""Seeded synthetic eye images with band-limited iris textures.

Every random quantity is derived from a 64-bit seed produced by
:func:`mix_seed`, so a dataset is a pure function of its master seed and
configuration, independent of the order in which frames are generated.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from .image import Circle, EyeImage, Truth, read_pgm, to_uint8, write_pgm
from .optics import blur_array

MASK64 = (1 << 64) - 1
MANIFEST_NAME = "manifest.json"


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(*values: int) -> int:
    """Fold integers into one 64-bit seed.

    ``h = 0; for v in values: h = splitmix64(h ^ (v mod 2**64))``. The
    splitmix64 finalizer constants are part of the dataset format.
    """
    h = 0
    for v in values:
        h = _splitmix64(h ^ (int(v) & MASK64))
    return h


@dataclass(frozen=True)
class Palette:
    pupil: float = 30.0
    iris: float = 110.0
    sclera: float = 220.0
    eyelid: float = 190.0


@dataclass(frozen=True)
class IrisIdentity:
    identity_id: int
    texture_seed: int
    band_lo_cpp: float = 0.08
    band_hi_cpp: float = 0.45
    contrast: float = 0.2  # texture std as a fraction of the iris gray level

    def __post_init__(self):
        if not 0 < self.band_lo_cpp < self.band_hi_cpp <= 0.5:
            raise ValueError("iris band must satisfy 0 < lo < hi <= 0.5")
        if not 0 <= self.contrast <= 1:
            raise ValueError("contrast must lie in [0, 1]")


def make_identity(identity_id: int, master_seed: int, **kwargs) -> IrisIdentity:
    return IrisIdentity(identity_id, mix_seed(master_seed, 0x1D, identity_id), **kwargs)


@dataclass(frozen=True)
class EyeScene:
    image_w: int = 320
    image_h: int = 240
    pupil_center: tuple[float, float] = (160.0, 120.0)
    pupil_radius_px: float = 25.0
    iris_radius_px: float = 60.0
    eyelid_coverage: float = 0.0
    sensor_noise_sigma: float = 2.0
    palette: Palette = field(default_factory=Palette)

    def validate(self) -> None:
        cx, cy = self.pupil_center
        if not 0 < self.pupil_radius_px < self.iris_radius_px:
            raise ValueError("need 0 < pupil_radius < iris_radius")
        r = self.iris_radius_px
        if cx - r < 0 or cy - r < 0 or cx + r > self.image_w or cy + r > self.image_h:
            raise ValueError("iris circle does not fit inside the image")
        if not 0 <= self.eyelid_coverage < 0.75:
            raise ValueError("eyelid_coverage must lie in [0, 0.75)")
        if self.sensor_noise_sigma < 0:
            raise ValueError("sensor_noise_sigma must be non-negative")


# Texture rows spanned by the pupil-to-limbus distance, per texture column;
# keeps texels roughly square on the default geometry.
RADIAL_ASPECT = 0.13


@lru_cache(maxsize=64)
def _texture_cached(seed: int, size: int, lo: float, hi: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((size, size))
    f = np.hypot(np.fft.fftfreq(size)[:, None], np.fft.fftfreq(size)[None, :])
    spectrum = np.fft.fft2(noise) * ((f >= lo) & (f <= hi))
    tex = np.fft.ifft2(spectrum).real
    tex -= tex.mean()
    tex /= tex.std()
    tex.setflags(write=False)
    return tex


def generate_iris_texture(identity: IrisIdentity, size: int = 256) -> np.ndarray:
    """Zero-mean, unit-variance white noise restricted to a radial frequency annulus."""
    if size < 64:
        raise ValueError("texture size must be at least 64")
    return _texture_cached(identity.texture_seed, size, identity.band_lo_cpp,
                           identity.band_hi_cpp).copy()


def _segment_area(r: float, t: float) -> float:
    """Area of a disk of radius r above a chord at height t over its center."""
    if t >= r:
        return 0.0
    if t <= -r:
        return math.pi * r * r
    return r * r * math.acos(t / r) - t * math.sqrt(r * r - t * t)


def eyelid_line(scene: EyeScene) -> Optional[float]:
    """Image row such that the annulus area above it equals ``eyelid_coverage``."""
    if scene.eyelid_coverage <= 0:
        return None
    rp, ri = scene.pupil_radius_px, scene.iris_radius_px
    total = math.pi * (ri * ri - rp * rp)

    def frac(t):
        return (_segment_area(ri, t) - _segment_area(rp, t)) / total

    lo, hi = -ri, ri  # frac decreases in t
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if frac(mid) > scene.eyelid_coverage:
            lo = mid
        else:
            hi = mid
    return scene.pupil_center[1] - 0.5 * (lo + hi)


def render_layers(identity: IrisIdentity, scene: EyeScene, texture_size: int = 256):
    """Noise-free structure and texture layers; the image is their sum."""
    scene.validate()
    pal = scene.palette
    cx, cy = scene.pupil_center
    rp, ri = scene.pupil_radius_px, scene.iris_radius_px
    yy, xx = np.mgrid[0:scene.image_h, 0:scene.image_w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    r = np.hypot(dx, dy)
    # half-pixel linear ramps give sub-pixel edge positions
    w_pupil = np.clip(rp - r + 0.5, 0.0, 1.0)
    w_iris = np.clip(ri - r + 0.5, 0.0, 1.0)
    lid_y = eyelid_line(scene)
    w_lid = np.zeros_like(r) if lid_y is None else np.clip(lid_y - yy + 0.5, 0.0, 1.0)

    structure = (w_pupil * pal.pupil + (w_iris - w_pupil) * pal.iris
                 + (1.0 - w_iris) * pal.sclera)
    structure = (1.0 - w_lid) * structure + w_lid * pal.eyelid

    texture_layer = np.zeros_like(r)
    ring = (w_iris - w_pupil) * (1.0 - w_lid)
    sel = ring > 0
    if identity.contrast > 0 and np.any(sel):
        tex = generate_iris_texture(identity, texture_size)
        theta = np.mod(np.arctan2(dy[sel], dx[sel]), 2 * math.pi)
        rho = np.clip((r[sel] - rp) / (ri - rp), 0.0, 1.0)
        cols = theta / (2 * math.pi) * texture_size
        rows = rho * RADIAL_ASPECT * texture_size
        samples = map_coordinates(tex, [rows, cols], order=1, mode="grid-wrap")
        texture_layer[sel] = ring[sel] * identity.contrast * pal.iris * samples
    return structure, texture_layer


def render_eye_image(identity: IrisIdentity, scene: EyeScene, frame_seed: int,
                     texture_size: int = 256, defocus_sigma_px: float = 0.0) -> EyeImage:
    """Composite the scene, optionally defocus it, then add sensor noise.

    Defocus is optical, so it acts on the noise-free radiance before the
    sensor adds its noise and quantizes to 8 bits.
    """
    structure, texture = render_layers(identity, scene, texture_size)
    values = structure + texture
    if defocus_sigma_px > 0:
        values = blur_array(values, defocus_sigma_px)
    if scene.sensor_noise_sigma > 0:
        rng = np.random.default_rng(frame_seed)
        values = values + rng.normal(0.0, scene.sensor_noise_sigma, values.shape)
    truth = Truth(
        identity_id=identity.identity_id,
        pupil=Circle(scene.pupil_center[0], scene.pupil_center[1], scene.pupil_radius_px),
        limbus=Circle(scene.pupil_center[0], scene.pupil_center[1], scene.iris_radius_px),
        eyelid_y=eyelid_line(scene),
    )
    return EyeImage(to_uint8(values), truth)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SceneJitter:
    """Per-identity base geometry ranges plus per-frame jitter."""

    base: EyeScene = field(default_factory=EyeScene)
    center_spread_px: float = 10.0
    pupil_radius_range: tuple[float, float] = (22.0, 28.0)
    iris_radius_range: tuple[float, float] = (56.0, 64.0)
    eyelid_range: tuple[float, float] = (0.05, 0.2)
    center_jitter_px: float = 3.0
    radius_jitter_px: float = 2.0

    def identity_scene(self, identity_id: int, master_seed: int) -> EyeScene:
        rng = np.random.default_rng(mix_seed(master_seed, 0x5C, identity_id))
        cx0, cy0 = self.base.pupil_center
        return replace(
            self.base,
            pupil_center=(cx0 + rng.uniform(-1, 1) * self.center_spread_px,
                          cy0 + rng.uniform(-1, 1) * self.center_spread_px),
            pupil_radius_px=rng.uniform(*self.pupil_radius_range),
            iris_radius_px=rng.uniform(*self.iris_radius_range),
        )

    def frame_scene(self, identity_scene: EyeScene, frame_seed: int) -> EyeScene:
        rng = np.random.default_rng(mix_seed(frame_seed, 0xF7))
        cx, cy = identity_scene.pupil_center
        j = self.center_jitter_px
        return replace(
            identity_scene,
            pupil_center=(cx + rng.uniform(-j, j), cy + rng.uniform(-j, j)),
            pupil_radius_px=identity_scene.pupil_radius_px
            + rng.uniform(-self.radius_jitter_px, self.radius_jitter_px),
            eyelid_coverage=rng.uniform(*self.eyelid_range),
        )


@dataclass(frozen=True)
class FrameSpec:
    identity: IrisIdentity
    scene: EyeScene
    sigma_index: int
    sigma_px: float
    frame_index: int
    seed: int

    @property
    def filename(self) -> str:
        return (f"images/id{self.identity.identity_id:03d}_s{self.sigma_index:02d}"
                f"_f{self.frame_index:04d}.pgm")


def plan_frames(
    n_identities: int,
    frames_per_config: int,
    jitter: SceneJitter,
    sigma_levels: Sequence[float],
    master_seed: int,
    identity_kwargs: Optional[dict] = None,
) -> list[FrameSpec]:
    if n_identities < 1 or frames_per_config < 1:
        raise ValueError("need at least one identity and one frame per configuration")
    identity_kwargs = identity_kwargs or {}
    specs = []
    for ident in range(n_identities):
        identity = make_identity(ident, master_seed, **identity_kwargs)
        base = jitter.identity_scene(ident, master_seed)
        for s_idx, sigma in enumerate(sigma_levels):
            for f_idx in range(frames_per_config):
                seed = mix_seed(master_seed, ident, s_idx, f_idx)
                specs.append(FrameSpec(identity, jitter.frame_scene(base, seed),
                                       s_idx, float(sigma), f_idx, seed))
    return specs


def render_frame(spec: FrameSpec) -> EyeImage:
    return render_eye_image(spec.identity, spec.scene, spec.seed,
                            defocus_sigma_px=spec.sigma_px)


def _write_frame(args) -> dict:
    spec, out_dir = args
    image = render_frame(spec)
    write_pgm(Path(out_dir) / spec.filename, image.pixels)
    return {
        "file": spec.filename,
        "identity_id": spec.identity.identity_id,
        "sigma_index": spec.sigma_index,
        "sigma_px": spec.sigma_px,
        "frame_index": spec.frame_index,
        "seed": spec.seed,
        "texture_seed": spec.identity.texture_seed,
        "truth": image.truth.to_dict(),
    }


def generate_dataset(
    out_dir: str | Path,
    n_identities: int,
    frames_per_config: int,
    jitter: SceneJitter,
    sigma_levels: Sequence[float],
    master_seed: int,
    identity_kwargs: Optional[dict] = None,
    jobs: int = 1,
) -> dict:
    """Render every (identity, sigma, frame) image and write ``manifest.json``.

    Returns the manifest dictionary. Output is byte-identical for any ``jobs``.
    """
    if n_identities < 2:
        raise ValueError("a dataset needs at least two identities")
    if frames_per_config < 2:
        raise ValueError("a dataset needs at least two frames per configuration")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    specs = plan_frames(n_identities, frames_per_config, jitter, sigma_levels,
                        master_seed, identity_kwargs)
    tasks = [(s, str(out_dir)) for s in specs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_write_frame, tasks, chunksize=8))
    else:
        entries = [_write_frame(t) for t in tasks]
    manifest = {
        "format": "irisdefocus-manifest",
        "version": 1,
        "master_seed": int(master_seed),
        "n_identities": n_identities,
        "frames_per_config": frames_per_config,
        "sigma_levels": [float(s) for s in sigma_levels],
        "frames": entries,
    }
    (out_dir / MANIFEST_NAME).write_bytes(manifest_bytes(manifest))
    return manifest


def manifest_bytes(manifest: dict) -> bytes:
    return (json.dumps(manifest, indent=1, sort_keys=True) + "\n").encode("utf-8")


def manifest_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_manifest(dataset_dir: str | Path) -> dict:
    path = Path(dataset_dir) / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {dataset_dir}")
    return json.loads(path.read_text())


def load_frame(dataset_dir: str | Path, entry: dict) -> EyeImage:
    pixels = read_pgm(Path(dataset_dir) / entry["file"])
    return EyeImage(pixels, Truth.from_dict(entry["truth"]))


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
