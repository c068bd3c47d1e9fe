import hashlib
from dataclasses import replace

import numpy as np
import pytest

from irisdefocus.image import read_pgm
from irisdefocus.optics import band_energy_fraction
from irisdefocus.synth import (
    EyeScene,
    IrisIdentity,
    SceneJitter,
    eyelid_line,
    generate_dataset,
    generate_iris_texture,
    load_frame,
    make_identity,
    manifest_digest,
    mix_seed,
    plan_frames,
    render_eye_image,
    render_layers,
)


def ncc(a, b):
    a = (a - a.mean()) / a.std()
    b = (b - b.mean()) / b.std()
    return float(np.mean(a * b))


def test_mix_seed_is_stable_and_order_sensitive():
    assert mix_seed(1, 2, 3) == mix_seed(1, 2, 3)
    assert mix_seed(1, 2, 3) != mix_seed(3, 2, 1)
    assert 0 <= mix_seed(-1, 2 ** 70) < 2 ** 64


class TestTexture:
    def test_deterministic(self):
        ident = make_identity(3, 2024)
        assert np.array_equal(generate_iris_texture(ident), generate_iris_texture(ident))

    def test_unit_variance_zero_mean(self):
        tex = generate_iris_texture(make_identity(0, 7))
        assert abs(tex.mean()) < 1e-9
        assert tex.std() == pytest.approx(1.0)

    def test_band_energy(self):
        ident = IrisIdentity(0, 99, band_lo_cpp=0.2, band_hi_cpp=0.4)
        assert band_energy_fraction(generate_iris_texture(ident), 0.15).fraction >= 0.95

    def test_identities_are_uncorrelated(self):
        worst = 0.0
        for pair in range(20):
            a = generate_iris_texture(make_identity(2 * pair, 2024))
            b = generate_iris_texture(make_identity(2 * pair + 1, 2024))
            worst = max(worst, abs(ncc(a, b)))
        assert worst <= 0.2

    def test_distinct_identities_get_distinct_seeds(self):
        seeds = {make_identity(i, 2024).texture_seed for i in range(100)}
        assert len(seeds) == 100

    @pytest.mark.parametrize("lo, hi", [(0.0, 0.3), (0.3, 0.2), (0.1, 0.6)])
    def test_rejects_bad_band(self, lo, hi):
        with pytest.raises(ValueError):
            IrisIdentity(0, 1, band_lo_cpp=lo, band_hi_cpp=hi)

    def test_rejects_small_size(self):
        with pytest.raises(ValueError):
            generate_iris_texture(make_identity(0, 1), size=32)


class TestRender:
    def test_deterministic_without_noise(self):
        ident = make_identity(1, 5)
        scene = EyeScene(sensor_noise_sigma=0.0, eyelid_coverage=0.1)
        a = render_eye_image(ident, scene, 11)
        b = render_eye_image(ident, scene, 11)
        assert np.array_equal(a.pixels, b.pixels)

    def test_deterministic_with_noise(self):
        ident = make_identity(1, 5)
        a = render_eye_image(ident, EyeScene(), 11)
        b = render_eye_image(ident, EyeScene(), 11)
        c = render_eye_image(ident, EyeScene(), 12)
        assert np.array_equal(a.pixels, b.pixels)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_region_gray_levels(self):
        img = render_eye_image(make_identity(0, 2024), EyeScene(), 1)
        t = img.truth
        yy, xx = np.mgrid[0:img.height, 0:img.width]
        r = np.hypot(xx - t.pupil.x, yy - t.pupil.y)
        assert img.pixels[r < t.pupil.r - 1].mean() <= 60
        assert img.pixels[r > t.limbus.r + 1].mean() >= 180

    def test_no_eyelid(self):
        img = render_eye_image(make_identity(0, 1), EyeScene(eyelid_coverage=0.0), 1)
        assert img.truth.eyelid_y is None
        assert not img.truth.eyelid_mask(img.height, img.width).any()

    def test_eyelid_covers_requested_fraction(self):
        scene = EyeScene(eyelid_coverage=0.3)
        y = eyelid_line(scene)
        yy, xx = np.mgrid[0:2400, 0:3200] / 10.0
        r = np.hypot(xx - 160, yy - 120)
        ring = (r >= scene.pupil_radius_px) & (r < scene.iris_radius_px)
        assert (ring & (yy < y)).sum() / ring.sum() == pytest.approx(0.3, abs=0.005)

    @pytest.mark.parametrize("kwargs", [
        {"pupil_radius_px": 70.0},
        {"pupil_center": (30.0, 120.0)},
        {"eyelid_coverage": 0.8},
        {"sensor_noise_sigma": -1.0},
    ])
    def test_rejects_invalid_scene(self, kwargs):
        with pytest.raises(ValueError):
            render_eye_image(make_identity(0, 1), EyeScene(**kwargs), 1)

    def test_separability(self):
        ident = make_identity(4, 2024)
        scene = EyeScene(sensor_noise_sigma=0.0, eyelid_coverage=0.15)
        full = render_eye_image(ident, scene, 1).pixels.astype(float)
        plain = render_eye_image(replace(ident, contrast=0.0), scene, 1).pixels.astype(float)
        _, texture = render_layers(ident, scene)
        assert np.max(np.abs(full - plain - texture)) <= 1.0

    def test_texture_moves_with_pupil(self):
        ident = make_identity(2, 3)
        a = render_layers(ident, EyeScene(sensor_noise_sigma=0.0))[1]
        b = render_layers(ident, EyeScene(sensor_noise_sigma=0.0, pupil_center=(165.0, 118.0)))[1]
        assert np.allclose(np.roll(a, (-2, 5), axis=(0, 1)), b, atol=1e-9)


def _high_band_power(values, cutoff):
    values = values.astype(np.float64)
    total = values.size * np.sum((values - values.mean()) ** 2)  # non-DC power via Parseval
    return band_energy_fraction(values, cutoff).fraction * total


def test_defocus_destroys_texture_band():
    # The texture component is isolated by subtracting the textureless render;
    # a relative measure on raw frames is dominated by pupil and limbus edges.
    scene = EyeScene(sensor_noise_sigma=0.0)
    box = (slice(55, 185), slice(95, 225))
    ratios = []
    for ident_id in range(3):
        ident = make_identity(ident_id, 2024)
        plain = replace(ident, contrast=0.0)
        power = []
        for sigma in (0.0, 5.0):
            tex = (render_eye_image(ident, scene, 0, defocus_sigma_px=sigma).pixels.astype(float)
                   - render_eye_image(plain, scene, 0, defocus_sigma_px=sigma).pixels)
            power.append(_high_band_power(tex[box], ident.band_lo_cpp))
        ratios.append(power[0] / max(power[1], 1e-12))
    assert min(ratios) >= 100


class TestDataset:
    def test_small_dataset(self, tmp_path):
        manifest = generate_dataset(tmp_path, 2, 2, SceneJitter(), [0.0, 5.0], 2024)
        images = sorted((tmp_path / "images").glob("*.pgm"))
        assert len(images) == 8
        assert len(manifest["frames"]) == 8
        assert {e["file"] for e in manifest["frames"]} == {f"images/{p.name}" for p in images}
        for e in manifest["frames"]:
            assert {"pupil", "limbus", "eyelid_y"} <= set(e["truth"])
            frame = load_frame(tmp_path, e)
            assert frame.pixels.shape == (240, 320)

    def test_rerun_is_identical(self, tmp_path):
        generate_dataset(tmp_path / "a", 2, 2, SceneJitter(), [0.0, 5.0], 77)
        generate_dataset(tmp_path / "b", 2, 2, SceneJitter(), [0.0, 5.0], 77)
        assert manifest_digest(tmp_path / "a/manifest.json") == manifest_digest(tmp_path / "b/manifest.json")
        for p in (tmp_path / "a/images").iterdir():
            q = tmp_path / "b/images" / p.name
            assert hashlib.sha256(p.read_bytes()).digest() == hashlib.sha256(q.read_bytes()).digest()

    def test_parallel_matches_serial(self, tmp_path):
        generate_dataset(tmp_path / "a", 2, 2, SceneJitter(), [0.0, 3.0], 5, jobs=1)
        generate_dataset(tmp_path / "b", 2, 2, SceneJitter(), [0.0, 3.0], 5, jobs=2)
        assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()
        for p in (tmp_path / "a/images").iterdir():
            assert np.array_equal(read_pgm(p), read_pgm(tmp_path / "b/images" / p.name))

    def test_seed_changes_dataset(self, tmp_path):
        generate_dataset(tmp_path / "a", 2, 2, SceneJitter(), [0.0], 1)
        generate_dataset(tmp_path / "b", 2, 2, SceneJitter(), [0.0], 2)
        assert manifest_digest(tmp_path / "a/manifest.json") != manifest_digest(tmp_path / "b/manifest.json")

    def test_frame_seeds_are_order_independent(self):
        specs = plan_frames(3, 2, SceneJitter(), [0.0, 1.0], 9)
        for s in specs:
            assert s.seed == mix_seed(9, s.identity.identity_id, s.sigma_index, s.frame_index)

    def test_jitter_bounds(self):
        jitter = SceneJitter()
        specs = plan_frames(2, 20, jitter, [0.0], 3)
        for ident in (0, 1):
            base = jitter.identity_scene(ident, 3)
            for s in specs:
                if s.identity.identity_id != ident:
                    continue
                assert abs(s.scene.pupil_center[0] - base.pupil_center[0]) <= 3
                assert abs(s.scene.pupil_center[1] - base.pupil_center[1]) <= 3
                assert abs(s.scene.pupil_radius_px - base.pupil_radius_px) <= 2

    @pytest.mark.parametrize("n_ids, frames", [(1, 2), (2, 1)])
    def test_preconditions(self, tmp_path, n_ids, frames):
        with pytest.raises(ValueError):
            generate_dataset(tmp_path, n_ids, frames, SceneJitter(), [0.0], 1)

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            generate_dataset(blocker / "sub", 2, 2, SceneJitter(), [0.0], 1)
