"""Experiment configuration: one JSON file, schema-checked before any work.

Every section and key is optional and falls back to the defaults below;
unknown keys are rejected so a typo cannot silently change an experiment.

Example::

    {
      "master_seed": 2024,
      "dataset": {"identities": 10, "frames": 20, "sigma_levels": [0, 1, 3, 5, 8]},
      "iris": {"max_fpr": 0.0},
      "gaze": {"sweep_distances_mm": [24, 28, 32, 36]}
    }
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import optics


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _range(v: tuple[float, float]) -> tuple[float, float]:
    if v[0] > v[1]:
        raise ValueError("range must be (low, high) with low <= high")
    return v


class DatasetConfig(_Section):
    identities: int = Field(10, ge=1)
    frames: int = Field(20, ge=1)
    sigma_levels: list[float] = Field(default_factory=lambda: [0.0, 1.0, 3.0, 5.0, 8.0],
                                      min_length=1)
    contrast: float = Field(0.2, ge=0, le=1)
    sensor_noise_sigma: float = Field(2.0, ge=0)
    image_width: int = Field(320, ge=64)
    image_height: int = Field(240, ge=64)
    center_spread_px: float = Field(10.0, ge=0)
    pupil_radius_range: tuple[float, float] = (22.0, 28.0)
    iris_radius_range: tuple[float, float] = (56.0, 64.0)
    eyelid_range: tuple[float, float] = (0.05, 0.2)
    center_jitter_px: float = Field(3.0, ge=0)
    radius_jitter_px: float = Field(2.0, ge=0)

    _check_ranges = field_validator("pupil_radius_range", "iris_radius_range",
                                    "eyelid_range")(_range)

    @field_validator("sigma_levels")
    @classmethod
    def _levels(cls, v):
        if any(s < 0 for s in v):
            raise ValueError("sigma levels must be non-negative")
        if len(set(v)) != len(v):
            raise ValueError("sigma levels must be distinct")
        return v


class OpticsConfig(_Section):
    focal_length_mm: float = Field(optics.FOCAL_LENGTH_MM, gt=0)
    lens_diameter_mm: float = Field(optics.LENS_DIAMETER_MM, gt=0)
    pixel_pitch_mm: float = Field(optics.PIXEL_PITCH_MM, gt=0)
    iris_width_mm: float = Field(optics.IRIS_WIDTH_MM, gt=0)
    reference_distance_mm: float = Field(25.1, gt=0)

    @model_validator(mode="after")
    def _beyond_focal(self):
        if self.reference_distance_mm <= self.focal_length_mm:
            raise ValueError("reference_distance_mm must exceed focal_length_mm")
        return self

    def optical_config(self) -> optics.OpticalConfig:
        return optics.OpticalConfig.from_reference_distance(
            self.reference_distance_mm,
            focal_length_mm=self.focal_length_mm,
            lens_diameter_mm=self.lens_diameter_mm,
            pixel_pitch_mm=self.pixel_pitch_mm,
            iris_width_mm=self.iris_width_mm,
        )


class IrisConfig(_Section):
    h_radial: int = Field(20, ge=8)
    w_angular: int = Field(240, ge=64)
    f0_cpp: float = Field(1.0 / 18.0, gt=0, lt=0.5)
    sigma_over_f0: float = Field(0.5, gt=0, lt=1)
    max_shift: int = Field(8, ge=0)
    max_fpr: float = Field(0.0, ge=0, le=1)
    threshold_resolution: float = Field(0.001, gt=0, le=0.1)
    segmentation: Literal["auto", "truth"] = "auto"


class GazeConfig(_Section):
    screen_distance_mm: float = Field(570.0, gt=0)
    px_size_mm: float = Field(0.5, gt=0)
    target_spacing_px: float = Field(70.0, gt=0)
    sigma_levels: list[float] = Field(default_factory=lambda: [0.0, 1.0, 3.0, 4.4, 5.0, 8.0],
                                      min_length=1)
    identities: int = Field(2, ge=1)
    calibration_frames: int = Field(3, ge=1)
    validation_frames: int = Field(10, ge=2)
    pupil_percentile: float = Field(2.0, gt=0, lt=100)
    min_circularity: float = Field(0.6, ge=0, le=1)
    sweep_distances_mm: list[float] = Field(default_factory=lambda: [24.0, 28.0, 32.0, 36.0])
    sweep_distance_jitter_mm: float = Field(1.0, ge=0)
    sweep_identities: int = Field(4, ge=1)
    sweep_frames: int = Field(6, ge=1)


class PsychoConfig(_Section):
    responses_csv: Optional[str] = None
    likert_csv: Optional[str] = None
    simulated_participants: int = Field(16, ge=2)


class ExperimentConfig(_Section):
    master_seed: int = Field(2024, ge=0, lt=2 ** 64)
    output_dir: Optional[str] = None
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    optics: OpticsConfig = Field(default_factory=OpticsConfig)
    iris: IrisConfig = Field(default_factory=IrisConfig)
    gaze: GazeConfig = Field(default_factory=GazeConfig)
    psycho: PsychoConfig = Field(default_factory=PsychoConfig)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig.model_validate({**self.model_dump(), "master_seed": seed})

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{key}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict, source: str = "config") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_describe(exc)}") from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read and validate a JSON config; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(data, str(path))
