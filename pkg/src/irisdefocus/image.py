"""8-bit grayscale eye images and binary PGM (P5) I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np


@dataclass(frozen=True)
class Circle:
    x: float
    y: float
    r: float

    def as_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.r)]


@dataclass(frozen=True)
class Truth:
    """Ground-truth annotation attached to a synthetic frame."""

    identity_id: int
    pupil: Circle
    limbus: Circle
    eyelid_y: Optional[float] = None  # rows above this line are occluded

    def eyelid_mask(self, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        if self.eyelid_y is not None:
            rows = np.arange(height)[:, None] < self.eyelid_y
            mask |= np.broadcast_to(rows, (height, width))
        return mask

    def to_dict(self) -> dict[str, Any]:
        return {
            "identity_id": int(self.identity_id),
            "pupil": self.pupil.as_list(),
            "limbus": self.limbus.as_list(),
            "eyelid_y": None if self.eyelid_y is None else float(self.eyelid_y),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Truth":
        return cls(
            identity_id=int(d["identity_id"]),
            pupil=Circle(*d["pupil"]),
            limbus=Circle(*d["limbus"]),
            eyelid_y=d.get("eyelid_y"),
        )


@dataclass(frozen=True)
class EyeImage:
    """Row-major 8-bit grayscale raster with optional truth."""

    pixels: np.ndarray
    truth: Optional[Truth] = field(default=None, compare=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("image must be a non-empty 2-D raster")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "EyeImage":
        return replace(self, pixels=pixels)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Round half-to-even and clip into the 8-bit range."""
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval={maxval})")
    body = data[m.end():m.end() + w * h]
    if len(body) != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()
