"""Pinhole projection of fish bodies into image-space bounding boxes."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .core import Bbox

NEAR_Z = 1e-6
MIN_ANNOTATED_AREA = 4.0
WORLD_UP = np.array([0.0, -1.0, 0.0])  # image v grows downward, so world up is -y

_CORNER_SIGNS = np.array(list(product((-0.5, 0.5), repeat=3)))


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float = 1000.0
    cx: float = 960.0
    cy: float = 540.0
    image_width: int = 1920
    image_height: int = 1080

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError("focal_px must be positive")
        if not (0 <= self.cx < self.image_width and 0 <= self.cy < self.image_height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def centered(cls, width: int, height: int, focal_px: float = 1000.0) -> "CameraIntrinsics":
        return cls(focal_px, width / 2.0, height / 2.0, width, height)

    @classmethod
    def from_config(cls, config) -> "CameraIntrinsics":
        return cls.centered(config.image_width, config.image_height, config.focal_px)


@dataclass(frozen=True)
class BodyExtent:
    """Full body-box dimensions in meters before the per-fish scale."""

    length: float = 0.12
    height: float = 0.04
    width: float = 0.03

    def __post_init__(self):
        if min(self.length, self.height, self.width) <= 0:
            raise ValueError("body extents must be positive")


def project_point(p, cam: CameraIntrinsics) -> tuple[float, float] | None:
    x, y, z = (float(c) for c in p)
    if z <= 0:
        return None
    return (cam.cx + cam.focal_px * x / z, cam.cy + cam.focal_px * y / z)


def body_axes(headings: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward, up and right unit axes for heading-aligned bodies, shape (n, 3) each."""
    fwd = np.atleast_2d(headings).astype(float)
    right = np.cross(fwd, WORLD_UP)
    n = np.linalg.norm(right, axis=1, keepdims=True)
    vertical = n[:, 0] < 1e-9
    right = np.where(vertical[:, None], np.array([1.0, 0.0, 0.0]), right / np.where(n > 0, n, 1.0))
    up = np.cross(right, fwd)
    return fwd, up, right


def body_corners(positions: np.ndarray, headings: np.ndarray, scales: np.ndarray, extent: BodyExtent) -> np.ndarray:
    """The 8 corners of every fish's body box, shape (n, 8, 3)."""
    fwd, up, right = body_axes(headings)
    s = np.asarray(scales, dtype=float).reshape(-1, 1, 1)
    dims = np.array([extent.length, extent.height, extent.width])
    offs = _CORNER_SIGNS * dims  # (8, 3) in body coordinates
    P = np.atleast_2d(positions)[:, None, :]
    return P + s * (offs[None, :, 0:1] * fwd[:, None, :] + offs[None, :, 1:2] * up[:, None, :] + offs[None, :, 2:3] * right[:, None, :])


def clip_box(box: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """Clip ``(x0, y0, x1, y1)`` rows to the image rectangle."""
    out = np.array(box, dtype=float, copy=True)
    out[..., 0::2] = np.clip(out[..., 0::2], 0.0, cam.image_width)
    out[..., 1::2] = np.clip(out[..., 1::2], 0.0, cam.image_height)
    return out


def project_school(positions, headings, scales, extent: BodyExtent, cam: CameraIntrinsics, *, clip: bool = True) -> np.ndarray:
    """Corner-hull boxes ``(x0, y0, x1, y1)`` for every fish; NaN rows when not in view."""
    corners = body_corners(positions, headings, scales, extent)
    z = corners[..., 2]
    front = z > NEAR_Z
    zs = np.where(front, z, 1.0)
    u = cam.cx + cam.focal_px * corners[..., 0] / zs
    v = cam.cy + cam.focal_px * corners[..., 1] / zs
    with np.errstate(invalid="ignore"):
        box = np.stack(
            [
                np.where(front, u, np.inf).min(axis=1),
                np.where(front, v, np.inf).min(axis=1),
                np.where(front, u, -np.inf).max(axis=1),
                np.where(front, v, -np.inf).max(axis=1),
            ],
            axis=1,
        )
    hidden = ~front.any(axis=1)
    if clip:
        box = clip_box(box, cam)
        hidden |= (box[:, 2] <= box[:, 0]) | (box[:, 3] <= box[:, 1])
    box[hidden] = np.nan
    return box


def fish_bbox(fish, extent: BodyExtent, cam: CameraIntrinsics, *, clip: bool = True) -> Bbox | None:
    box = project_school(fish.position[None], fish.heading[None], [fish.scale], extent, cam, clip=clip)[0]
    if np.isnan(box[0]):
        return None
    return Bbox(float(box[0]), float(box[1]), float(box[2] - box[0]), float(box[3] - box[1]))


def is_annotatable(box: Bbox | None) -> bool:
    return box is not None and box.area >= MIN_ANNOTATED_AREA
