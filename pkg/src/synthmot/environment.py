"""Per-sequence environment: turbidity fog, background and floating distractors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics
from .core import (
    STREAM_DISTRACTORS,
    STREAM_ENVIRONMENT,
    EnvironmentVariant,
    SequenceConfig,
    WorldBounds,
    make_rng,
)

GREY = np.array([0.5, 0.5, 0.5])
GREEN = np.array([0.3, 0.55, 0.35])

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class BackgroundUnavailable(ValueError):
    pass


def grey_green(t: float) -> tuple[float, float, float]:
    """Point ``t`` in [0, 1] on the grey to green colour segment."""
    c = GREY + (GREEN - GREY) * float(t)
    return (float(c[0]), float(c[1]), float(c[2]))


@dataclass(frozen=True)
class TurbidityParams:
    density: float = 0.0
    fog_color: tuple[float, float, float] = tuple(GREY)

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("turbidity density must be non-negative")


@dataclass(frozen=True)
class Distractor:
    position: np.ndarray
    radius: float
    transparency: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str = "monotone"  # monotone | image_sequence | procedural
    monotone_color: tuple[float, float, float] = tuple(GREY)
    image_dir: str | None = None
    saturation: float = 1.0
    color_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)
    blur_radius: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class EnvInstance:
    turbidity: TurbidityParams
    background: BackgroundSpec
    distractors: tuple[Distractor, ...] = ()
    distractor_count: int = 0
    bounds: WorldBounds = field(default_factory=WorldBounds)
    camera: CameraIntrinsics | None = None
    seed: int = 0


def turbidity_alpha(distance, params: TurbidityParams):
    """Fog opacity ``1 - exp(-density * distance)``; accepts scalars or arrays."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    alpha = -np.expm1(-params.density * d)
    return float(alpha) if alpha.ndim == 0 else alpha


def list_background_frames(image_dir: str | Path) -> list[Path]:
    d = Path(image_dir)
    if not d.is_dir():
        raise BackgroundUnavailable(f"background source unavailable: {d}")
    frames = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not frames:
        raise BackgroundUnavailable(f"background source unavailable: no images in {d}")
    return frames


def _sample_positions(rng: np.random.Generator, count: int, bounds: WorldBounds, cam: CameraIntrinsics) -> np.ndarray:
    lo, hi = np.asarray(bounds.lo), np.asarray(bounds.hi)
    z = rng.uniform(lo[2], hi[2], size=count)
    # frustum extent at each depth, intersected with the box
    x_lo = np.maximum(lo[0], -cam.cx * z / cam.focal_px)
    x_hi = np.minimum(hi[0], (cam.image_width - cam.cx) * z / cam.focal_px)
    y_lo = np.maximum(lo[1], -cam.cy * z / cam.focal_px)
    y_hi = np.minimum(hi[1], (cam.image_height - cam.cy) * z / cam.focal_px)
    x = x_lo + (x_hi - x_lo) * rng.random(count)
    y = y_lo + (y_hi - y_lo) * rng.random(count)
    return np.stack([x, y, z], axis=1)


def sample_environment(variant: EnvironmentVariant, seed: int, config: SequenceConfig) -> EnvInstance:
    rng = make_rng(seed, STREAM_ENVIRONMENT)
    cam = CameraIntrinsics.from_config(config)

    fog_t = float(rng.random())
    fog_color = grey_green(fog_t)
    density = float(rng.uniform(*config.turbidity_density_range)) if variant.turbidity else 0.0
    turbidity = TurbidityParams(density=density, fog_color=fog_color)

    if variant.background:
        kind = "image_sequence" if config.background_dir else "procedural"
        if kind == "image_sequence":
            list_background_frames(config.background_dir)
        background = BackgroundSpec(
            kind=kind,
            monotone_color=fog_color,
            image_dir=config.background_dir,
            saturation=float(rng.uniform(0.6, 1.3)),
            color_shift=tuple(float(c) for c in rng.uniform(-0.06, 0.06, size=3)),
            blur_radius=float(rng.uniform(0.0, 3.0)),
            seed=int(rng.integers(0, 2**63)),
        )
    else:
        background = BackgroundSpec(kind="monotone", monotone_color=fog_color)

    distractors: tuple[Distractor, ...] = ()
    count = 0
    if variant.distractors:
        lo, hi = config.distractor_count_range
        count = int(rng.integers(lo, hi, endpoint=True))
        positions = _sample_positions(rng, count, config.world_bounds, cam)
        distractors = tuple(
            Distractor(
                position=positions[i],
                radius=float(rng.uniform(*config.distractor_radius_range)),
                transparency=float(rng.uniform(*config.distractor_transparency_range)),
                color=grey_green(float(rng.random())),
            )
            for i in range(count)
        )
    return EnvInstance(turbidity, background, distractors, count, config.world_bounds, cam, seed)


def step_distractors(env: EnvInstance, frame_index: int, seed: int) -> list[Distractor]:
    """Distractors at ``frame_index``: same spheres, each moved to a fresh random position."""
    if frame_index < 0:
        raise ValueError("frame_index must be non-negative")
    if env.distractor_count == 0:
        return []
    if frame_index == 0:
        return list(env.distractors)
    rng = make_rng(seed, STREAM_DISTRACTORS, frame_index)
    positions = _sample_positions(rng, env.distractor_count, env.bounds, env.camera)
    return [
        Distractor(positions[i], d.radius, d.transparency, d.color)
        for i, d in enumerate(env.distractors)
    ]


def fog_blend(color: np.ndarray, depth, params: TurbidityParams) -> np.ndarray:
    a = turbidity_alpha(depth, params)
    a = np.asarray(a)[..., None] if np.ndim(a) else a
    return (1.0 - a) * np.asarray(color) + a * np.asarray(params.fog_color)


def fog_limit_depth(params: TurbidityParams, residual: float = 1.0 / 255) -> float:
    """Depth beyond which fog leaves less than ``residual`` of the object colour."""
    if params.density <= 0:
        return math.inf
    return -math.log(residual) / params.density
