"""Small deterministic software rasterizer for the synthetic frames.

Objects are composited far to near (painter's algorithm). Fish are opaque
shaded ellipses, distractors translucent discs, and every object colour is
pulled toward the fog colour by its distance from the camera.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image, ImageFilter

from .annotations import atomic_write
from .boids import SchoolState
from .camera import BodyExtent, CameraIntrinsics, body_axes
from .core import make_rng, STREAM_BACKGROUND
from .environment import (
    BackgroundSpec,
    EnvInstance,
    fog_blend,
    list_background_frames,
    step_distractors,
)

DEFAULT_ALBEDO = (0.22, 0.24, 0.2)
TO_LIGHT = np.array([0.25, -0.8, -0.55]) / np.linalg.norm([0.25, -0.8, -0.55])
AMBIENT = 0.35


class RenderError(OSError):
    pass


@dataclass
class FrameBuffer:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3) or self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be a (height, width, 3) uint8 array")

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _augment(img: np.ndarray, spec: BackgroundSpec) -> np.ndarray:
    grey = img.mean(axis=2, keepdims=True)
    img = grey + spec.saturation * (img - grey) + np.asarray(spec.color_shift)
    img = np.clip(img, 0.0, 1.0)
    if spec.blur_radius > 0:
        pil = Image.fromarray(to_uint8(img)).filter(ImageFilter.GaussianBlur(spec.blur_radius))
        img = np.asarray(pil, dtype=float) / 255.0
    return img


@lru_cache(maxsize=8)
def _procedural(spec: BackgroundSpec, width: int, height: int) -> np.ndarray:
    """Low-frequency value noise over a darkening vertical gradient."""
    rng = make_rng(spec.seed, STREAM_BACKGROUND)
    gy, gx = 6, 10
    grid = rng.uniform(-1.0, 1.0, size=(gy + 1, gx + 1))
    ys = np.linspace(0, gy, height)
    xs = np.linspace(0, gx, width)
    iy = np.minimum(ys.astype(int), gy - 1)
    ix = np.minimum(xs.astype(int), gx - 1)
    fy = (ys - iy)[:, None]
    fx = (xs - ix)[None, :]
    noise = (
        (1 - fy) * (1 - fx) * grid[iy][:, ix]
        + (1 - fy) * fx * grid[iy][:, ix + 1]
        + fy * (1 - fx) * grid[iy + 1][:, ix]
        + fy * fx * grid[iy + 1][:, ix + 1]
    )
    gradient = np.linspace(1.1, 0.7, height)[:, None]
    base = np.asarray(spec.monotone_color)
    img = base[None, None, :] * (gradient * (1.0 + 0.25 * noise))[..., None]
    img = _augment(np.clip(img, 0.0, 1.0), spec)
    img.setflags(write=False)
    return img


def _image_frame(spec: BackgroundSpec, frame_index: int, width: int, height: int) -> np.ndarray:
    frames = list_background_frames(spec.image_dir)
    path = frames[frame_index % len(frames)]
    try:
        with Image.open(path) as im:
            im = im.convert("RGB").resize((width, height), Image.BILINEAR)
            img = np.asarray(im, dtype=float) / 255.0
    except OSError as exc:
        raise RenderError(f"cannot read background frame {path}: {exc}") from exc
    return _augment(img, spec)


def render_background(spec: BackgroundSpec, frame_index: int, width: int, height: int) -> np.ndarray:
    if spec.kind == "monotone":
        return np.broadcast_to(np.asarray(spec.monotone_color, dtype=float), (height, width, 3)).copy()
    if spec.kind == "procedural":
        return _procedural(spec, width, height).copy()
    if spec.kind == "image_sequence":
        return _image_frame(spec, frame_index, width, height)
    raise ValueError(f"unknown background kind {spec.kind!r}")


def _draw_fish(img, center, major, semi_minor, color, depth, fog, gloss) -> None:
    h, w, _ = img.shape
    a = max(float(np.hypot(*major)), semi_minor, 0.5)
    b = max(semi_minor, 0.5)
    if np.hypot(*major) > 1e-9:
        ux, uy = major / np.hypot(*major)
    else:
        ux, uy = 1.0, 0.0
    x0, x1 = int(np.floor(center[0] - a)), int(np.ceil(center[0] + a)) + 1
    y0, y1 = int(np.floor(center[1] - a)), int(np.ceil(center[1] + a)) + 1
    x0, y0, x1, y1 = max(x0, 0), max(y0, 0), min(x1, w), min(y1, h)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dx, dy = xx + 0.5 - center[0], yy + 0.5 - center[1]
    ex = (dx * ux + dy * uy) / a
    ey = (-dx * uy + dy * ux) / b
    r2 = ex * ex + ey * ey
    inside = r2 <= 1.0
    # the pixel holding the centre is always drawn so tiny fish stay visible
    cx, cy = int(np.floor(center[0])), int(np.floor(center[1]))
    if y0 <= cy < y1 and x0 <= cx < x1:
        inside[cy - y0, cx - x0] = True
    if not inside.any():
        return
    nz = np.sqrt(np.clip(1.0 - r2, 0.0, 1.0))
    nx = ex * ux - ey * uy
    ny = ex * uy + ey * ux
    lambert = np.clip(nx * TO_LIGHT[0] + ny * TO_LIGHT[1] - nz * TO_LIGHT[2], 0.0, 1.0)
    shade = np.asarray(color)[None, None, :] * (AMBIENT + (1 - AMBIENT) * lambert)[..., None]
    shade = shade + (0.3 * gloss * lambert**8)[..., None]
    shaded = fog_blend(shade, depth, fog)
    region = img[y0:y1, x0:x1]
    region[inside] = shaded[inside]


def _draw_disc(img, center, radius, color, alpha) -> None:
    h, w, _ = img.shape
    r = max(radius, 0.5)
    x0, x1 = max(int(np.floor(center[0] - r)), 0), min(int(np.ceil(center[0] + r)) + 1, w)
    y0, y1 = max(int(np.floor(center[1] - r)), 0), min(int(np.ceil(center[1] + r)) + 1, h)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    inside = (xx + 0.5 - center[0]) ** 2 + (yy + 0.5 - center[1]) ** 2 <= r * r
    region = img[y0:y1, x0:x1]
    region[inside] = (1.0 - alpha) * region[inside] + alpha * np.asarray(color)


def render_frame(
    school: SchoolState,
    env: EnvInstance,
    cam: CameraIntrinsics,
    frame_index: int,
    *,
    extent: BodyExtent = BodyExtent(),
    appearance: Mapping[int, tuple] | None = None,
    background: np.ndarray | None = None,
) -> FrameBuffer:
    """Render one frame.

    ``appearance`` maps fish id to ``(albedo_rgb, glossiness)``; ``background``
    overrides the environment background with a precomputed float image.
    """
    W, H = cam.image_width, cam.image_height
    if background is None:
        img = render_background(env.background, frame_index, W, H)
    else:
        img = np.array(background, dtype=float, copy=True)
    fog = env.turbidity
    f = cam.focal_px

    items = []  # (distance, kind order, tiebreak, payload)
    if len(school):
        fwd, _, _ = body_axes(school.headings)
        for n, fid in enumerate(school.ids):
            p = school.positions[n]
            if p[2] <= 0:
                continue
            items.append((float(np.linalg.norm(p)), 0, int(fid), ("fish", n, fwd[n])))
    for i, d in enumerate(step_distractors(env, frame_index, env.seed)):
        if d.position[2] <= 0:
            continue
        items.append((float(np.linalg.norm(d.position)), 1, i, ("disc", d)))
    items.sort(key=lambda t: (-t[0], t[1], t[2]))

    for dist, _, _, payload in items:
        if payload[0] == "fish":
            _, n, heading = payload
            p = school.positions[n]
            s = float(school.scales[n])
            half = 0.5 * extent.length * s * heading
            head, tail = p + half, p - half
            if head[2] <= 0 or tail[2] <= 0:
                continue
            ph = np.array([cam.cx + f * head[0] / head[2], cam.cy + f * head[1] / head[2]])
            pt = np.array([cam.cx + f * tail[0] / tail[2], cam.cy + f * tail[1] / tail[2]])
            center = np.array([cam.cx + f * p[0] / p[2], cam.cy + f * p[1] / p[2]])
            semi_minor = 0.5 * f * extent.height * s / p[2]
            albedo, gloss = (appearance or {}).get(int(school.ids[n]), (DEFAULT_ALBEDO, 0.3))
            _draw_fish(img, center, 0.5 * (ph - pt), semi_minor, albedo, dist, fog, gloss)
        else:
            d = payload[1]
            p = d.position
            center = (cam.cx + f * p[0] / p[2], cam.cy + f * p[1] / p[2])
            color = fog_blend(np.asarray(d.color), dist, fog)
            _draw_disc(img, center, f * d.radius / p[2], color, 1.0 - d.transparency)

    return FrameBuffer(W, H, to_uint8(img))


def write_image(fb: FrameBuffer, path: str | Path) -> None:
    path = Path(path)
    buf = io.BytesIO()
    Image.fromarray(fb.pixels, mode="RGB").save(buf, format="PNG", optimize=False)
    try:
        atomic_write(path, buf.getvalue())
    except OSError as exc:
        raise RenderError(f"cannot write image {path}: {exc}") from exc


def read_image(path: str | Path) -> FrameBuffer:
    with Image.open(path) as im:
        px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return FrameBuffer(px.shape[1], px.shape[0], px.copy())
