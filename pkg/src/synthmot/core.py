"""Shared domain types, configuration schema and per-sequence parameter sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

Vec3 = np.ndarray
"""World-space vector in meters, camera frame (+z into the scene)."""

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# Named RNG sub-streams; fixed so adding a stream never shifts the others.
STREAM_SEQUENCE = 1
STREAM_ENVIRONMENT = 2
STREAM_DISTRACTORS = 3
STREAM_BACKGROUND = 4


class ConfigError(ValueError):
    """Raised for invalid generation configuration documents."""


def splitmix64(x: int) -> int:
    """SplitMix64 output function (Steele, Lea & Flood constants).

    Bijective on 64-bit integers, so distinct inputs never collide.
    """
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sequence_seed(master_seed: int, sequence_index: int) -> int:
    # master + index*gamma is injective in index (gamma is odd), splitmix64 is a bijection
    return splitmix64((master_seed + sequence_index * GOLDEN_GAMMA) & MASK64)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed & MASK64, *stream])


@dataclass(frozen=True)
class Bbox:
    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.left, self.top, self.width, self.height], dtype=float)


@dataclass(frozen=True)
class EnvironmentVariant:
    background: bool = False
    turbidity: bool = False
    distractors: bool = False

    @classmethod
    def parse(cls, letters: str) -> "EnvironmentVariant":
        """Parse ``"BTD"``, ``"tb"``, ``"none"`` or ``""`` into a variant."""
        text = letters.strip().upper()
        if text in ("", "NONE", "Ø", "∅"):
            return cls()
        bad = set(text) - set("BTD")
        if bad:
            raise ConfigError(f"unknown variant letters: {''.join(sorted(bad))}")
        if len(set(text)) != len(text):
            raise ConfigError(f"repeated variant letters in {letters!r}")
        return cls("B" in text, "T" in text, "D" in text)

    @property
    def letters(self) -> str:
        return "".join(c for c, on in zip("BTD", (self.background, self.turbidity, self.distractors)) if on)

    def __str__(self) -> str:
        return self.letters or "none"

    @classmethod
    def all(cls) -> list["EnvironmentVariant"]:
        return [cls.parse(s) for s in ("", "B", "T", "D", "TD", "BT", "BD", "BTD")]


@dataclass(frozen=True)
class WorldBounds:
    """Axis-aligned box in meters (camera frame)."""

    lo: tuple[float, float, float] = (-2.0, -1.2, 0.8)
    hi: tuple[float, float, float] = (2.0, 1.2, 6.0)

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= np.asarray(self.lo)) & (p <= np.asarray(self.hi)), axis=1)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)


Range = tuple[float, float]

DEFAULT_BOID_WEIGHT_RANGES: dict[str, Range] = {"S": (0.2, 2.0), "K": (0.2, 2.0), "M": (0.2, 2.0), "L": (0.2, 2.0)}


@dataclass(frozen=True)
class SequenceConfig:
    frame_count: int = 150
    fps: float = 15.0
    image_width: int = 1920
    image_height: int = 1080
    focal_px: float = 1000.0
    fish_count_range: tuple[int, int] = (4, 50)
    variant: EnvironmentVariant = field(default_factory=EnvironmentVariant)
    world_bounds: WorldBounds = field(default_factory=WorldBounds)
    boid_weight_ranges: dict[str, Range] = field(default_factory=lambda: dict(DEFAULT_BOID_WEIGHT_RANGES))
    neighborhood_radius: float = 0.6
    speed_range: Range = (0.08, 0.35)
    max_force: float = 0.8
    school_spread: float = 0.3
    fish_scale_range: Range = (0.8, 1.25)
    turbidity_density_range: Range = (0.05, 0.5)
    distractor_count_range: tuple[int, int] = (10, 60)
    distractor_radius_range: Range = (0.004, 0.02)
    distractor_transparency_range: Range = (0.2, 0.85)
    background_dir: str | None = None
    master_seed: int = 0

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, EnvironmentVariant):
                value = str(value)
            elif isinstance(value, WorldBounds):
                value = {axis: [value.lo[i], value.hi[i]] for i, axis in enumerate("xyz")}
            elif isinstance(value, dict):
                value = {k: list(v) for k, v in value.items()}
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


def _range(raw: Any, name: str, *, integer: bool = False, positive: bool = False) -> tuple:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ConfigError(f"{name}: expected a [low, high] pair, got {raw!r}")
    lo, hi = (_number(v, name, integer=integer) for v in raw)
    if lo > hi:
        raise ConfigError(f"{name}: inverted range [{lo}, {hi}]")
    if positive and lo <= 0:
        raise ConfigError(f"{name}: values must be positive")
    if not positive and lo < 0:
        raise ConfigError(f"{name}: values must be non-negative")
    return (lo, hi)


def _number(raw: Any, name: str, *, integer: bool = False) -> float | int:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {raw!r}")
    if not math.isfinite(raw):
        raise ConfigError(f"{name}: must be finite")
    if integer:
        if float(raw) != int(raw):
            raise ConfigError(f"{name}: expected an integer, got {raw!r}")
        return int(raw)
    return float(raw)


def _positive(raw: Any, name: str, *, integer: bool = False) -> float | int:
    value = _number(raw, name, integer=integer)
    if value <= 0:
        raise ConfigError(f"{name}: non-positive dimension {value}")
    return value


def validate_config(raw: Mapping[str, Any], *, master_seed: int | None = None) -> SequenceConfig:
    """Build a fully-defaulted :class:`SequenceConfig` from a parsed JSON document.

    ``master_seed`` supplies the seed from outside the document (the CLI
    ``--seed`` flag) and overrides any value inside it. A seed must come from
    one of the two places.
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("config document must be a JSON object")
    known = {f.name for f in fields(SequenceConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    kw: dict[str, Any] = {}
    for name in ("frame_count", "image_width", "image_height"):
        if name in raw:
            kw[name] = _positive(raw[name], name, integer=True)
    for name in ("fps", "focal_px", "neighborhood_radius", "max_force"):
        if name in raw:
            kw[name] = _positive(raw[name], name)
    if "school_spread" in raw:
        spread = _number(raw["school_spread"], "school_spread")
        if spread < 0:
            raise ConfigError("school_spread: must be non-negative")
        kw["school_spread"] = spread

    if "fish_count_range" in raw:
        lo, hi = _range(raw["fish_count_range"], "fish_count_range", integer=True)
        if lo < 1:
            raise ConfigError("fish_count_range: low must be >= 1")
        kw["fish_count_range"] = (lo, hi)
    if "distractor_count_range" in raw:
        kw["distractor_count_range"] = _range(raw["distractor_count_range"], "distractor_count_range", integer=True)
    for name in ("speed_range", "turbidity_density_range"):
        if name in raw:
            kw[name] = _range(raw[name], name)
    for name in ("fish_scale_range", "distractor_radius_range"):
        if name in raw:
            kw[name] = _range(raw[name], name, positive=True)
    if "distractor_transparency_range" in raw:
        lo, hi = _range(raw["distractor_transparency_range"], "distractor_transparency_range")
        if hi > 1:
            raise ConfigError("distractor_transparency_range: values must lie in [0, 1]")
        kw["distractor_transparency_range"] = (lo, hi)

    if "variant" in raw:
        if not isinstance(raw["variant"], str):
            raise ConfigError("variant: expected a string of letters from {B,T,D} or 'none'")
        kw["variant"] = EnvironmentVariant.parse(raw["variant"])

    if "world_bounds" in raw:
        wb = raw["world_bounds"]
        if not isinstance(wb, Mapping) or set(wb) != {"x", "y", "z"}:
            raise ConfigError("world_bounds: expected an object with keys x, y, z")
        pairs = []
        for axis in "xyz":
            value = wb[axis]
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError(f"world_bounds.{axis}: expected a [low, high] pair")
            lo, hi = (_number(v, f"world_bounds.{axis}") for v in value)
            if lo >= hi:
                raise ConfigError(f"world_bounds.{axis}: inverted range [{lo}, {hi}]")
            pairs.append((lo, hi))
        if pairs[2][0] <= 0:
            raise ConfigError("world_bounds.z: volume must lie in front of the camera (z > 0)")
        kw["world_bounds"] = WorldBounds(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    if "boid_weight_ranges" in raw:
        bw = raw["boid_weight_ranges"]
        if not isinstance(bw, Mapping) or set(bw) - set("SKML"):
            raise ConfigError("boid_weight_ranges: expected an object with keys among S, K, M, L")
        ranges = dict(DEFAULT_BOID_WEIGHT_RANGES)
        for key, value in bw.items():
            ranges[key] = _range(value, f"boid_weight_ranges.{key}")
        kw["boid_weight_ranges"] = ranges

    if "background_dir" in raw:
        if raw["background_dir"] is not None and not isinstance(raw["background_dir"], str):
            raise ConfigError("background_dir: expected a path string")
        kw["background_dir"] = raw["background_dir"]

    seed = raw.get("master_seed") if master_seed is None else master_seed
    if seed is None:
        raise ConfigError("missing master_seed")
    seed = _number(seed, "master_seed", integer=True)
    if not 0 <= seed <= MASK64:
        raise ConfigError("master_seed: must be an unsigned 64-bit integer")
    kw["master_seed"] = seed

    cfg = SequenceConfig(**kw)
    if cfg.speed_range[1] <= 0:
        raise ConfigError("speed_range: max speed must be positive")
    return cfg


def load_config(path: str | Path | None, *, master_seed: int | None = None) -> SequenceConfig:
    if path is None:
        return validate_config({}, master_seed=master_seed)
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return validate_config(raw, master_seed=master_seed)


@dataclass(frozen=True)
class FishPose:
    position: np.ndarray
    velocity: np.ndarray
    scale: float
    albedo: tuple[float, float, float]
    glossiness: float


@dataclass(frozen=True)
class SequenceParams:
    sequence_index: int
    seed: int
    fish_count: int
    boid_weights: Any  # boids.BoidWeights; typed loosely to avoid an import cycle
    fish_initial_poses: tuple[FishPose, ...]
    environment: Any  # environment.EnvInstance


def _uniform(rng: np.random.Generator, r: Range) -> float:
    lo, hi = r
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.array([1.0, 0.0, 0.0])


def sample_sequence_params(config: SequenceConfig, sequence_index: int) -> SequenceParams:
    """Deterministically sample everything that varies per sequence."""
    from .boids import BoidWeights
    from .environment import sample_environment

    seed = sequence_seed(config.master_seed, sequence_index)
    rng = make_rng(seed, STREAM_SEQUENCE)

    lo, hi = config.fish_count_range
    fish_count = int(rng.integers(lo, hi, endpoint=True))
    r = config.boid_weight_ranges
    weights = BoidWeights(
        S=_uniform(rng, r["S"]),
        K=_uniform(rng, r["K"]),
        M=_uniform(rng, r["M"]),
        L=_uniform(rng, r["L"]),
        neighborhood_radius=config.neighborhood_radius,
        min_speed=config.speed_range[0],
        max_speed=config.speed_range[1],
        max_force=config.max_force,
    )

    # school spawns around a centre inside the inner half of the volume,
    # with a shared cruising direction kept mostly horizontal
    b_lo, b_hi = np.asarray(config.world_bounds.lo), np.asarray(config.world_bounds.hi)
    ext = b_hi - b_lo
    center = rng.uniform(b_lo + 0.25 * ext, b_hi - 0.25 * ext)
    base = _random_unit(rng)
    base[1] *= 0.3
    base /= np.linalg.norm(base)
    inner_lo, inner_hi = b_lo + 0.1 * ext, b_hi - 0.1 * ext

    poses = []
    for _ in range(fish_count):
        pos = np.clip(center + rng.normal(scale=config.school_spread, size=3), inner_lo, inner_hi)
        heading = base + 0.25 * rng.normal(size=3)
        heading /= np.linalg.norm(heading)
        speed = _uniform(rng, config.speed_range)
        g = float(rng.uniform(0.12, 0.32))
        albedo = (g * float(rng.uniform(0.85, 1.0)), g * float(rng.uniform(0.95, 1.15)), g * float(rng.uniform(0.8, 1.0)))
        poses.append(
            FishPose(
                position=pos,
                velocity=heading * speed,
                scale=_uniform(rng, config.fish_scale_range),
                albedo=albedo,
                glossiness=float(rng.uniform(0.1, 0.6)),
            )
        )

    env = sample_environment(config.variant, seed, config)
    return SequenceParams(
        sequence_index=sequence_index,
        seed=seed,
        fish_count=fish_count,
        boid_weights=weights,
        fish_initial_poses=tuple(poses),
        environment=env,
    )
