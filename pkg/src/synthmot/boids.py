"""Fish schooling model: separation, cohesion, alignment and leader forces.

The per-fish functions (:func:`neighborhood`, :func:`compute_forces`,
:func:`steering`) are the readable reference; :func:`step` evaluates the same
rules for the whole school at once with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SequenceConfig, SequenceParams, WorldBounds

COINCIDENT_EPS = 1e-9
NORM_EPS = 1e-12
COINCIDENT_AXIS = np.array([1.0, 0.0, 0.0])
BOUNDARY_MARGIN = 0.1
BOUNDARY_STRENGTH = 2.0  # times max_force at the wall, so steering alone cannot push a fish out


@dataclass(frozen=True)
class BoidWeights:
    S: float
    K: float
    M: float
    L: float
    neighborhood_radius: float = 0.6
    min_speed: float = 0.08
    max_speed: float = 0.35
    max_force: float = 0.8

    def __post_init__(self):
        if min(self.S, self.K, self.M, self.L) < 0:
            raise ValueError("boid weights must be non-negative")
        if not 0 <= self.min_speed <= self.max_speed:
            raise ValueError("need 0 <= min_speed <= max_speed")
        if self.neighborhood_radius <= 0 or self.max_force <= 0:
            raise ValueError("neighborhood_radius and max_force must be positive")


@dataclass(frozen=True)
class FishState:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    heading: np.ndarray
    scale: float = 1.0


@dataclass(frozen=True)
class ForceComponents:
    s: np.ndarray
    k: np.ndarray
    m: np.ndarray
    l: np.ndarray

    def scaled(self, alpha: float) -> "ForceComponents":
        return ForceComponents(self.s * alpha, self.k * alpha, self.m * alpha, self.l * alpha)


@dataclass(frozen=True)
class SchoolState:
    """All fish alive at one frame, stored column-wise and sorted by id."""

    frame_index: int
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    headings: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("fish ids must be unique within a frame")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def fishes(self) -> list[FishState]:
        return [
            FishState(int(i), self.positions[n], self.velocities[n], self.headings[n], float(self.scales[n]))
            for n, i in enumerate(self.ids)
        ]

    @classmethod
    def from_fishes(cls, frame_index: int, fishes: list[FishState]) -> "SchoolState":
        fishes = sorted(fishes, key=lambda f: f.id)
        if not fishes:
            empty = np.zeros((0, 3))
            return cls(frame_index, np.zeros(0, dtype=int), empty, empty.copy(), empty.copy(), np.zeros(0))
        return cls(
            frame_index,
            np.array([f.id for f in fishes], dtype=int),
            np.array([f.position for f in fishes], dtype=float),
            np.array([f.velocity for f in fishes], dtype=float),
            np.array([f.heading for f in fishes], dtype=float),
            np.array([f.scale for f in fishes], dtype=float),
        )

    def subset(self, keep: np.ndarray) -> "SchoolState":
        return SchoolState(
            self.frame_index,
            self.ids[keep],
            self.positions[keep],
            self.velocities[keep],
            self.headings[keep],
            self.scales[keep],
        )


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > NORM_EPS else np.zeros(3)


def neighborhood(subject: FishState, school: SchoolState, radius: float) -> list[FishState]:
    """Other fish within ``radius`` of ``subject`` (boundary inclusive)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return [
        f
        for f in school.fishes
        if f.id != subject.id and np.linalg.norm(f.position - subject.position) <= radius
    ]


def compute_forces(subject: FishState, neighbors: list[FishState]) -> ForceComponents:
    if not neighbors:
        z = np.zeros(3)
        return ForceComponents(z, z.copy(), z.copy(), z.copy())

    sep = np.zeros(3)
    for other in neighbors:
        d = subject.position - other.position
        dist = np.linalg.norm(d)
        sep = sep + (COINCIDENT_AXIS if dist < COINCIDENT_EPS else d / (dist * dist))

    centroid = np.mean([f.position for f in neighbors], axis=0)
    mean_vel = np.mean([f.velocity for f in neighbors], axis=0)

    # most similar heading wins; ties go to the lowest id
    leader = min(neighbors, key=lambda f: (-float(np.dot(subject.heading, f.heading)), f.id))

    return ForceComponents(
        s=_normalize(sep),
        k=_normalize(centroid - subject.position),
        m=_normalize(mean_vel - subject.velocity),
        l=_normalize(leader.heading),
    )


def clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    factor = np.where(n > limit, limit / np.where(n > 0, n, 1.0), 1.0)
    return v * factor


def steering(forces: ForceComponents, weights: BoidWeights) -> np.ndarray:
    steer = weights.S * forces.s + weights.K * forces.k + weights.M * forces.m + weights.L * forces.l
    return clamp_norm(steer, weights.max_force)


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(n > NORM_EPS, n, 1.0)
    return np.where(n > NORM_EPS, v / safe, 0.0)


def school_forces(school: SchoolState, radius: float) -> ForceComponents:
    """Vectorized :func:`compute_forces` for every fish; rows align with ``school.ids``."""
    n = len(school)
    P, V, H = school.positions, school.velocities, school.headings
    if n == 0:
        z = np.zeros((0, 3))
        return ForceComponents(z, z, z, z)

    diff = P[:, None, :] - P[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    mask = dist <= radius
    np.fill_diagonal(mask, False)
    count = mask.sum(axis=1)
    has = count > 0

    coincident = dist < COINCIDENT_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = diff / (dist * dist)[..., None]
    terms = np.where(coincident[..., None], COINCIDENT_AXIS, terms)
    terms = np.where(mask[..., None], terms, 0.0)
    sep = terms.sum(axis=1)

    denom = np.where(has, count, 1)[:, None]
    centroid = (mask @ P) / denom
    mean_vel = (mask @ V) / denom
    coh = np.where(has[:, None], centroid - P, 0.0)
    ali = np.where(has[:, None], mean_vel - V, 0.0)

    dots = np.where(mask, H @ H.T, -np.inf)
    leader = np.argmax(dots, axis=1)  # first maximum = lowest id, ids are sorted
    lead = np.where(has[:, None], H[leader], 0.0)

    return ForceComponents(_normalize_rows(sep), _normalize_rows(coh), _normalize_rows(ali), _normalize_rows(lead))


def boundary_repulsion(positions: np.ndarray, bounds: WorldBounds, strength: float) -> np.ndarray:
    """Inward push ramping linearly from 0 at the margin edge to ``strength`` at the wall."""
    lo, hi = np.asarray(bounds.lo), np.asarray(bounds.hi)
    margin = BOUNDARY_MARGIN * (hi - lo)
    push_in = np.clip((lo + margin - positions) / margin, 0.0, 1.0)
    push_out = np.clip((positions - (hi - margin)) / margin, 0.0, 1.0)
    return strength * (push_in - push_out)


def step(school: SchoolState, weights: BoidWeights, bounds: WorldBounds, dt: float) -> SchoolState:
    """Advance one frame with semi-implicit Euler; pure in its inputs."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if len(school) == 0:
        return SchoolState(school.frame_index + 1, school.ids, school.positions, school.velocities,
                           school.headings, school.scales)

    f = school_forces(school, weights.neighborhood_radius)
    steer = weights.S * f.s + weights.K * f.k + weights.M * f.m + weights.L * f.l
    steer = clamp_norm(steer, weights.max_force)
    acc = steer + boundary_repulsion(school.positions, bounds, BOUNDARY_STRENGTH * weights.max_force)

    vel = school.velocities + acc * dt
    speed = np.linalg.norm(vel, axis=1, keepdims=True)
    heading = np.where(speed > NORM_EPS, vel / np.where(speed > NORM_EPS, speed, 1.0), school.headings)
    clamped = np.clip(speed, weights.min_speed, weights.max_speed)
    # rescale only where the clamp bites, so free flight stays exact
    vel = np.where(clamped != speed, heading * clamped, vel)
    pos = school.positions + vel * dt
    return SchoolState(school.frame_index + 1, school.ids, pos, vel, heading, school.scales)


def initial_school(params: SequenceParams) -> SchoolState:
    fishes = []
    for i, pose in enumerate(params.fish_initial_poses, start=1):
        v = np.asarray(pose.velocity, dtype=float)
        heading = _normalize(v)
        if not heading.any():
            heading = COINCIDENT_AXIS.copy()
        fishes.append(FishState(i, np.asarray(pose.position, dtype=float), v, heading, pose.scale))
    return SchoolState.from_fishes(0, fishes)


def simulate(params: SequenceParams, config: SequenceConfig) -> list[SchoolState]:
    """Run the school for ``config.frame_count`` frames; fish leaving the volume are retired."""
    states = [initial_school(params)]
    weights = params.boid_weights
    for _ in range(config.frame_count - 1):
        nxt = step(states[-1], weights, config.world_bounds, config.dt)
        inside = config.world_bounds.contains(nxt.positions) if len(nxt) else np.zeros(0, dtype=bool)
        if not inside.all():
            nxt = nxt.subset(inside)
        states.append(nxt)
    return states
