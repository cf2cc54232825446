from __future__ import annotations

import random

import numpy as np

from synthmot.metrics import FrameData, iou_matrix

ACCEPTANCE_LINES: list[str] = []

NO_EXIT_CONFIG = {
    "variant": "BTD",
    # volume inside the camera frustum, so fish can only leave by hitting the walls
    "world_bounds": {"x": [-1.0, 1.0], "y": [-0.5, 0.5], "z": [2.0, 4.5]},
    "fish_count_range": [4, 6],
}


def to_frame_data(frames) -> FrameData:
    return FrameData.from_lists([sorted(f.items()) for f in frames])


def random_box(rng: random.Random, area: float = 60.0):
    return (rng.uniform(0, area), rng.uniform(0, area), rng.uniform(8, 30), rng.uniform(8, 30))


def random_instance(rng: random.Random, max_tracks: int = 4, max_frames: int = 6):
    """Small gt/pred pair with crowded boxes, id swaps, jitter and clutter."""
    n_frames = rng.randint(1, max_frames)
    n_gt = rng.randint(1, max_tracks)
    n_pred = rng.randint(1, max_tracks)
    gt = [dict() for _ in range(n_frames)]
    pred = [dict() for _ in range(n_frames)]
    for g in range(1, n_gt + 1):
        box = random_box(rng)
        for t in range(n_frames):
            box = (box[0] + rng.uniform(-6, 6), box[1] + rng.uniform(-6, 6), box[2], box[3])
            if rng.random() < 0.85:
                gt[t][g] = box
    for t in range(n_frames):
        owners = list(gt[t].items())
        rng.shuffle(owners)
        ids = list(range(1, n_pred + 1))
        rng.shuffle(ids)
        for pid in ids:
            r = rng.random()
            if r < 0.65 and owners:
                _, b = owners.pop()
                j = rng.uniform(0, 5)
                pred[t][pid] = (b[0] + rng.uniform(-j, j), b[1] + rng.uniform(-j, j),
                                b[2] * rng.uniform(0.8, 1.2), b[3] * rng.uniform(0.8, 1.2))
            elif r < 0.85:
                pred[t][pid] = random_box(rng)
    return gt, pred


def no_exits(seq) -> bool:
    n = seq.params.fish_count
    return len({r.id for r in seq.records}) == n and len(seq.records) == n * len(seq.states)


def unambiguous(gt: FrameData, gate: float) -> bool:
    """Every box overlaps its own previous box at least ``gate`` and more than any other pairing."""
    for (i0, b0), (i1, b1) in zip(gt.frames, gt.frames[1:]):
        if list(i0) != list(i1):
            return False
        m = iou_matrix(b0, b1)
        own = np.diag(m)
        off = m - np.diag(own)
        if np.any(own < gate) or np.any(off.max(axis=0, initial=0) >= own) or np.any(off.max(axis=1, initial=0) >= own):
            return False
    return True


def record_acceptance(line: str) -> None:
    """Keep a criterion result line for the end-of-run summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)
