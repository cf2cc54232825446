"""Greedy IoU tracker and a detection corruptor standing in for a learned detector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotations import Detection
from .core import Bbox, make_rng
from .metrics import FrameData, iou_matrix

FP_SIZE_RANGE = (8.0, 64.0)


@dataclass(frozen=True)
class CorruptionParams:
    drop_probability: float = 0.0
    jitter_sigma: float = 0.0
    false_positive_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")
        if self.jitter_sigma < 0 or self.false_positive_rate < 0:
            raise ValueError("jitter_sigma and false_positive_rate must be non-negative")


@dataclass(frozen=True)
class TrackerParams:
    iou_gate: float = 0.3
    max_missed_frames: int = 0
    predict: bool = False
    hungarian: bool = False

    def __post_init__(self):
        if not 0.0 < self.iou_gate <= 1.0:
            raise ValueError("iou_gate must lie in (0, 1]")
        if self.max_missed_frames < 0:
            raise ValueError("max_missed_frames must be non-negative")


def corrupt_detections(gt: FrameData, params: CorruptionParams, image_width: int, image_height: int) -> list[np.ndarray]:
    """Drop, jitter and pad GT boxes with false positives; returns ``(n, 4)`` arrays per frame."""
    rng = make_rng(params.seed)
    out = []
    for _, boxes in gt.frames:
        n = len(boxes)
        keep = rng.random(n) >= params.drop_probability
        noise = rng.normal(0.0, 1.0, size=(n, 4)) * params.jitter_sigma
        dets = (boxes + noise)[keep]
        dets[:, 2:] = np.maximum(dets[:, 2:], 1.0)

        n_fp = int(rng.poisson(params.false_positive_rate))
        wh = rng.uniform(*FP_SIZE_RANGE, size=(n_fp, 2))
        wh = np.minimum(wh, [image_width, image_height])
        lt = rng.random((n_fp, 2)) * (np.array([image_width, image_height]) - wh)
        out.append(np.concatenate([dets, np.hstack([lt, wh])]) if n_fp else dets)
    return out


def gt_as_detections(gt: FrameData) -> list[np.ndarray]:
    return [boxes.copy() for _, boxes in gt.frames]


@dataclass
class _Track:
    id: int
    box: np.ndarray
    velocity: np.ndarray
    last_frame: int
    missed: int = 0

    def predicted(self, frame: int, use_velocity: bool) -> np.ndarray:
        if not use_velocity:
            return self.box
        return self.box + self.velocity * (frame - self.last_frame)


def _greedy(sim: np.ndarray, track_ids: list[int], gate: float) -> list[tuple[int, int]]:
    cand = [(-sim[i, j], track_ids[i], j, i) for i, j in zip(*np.nonzero(sim >= gate))]
    cand.sort()
    used_t, used_d, pairs = set(), set(), []
    for _, _, j, i in cand:
        if i in used_t or j in used_d:
            continue
        used_t.add(i)
        used_d.add(j)
        pairs.append((i, j))
    return pairs


def _hungarian(sim: np.ndarray, gate: float) -> list[tuple[int, int]]:
    if sim.size == 0:
        return []
    rows, cols = linear_sum_assignment(np.where(sim >= gate, sim, 0.0), maximize=True)
    return [(i, j) for i, j in zip(rows, cols) if sim[i, j] >= gate]


def track_sequence(detections: list[np.ndarray], params: TrackerParams = TrackerParams()) -> FrameData:
    """Online association of per-frame detections into tracks with fresh ids."""
    tracks: list[_Track] = []
    next_id = 1
    frames = []
    for t, dets in enumerate(detections):
        dets = np.asarray(dets, dtype=float).reshape(-1, 4)
        if tracks and len(dets):
            pred = np.array([tr.predicted(t, params.predict) for tr in tracks])
            sim = iou_matrix(pred, dets)
            if params.hungarian:
                pairs = _hungarian(sim, params.iou_gate)
            else:
                pairs = _greedy(sim, [tr.id for tr in tracks], params.iou_gate)
        else:
            pairs = []

        matched_t = {i for i, _ in pairs}
        matched_d = {j for _, j in pairs}
        out_ids, out_boxes = [], []
        for i, j in pairs:
            tr = tracks[i]
            gap = t - tr.last_frame
            tr.velocity = (dets[j] - tr.box) / gap
            tr.box, tr.last_frame, tr.missed = dets[j], t, 0
            out_ids.append(tr.id)
            out_boxes.append(dets[j])

        survivors = []
        for i, tr in enumerate(tracks):
            if i not in matched_t:
                tr.missed += 1
                if tr.missed > params.max_missed_frames:
                    continue
            survivors.append(tr)
        tracks = survivors

        for j in range(len(dets)):
            if j in matched_d:
                continue
            tracks.append(_Track(next_id, dets[j], np.zeros(4), t))
            out_ids.append(next_id)
            out_boxes.append(dets[j])
            next_id += 1

        order = np.argsort(out_ids, kind="stable")
        frames.append((np.array(out_ids, dtype=int)[order], np.array(out_boxes, dtype=float).reshape(-1, 4)[order]))
    return FrameData(frames)


def to_detections(pred: FrameData) -> list[Detection]:
    return [
        Detection(t, int(i), Bbox(*map(float, b)), 1.0)
        for t, (ids, boxes) in enumerate(pred.frames, start=1)
        for i, b in zip(ids, boxes)
    ]
