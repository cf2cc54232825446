"""Sequence complexity proxies (occlusion, non-linear motion) and the sorted every-fifth split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import FrameData


@dataclass(frozen=True)
class ComplexityScores:
    name: str
    ocom: float
    mcom: float
    vcom: float | None = None
    motcom: float | None = None


@dataclass(frozen=True)
class SplitAssignment:
    train: list[str]
    test: list[str]


def _require_objects(gt: FrameData) -> None:
    if gt.num_dets == 0:
        raise ValueError("no objects")


def ioa_matrix(boxes: np.ndarray) -> np.ndarray:
    """``out[i, j]`` is the fraction of box ``i`` covered by box ``j``."""
    b = np.asarray(boxes, dtype=float).reshape(-1, 4)
    x1, y1 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.clip(np.minimum(x1[:, None], x1[None]) - np.maximum(b[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(y1[:, None], y1[None]) - np.maximum(b[:, None, 1], b[None, :, 1]), 0, None)
    area = b[:, 2] * b[:, 3]
    return iw * ih / area[:, None]


def ocom_proxy(gt: FrameData) -> float:
    """Mean over object-frames of the largest fraction of the box covered by any other box."""
    _require_objects(gt)
    total, n = 0.0, 0
    for ids, boxes in gt.frames:
        n += len(ids)
        if len(ids) < 2:
            continue
        ioa = ioa_matrix(boxes)
        np.fill_diagonal(ioa, 0.0)
        total += float(np.minimum(ioa.max(axis=1), 1.0).sum())
    return total / n


def track_centers(gt: FrameData) -> dict[int, list[tuple[int, np.ndarray, float]]]:
    """Per id: ``(frame index, box centre, box diagonal)`` in frame order."""
    tracks: dict[int, list] = {}
    for t, (ids, boxes) in enumerate(gt.frames):
        for tid, b in zip(ids, boxes):
            center = np.array([b[0] + b[2] / 2, b[1] + b[3] / 2])
            tracks.setdefault(int(tid), []).append((t, center, math.hypot(b[2], b[3])))
    return tracks


def mcom_proxy(gt: FrameData) -> float:
    """Mean bounded deviation of each box centre from constant-velocity extrapolation.

    Only frames preceded by two consecutive frames of the same track count;
    a sequence with none of those scores 0.
    """
    _require_objects(gt)
    total, n = 0.0, 0
    for samples in track_centers(gt).values():
        for k in range(2, len(samples)):
            if samples[k][0] - samples[k - 2][0] != 2:
                continue
            c0, c1, c2 = samples[k - 2][1], samples[k - 1][1], samples[k][1]
            d = float(np.linalg.norm(c2 - (2 * c1 - c0))) / samples[k][2]
            total += d / (1.0 + d)
            n += 1
    return total / n if n else 0.0


def combine_motcom(scores: ComplexityScores) -> float:
    parts = [v for v in (scores.ocom, scores.mcom, scores.vcom) if v is not None]
    return sum(parts) / len(parts)


def score_sequence(name: str, gt: FrameData) -> ComplexityScores:
    s = ComplexityScores(name, ocom_proxy(gt), mcom_proxy(gt))
    return ComplexityScores(s.name, s.ocom, s.mcom, None, combine_motcom(s))


def split_sequences(scored: Sequence[tuple[str, float]]) -> SplitAssignment:
    """Highest score to train, second to test, then every fifth further down to test."""
    names = [n for n, _ in scored]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate sequence names: {', '.join(dupes)}")
    if len(scored) < 2:
        raise ValueError("need at least 2 sequences")
    ranked = sorted(scored, key=lambda x: (-float(x[1]), x[0]))
    train, test = [], []
    for rank, (name, _) in enumerate(ranked):
        (test if rank >= 1 and (rank - 1) % 5 == 0 else train).append(name)
    return SplitAssignment(train, test)


SCORES_HEADER = ("name", "ocom", "mcom", "motcom")


def write_scores_csv(scores: Iterable[ComplexityScores], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORES_HEADER)
        for s in scores:
            w.writerow([s.name, repr(s.ocom), repr(s.mcom), repr(s.motcom)])


def read_scores_csv(path: str | Path) -> list[tuple[str, float]]:
    """``(name, motcom)`` pairs; ``motcom`` may be blank when ocom/mcom are given."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "name" not in reader.fieldnames:
            raise ValueError(f"{path}: scores CSV needs a 'name' column")
        for lineno, row in enumerate(reader, start=2):
            try:
                if row.get("motcom") not in (None, ""):
                    value = float(row["motcom"])
                else:
                    value = combine_motcom(ComplexityScores(row["name"], float(row["ocom"]), float(row["mcom"])))
            except (KeyError, TypeError, ValueError):
                raise ValueError(f"{path}: unusable score at line {lineno}") from None
            out.append((row["name"], value))
    return out


def write_split(split: SplitAssignment, out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "train.txt").write_text("".join(f"{n}\n" for n in split.train), encoding="utf-8")
    (out / "test.txt").write_text("".join(f"{n}\n" for n in split.test), encoding="utf-8")
