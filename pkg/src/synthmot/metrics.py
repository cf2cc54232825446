"""MOT evaluation: IoU, CLEAR MOTA, IDF1 and HOTA, plus per-sequence reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotations import (
    AnnotationRecord,
    Detection,
    parse_gt_file,
    parse_results_file,
    read_seqinfo,
)
from .core import Bbox

EPS = 1e-10
HOTA_ALPHAS = np.arange(1, 20) * 0.05
ASSOC_TIEBREAK = 1e-3
CONTINUATION_BONUS = 1000.0

REPORT_COLUMNS = ("HOTA", "MOTA", "IDF1", "Dets", "GT dets", "IDs", "GT IDs", "IDSW")
SCORE_COLUMNS = {"hota": "HOTA", "mota": "MOTA", "idf1": "IDF1"}


class MetricError(ValueError):
    """A metric is undefined for the given input."""


@dataclass
class FrameData:
    """Per-frame ``(ids, boxes)`` for one side of an evaluation.

    ``boxes`` rows are ``(left, top, width, height)``; frame ``t`` of the list
    is MOT frame ``t + 1``.
    """

    frames: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        for t, (ids, boxes) in enumerate(self.frames):
            if len(np.unique(ids)) != len(ids):
                raise ValueError(f"duplicate ids in frame {t + 1}")
            if len(ids) != len(boxes):
                raise ValueError(f"ids/boxes length mismatch in frame {t + 1}")

    @classmethod
    def from_lists(cls, frames: Sequence[Sequence[tuple[int, Sequence[float]]]]) -> "FrameData":
        out = []
        for frame in frames:
            ids = np.array([i for i, _ in frame], dtype=int)
            boxes = np.array([list(b.as_array()) if isinstance(b, Bbox) else list(b) for _, b in frame], dtype=float)
            out.append((ids, boxes.reshape(-1, 4)))
        return cls(out)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, int, Bbox]], num_frames: int) -> "FrameData":
        per: list[list] = [[] for _ in range(num_frames)]
        for frame, tid, box in rows:
            if not 1 <= frame <= num_frames:
                raise ValueError(f"frame {frame} outside 1..{num_frames}")
            per[frame - 1].append((tid, box))
        return cls.from_lists([sorted(f, key=lambda x: x[0]) for f in per])

    @classmethod
    def from_records(cls, records: Iterable[AnnotationRecord], num_frames: int) -> "FrameData":
        return cls.from_rows(((r.frame, r.id, r.box) for r in records), num_frames)

    @classmethod
    def from_detections(cls, dets: Iterable[Detection], num_frames: int) -> "FrameData":
        return cls.from_rows(((d.frame, d.id, d.box) for d in dets), num_frames)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def num_dets(self) -> int:
        return sum(len(ids) for ids, _ in self.frames)

    def unique_ids(self) -> np.ndarray:
        if not self.frames:
            return np.zeros(0, dtype=int)
        return np.unique(np.concatenate([ids for ids, _ in self.frames]))


def iou(a: Bbox, b: Bbox) -> float:
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of ``(left, top, width, height)`` rows."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ax1, ay1 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx1, by1 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.clip(np.minimum(ax1[:, None], bx1[None]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(ay1[:, None], by1[None]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def _check_aligned(gt: FrameData, pred: FrameData) -> None:
    if gt.num_frames != pred.num_frames:
        raise ValueError(f"frame count mismatch: gt has {gt.num_frames}, predictions {pred.num_frames}")


def _maximize(score: np.ndarray, allowed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if score.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    rows, cols = linear_sum_assignment(np.where(allowed, score, 0.0), maximize=True)
    keep = allowed[rows, cols]
    return rows[keep], cols[keep]


@dataclass(frozen=True)
class ClearResult:
    mota: float
    tp: int
    fn: int
    fp: int
    idsw: int
    gt_dets: int
    matches: tuple[tuple[int, int, int], ...]  # (frame, gt id, pred id)


def clear_mota(gt: FrameData, pred: FrameData, iou_threshold: float = 0.5) -> ClearResult:
    _check_aligned(gt, pred)
    gt_dets = gt.num_dets
    if gt_dets == 0:
        raise MetricError("MOTA is undefined without ground-truth detections")
    last: dict[int, int] = {}
    tp = fp = idsw = 0
    matches = []
    for t, ((g_ids, g_boxes), (p_ids, p_boxes)) in enumerate(zip(gt.frames, pred.frames), start=1):
        sim = iou_matrix(g_boxes, p_boxes)
        allowed = sim >= iou_threshold - EPS
        score = sim.copy()
        for i, g in enumerate(g_ids):
            prev = last.get(int(g))
            if prev is not None:
                score[i, p_ids == prev] += CONTINUATION_BONUS
        rows, cols = _maximize(score, allowed)
        for i, j in zip(rows, cols):
            g, p = int(g_ids[i]), int(p_ids[j])
            if g in last and last[g] != p:
                idsw += 1
            last[g] = p
            matches.append((t, g, p))
        tp += len(rows)
        fp += len(p_ids) - len(rows)
    fn = gt_dets - tp
    mota = 1.0 - (fn + fp + idsw) / gt_dets
    return ClearResult(mota, tp, fn, fp, idsw, gt_dets, tuple(matches))


@dataclass(frozen=True)
class IDF1Result:
    idf1: float
    idtp: int
    idfp: int
    idfn: int


def id_match_counts(gt: FrameData, pred: FrameData, iou_threshold: float = 0.5):
    """Frames in which each (gt id, pred id) pair overlaps above threshold."""
    _check_aligned(gt, pred)
    g_all, p_all = gt.unique_ids(), pred.unique_ids()
    counts = np.zeros((len(g_all), len(p_all)), dtype=np.int64)
    for (g_ids, g_boxes), (p_ids, p_boxes) in zip(gt.frames, pred.frames):
        if len(g_ids) == 0 or len(p_ids) == 0:
            continue
        hit = iou_matrix(g_boxes, p_boxes) >= iou_threshold - EPS
        gi = np.searchsorted(g_all, g_ids)
        pi = np.searchsorted(p_all, p_ids)
        counts[np.ix_(gi, pi)] += hit
    return g_all, p_all, counts


def idf1(gt: FrameData, pred: FrameData, iou_threshold: float = 0.5) -> IDF1Result:
    """Identity F1 under the optimal one-to-one pairing of trajectories."""
    n_gt, n_pred = gt.num_dets, pred.num_dets
    if n_gt == 0 and n_pred == 0:
        _check_aligned(gt, pred)
        return IDF1Result(1.0, 0, 0, 0)
    _, _, counts = id_match_counts(gt, pred, iou_threshold)
    idtp = 0
    if counts.size:
        # maximizing shared frames minimizes idfp + idfn = n_gt + n_pred - 2 idtp
        rows, cols = linear_sum_assignment(counts, maximize=True)
        idtp = int(counts[rows, cols].sum())
    idfp, idfn = n_pred - idtp, n_gt - idtp
    return IDF1Result(2 * idtp / (2 * idtp + idfp + idfn), idtp, idfp, idfn)


@dataclass(frozen=True)
class HotaResult:
    hota: float
    deta: float
    assa: float
    alphas: np.ndarray
    hota_alpha: np.ndarray
    deta_alpha: np.ndarray
    assa_alpha: np.ndarray


def association_scores(gt: FrameData, pred: FrameData):
    """Global alignment between every gt and pred trajectory from soft per-frame overlaps.

    Returns ``(gt_ids, pred_ids, score, gt_counts, pred_counts)``.
    """
    _check_aligned(gt, pred)
    g_all, p_all = gt.unique_ids(), pred.unique_ids()
    potential = np.zeros((len(g_all), len(p_all)))
    g_count = np.zeros(len(g_all))
    p_count = np.zeros(len(p_all))
    for (g_ids, g_boxes), (p_ids, p_boxes) in zip(gt.frames, pred.frames):
        gi = np.searchsorted(g_all, g_ids)
        pi = np.searchsorted(p_all, p_ids)
        g_count[gi] += 1
        p_count[pi] += 1
        if len(gi) == 0 or len(pi) == 0:
            continue
        sim = iou_matrix(g_boxes, p_boxes)
        denom = sim.sum(axis=0)[None, :] + sim.sum(axis=1)[:, None] - sim
        soft = np.where(denom > EPS, sim / np.where(denom > EPS, denom, 1.0), 0.0)
        potential[np.ix_(gi, pi)] += soft
    score = potential / np.maximum(g_count[:, None] + p_count[None, :] - potential, EPS)
    return g_all, p_all, score, g_count, p_count


def hota_frame_match(sim: np.ndarray, assoc: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame matching at threshold ``alpha``.

    Lexicographic objective: most matched pairs, then largest summed IoU, with
    association score as an ``ASSOC_TIEBREAK``-weighted tie-break.
    """
    allowed = sim >= alpha - EPS
    big = float(min(sim.shape) + 2) if sim.size else 0.0
    score = big + sim + ASSOC_TIEBREAK * assoc
    return _maximize(score, allowed)


def hota(gt: FrameData, pred: FrameData, alphas: Sequence[float] = HOTA_ALPHAS) -> HotaResult:
    alphas = np.asarray(alphas, dtype=float)
    k = len(alphas)
    n_gt, n_pred = gt.num_dets, pred.num_dets
    if n_gt == 0 or n_pred == 0:
        _check_aligned(gt, pred)
        v = 1.0 if n_gt == n_pred else 0.0
        ones = np.full(k, v)
        return HotaResult(v, v, v, alphas, ones, ones.copy(), ones.copy())

    g_all, p_all, assoc, g_count, p_count = association_scores(gt, pred)
    tp = np.zeros(k)
    matches = np.zeros((k, len(g_all), len(p_all)))
    for (g_ids, g_boxes), (p_ids, p_boxes) in zip(gt.frames, pred.frames):
        if len(g_ids) == 0 or len(p_ids) == 0:
            continue
        gi = np.searchsorted(g_all, g_ids)
        pi = np.searchsorted(p_all, p_ids)
        sim = iou_matrix(g_boxes, p_boxes)
        a_sub = assoc[np.ix_(gi, pi)]
        for n, alpha in enumerate(alphas):
            rows, cols = hota_frame_match(sim, a_sub, alpha)
            tp[n] += len(rows)
            matches[n, gi[rows], pi[cols]] += 1

    fn = n_gt - tp
    fp = n_pred - tp
    deta = tp / (tp + fn + fp)
    assa = np.zeros(k)
    denom = g_count[:, None] + p_count[None, :]
    for n in range(k):
        m = matches[n]
        pair_acc = m / np.maximum(denom - m, 1.0)
        assa[n] = (m * pair_acc).sum() / max(tp[n], 1.0)
    hota_a = np.sqrt(deta * assa)
    return HotaResult(float(hota_a.mean()), float(deta.mean()), float(assa.mean()), alphas, hota_a, deta, assa)


@dataclass(frozen=True)
class MetricsReport:
    name: str
    hota: float
    mota: float
    idf1: float
    dets: int
    gt_dets: int
    ids: int
    gt_ids: int
    idsw: int
    deta: float = 0.0
    assa: float = 0.0
    fp: int = 0
    fn: int = 0

    def row(self) -> dict[str, float | int]:
        return dict(zip(REPORT_COLUMNS, (self.hota, self.mota, self.idf1, self.dets, self.gt_dets,
                                         self.ids, self.gt_ids, self.idsw)))


def evaluate(name: str, gt: FrameData, pred: FrameData, iou_threshold: float = 0.5) -> MetricsReport:
    c = clear_mota(gt, pred, iou_threshold)
    i = idf1(gt, pred, iou_threshold)
    h = hota(gt, pred)
    return MetricsReport(
        name=name,
        hota=h.hota,
        mota=c.mota,
        idf1=i.idf1,
        dets=pred.num_dets,
        gt_dets=gt.num_dets,
        ids=len(pred.unique_ids()),
        gt_ids=len(gt.unique_ids()),
        idsw=c.idsw,
        deta=h.deta,
        assa=h.assa,
        fp=c.fp,
        fn=c.fn,
    )


def pool(sides: Sequence[FrameData]) -> FrameData:
    """Concatenate sequences in time, shifting ids so sequences never share one."""
    frames = []
    offset = 0
    for fd in sides:
        ids = fd.unique_ids()
        for f_ids, boxes in fd.frames:
            frames.append((f_ids + offset, boxes))
        if len(ids):
            offset += int(ids.max()) + 1
    return FrameData(frames)


def _sequence_name(gt_path: Path) -> str:
    if gt_path.name == "gt.txt" and gt_path.parent.name == "gt":
        return gt_path.parent.parent.name
    return gt_path.stem


def load_pair(gt_path: str | Path, results_path: str | Path, name: str | None = None) -> tuple[str, FrameData, FrameData]:
    gt_path, results_path = Path(gt_path), Path(results_path)
    name = name or _sequence_name(gt_path)
    records = parse_gt_file(gt_path)
    dets = parse_results_file(results_path)
    info = gt_path.parent.parent / "seqinfo.ini"
    if info.is_file():
        length = read_seqinfo(info).frame_count
    else:
        length = max([r.frame for r in records], default=0)
    last_gt = max((r.frame for r in records), default=0)
    last_pred = max((d.frame for d in dets), default=0)
    if last_gt > length or last_pred > length:
        raise ValueError(
            f"{name}: sequence length mismatch (length {length}, gt up to frame {last_gt}, "
            f"results up to frame {last_pred})"
        )
    try:
        pred = FrameData.from_detections(dets, length)
    except ValueError as exc:
        raise ValueError(f"{name}: {exc} in results") from None
    return name, FrameData.from_records(records, length), pred


def evaluate_sequences(pairs: Sequence[tuple], iou_threshold: float = 0.5) -> tuple[list[MetricsReport], MetricsReport]:
    """Evaluate ``(gt_path, results_path[, name])`` pairs; returns per-sequence and pooled reports."""
    loaded = [load_pair(*p) for p in pairs]
    reports = []
    for name, gt, pred in loaded:
        try:
            reports.append(evaluate(name, gt, pred, iou_threshold))
        except MetricError as exc:
            raise MetricError(f"{name}: {exc}") from None
    combined = evaluate("COMBINED", pool([g for _, g, _ in loaded]), pool([p for _, _, p in loaded]), iou_threshold)
    return reports, combined


def _columns(metrics: Sequence[str] | None) -> list[str]:
    chosen = {SCORE_COLUMNS[m] for m in (metrics or SCORE_COLUMNS)}
    return [c for c in REPORT_COLUMNS if c not in SCORE_COLUMNS.values() or c in chosen]


def format_reports(reports: Sequence[MetricsReport], combined: MetricsReport | None = None, *,
                   fmt: str = "table", metrics: Sequence[str] | None = None) -> str:
    cols = _columns(metrics)
    rows = list(reports) + ([combined] if combined is not None else [])
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Sequence", *cols])
        for r in rows:
            values = r.row()
            w.writerow([r.name, *(repr(float(values[c])) if c in SCORE_COLUMNS.values() else values[c] for c in cols)])
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")

    def cell(c, v):
        return f"{v:.2f}" if c in SCORE_COLUMNS.values() else str(v)

    table = [["Sequence", *cols]] + [[r.name, *(cell(c, r.row()[c]) for c in cols)] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for n, row in enumerate(table):
        lines.append("  ".join(v.ljust(widths[0]) if i == 0 else v.rjust(widths[i]) for i, v in enumerate(row)))
        if n == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"
