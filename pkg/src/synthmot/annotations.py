"""Track-identity policy and MOTChallenge-style ground truth / results files."""

from __future__ import annotations

import configparser
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .core import Bbox

GT_FIELDS = 9
SMALL_FISH_CLASS = 5
CLASS_RANGE = range(1, 7)


class AnnotationFormatError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AnnotationRecord:
    frame: int
    id: int
    left: int
    top: int
    width: int
    height: int
    confidence: float = 1
    cls: int = SMALL_FISH_CLASS
    visibility: float = 1

    def validate(self) -> None:
        if self.cls not in CLASS_RANGE:
            raise AnnotationFormatError(f"class {self.cls} outside 1-6")
        if self.width <= 0 or self.height <= 0:
            raise AnnotationFormatError(f"non-positive box extent {self.width}x{self.height}")
        if self.frame < 1 or self.id < 1:
            raise AnnotationFormatError("frame and id must be >= 1")

    @property
    def box(self) -> Bbox:
        return Bbox(self.left, self.top, self.width, self.height)


class Detection(NamedTuple):
    frame: int
    id: int
    box: Bbox
    confidence: float


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def round_box(box: Bbox) -> tuple[int, int, int, int]:
    """Integer box from rounded edges, so ``left + width`` never passes the rounded right edge."""
    left, top = round_half_up(box.left), round_half_up(box.top)
    right, bottom = round_half_up(box.right), round_half_up(box.bottom)
    return left, top, max(1, right - left), max(1, bottom - top)


@dataclass
class TrackLedger:
    """Maps simulation fish ids to annotation ids; ids are never reused."""

    next_id: int = 1
    active: dict[int, int] = field(default_factory=dict)
    last_frame: int = 0


def assign_ids(ledger: TrackLedger, frame: int, visible_fish_ids: Iterable[int]) -> tuple[TrackLedger, dict[int, int]]:
    """Annotation ids for the fish visible at ``frame``.

    Fish seen in the previous frame keep their id; anything else, including a
    fish re-entering the view, gets the next fresh id (ascending fish id order
    among newcomers).
    """
    if frame <= ledger.last_frame:
        raise ValueError(f"frames must be processed in order: got {frame} after {ledger.last_frame}")
    contiguous = frame == ledger.last_frame + 1
    next_id = ledger.next_id
    mapping: dict[int, int] = {}
    for fid in sorted(set(visible_fish_ids)):
        if contiguous and fid in ledger.active:
            mapping[fid] = ledger.active[fid]
        else:
            mapping[fid] = next_id
            next_id += 1
    return TrackLedger(next_id, dict(mapping), frame), mapping


def _fmt(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def format_gt_line(r: AnnotationRecord) -> str:
    return ",".join(
        _fmt(v) for v in (r.frame, r.id, r.left, r.top, r.width, r.height, r.confidence, r.cls, r.visibility)
    )


def atomic_write(path: str | Path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_gt_file(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    rows = sorted(records, key=lambda r: (r.frame, r.id))
    for r in rows:
        r.validate()
    text = "".join(format_gt_line(r) + "\n" for r in rows)
    atomic_write(path, text.encode("ascii"))


def _split_lines(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, [p.strip() for p in line.split(",")]


def _num(text: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise AnnotationFormatError(f"non-numeric field {text!r} at line {lineno}") from None
    if not math.isfinite(value):
        raise AnnotationFormatError(f"non-finite field {text!r} at line {lineno}")
    return value


def _int_or_float(v: float) -> float:
    return int(v) if v.is_integer() else v


def parse_gt_file(path: str | Path) -> list[AnnotationRecord]:
    out = []
    for lineno, parts in _split_lines(path):
        if len(parts) != GT_FIELDS:
            raise AnnotationFormatError(f"expected {GT_FIELDS} fields at line {lineno}, got {len(parts)}")
        v = [_num(p, lineno) for p in parts]
        rec = AnnotationRecord(
            frame=round_half_up(v[0]),
            id=round_half_up(v[1]),
            left=round_half_up(v[2]),
            top=round_half_up(v[3]),
            width=round_half_up(v[4]),
            height=round_half_up(v[5]),
            confidence=_int_or_float(v[6]),
            cls=round_half_up(v[7]),
            visibility=_int_or_float(v[8]),
        )
        try:
            rec.validate()
        except AnnotationFormatError as exc:
            raise AnnotationFormatError(f"{exc} at line {lineno}") from None
        out.append(rec)
    return out


def parse_results_file(path: str | Path) -> list[Detection]:
    out = []
    for lineno, parts in _split_lines(path):
        if not 6 <= len(parts) <= 10:
            raise AnnotationFormatError(f"expected 6-10 fields at line {lineno}, got {len(parts)}")
        v = [_num(p, lineno) for p in parts]
        if v[4] <= 0 or v[5] <= 0:
            raise AnnotationFormatError(f"non-positive box extent at line {lineno}")
        frame, tid = round_half_up(v[0]), round_half_up(v[1])
        if frame < 1:
            raise AnnotationFormatError(f"frame must be >= 1 at line {lineno}")
        conf = v[6] if len(v) > 6 else 1.0
        out.append(Detection(frame, tid, Bbox(v[2], v[3], v[4], v[5]), conf))
    return out


def _fmt_coord(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def write_results_file(detections: Iterable[Detection], path: str | Path) -> None:
    rows = sorted(detections, key=lambda d: (d.frame, d.id))
    lines = []
    for d in rows:
        b = d.box
        coords = ",".join(_fmt_coord(x) for x in (b.left, b.top, b.width, b.height))
        lines.append(f"{d.frame},{d.id},{coords},{_fmt_coord(d.confidence)},-1,-1,-1\n")
    atomic_write(path, "".join(lines).encode("ascii"))


@dataclass(frozen=True)
class SequenceMeta:
    name: str
    frame_count: int
    fps: float
    image_width: int
    image_height: int
    im_dir: str = "img1"
    im_ext: str = ".png"


def write_seqinfo(meta: SequenceMeta, path: str | Path) -> None:
    keys = {
        "name": meta.name,
        "imDir": meta.im_dir,
        "frameRate": _fmt(meta.fps),
        "seqLength": meta.frame_count,
        "imWidth": meta.image_width,
        "imHeight": meta.image_height,
        "imExt": meta.im_ext,
    }
    lines = ["[Sequence]"] + [f"{k}={v}" for k, v in keys.items()]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_seqinfo(path: str | Path) -> SequenceMeta:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    try:
        s = cp["Sequence"]
        return SequenceMeta(
            name=s["name"],
            frame_count=int(s["seqLength"]),
            fps=float(s["frameRate"]),
            image_width=int(s["imWidth"]),
            image_height=int(s["imHeight"]),
            im_dir=s.get("imDir", "img1"),
            im_ext=s.get("imExt", ".png"),
        )
    except (KeyError, ValueError) as exc:
        raise AnnotationFormatError(f"{path}: malformed seqinfo ({exc})") from None


def gt_path(seq_dir: str | Path) -> Path:
    return Path(seq_dir) / "gt" / "gt.txt"


def seqinfo_path(seq_dir: str | Path) -> Path:
    return Path(seq_dir) / "seqinfo.ini"


def frame_path(seq_dir: str | Path, frame: int, ext: str = ".png") -> Path:
    return Path(seq_dir) / "img1" / f"{frame:06d}{ext}"
