"""Sequence generation: simulate, project, annotate, and optionally render."""

from __future__ import annotations

import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .annotations import (
    SMALL_FISH_CLASS,
    AnnotationRecord,
    SequenceMeta,
    TrackLedger,
    assign_ids,
    atomic_write,
    frame_path,
    gt_path,
    round_box,
    seqinfo_path,
    write_gt_file,
    write_seqinfo,
)
from .boids import SchoolState, simulate
from .camera import MIN_ANNOTATED_AREA, BodyExtent, CameraIntrinsics, project_school
from .core import Bbox, EnvironmentVariant, SequenceConfig, SequenceParams, sample_sequence_params

log = logging.getLogger(__name__)


def sequence_name(variant: EnvironmentVariant, index: int) -> str:
    letters = variant.letters
    return f"Synth-{letters}-{index + 1:03d}" if letters else f"Synth-{index + 1:03d}"


def annotate(states: list[SchoolState], cam: CameraIntrinsics, extent: BodyExtent = BodyExtent()) -> list[AnnotationRecord]:
    ledger = TrackLedger()
    records = []
    for t, school in enumerate(states, start=1):
        if len(school):
            boxes = project_school(school.positions, school.headings, school.scales, extent, cam)
            area = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
            visible = ~np.isnan(boxes[:, 0]) & (area >= MIN_ANNOTATED_AREA)
        else:
            boxes, visible = np.zeros((0, 4)), np.zeros(0, dtype=bool)
        ledger, mapping = assign_ids(ledger, t, (int(i) for i in school.ids[visible]))
        for n in np.nonzero(visible)[0]:
            x0, y0, x1, y1 = boxes[n]
            left, top, w, h = round_box(Bbox(x0, y0, x1 - x0, y1 - y0))
            records.append(AnnotationRecord(t, mapping[int(school.ids[n])], left, top, w, h, 1, SMALL_FISH_CLASS, 1))
    records.sort(key=lambda r: (r.frame, r.id))
    return records


@dataclass(frozen=True)
class GeneratedSequence:
    name: str
    params: SequenceParams
    states: list[SchoolState]
    records: list[AnnotationRecord]


def build_sequence(config: SequenceConfig, index: int) -> GeneratedSequence:
    params = sample_sequence_params(config, index)
    states = simulate(params, config)
    records = annotate(states, CameraIntrinsics.from_config(config))
    return GeneratedSequence(sequence_name(config.variant, index), params, states, records)


def _summary(seq: GeneratedSequence, config: SequenceConfig) -> dict:
    p = seq.params
    w = p.boid_weights
    env = p.environment
    return {
        "name": seq.name,
        "sequence_index": p.sequence_index,
        "seed": p.seed,
        "variant": str(config.variant),
        "fish_count": p.fish_count,
        "boid_weights": {"S": w.S, "K": w.K, "M": w.M, "L": w.L},
        "turbidity_density": env.turbidity.density,
        "fog_color": list(env.turbidity.fog_color),
        "background": env.background.kind,
        "distractor_count": env.distractor_count,
        "annotation_ids": len({r.id for r in seq.records}),
        "gt_dets": len(seq.records),
    }


def write_sequence(seq: GeneratedSequence, config: SequenceConfig, out_root: str | Path, *,
                   render: bool = False, overwrite: bool = False) -> Path:
    seq_dir = Path(out_root) / seq.name
    if seq_dir.exists():
        if not overwrite:
            raise FileExistsError(f"{seq_dir} exists (use --overwrite)")
        shutil.rmtree(seq_dir)
    (seq_dir / "gt").mkdir(parents=True)
    write_gt_file(seq.records, gt_path(seq_dir))
    write_seqinfo(
        SequenceMeta(seq.name, config.frame_count, config.fps, config.image_width, config.image_height),
        seqinfo_path(seq_dir),
    )
    atomic_write(seq_dir / "synth.json", (json.dumps(_summary(seq, config), indent=2, sort_keys=True) + "\n").encode())
    if render:
        render_sequence(seq, config, seq_dir)
    return seq_dir


def render_sequence(seq: GeneratedSequence, config: SequenceConfig, seq_dir: str | Path) -> None:
    from .render import render_frame, write_image

    cam = CameraIntrinsics.from_config(config)
    env = seq.params.environment
    appearance = {i: (pose.albedo, pose.glossiness) for i, pose in enumerate(seq.params.fish_initial_poses, start=1)}
    (Path(seq_dir) / "img1").mkdir(parents=True, exist_ok=True)
    for t, school in enumerate(seq.states):
        fb = render_frame(school, env, cam, t, appearance=appearance)
        write_image(fb, frame_path(seq_dir, t + 1))


def _generate_one(args) -> str:
    config, index, out_root, render, overwrite = args
    seq = build_sequence(config, index)
    write_sequence(seq, config, out_root, render=render, overwrite=overwrite)
    log.info("wrote %s (%d fish, %d boxes)", seq.name, seq.params.fish_count, len(seq.records))
    return seq.name


def generate_dataset(config: SequenceConfig, count: int, out_root: str | Path, *, render: bool = False,
                     overwrite: bool = False, jobs: int = 1, variant: EnvironmentVariant | None = None) -> list[str]:
    if variant is not None:
        config = replace(config, variant=variant)
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    if not overwrite:
        clashes = [n for n in (sequence_name(config.variant, i) for i in range(count)) if (out_root / n).exists()]
        if clashes:
            raise FileExistsError(f"{out_root / clashes[0]} exists (use --overwrite)")
    tasks = [(config, i, out_root, render, overwrite) for i in range(count)]
    if jobs <= 1:
        return [_generate_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_generate_one, tasks))
