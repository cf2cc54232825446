import random
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_instance, to_frame_data
from oracles import hota_alpha_joint_max, hota_alpha_oracle, idf1_bruteforce, mota_by_hand
from synthmot.annotations import AnnotationRecord, Detection, write_gt_file, write_results_file
from synthmot.core import Bbox
from synthmot.metrics import (
    HOTA_ALPHAS,
    REPORT_COLUMNS,
    MetricError,
    clear_mota,
    evaluate_sequences,
    format_reports,
    hota,
    idf1,
    iou,
    iou_matrix,
)


def two_tracks(n=10, swap_at=None):
    gt = [{1: (0, 0, 20, 20), 2: (100, 0, 20, 20)} for _ in range(n)]
    pred = []
    for t in range(n):
        if swap_at is not None and t + 1 >= swap_at:
            pred.append({1: gt[t][2], 2: gt[t][1]})
        else:
            pred.append(dict(gt[t]))
    return gt, pred


# --- IoU -----------------------------------------------------------------

def test_iou_examples():
    a = Bbox(0, 0, 2, 2)
    assert iou(a, a) == 1.0
    assert iou(a, Bbox(5, 5, 1, 1)) == 0.0
    assert iou(a, Bbox(1, 0, 2, 2)) == pytest.approx(1 / 3, abs=1e-15)


def test_iou_matrix_matches_scalar():
    rng = random.Random(3)
    a = [(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 30), rng.uniform(1, 30)) for _ in range(7)]
    b = [(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 30), rng.uniform(1, 30)) for _ in range(5)]
    m = iou_matrix(np.array(a), np.array(b))
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            assert m[i, j] == pytest.approx(iou(Bbox(*x), Bbox(*y)), abs=1e-12)


# --- MOTA ----------------------------------------------------------------

def test_mota_perfect():
    gt, _ = two_tracks()
    r = clear_mota(to_frame_data(gt), to_frame_data(gt))
    assert r.mota == 1.0 and r.idsw == 0


def test_mota_empty_predictions():
    gt, _ = two_tracks()
    r = clear_mota(to_frame_data(gt), to_frame_data([{} for _ in gt]))
    assert r.mota == 0.0
    assert r.fn == 20


def test_mota_false_positive_flood():
    gt = [{1: (0, 0, 10, 10)} for _ in range(10)]
    pred = [{1: (100, 100, 5, 5), 2: (200, 100, 5, 5), 3: (300, 100, 5, 5)} for _ in range(10)]
    r = clear_mota(to_frame_data(gt), to_frame_data(pred))
    assert (r.fn, r.fp, r.idsw) == (10, 30, 0)
    assert r.mota == -3.0


def test_mota_undefined_without_gt():
    with pytest.raises(MetricError):
        clear_mota(to_frame_data([{}, {}]), to_frame_data([{1: (0, 0, 1, 1)}, {}]))


def test_mota_counts_switch():
    gt, pred = two_tracks(swap_at=6)
    r = clear_mota(to_frame_data(gt), to_frame_data(pred))
    assert r.idsw == 2
    assert r.mota == pytest.approx(1 - 2 / 20)


def test_mota_persists_previous_match():
    # frame 2: pred 2 overlaps gt 1 better, but the running match with pred 1 is kept
    gt = [{1: (0, 0, 10, 10)}, {1: (0, 0, 10, 10)}]
    pred = [{1: (0, 0, 10, 10)}, {1: (2, 0, 10, 10), 2: (0, 0, 10, 10)}]
    r = clear_mota(to_frame_data(gt), to_frame_data(pred))
    assert r.idsw == 0 and r.fp == 1


def test_frame_count_mismatch_rejected():
    with pytest.raises(ValueError):
        clear_mota(to_frame_data([{1: (0, 0, 1, 1)}]), to_frame_data([{}, {}]))


@pytest.mark.parametrize("seed", range(40))
def test_mota_against_exhaustive_matching(seed):
    gt, pred = random_instance(random.Random(seed))
    if not any(gt):
        return
    expected, expected_sw = mota_by_hand(gt, pred)
    r = clear_mota(to_frame_data(gt), to_frame_data(pred))
    assert r.idsw == expected_sw
    assert r.mota == pytest.approx(expected, abs=1e-12)
    assert 1 - r.mota == pytest.approx((r.fn + r.fp + r.idsw) / r.gt_dets, abs=1e-15)


# --- IDF1 ----------------------------------------------------------------

def test_idf1_examples():
    gt, pred = two_tracks(swap_at=6)
    r = idf1(to_frame_data(gt), to_frame_data(pred))
    assert (r.idtp, r.idfp, r.idfn) == (10, 10, 10)
    assert r.idf1 == 0.5
    assert idf1(to_frame_data(gt), to_frame_data(gt)).idf1 == 1.0
    assert idf1(to_frame_data(gt), to_frame_data([{} for _ in gt])).idf1 == 0.0
    assert idf1(to_frame_data([{}, {}]), to_frame_data([{}, {}])).idf1 == 1.0


@pytest.mark.parametrize("seed", range(60))
def test_idf1_matches_enumeration_up_to_six_tracks(seed):
    gt, pred = random_instance(random.Random(1000 + seed), max_tracks=6, max_frames=5)
    expected, idtp = idf1_bruteforce(gt, pred)
    r = idf1(to_frame_data(gt), to_frame_data(pred))
    assert r.idtp == idtp
    assert r.idf1 == pytest.approx(expected, abs=1e-12)


# --- HOTA ----------------------------------------------------------------

def test_hota_perfect_and_disjoint():
    gt, _ = two_tracks()
    assert hota(to_frame_data(gt), to_frame_data(gt)).hota == pytest.approx(1.0, abs=1e-12)
    far = [{5: (500, 500, 10, 10)} for _ in gt]
    assert hota(to_frame_data(gt), to_frame_data(far)).hota == 0.0


def test_hota_empty_conventions():
    empty = to_frame_data([{}, {}])
    some = to_frame_data([{1: (0, 0, 5, 5)}, {}])
    assert hota(empty, empty).hota == 1.0
    assert hota(some, empty).hota == 0.0
    assert hota(empty, some).hota == 0.0


def test_hota_uses_nineteen_thresholds():
    assert len(HOTA_ALPHAS) == 19
    assert HOTA_ALPHAS[0] == pytest.approx(0.05) and HOTA_ALPHAS[-1] == pytest.approx(0.95)


CROSSING_GT = [
    {1: (0, 0, 20, 20), 2: (30, 2, 20, 20)},
    {1: (10, 0, 20, 20), 2: (20, 2, 20, 20)},
    {1: (20, 0, 20, 20), 2: (10, 2, 20, 20)},
    {1: (30, 0, 20, 20), 2: (0, 2, 20, 20)},
]
CROSSING_PRED = [
    {7: (1, 0, 20, 20), 9: (29, 3, 20, 20)},
    {7: (12, 1, 20, 20), 9: (19, 2, 20, 20)},
    {7: (19, 1, 20, 20), 9: (12, 1, 20, 20)},
    {7: (31, 0, 20, 20), 9: (1, 2, 20, 20)},
]


def test_hota_crossing_case_matches_joint_enumeration():
    r = hota(to_frame_data(CROSSING_GT), to_frame_data(CROSSING_PRED))
    for alpha, value in zip(r.alphas, r.hota_alpha):
        assert value == pytest.approx(hota_alpha_joint_max(CROSSING_GT, CROSSING_PRED, alpha), abs=1e-9)
    # the case is not degenerate: localization thresholds bite
    assert r.hota_alpha[0] == pytest.approx(1.0) and r.hota_alpha[-1] == 0.0


@pytest.mark.parametrize("seed", range(40))
def test_hota_alpha_matches_per_frame_enumeration(seed):
    gt, pred = random_instance(random.Random(2000 + seed))
    r = hota(to_frame_data(gt), to_frame_data(pred))
    for alpha, value in zip(r.alphas, r.hota_alpha):
        assert value == pytest.approx(hota_alpha_oracle(gt, pred, alpha), abs=1e-9)
    for d, a, h in zip(r.deta_alpha, r.assa_alpha, r.hota_alpha):
        assert h <= max(d, a) + 1e-12
    assert 0.0 <= r.hota <= 1.0


# --- shared properties ---------------------------------------------------

box_st = st.tuples(
    st.floats(0, 200), st.floats(0, 200), st.floats(1, 60), st.floats(1, 60)
)
frames_st = st.lists(st.dictionaries(st.integers(1, 6), box_st, max_size=4), min_size=1, max_size=5)


@given(frames_st)
@settings(max_examples=60, deadline=None)
def test_symmetric_perfection(frames):
    fd = to_frame_data(frames)
    assert idf1(fd, fd).idf1 == 1.0
    assert hota(fd, fd).hota == pytest.approx(1.0, abs=1e-12)
    if fd.num_dets:
        assert clear_mota(fd, fd).mota == 1.0


def _subset_instance(rng):
    """Predictions that copy a subset of GT boxes under a fixed id relabelling."""
    gt, _ = random_instance(rng)
    relabel = {g: 10 + k for k, g in enumerate(sorted({i for f in gt for i in f}))}
    pred = [{relabel[g]: b for g, b in f.items() if rng.random() < 0.8} for f in gt]
    return gt, pred


@pytest.mark.parametrize("seed", range(40))
def test_removing_true_positive_never_helps(seed):
    rng = random.Random(3000 + seed)
    gt, pred = _subset_instance(rng)
    cells = [(t, i) for t, f in enumerate(pred) for i in f]
    if not cells or not any(gt):
        return
    t, i = rng.choice(cells)
    fewer = [dict(f) for f in pred]
    del fewer[t][i]
    G, P, Q = to_frame_data(gt), to_frame_data(pred), to_frame_data(fewer)
    assert clear_mota(G, Q).mota <= clear_mota(G, P).mota
    assert idf1(G, Q).idf1 <= idf1(G, P).idf1
    assert hota(G, Q).hota <= hota(G, P).hota + 1e-12


def test_removing_match_at_a_switch_can_raise_mota():
    # outside the copied-subset setting, dropping the detection that caused two
    # switches trades one miss for two fewer switches
    box = (0, 0, 10, 10)
    gt = [{1: box} for _ in range(4)]
    pred = [{1: box}, {1: box}, {2: box}, {1: box}]
    fewer = [{1: box}, {1: box}, {}, {1: box}]
    G = to_frame_data(gt)
    assert clear_mota(G, to_frame_data(fewer)).mota > clear_mota(G, to_frame_data(pred)).mota


# --- sequence evaluation ---------------------------------------------------

def _write_sequence(root: Path, name: str, frames) -> Path:
    (root / name / "gt").mkdir(parents=True)
    recs = [AnnotationRecord(t + 1, i, *map(int, b)) for t, f in enumerate(frames) for i, b in f.items()]
    path = root / name / "gt" / "gt.txt"
    write_gt_file(recs, path)
    (root / name / "seqinfo.ini").write_text(
        f"[Sequence]\nname={name}\nimDir=img1\nframeRate=15\nseqLength={len(frames)}\nimWidth=640\nimHeight=480\n"
    )
    return path


def _write_results(path: Path, frames) -> Path:
    write_results_file([Detection(t + 1, i, Bbox(*b), 1.0) for t, f in enumerate(frames) for i, b in f.items()], path)
    return path


@pytest.fixture
def three_sequences(tmp_path):
    rng = random.Random(9)
    seqs = {}
    for k in range(3):
        frames = [{i: (10 * i + 40 * i, 50 + t, 20, 20) for i in range(1, 4) if rng.random() < 0.9} for t in range(8)]
        seqs[f"S{k}"] = frames
    pairs = []
    for name, frames in seqs.items():
        gtp = _write_sequence(tmp_path / "gt", name, frames)
        res = _write_results(tmp_path / f"{name}.txt", frames)
        pairs.append((gtp, res))
    return tmp_path, seqs, pairs


def test_evaluate_perfect_results(three_sequences):
    _, _, pairs = three_sequences
    reports, combined = evaluate_sequences(pairs)
    for r in reports + [combined]:
        assert (r.hota, r.mota, r.idf1, r.idsw) == (pytest.approx(1.0), 1.0, 1.0, 0)


def test_evaluate_isolates_empty_results(three_sequences):
    tmp, seqs, pairs = three_sequences
    empty = tmp / "empty.txt"
    empty.write_text("")
    pairs[1] = (pairs[1][0], empty)
    reports, _ = evaluate_sequences(pairs)
    assert reports[1].mota == 0.0
    assert reports[0].mota == 1.0 and reports[2].mota == 1.0


def test_evaluate_counts_match_file_scan(three_sequences):
    _, _, pairs = three_sequences
    reports, combined = evaluate_sequences(pairs)
    for (gtp, res), r in zip(pairs, reports):
        gt_lines = [l.split(",") for l in Path(gtp).read_text().splitlines() if l.strip()]
        res_lines = [l.split(",") for l in Path(res).read_text().splitlines() if l.strip()]
        assert r.gt_dets == len(gt_lines)
        assert r.dets == len(res_lines)
        assert r.gt_ids == len({l[1] for l in gt_lines})
        assert r.ids == len({l[1] for l in res_lines})
    assert combined.gt_dets == sum(r.gt_dets for r in reports)
    assert combined.gt_ids == sum(r.gt_ids for r in reports)


def test_evaluate_rejects_results_past_sequence_end(three_sequences):
    tmp, seqs, pairs = three_sequences
    bad = _write_results(tmp / "long.txt", seqs["S0"] + [{1: (0, 0, 5, 5)}])
    with pytest.raises(ValueError, match="S0"):
        evaluate_sequences([(pairs[0][0], bad)])


def test_pooled_metrics_are_recomputed_not_averaged(tmp_path):
    # one long perfect sequence and one short empty one: pooled MOTA weights by GT count
    long_frames = [{1: (0, 0, 10, 10)} for _ in range(9)]
    short_frames = [{1: (0, 0, 10, 10)}]
    a = _write_sequence(tmp_path / "gt", "A", long_frames)
    b = _write_sequence(tmp_path / "gt", "B", short_frames)
    ra = _write_results(tmp_path / "A.txt", long_frames)
    rb = tmp_path / "B.txt"
    rb.write_text("")
    reports, combined = evaluate_sequences([(a, ra), (b, rb)])
    assert combined.mota == pytest.approx(0.9)
    assert np.mean([r.mota for r in reports]) == pytest.approx(0.5)


def test_report_formats():
    from synthmot.metrics import MetricsReport

    r = MetricsReport("Synth-T-001", 0.08, -2.02, 0.06, 10, 20, 3, 4, 1)
    table = format_reports([r], fmt="table")
    header = table.splitlines()[0].split()
    assert header[0] == "Sequence"
    assert "-2.02" in table
    csv_text = format_reports([r], fmt="csv")
    assert csv_text.splitlines()[0] == "Sequence," + ",".join(REPORT_COLUMNS)
    assert csv_text.splitlines()[1].split(",")[2] == "-2.02"
    only = format_reports([r], fmt="csv", metrics=["mota"]).splitlines()[0]
    assert only == "Sequence,MOTA,Dets,GT dets,IDs,GT IDs,IDSW"
