import random

import pytest
from hypothesis import given, settings, strategies as st

from synthmot.annotations import (
    AnnotationFormatError,
    AnnotationRecord,
    Detection,
    SequenceMeta,
    TrackLedger,
    assign_ids,
    format_gt_line,
    parse_gt_file,
    parse_results_file,
    read_seqinfo,
    round_box,
    round_half_up,
    write_gt_file,
    write_results_file,
    write_seqinfo,
)
from synthmot.core import Bbox, SequenceConfig
from synthmot.pipeline import build_sequence


def test_gt_line_layout(tmp_path):
    r = AnnotationRecord(frame=1, id=3, left=10, top=20, width=30, height=40, cls=5)
    assert format_gt_line(r) == "1,3,10,20,30,40,1,5,1"
    p = tmp_path / "gt.txt"
    write_gt_file([r], p)
    assert p.read_bytes() == b"1,3,10,20,30,40,1,5,1\n"


def test_rows_sorted_by_frame_then_id(tmp_path):
    rows = [AnnotationRecord(2, 1, 0, 0, 5, 5), AnnotationRecord(1, 9, 0, 0, 5, 5), AnnotationRecord(1, 2, 0, 0, 5, 5)]
    p = tmp_path / "gt.txt"
    write_gt_file(rows, p)
    assert [l.split(",")[:2] for l in p.read_text().splitlines()] == [["1", "2"], ["1", "9"], ["2", "1"]]


@pytest.mark.parametrize("bad", [
    AnnotationRecord(1, 1, 0, 0, 5, 5, cls=7),
    AnnotationRecord(1, 1, 0, 0, 5, 5, cls=0),
    AnnotationRecord(1, 1, 0, 0, 0, 5),
    AnnotationRecord(1, 1, 0, 0, 5, -2),
])
def test_invalid_records_rejected(tmp_path, bad):
    with pytest.raises(AnnotationFormatError):
        write_gt_file([bad], tmp_path / "gt.txt")


def _random_records(rng):
    out, used = [], set()
    for _ in range(rng.randint(0, 40)):
        key = (rng.randint(1, 150), rng.randint(1, 60))
        if key in used:
            continue
        used.add(key)
        out.append(AnnotationRecord(key[0], key[1], rng.randint(-50, 1900), rng.randint(-50, 1060),
                                    rng.randint(1, 300), rng.randint(1, 300), 1, rng.randint(1, 6), 1))
    return sorted(out, key=lambda r: (r.frame, r.id))


def test_round_trip_many_lists(tmp_path):
    rng = random.Random(0)
    p = tmp_path / "gt.txt"
    for _ in range(1000):
        recs = _random_records(rng)
        write_gt_file(recs, p)
        assert parse_gt_file(p) == recs


def test_parse_tolerances(tmp_path):
    p = tmp_path / "gt.txt"
    want = [AnnotationRecord(1, 3, 10, 20, 30, 40, 1, 5, 1)]
    p.write_text("1,3,10,20,30,40,1,5,1\n")
    assert parse_gt_file(p) == want
    p.write_text("1,3,10.0,20.0,30.0,40.0,1,5,1  \n\n")
    assert parse_gt_file(p) == want
    p.write_text("1,3,9.6,20.4,30,40,1,5,1\n")
    assert parse_gt_file(p) == want


@pytest.mark.parametrize("text, message", [
    ("1,3,10,20,30,40,1,5\n", "expected 9 fields at line 1"),
    ("1,3,10,20,30,40,1,5,1\n1,4,10,20,30,40,1,5,1,0\n", "expected 9 fields at line 2"),
    ("1,3,ten,20,30,40,1,5,1\n", "line 1"),
    ("1,3,10,20,30,40,1,9,1\n", "line 1"),
])
def test_parse_errors_name_the_line(tmp_path, text, message):
    p = tmp_path / "gt.txt"
    p.write_text(text)
    with pytest.raises(AnnotationFormatError, match=message):
        parse_gt_file(p)


def test_results_parsing(tmp_path):
    p = tmp_path / "r.txt"
    p.write_text("1,3,10,20,30,40,1,5,1\n1,4,10,20,30,40,0.9,-1,-1,-1\n2,5,1.5,2.5,3,4\n")
    res = parse_results_file(p)
    assert res[0] == Detection(1, 3, Bbox(10, 20, 30, 40), 1.0)
    assert res[1].confidence == 0.9
    assert res[2].box == Bbox(1.5, 2.5, 3, 4) and res[2].confidence == 1.0
    p.write_text("")
    assert parse_results_file(p) == []
    p.write_text("1,2,3,4,5\n")
    with pytest.raises(AnnotationFormatError, match="line 1"):
        parse_results_file(p)


def test_results_round_trip(tmp_path):
    dets = [Detection(1, 2, Bbox(10.25, 3.5, 20.0, 8.125), 1.0), Detection(3, 1, Bbox(0, 0, 4, 4), 0.5)]
    p = tmp_path / "r.txt"
    write_results_file(dets, p)
    assert sorted(parse_results_file(p)) == sorted(dets)


def test_rounding_is_half_up_on_edges():
    assert round_half_up(2.5) == 3 and round_half_up(-0.5) == 0 and round_half_up(1.49) == 1
    # edges 10.5 and 20.4 become 11 and 20: width follows the rounded edges
    assert round_box(Bbox(10.5, 0.0, 9.9, 3.0)) == (11, 0, 9, 3)
    assert round_box(Bbox(0.2, 0.2, 0.2, 0.2))[2:] == (1, 1)


# --- id policy -----------------------------------------------------------------

def _run_ledger(visible_per_frame):
    ledger, out = TrackLedger(), []
    for t, vis in enumerate(visible_per_frame, start=1):
        ledger, m = assign_ids(ledger, t, vis)
        out.append(m)
    return out


def test_id_kept_while_visible():
    maps = _run_ledger([{7}] * 150)
    assert {m[7] for m in maps} == {1}


def test_reentry_gets_new_id():
    frames = [{1}] * 10 + [set()] * 10 + [{1}] * 10
    maps = _run_ledger(frames)
    ids = [m[1] for m in maps if 1 in m]
    assert ids[:10] == [1] * 10 and ids[10:] == [2] * 10


def test_first_appearance_order():
    frames = [{1}] * 4 + [{1, 2}] * 3
    maps = _run_ledger(frames)
    assert maps[0] == {1: 1} and maps[4] == {1: 1, 2: 2}


def test_out_of_order_frames_rejected():
    ledger, _ = assign_ids(TrackLedger(), 3, {1})
    with pytest.raises(ValueError):
        assign_ids(ledger, 3, {1})
    with pytest.raises(ValueError):
        assign_ids(ledger, 2, {1})
    # skipping a frame counts as an absence
    ledger2, m = assign_ids(ledger, 5, {1})
    assert m[1] == 2


@given(st.lists(st.sets(st.integers(1, 6), max_size=6), min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_ids_never_reused_and_contiguous(frames):
    maps = _run_ledger(frames)
    frames_of = {}
    for t, m in enumerate(maps):
        assert sorted(m) == sorted(frames[t])
        for aid in m.values():
            frames_of.setdefault(aid, []).append(t)
    for aid, ts in frames_of.items():
        assert ts == list(range(ts[0], ts[-1] + 1))
    firsts = sorted(frames_of, key=lambda a: (frames_of[a][0], a))
    assert firsts == sorted(frames_of)


def test_generated_sequence_obeys_id_policy():
    seq = build_sequence(SequenceConfig(frame_count=80, fish_count_range=(20, 20), speed_range=(0.3, 0.6)), 5)
    frames_of = {}
    for r in seq.records:
        frames_of.setdefault(r.id, []).append(r.frame)
        assert r.cls == 5 and r.confidence == 1 and r.visibility == 1
    for ts in frames_of.values():
        assert ts == list(range(ts[0], ts[-1] + 1))


def test_byte_determinism(tmp_path):
    seq = build_sequence(SequenceConfig(frame_count=30), 0)
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    write_gt_file(seq.records, a)
    write_gt_file(list(reversed(seq.records)), b)
    assert a.read_bytes() == b.read_bytes()


def test_seqinfo_round_trip(tmp_path):
    meta = SequenceMeta("Synth-BT-004", 150, 15.0, 1920, 1080)
    p = tmp_path / "seqinfo.ini"
    write_seqinfo(meta, p)
    text = p.read_text()
    assert text.startswith("[Sequence]\n")
    for key in ("name=", "imDir=img1", "frameRate=15", "seqLength=150", "imWidth=1920", "imHeight=1080"):
        assert key in text
    assert read_seqinfo(p) == meta
