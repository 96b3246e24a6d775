import json

import pytest

from scopedepth import ManifestError, load_bundled_manifest, parse_manifest


def _line(segment="Cecum", texture="1", video="a", frames=276, subset="Train", half=None):
    return json.dumps(
        {"segment": segment, "texture": texture, "video": video, "frames": frames, "set": subset, "half": half}
    )


def test_single_record():
    manifest = parse_manifest(_line())
    entry = manifest.entries[0]
    assert (entry.segment, entry.texture, entry.video) == ("Cecum", "1", "a")
    assert entry.frames == 276 and entry.subset == "Train" and entry.half is None
    assert entry.sequence_id == "cecum_t1a"


def test_half_designator():
    manifest = parse_manifest(_line("Descending", "4", "a", 74, "Test", "P2"))
    entry = manifest.entries[0]
    assert entry.half == "P2"
    assert entry.sequence_id == "descending_t4a_p2"


def test_duplicate_tuple_rejected():
    text = _line() + "\n" + _line()
    with pytest.raises(ManifestError, match="duplicate"):
        parse_manifest(text)


def test_same_video_different_half_not_duplicate():
    text = _line(half="P1") + "\n" + _line(half="P2", subset="Test")
    assert len(parse_manifest(text).entries) == 2


def test_unknown_set_label_rejected():
    with pytest.raises(ManifestError, match="set label"):
        parse_manifest(_line(subset="Val"))


def test_nonpositive_frames_rejected():
    with pytest.raises(ManifestError, match="frame count"):
        parse_manifest(_line(frames=0))


def test_bad_keys_rejected():
    rec = json.loads(_line())
    rec["extra"] = 1
    with pytest.raises(ManifestError, match="bad keys"):
        parse_manifest(json.dumps(rec))


def test_split1_counts():
    manifest = load_bundled_manifest("c3vd_split1")
    assert len(manifest.train) == 13
    assert len(manifest.test) == 9


def test_split2_counts():
    manifest = load_bundled_manifest("split2")
    assert len(manifest.train) == 15
    assert len(manifest.test) == 8


def test_split1_known_entries():
    by_id = load_bundled_manifest("split1").by_sequence_id()
    assert by_id["cecum_t1a"].frames == 276 and by_id["cecum_t1a"].subset == "Train"
    assert by_id["sigmoid_t3b"].frames == 536 and by_id["sigmoid_t3b"].subset == "Train"
    assert by_id["transcending_t1a"].frames == 61 and by_id["transcending_t1a"].subset == "Test"
    assert by_id["descending_t4a"].frames == 148


def test_split2_halved_video():
    by_id = load_bundled_manifest("split2").by_sequence_id()
    p1, p2 = by_id["descending_t4a_p1"], by_id["descending_t4a_p2"]
    assert p1.frames == p2.frames == 74
    assert p1.subset == "Train" and p2.subset == "Test"


def test_split_totals_match():
    # Both splits re-bucket the same 22 sequences (split 2 halves one of
    # them into 74 + 74), so the frame totals agree.
    split1 = load_bundled_manifest("split1")
    split2 = load_bundled_manifest("split2")
    assert sum(e.frames for e in split1.entries) == 10088
    assert sum(e.frames for e in split2.entries) == 10088
