import numpy as np
import pytest

from fla import FlaModel, QueryError, QueryPredicate, build_segments, evaluate_query


def segments_fixture():
    # track a: size 0 for 100 frames then size 1 for 10
    # track b: size 1 throughout (500 frames)
    # track c: size 0 then size 1 then size 0
    labels = {
        "a": np.array([[0]] * 100 + [[1]] * 10),
        "b": np.array([[1]] * 500),
        "c": np.array([[0]] * 30 + [[1]] * 30 + [[0]] * 30),
    }
    return build_segments(list(labels), list(labels.values()), feature_names=("size",))


def test_true_matches_everything():
    segs = segments_fixture()
    matches = evaluate_query(segs, "true", frame_rate=15)
    assert [m.track_id for m in matches] == ["a", "b", "c"]


def test_false_matches_nothing():
    assert evaluate_query(segments_fixture(), "false") == []


def test_class_equality():
    matches = evaluate_query(segments_fixture(), "size=1")
    assert {m.track_id for m in matches} == {"a", "b", "c"}
    matches = evaluate_query(segments_fixture(), "not (size = 1)")
    assert {m.track_id for m in matches} == {"a", "c"}


def test_duration_bounds_seconds_and_frames():
    segs = segments_fixture()
    # 100 frames at 15 fps = 6.67 s
    matches = evaluate_query(segs, "size=0 and duration>=6s", frame_rate=15)
    assert {m.track_id for m in matches} == {"a"}
    matches = evaluate_query(segs, "size=0 and duration>=100f", frame_rate=15)
    assert {m.track_id for m in matches} == {"a"}
    matches = evaluate_query(segs, "duration<=0.7s", frame_rate=15)
    assert {m.track_id for m in matches} == {"a"}  # the 10-frame tail


def test_duration_longer_than_any_track():
    assert evaluate_query(segments_fixture(), "duration>=1000s", frame_rate=15) == []


def test_then_sequencing():
    segs = segments_fixture()
    matches = evaluate_query(segs, "size=0 then size=1", frame_rate=15)
    assert {m.track_id for m in matches} == {"a", "c"}
    matches = evaluate_query(segs, "size=1 then size=0", frame_rate=15)
    assert {m.track_id for m in matches} == {"c"}
    matches = evaluate_query(segs, "size=0 then size=1 then size=0", frame_rate=15)
    assert {m.track_id for m in matches} == {"c"}
    for m in matches:
        starts = [w.start for w in m.witnesses]
        assert starts == sorted(starts)


def test_witnesses_report_matching_segments():
    matches = evaluate_query(segments_fixture(), "size=0")
    by_id = {m.track_id: m for m in matches}
    assert len(by_id["c"].witnesses) == 2


def test_or_and_not_precedence():
    segs = segments_fixture()
    m1 = evaluate_query(segs, "size=0 and duration>=6s or size=1 and duration>=30s")
    assert {m.track_id for m in m1} == {"a", "b"}


def test_parse_error_reports_position():
    with pytest.raises(QueryError) as err:
        QueryPredicate.parse("size = ")
    assert err.value.position is not None
    with pytest.raises(QueryError):
        QueryPredicate.parse("size ~ 1")
    with pytest.raises(QueryError):
        QueryPredicate.parse("(size=1")
    with pytest.raises(QueryError):
        QueryPredicate.parse("size=1 extra")
    with pytest.raises(QueryError):
        QueryPredicate.parse("duration >= fast")


def test_unknown_feature_rejected():
    with pytest.raises(QueryError):
        evaluate_query(segments_fixture(), "speed=1")


def test_class_labels_resolve_with_model():
    cond = np.array([[0.7, 0.3], [0.3, 0.7]])
    model = FlaModel((2,), [cond], {(0, 0): np.diag([0.5, 0.5])},
                     feature_names=("size",),
                     class_labels={"size": {0: "pedestrian", 1: "vehicle"}})
    matches = evaluate_query(segments_fixture(), "size=vehicle", model=model)
    assert {m.track_id for m in matches} == {"a", "b", "c"}
    with pytest.raises(Exception):
        evaluate_query(segments_fixture(), "size=bicycle", model=model)


def test_class_id_range_checked_with_model():
    cond = np.array([[0.7, 0.3], [0.3, 0.7]])
    model = FlaModel((2,), [cond], {(0, 0): np.diag([0.5, 0.5])},
                     feature_names=("size",))
    with pytest.raises(Exception):
        evaluate_query(segments_fixture(), "size=9", model=model)


def test_label_without_model_rejected():
    with pytest.raises(QueryError):
        evaluate_query(segments_fixture(), "size=vehicle")


def test_results_independent_of_track_order():
    labels = {
        "z": np.array([[0]] * 10),
        "a": np.array([[0]] * 10),
        "m": np.array([[1]] * 10),
    }
    fwd = build_segments(list(labels), list(labels.values()), feature_names=("size",))
    rev = build_segments(list(reversed(list(labels))),
                         list(reversed(list(labels.values()))), feature_names=("size",))
    m1 = evaluate_query(fwd, "size=0")
    m2 = evaluate_query(rev, "size=0")
    assert [m.track_id for m in m1] == [m.track_id for m in m2] == ["a", "z"]
