import json
import os

import numpy as np
import pytest

from fla import ParseError, RunManifest, load_model, save_model
from fla.modelio import ModelBundle, bundle_from_dict, bundle_to_dict, dumps_canonical, fit_info_dict


def demo_bundle(pipeline, with_snapshot=False):
    from fla import WindowSpec, accumulate_symbol_sequences

    acc = None
    if with_snapshot:
        acc = accumulate_symbol_sequences(pipeline.seqs, pipeline.window)
    from fla.em import FitConfig

    return ModelBundle(
        pipeline.model,
        pipeline.window,
        pipeline.spec.frame_rate,
        fit_info_dict(FitConfig(seed=0), pipeline.trace),
        acc,
    )


def test_model_roundtrip(tmp_path, demo_clean):
    path = os.path.join(tmp_path, "model.json")
    bundle = demo_bundle(demo_clean)
    save_model(path, bundle)
    loaded = load_model(path)
    model = loaded.model
    assert model.class_counts == demo_clean.model.class_counts
    assert model.feature_names == demo_clean.model.feature_names
    for a, b in zip(model.conditionals, demo_clean.model.conditionals):
        assert np.array_equal(a, b)
    for pair in demo_clean.model.mixing_pairs():
        assert np.array_equal(model.mixing_table(*pair), demo_clean.model.mixing_table(*pair))
    assert loaded.model.quantizers == demo_clean.model.quantizers
    assert loaded.window == demo_clean.window
    assert loaded.frame_rate == 15
    assert loaded.accumulator is None


def test_serialization_is_byte_stable(demo_clean):
    bundle = demo_bundle(demo_clean)
    a = dumps_canonical(bundle_to_dict(bundle))
    b = dumps_canonical(bundle_to_dict(bundle))
    assert a == b
    again = bundle_from_dict(json.loads(a))
    assert dumps_canonical(bundle_to_dict(again)) == a


def test_snapshot_roundtrip(tmp_path, demo_clean):
    path = os.path.join(tmp_path, "model.json")
    bundle = demo_bundle(demo_clean, with_snapshot=True)
    save_model(path, bundle)
    loaded = load_model(path)
    assert loaded.accumulator is not None
    assert loaded.accumulator.window_count == bundle.accumulator.window_count
    assert loaded.accumulator.total_weight == bundle.accumulator.total_weight
    for key, table in bundle.accumulator.tables.items():
        assert np.array_equal(loaded.accumulator.tables[key], table)


def test_load_rejects_non_model(tmp_path):
    path = os.path.join(tmp_path, "bad.json")
    with open(path, "w") as f:
        json.dump({"format": "something-else"}, f)
    with pytest.raises(ParseError):
        load_model(path)
    with open(path, "w") as f:
        f.write("{not json")
    with pytest.raises(ParseError):
        load_model(path)


def test_class_labels_roundtrip(tmp_path, demo_clean):
    from fla import FlaModel

    model = demo_clean.model
    labeled = FlaModel(
        model.class_counts,
        model.conditionals,
        {pair: model.mixing_table(*pair) for pair in model.mixing_pairs()},
        feature_names=model.feature_names,
        quantizers=model.quantizers,
        class_labels={"speed": {0: "stopped", 1: "walking", 2: "driving"}},
    )
    path = os.path.join(tmp_path, "model.json")
    bundle = demo_bundle(demo_clean)
    save_model(path, ModelBundle(labeled, bundle.window, 15, bundle.fit_info))
    loaded = load_model(path)
    assert loaded.model.class_labels == {"speed": {0: "stopped", 1: "walking", 2: "driving"}}
    assert loaded.model.class_id("speed", "driving") == 2


def test_manifest_roundtrip(tmp_path):
    manifest = RunManifest(
        command="fit",
        inputs={"tracks": "tracks.csv"},
        outputs={"model": "model.json"},
        config={"seed": 3, "classes": "2,3,6,8"},
    )
    path = os.path.join(tmp_path, "m.json")
    manifest.save(path)
    again = RunManifest.load(path)
    assert again == manifest


def test_manifest_rejects_other_files(tmp_path):
    path = os.path.join(tmp_path, "m.json")
    with open(path, "w") as f:
        json.dump({"format": "fla-model"}, f)
    with pytest.raises(ParseError):
        RunManifest.load(path)


def test_atomic_write_leaves_no_partials(tmp_path):
    from fla.modelio import write_atomic

    path = os.path.join(tmp_path, "out.txt")
    write_atomic(path, "hello\n")
    assert open(path).read() == "hello\n"
    assert [p for p in os.listdir(tmp_path) if p != "out.txt"] == []
