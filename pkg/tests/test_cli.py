import json
import os

import numpy as np
import pytest

from fla.cli import main
from fla.modelio import load_model
from fla.scenes import SceneSpec, demo_scene_spec


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small generated scene plus a fitted model, shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    spec = demo_scene_spec(track_count=30, mean_track_length=60, seed=5)
    spec_path = os.path.join(root, "scene.json")
    with open(spec_path, "w") as f:
        json.dump(spec.to_dict(), f)
    assert main(["gen", spec_path, "--out-dir", os.path.join(root, "scene")]) == 0
    tracks = os.path.join(root, "scene", "tracks.csv")
    model = os.path.join(root, "model.json")
    rc = main([
        "fit", tracks, "--out", model, "--classes", "2,3,6,8",
        "--bins", "32,32,32,8x8", "--seed", "0", "--with-snapshot",
    ])
    assert rc == 0
    return {"root": str(root), "spec": spec_path, "tracks": tracks, "model": model}


def test_gen_demo(tmp_path):
    out = os.path.join(tmp_path, "scene")
    assert main(["gen", "--demo", "--out-dir", out]) == 0
    assert os.path.exists(os.path.join(out, "tracks.csv"))
    assert os.path.exists(os.path.join(out, "labels.csv"))
    assert os.path.exists(os.path.join(out, "gen.manifest.json"))


def test_gen_missing_spec_file(tmp_path, capsys):
    rc = main(["gen", os.path.join(tmp_path, "nope.json"), "--out-dir", str(tmp_path)])
    assert rc != 0
    err = capsys.readouterr().err
    assert "error:" in err and "nope.json" in err


def test_gen_replay_identical(workdir, tmp_path):
    manifest = os.path.join(workdir["root"], "scene", "gen.manifest.json")
    out2 = os.path.join(tmp_path, "again")
    assert main(["gen", "--manifest", manifest, "--out-dir", out2]) == 0
    a = open(workdir["tracks"], "rb").read()
    b = open(os.path.join(out2, "tracks.csv"), "rb").read()
    assert a == b


def test_fit_writes_model_and_manifest(workdir):
    bundle = load_model(workdir["model"])
    assert bundle.model.class_counts == (2, 3, 6, 8)
    assert bundle.accumulator is not None
    assert os.path.exists(workdir["model"] + ".manifest.json")


def test_fit_replay_byte_identical(workdir, tmp_path):
    replayed = os.path.join(tmp_path, "replayed.json")
    rc = main(["fit", "--manifest", workdir["model"] + ".manifest.json",
               "--out", replayed])
    assert rc == 0
    original = open(workdir["model"], "rb").read()
    again = open(replayed, "rb").read()
    assert original == again


def test_fit_single_classes_converges_fast(workdir, tmp_path):
    out = os.path.join(tmp_path, "m1.json")
    rc = main(["fit", workdir["tracks"], "--out", out, "--classes", "1,1,1,1",
               "--bins", "32,32,32,8x8"])
    assert rc == 0
    assert load_model(out).fit_info["iterations"] <= 2
    assert load_model(out).fit_info["converged"] is True


def test_fit_bad_classes(workdir, capsys):
    rc = main(["fit", workdir["tracks"], "--out", "/tmp/x.json", "--classes", "2,3"])
    assert rc != 0
    assert "error:ValidationError" in capsys.readouterr().err


def test_classify_and_segments_roundtrip(workdir):
    segments = os.path.join(workdir["root"], "segments.csv")
    rc = main(["classify", workdir["tracks"], "--model", workdir["model"],
               "--out", segments])
    assert rc == 0
    from fla import parse_segments

    segs = parse_segments(open(segments).read())
    assert segs.feature_names == ("size", "speed", "direction", "position")
    assert len(segs) > 0


def test_classify_empty_tracks(workdir, tmp_path):
    empty = os.path.join(tmp_path, "empty.csv")
    open(empty, "w").write("# track_id,t,size,speed,direction,pos_x,pos_y\n")
    out = os.path.join(tmp_path, "segments.csv")
    rc = main(["classify", empty, "--model", workdir["model"], "--out", out])
    assert rc == 0
    from fla import parse_segments

    assert len(parse_segments(open(out).read())) == 0


def test_classify_no_smooth_has_more_segments(workdir, tmp_path):
    glitch_dir = os.path.join(tmp_path, "glitched")
    manifest = os.path.join(workdir["root"], "scene", "gen.manifest.json")
    assert main(["gen", "--manifest", manifest, "--out-dir", glitch_dir,
                 "--glitch-rate", "0.05", "--glitch-seed", "3"]) == 0
    tracks = os.path.join(glitch_dir, "tracks.csv")
    model = os.path.join(tmp_path, "gmodel.json")
    assert main(["fit", tracks, "--out", model, "--classes", "2,3,6,8",
                 "--bins", "32,32,32,8x8", "--seed", "0"]) == 0
    smooth = os.path.join(tmp_path, "smooth.csv")
    rough = os.path.join(tmp_path, "rough.csv")
    assert main(["classify", tracks, "--model", model, "--out", smooth]) == 0
    assert main(["classify", tracks, "--model", model, "--out", rough,
                 "--no-smooth"]) == 0
    from fla import parse_segments

    n_smooth = len(parse_segments(open(smooth).read()))
    n_rough = len(parse_segments(open(rough).read()))
    assert n_smooth <= 0.5 * n_rough


def test_query_true_returns_all_tracks(workdir, capsys):
    segments = os.path.join(workdir["root"], "segments.csv")
    if not os.path.exists(segments):
        main(["classify", workdir["tracks"], "--model", workdir["model"],
              "--out", segments])
    rc = main(["query", segments, "--predicate", "true"])
    assert rc == 0
    out = capsys.readouterr().out
    ids = {line.split(",")[0] for line in out.strip().splitlines()}
    assert len(ids) == 30


def test_query_malformed_predicate(workdir, capsys):
    segments = os.path.join(workdir["root"], "segments.csv")
    rc = main(["query", segments, "--predicate", "size = = 1"])
    assert rc != 0
    err = capsys.readouterr().err
    assert "error:QueryError" in err and "position" in err


def test_query_with_class_labels(workdir, tmp_path, capsys):
    out = os.path.join(tmp_path, "labeled.json")
    rc = main(["fit", workdir["tracks"], "--out", out, "--classes", "2,3,6,8",
               "--bins", "32,32,32,8x8", "--seed", "0",
               "--class-label", "size:0=pedestrian", "--class-label", "size:1=vehicle"])
    assert rc == 0
    segments = os.path.join(tmp_path, "segments.csv")
    assert main(["classify", workdir["tracks"], "--model", out, "--out", segments]) == 0
    rc = main(["query", segments, "--predicate", "size=pedestrian or size=vehicle",
               "--model", out])
    assert rc == 0
    assert capsys.readouterr().out.strip()


def test_export_all(workdir, tmp_path):
    out_dir = os.path.join(tmp_path, "plots")
    rc = main(["export", workdir["model"], "--what", "all", "--out-dir", out_dir])
    assert rc == 0
    files = sorted(os.listdir(out_dir))
    assert "conditional_size.pgm" in files
    assert "empirical_size_speed.txt" in files
    assert "model_joint_size_speed.txt" in files
    assert "joint_diff_size_speed.txt" in files
    assert "mixing_size_speed.txt" in files
    grid = np.loadtxt(os.path.join(out_dir, "model_joint_size_speed.txt"))
    assert abs(grid.sum() - 1.0) <= 1e-9
    with open(os.path.join(out_dir, "conditional_size.pgm"), "rb") as f:
        assert f.read(2) == b"P5"


def test_export_unknown_target(workdir, tmp_path, capsys):
    rc = main(["export", workdir["model"], "--what", "bogus",
               "--out-dir", os.path.join(tmp_path, "x")])
    assert rc != 0
    assert "error:ValidationError" in capsys.readouterr().err


def test_export_empirical_requires_snapshot(workdir, tmp_path, capsys):
    model = os.path.join(tmp_path, "nosnap.json")
    assert main(["fit", workdir["tracks"], "--out", model, "--classes", "1,1,1,1",
                 "--bins", "32,32,32,8x8"]) == 0
    rc = main(["export", model, "--what", "empirical",
               "--out-dir", os.path.join(tmp_path, "y")])
    assert rc != 0
    assert "snapshot" in capsys.readouterr().err


def test_compare_oracle_cap(workdir, capsys):
    rc = main(["compare-oracle", workdir["tracks"], "--classes", "2,3,6,8",
               "--cap", "100"])
    assert rc != 0
    assert "error:CapacityError" in capsys.readouterr().err


def test_compare_oracle_subset(workdir, capsys):
    rc = main(["compare-oracle", workdir["tracks"], "--classes", "2,3",
               "--features", "size,speed", "--bins", "16,16"])
    assert rc == 0
    out = capsys.readouterr().out
    values = dict(
        line.split(": ") for line in out.strip().splitlines() if ": " in line
    )
    pw = float(values["pairwise_objective"])
    induced = float(values["oracle_induced_objective"])
    assert pw <= induced + 1e-6
    assert int(values["tuple_count"]) == 6


def test_resume_accumulates_more_windows(workdir, tmp_path):
    resumed = os.path.join(tmp_path, "resumed.json")
    rc = main(["fit", workdir["tracks"], "--out", resumed,
               "--resume", workdir["model"], "--with-snapshot"])
    assert rc == 0
    first = load_model(workdir["model"]).accumulator.window_count
    second = load_model(resumed).accumulator.window_count
    assert second == 2 * first


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
