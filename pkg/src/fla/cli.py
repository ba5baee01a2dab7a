"""Command-line front end: gen, fit, classify, query, export, compare-oracle.

Every command is deterministic given its effective manifest, which is
written next to the outputs; `--manifest` replays a recorded run, with
explicit flags overriding recorded values. Failures exit nonzero with a
single machine-parsable `error:<Class>: message` line on stderr.
"""

from __future__ import annotations

import argparse
import io
import sys

import numpy as np

from . import __version__
from .align import match_classes, total_variation
from .classify import (
    argmax_labels,
    build_segments,
    instantaneous_posteriors,
    smooth_posteriors,
    write_segments,
    parse_segments,
)
from .cooccur import WindowSpec, accumulate_symbol_sequences, finalize, merge
from .em import FitConfig, fit as fit_model, objective
from .errors import FlaError, ParseError, ValidationError
from .exports import EXPORT_TARGETS, export_tables
from .full_joint import (
    collect_window_samples,
    enumerate_tuple_count,
    fit_full_joint,
    pairwise_from_samples,
    to_pairwise_model,
)
from .manifest import RunManifest
from .modelio import ModelBundle, fit_info_dict, load_model, save_model, write_atomic
from .quantize import fit_quantizers, quantize
from .queries import QueryPredicate, evaluate_query
from .scenes import SceneSpec, demo_scene_spec, generate_scene, inject_glitches, write_labels
from .tracks import FEATURES, parse_track_records, write_track_records


def _parse_classes(text: str, n_features: int) -> tuple[int, ...]:
    try:
        counts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ValidationError(f"bad --classes value {text!r}") from None
    if len(counts) != n_features:
        raise ValidationError(
            f"--classes needs {n_features} comma-separated counts, got {len(counts)}"
        )
    return counts


def _parse_bins(text: str, features: tuple[str, ...]) -> dict:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != len(features):
        raise ValidationError(
            f"--bins needs {len(features)} comma-separated entries, got {len(parts)}"
        )
    bins = {}
    for feature, part in zip(features, parts):
        try:
            if feature == "position":
                if "x" in part:
                    bx, by = part.split("x")
                    bins[feature] = (int(bx), int(by))
                else:
                    bins[feature] = (int(part), int(part))
            else:
                bins[feature] = int(part)
        except ValueError:
            raise ValidationError(f"bad bin count {part!r} for {feature}") from None
    return bins


def _parse_features(text: str) -> tuple[str, ...]:
    features = tuple(p.strip() for p in text.split(","))
    for f in features:
        if f not in FEATURES:
            raise ValidationError(f"unknown feature {f!r}")
    if len(set(features)) != len(features):
        raise ValidationError("repeated feature in --features")
    return features


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _load_manifest_config(args, command: str) -> dict:
    if getattr(args, "manifest", None):
        manifest = RunManifest.load(args.manifest)
        if manifest.command != command:
            raise ValidationError(
                f"manifest records a {manifest.command!r} run, not {command!r}"
            )
        return {"inputs": manifest.inputs, "outputs": manifest.outputs,
                "config": manifest.config}
    return {"inputs": {}, "outputs": {}, "config": {}}


def _pick(cli_value, recorded, default):
    if cli_value is not None:
        return cli_value
    if recorded is not None:
        return recorded
    return default


def _class_labels_from_flags(values, features) -> dict[str, dict[int, str]]:
    labels: dict[str, dict[int, str]] = {}
    for item in values or []:
        try:
            head, name = item.split("=", 1)
            feature, cid = head.split(":")
        except ValueError:
            raise ValidationError(
                f"bad --class-label {item!r}; expected feature:id=name"
            ) from None
        if feature not in features:
            raise ValidationError(f"unknown feature {feature!r} in --class-label")
        labels.setdefault(feature, {})[int(cid)] = name
    return labels


def cmd_gen(args) -> int:
    rec = _load_manifest_config(args, "gen")
    cfg = rec["config"]
    if args.spec:
        scene = SceneSpec.from_json(_read_text(args.spec))
        spec_source = args.spec
    elif args.demo:
        scene = demo_scene_spec()
        spec_source = "demo"
    elif cfg.get("scene"):
        scene = SceneSpec.from_dict(cfg["scene"])
        spec_source = rec["inputs"].get("spec", "manifest")
    else:
        raise ValidationError("gen needs a scene spec file, --demo, or --manifest")

    glitch_rate = float(_pick(args.glitch_rate, cfg.get("glitch_rate"), 0.0))
    glitch_seed = int(_pick(args.glitch_seed, cfg.get("glitch_seed"), 0))
    glitch_magnitude = float(_pick(args.glitch_magnitude, cfg.get("glitch_magnitude"), 1.0))
    out_dir = _pick(args.out_dir, rec["outputs"].get("dir"), None)
    if out_dir is None:
        raise ValidationError("gen needs --out-dir")

    import os

    os.makedirs(out_dir, exist_ok=True)
    trackset, labels = generate_scene(scene)
    if glitch_rate > 0:
        trackset = inject_glitches(trackset, glitch_rate, glitch_magnitude, glitch_seed)

    tracks_path = os.path.join(out_dir, "tracks.csv")
    labels_path = os.path.join(out_dir, "labels.csv")
    buf = io.StringIO()
    write_track_records(trackset, buf)
    write_atomic(tracks_path, buf.getvalue())
    buf = io.StringIO()
    write_labels(labels, buf)
    write_atomic(labels_path, buf.getvalue())

    manifest = RunManifest(
        command="gen",
        inputs={"spec": spec_source},
        outputs={"dir": out_dir, "tracks": tracks_path, "labels": labels_path},
        config={
            "scene": scene.to_dict(),
            "glitch_rate": glitch_rate,
            "glitch_seed": glitch_seed,
            "glitch_magnitude": glitch_magnitude,
        },
    )
    manifest.save(os.path.join(out_dir, "gen.manifest.json"))
    print(f"wrote {tracks_path} ({len(trackset)} tracks) and {labels_path}")
    return 0


def cmd_fit(args) -> int:
    rec = _load_manifest_config(args, "fit")
    cfg = rec["config"]
    tracks_path = _pick(args.tracks, rec["inputs"].get("tracks"), None)
    if tracks_path is None:
        raise ValidationError("fit needs a tracks file")
    out_path = _pick(args.out, rec["outputs"].get("model"), None)
    if out_path is None:
        raise ValidationError("fit needs --out")

    features = FEATURES
    classes = _parse_classes(_pick(args.classes, cfg.get("classes"), "2,3,6,8"), len(features))
    bins = _parse_bins(_pick(args.bins, cfg.get("bins"), "64,64,64,16x16"), features)
    window_seconds = float(_pick(args.window_seconds, cfg.get("window_seconds"), 1.0))
    frame_rate = int(_pick(args.frame_rate, cfg.get("frame_rate"), 15))
    stride = int(_pick(args.stride, cfg.get("stride"), 1))
    weight_rule = _pick(args.weight_rule, cfg.get("weight_rule"), "uniform")
    seed = int(_pick(args.seed, cfg.get("seed"), 0))
    tol = float(_pick(args.tol, cfg.get("tol"), 1e-7))
    max_iters = int(_pick(args.max_iters, cfg.get("max_iters"), 500))
    epsilon = float(_pick(args.epsilon, cfg.get("epsilon"), 1e-12))
    include_diagonal = not bool(_pick(args.no_diagonal, cfg.get("no_diagonal"), False))
    with_snapshot = bool(_pick(args.with_snapshot or None, cfg.get("with_snapshot"), False))
    resume = _pick(args.resume, rec["inputs"].get("resume"), None)
    label_flags = args.class_label if args.class_label else cfg.get("class_labels_flags")

    trackset = parse_track_records(_read_text(tracks_path))
    prev = None
    if resume:
        prev = load_model(resume)
        if prev.accumulator is None:
            raise ValidationError(
                f"{resume} has no accumulator snapshot; cannot resume"
            )
        quantizers = prev.model.quantizers
        window = prev.window
        frame_rate = prev.frame_rate
    else:
        quantizers = fit_quantizers(trackset, bins)
        window = WindowSpec.from_seconds(window_seconds, frame_rate, stride, weight_rule)
    seqs = quantize(trackset, quantizers)
    acc = accumulate_symbol_sequences(seqs, window)
    if prev is not None:
        acc = merge(prev.accumulator, acc)
    joints = finalize(acc)

    fit_config = FitConfig(
        max_iterations=max_iters, tolerance=tol, seed=seed,
        epsilon=epsilon, include_diagonal=include_diagonal,
    )
    model, trace = fit_model(joints, classes, fit_config, quantizers)
    class_labels = _class_labels_from_flags(label_flags, features)
    if class_labels:
        from .em import FlaModel

        model = FlaModel(
            model.class_counts, model.conditionals,
            {pair: model.mixing_table(*pair) for pair in model.mixing_pairs()},
            feature_names=model.feature_names, quantizers=model.quantizers,
            class_labels=class_labels,
        )

    bundle = ModelBundle(
        model, window, frame_rate, fit_info_dict(fit_config, trace),
        acc if with_snapshot else None,
    )
    save_model(out_path, bundle)
    manifest = RunManifest(
        command="fit",
        inputs={"tracks": tracks_path, "resume": resume},
        outputs={"model": out_path},
        config={
            "classes": ",".join(str(c) for c in classes),
            "bins": _pick(args.bins, cfg.get("bins"), "64,64,64,16x16"),
            "window_seconds": window_seconds,
            "frame_rate": frame_rate,
            "stride": stride,
            "weight_rule": weight_rule,
            "seed": seed,
            "tol": tol,
            "max_iters": max_iters,
            "epsilon": epsilon,
            "no_diagonal": not include_diagonal,
            "with_snapshot": with_snapshot,
            "class_labels_flags": label_flags,
        },
    )
    manifest.save(out_path + ".manifest.json")
    print(
        f"wrote {out_path}: classes {classes}, {trace.iterations} iterations, "
        f"objective {trace.objectives[-1]:.6g}, converged={trace.converged}"
    )
    return 0


def cmd_classify(args) -> int:
    rec = _load_manifest_config(args, "classify")
    cfg = rec["config"]
    tracks_path = _pick(args.tracks, rec["inputs"].get("tracks"), None)
    model_path = _pick(args.model, rec["inputs"].get("model"), None)
    out_path = _pick(args.out, rec["outputs"].get("segments"), None)
    if tracks_path is None or model_path is None or out_path is None:
        raise ValidationError("classify needs a tracks file, --model, and --out")
    no_smooth = bool(_pick(args.no_smooth or None, cfg.get("no_smooth"), False))

    bundle = load_model(model_path)
    if bundle.model.quantizers is None:
        raise ValidationError(f"{model_path} carries no quantizers; cannot classify")
    trackset = parse_track_records(_read_text(tracks_path))
    seqs = quantize(trackset, bundle.model.quantizers)
    posteriors = instantaneous_posteriors(bundle.model, seqs)
    if not no_smooth:
        posteriors = smooth_posteriors(posteriors, bundle.window)
    labels = argmax_labels(posteriors)
    segset = build_segments(
        seqs.track_ids, labels, posteriors,
        frame_indices=[tr.t for tr in trackset],
        feature_names=seqs.feature_names,
    )
    buf = io.StringIO()
    write_segments(segset, buf)
    write_atomic(out_path, buf.getvalue())
    manifest = RunManifest(
        command="classify",
        inputs={"tracks": tracks_path, "model": model_path},
        outputs={"segments": out_path},
        config={"no_smooth": no_smooth},
    )
    manifest.save(out_path + ".manifest.json")
    print(f"wrote {out_path}: {len(segset)} segments over {len(trackset)} tracks")
    return 0


def cmd_query(args) -> int:
    segset = parse_segments(_read_text(args.segments))
    model = None
    frame_rate = args.frame_rate
    if args.model:
        bundle = load_model(args.model)
        model = bundle.model
        if frame_rate is None:
            frame_rate = bundle.frame_rate
    frame_rate = int(frame_rate) if frame_rate is not None else 15
    predicate = QueryPredicate.parse(args.predicate)
    matches = evaluate_query(segset, predicate, frame_rate, model)
    lines = []
    for match in matches:
        for seg in match.witnesses:
            labels = ",".join(str(v) for v in seg.labels)
            lines.append(f"{seg.track_id},{seg.start},{seg.end},{labels}")
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"# matched {len(matches)} tracks", file=sys.stderr)
    return 0


def cmd_export(args) -> int:
    bundle = load_model(args.model)
    targets = (
        list(EXPORT_TARGETS) if args.what == "all"
        else [w.strip() for w in args.what.split(",")]
    )
    written = []
    for what in targets:
        written += export_tables(bundle, what, args.out_dir)
    print(f"wrote {len(written)} files to {args.out_dir}")
    return 0


def cmd_compare_oracle(args) -> int:
    features = _parse_features(args.features) if args.features else FEATURES
    classes = _parse_classes(args.classes, len(features))
    n_tuples = enumerate_tuple_count(classes)
    if n_tuples > args.cap:
        from .errors import CapacityError

        raise CapacityError(
            f"{n_tuples} latent tuples exceed the cap of {args.cap}; "
            f"reduce --classes or raise --cap"
        )
    bins = _parse_bins(args.bins, features) if args.bins else None
    trackset = parse_track_records(_read_text(args.tracks))
    quantizers = fit_quantizers(trackset, bins, features)
    seqs = quantize(trackset, quantizers)
    window = WindowSpec.from_seconds(args.window_seconds, args.frame_rate)
    samples = collect_window_samples(seqs, window)
    joints = pairwise_from_samples(samples)

    config = FitConfig(seed=args.seed, tolerance=args.tol, max_iterations=args.max_iters)
    pairwise_model, trace = fit_model(joints, classes, config, quantizers)
    full_model, full_trace = fit_full_joint(samples, classes, config, tuple_cap=args.cap)
    induced = to_pairwise_model(full_model)

    pairwise_obj = objective(pairwise_model, joints)
    induced_obj = objective(induced, joints)
    print(f"features: {','.join(features)}")
    print(f"tuple_count: {n_tuples}")
    print(f"windows: {samples.n_windows}")
    print(f"pairwise_objective: {pairwise_obj!r}")
    print(f"oracle_induced_objective: {induced_obj!r}")
    print(f"pairwise_iterations: {trace.iterations}")
    print(f"oracle_iterations: {full_trace.iterations}")
    print(f"oracle_final_log_likelihood: {full_trace.log_likelihoods[-1]!r}")
    for i, feature in enumerate(features):
        perm = match_classes(pairwise_model.conditionals[i], full_model.conditionals[i])
        tv = np.mean(
            [
                total_variation(full_model.conditionals[i][r], pairwise_model.conditionals[i][perm[r]])
                for r in range(classes[i])
            ]
        )
        print(f"conditional_tv_{feature}: {float(tv)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fla",
        description="Factored latent analysis of tracked-object observations",
    )
    parser.add_argument("--version", action="version", version=f"fla {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a scene into track + label files")
    p.add_argument("spec", nargs="?", help="scene spec JSON file")
    p.add_argument("--demo", action="store_true", help="use the bundled demo scene")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--glitch-rate", type=float, help="fraction of observations to perturb")
    p.add_argument("--glitch-seed", type=int)
    p.add_argument("--glitch-magnitude", type=float)
    p.add_argument("--manifest", help="replay a recorded gen run")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a model from a tracks file")
    p.add_argument("tracks", nargs="?", help="tracks CSV file")
    p.add_argument("--out", help="model file to write")
    p.add_argument("--classes", help="latent class counts, e.g. 2,3,6,8")
    p.add_argument("--bins", help="bin counts, e.g. 64,64,64,16x16")
    p.add_argument("--window-seconds", type=float, dest="window_seconds")
    p.add_argument("--frame-rate", type=int, dest="frame_rate")
    p.add_argument("--stride", type=int)
    p.add_argument("--weight-rule", choices=["uniform", "redundancy"], dest="weight_rule")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--no-diagonal", action="store_const", const=True, dest="no_diagonal",
                   help="exclude the (i,i) divergence terms from the criterion")
    p.add_argument("--with-snapshot", action="store_true", dest="with_snapshot",
                   help="embed the accumulator snapshot in the model file")
    p.add_argument("--resume", help="model file with a snapshot to continue from")
    p.add_argument("--class-label", action="append", dest="class_label",
                   help="attach a text label, e.g. speed:0=stopped (repeatable)")
    p.add_argument("--manifest", help="replay a recorded fit run")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("classify", help="classify tracks into labeled segments")
    p.add_argument("tracks", nargs="?", help="tracks CSV file")
    p.add_argument("--model", help="model file")
    p.add_argument("--out", help="segments file to write")
    p.add_argument("--no-smooth", action="store_const", const=True, dest="no_smooth",
                   help="skip temporal smoothing of posteriors")
    p.add_argument("--manifest", help="replay a recorded classify run")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("query", help="evaluate a predicate over a segments file")
    p.add_argument("segments", help="segments CSV file")
    p.add_argument("--predicate", required=True, help='e.g. "speed=0 and duration>=30s"')
    p.add_argument("--model", help="model file (class labels, frame rate, validation)")
    p.add_argument("--frame-rate", type=int, dest="frame_rate")
    p.add_argument("--out", help="write witness records here instead of stdout")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("export", help="export tables as PGM images + numeric grids")
    p.add_argument("model", help="model file")
    p.add_argument("--what", default="all",
                   help=f"comma list of {', '.join(EXPORT_TARGETS)}, or 'all'")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("compare-oracle",
                       help="fit the pairwise estimator and the full-joint EM on "
                            "identical windows and report both objectives")
    p.add_argument("tracks", help="tracks CSV file")
    p.add_argument("--classes", required=True, help="class counts per feature")
    p.add_argument("--features", help="feature subset, e.g. size,speed")
    p.add_argument("--bins", help="bin counts for the chosen features")
    p.add_argument("--window-seconds", type=float, dest="window_seconds", default=1.0)
    p.add_argument("--frame-rate", type=int, dest="frame_rate", default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iters", type=int, dest="max_iters", default=500)
    p.add_argument("--cap", type=int, default=10_000, help="max latent tuple count")
    p.set_defaults(func=cmd_compare_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlaError as exc:
        print(f"error:{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error:FileNotFound: {exc.filename or exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
