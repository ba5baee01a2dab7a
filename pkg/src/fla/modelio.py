"""Model file serialization: a versioned, human-readable JSON document.

The file bundles the quantizers, class counts, conditionals, mixing tables
(unordered pairs only), optional class labels, fit metadata, the window
spec, and optionally an accumulator snapshot for resumable accumulation.
Serialization is byte-stable: keys are sorted and floats use repr, so the
same model always produces the same bytes.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .cooccur import CooccurrenceAccumulator, WindowSpec
from .em import FitConfig, FitTrace, FlaModel
from .errors import ParseError, ValidationError
from .quantize import BinSpec, QuantizerSet

MODEL_FORMAT_VERSION = 1


def _table(a: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.asarray(a)]


def _binspec_to_dict(spec: BinSpec) -> dict:
    return {
        "feature": spec.feature,
        "kind": spec.kind,
        "lo": list(spec.lo),
        "hi": list(spec.hi),
        "counts": list(spec.counts),
    }


def _binspec_from_dict(data: dict) -> BinSpec:
    return BinSpec(
        feature=data["feature"],
        kind=data["kind"],
        lo=tuple(float(v) for v in data["lo"]),
        hi=tuple(float(v) for v in data["hi"]),
        counts=tuple(int(v) for v in data["counts"]),
    )


def _window_to_dict(spec: WindowSpec) -> dict:
    return {
        "half_width": spec.half_width,
        "sigma": spec.sigma,
        "stride": spec.stride,
        "weight_rule": spec.weight_rule,
    }


def _window_from_dict(data: dict) -> WindowSpec:
    return WindowSpec(
        half_width=int(data["half_width"]),
        sigma=float(data["sigma"]),
        stride=int(data.get("stride", 1)),
        weight_rule=str(data.get("weight_rule", "uniform")),
    )


@dataclass(frozen=True)
class ModelBundle:
    """Everything a model file carries."""

    model: FlaModel
    window: WindowSpec
    frame_rate: int
    fit_info: dict
    accumulator: CooccurrenceAccumulator | None = None


def bundle_to_dict(bundle: ModelBundle) -> dict:
    model = bundle.model
    doc = {
        "format": "fla-model",
        "format_version": MODEL_FORMAT_VERSION,
        "frame_rate": bundle.frame_rate,
        "features": list(model.feature_names),
        "class_counts": list(model.class_counts),
        "quantizers": (
            [_binspec_to_dict(s) for s in model.quantizers.specs]
            if model.quantizers is not None else None
        ),
        "conditionals": {
            name: _table(model.conditionals[i])
            for i, name in enumerate(model.feature_names)
        },
        "mixing": {
            f"{i},{j}": _table(model._mixing[(i, j)]) for (i, j) in model.mixing_pairs()
        },
        "class_labels": {
            feature: {str(cid): name for cid, name in sorted(mapping.items())}
            for feature, mapping in sorted(model.class_labels.items())
        },
        "window": _window_to_dict(bundle.window),
        "fit": bundle.fit_info,
    }
    if bundle.accumulator is not None:
        acc = bundle.accumulator
        doc["accumulator"] = {
            "alphabet_sizes": list(acc.alphabet_sizes),
            "total_weight": acc.total_weight,
            "window_count": acc.window_count,
            "tables": {f"{i},{j}": _table(t) for (i, j), t in acc.tables.items()},
        }
    return doc


def bundle_from_dict(doc: dict) -> ModelBundle:
    try:
        if doc.get("format") != "fla-model":
            raise ParseError("not a model file (missing format marker)")
        if int(doc["format_version"]) != MODEL_FORMAT_VERSION:
            raise ParseError(f"unsupported model format version {doc['format_version']!r}")
        features = tuple(doc["features"])
        class_counts = tuple(int(k) for k in doc["class_counts"])
        quantizers = None
        if doc.get("quantizers") is not None:
            quantizers = QuantizerSet(
                tuple(_binspec_from_dict(s) for s in doc["quantizers"])
            )
        conditionals = [np.array(doc["conditionals"][name]) for name in features]
        mixing = {}
        for key, table in doc["mixing"].items():
            i, j = (int(v) for v in key.split(","))
            mixing[(i, j)] = np.array(table)
        class_labels = {
            feature: {int(cid): str(name) for cid, name in mapping.items()}
            for feature, mapping in (doc.get("class_labels") or {}).items()
        }
        model = FlaModel(
            class_counts, conditionals, mixing,
            feature_names=features, quantizers=quantizers, class_labels=class_labels,
        )
        window = _window_from_dict(doc["window"])
        frame_rate = int(doc.get("frame_rate", 15))
        accumulator = None
        if "accumulator" in doc:
            acc_doc = doc["accumulator"]
            accumulator = CooccurrenceAccumulator(
                tuple(int(a) for a in acc_doc["alphabet_sizes"]), window, features
            )
            for key, table in acc_doc["tables"].items():
                i, j = (int(v) for v in key.split(","))
                accumulator.tables[(i, j)] = np.array(table, dtype=np.float64)
            accumulator.total_weight = float(acc_doc["total_weight"])
            accumulator.window_count = int(acc_doc["window_count"])
        return ModelBundle(model, window, frame_rate, dict(doc.get("fit") or {}), accumulator)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad model file: {exc}") from exc


def fit_info_dict(config: FitConfig, trace: FitTrace) -> dict:
    return {
        "seed": config.seed,
        "max_iterations": config.max_iterations,
        "tolerance": config.tolerance,
        "epsilon": config.epsilon,
        "include_diagonal": config.include_diagonal,
        "iterations": trace.iterations,
        "converged": trace.converged,
        "final_objective": trace.objectives[-1],
        "initial_objective": trace.objectives[0],
    }


def dumps_canonical(doc: dict) -> str:
    """Deterministic JSON text: sorted keys, repr floats, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(path: str, bundle: ModelBundle) -> None:
    write_atomic(path, dumps_canonical(bundle_to_dict(bundle)))


def load_model(path: str) -> ModelBundle:
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad model file JSON: {exc}") from exc
    return bundle_from_dict(doc)
