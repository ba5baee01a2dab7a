"""Table exports: plain grayscale rasters (PGM) plus numeric grid files.

Every exported table is written twice: a max-normalized binary PGM where
brighter means higher probability, and a whitespace-separated numeric grid
that preserves the raw values.
"""

from __future__ import annotations

import os

import numpy as np

from .cooccur import CooccurrenceAccumulator, finalize
from .em import FlaModel, model_pairwise_joint
from .errors import ValidationError
from .modelio import ModelBundle

EXPORT_TARGETS = ("empirical", "model-joints", "conditionals", "mixing", "diff")


def write_pgm(path: str, table: np.ndarray) -> None:
    """Max-normalized 8-bit grayscale raster (binary PGM, P5)."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2:
        raise ValidationError("PGM export needs a 2-D table")
    peak = table.max()
    scaled = np.zeros(table.shape, dtype=np.uint8) if peak <= 0 else np.rint(
        255.0 * table / peak
    ).astype(np.uint8)
    header = f"P5\n{table.shape[1]} {table.shape[0]}\n255\n".encode("ascii")
    tmp = path + ".part"
    with open(tmp, "wb") as handle:
        handle.write(header)
        handle.write(scaled.tobytes())
    os.replace(tmp, path)


def write_grid(path: str, table: np.ndarray) -> None:
    """Numeric grid, one row per line, full float precision."""
    tmp = path + ".part"
    with open(tmp, "w", encoding="utf-8") as handle:
        for row in np.atleast_2d(np.asarray(table, dtype=np.float64)):
            handle.write(" ".join(repr(float(v)) for v in row) + "\n")
    os.replace(tmp, path)


def read_grid(path: str) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def _write_pair(out_dir: str, stem: str, table: np.ndarray) -> list[str]:
    pgm = os.path.join(out_dir, stem + ".pgm")
    txt = os.path.join(out_dir, stem + ".txt")
    write_pgm(pgm, table)
    write_grid(txt, table)
    return [pgm, txt]


def export_tables(bundle: ModelBundle, what: str, out_dir: str) -> list[str]:
    """Write the requested table family; returns the created paths.

    `empirical` and `diff` need an accumulator snapshot in the model file.
    """
    if what not in EXPORT_TARGETS:
        raise ValidationError(
            f"unknown export target {what!r}; expected one of {', '.join(EXPORT_TARGETS)}"
        )
    os.makedirs(out_dir, exist_ok=True)
    model = bundle.model
    names = model.feature_names
    written: list[str] = []

    def empirical_joints():
        if bundle.accumulator is None:
            raise ValidationError(
                "model file has no accumulator snapshot; refit with --with-snapshot"
            )
        return finalize(bundle.accumulator)

    if what == "empirical":
        joints = empirical_joints()
        for (i, j) in joints.pairs():
            written += _write_pair(
                out_dir, f"empirical_{names[i]}_{names[j]}", joints.table(i, j)
            )
    elif what == "model-joints":
        for i in range(model.n_features):
            for j in range(i, model.n_features):
                written += _write_pair(
                    out_dir, f"model_joint_{names[i]}_{names[j]}",
                    model_pairwise_joint(model, i, j),
                )
    elif what == "conditionals":
        for i, name in enumerate(names):
            written += _write_pair(out_dir, f"conditional_{name}", model.conditionals[i])
    elif what == "mixing":
        for (i, j) in model.mixing_pairs():
            written += _write_pair(
                out_dir, f"mixing_{names[i]}_{names[j]}", model.mixing_table(i, j)
            )
    elif what == "diff":
        joints = empirical_joints()
        for (i, j) in joints.pairs():
            diff = np.abs(joints.table(i, j) - model_pairwise_joint(model, i, j))
            written += _write_pair(out_dir, f"joint_diff_{names[i]}_{names[j]}", diff)
    return written
