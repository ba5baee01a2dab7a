"""Synthetic scene generation with planted per-feature latent structure.

A scene is described by archetypes: weighted combinations of per-feature
emission parameters (Gaussian size/speed, wrapped-Gaussian direction, a
reflected random walk confined to a rectangle for position). Every track
samples one archetype and emits observations from it; the planted
per-feature class ids are recorded per frame as ground truth.

Archetypes that share the exact same emission parameters for a feature
share that feature's planted class id, so a scene with, say, two sizes and
three speeds plants a 2-class size model and a 3-class speed model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterator

import numpy as np

from .errors import ParseError, ValidationError
from .tracks import FEATURES, TWO_PI, Track, TrackSet

LABELS_HEADER = "# track_id,t,archetype,l_size,l_speed,l_direction,l_position"


@dataclass(frozen=True)
class Archetype:
    """Prior weight plus per-feature emission parameters for one behavior."""

    weight: float
    size_mean: float
    size_std: float
    speed_mean: float
    speed_std: float
    direction_mean: float
    direction_std: float
    region: tuple[float, float, float, float]  # x0, y0, x1, y1, inside [0,1]^2
    name: str = ""

    def validate(self) -> None:
        if self.weight <= 0:
            raise ValidationError(f"archetype {self.name!r}: weight must be > 0")
        for label, std in (("size_std", self.size_std), ("speed_std", self.speed_std),
                           ("direction_std", self.direction_std)):
            if std <= 0:
                raise ValidationError(f"archetype {self.name!r}: {label} must be > 0")
        x0, y0, x1, y1 = self.region
        if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
            raise ValidationError(
                f"archetype {self.name!r}: region must be a nonempty rectangle in [0,1]^2"
            )

    def feature_params(self, feature: str) -> tuple:
        if feature == "size":
            return (self.size_mean, self.size_std)
        if feature == "speed":
            return (self.speed_mean, self.speed_std)
        if feature == "direction":
            return (self.direction_mean, self.direction_std)
        if feature == "position":
            return tuple(self.region)
        raise ValidationError(f"unknown feature {feature!r}")


@dataclass(frozen=True)
class SceneSpec:
    """Full description of a synthetic scene; a pure function input.

    The same spec (seed included) always generates bit-identical output.
    """

    archetypes: tuple[Archetype, ...]
    track_count: int
    mean_track_length: float
    seed: int
    frame_rate: int = 15
    min_track_length: int = 2
    position_step: float = 0.01

    def validate(self) -> None:
        if not self.archetypes:
            raise ValidationError("scene needs at least one archetype")
        for a in self.archetypes:
            a.validate()
        total = sum(a.weight for a in self.archetypes)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"archetype weights sum to {total!r}, expected 1")
        if self.track_count < 1:
            raise ValidationError("track_count must be >= 1")
        if self.mean_track_length < self.min_track_length:
            raise ValidationError("mean_track_length below min_track_length")
        if self.frame_rate < 1:
            raise ValidationError("frame_rate must be >= 1")
        if self.position_step <= 0:
            raise ValidationError("position_step must be > 0")

    def planted_classes(self) -> dict[str, list[tuple]]:
        """Distinct per-feature parameter sets, in first-appearance order."""
        out: dict[str, list[tuple]] = {}
        for feature in FEATURES:
            seen: list[tuple] = []
            for a in self.archetypes:
                params = a.feature_params(feature)
                if params not in seen:
                    seen.append(params)
            out[feature] = seen
        return out

    def planted_class_counts(self) -> tuple[int, ...]:
        classes = self.planted_classes()
        return tuple(len(classes[f]) for f in FEATURES)

    def archetype_class_ids(self) -> np.ndarray:
        """(n_archetypes, 4) planted class id of each archetype per feature."""
        classes = self.planted_classes()
        ids = np.zeros((len(self.archetypes), len(FEATURES)), dtype=np.int64)
        for ai, a in enumerate(self.archetypes):
            for fi, feature in enumerate(FEATURES):
                ids[ai, fi] = classes[feature].index(a.feature_params(feature))
        return ids

    def to_dict(self) -> dict:
        return {
            "archetypes": [
                {
                    "weight": a.weight,
                    "size_mean": a.size_mean,
                    "size_std": a.size_std,
                    "speed_mean": a.speed_mean,
                    "speed_std": a.speed_std,
                    "direction_mean": a.direction_mean,
                    "direction_std": a.direction_std,
                    "region": list(a.region),
                    "name": a.name,
                }
                for a in self.archetypes
            ],
            "track_count": self.track_count,
            "mean_track_length": self.mean_track_length,
            "seed": self.seed,
            "frame_rate": self.frame_rate,
            "min_track_length": self.min_track_length,
            "position_step": self.position_step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        try:
            archetypes = tuple(
                Archetype(
                    weight=float(a["weight"]),
                    size_mean=float(a["size_mean"]),
                    size_std=float(a["size_std"]),
                    speed_mean=float(a["speed_mean"]),
                    speed_std=float(a["speed_std"]),
                    direction_mean=float(a["direction_mean"]),
                    direction_std=float(a["direction_std"]),
                    region=tuple(float(v) for v in a["region"]),
                    name=str(a.get("name", "")),
                )
                for a in data["archetypes"]
            )
            spec = cls(
                archetypes=archetypes,
                track_count=int(data["track_count"]),
                mean_track_length=float(data["mean_track_length"]),
                seed=int(data["seed"]),
                frame_rate=int(data.get("frame_rate", 15)),
                min_track_length=int(data.get("min_track_length", 2)),
                position_step=float(data.get("position_step", 0.01)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad scene spec: {exc}") from exc
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad scene spec JSON: {exc}") from exc
        return cls.from_dict(data)


class GroundTruthLabels:
    """Planted archetype and per-feature class ids, per track and frame."""

    __slots__ = ("track_ids", "_archetypes", "_labels")

    def __init__(self, track_ids, archetypes, labels):
        self.track_ids = tuple(track_ids)
        self._archetypes = {tid: np.asarray(a, dtype=np.int64) for tid, a in zip(self.track_ids, archetypes)}
        self._labels = {tid: np.asarray(l, dtype=np.int64) for tid, l in zip(self.track_ids, labels)}
        for tid in self.track_ids:
            arch = self._archetypes[tid]
            lab = self._labels[tid]
            if lab.shape != (len(arch), len(FEATURES)):
                raise ValidationError(
                    f"labels for track {tid!r}: shape {lab.shape} does not match "
                    f"{len(arch)} frames x {len(FEATURES)} features"
                )

    def archetype(self, track_id: str) -> np.ndarray:
        """(n,) archetype id per frame."""
        return self._archetypes[track_id]

    def labels(self, track_id: str) -> np.ndarray:
        """(n, 4) planted class id per frame and feature."""
        return self._labels[track_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundTruthLabels):
            return NotImplemented
        return (
            self.track_ids == other.track_ids
            and all(np.array_equal(self._archetypes[t], other._archetypes[t]) for t in self.track_ids)
            and all(np.array_equal(self._labels[t], other._labels[t]) for t in self.track_ids)
        )


def _reflect(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Fold values into [lo, hi] by reflection at the boundaries."""
    span = hi - lo
    folded = np.mod(values - lo, 2.0 * span)
    folded = np.where(folded > span, 2.0 * span - folded, folded)
    return lo + folded

def generate_scene(spec: SceneSpec) -> tuple[TrackSet, GroundTruthLabels]:
    """Generate a TrackSet plus per-frame ground-truth labels from a spec.

    Deterministic given the spec's seed: each track samples an archetype
    from the prior weights, a Poisson track length, then per-frame
    emissions (clipped Gaussians for size/speed, wrapped Gaussian for
    direction, reflected random walk inside the archetype's region).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    weights = np.array([a.weight for a in spec.archetypes])
    weights = weights / weights.sum()
    class_ids = spec.archetype_class_ids()
    width = len(str(max(spec.track_count - 1, 1)))

    tracks = []
    arch_cols = []
    label_cols = []
    for idx in range(spec.track_count):
        ai = int(rng.choice(len(spec.archetypes), p=weights))
        a = spec.archetypes[ai]
        n = max(spec.min_track_length, int(rng.poisson(spec.mean_track_length)))
        size = np.clip(rng.normal(a.size_mean, a.size_std, n), 0.0, None)
        speed = np.clip(rng.normal(a.speed_mean, a.speed_std, n), 0.0, None)
        direction = np.mod(a.direction_mean + rng.normal(0.0, a.direction_std, n), TWO_PI)
        direction = np.minimum(direction, np.nextafter(TWO_PI, 0.0))
        x0, y0, x1, y1 = a.region
        start = rng.uniform((x0, y0), (x1, y1))
        steps = rng.normal(0.0, spec.position_step, (n, 2))
        steps[0] = 0.0
        raw = start + np.cumsum(steps, axis=0)
        position = np.column_stack(
            [_reflect(raw[:, 0], x0, x1), _reflect(raw[:, 1], y0, y1)]
        )
        tid = f"t{idx:0{width}d}"
        tracks.append(Track(tid, np.arange(n), size, speed, direction, position))
        arch_cols.append(np.full(n, ai, dtype=np.int64))
        label_cols.append(np.tile(class_ids[ai], (n, 1)))

    trackset = TrackSet(tracks)
    labels = GroundTruthLabels(trackset.track_ids, arch_cols, label_cols)
    return trackset, labels


def inject_glitches(
    trackset: TrackSet, rate: float, magnitude: float = 1.0, seed: int = 0
) -> TrackSet:
    """Perturb each observation independently with probability `rate`.

    A glitched observation has every feature replaced by a uniform draw
    over its valid range (observed min/max for size and speed, [0, 2*pi)
    for direction, [0, 1]^2 for position); `magnitude` blends between the
    original (0) and the uniform redraw (1). Deterministic given seed.
    """
    if not (0 <= rate <= 1):
        raise ValidationError(f"glitch rate {rate!r} outside [0, 1]")
    if not (0 <= magnitude <= 1):
        raise ValidationError(f"glitch magnitude {magnitude!r} outside [0, 1]")
    if rate == 0 or magnitude == 0 or len(trackset) == 0:
        return trackset

    rng = np.random.default_rng(seed)
    size_all = trackset.feature_values("size")
    speed_all = trackset.feature_values("speed")
    size_lo, size_hi = float(size_all.min()), float(size_all.max())
    speed_lo, speed_hi = float(speed_all.min()), float(speed_all.max())

    tracks = []
    for tr in trackset:
        n = len(tr)
        hit = rng.random(n) < rate
        u_size = rng.uniform(size_lo, size_hi, n)
        u_speed = rng.uniform(speed_lo, speed_hi, n)
        u_dir = rng.uniform(0.0, TWO_PI, n)
        u_pos = rng.uniform(0.0, 1.0, (n, 2))
        if not hit.any():
            tracks.append(tr)
            continue
        m = magnitude
        size = np.where(hit, (1 - m) * tr.size + m * u_size, tr.size)
        speed = np.where(hit, (1 - m) * tr.speed + m * u_speed, tr.speed)
        direction = np.where(hit, (1 - m) * tr.direction + m * u_dir, tr.direction)
        direction = np.minimum(direction, np.nextafter(TWO_PI, 0.0))
        position = np.where(hit[:, None], (1 - m) * tr.position + m * u_pos, tr.position)
        tracks.append(Track(tr.track_id, tr.t, size, speed, direction, position))
    return TrackSet(tracks)


def write_labels(labels: GroundTruthLabels, dest: IO[str]) -> None:
    dest.write(LABELS_HEADER + "\n")
    for tid in labels.track_ids:
        arch = labels.archetype(tid)
        lab = labels.labels(tid)
        for i in range(len(arch)):
            dest.write(
                f"{tid},{i},{arch[i]},{lab[i, 0]},{lab[i, 1]},{lab[i, 2]},{lab[i, 3]}\n"
            )


def parse_labels(source) -> GroundTruthLabels:
    from .tracks import _iter_lines

    order: list[str] = []
    rows: dict[str, list[tuple[int, ...]]] = {}
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 7:
            raise ParseError(f"expected 7 comma-separated fields, got {len(parts)}", lineno)
        try:
            nums = [int(p) for p in parts[1:]]
        except ValueError:
            raise ParseError("non-integer label field", lineno) from None
        tid = parts[0]
        if tid not in rows:
            order.append(tid)
            rows[tid] = []
        rows[tid].append(tuple(nums))
    archetypes = []
    label_arrays = []
    for tid in order:
        recs = sorted(rows[tid], key=lambda r: r[0])
        arr = np.array(recs, dtype=np.int64)
        archetypes.append(arr[:, 1])
        label_arrays.append(arr[:, 2:])
    return GroundTruthLabels(order, archetypes, label_arrays)


def demo_scene_spec(
    track_count: int = 120,
    mean_track_length: float = 150.0,
    seed: int = 7,
    frame_rate: int = 15,
) -> SceneSpec:
    """A road-with-pedestrians scene: 2 sizes, 3 speeds, 6 directions, 8 regions.

    Small slow objects walk along sidewalks while large fast ones drive the
    road; both occasionally loiter. Class parameters are far apart relative
    to their spreads, so the planted structure is recoverable.
    """
    sizes = {"ped": (0.15, 0.02), "veh": (0.75, 0.02)}
    speeds = {"stop": (0.03, 0.008), "walk": (0.25, 0.02), "drive": (0.80, 0.04)}
    d = [math.pi / 6.0 + k * math.pi / 3.0 for k in range(6)]
    dir_std = 0.05
    regions = [
        (0.05, 0.10, 0.20, 0.40),
        (0.28, 0.10, 0.43, 0.40),
        (0.51, 0.10, 0.66, 0.40),
        (0.74, 0.10, 0.89, 0.40),
        (0.05, 0.60, 0.20, 0.90),
        (0.28, 0.60, 0.43, 0.90),
        (0.51, 0.60, 0.66, 0.90),
        (0.74, 0.60, 0.89, 0.90),
    ]

    def arch(w, size_key, speed_key, di, pi, name):
        sm, ss = sizes[size_key]
        vm, vs = speeds[speed_key]
        return Archetype(
            weight=w,
            size_mean=sm, size_std=ss,
            speed_mean=vm, speed_std=vs,
            direction_mean=d[di], direction_std=dir_std,
            region=regions[pi],
            name=name,
        )

    archetypes = (
        arch(0.16, "ped", "walk", 0, 0, "ped-walk-ne"),
        arch(0.14, "ped", "walk", 1, 1, "ped-walk-n"),
        arch(0.12, "ped", "walk", 2, 2, "ped-walk-nw"),
        arch(0.08, "ped", "stop", 3, 3, "ped-loiter"),
        arch(0.16, "veh", "drive", 4, 4, "veh-drive-s"),
        arch(0.14, "veh", "drive", 5, 5, "veh-drive-se"),
        arch(0.12, "veh", "drive", 0, 6, "veh-drive-ne"),
        arch(0.08, "veh", "stop", 1, 7, "veh-stopped"),
    )
    return SceneSpec(
        archetypes=archetypes,
        track_count=track_count,
        mean_track_length=mean_track_length,
        seed=seed,
        frame_rate=frame_rate,
    )


def stop_query_scene_spec(
    track_count: int = 40,
    mean_track_length: float = 600.0,
    seed: int = 11,
    frame_rate: int = 15,
) -> SceneSpec:
    """A scene with exactly one stopped archetype, for duration queries.

    Tracks are long enough (~40 s at the default rate) that the stopped
    archetype's tracks contain stopped runs well past 30 s, while every
    other archetype moves for its whole track.
    """
    d = [math.pi / 6.0 + k * math.pi / 3.0 for k in range(6)]
    regions = [
        (0.05, 0.10, 0.25, 0.45),
        (0.40, 0.10, 0.60, 0.45),
        (0.75, 0.10, 0.95, 0.45),
        (0.40, 0.55, 0.60, 0.90),
    ]
    archetypes = (
        Archetype(0.35, 0.15, 0.02, 0.25, 0.02, d[0], 0.05, regions[0], "ped-walk"),
        Archetype(0.35, 0.75, 0.02, 0.80, 0.04, d[3], 0.05, regions[1], "veh-drive"),
        Archetype(0.15, 0.75, 0.02, 0.25, 0.02, d[1], 0.05, regions[2], "veh-slow"),
        Archetype(0.15, 0.15, 0.02, 0.03, 0.008, d[2], 0.05, regions[3], "ped-stopped"),
    )
    return SceneSpec(
        archetypes=archetypes,
        track_count=track_count,
        mean_track_length=mean_track_length,
        seed=seed,
        frame_rate=frame_rate,
    )
