"""Track data model: per-object observation time series and their file format.

A track is a time-ordered sequence of observation vectors (size, speed,
direction, 2D position) at integer frame indices. Tracks are stored
column-wise as numpy arrays and frozen after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import ParseError, ValidationError

FEATURES = ("size", "speed", "direction", "position")
TWO_PI = 2.0 * math.pi

TRACK_HEADER = "# track_id,t,size,speed,direction,pos_x,pos_y"


@dataclass(frozen=True)
class ObservationVector:
    """One observation of one object at one frame."""

    t: int
    size: float
    speed: float
    direction: float
    position: tuple[float, float]


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


class Track:
    """Time-ordered observations of a single tracked object.

    Observations are stored as columns; frame indices are strictly
    increasing. Instances are immutable (arrays are frozen).
    """

    __slots__ = ("track_id", "t", "size", "speed", "direction", "position")

    def __init__(self, track_id, t, size, speed, direction, position):
        self.track_id = str(track_id)
        self.t = _frozen(t, np.int64)
        self.size = _frozen(size, np.float64)
        self.speed = _frozen(speed, np.float64)
        self.direction = _frozen(direction, np.float64)
        self.position = _frozen(position, np.float64).reshape(-1, 2)
        self._validate()

    def _validate(self) -> None:
        n = len(self.t)
        for name in ("size", "speed", "direction"):
            if len(getattr(self, name)) != n:
                raise ValidationError(
                    f"track {self.track_id!r}: {name} has {len(getattr(self, name))} "
                    f"values, expected {n}"
                )
        if self.position.shape != (n, 2):
            raise ValidationError(
                f"track {self.track_id!r}: position shape {self.position.shape}, "
                f"expected ({n}, 2)"
            )
        if n == 0:
            raise ValidationError(f"track {self.track_id!r} has no observations")
        if np.any(np.diff(self.t) <= 0):
            raise ValidationError(
                f"track {self.track_id!r}: time indices not strictly increasing"
            )
        _check_ranges(self.track_id, self.size, self.speed, self.direction, self.position)

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Track):
            return NotImplemented
        return (
            self.track_id == other.track_id
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.size, other.size)
            and np.array_equal(self.speed, other.speed)
            and np.array_equal(self.direction, other.direction)
            and np.array_equal(self.position, other.position)
        )

    def __hash__(self):
        return hash((self.track_id, len(self.t)))

    def observation(self, index: int) -> ObservationVector:
        return ObservationVector(
            t=int(self.t[index]),
            size=float(self.size[index]),
            speed=float(self.speed[index]),
            direction=float(self.direction[index]),
            position=(float(self.position[index, 0]), float(self.position[index, 1])),
        )

    def feature_values(self, feature: str) -> np.ndarray:
        """Column for `feature`: shape (n,) for scalars, (n, 2) for position."""
        if feature not in FEATURES:
            raise ValidationError(f"unknown feature {feature!r}")
        return getattr(self, feature)


def _check_ranges(track_id, size, speed, direction, position) -> None:
    if np.any(size < 0):
        raise ValidationError(f"track {track_id!r}: size < 0")
    if np.any(speed < 0):
        raise ValidationError(f"track {track_id!r}: speed < 0")
    if np.any((direction < 0) | (direction >= TWO_PI)):
        raise ValidationError(f"track {track_id!r}: direction outside [0, 2*pi)")
    if np.any((position < 0) | (position > 1)):
        raise ValidationError(f"track {track_id!r}: position outside [0, 1]^2")


class TrackSet:
    """A collection of tracks with unique ids; the unit the pipeline ingests."""

    __slots__ = ("tracks", "feature_names", "_by_id")

    def __init__(self, tracks: Iterable[Track]):
        self.tracks = tuple(tracks)
        self.feature_names = FEATURES
        self._by_id = {tr.track_id: tr for tr in self.tracks}
        if len(self._by_id) != len(self.tracks):
            seen = set()
            for tr in self.tracks:
                if tr.track_id in seen:
                    raise ValidationError(f"duplicate track_id {tr.track_id!r}")
                seen.add(tr.track_id)

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self) -> Iterator[Track]:
        return iter(self.tracks)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrackSet):
            return NotImplemented
        return self.tracks == other.tracks

    def __hash__(self):
        return hash(tuple(tr.track_id for tr in self.tracks))

    def get(self, track_id: str) -> Track:
        return self._by_id[track_id]

    @property
    def track_ids(self) -> tuple[str, ...]:
        return tuple(tr.track_id for tr in self.tracks)

    def n_observations(self) -> int:
        return sum(len(tr) for tr in self.tracks)

    def feature_values(self, feature: str) -> np.ndarray:
        """All values of `feature` concatenated over tracks."""
        if not self.tracks:
            base = (0, 2) if feature == "position" else (0,)
            return np.zeros(base)
        return np.concatenate([tr.feature_values(feature) for tr in self.tracks])


_NUM_FIELDS = ("size", "speed", "direction", "pos_x", "pos_y")


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        yield from source.splitlines()
        return
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line.rstrip("\n")


def parse_track_records(source) -> TrackSet:
    """Parse line-delimited track records into a TrackSet.

    Each record is `track_id,t,size,speed,direction,pos_x,pos_y`; lines
    starting with '#' are comments and blank lines are skipped. Records may
    arrive in any order; they are grouped by track_id (first-appearance
    order) and sorted by t. Raises ParseError with the offending line number
    for malformed lines, duplicate (track_id, t) pairs, and out-of-range
    field values.
    """
    order: list[str] = []
    rows: dict[str, list[tuple]] = {}
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 7:
            raise ParseError(f"expected 7 comma-separated fields, got {len(parts)}", lineno)
        track_id = parts[0]
        if not track_id:
            raise ParseError("empty track_id", lineno)
        try:
            t = int(parts[1])
        except ValueError:
            raise ParseError(f"field 't': not an integer: {parts[1]!r}", lineno) from None
        values = []
        for name, tok in zip(_NUM_FIELDS, parts[2:]):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"field {name!r}: not a number: {tok!r}", lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"field {name!r}: not finite: {tok!r}", lineno)
            values.append(v)
        size, speed, direction, px, py = values
        if size < 0:
            raise ParseError(f"field 'size': {size!r} out of range (must be >= 0)", lineno)
        if speed < 0:
            raise ParseError(f"field 'speed': {speed!r} out of range (must be >= 0)", lineno)
        if not (0 <= direction < TWO_PI):
            raise ParseError(
                f"field 'direction': {direction!r} out of range [0, 2*pi)", lineno
            )
        for axis, v in (("pos_x", px), ("pos_y", py)):
            if not (0 <= v <= 1):
                raise ParseError(f"field {axis!r}: {v!r} out of range [0, 1]", lineno)
        if track_id not in rows:
            order.append(track_id)
            rows[track_id] = []
        rows[track_id].append((t, size, speed, direction, px, py, lineno))

    tracks = []
    for tid in order:
        recs = sorted(rows[tid], key=lambda r: r[0])
        for a, b in zip(recs, recs[1:]):
            if a[0] == b[0]:
                raise ParseError(f"duplicate (track_id, t) = ({tid!r}, {a[0]})", b[6])
        cols = list(zip(*recs))
        tracks.append(
            Track(
                tid,
                np.array(cols[0], dtype=np.int64),
                np.array(cols[1]),
                np.array(cols[2]),
                np.array(cols[3]),
                np.column_stack([cols[4], cols[5]]),
            )
        )
    return TrackSet(tracks)


def write_track_records(trackset: TrackSet, dest: IO[str]) -> None:
    """Write a TrackSet in the line format parse_track_records reads.

    Floats are written with repr so parse(write(ts)) round-trips exactly.
    """
    dest.write(TRACK_HEADER + "\n")
    for tr in trackset:
        for i in range(len(tr)):
            dest.write(
                f"{tr.track_id},{tr.t[i]},{float(tr.size[i])!r},{float(tr.speed[i])!r},"
                f"{float(tr.direction[i])!r},{float(tr.position[i, 0])!r},"
                f"{float(tr.position[i, 1])!r}\n"
            )


def normalize_min_max(trackset: TrackSet, feature: str) -> TrackSet:
    """Rescale one feature linearly so its observed min maps to 0 and max to 1.

    Position is rescaled per axis. Other features are left untouched.
    Raises ValidationError if the feature (or an axis) is constant or the
    TrackSet is empty.
    """
    if feature not in FEATURES:
        raise ValidationError(f"unknown feature {feature!r}")
    if len(trackset) == 0:
        raise ValidationError("cannot normalize an empty TrackSet")
    values = trackset.feature_values(feature)
    lo = values.min(axis=0)
    hi = values.max(axis=0)
    if feature == "position":
        for axis, name in enumerate(("pos_x", "pos_y")):
            if lo[axis] == hi[axis]:
                raise ValidationError(f"constant feature axis {name!r}: min == max")
    elif lo == hi:
        raise ValidationError(f"constant feature {feature!r}: min == max")
    span = hi - lo

    tracks = []
    for tr in trackset:
        cols = {
            "size": tr.size,
            "speed": tr.speed,
            "direction": tr.direction,
            "position": tr.position,
        }
        scaled = (cols[feature] - lo) / span
        # Guard the upper edge against float round-up past 1.0.
        if feature == "position":
            scaled = np.clip(scaled, 0.0, 1.0)
        else:
            scaled = np.clip(scaled, 0.0, None)
            if feature == "direction":
                scaled = np.minimum(scaled, np.nextafter(TWO_PI, 0.0))
        cols[feature] = scaled
        tracks.append(
            Track(tr.track_id, tr.t, cols["size"], cols["speed"], cols["direction"], cols["position"])
        )
    return TrackSet(tracks)
