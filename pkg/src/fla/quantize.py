"""Discretization of continuous observations into fixed symbol alphabets.

Scalar features use equal-width bins over the observed min/max; position
uses an independent uniform grid per axis with row-major cell ids. Bins
are half-open [lo, hi) with the last bin closed; out-of-range values clamp
to the edge bins, so quantization is total and monotone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tracks import FEATURES, TrackSet

SCALAR_FEATURES = ("size", "speed", "direction")
DEFAULT_BINS = {"size": 64, "speed": 64, "direction": 64, "position": (16, 16)}


@dataclass(frozen=True)
class BinSpec:
    """Binning of one feature: per-axis bounds and bin counts.

    Scalar features have one axis; position has two (x, y). The symbol id
    of a grid cell is `ix * counts[1] + iy` (row-major).
    """

    feature: str
    kind: str  # "uniform" | "grid"
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("uniform", "grid"):
            raise ValidationError(f"unknown bin kind {self.kind!r}")
        axes = 1 if self.kind == "uniform" else 2
        if not (len(self.lo) == len(self.hi) == len(self.counts) == axes):
            raise ValidationError(f"{self.kind} BinSpec needs {axes} axis/axes")
        for lo, hi, n in zip(self.lo, self.hi, self.counts):
            if n < 1:
                raise ValidationError("bin count must be >= 1")
            if not lo < hi:
                raise ValidationError(f"degenerate axis bounds [{lo!r}, {hi!r}]")

    @property
    def alphabet_size(self) -> int:
        return int(np.prod(self.counts))

    def _axis_index(self, values: np.ndarray, axis: int) -> np.ndarray:
        lo, hi, n = self.lo[axis], self.hi[axis], self.counts[axis]
        idx = np.floor((values - lo) * n / (hi - lo)).astype(np.int64)
        return np.clip(idx, 0, n - 1)

    def encode(self, values: np.ndarray) -> np.ndarray:
        """Map raw values to symbol ids; clamps out-of-range values."""
        values = np.asarray(values, dtype=np.float64)
        if self.kind == "uniform":
            return self._axis_index(values, 0)
        ix = self._axis_index(values[:, 0], 0)
        iy = self._axis_index(values[:, 1], 1)
        return ix * self.counts[1] + iy


def fit_uniform_bins(trackset: TrackSet, feature: str, bin_count: int) -> BinSpec:
    """Equal-width bins over the observed min/max of a scalar feature."""
    if feature not in SCALAR_FEATURES:
        raise ValidationError(f"feature {feature!r} is not scalar")
    if bin_count < 1:
        raise ValidationError("bin_count must be >= 1")
    if len(trackset) == 0:
        raise ValidationError("cannot fit bins on an empty TrackSet")
    values = trackset.feature_values(feature)
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise ValidationError(f"constant feature {feature!r}: min == max")
    return BinSpec(feature, "uniform", (lo,), (hi,), (int(bin_count),))


def fit_grid_bins(trackset: TrackSet, bins_x: int, bins_y: int) -> BinSpec:
    """Independent uniform partitions of the observed position bounding box."""
    if bins_x < 1 or bins_y < 1:
        raise ValidationError("grid bin counts must be >= 1")
    if len(trackset) == 0:
        raise ValidationError("cannot fit bins on an empty TrackSet")
    pos = trackset.feature_values("position")
    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    for axis, name in enumerate(("x", "y")):
        if lo[axis] == hi[axis]:
            raise ValidationError(f"degenerate position extent on axis {name}")
    return BinSpec(
        "position", "grid",
        (float(lo[0]), float(lo[1])),
        (float(hi[0]), float(hi[1])),
        (int(bins_x), int(bins_y)),
    )


@dataclass(frozen=True)
class QuantizerSet:
    """One BinSpec per feature, in pipeline feature order."""

    specs: tuple[BinSpec, ...]

    def __post_init__(self):
        names = tuple(s.feature for s in self.specs)
        if len(set(names)) != len(names):
            raise ValidationError("duplicate feature in QuantizerSet")
        for name in names:
            if name not in FEATURES:
                raise ValidationError(f"unknown feature {name!r}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(s.feature for s in self.specs)

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return tuple(s.alphabet_size for s in self.specs)

    def spec_for(self, feature: str) -> BinSpec:
        for s in self.specs:
            if s.feature == feature:
                return s
        raise ValidationError(f"no quantizer for feature {feature!r}")


def fit_quantizers(
    trackset: TrackSet,
    bins: dict | None = None,
    features: tuple[str, ...] = FEATURES,
) -> QuantizerSet:
    """Fit a QuantizerSet over `features` with per-feature bin counts.

    `bins` maps feature name to a count (scalars) or (bins_x, bins_y)
    (position); missing entries use the defaults 64/64/64/16x16.
    """
    bins = {**DEFAULT_BINS, **(bins or {})}
    specs = []
    for feature in features:
        if feature == "position":
            bx, by = bins["position"]
            specs.append(fit_grid_bins(trackset, bx, by))
        else:
            specs.append(fit_uniform_bins(trackset, feature, bins[feature]))
    return QuantizerSet(tuple(specs))


class SymbolSequences:
    """Per-track symbol tuples: one (n_frames, n_features) int array each."""

    __slots__ = ("track_ids", "symbols", "feature_names", "alphabet_sizes")

    def __init__(self, track_ids, symbols, feature_names, alphabet_sizes):
        self.track_ids = tuple(track_ids)
        self.symbols = tuple(np.asarray(s, dtype=np.int64) for s in symbols)
        self.feature_names = tuple(feature_names)
        self.alphabet_sizes = tuple(int(a) for a in alphabet_sizes)
        k = len(self.feature_names)
        for tid, arr in zip(self.track_ids, self.symbols):
            if arr.ndim != 2 or arr.shape[1] != k:
                raise ValidationError(f"symbols for track {tid!r}: expected (n, {k}) array")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def for_track(self, track_id: str) -> np.ndarray:
        return self.symbols[self.track_ids.index(track_id)]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def quantize(trackset: TrackSet, quantizers: QuantizerSet) -> SymbolSequences:
    """Quantize every observation of every track to a symbol tuple."""
    symbols = []
    for tr in trackset:
        cols = [q.encode(tr.feature_values(q.feature)) for q in quantizers.specs]
        symbols.append(np.column_stack(cols) if cols else np.zeros((len(tr), 0), np.int64))
    return SymbolSequences(
        trackset.track_ids, symbols, quantizers.feature_names, quantizers.alphabet_sizes
    )
