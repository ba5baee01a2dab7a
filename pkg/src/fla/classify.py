"""Per-frame latent classification, temporal smoothing, and segmentation.

Each frame gets one posterior per feature from Bayes' rule over that
feature's conditionals; posteriors are then smoothed by a Gaussian-weighted
average over the temporal coherence window, which suppresses single-frame
tracking glitches. Argmax labels are cut into maximal constant-label runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .cooccur import WindowSpec
from .em import FlaModel, type_marginals
from .errors import ParseError, ValidationError
from .quantize import SymbolSequences


class PosteriorSequence:
    """Per track, per frame, per feature: a distribution over latent classes."""

    __slots__ = ("track_ids", "posteriors", "class_counts", "feature_names")

    def __init__(self, track_ids, posteriors, class_counts, feature_names):
        self.track_ids = tuple(track_ids)
        self.posteriors = tuple(
            tuple(np.asarray(p, dtype=np.float64) for p in per_track)
            for per_track in posteriors
        )
        self.class_counts = tuple(int(k) for k in class_counts)
        self.feature_names = tuple(feature_names)
        for tid, per_track in zip(self.track_ids, self.posteriors):
            if len(per_track) != len(self.class_counts):
                raise ValidationError(f"track {tid!r}: wrong feature count")

    def for_track(self, track_id: str) -> tuple[np.ndarray, ...]:
        return self.posteriors[self.track_ids.index(track_id)]

    def __len__(self) -> int:
        return len(self.track_ids)


def instantaneous_posteriors(model: FlaModel, seqs: SymbolSequences) -> PosteriorSequence:
    """Independent per-frame Bayes posteriors p(l_i | x_i) per feature.

    The prior is the model's averaged type marginal; rows renormalize, so
    any strictly positive rescaling of a conditional column cancels.
    """
    if model.alphabet_sizes != seqs.alphabet_sizes:
        raise ValidationError("model and symbols have different alphabets")
    priors = type_marginals(model)
    # p(l | x = a) ∝ p(l) p(a | l): one (S_i, k_i) lookup table per feature.
    lookups = []
    for i in range(model.n_features):
        scores = model.conditionals[i].T * priors[i][None, :]
        totals = scores.sum(axis=1, keepdims=True)
        degenerate = totals[:, 0] <= 0
        if np.any(degenerate):
            scores[degenerate] = 1.0 / model.class_counts[i]
            totals = scores.sum(axis=1, keepdims=True)
        lookups.append(scores / totals)
    posteriors = [
        tuple(lookups[i][symbols[:, i]] for i in range(model.n_features))
        for symbols in seqs
    ]
    return PosteriorSequence(seqs.track_ids, posteriors, model.class_counts, seqs.feature_names)


def smooth_posteriors(ps: PosteriorSequence, spec: WindowSpec) -> PosteriorSequence:
    """Gaussian-weighted average of posteriors over the coherence window.

    Windows truncate at track ends and never span tracks; each smoothed
    frame renormalizes, so truncation costs no mass.
    """
    w = spec.half_width
    if w == 0:
        return ps
    mask = spec.mask(np.arange(-w, w + 1))
    smoothed = []
    for per_track in ps.posteriors:
        out_track = []
        for post in per_track:
            n, k = post.shape
            acc = np.empty_like(post)
            for c in range(k):
                # full convolution sliced to the track: windows truncate at
                # the ends and work for tracks shorter than the mask.
                acc[:, c] = np.convolve(post[:, c], mask, mode="full")[w : w + n]
            acc /= acc.sum(axis=1, keepdims=True)
            out_track.append(acc)
        smoothed.append(tuple(out_track))
    return PosteriorSequence(ps.track_ids, smoothed, ps.class_counts, ps.feature_names)


def argmax_labels(ps: PosteriorSequence) -> list[np.ndarray]:
    """Per-track (n_frames, n_features) argmax class ids; ties take the lower id."""
    out = []
    for per_track in ps.posteriors:
        cols = [np.argmax(post, axis=1) for post in per_track]
        out.append(np.column_stack(cols).astype(np.int64))
    return out


@dataclass(frozen=True)
class Segment:
    """A maximal run of frames in one track with a constant label tuple."""

    track_id: str
    start: int  # first frame index of the run (inclusive)
    end: int  # last frame index of the run (inclusive)
    labels: tuple[int, ...]
    confidence: tuple[float, ...]  # mean posterior of the chosen class per feature

    def __post_init__(self):
        if self.start > self.end:
            raise ValidationError("segment start after end")

    @property
    def n_frames(self) -> int:
        return self.end - self.start + 1

    def duration_seconds(self, frame_rate: int) -> float:
        return self.n_frames / frame_rate


class SegmentSet:
    """All segments of a classified TrackSet, grouped per track."""

    __slots__ = ("track_ids", "_by_track", "feature_names")

    def __init__(self, track_ids, segments_per_track, feature_names):
        self.track_ids = tuple(track_ids)
        self.feature_names = tuple(feature_names)
        self._by_track = {
            tid: tuple(segs) for tid, segs in zip(self.track_ids, segments_per_track)
        }
        for tid, segs in self._by_track.items():
            for a, b in zip(segs, segs[1:]):
                if a.labels == b.labels:
                    raise ValidationError(
                        f"track {tid!r}: adjacent segments share a label tuple"
                    )
                if a.end >= b.start:
                    raise ValidationError(f"track {tid!r}: segments overlap")

    def for_track(self, track_id: str) -> tuple[Segment, ...]:
        return self._by_track[track_id]

    def all_segments(self) -> list[Segment]:
        return [s for tid in self.track_ids for s in self._by_track[tid]]

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_track.values())


def build_segments(
    track_ids: Iterable[str],
    label_seqs: Iterable[np.ndarray],
    posteriors: PosteriorSequence | None = None,
    frame_indices: Iterable[np.ndarray] | None = None,
    feature_names: tuple[str, ...] = (),
) -> SegmentSet:
    """Cut per-frame label tuples into maximal constant runs.

    Concatenating the runs reproduces the label sequences exactly. Segment
    bounds use the tracks' own frame indices when `frame_indices` is given,
    else 0-based positions. Confidences are mean posteriors over the run
    when `posteriors` is given, else 1.0.
    """
    track_ids = tuple(track_ids)
    label_seqs = list(label_seqs)
    frames = list(frame_indices) if frame_indices is not None else [
        np.arange(len(l)) for l in label_seqs
    ]
    per_track = []
    for idx, (tid, labels) in enumerate(zip(track_ids, label_seqs)):
        labels = np.asarray(labels)
        n = labels.shape[0]
        segs = []
        if n:
            changes = np.any(labels[1:] != labels[:-1], axis=1)
            starts = np.concatenate([[0], np.nonzero(changes)[0] + 1])
            ends = np.concatenate([starts[1:] - 1, [n - 1]])
            for s, e in zip(starts, ends):
                tup = tuple(int(v) for v in labels[s])
                if posteriors is not None:
                    per_feature = posteriors.posteriors[idx]
                    conf = tuple(
                        float(per_feature[f][s : e + 1, tup[f]].mean())
                        for f in range(labels.shape[1])
                    )
                else:
                    conf = tuple(1.0 for _ in tup)
                segs.append(
                    Segment(tid, int(frames[idx][s]), int(frames[idx][e]), tup, conf)
                )
        per_track.append(segs)
    if not feature_names and label_seqs:
        feature_names = tuple(f"f{i}" for i in range(label_seqs[0].shape[1]))
    return SegmentSet(track_ids, per_track, feature_names)


def expand_segments(segset: SegmentSet, track_id: str) -> np.ndarray:
    """Reconstruct the per-frame label array of one track from its segments."""
    segs = segset.for_track(track_id)
    if not segs:
        return np.zeros((0, len(segset.feature_names)), dtype=np.int64)
    rows = []
    for s in segs:
        rows.append(np.tile(np.asarray(s.labels, dtype=np.int64), (s.n_frames, 1)))
    return np.concatenate(rows, axis=0)


SEGMENTS_HEADER = "# track_id,start_t,end_t,l_size,l_speed,l_direction,l_position"


def write_segments(segset: SegmentSet, dest: IO[str]) -> None:
    header = "# track_id,start_t,end_t," + ",".join(f"l_{f}" for f in segset.feature_names)
    dest.write(header + "\n")
    for seg in segset.all_segments():
        labels = ",".join(str(v) for v in seg.labels)
        dest.write(f"{seg.track_id},{seg.start},{seg.end},{labels}\n")


def parse_segments(source, feature_names: tuple[str, ...] | None = None) -> SegmentSet:
    from .tracks import _iter_lines

    order: list[str] = []
    rows: dict[str, list[Segment]] = {}
    n_features = len(feature_names) if feature_names else None
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if line.startswith("#"):
            if feature_names is None and line.count(",") >= 3:
                cols = [c.strip() for c in line.lstrip("# ").split(",")]
                if cols[:3] == ["track_id", "start_t", "end_t"]:
                    feature_names = tuple(c[2:] for c in cols[3:])
                    n_features = len(feature_names)
            continue
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if n_features is None:
            n_features = len(parts) - 3
        if len(parts) != 3 + n_features or n_features < 1:
            raise ParseError(f"expected {3 + (n_features or 1)} fields", lineno)
        tid = parts[0]
        try:
            start, end = int(parts[1]), int(parts[2])
            labels = tuple(int(p) for p in parts[3:])
        except ValueError:
            raise ParseError("non-integer segment field", lineno) from None
        if tid not in rows:
            order.append(tid)
            rows[tid] = []
        rows[tid].append(Segment(tid, start, end, labels, tuple(1.0 for _ in labels)))
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(n_features or 0))
    per_track = [sorted(rows[t], key=lambda s: s.start) for t in order]
    return SegmentSet(order, per_track, feature_names)
