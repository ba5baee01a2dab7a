"""Windowed pairwise co-occurrence statistics over symbol sequences.

Each window contributes, for every unordered feature pair (i <= j), the
outer product of its Gaussian-weighted symbol frequency vectors: the
probability of drawing two observations independently from the window.
Window tables are accumulated online with per-window weights; the running
table plus the weight total are sufficient, so accumulators can be merged
(shard-and-merge equals a single pass up to float summation order).

Only the K(K+1)/2 unordered tables are stored; ordered views are
transpositions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

WEIGHT_RULES = ("uniform", "redundancy")


@dataclass(frozen=True)
class WindowSpec:
    """Temporal coherence window: half-width, Gaussian mask, stride, weights.

    The mask is m(dt) = exp(-dt^2 / (2 sigma^2)) for dt in [-W, W]. The
    "redundancy" weight rule down-weights a window by the length of the
    current run of windows sharing its modal symbol tuple (a stopped object
    stops dominating the statistics); "uniform" gives every window weight 1.
    """

    half_width: int
    sigma: float
    stride: int = 1
    weight_rule: str = "uniform"

    def __post_init__(self):
        if self.half_width < 0:
            raise ValidationError("window half_width must be >= 0")
        if self.sigma <= 0:
            raise ValidationError("window sigma must be > 0")
        if self.stride < 1:
            raise ValidationError("window stride must be >= 1")
        if self.weight_rule not in WEIGHT_RULES:
            raise ValidationError(f"unknown weight rule {self.weight_rule!r}")

    @classmethod
    def from_seconds(
        cls,
        seconds: float = 1.0,
        frame_rate: int = 15,
        stride: int = 1,
        weight_rule: str = "uniform",
    ) -> "WindowSpec":
        """Window with `seconds` of total support at a given frame rate.

        Half-width is floor(seconds * rate / 2); sigma defaults to half the
        half-width so the mask decays to ~0.14 at the window edge.
        """
        if seconds <= 0:
            raise ValidationError("window duration must be > 0")
        w = int(seconds * frame_rate / 2.0)
        sigma = max(w, 1) / 2.0
        return cls(half_width=w, sigma=sigma, stride=stride, weight_rule=weight_rule)

    def mask(self, dts: np.ndarray) -> np.ndarray:
        dts = np.asarray(dts, dtype=np.float64)
        return np.exp(-0.5 * (dts / self.sigma) ** 2)


def window_positions(track_length: int, spec: WindowSpec) -> np.ndarray:
    """Window center frames: every stride-th frame from 0."""
    if track_length < 1:
        raise ValidationError("track_length must be >= 1")
    return np.arange(0, track_length, spec.stride)


def _window_freqs(symbols: np.ndarray, mask: np.ndarray, alphabet_sizes) -> list[np.ndarray]:
    """Per-feature weighted symbol frequencies, each normalized to sum 1."""
    total = mask.sum()
    return [
        np.bincount(symbols[:, i], weights=mask, minlength=alphabet_sizes[i]) / total
        for i in range(symbols.shape[1])
    ]


def window_joint(
    symbols: np.ndarray, mask: np.ndarray, alphabet_sizes: tuple[int, ...]
) -> dict[tuple[int, int], np.ndarray]:
    """Single-window joint tables for all unordered pairs (i <= j).

    Table (i, j) is the outer product of the window's weighted frequency
    vectors for features i and j; each table sums to 1.
    """
    symbols = np.asarray(symbols)
    if symbols.ndim != 2 or symbols.shape[0] == 0:
        raise ValidationError("window symbols must be a nonempty (n, K) array")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (symbols.shape[0],):
        raise ValidationError("mask length must match window length")
    freqs = _window_freqs(symbols, mask, alphabet_sizes)
    k = symbols.shape[1]
    return {
        (i, j): np.outer(freqs[i], freqs[j]) for i in range(k) for j in range(i, k)
    }


class CooccurrenceAccumulator:
    """Online accumulator of weighted window joints; single writer.

    Holds one table per unordered feature pair plus the accumulated window
    weight and window count. Parallelize by sharding tracks across
    accumulators and merging.
    """

    def __init__(self, alphabet_sizes: tuple[int, ...], spec: WindowSpec,
                 feature_names: tuple[str, ...] | None = None):
        if not alphabet_sizes:
            raise ValidationError("need at least one feature alphabet")
        self.alphabet_sizes = tuple(int(a) for a in alphabet_sizes)
        self.feature_names = (
            tuple(feature_names) if feature_names is not None
            else tuple(f"f{i}" for i in range(len(self.alphabet_sizes)))
        )
        if len(self.feature_names) != len(self.alphabet_sizes):
            raise ValidationError("feature_names / alphabet_sizes length mismatch")
        self.spec = spec
        k = len(self.alphabet_sizes)
        self.tables = {
            (i, j): np.zeros((self.alphabet_sizes[i], self.alphabet_sizes[j]))
            for i in range(k) for j in range(i, k)
        }
        self.total_weight = 0.0
        self.window_count = 0
        self._run_modal: tuple[int, ...] | None = None
        self._run_length = 0

    @property
    def n_features(self) -> int:
        return len(self.alphabet_sizes)

    def reset_run_state(self) -> None:
        """Forget the modal-tuple run; call at each track boundary."""
        self._run_modal = None
        self._run_length = 0

    def _window_weight(self, freqs: list[np.ndarray]) -> float:
        if self.spec.weight_rule == "uniform":
            return 1.0
        modal = tuple(int(np.argmax(f)) for f in freqs)
        if modal == self._run_modal:
            self._run_length += 1
        else:
            self._run_modal = modal
            self._run_length = 1
        return 1.0 / self._run_length

    def add_window(self, symbols: np.ndarray, dts: np.ndarray) -> None:
        """Accumulate one window given its symbols and frame offsets dt."""
        symbols = np.asarray(symbols)
        if symbols.ndim != 2 or symbols.shape[1] != self.n_features or symbols.shape[0] == 0:
            raise ValidationError(
                f"window symbols must be nonempty (n, {self.n_features}), got {symbols.shape}"
            )
        for i, a in enumerate(self.alphabet_sizes):
            col = symbols[:, i]
            if col.min(initial=0) < 0 or col.max(initial=0) >= a:
                raise ValidationError(
                    f"symbol out of range for feature {self.feature_names[i]!r} "
                    f"(alphabet size {a})"
                )
        mask = self.spec.mask(dts)
        freqs = _window_freqs(symbols, mask, self.alphabet_sizes)
        w = self._window_weight(freqs)
        support = [np.nonzero(f)[0] for f in freqs]
        for (i, j), table in self.tables.items():
            si, sj = support[i], support[j]
            table[np.ix_(si, sj)] += w * np.outer(freqs[i][si], freqs[j][sj])
        self.total_weight += w
        self.window_count += 1

    def add_track(self, symbols: np.ndarray) -> None:
        """Accumulate every window of one track; windows never cross tracks."""
        symbols = np.asarray(symbols)
        n = symbols.shape[0]
        self.reset_run_state()
        w = self.spec.half_width
        for c in window_positions(n, self.spec):
            lo = max(0, c - w)
            hi = min(n, c + w + 1)
            self.add_window(symbols[lo:hi], np.arange(lo, hi) - c)
        self.reset_run_state()

    def add_frequency_vectors(self, freqs: list[np.ndarray], weight: float = 1.0) -> None:
        """Accumulate one window given precomputed per-feature frequencies."""
        for i, f in enumerate(freqs):
            if f.shape != (self.alphabet_sizes[i],):
                raise ValidationError("frequency vector shape mismatch")
        for (i, j), table in self.tables.items():
            table += weight * np.outer(freqs[i], freqs[j])
        self.total_weight += weight
        self.window_count += 1

    def copy(self) -> "CooccurrenceAccumulator":
        out = CooccurrenceAccumulator(self.alphabet_sizes, self.spec, self.feature_names)
        for key, table in self.tables.items():
            out.tables[key] = table.copy()
        out.total_weight = self.total_weight
        out.window_count = self.window_count
        return out


def merge(a: CooccurrenceAccumulator, b: CooccurrenceAccumulator) -> CooccurrenceAccumulator:
    """Cellwise sum of two compatible accumulators (associative, commutative)."""
    if a.alphabet_sizes != b.alphabet_sizes or a.feature_names != b.feature_names:
        raise ValidationError("cannot merge accumulators with different alphabets")
    if a.spec != b.spec:
        raise ValidationError("cannot merge accumulators with different window specs")
    out = a.copy()
    for key in out.tables:
        out.tables[key] = out.tables[key] + b.tables[key]
    out.total_weight += b.total_weight
    out.window_count += b.window_count
    out.reset_run_state()
    return out


class PairwiseJointSet:
    """Normalized empirical joints p(x_i, x_j) for every feature pair.

    Stores the unordered (i <= j) tables; the ordered (j, i) view is the
    exact transpose. Immutable.
    """

    __slots__ = ("alphabet_sizes", "feature_names", "total_weight", "window_count", "_tables")

    def __init__(self, tables, alphabet_sizes, feature_names=None,
                 total_weight=1.0, window_count=0):
        self.alphabet_sizes = tuple(int(a) for a in alphabet_sizes)
        k = len(self.alphabet_sizes)
        self.feature_names = (
            tuple(feature_names) if feature_names is not None
            else tuple(f"f{i}" for i in range(k))
        )
        self.total_weight = float(total_weight)
        self.window_count = int(window_count)
        self._tables = {}
        for i in range(k):
            for j in range(i, k):
                t = np.asarray(tables[(i, j)], dtype=np.float64)
                if t.shape != (self.alphabet_sizes[i], self.alphabet_sizes[j]):
                    raise ValidationError(f"table ({i},{j}) has shape {t.shape}")
                if np.any(t < 0):
                    raise ValidationError(f"table ({i},{j}) has negative cells")
                if abs(t.sum() - 1.0) > 1e-9:
                    raise ValidationError(f"table ({i},{j}) sums to {t.sum()!r}, not 1")
                if i == j and not np.array_equal(t, t.T):
                    raise ValidationError(f"diagonal table ({i},{i}) is not symmetric")
                t = t.copy()
                t.setflags(write=False)
                self._tables[(i, j)] = t

    @property
    def n_features(self) -> int:
        return len(self.alphabet_sizes)

    def n_stored_tables(self) -> int:
        return len(self._tables)

    def table(self, i: int, j: int) -> np.ndarray:
        """Ordered joint p(x_i, x_j); transpose of the stored table if i > j."""
        if i <= j:
            return self._tables[(i, j)]
        return self._tables[(j, i)].T

    def pairs(self):
        """Unordered stored pairs, (i, j) with i <= j."""
        return self._tables.keys()

    def marginal(self, i: int) -> np.ndarray:
        """Empirical marginal of feature i (row sums of any table with i first)."""
        j = 0 if i > 0 else min(1, self.n_features - 1)
        return self.table(i, j).sum(axis=1) if self.n_features > 1 else self.table(i, i).sum(axis=1)


def finalize(acc: CooccurrenceAccumulator) -> PairwiseJointSet:
    """Normalize an accumulator by its total window weight."""
    if acc.total_weight <= 0:
        raise ValidationError("cannot finalize an empty accumulator")
    tables = {key: table / acc.total_weight for key, table in acc.tables.items()}
    return PairwiseJointSet(
        tables, acc.alphabet_sizes, acc.feature_names, acc.total_weight, acc.window_count
    )


def accumulate_symbol_sequences(
    seqs, spec: WindowSpec, shards: int = 1
) -> CooccurrenceAccumulator:
    """Accumulate all tracks of a SymbolSequences, optionally in shards."""
    if shards < 1:
        raise ValidationError("shards must be >= 1")
    accs = [
        CooccurrenceAccumulator(seqs.alphabet_sizes, spec, seqs.feature_names)
        for _ in range(shards)
    ]
    for idx, symbols in enumerate(seqs):
        if symbols.shape[0] == 0:
            continue
        accs[idx % shards].add_track(symbols)
    out = accs[0]
    for other in accs[1:]:
        out = merge(out, other)
    return out
