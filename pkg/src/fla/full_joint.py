"""Exact EM over complete latent tuples, for desk-scale validation.

Instead of pairwise mixing tables this model keeps the dense joint prior
over all class-tuple combinations, so its cost scales with the product of
the class counts. It consumes the same weighted per-window symbol
frequency vectors the co-occurrence accumulator sees, which makes its
induced pairwise joints directly comparable with the pairwise estimator
on identical inputs. A hard cap keeps it at test scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .cooccur import CooccurrenceAccumulator, PairwiseJointSet, WindowSpec, window_positions, _window_freqs
from .em import DEFAULT_TOLERANCE, FitConfig, FlaModel
from .errors import CapacityError, ValidationError
from .quantize import SymbolSequences

DEFAULT_TUPLE_CAP = 10_000


def enumerate_tuple_count(class_counts: tuple[int, ...]) -> int:
    """Number of latent class tuples: the product of the per-feature counts."""
    if not class_counts:
        raise ValidationError("need at least one class count")
    total = 1
    for k in class_counts:
        if k < 1:
            raise ValidationError("class counts must be >= 1")
        total *= int(k)
        if total > 2**62:
            raise CapacityError("latent tuple count overflows a 64-bit index")
    return total


class WindowSampleSet:
    """Weighted per-window symbol frequency vectors, one per feature.

    `freqs[i]` has shape (n_windows, S_i) with rows summing to 1; `weights`
    carries the per-window weight w(n); `draw_counts` is each window's
    total mask weight, i.e. how many effective independent draws per
    feature the window contributes (the weighted count of symbol a in
    window n is `draw_counts[n] * freqs[i][n, a]`).
    """

    __slots__ = ("feature_names", "alphabet_sizes", "freqs", "weights", "draw_counts")

    def __init__(self, freqs, weights, draw_counts=None, feature_names=None):
        self.freqs = tuple(np.asarray(f, dtype=np.float64) for f in freqs)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.alphabet_sizes = tuple(f.shape[1] for f in self.freqs)
        k = len(self.freqs)
        self.feature_names = (
            tuple(feature_names) if feature_names is not None
            else tuple(f"f{i}" for i in range(k))
        )
        n = self.weights.shape[0]
        self.draw_counts = (
            np.ones(n) if draw_counts is None
            else np.asarray(draw_counts, dtype=np.float64)
        )
        if self.draw_counts.shape != (n,):
            raise ValidationError("draw_counts length must match window count")
        for f in self.freqs:
            if f.shape[0] != n:
                raise ValidationError("frequency arrays disagree on window count")
            if np.any(f < 0) or np.any(np.abs(f.sum(axis=1) - 1.0) > 1e-9):
                raise ValidationError("window frequency rows must be distributions")
        if np.any(self.weights <= 0) or np.any(self.draw_counts <= 0):
            raise ValidationError("window weights and draw counts must be > 0")

    @property
    def n_windows(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_features(self) -> int:
        return len(self.freqs)


def collect_window_samples(seqs: SymbolSequences, spec: WindowSpec) -> WindowSampleSet:
    """Extract the per-window weighted frequency vectors the accumulator uses."""
    per_feature = [[] for _ in seqs.alphabet_sizes]
    weights = []
    draw_counts = []
    scratch = CooccurrenceAccumulator(seqs.alphabet_sizes, spec, seqs.feature_names)
    for symbols in seqs:
        n = symbols.shape[0]
        if n == 0:
            continue
        scratch.reset_run_state()
        w = spec.half_width
        for c in window_positions(n, spec):
            lo, hi = max(0, c - w), min(n, c + w + 1)
            mask = spec.mask(np.arange(lo, hi) - c)
            freqs = _window_freqs(symbols[lo:hi], mask, seqs.alphabet_sizes)
            weights.append(scratch._window_weight(freqs))
            draw_counts.append(float(mask.sum()))
            for i, f in enumerate(freqs):
                per_feature[i].append(f)
    if not weights:
        raise ValidationError("no windows: all tracks are empty")
    return WindowSampleSet(
        [np.vstack(rows) for rows in per_feature],
        np.array(weights),
        np.array(draw_counts),
        seqs.feature_names,
    )


def pairwise_from_samples(samples: WindowSampleSet) -> PairwiseJointSet:
    """Accumulate and normalize pairwise joints from the same windows."""
    acc = CooccurrenceAccumulator(
        samples.alphabet_sizes,
        WindowSpec(half_width=0, sigma=1.0),
        samples.feature_names,
    )
    for n in range(samples.n_windows):
        acc.add_frequency_vectors(
            [f[n] for f in samples.freqs], float(samples.weights[n])
        )
    from .cooccur import finalize

    return finalize(acc)


class FullJointModel:
    """Dense tuple prior over all class combinations plus conditionals."""

    __slots__ = ("class_counts", "prior", "conditionals", "feature_names", "alphabet_sizes")

    def __init__(self, class_counts, prior, conditionals, feature_names=None):
        self.class_counts = tuple(int(k) for k in class_counts)
        self.prior = np.asarray(prior, dtype=np.float64)
        if self.prior.shape != self.class_counts:
            raise ValidationError(
                f"tuple prior shape {self.prior.shape} != class counts {self.class_counts}"
            )
        if abs(self.prior.sum() - 1.0) > 1e-9 or np.any(self.prior < 0):
            raise ValidationError("tuple prior must be a distribution")
        self.conditionals = tuple(np.asarray(c, dtype=np.float64) for c in conditionals)
        self.alphabet_sizes = tuple(c.shape[1] for c in self.conditionals)
        k = len(self.class_counts)
        self.feature_names = (
            tuple(feature_names) if feature_names is not None
            else tuple(f"f{i}" for i in range(k))
        )
        for i, c in enumerate(self.conditionals):
            if c.shape[0] != self.class_counts[i]:
                raise ValidationError(f"conditional {i} has {c.shape[0]} rows")

    @property
    def n_features(self) -> int:
        return len(self.class_counts)

    def pair_prior(self, i: int, j: int) -> np.ndarray:
        """Latent pair distribution implied by the tuple prior.

        For i == j both draws in a window share one class, so the pair
        table is diagonal with the single-feature marginal on the diagonal.
        """
        axes_other = tuple(a for a in range(self.n_features) if a not in (i, j))
        if i == j:
            marg = self.prior.sum(axis=axes_other) if axes_other else self.prior
            return np.diag(marg)
        marg = self.prior.sum(axis=axes_other) if axes_other else self.prior
        return marg if i < j else marg.T


@dataclass(frozen=True)
class FullJointTrace:
    """Weighted mean log-likelihood per iteration; non-decreasing."""

    log_likelihoods: tuple[float, ...]
    iterations: int
    converged: bool


def _window_log_scores(model: FullJointModel, samples: WindowSampleSet) -> np.ndarray:
    """(n_windows, *class_counts) log-likelihood of each window per tuple.

    A window is a set of weighted independent draws per feature, so its
    log-likelihood under a tuple is the weighted symbol count times the
    log conditional, summed over features.
    """
    n = samples.n_windows
    k = model.n_features
    total = np.zeros((n,) + model.class_counts)
    for i in range(k):
        with np.errstate(divide="ignore"):
            logc = np.log(model.conditionals[i])
        counts = samples.freqs[i] * samples.draw_counts[:, None]
        scores = counts @ logc.T  # (n, k_i)
        shape = (n,) + tuple(model.class_counts[i] if a == i else 1 for a in range(k))
        total += scores.reshape(shape)
    return total


def log_likelihood(model: FullJointModel, samples: WindowSampleSet) -> float:
    """Weighted mean per-window log-likelihood under the tuple model."""
    scores = _window_log_scores(model, samples)
    with np.errstate(divide="ignore"):
        log_prior = np.log(model.prior)
    flat = (scores + log_prior[None]).reshape(samples.n_windows, -1)
    per_window = logsumexp(flat, axis=1)
    return float(np.dot(samples.weights, per_window) / samples.weights.sum())


def fit_full_joint(
    samples: WindowSampleSet,
    class_counts: tuple[int, ...],
    config: FitConfig = FitConfig(),
    tuple_cap: int = DEFAULT_TUPLE_CAP,
) -> tuple[FullJointModel, FullJointTrace]:
    """EM over complete latent tuples on weighted window frequency vectors.

    The E-step evaluates the posterior over all tuple combinations for
    every window (each window is a set of weighted independent draws); the
    M-step reestimates the dense tuple prior and the shared conditionals.
    Refuses to run past `tuple_cap` combinations.
    """
    n_tuples = enumerate_tuple_count(class_counts)
    if n_tuples > tuple_cap:
        raise CapacityError(
            f"{n_tuples} latent tuples exceed the cap of {tuple_cap}; "
            f"reduce the class counts"
        )
    if len(class_counts) != samples.n_features:
        raise ValidationError("class_counts / samples feature count mismatch")
    for k, s in zip(class_counts, samples.alphabet_sizes):
        if k > s:
            raise ValidationError(f"class count {k} exceeds alphabet size {s}")

    rng = np.random.default_rng(config.seed)
    if config.init == "anchors":
        from .em import init_anchors

        seeded = init_anchors(pairwise_from_samples(samples), class_counts, config.seed)
        conditionals = [c.copy() for c in seeded.conditionals]
    else:
        conditionals = []
        for k, s in zip(class_counts, samples.alphabet_sizes):
            rows = 1.0 + 0.01 * rng.uniform(-1.0, 1.0, size=(k, s))
            conditionals.append(rows / rows.sum(axis=1, keepdims=True))
    prior = 1.0 + 0.01 * rng.uniform(-1.0, 1.0, size=class_counts)
    prior /= prior.sum()
    model = FullJointModel(class_counts, prior, conditionals, samples.feature_names)

    w = samples.weights
    w_total = w.sum()
    lls = [log_likelihood(model, samples)]
    converged = False
    iterations = 0
    k = len(class_counts)
    for _ in range(config.max_iterations):
        scores = _window_log_scores(model, samples)
        with np.errstate(divide="ignore"):
            log_post = scores + np.log(model.prior)[None]
        flat = log_post.reshape(samples.n_windows, -1)
        norm = logsumexp(flat, axis=1)
        post = np.exp(flat - norm[:, None]).reshape(scores.shape)

        weighted = post * w.reshape((-1,) + (1,) * k)
        new_prior = weighted.sum(axis=0) + config.epsilon
        new_prior /= new_prior.sum()
        new_conditionals = []
        for i in range(k):
            axes = tuple(a + 1 for a in range(k) if a != i)
            resp_i = weighted.sum(axis=axes) if axes else weighted  # (n, k_i)
            draw_freqs = samples.freqs[i] * samples.draw_counts[:, None]
            counts = resp_i.T @ draw_freqs + config.epsilon
            new_conditionals.append(counts / counts.sum(axis=1, keepdims=True))
        model = FullJointModel(class_counts, new_prior, new_conditionals, samples.feature_names)

        iterations += 1
        ll = log_likelihood(model, samples)
        increase = ll - lls[-1]
        lls.append(ll)
        if increase < config.tolerance:
            converged = increase < min(config.tolerance, DEFAULT_TOLERANCE)
            break
    return model, FullJointTrace(tuple(lls), iterations, converged)


def induced_pairwise(model: FullJointModel, i: int, j: int) -> np.ndarray:
    """Pairwise symbol joint implied by the full tuple model."""
    pair = model.pair_prior(i, j)
    return model.conditionals[i].T @ (pair @ model.conditionals[j])


def to_pairwise_model(model: FullJointModel) -> FlaModel:
    """View the full-joint model as a pairwise model (marginalized mixing)."""
    k = model.n_features
    mixing = {}
    for i in range(k):
        for j in range(i, k):
            pair = model.pair_prior(i, j)
            if i == j:
                pair = 0.5 * (pair + pair.T)
            mixing[(i, j)] = pair
    return FlaModel(model.class_counts, model.conditionals, mixing,
                    feature_names=model.feature_names)
