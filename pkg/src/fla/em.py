"""EM estimation of the factored latent class model from pairwise joints.

The model is K per-feature class-conditional output tables p(x_i | l_i)
plus a latent mixing table p(l_i, l_j) for every feature pair. Fitting
minimizes the total KL divergence between all empirical pairwise joints
and the model joints

    p_model(x_i, x_j) = sum_{l_i, l_j} p(l_i, l_j) p(x_i | l_i) p(x_j | l_j)

summed over ordered pairs (diagonals included by default). The EM update
is multiplicative: mixing tables update per pair, while each feature's
conditionals pool expected counts over every pair that involves the
feature, which is what couples the K^2 joints into one shared model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cooccur import PairwiseJointSet
from .errors import ValidationError
from .quantize import QuantizerSet

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-7
DEFAULT_EPSILON = 1e-12
DEFAULT_MAX_ITERATIONS = 500


@dataclass(frozen=True)
class FitConfig:
    """Stopping, smoothing, and initialization knobs for EM fits."""

    max_iterations: int = DEFAULT_MAX_ITERATIONS
    tolerance: float = DEFAULT_TOLERANCE  # absolute objective decrease
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON  # floor added to tables before renormalizing
    include_diagonal: bool = True  # count the (i, i) divergence terms
    init: str = "anchors"  # "anchors" | "uniform"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be > 0")
        if self.epsilon < 0:
            raise ValidationError("epsilon must be >= 0")
        if self.init not in ("anchors", "uniform"):
            raise ValidationError(f"unknown init scheme {self.init!r}")


@dataclass(frozen=True)
class FitTrace:
    """Objective history of one fit.

    `objectives[0]` is the objective at initialization and each later entry
    follows one EM iteration, so the sequence is non-increasing (within
    1e-9). `converged` reports whether the final decrease had plateaued at
    the default tolerance, not merely that a loose stop tolerance was met.
    """

    objectives: tuple[float, ...]
    iterations: int
    converged: bool


class FlaModel:
    """Fitted factored latent class model.

    `conditionals[i]` is a (k_i, S_i) row-stochastic table p(x_i | l_i);
    `mixing` holds one (k_i, k_j) table per unordered pair (i <= j) and the
    ordered (j, i) view is the exact transpose (diagonal tables are
    symmetric). Immutable.
    """

    __slots__ = ("feature_names", "class_counts", "alphabet_sizes", "conditionals",
                 "_mixing", "quantizers", "class_labels")

    def __init__(self, class_counts, conditionals, mixing,
                 feature_names=None, quantizers: QuantizerSet | None = None,
                 class_labels: dict[str, dict[int, str]] | None = None):
        self.class_counts = tuple(int(k) for k in class_counts)
        k = len(self.class_counts)
        self.feature_names = (
            tuple(feature_names) if feature_names is not None
            else tuple(f"f{i}" for i in range(k))
        )
        self.conditionals = tuple(np.asarray(c, dtype=np.float64) for c in conditionals)
        self.alphabet_sizes = tuple(c.shape[1] for c in self.conditionals)
        self.quantizers = quantizers
        self.class_labels = class_labels or {}
        if len(self.conditionals) != k or len(self.feature_names) != k:
            raise ValidationError("class_counts / conditionals / feature_names mismatch")
        for i, c in enumerate(self.conditionals):
            if c.shape[0] != self.class_counts[i]:
                raise ValidationError(f"conditional {i} has {c.shape[0]} rows")
        self._mixing = {}
        for i in range(k):
            for j in range(i, k):
                m = np.asarray(mixing[(i, j)], dtype=np.float64)
                if m.shape != (self.class_counts[i], self.class_counts[j]):
                    raise ValidationError(f"mixing table ({i},{j}) has shape {m.shape}")
                self._mixing[(i, j)] = m
        for arr in (*self.conditionals, *self._mixing.values()):
            arr.setflags(write=False)

    @property
    def n_features(self) -> int:
        return len(self.class_counts)

    def mixing_table(self, i: int, j: int) -> np.ndarray:
        """Ordered latent pair table p(l_i, l_j)."""
        if i <= j:
            return self._mixing[(i, j)]
        return self._mixing[(j, i)].T

    def mixing_pairs(self):
        return self._mixing.keys()

    def validate_distributions(self, atol: float = 1e-9) -> None:
        for i, c in enumerate(self.conditionals):
            if np.any(c < 0) or np.any(np.abs(c.sum(axis=1) - 1.0) > atol):
                raise ValidationError(f"conditional rows for feature {i} not normalized")
        for (i, j), m in self._mixing.items():
            if np.any(m < 0) or abs(m.sum() - 1.0) > atol:
                raise ValidationError(f"mixing table ({i},{j}) not normalized")
            if i == j and not np.array_equal(m, m.T):
                raise ValidationError(f"diagonal mixing table ({i},{i}) not symmetric")

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None

    def class_id(self, feature: str, label) -> int:
        """Resolve a class id or attached text label to a class id."""
        fi = self.feature_index(feature)
        if isinstance(label, str) and not label.lstrip("-").isdigit():
            names = self.class_labels.get(feature, {})
            for cid, name in names.items():
                if name == label:
                    return int(cid)
            raise ValidationError(f"unknown class label {label!r} for feature {feature!r}")
        cid = int(label)
        if not (0 <= cid < self.class_counts[fi]):
            raise ValidationError(
                f"class id {cid} out of range for feature {feature!r} "
                f"(k={self.class_counts[fi]})"
            )
        return cid


def init_model(
    class_counts: tuple[int, ...],
    quantizers: QuantizerSet | None = None,
    seed: int = 0,
    *,
    alphabet_sizes: tuple[int, ...] | None = None,
    feature_names: tuple[str, ...] | None = None,
    jitter: float = 0.01,
) -> FlaModel:
    """Seeded initial model: jittered-uniform conditionals, uniform mixing.

    The 1% multiplicative jitter breaks the class symmetry that makes the
    exactly uniform model a fixed point of EM.
    """
    if quantizers is not None:
        alphabet_sizes = quantizers.alphabet_sizes
        feature_names = quantizers.feature_names
    if alphabet_sizes is None:
        raise ValidationError("need a QuantizerSet or explicit alphabet_sizes")
    if len(class_counts) != len(alphabet_sizes):
        raise ValidationError("class_counts / alphabet_sizes length mismatch")
    for k, s in zip(class_counts, alphabet_sizes):
        if k < 1:
            raise ValidationError("class counts must be >= 1")
        if k > s:
            raise ValidationError(f"class count {k} exceeds alphabet size {s}")

    rng = np.random.default_rng(seed)
    conditionals = []
    for k, s in zip(class_counts, alphabet_sizes):
        rows = 1.0 + jitter * rng.uniform(-1.0, 1.0, size=(k, s))
        conditionals.append(rows / rows.sum(axis=1, keepdims=True))
    n = len(class_counts)
    mixing = {
        (i, j): np.full((class_counts[i], class_counts[j]),
                        1.0 / (class_counts[i] * class_counts[j]))
        for i in range(n) for j in range(i, n)
    }
    return FlaModel(class_counts, conditionals, mixing,
                    feature_names=feature_names, quantizers=quantizers)


def init_anchors(
    joints: PairwiseJointSet,
    class_counts: tuple[int, ...],
    seed: int = 0,
    quantizers: QuantizerSet | None = None,
    blend: float = 0.05,
) -> FlaModel:
    """Data-anchored initial model; the default starting point for fits.

    Jittered-uniform starts sit near a saddle where all classes of a
    feature are interchangeable, and escaping it routinely lands in
    merge/split local optima. Instead, each class row starts from the
    emission profile of an anchor symbol, with anchors chosen greedily
    (farthest-point on the symbol's co-occurrence context over the other
    features, mass-weighted) so they fall in distinct latent classes for
    any reasonably separated data. Mixing tables start uniform; small
    seeded jitter keeps restarts distinct. Deterministic given seed.
    """
    if not (0 < blend < 1):
        raise ValidationError("blend must be in (0, 1)")
    k_features = len(class_counts)
    if k_features != len(joints.alphabet_sizes):
        raise ValidationError("class_counts / joints feature count mismatch")
    for k, s in zip(class_counts, joints.alphabet_sizes):
        if k < 1:
            raise ValidationError("class counts must be >= 1")
        if k > s:
            raise ValidationError(f"class count {k} exceeds alphabet size {s}")
    rng = np.random.default_rng(seed)
    conditionals = []
    for i, k in enumerate(class_counts):
        diag = joints.table(i, i)
        marg = diag.sum(axis=1)
        support = np.nonzero(marg > 0)[0]
        blocks = []
        for j in range(k_features):
            if j == i and k_features > 1:
                continue
            blocks.append(joints.table(i, j)[support] / marg[support, None])
        profiles = np.hstack(blocks)
        emissions = diag[support] / marg[support, None]
        mass = marg[support]

        k_eff = min(k, len(support))
        first = int(np.argmax(mass * (1.0 + 0.01 * rng.random(len(support)))))
        chosen = [first]
        dmin = 0.5 * np.abs(profiles - profiles[first]).sum(axis=1) / len(blocks)
        while len(chosen) < k_eff:
            score = mass * dmin**2 * (1.0 + 0.01 * rng.random(len(support)))
            nxt = int(np.argmax(score))
            chosen.append(nxt)
            dist = 0.5 * np.abs(profiles - profiles[nxt]).sum(axis=1) / len(blocks)
            dmin = np.minimum(dmin, dist)

        s = diag.shape[0]
        rows = np.full((k, s), 1.0 / s)
        for c, a in enumerate(chosen):
            rows[c] = (1.0 - blend) * emissions[a] + blend / s
        rows = rows * (1.0 + 0.01 * rng.uniform(-1.0, 1.0, rows.shape))
        conditionals.append(rows / rows.sum(axis=1, keepdims=True))

    mixing = {
        (i, j): np.full((class_counts[i], class_counts[j]),
                        1.0 / (class_counts[i] * class_counts[j]))
        for i in range(k_features) for j in range(i, k_features)
    }
    return FlaModel(class_counts, conditionals, mixing,
                    feature_names=joints.feature_names, quantizers=quantizers)


def model_pairwise_joint(model: FlaModel, i: int, j: int) -> np.ndarray:
    """Model joint over symbols: sum over latent pairs of mixing x conditionals."""
    ci = model.conditionals[i]
    cj = model.conditionals[j]
    return ci.T @ (model.mixing_table(i, j) @ cj)


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) with 0 log 0 = 0; +inf where p > 0 meets q = 0."""
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    pm = p[mask]
    return float(np.sum(pm * (np.log(pm) - np.log(q[mask]))))


def objective(model: FlaModel, joints: PairwiseJointSet,
              include_diagonal: bool = True) -> float:
    """Total KL divergence of empirical vs model joints over ordered pairs.

    Off-diagonal ordered pairs (i, j) and (j, i) have identical divergence
    by the transpose identity, so each unordered pair is computed once and
    counted twice.
    """
    if model.alphabet_sizes != joints.alphabet_sizes:
        raise ValidationError("model and joints have different alphabets")
    total = 0.0
    for (i, j) in joints.pairs():
        if i == j and not include_diagonal:
            continue
        mult = 1.0 if i == j else 2.0
        total += mult * _kl(joints.table(i, j), model_pairwise_joint(model, i, j))
    return total


def _floor_rows(counts: np.ndarray, epsilon: float, what: str) -> np.ndarray:
    totals = counts.sum(axis=1)
    if np.any(totals <= 0):
        logger.warning("degenerate expected counts in %s; floored to uniform", what)
    counts = counts + epsilon
    return counts / counts.sum(axis=1, keepdims=True)


def em_iterate(
    model: FlaModel,
    joints: PairwiseJointSet,
    epsilon: float = DEFAULT_EPSILON,
    include_diagonal: bool = True,
) -> tuple[FlaModel, float]:
    """One EM step on the summed divergence; returns the updated model and
    its objective.

    E-step responsibilities over latent pairs are implicit in the
    multiplicative form: with Q the current model joint and R = p_hat / Q,
    the expected-count updates are

        mixing (i, j)  <-  mixing * (C_i R C_j^T)
        feature i rows <-  sum_j C_i * (mixing_ij C_j R^T)

    followed by the epsilon floor and renormalization. The objective is
    non-increasing (to ~1e-9) because the floor perturbation is second
    order at the M-step optimum.
    """
    if model.alphabet_sizes != joints.alphabet_sizes:
        raise ValidationError("model and joints have different alphabets")
    k = model.n_features
    cond_counts = [np.zeros_like(c) for c in model.conditionals]
    new_mixing: dict[tuple[int, int], np.ndarray] = {}

    for (i, j) in joints.pairs():
        ci = model.conditionals[i]
        cj = model.conditionals[j]
        mix = model.mixing_table(i, j)
        phat = joints.table(i, j)
        q = ci.T @ (mix @ cj)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(phat > 0, phat / q, 0.0)
        if not np.all(np.isfinite(r)):
            raise ValidationError(
                f"model joint ({i},{j}) vanished where data has mass; "
                f"increase the epsilon floor"
            )
        if i == j and not include_diagonal:
            # Diagonal divergences excluded from the criterion: keep the
            # stored table but do not let it shape the estimates.
            new_mixing[(i, j)] = mix
            continue
        row_counts = ci * (mix @ (cj @ r.T))
        col_counts = cj * (mix.T @ (ci @ r))
        cond_counts[i] += row_counts
        cond_counts[j] += col_counts
        mix_counts = mix * (ci @ r @ cj.T)
        mix_new = mix_counts + epsilon
        mix_new /= mix_new.sum()
        if i == j:
            mix_new = 0.5 * (mix_new + mix_new.T)
        new_mixing[(i, j)] = mix_new

    new_conditionals = [
        _floor_rows(cond_counts[i], epsilon, f"conditionals[{model.feature_names[i]}]")
        for i in range(k)
    ]
    new_model = FlaModel(
        model.class_counts, new_conditionals, new_mixing,
        feature_names=model.feature_names, quantizers=model.quantizers,
        class_labels=model.class_labels,
    )
    return new_model, objective(new_model, joints, include_diagonal)


def fit(
    joints: PairwiseJointSet,
    class_counts: tuple[int, ...],
    config: FitConfig = FitConfig(),
    quantizers: QuantizerSet | None = None,
) -> tuple[FlaModel, FitTrace]:
    """Fit a model to empirical pairwise joints by EM.

    Runs from a seeded init (data anchors by default, jittered uniform via
    config.init="uniform") until the objective decrease drops below the
    tolerance or the iteration cap; returns the best model seen and the
    objective trace.
    """
    if config.init == "anchors":
        model = init_anchors(joints, class_counts, config.seed, quantizers)
    else:
        model = init_model(
            class_counts,
            quantizers,
            config.seed,
            alphabet_sizes=joints.alphabet_sizes,
            feature_names=joints.feature_names,
        )
    objectives = [objective(model, joints, config.include_diagonal)]
    best_model = model
    best_objective = objectives[0]
    converged = False
    iterations = 0
    for _ in range(config.max_iterations):
        model, obj = em_iterate(model, joints, config.epsilon, config.include_diagonal)
        iterations += 1
        decrease = objectives[-1] - obj
        objectives.append(obj)
        if obj < best_objective:
            best_objective = obj
            best_model = model
        if decrease < config.tolerance:
            converged = decrease < min(config.tolerance, DEFAULT_TOLERANCE)
            break
    trace = FitTrace(tuple(objectives), iterations, converged)
    return best_model, trace


def type_marginals(model: FlaModel) -> tuple[np.ndarray, ...]:
    """Per-feature latent class distribution p(l_i).

    The K^2 mixing tables are estimated independently, so their
    single-feature marginals need not agree exactly; the summary marginal
    averages the l_i-marginal of p(l_i, l_j) over all j.
    """
    k = model.n_features
    out = []
    for i in range(k):
        acc = np.zeros(model.class_counts[i])
        for j in range(k):
            acc += model.mixing_table(i, j).sum(axis=1)
        out.append(acc / k)
    return tuple(out)
