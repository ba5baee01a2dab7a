"""Evaluation helpers: latent classes are only identifiable up to relabeling.

Learned classes are matched to reference classes by minimum-cost assignment
on total variation between conditional rows; accuracy and planted-structure
comparisons are made after applying that permutation.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .quantize import SymbolSequences
from .scenes import GroundTruthLabels


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """TV distance between two distributions on the same support."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def match_classes(learned: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Assign learned rows to reference rows minimizing summed TV.

    Returns `perm` with perm[r] = learned row matched to reference row r.
    Row counts must agree.
    """
    learned = np.asarray(learned)
    reference = np.asarray(reference)
    if learned.shape != reference.shape:
        raise ValidationError(
            f"cannot match {learned.shape} against {reference.shape}"
        )
    cost = 0.5 * np.abs(reference[:, None, :] - learned[None, :, :]).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=np.int64)
    perm[rows] = cols
    return perm


def permute_model_feature(conditionals: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Reorder conditional rows so row r describes reference class r."""
    return np.asarray(conditionals)[perm]


def planted_conditionals(
    seqs: SymbolSequences, labels: GroundTruthLabels, feature: int, n_classes: int
) -> np.ndarray:
    """Empirical symbol distribution of each planted class of one feature."""
    s = seqs.alphabet_sizes[feature]
    counts = np.zeros((n_classes, s))
    for tid, symbols in zip(seqs.track_ids, seqs.symbols):
        lab = labels.labels(tid)[:, feature]
        np.add.at(counts, (lab, symbols[:, feature]), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise ValidationError("a planted class has no frames")
    return counts / totals


def planted_pair_prior(
    labels: GroundTruthLabels, i: int, j: int, counts: tuple[int, int]
) -> np.ndarray:
    """Frame-weighted joint frequency of planted class pairs (i, j)."""
    table = np.zeros(counts)
    for tid in labels.track_ids:
        lab = labels.labels(tid)
        np.add.at(table, (lab[:, i], lab[:, j]), 1.0)
    return table / table.sum()


def label_accuracy(
    predicted: list[np.ndarray],
    labels: GroundTruthLabels,
    track_ids: tuple[str, ...],
    perms: list[np.ndarray],
) -> np.ndarray:
    """Per-feature frame accuracy after mapping planted ids through perms.

    `perms[f][r]` is the learned class matched to planted class r, as
    returned by match_classes.
    """
    n_features = len(perms)
    correct = np.zeros(n_features)
    total = 0
    for tid, pred in zip(track_ids, predicted):
        truth = labels.labels(tid)
        total += truth.shape[0]
        for f in range(n_features):
            mapped = perms[f][truth[:, f]]
            correct[f] += np.sum(pred[:, f] == mapped)
    if total == 0:
        raise ValidationError("no frames to score")
    return correct / total
