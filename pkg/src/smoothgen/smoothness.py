"""Neighborhood smoothness scores for black-box classifiers.

For each test example we are given the classes a classifier predicted on n
points sampled near it. The per-example score is the fraction of those
predictions that fall in the most common class (with a negative-entropy
alternative over the full per-class histogram); the dataset score is the
mean over examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import SchemaError
from .ingest import ExampleEntry, NeighborhoodPredictionLog

VARIANTS = ("majority", "neg_entropy")


@dataclass(frozen=True)
class DecisionDistribution:
    """Per-class histogram of neighborhood predictions."""

    counts: tuple[int, ...]
    n: int

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(c / self.n for c in self.counts)


@dataclass(frozen=True)
class SmoothnessScore:
    mu: float
    dominant_label: int
    neg_entropy: float


def decision_distribution(predictions: Sequence[int], k: int) -> DecisionDistribution:
    """Count predicted classes over a neighborhood sample."""
    if len(predictions) == 0:
        raise SchemaError("empty prediction list")
    counts = [0] * k
    for p in predictions:
        if not 0 <= p < k:
            raise SchemaError(f"prediction {p} out of range [0, {k})")
        counts[p] += 1
    return DecisionDistribution(counts=tuple(counts), n=len(predictions))


def dominant_label(dist: DecisionDistribution) -> int:
    """Most frequent class; ties break to the lowest class index."""
    return max(range(len(dist.counts)), key=lambda j: (dist.counts[j], -j))


def neg_entropy(dist: DecisionDistribution) -> float:
    """Sum of p log p over the decision distribution (natural log, 0 log 0 = 0)."""
    n = dist.n
    return sum(
        (c / n) * math.log(c / n) for c in dist.counts if c > 0
    )


def smoothness(predictions: Sequence[int], k: int) -> SmoothnessScore:
    """Fraction of neighborhood predictions in the dominant class.

    mu is formed as an exact count ratio before conversion to float, so equal
    fractions compare equal downstream regardless of n.
    """
    dist = decision_distribution(predictions, k)
    y_hat = dominant_label(dist)
    mu = Fraction(dist.counts[y_hat], dist.n)
    return SmoothnessScore(
        mu=float(mu), dominant_label=y_hat, neg_entropy=neg_entropy(dist)
    )


def dataset_smoothness(log: NeighborhoodPredictionLog, variant: str = "majority") -> float:
    """Mean per-example smoothness over all examples in the log."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if not log.examples:
        raise SchemaError("cannot score a log with no examples")
    k = log.num_classes
    total = 0.0
    for ex in log.examples:
        score = smoothness(ex.neighborhood_predictions, k)
        total += score.mu if variant == "majority" else score.neg_entropy
    return total / len(log.examples)


def subsample_examples(
    log: NeighborhoodPredictionLog, size: int, seed: int
) -> NeighborhoodPredictionLog:
    """Uniform subsample of examples without replacement, preserving log order.

    Nested across sizes: for the same seed the size-s subsample is a subset of
    the size-s' subsample whenever s < s'.
    """
    m = len(log.examples)
    if not 1 <= size <= m:
        raise ValueError(f"size must be in [1, {m}], got {size}")
    order = np.random.default_rng(seed).permutation(m)
    keep = sorted(order[:size].tolist())
    return NeighborhoodPredictionLog(
        model_id=log.model_id,
        test_domain=log.test_domain,
        num_classes=log.num_classes,
        examples=tuple(log.examples[i] for i in keep),
        meta=log.meta,
    )


def truncate_neighborhood(
    log: NeighborhoodPredictionLog, n_keep: int
) -> NeighborhoodPredictionLog:
    """Keep the first n_keep neighborhood predictions of every example."""
    if n_keep < 1:
        raise ValueError(f"n_keep must be >= 1, got {n_keep}")
    short = [ex for ex in log.examples if len(ex.neighborhood_predictions) < n_keep]
    if short:
        raise ValueError(
            f"n_keep={n_keep} exceeds neighborhood length of example "
            f"{short[0].example_id!r}"
        )
    return NeighborhoodPredictionLog(
        model_id=log.model_id,
        test_domain=log.test_domain,
        num_classes=log.num_classes,
        examples=tuple(
            ExampleEntry(
                example_id=ex.example_id,
                neighborhood_predictions=ex.neighborhood_predictions[:n_keep],
                true_label=ex.true_label,
                base_prediction=ex.base_prediction,
            )
            for ex in log.examples
        ),
        meta=log.meta,
    )
