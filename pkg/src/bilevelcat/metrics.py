"""Test-accuracy and test-security metrics.

Accuracy is the pooled ranking quality (AUC) of held-out predictions.
Security has two faces: how unevenly questions are exposed across a cohort
(a scaled chi-square of exposure rates against the uniform benchmark), and
how much any two students' tests overlap on average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, IntegrityError, MetricUndefinedError


@dataclass(frozen=True)
class ExposureProfile:
    """Per-question administration counts over an evaluation cohort."""

    counts: np.ndarray
    n_students: int
    test_length: int
    pool_size: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=int)
        object.__setattr__(self, "counts", counts)
        if len(counts) != self.pool_size:
            raise IntegrityError("counts length must equal the pool size")
        if counts.min(initial=0) < 0 or counts.max(initial=0) > self.n_students:
            raise IntegrityError("counts must lie in [0, n_students]")
        if counts.sum() != self.n_students * self.test_length:
            raise IntegrityError("counts must sum to n_students * test_length")

    @property
    def rates(self) -> np.ndarray:
        """Exposure rate per question: fraction of the cohort that saw it."""
        return self.counts / self.n_students


@dataclass(frozen=True)
class TradeoffPoint:
    """One evaluation summary: entropy weight and the three metrics."""

    lam: float | None
    auc: float
    expose_chi: float
    overlap_mu: float

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise ArgumentError("auc must lie in [0, 1]")
        if self.expose_chi < 0.0:
            raise ArgumentError("expose_chi must be nonnegative")
        if not 0.0 <= self.overlap_mu <= 1.0:
            raise ArgumentError("overlap_mu must lie in [0, 1]")


def auc(scored: list[tuple[float, int]]) -> float:
    """Probability a random positive outranks a random negative (ties half).

    Computed from average ranks in O(n log n); requires both classes present.
    """
    if not scored:
        raise MetricUndefinedError("auc needs at least one scored pair")
    scores = np.array([s for s, _ in scored], dtype=float)
    labels = np.array([y for _, y in scored], dtype=int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("auc needs both a positive and a negative label")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg_ranks = (ends - counts + 1 + ends) / 2.0
    rank_sum = float(avg_ranks[inverse][labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def expose_chi(profile: ExposureProfile) -> float:
    """Scaled chi-square of exposure rates against the uniform rate T/Q."""
    if profile.test_length > profile.pool_size:
        raise ArgumentError("test length cannot exceed the pool size")
    if profile.test_length <= 0:
        raise ArgumentError("test length must be positive")
    rates = profile.rates
    benchmark = profile.test_length / profile.pool_size
    return float(((rates - benchmark) ** 2 / benchmark).sum())


def overlap_mu(administrations, test_length: int) -> float:
    """Mean pairwise overlap |S_a intersect S_b| / T over all student pairs.

    Evaluated through per-question counts: sum_j C(c_j, 2) pairs share each
    question, divided by T * C(N, 2).
    """
    sets = [np.unique(np.asarray(list(s), dtype=int)) for s in administrations]
    if len(sets) < 2:
        raise MetricUndefinedError("overlap needs at least 2 students")
    if test_length <= 0:
        raise ArgumentError("test length must be positive")
    for s in sets:
        if len(s) != test_length:
            raise IntegrityError("every administered set must have exactly T questions")
    flat = np.concatenate(sets)
    counts = np.bincount(flat)
    shared_pairs = float((counts * (counts - 1) // 2).sum())
    n = len(sets)
    return shared_pairs / (test_length * n * (n - 1) / 2.0)


def exposure_from_administrations(administrations, pool_size: int) -> ExposureProfile:
    """Count, per question, how many students' tests contained it."""
    sets = [np.unique(np.asarray(list(s), dtype=int)) for s in administrations]
    counts = np.zeros(pool_size, dtype=int)
    test_length = len(sets[0]) if sets else 0
    for s in sets:
        if len(s) and (s.min() < 0 or s.max() >= pool_size):
            raise IntegrityError("administered question outside the pool")
        counts[s] += 1
    return ExposureProfile(
        counts=counts,
        n_students=len(sets),
        test_length=test_length,
        pool_size=pool_size,
    )
