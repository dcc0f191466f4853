"""Classical adaptive-testing baselines over a fixed pre-fit logistic model.

`fit_irt` calibrates question difficulties on the training cohort once;
episodes then either pick the maximum-Fisher-information question at the
current ability estimate (the active rule) or a uniformly random available
question, updating the ability by MAP estimation after each response.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import ResponseDataset
from .errors import ArgumentError, ConvergenceWarning, StateError
from .numerics import sigmoid
from .response import IrtParams


@dataclass(frozen=True)
class MapConfig:
    """Gaussian-prior MAP settings for ability estimation."""

    prior_mean: float = 0.0
    prior_precision: float = 1.0
    max_iter: int = 50
    tol: float = 1e-10

    def __post_init__(self):
        if self.prior_precision < 0:
            raise ArgumentError("prior_precision must be nonnegative")
        if self.tol <= 0:
            raise ArgumentError("tol must be positive")


def fit_irt(
    ds: ResponseDataset,
    include_tags=("train",),
    l2: float = 1e-3,
    max_iter: int = 2000,
    tol: float = 1e-6,
) -> IrtParams:
    """Penalized joint likelihood fit by alternating preconditioned ascent.

    Abilities and difficulties both carry a small L2 penalty, which pins the
    translation degree of freedom and bounds estimates for questions with
    one-sided response patterns. Only difficulties are returned (prior mean
    0); abilities are re-estimated at test time, so convergence is judged on
    the difficulty updates (ability estimates for extreme all-correct
    patterns crawl toward their penalty bound without moving the
    difficulties). Deterministic: both vectors start at zero.
    """
    students = np.concatenate([ds.students_with_tag(t) for t in include_tags])
    if len(students) == 0:
        raise ArgumentError("no students in the requested tags")
    row_of = {int(s): r for r, s in enumerate(students)}
    y = np.zeros((len(students), ds.num_questions))
    mask = np.zeros_like(y)
    for sid in students:
        recs = ds.records_of(int(sid))
        r = row_of[int(sid)]
        y[r, ds.question_idx[recs]] = ds.correct[recs]
        mask[r, ds.question_idx[recs]] = 1.0
    theta = np.zeros(len(students))
    b = np.zeros(ds.num_questions)
    # Per-coordinate curvature of the logistic likelihood is at most n/4, so
    # these preconditioned steps cannot overshoot.
    theta_scale = 1.0 / (0.25 * mask.sum(axis=1) + l2)
    b_scale = 1.0 / (0.25 * mask.sum(axis=0) + l2)
    for _ in range(max_iter):
        p = sigmoid(theta[:, None] - b[None, :])
        g_theta = ((y - p) * mask).sum(axis=1) - l2 * theta
        theta = theta + theta_scale * g_theta
        p = sigmoid(theta[:, None] - b[None, :])
        g_b = ((p - y) * mask).sum(axis=0) - l2 * b
        b = b + b_scale * g_b
        # The likelihood is invariant under a common shift of theta and b;
        # only the penalty pins it. Minimize over that mode exactly, or it
        # converges at the (slow) penalty rate.
        shift = -(theta.sum() + b.sum()) / (len(theta) + len(b))
        theta = theta + shift
        b = b + shift
        if float(np.abs(b_scale * g_b).max()) < tol:
            break
    else:
        warnings.warn(
            f"fit_irt stopped after {max_iter} iterations; "
            f"max difficulty gradient {float(np.abs(g_b).max()):.3e}",
            ConvergenceWarning,
        )
    return IrtParams(difficulties=b, prior_mean=0.0)


def map_estimate_theta(params: IrtParams, responses, cfg: MapConfig) -> float:
    """MAP ability under a Gaussian prior, by damped Newton iterations.

    Minimizes sum of cross-entropies plus (precision/2)(theta - mean)^2; the
    objective is smooth and, for positive precision, strictly convex.
    """
    if not responses:
        return float(cfg.prior_mean)
    qs = np.array([q for q, _ in responses], dtype=int)
    if qs.min() < 0 or qs.max() >= params.num_questions:
        raise ArgumentError("response references a question outside the pool")
    ys = np.array([y for _, y in responses], dtype=float)
    b = params.difficulties[qs]
    theta = float(cfg.prior_mean)

    def gradient(t: float) -> float:
        return float((sigmoid(t - b) - ys).sum()) + cfg.prior_precision * (t - cfg.prior_mean)

    g = gradient(theta)
    for _ in range(cfg.max_iter):
        if abs(g) < cfg.tol:
            break
        p = sigmoid(theta - b)
        curvature = float((p * (1.0 - p)).sum()) + cfg.prior_precision
        step = g / curvature
        while True:
            candidate = theta - step
            g_new = gradient(candidate)
            if abs(g_new) <= abs(g) or abs(step) < 1e-15:
                break
            step *= 0.5
        theta, g = candidate, g_new
    return theta


def select_active(params: IrtParams, theta: float, available) -> int:
    """Maximum-Fisher-information pick: argmax of p(1-p) at the current theta.

    Ties break to the lowest index.
    """
    available = np.asarray(available, dtype=bool)
    if not available.any():
        raise StateError("no available questions")
    p = sigmoid(float(theta) - params.difficulties)
    info = np.where(available, p * (1.0 - p), -np.inf)
    return int(np.argmax(info))


def select_random(available, rng) -> int:
    """Uniform pick over available questions."""
    ids = np.flatnonzero(np.asarray(available, dtype=bool))
    if len(ids) == 0:
        raise StateError("no available questions")
    return int(ids[rng.integers(len(ids))])
