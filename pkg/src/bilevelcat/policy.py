"""Stochastic question-selection policy.

A one-hidden-layer network maps the signed ternary response history to one
logit per question. Candidates are restricted by a boolean mask (already
selected questions, questions without recorded responses); sampling uses
the Gumbel-Softmax relaxation at a fixed temperature so that selection
stays differentiable during training, with a straight-through pairing of
the hard one-hot sample and its soft relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EpisodeState
from .errors import ArgumentError, NumericError, ParseError, StateError
from .response import _flat_rows, _read_rows, _vector, _write_rows


@dataclass(frozen=True)
class PolicyParams:
    """Weights of the selection network (pool size -> hidden -> pool size)."""

    w1: np.ndarray  # (hidden, num_questions)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (num_questions, hidden)
    b2: np.ndarray  # (num_questions,)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if not np.isfinite(arr).all():
                raise ArgumentError(f"{name} must be finite")
        h, q = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (q, h) or self.b2.shape != (q,):
            raise ArgumentError("inconsistent network shapes")

    @property
    def num_questions(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def init(cls, rng, num_questions: int, hidden_dim: int = 256):
        """Small random weights; zero biases so the initial policy is near uniform."""
        return cls(
            w1=rng.standard_normal((hidden_dim, num_questions)) / np.sqrt(num_questions),
            b1=np.zeros(hidden_dim),
            w2=rng.standard_normal((num_questions, hidden_dim)) / np.sqrt(hidden_dim),
            b2=np.zeros(num_questions),
        )


@dataclass(frozen=True)
class MaskedCategorical:
    """Categorical over the unmasked subset of the question pool."""

    logits: np.ndarray
    mask: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        if not self.mask.any():
            raise StateError("distribution needs at least one unmasked entry")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ArgumentError("probabilities must sum to 1")
        if np.any(self.probs[~self.mask] != 0.0):
            raise ArgumentError("masked entries must carry zero probability")


def forward_logits(phi: PolicyParams, input_vec: np.ndarray) -> np.ndarray:
    """Selection logits for one response history."""
    x = np.asarray(input_vec, dtype=float)
    if x.shape != (phi.num_questions,):
        raise ArgumentError("input vector length must match the question pool")
    if not np.isin(x, (-1.0, 0.0, 1.0)).all():
        raise ArgumentError("input entries must be -1, 0, or +1")
    logits = phi.w2 @ np.tanh(phi.w1 @ x + phi.b1) + phi.b2
    if not np.isfinite(logits).all():
        raise NumericError("policy produced non-finite logits")
    return logits


def forward_logits_tape(tape, phi_vars: dict, input_vec: np.ndarray, hidden_dim: int):
    """Tape twin of `forward_logits`; `phi_vars` holds flattened weight Vars."""
    q = len(input_vec)
    hidden = tape.tanh(
        tape.add(tape.matvec(phi_vars["pw1"], input_vec, hidden_dim, q), phi_vars["pb1"])
    )
    return tape.add(tape.matvec(phi_vars["pw2"], hidden, q, hidden_dim), phi_vars["pb2"])


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> MaskedCategorical:
    """Softmax restricted to unmasked entries, with max-subtraction for stability."""
    logits = np.asarray(logits, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise StateError("all candidates are masked")
    probs = np.zeros(len(logits))
    shifted = logits[mask] - logits[mask].max()
    exps = np.exp(shifted)
    probs[mask] = exps / exps.sum()
    return MaskedCategorical(logits=logits, mask=mask, probs=probs)


def entropy(dist: MaskedCategorical) -> float:
    """Shannon entropy of the distribution, 0 log 0 := 0."""
    live = dist.probs > 0.0
    p = dist.probs[live]
    return float(-(p @ np.log(p)))


def sample_gumbel(rng, size: int) -> np.ndarray:
    """Standard Gumbel noise from inverse-CDF sampling, guarding u in {0, 1}."""
    u = rng.random(size)
    bad = (u <= 0.0) | (u >= 1.0)
    while bad.any():
        u[bad] = rng.random(int(bad.sum()))
        bad = (u <= 0.0) | (u >= 1.0)
    return -np.log(-np.log(u))


def gumbel_softmax_sample(
    dist: MaskedCategorical, tau: float, rng
) -> tuple[np.ndarray, np.ndarray]:
    """One relaxed categorical sample.

    Returns (soft, hard): `soft` is softmax((log p + gumbel) / tau) over the
    unmasked entries, `hard` the one-hot at its argmax. Masked entries are
    exactly zero in both.
    """
    if tau <= 0:
        raise ArgumentError("tau must be positive")
    noise = sample_gumbel(rng, len(dist.probs))
    soft = np.zeros(len(dist.probs))
    scores = (np.log(dist.probs[dist.mask]) + noise[dist.mask]) / tau
    exps = np.exp(scores - scores.max())
    soft[dist.mask] = exps / exps.sum()
    hard = np.zeros(len(soft))
    hard[int(np.argmax(soft))] = 1.0
    return soft, hard


def select_next(
    phi: PolicyParams,
    state: EpisodeState,
    available: np.ndarray,
    tau: float,
    rng,
    mode: str = "stochastic",
) -> tuple[int, np.ndarray | None]:
    """Pick the next question among available candidates.

    Stochastic mode samples from the Gumbel-Softmax relaxation and also
    returns the soft weights; greedy mode returns the argmax-probability
    candidate (ties to the lowest index) with no weights.
    """
    available = np.asarray(available, dtype=bool)
    if not available.any():
        raise StateError("no available questions to select from")
    dist = masked_softmax(forward_logits(phi, state.input_vec), available)
    if mode == "greedy":
        return int(np.argmax(dist.probs)), None
    if mode == "stochastic":
        soft, hard = gumbel_softmax_sample(dist, tau, rng)
        return int(np.argmax(hard)), soft
    raise ArgumentError(f"unknown selection mode {mode!r}")


def save_policy_params(params: PolicyParams, path) -> None:
    rows = [
        ("hidden_dim", 0, params.hidden_dim),
        ("num_questions", 0, params.num_questions),
    ]
    for name in ("w1", "b1", "w2", "b2"):
        rows.extend(_flat_rows(name, getattr(params, name)))
    _write_rows(path, rows)


def load_policy_params(path) -> PolicyParams:
    table = _read_rows(path)
    try:
        h = int(table["hidden_dim"][0])
        q = int(table["num_questions"][0])
    except KeyError as exc:
        raise ParseError(f"{path}: missing dimension entry {exc}") from exc
    return PolicyParams(
        w1=_vector(table["w1"], "w1", path).reshape(h, q),
        b1=_vector(table["b1"], "b1", path),
        w2=_vector(table["w2"], "w2", path).reshape(q, h),
        b2=_vector(table["b2"], "b2", path),
    )
