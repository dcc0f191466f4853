"""Global response models: probability a student answers a question correctly.

Two parameter families share one interface: a one-parameter logistic model
(per-question difficulties plus a scalar prior-mean ability) and a small
one-hidden-layer network mapping a latent ability vector to per-question
correctness logits. Both are paired with the binary cross-entropy loss and
a quadratic proximal penalty that keeps adapted abilities near the prior
mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ParseError
from .numerics import format_float, sigmoid

# Ability estimates are a scalar for the logistic model and a small latent
# vector for the neural model.
Ability = float | np.ndarray

PROB_CLAMP = 1e-7
CHECKPOINT_HEADER = ("name", "index", "value")


@dataclass(frozen=True)
class IrtParams:
    """One-parameter logistic model: difficulties plus a prior-mean ability."""

    difficulties: np.ndarray
    prior_mean: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "difficulties", np.asarray(self.difficulties, dtype=float)
        )
        if not np.isfinite(self.difficulties).all() or not np.isfinite(self.prior_mean):
            raise ArgumentError("response parameters must be finite")

    @property
    def num_questions(self) -> int:
        return len(self.difficulties)


@dataclass(frozen=True)
class NeuralResponseParams:
    """One-hidden-layer network from ability vector to per-question logits."""

    w1: np.ndarray  # (hidden, ability_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (num_questions, hidden)
    b2: np.ndarray  # (num_questions,)
    prior_mean: np.ndarray  # (ability_dim,)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "prior_mean"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if not np.isfinite(arr).all():
                raise ArgumentError(f"{name} must be finite")
        h, d = self.w1.shape
        q = self.w2.shape[0]
        if self.b1.shape != (h,) or self.w2.shape != (q, h) or self.b2.shape != (q,):
            raise ArgumentError("inconsistent network shapes")
        if self.prior_mean.shape != (d,):
            raise ArgumentError("prior_mean must match the ability dimension")

    @property
    def num_questions(self) -> int:
        return self.w2.shape[0]

    @property
    def ability_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def init(cls, rng, num_questions: int, ability_dim: int = 4, hidden_dim: int = 64):
        """Small random weights, zero biases and prior mean."""
        return cls(
            w1=rng.standard_normal((hidden_dim, ability_dim)) / np.sqrt(ability_dim),
            b1=np.zeros(hidden_dim),
            w2=rng.standard_normal((num_questions, hidden_dim)) / np.sqrt(hidden_dim),
            b2=np.zeros(num_questions),
            prior_mean=np.zeros(ability_dim),
        )

    def logits(self, theta: np.ndarray) -> np.ndarray:
        hidden = np.tanh(self.w1 @ np.asarray(theta, dtype=float) + self.b1)
        return self.w2 @ hidden + self.b2


def predict_all(params, theta: Ability) -> np.ndarray:
    """Correctness probabilities over the whole pool, clamped into (0, 1)."""
    if isinstance(params, IrtParams):
        raw = sigmoid(float(theta) - params.difficulties)
    else:
        raw = sigmoid(params.logits(theta))
    return np.clip(raw, PROB_CLAMP, 1.0 - PROB_CLAMP)


def predict_prob(params, theta: Ability, question: int) -> float:
    """Probability the student answers `question` correctly."""
    if not 0 <= question < params.num_questions:
        raise ArgumentError(f"question {question} outside pool of {params.num_questions}")
    return float(predict_all(params, theta)[question])


def bce_loss(y: int, p: float) -> float:
    """Binary cross-entropy with the probability clamped to [1e-7, 1 - 1e-7]."""
    p = min(max(float(p), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return float(-(y * np.log(p) + (1 - y) * np.log(1.0 - p)))


def prox_penalty(theta: Ability, prior_mean: Ability, rho: float) -> float:
    """(rho / 2) * ||theta - prior_mean||^2."""
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    m = np.atleast_1d(np.asarray(prior_mean, dtype=float))
    if t.shape != m.shape:
        raise ArgumentError("theta and prior_mean shapes differ")
    diff = t - m
    return float(0.5 * rho * (diff @ diff))


def bce_vec_tape(tape, p, y):
    """Per-question cross-entropy terms on the tape; `p` must be pre-clamped."""
    fit = tape.mul(y, tape.log(p))
    miss = tape.mul(1.0 - np.asarray(y, dtype=float), tape.log(tape.sub(1.0, p)))
    return tape.neg(tape.add(fit, miss))


def clamped_probs_tape(tape, raw_probs):
    return tape.clip(raw_probs, PROB_CLAMP, 1.0 - PROB_CLAMP)


# -- checkpoint io -----------------------------------------------------------


def _write_rows(path, rows) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CHECKPOINT_HEADER) + "\n")
        for name, index, value in rows:
            fh.write(f"{name},{index},{format_float(value)}\n")


def _read_rows(path) -> dict[str, dict[int, float]]:
    path = Path(path)
    out: dict[str, dict[int, float]] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CHECKPOINT_HEADER:
            raise ParseError(f"{path}: expected header {','.join(CHECKPOINT_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 columns")
            try:
                out.setdefault(row[0], {})[int(row[1])] = float(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    return out


def _vector(entries: dict[int, float], name: str, path) -> np.ndarray:
    if not entries:
        raise ParseError(f"{path}: missing {name!r} entries")
    return np.array([entries[i] for i in range(max(entries) + 1)])


def _flat_rows(name: str, arr: np.ndarray):
    for i, v in enumerate(np.asarray(arr, dtype=float).ravel()):
        yield name, i, v


def save_irt_params(params: IrtParams, path) -> None:
    rows = list(_flat_rows("difficulties", params.difficulties))
    rows.append(("prior_mean", 0, params.prior_mean))
    _write_rows(path, rows)


def load_irt_params(path) -> IrtParams:
    table = _read_rows(path)
    return IrtParams(
        difficulties=_vector(table.get("difficulties", {}), "difficulties", path),
        prior_mean=table.get("prior_mean", {0: 0.0})[0],
    )


def save_neural_params(params: NeuralResponseParams, path) -> None:
    rows = [
        ("ability_dim", 0, params.ability_dim),
        ("hidden_dim", 0, params.hidden_dim),
        ("num_questions", 0, params.num_questions),
    ]
    for name in ("w1", "b1", "w2", "b2", "prior_mean"):
        rows.extend(_flat_rows(name, getattr(params, name)))
    _write_rows(path, rows)


def load_neural_params(path) -> NeuralResponseParams:
    table = _read_rows(path)
    try:
        d = int(table["ability_dim"][0])
        h = int(table["hidden_dim"][0])
        q = int(table["num_questions"][0])
    except KeyError as exc:
        raise ParseError(f"{path}: missing dimension entry {exc}") from exc
    return NeuralResponseParams(
        w1=_vector(table["w1"], "w1", path).reshape(h, d),
        b1=_vector(table["b1"], "b1", path),
        w2=_vector(table["w2"], "w2", path).reshape(q, h),
        b2=_vector(table["b2"], "b2", path),
        prior_mean=_vector(table["prior_mean"], "prior_mean", path),
    )
