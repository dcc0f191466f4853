"""Joint training of the selection policy and the response model.

Each training step rolls out an adaptive test per student on the tape
(selection stays differentiable through the Gumbel-Softmax relaxation),
adapts the ability estimate with a fixed number of unrolled gradient-descent
steps, scores the adapted estimate on the student's held-out meta questions,
and subtracts an entropy bonus on the selection distributions weighted by
`lam`. One reverse sweep then yields gradients for both parameter sets,
which an Adam loop applies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import InnerOuterPartition, ResponseDataset
from .errors import (
    ArgumentError,
    DivergenceError,
    NumericError,
    ParseError,
    StateError,
)
from .numerics import format_float, sigmoid
from .policy import PolicyParams, forward_logits_tape, sample_gumbel
from .response import (
    IrtParams,
    NeuralResponseParams,
    bce_vec_tape,
    clamped_probs_tape,
)
from .tape import Tape

logger = logging.getLogger(__name__)

MODEL_VARIANTS = ("irt", "neural")
LOG_HEADER = ("epoch", "outer_loss", "val_auc", "mean_entropy")


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    `lam` weights the selection-entropy bonus in the outer objective: 0
    recovers the plain accuracy-only problem, large values push selection
    toward uniform. `tau` is the fixed Gumbel-Softmax temperature,
    `test_length` the number of questions per episode, `inner_steps` and
    `inner_lr` control the unrolled ability adaptation, and `rho` the
    proximal pull toward the prior mean.
    """

    lam: float = 0.0
    tau: float = 1.0
    test_length: int = 10
    inner_steps: int = 5
    inner_lr: float = 0.1
    rho: float = 1.0
    outer_lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0
    model_variant: str = "irt"
    policy_hidden: int = 256
    ability_dim: int = 4
    response_hidden: int = 64
    warm_start: int = 1  # 1: init logistic difficulties from a train-cohort fit

    def validate(self) -> None:
        if self.lam < 0 or self.rho < 0:
            raise ArgumentError("lam and rho must be nonnegative")
        if self.tau <= 0 or self.inner_lr <= 0 or self.outer_lr <= 0:
            raise ArgumentError("tau, inner_lr, and outer_lr must be positive")
        if self.test_length < 0 or self.inner_steps < 0 or self.epochs < 0:
            raise ArgumentError("counts must be nonnegative")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be at least 1")
        if self.model_variant not in MODEL_VARIANTS:
            raise ArgumentError(f"model_variant must be one of {MODEL_VARIANTS}")

    def to_file(self, path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for f in fields(self):
                key = "lambda" if f.name == "lam" else f.name
                value = getattr(self, f.name)
                text = format_float(value) if isinstance(value, float) else str(value)
                fh.write(f"{key} = {text}\n")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        path = Path(path)
        by_name = {f.name: f for f in fields(cls)}
        values = {}
        with path.open(encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError(f"{path}: line {lineno}: expected `key = value`")
                key, text = (part.strip() for part in line.split("=", 1))
                if key == "lambda":
                    key = "lam"
                if key not in by_name:
                    raise ParseError(f"{path}: line {lineno}: unknown key {key!r}")
                kind = by_name[key].type
                try:
                    if kind == "int":
                        values[key] = int(text)
                    elif kind == "float":
                        values[key] = float(text)
                    else:
                        values[key] = text
                except ValueError as exc:
                    raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        cfg = cls(**values)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class StudentBundle:
    """Per-student constants consumed by the outer objective."""

    sid: int
    y_full: np.ndarray
    omega_mask: np.ndarray
    gamma_mask: np.ndarray  # float 0/1, dotted against per-question losses


@dataclass
class TrainState:
    """Final parameters plus the per-epoch training log."""

    phi: PolicyParams
    gamma: IrtParams | NeuralResponseParams
    best_phi: PolicyParams
    best_gamma: IrtParams | NeuralResponseParams
    best_val_auc: float
    outer_loss_history: list = field(default_factory=list)
    val_auc_history: list = field(default_factory=list)
    log_rows: list = field(default_factory=list)


def student_bundles(
    ds: ResponseDataset, partition: InnerOuterPartition, student_ids
) -> list[StudentBundle]:
    bundles = []
    for sid in student_ids:
        sid = int(sid)
        y_full, _ = ds.response_vector(sid)
        omega_mask = np.zeros(ds.num_questions, dtype=bool)
        omega_mask[partition.omega[sid]] = True
        gamma_mask = np.zeros(ds.num_questions)
        gamma_mask[partition.gamma[sid]] = 1.0
        bundles.append(StudentBundle(sid, y_full, omega_mask, gamma_mask))
    return bundles


class Adam:
    """Adam over a dict of named parameters (floats or flat arrays)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for name, g in grads.items():
            m = self.m.get(name, 0.0)
            v = self.v.get(name, 0.0)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name], self.v[name] = m, v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            params[name] = params[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- parameter packing -------------------------------------------------------


def _policy_flats(phi: PolicyParams) -> dict:
    return {
        "pw1": phi.w1.ravel().copy(),
        "pb1": phi.b1.copy(),
        "pw2": phi.w2.ravel().copy(),
        "pb2": phi.b2.copy(),
    }


def _policy_from_flats(flats: dict, q: int, h: int) -> PolicyParams:
    return PolicyParams(
        w1=flats["pw1"].reshape(h, q).copy(),
        b1=flats["pb1"].copy(),
        w2=flats["pw2"].reshape(q, h).copy(),
        b2=flats["pb2"].copy(),
    )


def _gamma_flats(gamma) -> dict:
    if isinstance(gamma, IrtParams):
        return {
            "difficulties": gamma.difficulties.copy(),
            "prior_mean": float(gamma.prior_mean),
        }
    return {
        "rw1": gamma.w1.ravel().copy(),
        "rb1": gamma.b1.copy(),
        "rw2": gamma.w2.ravel().copy(),
        "rb2": gamma.b2.copy(),
        "prior_mean": gamma.prior_mean.copy(),
    }


def _gamma_from_flats(flats: dict, q: int, d: int, h: int):
    if "difficulties" in flats:
        return IrtParams(
            difficulties=flats["difficulties"].copy(),
            prior_mean=float(flats["prior_mean"]),
        )
    return NeuralResponseParams(
        w1=flats["rw1"].reshape(h, d).copy(),
        b1=flats["rb1"].copy(),
        w2=flats["rw2"].reshape(q, h).copy(),
        b2=flats["rb2"].copy(),
        prior_mean=np.asarray(flats["prior_mean"]).copy(),
    )


def _lift_all(tape: Tape, flats: dict) -> dict:
    return {name: tape.lift(value) for name, value in flats.items()}


# -- inner adaptation --------------------------------------------------------


def inner_adapt(tape: Tape, gamma_vars: dict, selected, y_full: np.ndarray, cfg: TrainConfig):
    """Unrolled ability adaptation on the tape.

    `selected` holds (question_id, weight Var, response) triples; each
    weight vector spans the question pool (one-hot on the hard path, a
    simplex vector on the soft path) and scales that step's loss term, so
    gradients reach the policy parameters through the weights. Returns the
    adapted ability Var after `inner_steps` descent steps from the prior
    mean.
    """
    mu = gamma_vars["prior_mean"]
    if not selected:
        return mu
    wsum = selected[0][1]
    for _, w, _ in selected[1:]:
        wsum = tape.add(wsum, w)
    theta = mu
    if "difficulties" in gamma_vars:
        b = gamma_vars["difficulties"]
        for _ in range(cfg.inner_steps):
            p = tape.sigmoid(tape.sub(theta, b))
            pull = tape.dot(wsum, tape.sub(p, y_full))
            grad = tape.add(pull, tape.mul(cfg.rho, tape.sub(theta, mu)))
            theta = tape.sub(theta, tape.mul(cfg.inner_lr, grad))
        return theta
    q = len(y_full)
    d, h = cfg.ability_dim, cfg.response_hidden
    for _ in range(cfg.inner_steps):
        act = tape.tanh(tape.add(tape.matvec(gamma_vars["rw1"], theta, h, d), gamma_vars["rb1"]))
        out = tape.add(tape.matvec(gamma_vars["rw2"], act, q, h), gamma_vars["rb2"])
        p = tape.sigmoid(out)
        residual = tape.mul(wsum, tape.sub(p, y_full))
        back_h = tape.matvec_t(gamma_vars["rw2"], residual, q, h)
        gate = tape.mul(back_h, tape.sub(1.0, tape.mul(act, act)))
        pull = tape.matvec_t(gamma_vars["rw1"], gate, h, d)
        grad = tape.add(pull, tape.mul(cfg.rho, tape.sub(theta, mu)))
        theta = tape.sub(theta, tape.mul(cfg.inner_lr, grad))
    return theta


def inner_adapt_numpy(gamma, selected_pairs, inner_steps: int, inner_lr: float, rho: float):
    """Plain-numpy twin of `inner_adapt` for hard (one-hot) selections."""
    if isinstance(gamma, IrtParams):
        theta = float(gamma.prior_mean)
        if not selected_pairs:
            return theta
        qs = np.array([q for q, _ in selected_pairs], dtype=int)
        ys = np.array([y for _, y in selected_pairs], dtype=float)
        b = gamma.difficulties[qs]
        for _ in range(inner_steps):
            grad = float((sigmoid(theta - b) - ys).sum()) + rho * (theta - gamma.prior_mean)
            theta -= inner_lr * grad
        return theta
    theta = gamma.prior_mean.copy()
    if not selected_pairs:
        return theta
    weights = np.zeros(gamma.num_questions)
    y_sel = np.zeros(gamma.num_questions)
    for q, y in selected_pairs:
        weights[q] += 1.0
        y_sel[q] = y
    for _ in range(inner_steps):
        act = np.tanh(gamma.w1 @ theta + gamma.b1)
        p = sigmoid(gamma.w2 @ act + gamma.b2)
        residual = weights * (p - y_sel)
        gate = (gamma.w2.T @ residual) * (1.0 - act * act)
        grad = gamma.w1.T @ gate + rho * (theta - gamma.prior_mean)
        theta = theta - inner_lr * grad
    return theta


# -- outer objective ---------------------------------------------------------


def _predict_probs_tape(tape: Tape, gamma_vars: dict, theta, cfg: TrainConfig, q: int):
    if "difficulties" in gamma_vars:
        raw = tape.sigmoid(tape.sub(theta, gamma_vars["difficulties"]))
    else:
        d, h = cfg.ability_dim, cfg.response_hidden
        act = tape.tanh(tape.add(tape.matvec(gamma_vars["rw1"], theta, h, d), gamma_vars["rb1"]))
        raw = tape.sigmoid(tape.add(tape.matvec(gamma_vars["rw2"], act, q, h), gamma_vars["rb2"]))
    return clamped_probs_tape(tape, raw)


def outer_objective(
    tape: Tape,
    phi_vars: dict,
    gamma_vars: dict,
    students: list[StudentBundle],
    cfg: TrainConfig,
    rng,
    hard: bool = True,
    batched: bool | None = None,
):
    """Entropy-regularized outer loss for one batch, built on the tape.

    For each student: roll out `test_length` selections from the student's
    inner question set, recording the entropy of each (masked) selection
    distribution; adapt the ability on the selected questions; sum the
    cross-entropy of the adapted predictions over the meta set. The batch
    loss is mean(meta loss) - lam * mean(summed entropies).

    `hard` picks the straight-through pairing (one-hot forward, soft
    backward); `hard=False` feeds the soft weights directly, which makes the
    whole objective exactly differentiable and is what gradient checks use.
    Returns (loss Var, info dict with float diagnostics).

    Two equivalent graph layouts exist: a per-student one (one subgraph per
    episode) and a batched one that stacks the cohort row-wise so each step
    is a handful of wide nodes. They differ only in floating-point reduction
    order and in how rollout noise is consumed from `rng`; `batched=None`
    picks the batched layout for multi-student batches.
    """
    if not students:
        raise ArgumentError("empty batch")
    if batched is None:
        batched = len(students) > 1
    if batched:
        return _outer_objective_batched(tape, phi_vars, gamma_vars, students, cfg, rng, hard)
    return _outer_objective_sequential(tape, phi_vars, gamma_vars, students, cfg, rng, hard)


def _outer_objective_sequential(
    tape: Tape,
    phi_vars: dict,
    gamma_vars: dict,
    students: list[StudentBundle],
    cfg: TrainConfig,
    rng,
    hard: bool,
):
    q = len(students[0].y_full)
    meta_sum = None
    ent_sum = None
    ent_values = []
    for st in students:
        if not st.gamma_mask.any():
            raise StateError(f"student {st.sid} has an empty meta set")
        if int(st.omega_mask.sum()) < cfg.test_length:
            raise StateError(
                f"student {st.sid} has fewer than {cfg.test_length} selectable questions"
            )
        avail = st.omega_mask.copy()
        input_vec = np.zeros(q)
        selected = []
        for _ in range(cfg.test_length):
            logits = forward_logits_tape(tape, phi_vars, input_vec, cfg.policy_hidden)
            dist = tape.masked_softmax(logits, avail)
            step_ent = tape.entropy(dist)
            ent_values.append(step_ent.value)
            ent_sum = step_ent if ent_sum is None else tape.add(ent_sum, step_ent)
            noise = sample_gumbel(rng, q)
            soft = tape.masked_softmax(tape.div(tape.add(logits, noise), cfg.tau), avail)
            pick = int(np.argmax(soft.value))
            if hard:
                one_hot = np.zeros(q)
                one_hot[pick] = 1.0
                weight = tape.straight_through(soft, one_hot)
            else:
                weight = soft
            y = float(st.y_full[pick])
            selected.append((pick, weight, y))
            avail = avail.copy()
            avail[pick] = False
            input_vec = input_vec.copy()
            input_vec[pick] = 1.0 if y else -1.0
        theta_star = inner_adapt(tape, gamma_vars, selected, st.y_full, cfg)
        probs = _predict_probs_tape(tape, gamma_vars, theta_star, cfg, q)
        meta_i = tape.dot(st.gamma_mask, bce_vec_tape(tape, probs, st.y_full))
        meta_sum = meta_i if meta_sum is None else tape.add(meta_sum, meta_i)
    n = float(len(students))
    meta_mean = tape.div(meta_sum, n)
    if ent_sum is None:
        loss = meta_mean
        mean_h = 0.0
    else:
        ent_mean = tape.div(ent_sum, n)
        loss = tape.sub(meta_mean, tape.mul(cfg.lam, ent_mean))
        mean_h = ent_mean.value
    info = {
        "meta_mean": meta_mean.value,
        "mean_total_entropy": mean_h,
        "mean_step_entropy": float(np.mean(ent_values)) if ent_values else 0.0,
    }
    return loss, info


def _batched_response_probs(tape, gamma_vars, theta, cfg, n, q, cache):
    """(probs, hidden activation or None) for a stack of `n` abilities."""
    if "difficulties" in gamma_vars:
        if "b_tiled" not in cache:
            cache["b_tiled"] = tape.tile(gamma_vars["difficulties"], n)
        p = tape.sigmoid(tape.sub(tape.repeat_each(theta, q), cache["b_tiled"]))
        return p, None
    d, h = cfg.ability_dim, cfg.response_hidden
    if "rb1_t" not in cache:
        cache["rb1_t"] = tape.tile(gamma_vars["rb1"], n)
        cache["rb2_t"] = tape.tile(gamma_vars["rb2"], n)
    act = tape.tanh(
        tape.add(tape.batched_matvec(gamma_vars["rw1"], theta, n, h, d), cache["rb1_t"])
    )
    out = tape.add(tape.batched_matvec(gamma_vars["rw2"], act, n, q, h), cache["rb2_t"])
    return tape.sigmoid(out), act


def _outer_objective_batched(
    tape: Tape,
    phi_vars: dict,
    gamma_vars: dict,
    students: list[StudentBundle],
    cfg: TrainConfig,
    rng,
    hard: bool,
):
    n = len(students)
    q = len(students[0].y_full)
    h = cfg.policy_hidden
    irt = "difficulties" in gamma_vars
    y_mat = np.stack([st.y_full for st in students])
    avail = np.stack([st.omega_mask for st in students])
    gamma_mask = np.stack([st.gamma_mask for st in students])
    for st in students:
        if not st.gamma_mask.any():
            raise StateError(f"student {st.sid} has an empty meta set")
        if int(st.omega_mask.sum()) < cfg.test_length:
            raise StateError(
                f"student {st.sid} has fewer than {cfg.test_length} selectable questions"
            )
    y_flat = y_mat.ravel()
    rows = np.arange(n)
    input_mat = np.zeros((n, q))
    pb1_t = tape.tile(phi_vars["pb1"], n)
    pb2_t = tape.tile(phi_vars["pb2"], n)
    ent_acc = None
    wsum = None
    ent_values = []
    for _ in range(cfg.test_length):
        hidden = tape.tanh(
            tape.add(tape.batched_matvec(phi_vars["pw1"], input_mat.ravel(), n, h, q), pb1_t)
        )
        logits = tape.add(tape.batched_matvec(phi_vars["pw2"], hidden, n, q, h), pb2_t)
        dist = tape.batched_masked_softmax(logits, avail)
        ent_b = tape.batched_entropy(dist, n, q)
        ent_values.append(float(ent_b.value.mean()))
        ent_acc = ent_b if ent_acc is None else tape.add(ent_acc, ent_b)
        noise = sample_gumbel(rng, n * q)
        soft = tape.batched_masked_softmax(tape.div(tape.add(logits, noise), cfg.tau), avail)
        picks = np.argmax(soft.value.reshape(n, q), axis=1)
        if hard:
            one_hot = np.zeros((n, q))
            one_hot[rows, picks] = 1.0
            weight = tape.straight_through(soft, one_hot.ravel())
        else:
            weight = soft
        wsum = weight if wsum is None else tape.add(wsum, weight)
        avail = avail.copy()
        avail[rows, picks] = False
        input_mat = input_mat.copy()
        input_mat[rows, picks] = np.where(y_mat[rows, picks] > 0, 1.0, -1.0)
    cache: dict = {}
    mu = gamma_vars["prior_mean"]
    mu_b = tape.mul(np.ones(n), mu) if irt else tape.tile(mu, n)
    theta = mu_b
    if cfg.test_length > 0:
        for _ in range(cfg.inner_steps):
            p, act = _batched_response_probs(tape, gamma_vars, theta, cfg, n, q, cache)
            residual = tape.mul(wsum, tape.sub(p, y_flat))
            if irt:
                pull = tape.block_sum(residual, n, q)
            else:
                back_h = tape.batched_matvec_t(
                    gamma_vars["rw2"], residual, n, q, cfg.response_hidden
                )
                gate = tape.mul(back_h, tape.sub(1.0, tape.mul(act, act)))
                pull = tape.batched_matvec_t(
                    gamma_vars["rw1"], gate, n, cfg.response_hidden, cfg.ability_dim
                )
            grad = tape.add(pull, tape.mul(cfg.rho, tape.sub(theta, mu_b)))
            theta = tape.sub(theta, tape.mul(cfg.inner_lr, grad))
    raw, _ = _batched_response_probs(tape, gamma_vars, theta, cfg, n, q, cache)
    probs = clamped_probs_tape(tape, raw)
    bce = bce_vec_tape(tape, probs, y_flat)
    meta_b = tape.block_sum(tape.mul(gamma_mask.ravel(), bce), n, q)
    meta_mean = tape.div(tape.sum(meta_b), float(n))
    if ent_acc is None:
        loss = meta_mean
        mean_h = 0.0
    else:
        ent_mean = tape.div(tape.sum(ent_acc), float(n))
        loss = tape.sub(meta_mean, tape.mul(cfg.lam, ent_mean))
        mean_h = ent_mean.value
    info = {
        "meta_mean": meta_mean.value,
        "mean_total_entropy": mean_h,
        "mean_step_entropy": float(np.mean(ent_values)) if ent_values else 0.0,
    }
    return loss, info


# -- training loop -----------------------------------------------------------


def _init_params(cfg: TrainConfig, q: int, ds: ResponseDataset | None = None):
    rng = np.random.default_rng([cfg.seed, 0])
    phi = PolicyParams.init(rng, q, cfg.policy_hidden)
    if cfg.model_variant == "irt":
        difficulties = np.zeros(q)
        if cfg.warm_start and ds is not None:
            from .baselines import fit_irt

            difficulties = fit_irt(ds, include_tags=("train",)).difficulties
        gamma = IrtParams(difficulties=difficulties, prior_mean=0.0)
    else:
        gamma = NeuralResponseParams.init(rng, q, cfg.ability_dim, cfg.response_hidden)
    return phi, gamma


def _validation_auc(ds, partition, flats, cfg, q, epoch: int) -> float:
    from .harness import LearnedMethodParams, pooled_auc_over_students

    val_ids = ds.students_with_tag("validation")
    if len(val_ids) == 0 or cfg.test_length == 0:
        return float("nan")
    method = "c-biirt" if cfg.model_variant == "irt" else "c-binn"
    params = LearnedMethodParams(
        policy=_policy_from_flats(flats, q, cfg.policy_hidden),
        response=_gamma_from_flats(flats, q, cfg.ability_dim, cfg.response_hidden),
        tau=cfg.tau,
        inner_steps=cfg.inner_steps,
        inner_lr=cfg.inner_lr,
        rho=cfg.rho,
    )
    return pooled_auc_over_students(
        method, params, ds, partition, val_ids, cfg.test_length, [cfg.seed, 3, epoch]
    )


def train(ds: ResponseDataset, partition: InnerOuterPartition, cfg: TrainConfig) -> TrainState:
    """Mini-batch loop over training students; retains the best-validation
    checkpoint. Deterministic given `cfg.seed`."""
    cfg.validate()
    train_ids = ds.students_with_tag("train")
    if len(train_ids) == 0:
        raise ArgumentError("no students tagged train")
    min_pool = min(len(partition.omega[int(i)]) for i in train_ids)
    if cfg.test_length > min_pool:
        raise ArgumentError(
            f"test_length {cfg.test_length} exceeds the smallest inner set ({min_pool})"
        )
    q = ds.num_questions
    phi, gamma = _init_params(cfg, q, ds)
    flats = {**_policy_flats(phi), **_gamma_flats(gamma)}
    adam = Adam(cfg.outer_lr)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    noise_rng = np.random.default_rng([cfg.seed, 2])
    bundles = {int(sid): b for sid, b in zip(train_ids, student_bundles(ds, partition, train_ids))}

    state = TrainState(
        phi=phi, gamma=gamma, best_phi=phi, best_gamma=gamma, best_val_auc=float("-inf")
    )
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(train_ids)
        batch_losses = []
        batch_entropies = []
        for b_idx in range(0, len(order), cfg.batch_size):
            chunk = [bundles[int(sid)] for sid in order[b_idx : b_idx + cfg.batch_size]]
            step = b_idx // cfg.batch_size
            tape = Tape()
            all_vars = _lift_all(tape, flats)
            try:
                loss, info = outer_objective(
                    tape, all_vars, all_vars, chunk, cfg, noise_rng, hard=True
                )
                grads = tape.backward(loss)
            except NumericError as exc:
                raise DivergenceError(
                    f"non-finite value at epoch {epoch}, step {step}: {exc}"
                ) from exc
            adam.step(flats, {name: grads[var.index] for name, var in all_vars.items()})
            for name, value in flats.items():
                if not np.all(np.isfinite(value)):
                    raise DivergenceError(
                        f"parameter {name!r} non-finite after epoch {epoch}, step {step}"
                    )
            batch_losses.append(loss.value)
            batch_entropies.append(info["mean_step_entropy"])
        outer_loss = float(np.mean(batch_losses)) if batch_losses else float("nan")
        mean_entropy = float(np.mean(batch_entropies)) if batch_entropies else 0.0
        val_auc = _validation_auc(ds, partition, flats, cfg, q, epoch)
        state.outer_loss_history.append(outer_loss)
        state.val_auc_history.append(val_auc)
        state.log_rows.append((epoch, outer_loss, val_auc, mean_entropy))
        if np.isfinite(val_auc) and val_auc > state.best_val_auc:
            state.best_val_auc = val_auc
            state.best_phi = _policy_from_flats(flats, q, cfg.policy_hidden)
            state.best_gamma = _gamma_from_flats(flats, q, cfg.ability_dim, cfg.response_hidden)
        logger.debug(
            "epoch %d outer_loss %.5f val_auc %.4f entropy %.4f",
            epoch, outer_loss, val_auc, mean_entropy,
        )
    state.phi = _policy_from_flats(flats, q, cfg.policy_hidden)
    state.gamma = _gamma_from_flats(flats, q, cfg.ability_dim, cfg.response_hidden)
    if not np.isfinite(state.best_val_auc):
        state.best_phi, state.best_gamma = state.phi, state.gamma
    return state


def write_log_csv(log_rows, path) -> None:
    """Per-epoch training log: epoch,outer_loss,val_auc,mean_entropy."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LOG_HEADER) + "\n")
        for epoch, outer_loss, val_auc, mean_entropy in log_rows:
            fh.write(
                f"{epoch},{format_float(outer_loss)},{format_float(val_auc)},"
                f"{format_float(mean_entropy)}\n"
            )
