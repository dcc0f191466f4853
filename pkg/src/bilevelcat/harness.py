"""End-to-end experiment harness: adaptive-test episodes on held-back
students, cohort evaluation, entropy-weight sweeps, and plot-data reports.

Evaluation replays recorded responses, so every method draws from the same
per-student availability pool (the questions that student actually
answered) and the security metrics are comparable across methods.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import MapConfig, fit_irt, map_estimate_theta, select_active, select_random
from .data import EpisodeState, InnerOuterPartition, ResponseDataset
from .errors import ArgumentError, DivergenceError, MetricUndefinedError, StateError
from .metrics import (
    TradeoffPoint,
    auc,
    exposure_from_administrations,
    expose_chi,
    overlap_mu,
)
from .numerics import format_float
from .policy import PolicyParams, entropy, forward_logits, gumbel_softmax_sample, masked_softmax
from .response import IrtParams, NeuralResponseParams, predict_all
from .trainer import TrainConfig, inner_adapt_numpy, train

logger = logging.getLogger(__name__)

LEARNED_METHODS = ("c-biirt", "c-binn")
BASELINE_METHODS = ("irt-active", "irt-random")
METHODS = LEARNED_METHODS + BASELINE_METHODS
POINTS_HEADER = ("method", "lambda", "auc", "expose_chi", "overlap_mu")


@dataclass(frozen=True)
class LearnedMethodParams:
    """Trained policy + response model plus the episode-time settings."""

    policy: PolicyParams
    response: IrtParams | NeuralResponseParams
    tau: float = 1.0
    inner_steps: int = 5
    inner_lr: float = 0.1
    rho: float = 1.0
    greedy: bool = False


@dataclass(frozen=True)
class BaselineMethodParams:
    irt: IrtParams
    map_cfg: MapConfig = MapConfig()


@dataclass(frozen=True)
class EpisodeOutcome:
    administered: tuple[int, ...]
    theta: float | np.ndarray
    probs: np.ndarray
    labels: np.ndarray
    step_entropies: tuple[float, ...]


@dataclass(frozen=True)
class EvalResult:
    """Per-student episode outputs plus the aggregated metric point."""

    method: str
    administered: tuple[tuple[int, ...], ...]
    probs: tuple[np.ndarray, ...]
    labels: tuple[np.ndarray, ...]
    point: TradeoffPoint
    mean_step_entropy: float


def _seed_list(seed) -> list[int]:
    if isinstance(seed, (list, tuple, np.ndarray)):
        return [int(s) for s in seed]
    return [int(seed)]


def run_cat_episode(
    method: str,
    params,
    ds: ResponseDataset,
    partition: InnerOuterPartition,
    student_id: int,
    test_length: int,
    rng,
) -> EpisodeOutcome:
    """Administer one adaptive test to one student, replaying recorded answers.

    Availability is the student's answered questions minus those already
    administered. Learned methods finish by adapting the ability on the
    administered responses; baselines finish with a MAP estimate. Predictions
    cover the student's held-out meta questions.
    """
    if method not in METHODS:
        raise ArgumentError(f"unknown method {method!r}; expected one of {METHODS}")
    sid = int(student_id)
    y_full, answered = ds.response_vector(sid)
    gamma_ids = partition.gamma[sid]
    if len(gamma_ids) == 0:
        raise StateError(f"student {sid} has no held-out meta questions")
    if int(answered.sum()) < test_length:
        raise StateError(
            f"student {sid} has only {int(answered.sum())} answered questions; "
            f"cannot administer {test_length}"
        )
    avail = answered.copy()
    entropies: list[float] = []
    if method in LEARNED_METHODS:
        state = EpisodeState.fresh(sid, ds.num_questions)
        for _ in range(test_length):
            dist = masked_softmax(forward_logits(params.policy, state.input_vec), avail)
            entropies.append(entropy(dist))
            if params.greedy:
                pick = int(np.argmax(dist.probs))
            else:
                _, hard = gumbel_softmax_sample(dist, params.tau, rng)
                pick = int(np.argmax(hard))
            state = state.extend(pick, int(y_full[pick]))
            avail[pick] = False
        theta = inner_adapt_numpy(
            params.response,
            list(zip(state.selected, state.responses)),
            params.inner_steps,
            params.inner_lr,
            params.rho,
        )
        administered = state.selected
        probs = predict_all(params.response, theta)[gamma_ids]
    else:
        responses: list[tuple[int, int]] = []
        theta = float(params.map_cfg.prior_mean)
        for _ in range(test_length):
            if method == "irt-active":
                pick = select_active(params.irt, theta, avail)
            else:
                pick = select_random(avail, rng)
            responses.append((pick, int(y_full[pick])))
            avail[pick] = False
            theta = map_estimate_theta(params.irt, responses, params.map_cfg)
        administered = tuple(q for q, _ in responses)
        probs = predict_all(params.irt, theta)[gamma_ids]
    return EpisodeOutcome(
        administered=administered,
        theta=theta,
        probs=probs,
        labels=y_full[gamma_ids].astype(int),
        step_entropies=tuple(entropies),
    )


def _episodes(method, params, ds, partition, student_ids, test_length, eval_seed):
    base = _seed_list(eval_seed)
    for sid in student_ids:
        rng = np.random.default_rng(base + [int(sid)])
        yield run_cat_episode(method, params, ds, partition, int(sid), test_length, rng)


def pooled_auc_over_students(
    method, params, ds, partition, student_ids, test_length, eval_seed
) -> float:
    """Pooled meta AUC over a cohort; NaN when only one class is present."""
    pairs = []
    for out in _episodes(method, params, ds, partition, student_ids, test_length, eval_seed):
        pairs.extend(zip(out.probs.tolist(), out.labels.tolist()))
    try:
        return auc(pairs)
    except MetricUndefinedError:
        return float("nan")


def evaluate(
    method: str,
    params,
    ds: ResponseDataset,
    partition: InnerOuterPartition,
    student_ids,
    test_length: int,
    eval_seed,
    lam: float | None = None,
) -> EvalResult:
    """Run one episode per student and aggregate the three metrics.

    Episodes use independent per-student seed streams derived from
    `eval_seed`, so results do not depend on cohort order.
    """
    student_ids = [int(s) for s in student_ids]
    if not student_ids:
        raise ArgumentError("evaluation cohort is empty")
    outcomes = list(
        _episodes(method, params, ds, partition, student_ids, test_length, eval_seed)
    )
    pairs = []
    for out in outcomes:
        pairs.extend(zip(out.probs.tolist(), out.labels.tolist()))
    sets = [out.administered for out in outcomes]
    profile = exposure_from_administrations(sets, ds.num_questions)
    point = TradeoffPoint(
        lam=lam,
        auc=auc(pairs),
        expose_chi=expose_chi(profile),
        overlap_mu=overlap_mu(sets, test_length),
    )
    all_entropies = [h for out in outcomes for h in out.step_entropies]
    return EvalResult(
        method=method,
        administered=tuple(sets),
        probs=tuple(out.probs for out in outcomes),
        labels=tuple(out.labels for out in outcomes),
        point=point,
        mean_step_entropy=float(np.mean(all_entropies)) if all_entropies else float("nan"),
    )


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """A sweep over entropy weights, with shared training settings.

    `overrides` maps an entropy weight to TrainConfig field replacements for
    that point only. Each (weight, repeat) pair trains from a fresh derived
    seed; metrics are averaged over `eval_seeds` and repeats.
    """

    lambda_values: tuple[float, ...]
    base: TrainConfig
    out_path: str | None = None
    eval_seeds: tuple[int, ...] = (0,)
    repeats: int = 1
    include_baselines: bool = True
    map_cfg: MapConfig = MapConfig()
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        values = tuple(float(v) for v in self.lambda_values)
        object.__setattr__(self, "lambda_values", values)
        if not values:
            raise ArgumentError("lambda_values must be nonempty")
        if any(v < 0 for v in values):
            raise ArgumentError("lambda_values must be nonnegative")
        if list(values) != sorted(values):
            raise ArgumentError("lambda_values must be sorted ascending")
        if self.repeats < 1 or not self.eval_seeds:
            raise ArgumentError("repeats must be >= 1 and eval_seeds nonempty")


@dataclass(frozen=True)
class SweepRow:
    method: str
    point: TradeoffPoint


def _derived_seed(base_seed: int, *stream: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), *stream]).generate_state(1)[0])


def _mean_point(lam, triples) -> TradeoffPoint:
    arr = np.array(triples)
    return TradeoffPoint(
        lam=lam,
        auc=float(arr[:, 0].mean()),
        expose_chi=float(arr[:, 1].mean()),
        overlap_mu=float(arr[:, 2].mean()),
    )


def sweep(spec: SweepSpec, ds: ResponseDataset, partition: InnerOuterPartition) -> list[SweepRow]:
    """Train and evaluate one point per entropy weight, plus baseline points.

    A point whose training diverges is skipped with a logged diagnostic.
    Emits the points CSV when `spec.out_path` is set.
    """
    test_ids = ds.students_with_tag("test")
    if len(test_ids) == 0:
        raise ArgumentError("no students tagged test")
    method = "c-biirt" if spec.base.model_variant == "irt" else "c-binn"
    rows: list[SweepRow] = []
    for k, lam in enumerate(spec.lambda_values):
        triples = []
        diverged = False
        for rep in range(spec.repeats):
            cfg = replace(spec.base, lam=lam, seed=_derived_seed(spec.base.seed, k, rep))
            cfg = replace(cfg, **spec.overrides.get(lam, {}))
            try:
                state = train(ds, partition, cfg)
            except DivergenceError as exc:
                logger.warning("training diverged at lambda=%g: %s", lam, exc)
                diverged = True
                break
            params = LearnedMethodParams(
                policy=state.best_phi,
                response=state.best_gamma,
                tau=cfg.tau,
                inner_steps=cfg.inner_steps,
                inner_lr=cfg.inner_lr,
                rho=cfg.rho,
            )
            for es in spec.eval_seeds:
                result = evaluate(
                    method, params, ds, partition, test_ids, cfg.test_length, es, lam=lam
                )
                triples.append(
                    (result.point.auc, result.point.expose_chi, result.point.overlap_mu)
                )
        if not diverged and triples:
            rows.append(SweepRow(method, _mean_point(lam, triples)))
    if spec.include_baselines:
        irt = fit_irt(ds, include_tags=("train",))
        baseline = BaselineMethodParams(irt=irt, map_cfg=spec.map_cfg)
        for bmethod in BASELINE_METHODS:
            triples = []
            for es in spec.eval_seeds:
                result = evaluate(
                    bmethod, baseline, ds, partition, test_ids, spec.base.test_length, es
                )
                triples.append(
                    (result.point.auc, result.point.expose_chi, result.point.overlap_mu)
                )
            rows.append(SweepRow(bmethod, _mean_point(None, triples)))
    if spec.out_path is not None:
        write_points_csv(rows, spec.out_path)
    return rows


def write_points_csv(rows: list[SweepRow], path) -> None:
    """`method,lambda,auc,expose_chi,overlap_mu`; baselines get an empty lambda."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(POINTS_HEADER) + "\n")
        for row in rows:
            p = row.point
            lam_text = "" if p.lam is None else format_float(p.lam)
            fh.write(
                f"{row.method},{lam_text},{format_float(p.auc)},"
                f"{format_float(p.expose_chi)},{format_float(p.overlap_mu)}\n"
            )


def read_points_csv(path) -> list[SweepRow]:
    path = Path(path)
    rows: list[SweepRow] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != POINTS_HEADER:
            raise ArgumentError(f"{path}: expected header {','.join(POINTS_HEADER)!r}")
        for row in reader:
            if len(row) != 5:
                raise ArgumentError(f"{path}: malformed row {row!r}")
            lam = None if row[1] == "" else float(row[1])
            rows.append(
                SweepRow(
                    row[0],
                    TradeoffPoint(
                        lam=lam,
                        auc=float(row[2]),
                        expose_chi=float(row[3]),
                        overlap_mu=float(row[4]),
                    ),
                )
            )
    return rows


def report(points_path, out_prefix) -> tuple[Path, Path]:
    """Emit two plot-ready files from a points CSV.

    One file per security axis: (expose_chi, auc) and (overlap_mu, auc),
    one series per method, rows sorted by the x value within each series.
    """
    rows = read_points_csv(points_path)
    if not rows:
        raise ArgumentError(f"{points_path}: no data rows to report")
    by_method: dict[str, list[TradeoffPoint]] = {}
    for row in rows:
        by_method.setdefault(row.method, []).append(row.point)
    out_prefix = Path(out_prefix)
    paths = []
    for axis in ("expose_chi", "overlap_mu"):
        path = out_prefix.parent / f"{out_prefix.name}_{axis}_vs_auc.csv"
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"method,{axis},auc\n")
            for method, points in by_method.items():
                for p in sorted(points, key=lambda p: getattr(p, axis)):
                    fh.write(
                        f"{method},{format_float(getattr(p, axis))},{format_float(p.auc)}\n"
                    )
        paths.append(path)
    return paths[0], paths[1]
