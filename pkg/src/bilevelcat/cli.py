"""Batch command-line harness.

Subcommands: `generate`, `split`, `train`, `evaluate`, `sweep`, `report`.
All outputs are headered UTF-8 CSV with LF newlines; all randomness flows
from explicit seeds, so identical invocations produce byte-identical files.
Exit codes: 0 success, 2 validation error, 3 numeric/divergence error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import data as data_mod
from .baselines import MapConfig, fit_irt
from .errors import NumericError, ValidationError
from .harness import (
    BASELINE_METHODS,
    BaselineMethodParams,
    LearnedMethodParams,
    METHODS,
    SweepRow,
    SweepSpec,
    evaluate,
    report,
    sweep,
    write_points_csv,
)
from .policy import load_policy_params, save_policy_params
from .response import (
    load_irt_params,
    load_neural_params,
    save_irt_params,
    save_neural_params,
)
from .trainer import TrainConfig, train, write_log_csv


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip() != ""]


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip() != ""]


def _load_dataset(args):
    ds = data_mod.load_csv(args.data)
    if getattr(args, "split", None):
        ds = data_mod.apply_split_csv(ds, args.split)
    return ds


def _partition(ds, args):
    return data_mod.partition_questions(ds, args.omega_fraction, [args.partition_seed, 7])


def _base_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    for flag, name in (
        ("lam", "lam"),
        ("tau", "tau"),
        ("test_length", "test_length"),
        ("seed", "seed"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("policy_hidden", "policy_hidden"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            cfg = replace(cfg, **{name: value})
    method = getattr(args, "method", None)
    if method == "c-binn":
        cfg = replace(cfg, model_variant="neural")
    elif method == "c-biirt":
        cfg = replace(cfg, model_variant="irt")
    cfg.validate()
    return cfg


def _cmd_generate(args) -> int:
    ds, truth = data_mod.generate_synthetic(
        args.n_students, args.n_questions, args.density, args.seed
    )
    data_mod.write_csv(ds, args.out)
    if args.truth:
        data_mod.write_truth_csv(args.truth, truth["abilities"], truth["difficulties"])
    print(f"wrote {ds.num_records} records to {args.out}")
    return 0


def _cmd_split(args) -> int:
    ds = data_mod.load_csv(args.data)
    ratios = _float_list(args.ratios)
    ds = data_mod.split_students(ds, ratios, args.seed)
    data_mod.write_split_csv(ds, args.out)
    counts = {tag: int((ds.split_tags == tag).sum()) for tag in data_mod.SPLIT_TAGS}
    print(f"wrote split tags to {args.out}: {counts}")
    return 0


def _cmd_train(args) -> int:
    ds = _load_dataset(args)
    partition = _partition(ds, args)
    cfg = _base_config(args)
    state = train(ds, partition, cfg)
    save_policy_params(state.best_phi, f"{args.out}.policy.csv")
    if cfg.model_variant == "irt":
        save_irt_params(state.best_gamma, f"{args.out}.response.csv")
    else:
        save_neural_params(state.best_gamma, f"{args.out}.response.csv")
    write_log_csv(state.log_rows, f"{args.out}.log.csv")
    print(
        f"trained {cfg.epochs} epochs; best validation AUC "
        f"{state.best_val_auc:.4f}; checkpoints at {args.out}.*"
    )
    return 0


def _method_params(args, ds, cfg):
    if args.method in BASELINE_METHODS:
        irt = fit_irt(ds, include_tags=("train",))
        return BaselineMethodParams(irt=irt, map_cfg=MapConfig(prior_precision=cfg.rho))
    if not args.checkpoint:
        raise ValidationError(f"--checkpoint is required for method {args.method}")
    policy = load_policy_params(f"{args.checkpoint}.policy.csv")
    if args.method == "c-biirt":
        response = load_irt_params(f"{args.checkpoint}.response.csv")
    else:
        response = load_neural_params(f"{args.checkpoint}.response.csv")
    return LearnedMethodParams(
        policy=policy,
        response=response,
        tau=cfg.tau,
        inner_steps=cfg.inner_steps,
        inner_lr=cfg.inner_lr,
        rho=cfg.rho,
        greedy=args.greedy,
    )


def _cmd_evaluate(args) -> int:
    ds = _load_dataset(args)
    partition = _partition(ds, args)
    cfg = _base_config(args)
    params = _method_params(args, ds, cfg)
    result = evaluate(
        args.method,
        params,
        ds,
        partition,
        ds.students_with_tag("test"),
        cfg.test_length,
        args.seed,
        lam=args.lam,
    )
    write_points_csv([SweepRow(args.method, result.point)], args.out)
    p = result.point
    print(
        f"{args.method}: auc={p.auc:.4f} expose_chi={p.expose_chi:.4f} "
        f"overlap_mu={p.overlap_mu:.4f} -> {args.out}"
    )
    return 0


def _cmd_sweep(args) -> int:
    ds = _load_dataset(args)
    partition = _partition(ds, args)
    cfg = _base_config(args)
    spec = SweepSpec(
        lambda_values=tuple(_float_list(args.lambdas)),
        base=cfg,
        out_path=args.out,
        eval_seeds=tuple(_int_list(args.eval_seeds)),
        repeats=args.repeats,
        include_baselines=not args.no_baselines,
    )
    rows = sweep(spec, ds, partition)
    print(f"wrote {len(rows)} points to {args.out}")
    return 0


def _cmd_report(args) -> int:
    first, second = report(args.points, args.out)
    print(f"wrote {first} and {second}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilevelcat",
        description="Adaptive-testing experiments: train selection policies, "
        "evaluate accuracy/security metrics, sweep the entropy weight.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic response dataset")
    gen.add_argument("--n-students", type=int, required=True)
    gen.add_argument("--n-questions", type=int, required=True)
    gen.add_argument("--density", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--truth", help="optional ground-truth sidecar CSV")
    gen.set_defaults(func=_cmd_generate)

    spl = sub.add_parser("split", help="tag students train/validation/test")
    spl.add_argument("--data", required=True)
    spl.add_argument("--ratios", default="0.6,0.2,0.2")
    spl.add_argument("--seed", type=int, default=0)
    spl.add_argument("--out", required=True)
    spl.set_defaults(func=_cmd_split)

    def add_shared(p, with_method: bool):
        p.add_argument("--data", required=True)
        p.add_argument("--split", required=True, help="split tags CSV")
        p.add_argument("--config", help="key = value training config file")
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--test-length", dest="test_length", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--policy-hidden", dest="policy_hidden", type=int, default=None)
        p.add_argument("--omega-fraction", type=float, default=0.8)
        p.add_argument("--partition-seed", type=int, default=0)
        if with_method:
            p.add_argument("--method", choices=METHODS, default="c-biirt")

    tr = sub.add_parser("train", help="train a selection policy + response model")
    add_shared(tr, with_method=True)
    tr.add_argument("--out", required=True, help="checkpoint/log path prefix")
    tr.set_defaults(func=_cmd_train)

    ev = sub.add_parser("evaluate", help="run test-cohort episodes for one method")
    add_shared(ev, with_method=True)
    ev.add_argument("--checkpoint", help="checkpoint prefix for learned methods")
    ev.add_argument("--greedy", action="store_true", help="argmax selection instead of sampling")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=_cmd_evaluate)

    sw = sub.add_parser("sweep", help="train/evaluate one point per entropy weight")
    add_shared(sw, with_method=True)
    sw.add_argument("--lambdas", required=True, help="comma-separated entropy weights")
    sw.add_argument("--repeats", type=int, default=1)
    sw.add_argument("--eval-seeds", default="0")
    sw.add_argument("--no-baselines", action="store_true")
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=_cmd_sweep)

    rp = sub.add_parser("report", help="emit plot-data files from a points CSV")
    rp.add_argument("--points", required=True)
    rp.add_argument("--out", required=True, help="output path prefix")
    rp.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
