"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a PASS/FAIL line with its measured numbers (visible with
`pytest -v -rA` or `-s`). The heavy synthetic benchmark (2000 training
students, 200 questions, half-density responses) is built once per session
and shared by the criteria that need it.
"""

import dataclasses
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from bilevelcat.baselines import MapConfig, fit_irt
from bilevelcat.cli import main as cli_main
from bilevelcat.data import generate_synthetic, partition_questions, split_students
from bilevelcat.harness import (
    BaselineMethodParams,
    LearnedMethodParams,
    SweepSpec,
    evaluate,
    sweep,
)
from bilevelcat.metrics import ExposureProfile, auc, expose_chi, exposure_from_administrations, overlap_mu
from bilevelcat.tape import PRIMITIVE_KINDS, Tape, grad_check
from bilevelcat.trainer import (
    TrainConfig,
    _gamma_flats,
    _init_params,
    _lift_all,
    _policy_flats,
    inner_adapt_numpy,
    outer_objective,
    student_bundles,
    train,
)
from bilevelcat.response import IrtParams

from test_metrics import auc_brute_force, overlap_brute_force
from test_tape import PRIMITIVE_CASES
from test_trainer import packed_objective


def report(criterion: str, passed: bool, detail: str):
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} — {detail}")


BENCH_SEED = 20260808
LAMBDAS = (0.0, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0)


def bench_train_config(**overrides):
    cfg = TrainConfig(
        tau=1.0,
        test_length=10,
        inner_steps=5,
        inner_lr=0.3,
        rho=1.0,
        outer_lr=0.02,
        batch_size=256,
        epochs=25,
        seed=BENCH_SEED,
        policy_hidden=48,
    )
    return dataclasses.replace(cfg, **overrides)


@pytest.fixture(scope="session")
def benchmark():
    """2000 train / 667 validation / 667 test students, Q=200, density 0.5."""
    ds, truth = generate_synthetic(3334, 200, 0.5, seed=BENCH_SEED)
    ds = split_students(ds, (0.6, 0.2, 0.2), seed=BENCH_SEED + 1)
    part = partition_questions(ds, 0.8, seed=BENCH_SEED + 2)
    return ds, part, truth


@pytest.fixture(scope="session")
def benchmark_sweep(benchmark, tmp_path_factory):
    """The criterion-4 sweep: 7 entropy weights plus both baselines."""
    ds, part, _ = benchmark
    out = tmp_path_factory.mktemp("sweep") / "points.csv"
    spec = SweepSpec(
        lambda_values=LAMBDAS,
        base=bench_train_config(),
        out_path=str(out),
        eval_seeds=(0, 1, 2, 3, 4),
    )
    t0 = time.time()
    rows = sweep(spec, ds, part)
    elapsed = time.time() - t0
    return rows, elapsed


class TestCriterion1GradientSuite:
    def test_every_primitive_and_full_objective(self):
        t0 = time.time()
        worst_prim = 0.0
        for kind in PRIMITIVE_KINDS:
            rng = np.random.default_rng(abs(hash("accept" + kind)) % 2**32)
            for _ in range(10):
                point = rng.uniform(-2.0, 2.0, size=5)
                if kind == "relu":
                    point = point + np.sign(point) * 0.2
                worst_prim = max(worst_prim, grad_check(PRIMITIVE_CASES[kind], point, eps=1e-5))
        assert worst_prim < 1e-6

        ds, _ = generate_synthetic(6, 6, 1.0, seed=11)
        ds = split_students(ds, (1.0, 0.0, 0.0), seed=1)
        part = partition_questions(ds, 0.8, seed=2)
        cfg = TrainConfig(
            lam=0.1, test_length=2, inner_steps=2, policy_hidden=8, seed=3, warm_start=0
        )
        fn, packed = packed_objective(ds, part, cfg, [0, 1, 2], hard=False)
        outer_err = grad_check(fn, packed, eps=1e-5)
        elapsed = time.time() - t0
        ok = worst_prim < 1e-6 and outer_err < 1e-4 and elapsed < 10.0
        report(
            "1 (gradient suite)",
            ok,
            f"primitives max rel err {worst_prim:.2e} < 1e-6, "
            f"outer objective rel err {outer_err:.2e} < 1e-4, runtime {elapsed:.1f}s < 10s",
        )
        assert outer_err < 1e-4
        assert elapsed < 10.0


class TestCriterion2MetricOracles:
    def test_metric_oracles(self):
        t0 = time.time()
        rng = np.random.default_rng(2101)
        for _ in range(100):
            n = int(rng.integers(2, 200))
            scores = np.round(rng.random(n), 2)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            pairs = list(zip(scores.tolist(), labels.tolist()))
            assert auc(pairs) == auc_brute_force(pairs)
        for _ in range(100):
            n = int(rng.integers(2, 50))
            t = int(rng.integers(1, 6))
            q = t + int(rng.integers(1, 10))
            sets = [rng.choice(q, size=t, replace=False).tolist() for _ in range(n)]
            assert overlap_mu(sets, t) == overlap_brute_force(sets, t)
        balanced = ExposureProfile(
            counts=np.array([1, 1, 1, 1]), n_students=2, test_length=2, pool_size=4
        )
        assert expose_chi(balanced) == 0.0
        identical = exposure_from_administrations([{0, 1}, {0, 1}], pool_size=4)
        assert expose_chi(identical) == pytest.approx(2.0, abs=1e-12)
        elapsed = time.time() - t0
        report(
            "2 (metric oracles)",
            elapsed < 10.0,
            f"AUC == brute force on 100 instances, overlap count formula == "
            f"pairwise enumeration on 100 cohorts, chi cases exact, runtime {elapsed:.1f}s < 10s",
        )
        assert elapsed < 10.0


class TestCriterion3LambdaSemantics:
    def test_objective_decomposition(self):
        ds, _ = generate_synthetic(30, 20, 1.0, seed=310)
        ds = split_students(ds, (1.0, 0.0, 0.0), seed=1)
        part = partition_questions(ds, 0.8, seed=2)
        cfg = bench_train_config(test_length=5, policy_hidden=16, warm_start=0)
        bundles = student_bundles(ds, part, list(range(12)))
        phi, gamma = _init_params(cfg, ds.num_questions)
        flats = {**_policy_flats(phi), **_gamma_flats(gamma)}

        def value(lam):
            tape = Tape()
            lifted = _lift_all(tape, flats)
            c = dataclasses.replace(cfg, lam=lam)
            loss, info = outer_objective(
                tape, lifted, lifted, bundles, c, np.random.default_rng(7), hard=True
            )
            return loss.value, info["mean_total_entropy"]

        base, mean_h = value(0.0)
        worst = 0.0
        for lam in (0.01, 0.5, 2.0, 100.0):
            val, h = value(lam)
            assert h == mean_h
            worst = max(worst, abs((val - base) + lam * mean_h))
        report(
            "3a (lambda decomposition)",
            worst < 1e-9,
            f"max |outer(lam) - outer(0) + lam*mean(H)| = {worst:.2e} < 1e-9",
        )
        assert worst < 1e-9

    def test_large_lambda_drives_selection_uniform(self):
        ds, _ = generate_synthetic(2000, 200, 1.0, seed=311)
        ds = split_students(ds, (0.6, 0.2, 0.2), seed=312)
        part = partition_questions(ds, 0.8, seed=313)
        cfg = bench_train_config(lam=1000.0, epochs=6, warm_start=0, seed=314)
        state = train(ds, part, cfg)
        params = LearnedMethodParams(
            policy=state.best_phi, response=state.best_gamma,
            tau=cfg.tau, inner_steps=cfg.inner_steps, inner_lr=cfg.inner_lr, rho=cfg.rho,
        )
        test_ids = ds.students_with_tag("test")
        result = evaluate("c-biirt", params, ds, part, test_ids, cfg.test_length, eval_seed=0)
        q = ds.num_questions
        bound = np.mean([math.log(q - t) for t in range(cfg.test_length)])
        ratio = result.mean_step_entropy / bound
        report(
            "3b (entropy-dominated training)",
            ratio >= 0.95,
            f"mean per-step selection entropy {result.mean_step_entropy:.3f} is "
            f"{ratio:.3f} of the uniform bound {bound:.3f} (need >= 0.95)",
        )
        assert ratio >= 0.95


class TestCriterion4TradeoffTrend:
    def test_security_and_accuracy_trends(self, benchmark_sweep):
        rows, elapsed = benchmark_sweep
        learned = [r for r in rows if r.method == "c-biirt"]
        assert len(learned) == len(LAMBDAS)
        lams = [r.point.lam for r in learned]
        aucs = [r.point.auc for r in learned]
        chis = [r.point.expose_chi for r in learned]
        mus = [r.point.overlap_mu for r in learned]
        rho_chi = float(spearmanr(lams, chis).statistic)
        rho_mu = float(spearmanr(lams, mus).statistic)
        rho_auc = float(spearmanr(lams, aucs).statistic)
        table = "; ".join(
            f"lam={l:g}: auc={a:.4f} chi={c:.2f} mu={m:.4f}"
            for l, a, c, m in zip(lams, aucs, chis, mus)
        )
        ok = rho_chi <= -0.7 and rho_mu <= -0.7 and rho_auc <= -0.7 and elapsed < 1800
        report(
            "4 (tradeoff trend)",
            ok,
            f"spearman(lam, expose_chi)={rho_chi:.3f}, spearman(lam, overlap_mu)={rho_mu:.3f}, "
            f"spearman(lam, auc)={rho_auc:.3f} (each needs <= -0.7); "
            f"runtime {elapsed:.0f}s < 1800s; points: {table}",
        )
        assert elapsed < 1800
        assert rho_chi <= -0.7, f"exposure trend too weak: {rho_chi:.3f}"
        assert rho_mu <= -0.7, f"overlap trend too weak: {rho_mu:.3f}"
        # The accuracy trend on this equal-discrimination family is real but
        # shallow (a few thousandths of AUC across the sweep), so it only
        # resolves because each point averages five evaluation seeds.
        assert rho_auc <= -0.7, (
            f"spearman(lam, auc) = {rho_auc:.3f} > -0.7: accuracy did not fall "
            f"with lam; points: {table}"
        )


class TestCriterion5LearnedAdvantage:
    def test_learned_beats_random_by_margin(self, benchmark, benchmark_sweep):
        ds, part, _ = benchmark
        rows, _ = benchmark_sweep
        learned0 = next(
            r.point.auc for r in rows if r.method == "c-biirt" and r.point.lam == 0.0
        )
        random_auc = next(r.point.auc for r in rows if r.method == "irt-random")
        margin = learned0 - random_auc
        report(
            "5 (learned advantage at lam=0)",
            margin >= 0.01,
            f"c-biirt auc {learned0:.4f} vs irt-random {random_auc:.4f}: margin "
            f"{margin:+.4f} (needs >= +0.01; equal-discrimination data caps the "
            f"selection headroom near +0.007 even for a clairvoyant selector)",
        )
        assert margin >= 0.01, (
            f"learned-policy margin {margin:+.4f} < +0.01 over irt-random "
            f"({learned0:.4f} vs {random_auc:.4f})"
        )


class TestCriterion6BaselineSanity:
    def test_random_flatter_than_active(self, benchmark):
        ds, part, _ = benchmark
        test_ids = ds.students_with_tag("test")
        assert len(test_ids) >= 500
        params = BaselineMethodParams(irt=fit_irt(ds, include_tags=("train",)), map_cfg=MapConfig())
        active = evaluate("irt-active", params, ds, part, test_ids, 10, eval_seed=0)
        random_ = evaluate("irt-random", params, ds, part, test_ids, 10, eval_seed=0)
        ok = (
            random_.point.expose_chi < active.point.expose_chi
            and random_.point.overlap_mu < active.point.overlap_mu
        )
        report(
            "6 (baseline sanity)",
            ok,
            f"irt-random chi {random_.point.expose_chi:.3f} < irt-active chi "
            f"{active.point.expose_chi:.3f}; irt-random mu {random_.point.overlap_mu:.4f} "
            f"< irt-active mu {active.point.overlap_mu:.4f} on {len(test_ids)} students",
        )
        assert random_.point.expose_chi < active.point.expose_chi
        assert random_.point.overlap_mu < active.point.overlap_mu


class TestCriterion7Determinism:
    def test_sweep_reruns_byte_identical(self, tmp_path):
        data = tmp_path / "data.csv"
        tags = tmp_path / "tags.csv"
        assert cli_main([
            "generate", "--n-students", "120", "--n-questions", "24",
            "--density", "1.0", "--seed", "71", "--out", str(data),
        ]) == 0
        assert cli_main([
            "split", "--data", str(data), "--ratios", "0.6,0.2,0.2",
            "--seed", "72", "--out", str(tags),
        ]) == 0
        outputs = []
        for name in ("one.csv", "two.csv"):
            out = tmp_path / name
            assert cli_main([
                "sweep", "--data", str(data), "--split", str(tags),
                "--lambdas", "0,0.1,1", "--test-length", "4", "--epochs", "3",
                "--batch-size", "32", "--policy-hidden", "8", "--seed", "73",
                "--out", str(out),
            ]) == 0
            outputs.append(out.read_bytes())
        ok = outputs[0] == outputs[1]
        report(
            "7 (determinism)",
            ok,
            f"two sweep runs wrote byte-identical CSVs ({len(outputs[0])} bytes)",
        )
        assert ok

    def test_dataset_generation_deterministic(self):
        a, _ = generate_synthetic(50, 10, 0.7, seed=74)
        b, _ = generate_synthetic(50, 10, 0.7, seed=74)
        assert np.array_equal(a.correct, b.correct)


class TestCriterion8InnerAdaptationUnit:
    def test_closed_forms_to_1e_12(self):
        gamma = IrtParams(difficulties=np.zeros(1), prior_mean=0.0)
        prior_only = inner_adapt_numpy(
            IrtParams(difficulties=np.zeros(3), prior_mean=0.37), [], 5, 0.5, 1.0
        )
        up = inner_adapt_numpy(gamma, [(0, 1)], inner_steps=1, inner_lr=1.0, rho=0.0)
        down = inner_adapt_numpy(gamma, [(0, 0)], inner_steps=1, inner_lr=1.0, rho=0.0)
        err = max(abs(prior_only - 0.37), abs(up - 0.5), abs(down + 0.5))
        report(
            "8 (inner adaptation closed forms)",
            err < 1e-12,
            f"theta*=prior exact, one-step cases +0.5/-0.5: max error {err:.2e} < 1e-12",
        )
        assert abs(prior_only - 0.37) < 1e-12
        assert abs(up - 0.5) < 1e-12
        assert abs(down + 0.5) < 1e-12
