"""Command-line surface: subcommands, file formats, exit codes."""

import pytest

from bilevelcat.cli import main
from bilevelcat.data import load_csv, load_truth_csv
from bilevelcat.harness import read_points_csv
from bilevelcat.policy import load_policy_params
from bilevelcat.response import load_irt_params


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generated data + split tags shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.csv"
    truth = root / "truth.csv"
    tags = root / "tags.csv"
    assert main([
        "generate", "--n-students", "60", "--n-questions", "12",
        "--density", "1.0", "--seed", "3", "--out", str(data), "--truth", str(truth),
    ]) == 0
    assert main([
        "split", "--data", str(data), "--ratios", "0.5,0.25,0.25",
        "--seed", "4", "--out", str(tags),
    ]) == 0
    return root, data, tags, truth


def train_args(data, tags, out, extra=()):
    return [
        "train", "--data", str(data), "--split", str(tags),
        "--test-length", "3", "--epochs", "2", "--batch-size", "16",
        "--policy-hidden", "8", "--seed", "5", "--out", str(out), *extra,
    ]


class TestGenerateSplit:
    def test_outputs_exist_and_parse(self, workspace):
        _, data, tags, truth = workspace
        ds = load_csv(data)
        assert ds.num_students == 60
        assert ds.num_records == 720
        abilities, difficulties = load_truth_csv(truth)
        assert len(abilities) == 60
        assert len(difficulties) == 12
        lines = tags.read_text().splitlines()
        assert lines[0] == "student_id,split"
        assert len(lines) == 61

    def test_generate_rejects_bad_density(self, tmp_path, capsys):
        code = main([
            "generate", "--n-students", "10", "--n-questions", "5",
            "--density", "2.0", "--seed", "0", "--out", str(tmp_path / "x.csv"),
        ])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestTrainEvaluate:
    def test_train_writes_checkpoints_and_log(self, workspace, tmp_path):
        _, data, tags, _ = workspace
        out = tmp_path / "run"
        assert main(train_args(data, tags, out)) == 0
        policy = load_policy_params(f"{out}.policy.csv")
        assert policy.num_questions == 12
        response = load_irt_params(f"{out}.response.csv")
        assert response.num_questions == 12
        log = (tmp_path / "run.log.csv").read_text().splitlines()
        assert log[0] == "epoch,outer_loss,val_auc,mean_entropy"
        assert len(log) == 3

    def test_evaluate_learned_and_baselines(self, workspace, tmp_path):
        _, data, tags, _ = workspace
        ckpt = tmp_path / "ck"
        assert main(train_args(data, tags, ckpt)) == 0
        for method in ("c-biirt", "irt-active", "irt-random"):
            out = tmp_path / f"{method}.csv"
            args = [
                "evaluate", "--data", str(data), "--split", str(tags),
                "--method", method, "--test-length", "3", "--seed", "6",
                "--out", str(out),
            ]
            if method == "c-biirt":
                args += ["--checkpoint", str(ckpt)]
            assert main(args) == 0
            rows = read_points_csv(out)
            assert rows[0].method == method
            assert 0.0 <= rows[0].point.auc <= 1.0

    def test_evaluate_learned_without_checkpoint_fails(self, workspace, tmp_path, capsys):
        _, data, tags, _ = workspace
        code = main([
            "evaluate", "--data", str(data), "--split", str(tags),
            "--method", "c-biirt", "--test-length", "3", "--seed", "6",
            "--out", str(tmp_path / "x.csv"),
        ])
        assert code == 2

    def test_config_file_plus_flag_override(self, workspace, tmp_path):
        _, data, tags, _ = workspace
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(
            "lambda = 0.1\nepochs = 1\nbatch_size = 16\npolicy_hidden = 8\n"
            "test_length = 2\nwarm_start = 0\n",
            encoding="utf-8",
        )
        out = tmp_path / "cfgrun"
        assert main([
            "train", "--data", str(data), "--split", str(tags),
            "--config", str(cfg), "--epochs", "2", "--seed", "5",
            "--out", str(out),
        ]) == 0
        log = (tmp_path / "cfgrun.log.csv").read_text().splitlines()
        assert len(log) == 3  # flag override wins over the config file


class TestSweepReport:
    def test_sweep_then_report(self, workspace, tmp_path):
        _, data, tags, _ = workspace
        points = tmp_path / "points.csv"
        assert main([
            "sweep", "--data", str(data), "--split", str(tags),
            "--lambdas", "0,0.5", "--test-length", "3", "--epochs", "2",
            "--batch-size", "16", "--policy-hidden", "8", "--seed", "7",
            "--out", str(points),
        ]) == 0
        rows = read_points_csv(points)
        assert len(rows) == 4  # two lambdas + two baselines
        assert main(["report", "--points", str(points), "--out", str(tmp_path / "fig")]) == 0
        assert (tmp_path / "fig_expose_chi_vs_auc.csv").exists()
        assert (tmp_path / "fig_overlap_mu_vs_auc.csv").exists()

    def test_sweep_byte_identical_reruns(self, workspace, tmp_path):
        _, data, tags, _ = workspace
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert main([
                "sweep", "--data", str(data), "--split", str(tags),
                "--lambdas", "0,0.5", "--test-length", "3", "--epochs", "2",
                "--batch-size", "16", "--policy-hidden", "8", "--seed", "11",
                "--out", str(out),
            ]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_report_empty_points_fails(self, tmp_path, capsys):
        points = tmp_path / "empty.csv"
        points.write_text("method,lambda,auc,expose_chi,overlap_mu\n", encoding="utf-8")
        assert main(["report", "--points", str(points), "--out", str(tmp_path / "f")]) == 2


class TestExitCodes:
    def test_numeric_failure_maps_to_exit_3(self, workspace, tmp_path, monkeypatch, capsys):
        from bilevelcat.errors import DivergenceError

        def exploding_train(*args, **kwargs):
            raise DivergenceError("non-finite value at epoch 0, step 0")

        monkeypatch.setattr("bilevelcat.cli.train", exploding_train)
        _, data, tags, _ = workspace
        code = main(train_args(data, tags, tmp_path / "boom"))
        assert code == 3
        assert "numeric error" in capsys.readouterr().err
