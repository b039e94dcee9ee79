"""Command-line surfaces, evaluation report, scaling benchmark mechanics."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import smoke_config
from relexi.cli import main as relexi_main
from relexi.config import save_config
from relexi.orchestrator import benchmark_scaling, evaluate, train_run, \
    write_benchmark_csv


@pytest.fixture(scope="module")
def trained_smoke(smoke_dataset_path, tmp_path_factory):
    """One short training run shared by the eval/benchmark tests."""
    tmp = tmp_path_factory.mktemp("trained")
    cfg = smoke_config(smoke_dataset_path, tmp, iterations=2,
                       checkpoint_every=2, eval_every=0)
    result = train_run(cfg, quiet=True)
    return cfg, result


class TestEvaluate:
    def test_report_structure(self, trained_smoke):
        cfg, result = trained_smoke
        report = evaluate(result.checkpoint_path, cfg)
        assert set(report["constant"]) == {f"{0.05*i:.2f}" for i in range(11)}
        tr = report["trained"]
        assert tr["return_norm"] <= 1.0
        assert len(tr["per_step_error"]) == cfg.n_actions
        assert len(tr["final_spectrum"]) == cfg.n_points // 2 + 1
        # histogram bins cover [0, 0.5]
        edges = report["cs_histogram"]["bin_edges"]
        assert edges[0] == 0.0 and edges[-1] == 0.5
        assert sum(report["cs_histogram"]["counts"]) == \
            cfg.n_actions * cfg.n_elements

    def test_cs0_row_matches_solver_oracle(self, trained_smoke):
        cfg, result = trained_smoke
        from relexi.orchestrator import constant_act_fn, rollout_episode
        from relexi.sim.dataset import load_dataset
        report = evaluate(result.checkpoint_path, cfg)
        ds = load_dataset(cfg.dataset)
        f0 = ds.initial_state(ds.holdout_index, test=True)
        traj = rollout_episode(f0, cfg, ds.mean_spectrum,
                               constant_act_fn(0.0, cfg.n_elements))
        from relexi.rlcore import discounted_return
        expect = discounted_return(traj.rewards_padded(), cfg.gamma)
        assert report["constant"]["0.00"]["return"] == pytest.approx(
            expect, abs=1e-12)

    def test_missing_checkpoint(self, trained_smoke):
        cfg, _ = trained_smoke
        with pytest.raises(FileNotFoundError):
            evaluate("/nonexistent/ckpt.rlxp", cfg)


class TestBenchmark:
    def test_weak_mode_rows(self, trained_smoke, tmp_path):
        cfg, result = trained_smoke
        rows = benchmark_scaling(cfg, [1, 2], "weak",
                                 checkpoint_path=result.checkpoint_path,
                                 repetitions=2)
        assert [r["n_envs"] for r in rows] == [1, 2]
        one = rows[0]
        assert one["speedup"] == pytest.approx(1.0)    # measured baseline
        assert one["repetitions"] == 2
        for r in rows:
            assert r["t_seq_s"] == pytest.approx(r["n_envs"] * r["t1_mean_s"])
            assert r["efficiency"] == pytest.approx(r["speedup"] / r["n_envs"])
        path = tmp_path / "bench.csv"
        write_benchmark_csv(rows, path)
        back = list(csv.DictReader(open(path)))
        assert len(back) == 2 and back[0]["mode"] == "weak"

    def test_strong_mode_varies_cores(self, trained_smoke):
        cfg, result = trained_smoke
        rows = benchmark_scaling(cfg, [], "strong",
                                 checkpoint_path=result.checkpoint_path,
                                 repetitions=1, cores_list=[1, 2])
        assert [r["cores_per_env"] for r in rows] == [1, 2]
        assert all(r["n_envs"] == cfg.n_parallel_envs for r in rows)

    def test_bad_mode(self, trained_smoke):
        cfg, _ = trained_smoke
        with pytest.raises(ValueError):
            benchmark_scaling(cfg, [1], "diagonal")


class TestCli:
    def test_prepare_dns_and_train_and_eval(self, tmp_path):
        ds_path = tmp_path / "ds.rlxd"
        rc = relexi_main(["prepare-dns", "--preset", "smoke", "--seed", "3",
                          "--out", str(ds_path)])
        assert rc == 0 and ds_path.exists()

        cfg = smoke_config(ds_path, tmp_path, iterations=1, checkpoint_every=1,
                           eval_every=1)
        cfg_path = tmp_path / "run.ini"
        save_config(cfg, cfg_path)
        assert relexi_main(["train", "--config", str(cfg_path),
                            "--quiet"]) == 0
        ckpt = Path(cfg.out_dir) / "checkpoint.rlxp"
        assert ckpt.exists()
        assert (Path(cfg.out_dir) / "metrics.csv").exists()

        out = tmp_path / "eval.json"
        assert relexi_main(["eval", "--config", str(cfg_path),
                            "--checkpoint", str(ckpt),
                            "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert "trained" in report and "constant" in report

    def test_benchmark_cli(self, smoke_dataset_path, tmp_path):
        cfg = smoke_config(smoke_dataset_path, tmp_path)
        cfg_path = tmp_path / "run.ini"
        save_config(cfg, cfg_path)
        out = tmp_path / "bench.csv"
        rc = relexi_main(["benchmark", "--config", str(cfg_path),
                          "--envs", "1", "--reps", "1", "--out", str(out)])
        assert rc == 0
        rows = list(csv.DictReader(open(out)))
        assert rows and rows[0]["n_envs"] == "1"

    def test_console_script_entrypoint(self):
        out = subprocess.run([sys.executable, "-m", "relexi.cli", "--help"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        for sub in ("train", "benchmark", "eval", "prepare-dns"):
            assert sub in out.stdout
