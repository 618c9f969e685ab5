"""End-to-end command line behavior and exit codes."""

import json

import numpy as np
import pytest

from conftest import const_params
from prebo.bo import performance_profile, read_trace
from prebo.cli import main
from prebo.data import (
    MultiTaskDataset,
    SearchSpace,
    TaskData,
    load_dataset,
    save_dataset,
)
from prebo.params import load_model, save_model


def run_cli(*argv):
    return main([str(a) for a in argv])


def small_table_doc(tmp_path, n=10, name="only", n_tasks=1):
    rng = np.random.default_rng(77)
    space = SearchSpace.unit_box(1)
    tasks = []
    for k in range(n_tasks):
        X = rng.uniform(size=(n, 1))
        y = np.sin(5.0 * X[:, 0]) + 0.1 * k
        tasks.append(TaskData(name if n_tasks == 1 else f"{name}-{k}",
                              X, y, np.ones(n, bool)))
    path = tmp_path / "table.json"
    save_dataset(MultiTaskDataset(space, tasks), path)
    return path


# -- synth -----------------------------------------------------------------------

def test_synth_writes_a_loadable_bundle(tmp_path):
    out = tmp_path / "synthdir"
    assert run_cli("synth", "--tasks", 5, "--points", 3, "--dim", 2,
                   "--test-functions", 2, "--seed", 4, "--out", out) == 0
    train = load_dataset(out / "train.json")
    assert train.n_tasks == 5 and train.dim == 2
    assert all(t.n_trials == 3 for t in train.tasks)
    test = load_dataset(out / "test.json")
    assert test.task_names() == ["fn-0", "fn-1"]

    truth = load_model(out / "truth.json")  # extra sections are ignored
    assert truth.dim == 2
    side = json.loads((out / "truth.json").read_text())["synthetic"]
    assert side["seed"] == 4 and len(side["test_maxima"]) == 2

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert sorted(manifest["outputs"]) == ["test.json", "train.json", "truth.json"]


def test_synth_rejects_negative_noise(tmp_path):
    assert run_cli("synth", "--tasks", 2, "--points", 2, "--dim", 1,
                   "--noise", -1.0, "--out", tmp_path / "x") == 3


# -- pretrain --------------------------------------------------------------------

def test_pretrain_writes_model_and_descending_log(tmp_path):
    out = tmp_path / "s"
    run_cli("synth", "--tasks", 4, "--points", 6, "--dim", 1,
            "--test-functions", 0, "--seed", 2, "--out", out)
    model_path = tmp_path / "model.json"
    assert run_cli("pretrain", "--data", out / "train.json", "--objective", "nll",
                   "--iters", 8, "--seed", 1, "--out", model_path) == 0
    model = load_model(model_path)
    assert model.dim == 1

    log = (tmp_path / "model.json.train.csv").read_text().splitlines()
    assert log[0] == "iter,objective,grad_norm,wall_ms"
    objectives = [float(r.split(",")[1]) for r in log[1:]]
    iters = [int(r.split(",")[0]) for r in log[1:]]
    assert iters == list(range(1, len(iters) + 1))
    assert objectives[-1] <= objectives[0]

    manifest = json.loads((tmp_path / "model.json.manifest.json").read_text())
    assert manifest["options"]["objective"] == "nll"
    assert manifest["inputs"][0]["hash"]


def test_pretrain_is_deterministic_across_invocations(tmp_path):
    out = tmp_path / "s"
    run_cli("synth", "--tasks", 3, "--points", 5, "--dim", 1,
            "--test-functions", 0, "--out", out)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["pretrain", "--data", out / "train.json", "--objective", "nll",
            "--iters", 6, "--seed", 3]
    assert run_cli(*argv, "--out", a) == 0
    assert run_cli(*argv, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_pretrain_kl_without_shared_inputs_exits_3(tmp_path):
    out = tmp_path / "s"
    run_cli("synth", "--tasks", 3, "--points", 4, "--dim", 1,
            "--matched-fraction", 0.0, "--test-functions", 0, "--out", out)
    assert run_cli("pretrain", "--data", out / "train.json", "--objective", "kl",
                   "--iters", 5, "--out", tmp_path / "m.json") == 3


def test_pretrain_config_file_with_flag_overrides(tmp_path):
    out = tmp_path / "s"
    run_cli("synth", "--tasks", 3, "--points", 5, "--dim", 1,
            "--test-functions", 0, "--out", out)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"objective": "nll", "max_iters": 4, "seed": 9}))
    model_path = tmp_path / "m.json"
    assert run_cli("pretrain", "--data", out / "train.json", "--config", cfg,
                   "--iters", 5, "--out", model_path) == 0
    manifest = json.loads((tmp_path / "m.json.manifest.json").read_text())
    assert manifest["options"]["max_iters"] == 5  # flag wins
    assert manifest["options"]["seed"] == 9


# -- run -------------------------------------------------------------------------

def test_offline_run_emits_trace_and_regret(tmp_path, capsys):
    table = small_table_doc(tmp_path)
    model_path = tmp_path / "model.json"
    save_model(const_params(1, ls=0.3, noise=1e-4), model_path)
    trace_path = tmp_path / "trace.csv"
    assert run_cli("run", "--model", model_path, "--task", table,
                   "--acq", "pi:0.1", "--iters", 10, "--seed", 0,
                   "--out", trace_path) == 0
    out = capsys.readouterr().out
    trace = read_trace(trace_path)
    assert len(trace["t"]) == 10
    assert np.all(np.diff(trace["best_so_far"]) >= 0)

    # printed regret must agree with a recount from the artifacts
    printed = float(out.split("simple regret ")[1].split()[0])
    table_max = max(
        float(p["y"]) for t in json.loads(table.read_text())["tasks"]
        for p in t["points"]
    )
    assert printed == table_max - trace["best_so_far"][-1]


def test_online_synth_run_reports_no_regret(tmp_path, capsys):
    model_path = tmp_path / "model.json"
    save_model(const_params(2, ls=0.4), model_path)
    truth_path = tmp_path / "truth.json"
    save_model(const_params(2, ls=0.3, noise=0.01), truth_path)
    trace_path = tmp_path / "trace.csv"
    assert run_cli("run", "--model", model_path, "--task", truth_path,
                   "--mode", "online-synth", "--iters", 5,
                   "--out", trace_path) == 0
    assert "simple regret" not in capsys.readouterr().out
    assert read_trace(trace_path)["x"].shape == (5, 2)


def test_run_usage_and_validation_failures(tmp_path):
    table = small_table_doc(tmp_path)
    model_path = tmp_path / "model.json"
    save_model(const_params(1), model_path)
    good = ["run", "--model", model_path, "--task", table, "--out", tmp_path / "t.csv"]

    assert run_cli(*good, "--acq", "nope") == 2  # usage error
    assert run_cli(*good, "--task-name", "missing") == 3
    assert run_cli("run", "--model", tmp_path / "absent.json", "--task", table,
                   "--out", tmp_path / "t.csv") == 3

    wrong_dim = tmp_path / "model2.json"
    save_model(const_params(3), wrong_dim)
    assert run_cli("run", "--model", wrong_dim, "--task", table,
                   "--out", tmp_path / "t.csv") == 3


def test_run_needs_task_name_when_ambiguous(tmp_path):
    table = small_table_doc(tmp_path, n_tasks=2)
    model_path = tmp_path / "model.json"
    save_model(const_params(1), model_path)
    base = ["run", "--model", model_path, "--task", table, "--out", tmp_path / "t.csv"]
    assert run_cli(*base) == 3
    assert run_cli(*base, "--task-name", "only-1") == 0


# -- bench and report ---------------------------------------------------------------

@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bench")
    synth = tmp / "s"
    run_cli("synth", "--tasks", 4, "--points", 6, "--dim", 1,
            "--test-functions", 0, "--seed", 1, "--out", synth)
    out = tmp / "out"
    code = run_cli("bench", "--data", synth / "train.json", "--holdout", "task-0",
                   "--methods", "rand,hyperbo-nll", "--repeats", 2, "--iters", 5,
                   "--train-iters", 5, "--acq", "pi:0.1", "--seed", 0,
                   "--out-dir", out)
    assert code == 0
    return out


def test_bench_writes_one_trace_per_cell(bench_dir):
    traces = sorted(p.name for p in bench_dir.glob("*__*__r*.csv"))
    assert traces == [
        "task-0__hyperbo-nll__r0.csv", "task-0__hyperbo-nll__r1.csv",
        "task-0__rand__r0.csv", "task-0__rand__r1.csv",
    ]
    cells = json.loads((bench_dir / "cells.json").read_text())["cells"]
    assert len(cells) == 4
    assert {c["method"] for c in cells} == {"rand", "hyperbo-nll"}


def test_bench_excludes_the_holdout_from_pretraining(bench_dir):
    manifest = json.loads((bench_dir / "manifest.json").read_text())
    trained_on = manifest["options"]["pretrain_tasks"]
    assert "task-0" not in trained_on
    assert sorted(trained_on) == ["task-1", "task-2", "task-3"]
    assert (bench_dir / "model-hyperbo-nll.json").exists()


def test_bench_report_matches_a_profile_recount(bench_dir):
    curves = {}
    for cell in json.loads((bench_dir / "cells.json").read_text())["cells"]:
        best = read_trace(bench_dir / cell["trace"])["best_so_far"]
        curves.setdefault(cell["method"], {})[cell["repeat"]] = best
    stacked = {m: np.vstack([d[r] for r in sorted(d)]) for m, d in curves.items()}
    want = performance_profile(stacked, criterion_iter=5)

    rows = (bench_dir / "report.csv").read_text().splitlines()
    assert rows[0] == "method,iter,fraction"
    for row in rows[1:]:
        m, t, frac = row.split(",")
        assert float(frac) == want[m][int(t) - 1]

    summary = (bench_dir / "report.summary.csv").read_text().splitlines()
    assert summary[0] == "task,method,best_mean,best_stderr"
    assert len(summary) == 3  # one row per (task, method)


def test_report_command_recomputes_from_traces(bench_dir, tmp_path):
    out = tmp_path / "profile.csv"
    assert run_cli("report", "--traces-dir", bench_dir, "--criterion", "median@3",
                   "--out", out) == 0
    assert out.read_text().splitlines()[0] == "method,iter,fraction"
    assert (tmp_path / "profile.summary.csv").exists()


def test_report_on_an_empty_directory_exits_3(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    assert run_cli("report", "--traces-dir", empty, "--criterion", "median@1",
                   "--out", tmp_path / "r.csv") == 3


def test_bench_rejects_unknown_holdout_and_methods(tmp_path):
    synth = tmp_path / "s"
    run_cli("synth", "--tasks", 2, "--points", 3, "--dim", 1,
            "--test-functions", 0, "--out", synth)
    base = ["bench", "--data", synth / "train.json", "--repeats", 1,
            "--iters", 2, "--train-iters", 2, "--out-dir", tmp_path / "o"]
    assert run_cli(*base, "--holdout", "nope") == 3
    assert run_cli(*base, "--holdout", "task-0", "--methods", "bogus") == 2
    assert run_cli(*base, "--holdout", "task-0", "--criterion", "mean@3") == 2


def test_usage_errors_exit_2():
    assert run_cli("pretrain") == 2  # missing required flags
    assert run_cli("not-a-command") == 2
