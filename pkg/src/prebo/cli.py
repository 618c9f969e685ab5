"""Command line entry points.

Exit codes: 0 success, 2 usage errors, 3 validation/schema errors,
4 numerical failures.  Every artifact-writing command drops a run manifest
(options, seeds, content hashes of inputs, output paths) next to its
outputs; manifests contain nothing time-dependent, so reruns with the same
flags are byte-identical across all artifacts.
"""

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionSpec
from .bo import (
    GpSampleOracle,
    TableOracle,
    performance_profile,
    read_trace,
    run_bo,
    run_random,
    run_stbo,
    simple_regret,
    write_trace,
)
from .data import (
    MultiTaskDataset,
    SynthConfig,
    load_dataset,
    save_dataset,
    synth_generate,
)
from .exceptions import (
    DomainError,
    InitializationError,
    InputError,
    NumericalError,
    ParseError,
    ValidationError,
)
from .params import (
    ARCHITECTURES,
    CONST_MATERN,
    GpParams,
    load_model,
    pack,
    save_model,
    to_document,
)
from .pretrain import TrainConfig, pretrain

METHODS = ("rand", "stbo", "hyperbo-nll", "hyperbo-kl", "hyperbo-nllkl")
_METHOD_OBJECTIVE = {
    "hyperbo-nll": "nll",
    "hyperbo-kl": "kl",
    "hyperbo-nllkl": "nll_plus_kl",
}


def _blob_hash(path) -> str:
    """Content hash of a file, framed the way git hashes blobs."""
    data = Path(path).read_bytes()
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _write_manifest(path, command, options, seeds, inputs, outputs):
    base = Path(path).parent

    def rel(p):
        try:
            return str(Path(p).relative_to(base))
        except ValueError:
            return str(p)

    doc = {
        "command": command,
        "options": options,
        "seeds": seeds,
        "inputs": [{"path": str(p), "hash": _blob_hash(p)} for p in inputs],
        "outputs": [rel(p) for p in outputs],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _acq_token(token):
    return AcquisitionSpec.parse(token)  # InputError is a ValueError: usage exit 2


def _methods_list(text):
    methods = [m.strip() for m in str(text).split(",") if m.strip()]
    if not methods:
        raise ValueError("no methods given")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; known: {', '.join(METHODS)}")
    return methods


def _criterion(text):
    s = str(text).strip()
    if not s.startswith("median@"):
        raise ValueError(f"criterion must look like 'median@25', got {text!r}")
    try:
        k = int(s.split("@", 1)[1])
    except ValueError:
        raise ValueError(f"criterion must look like 'median@25', got {text!r}") from None
    if k < 1:
        raise ValueError("criterion iteration must be >= 1")
    return k


def _write_training_log(path, history):
    with open(path, "w") as fh:
        fh.write("iter,objective,grad_norm,wall_ms\n")
        for it, obj, gn, ms in history:
            fh.write(f"{it},{obj!r},{gn!r},{ms!r}\n")


# -- pretrain -----------------------------------------------------------------

def cmd_pretrain(args) -> int:
    base = {}
    inputs = [args.data]
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.config}: not valid JSON ({exc})") from exc
        if not isinstance(base, dict):
            raise ParseError(f"{args.config}: training config must be a mapping")
        inputs.append(args.config)
    overrides = {
        "objective": args.objective,
        "lambda": args.lam,
        "max_iters": args.iters,
        "batch_size": args.batch,
        "seed": args.seed,
        "gradient_mode": args.gradient_mode,
        "convergence_tol": args.tol,
    }
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    config = TrainConfig.from_dict(base)

    dataset = load_dataset(args.data)
    history = []
    params = pretrain(
        dataset, args.arch, config, matching_tol=args.matching_tol,
        on_iteration=lambda *rec: history.append(rec),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(params, out)
    log_path = out.with_name(out.name + ".train.csv")
    _write_training_log(log_path, history)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"), "pretrain",
        {**config.to_dict(), "arch": args.arch, "matching_tol": args.matching_tol,
         "data": str(args.data)},
        {"seed": config.seed}, inputs, [out, log_path],
    )
    final = history[-1][1] if history else float("nan")
    print(f"wrote {out} ({len(history)} iterations, final objective {final:.6g})")
    return 0


# -- run ----------------------------------------------------------------------

def _offline_oracle(task_path, task_name, model_dim):
    dataset = load_dataset(task_path)
    arrays = {name: (X, y) for name, X, y in dataset.task_arrays()}
    if task_name is None:
        if len(arrays) != 1:
            raise ValidationError(
                f"{task_path} has {len(arrays)} tasks; pick one with --task-name"
            )
        task_name = next(iter(arrays))
    if task_name not in arrays:
        raise ValidationError(f"no task named {task_name!r} in {task_path}")
    X, y = arrays[task_name]
    if X.shape[1] != model_dim:
        raise InputError(
            f"model has dim {model_dim} but task {task_name!r} has dim {X.shape[1]}"
        )
    return TableOracle(X, y, name=task_name)


def cmd_run(args) -> int:
    model = load_model(args.model)
    if args.mode == "offline":
        oracle = _offline_oracle(args.task, args.task_name, model.dim)
    else:
        truth = load_model(args.task)
        if truth.dim != model.dim:
            raise InputError(
                f"model has dim {model.dim} but the truth document has dim {truth.dim}"
            )
        oracle = GpSampleOracle(truth, seed=args.seed)
    trace = run_bo(model, oracle, args.acq, args.iters, seed=args.seed,
                   method=args.acq.token)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"), "run",
        {"model": str(args.model), "task": str(args.task),
         "task_name": args.task_name, "mode": args.mode,
         "acq": args.acq.token, "iters": args.iters},
        {"seed": args.seed}, [args.model, args.task], [out],
    )
    best = float(np.max(trace.ys))
    msg = f"wrote {out}; best observed value {best!r}"
    if trace.f_max is not None:
        msg += f"; simple regret {simple_regret(trace)!r}"
    print(msg)
    return 0


# -- synth ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.noise < 0:
        raise ValidationError("--noise must be >= 0")
    log_noise = np.log(max(args.noise, 1e-300))
    params = pack(
        CONST_MATERN, args.dim,
        mean_const=[0.0], log_amplitude=[0.0],
        log_lengthscales=np.full(args.dim, np.log(0.3)),
        log_noise=[log_noise],
    )
    config = SynthConfig(
        params=params, n_tasks=args.tasks, points_per_task=args.points,
        matched_fraction=args.matched_fraction, seed=args.seed,
        n_test_functions=args.test_functions,
    )
    result = synth_generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_path = out / "train.json"
    save_dataset(result.dataset, train_path)
    outputs = [train_path]
    if result.test_functions is not None:
        test_path = out / "test.json"
        save_dataset(result.test_functions, test_path)
        outputs.append(test_path)
    truth_doc = to_document(params)
    truth_doc["synthetic"] = {
        "seed": args.seed,
        "noise_variance": args.noise,
        "matched_fraction": args.matched_fraction,
        "test_maxima": result.test_maxima,
    }
    truth_path = out / "truth.json"
    with open(truth_path, "w") as fh:
        json.dump(truth_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(truth_path)
    _write_manifest(
        out / "manifest.json", "synth",
        {"tasks": args.tasks, "points": args.points, "dim": args.dim,
         "matched_fraction": args.matched_fraction, "noise": args.noise,
         "test_functions": args.test_functions},
        {"seed": args.seed}, [], outputs,
    )
    print(f"wrote {', '.join(str(p) for p in outputs)}")
    return 0


# -- bench ----------------------------------------------------------------------

def _safe_name(name) -> str:
    return "".join(ch if ch.isalnum() or ch in "-." else "-" for ch in str(name))


def cmd_bench(args) -> int:
    dataset = load_dataset(args.data)
    names = dataset.task_names()
    if args.holdout not in names:
        raise ValidationError(f"no task named {args.holdout!r} in {args.data}")
    drop = {args.holdout}
    if args.holdout_prefix:
        drop |= {n for n in names if n.startswith(args.holdout_prefix)}
    train_ds = dataset.drop(drop)

    arrays = {name: (X, y) for name, X, y in dataset.task_arrays()}
    if args.holdout not in arrays:
        raise ValidationError(f"task {args.holdout!r} has no usable observations")
    X_h, y_h = arrays[args.holdout]
    oracle = TableOracle(X_h, y_h, name=args.holdout)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    models = {}
    outputs = []
    for method in args.methods:
        objective = _METHOD_OBJECTIVE.get(method)
        if objective is None:
            continue
        config = TrainConfig(
            objective=objective, lam=args.lam, max_iters=args.train_iters,
            seed=args.seed,
        )
        history = []
        params = pretrain(train_ds, args.arch, config,
                          matching_tol=args.matching_tol,
                          on_iteration=lambda *rec: history.append(rec))
        model_path = out / f"model-{method}.json"
        save_model(params, model_path)
        _write_training_log(out / f"model-{method}.train.csv", history)
        models[method] = params
        outputs.append(model_path)

    def one_cell(cell):
        method, repeat = cell
        seed = args.seed + repeat
        if method == "rand":
            trace = run_random(oracle, args.iters, seed=seed)
        elif method == "stbo":
            trace = run_stbo(args.arch, oracle, args.acq, args.iters, seed=seed,
                             fit_iters=args.stbo_iters)
        else:
            trace = run_bo(models[method], oracle, args.acq, args.iters,
                           seed=seed, method=method)
        return cell, trace

    cells = [(m, r) for m in args.methods for r in range(args.repeats)]
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = dict(pool.map(one_cell, cells))
    else:
        results = dict(one_cell(c) for c in cells)

    index = []
    task_tag = _safe_name(args.holdout)
    for method, repeat in cells:
        trace = results[(method, repeat)]
        trace_path = out / f"{task_tag}__{method}__r{repeat}.csv"
        write_trace(trace, trace_path)
        index.append({
            "task": args.holdout, "method": method, "repeat": repeat,
            "trace": trace_path.name, "f_max": oracle.f_max,
        })
        outputs.append(trace_path)
    with open(out / "cells.json", "w") as fh:
        json.dump({"cells": index}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    report_path = out / "report.csv"
    summary_path = out / "report.summary.csv"
    criterion = args.criterion if args.criterion is not None else args.iters
    _report_from_dir(out, criterion, report_path, summary_path)
    outputs += [out / "cells.json", report_path, summary_path]
    _write_manifest(
        out / "manifest.json", "bench",
        {"data": str(args.data), "holdout": args.holdout,
         "holdout_prefix": args.holdout_prefix, "methods": list(args.methods),
         "repeats": args.repeats, "iters": args.iters, "arch": args.arch,
         "acq": args.acq.token, "criterion": criterion,
         "train_iters": args.train_iters, "jobs": args.jobs,
         "pretrain_tasks": list(train_ds.task_names())},
        {"seed": args.seed}, [args.data], outputs,
    )
    print(f"wrote {len(cells)} traces and {report_path}")
    return 0


# -- report ----------------------------------------------------------------------

def _load_cells(traces_dir):
    traces_dir = Path(traces_dir)
    cells_path = traces_dir / "cells.json"
    entries = []
    if cells_path.exists():
        try:
            with open(cells_path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{cells_path}: not valid JSON ({exc})") from exc
        for e in doc.get("cells", []):
            entries.append((e["task"], e["method"], int(e["repeat"]),
                            traces_dir / e["trace"]))
    else:
        for p in sorted(traces_dir.glob("*__*__r*.csv")):
            stem = p.name[:-4]
            task, method, rep = stem.rsplit("__", 2)
            entries.append((task, method, int(rep[1:]), p))
    if not entries:
        raise ValidationError(f"no traces found under {traces_dir}")
    return entries


def _report_from_dir(traces_dir, criterion_iter, out_path, summary_path):
    entries = _load_cells(traces_dir)
    by_method = {}
    for task, method, repeat, path in entries:
        by_method.setdefault(method, {})[(task, repeat)] = read_trace(path)["best_so_far"]
    keysets = {m: set(d) for m, d in by_method.items()}
    common = set.intersection(*keysets.values())
    if not common or any(ks != common for ks in keysets.values()):
        raise ValidationError("methods do not cover the same (task, repeat) cells")
    order = sorted(common)
    curves = {}
    horizon = None
    for m, d in by_method.items():
        rows = [d[k] for k in order]
        lengths = {len(r) for r in rows}
        if len(lengths) != 1:
            raise ValidationError(f"method {m!r} has traces of differing lengths")
        if horizon is None:
            horizon = lengths.pop()
        elif lengths.pop() != horizon:
            raise ValidationError("methods have traces of differing lengths")
        curves[m] = np.vstack(rows)
    if not 1 <= criterion_iter <= horizon:
        raise ValidationError(
            f"criterion iteration {criterion_iter} outside [1, {horizon}]"
        )
    profile = performance_profile(curves, criterion_iter)
    with open(out_path, "w") as fh:
        fh.write("method,iter,fraction\n")
        for m in sorted(profile):
            for t, frac in enumerate(profile[m], start=1):
                fh.write(f"{m},{t},{float(frac)!r}\n")

    finals = {}
    for task, method, repeat, path in entries:
        if (task, repeat) in common:
            finals.setdefault((task, method), []).append(
                float(read_trace(path)["best_so_far"][-1])
            )
    with open(summary_path, "w") as fh:
        fh.write("task,method,best_mean,best_stderr\n")
        for (task, method) in sorted(finals):
            vals = np.array(finals[(task, method)])
            stderr = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
            fh.write(f"{task},{method},{float(vals.mean())!r},{stderr!r}\n")


def cmd_report(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    summary = Path(args.summary_out) if args.summary_out else (
        out.with_name(out.stem + ".summary.csv")
    )
    _report_from_dir(args.traces_dir, args.criterion, out, summary)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"), "report",
        {"traces_dir": str(args.traces_dir), "criterion": args.criterion},
        {}, [], [out, summary],
    )
    print(f"wrote {out} and {summary}")
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="prebo",
        description="Pre-trained Gaussian process priors for transfer Bayesian optimization.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("pretrain", help="fit prior parameters on a dataset")
    sp.add_argument("--data", required=True, help="dataset document (JSON)")
    sp.add_argument("--objective", choices=["nll", "kl", "nllkl"], default=None)
    sp.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="weight of the KL term in the combined objective")
    sp.add_argument("--arch", choices=list(ARCHITECTURES), default=CONST_MATERN)
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--batch", default=None, help="'full' or a per-task batch size")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--gradient-mode", choices=["analytic", "finite_difference"],
                    default=None)
    sp.add_argument("--tol", type=float, default=None, help="convergence tolerance")
    sp.add_argument("--matching-tol", type=float, default=1e-9)
    sp.add_argument("--config", default=None, help="training config JSON; flags override")
    sp.add_argument("--out", required=True, help="model document to write")
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("run", help="one optimization run with a frozen model")
    sp.add_argument("--model", required=True, help="model document")
    sp.add_argument("--task", required=True,
                    help="dataset document (offline) or truth document (online-synth)")
    sp.add_argument("--task-name", default=None)
    sp.add_argument("--mode", choices=["offline", "online-synth"], default="offline")
    sp.add_argument("--acq", type=_acq_token, default="pi",
                    help="acquisition token: pi[:margin], ei, ucb[:zeta]")
    sp.add_argument("--iters", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="trace CSV to write")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("synth", help="generate a synthetic dataset with known truth")
    sp.add_argument("--tasks", type=int, required=True)
    sp.add_argument("--points", type=int, required=True)
    sp.add_argument("--dim", type=int, required=True)
    sp.add_argument("--matched-fraction", type=float, default=1.0)
    sp.add_argument("--noise", type=float, default=0.01, help="observation noise variance")
    sp.add_argument("--test-functions", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("bench", help="compare methods on a held-out task")
    sp.add_argument("--data", required=True)
    sp.add_argument("--holdout", required=True, help="task left out of pre-training")
    sp.add_argument("--holdout-prefix", default=None,
                    help="also exclude tasks whose name starts with this prefix")
    sp.add_argument("--methods", type=_methods_list,
                    default=list(METHODS)[:4],
                    help="comma-separated: " + ",".join(METHODS))
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--iters", type=int, default=30)
    sp.add_argument("--acq", type=_acq_token, default="pi")
    sp.add_argument("--arch", choices=list(ARCHITECTURES), default=CONST_MATERN)
    sp.add_argument("--lambda", dest="lam", type=float, default=10.0)
    sp.add_argument("--train-iters", type=int, default=100)
    sp.add_argument("--stbo-iters", type=int, default=30,
                    help="refit iterations for the single-task baseline")
    sp.add_argument("--matching-tol", type=float, default=1e-9)
    sp.add_argument("--criterion", type=_criterion, default=None,
                    help="profile criterion, e.g. median@25 (default: final iteration)")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("report", help="performance profile over a traces directory")
    sp.add_argument("--traces-dir", required=True)
    sp.add_argument("--criterion", type=_criterion, default=25)
    sp.add_argument("--out", required=True, help="profile CSV to write")
    sp.add_argument("--summary-out", default=None)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, ParseError, InputError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, InitializationError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
