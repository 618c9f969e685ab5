import numpy as np
import pytest

from conftest import const_params
from prebo.data import SynthConfig, synth_generate
from prebo.exceptions import (
    InitializationError,
    InputError,
    ValidationError,
)
from prebo.objectives import NllObjective
from prebo.params import CONST_MATERN, MLP_MATERN, random_params
from prebo.pretrain import TrainConfig, build_objective, fit_type2_ml, pretrain


def small_synthetic(seed=0, n_tasks=8, points=16, dim=1):
    true = const_params(dim, amp=1.0, ls=0.4, noise=0.05)
    cfg = SynthConfig(params=true, n_tasks=n_tasks, points_per_task=points,
                      seed=seed, n_test_functions=0)
    return true, synth_generate(cfg).dataset


def test_train_config_round_trip():
    cfg = TrainConfig(objective="nll_plus_kl", lam=3.0, max_iters=17,
                      batch_size=4, seed=9, gradient_mode="finite_difference",
                      convergence_tol=1e-6)
    d = cfg.to_dict()
    assert d["lambda"] == 3.0 and "lam" not in d
    assert TrainConfig.from_dict(d) == cfg


def test_train_config_full_batch_token():
    cfg = TrainConfig.from_dict({"objective": "nll", "batch_size": "full"})
    assert cfg.batch_size is None
    assert TrainConfig.from_dict({"objective": "nll"}).batch_size is None


def test_train_config_objective_aliases():
    for alias in ("nllkl", "nll+kl", "nll_plus_kl"):
        assert TrainConfig.from_dict({"objective": alias}).objective == "nll_plus_kl"


def test_train_config_rejects_unknowns():
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"objective": "nll", "warmup": 5})
    with pytest.raises(ValidationError):
        TrainConfig(objective="nope")
    with pytest.raises(ValidationError):
        TrainConfig(objective="nll", lam=-1.0)
    with pytest.raises(ValidationError):
        TrainConfig(objective="nll", max_iters=0)


def test_descent_from_true_params():
    true, ds = small_synthetic()
    cfg = TrainConfig(objective="nll", max_iters=25, seed=0)
    obj, _ = build_objective(ds, CONST_MATERN, cfg, 1e-9, "matern32", 1)
    f_true = obj.value(true.theta)
    fitted = pretrain(ds, CONST_MATERN, cfg, init=true)
    assert obj.value(fitted.theta) <= f_true


def test_same_seed_bitwise_identical():
    _, ds = small_synthetic()
    cfg = TrainConfig(objective="nll", max_iters=20, seed=3)
    a = pretrain(ds, CONST_MATERN, cfg)
    b = pretrain(ds, CONST_MATERN, cfg)
    assert np.array_equal(a.theta, b.theta)


def test_final_objective_never_above_initial():
    from prebo.objectives import _task_list
    from prebo.pretrain import _seeded_init
    _, ds = small_synthetic(seed=2)
    for objective in ("nll", "kl", "nll_plus_kl"):
        cfg = TrainConfig(objective=objective, max_iters=15, seed=1)
        obj, dim = build_objective(ds, CONST_MATERN, cfg, 1e-9, "matern32", 1)
        _, f0 = _seeded_init(obj, CONST_MATERN, dim, cfg, _task_list(ds), "matern32")
        fitted = pretrain(ds, CONST_MATERN, cfg)
        assert obj.value(fitted.theta) <= f0 + 1e-12


def test_held_out_nll_improves_over_random_init():
    true, ds = small_synthetic(seed=5, n_tasks=10)
    holdout = ds.tasks[-1]
    train = ds.drop([holdout.name])
    cfg = TrainConfig(objective="nll", max_iters=40, seed=0)
    fitted = pretrain(train, CONST_MATERN, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([0, 0]))
    rnd = random_params(CONST_MATERN, 1, rng)
    ho = NllObjective([(holdout.x, holdout.y)], CONST_MATERN, 1)
    assert ho.value(fitted.theta) <= ho.value(rnd.theta)


def test_sgd_path_descends_and_is_deterministic():
    _, ds = small_synthetic(seed=7, n_tasks=6, points=20)
    cfg = TrainConfig(objective="nll", max_iters=30, batch_size=8, seed=4)
    obj, _ = build_objective(ds, CONST_MATERN, cfg, 1e-9, "matern32", 1)
    a = pretrain(ds, CONST_MATERN, cfg)
    b = pretrain(ds, CONST_MATERN, cfg)
    assert np.array_equal(a.theta, b.theta)
    full = TrainConfig(objective="nll", max_iters=1, seed=4)
    init = pretrain(ds, CONST_MATERN, full)  # cheap proxy for the seeded start
    # contract: returned value never above the seeded initialization
    assert obj.value(a.theta) <= obj.value(init.theta) + 1e-9


def test_batch_size_larger_than_tasks_rejected():
    _, ds = small_synthetic(points=10)
    cfg = TrainConfig(objective="nll", max_iters=5, batch_size=11, seed=0)
    with pytest.raises(ValidationError):
        pretrain(ds, CONST_MATERN, cfg)


def test_init_architecture_mismatch_rejected(rng):
    _, ds = small_synthetic()
    wrong = random_params(MLP_MATERN, 1, rng)
    cfg = TrainConfig(objective="nll", max_iters=5, seed=0)
    with pytest.raises(InputError):
        pretrain(ds, CONST_MATERN, cfg, init=wrong)
    wrong_dim = random_params(CONST_MATERN, 3, rng)
    with pytest.raises(InputError):
        pretrain(ds, CONST_MATERN, cfg, init=wrong_dim)


def test_initialization_error_after_reseeds():
    # absurd observation magnitudes push every seeded start to overflow
    X = np.array([[0.0], [1.0]])
    y = np.array([1e200, -1e200])
    cfg = TrainConfig(objective="nll", max_iters=5, seed=0)
    with pytest.raises(InitializationError):
        pretrain([(X, y)], CONST_MATERN, cfg)


def test_iteration_log_callback():
    _, ds = small_synthetic()
    seen = []
    cfg = TrainConfig(objective="nll", max_iters=10, seed=0)
    pretrain(ds, CONST_MATERN, cfg, on_iteration=lambda *rec: seen.append(rec))
    assert seen, "optimizer should report progress"
    iters = [r[0] for r in seen]
    assert iters == list(range(1, len(seen) + 1))
    for _, value, grad_norm, wall_ms in seen:
        assert np.isfinite(value) and grad_norm >= 0 and wall_ms >= 0


def test_kl_objective_requires_matching_inputs(rng):
    # two tasks with disjoint inputs: no shared grid, so KL pre-training
    # has no moments to match
    from prebo.data import MultiTaskDataset, SearchSpace, TaskData
    from prebo.exceptions import NoMatchingDataError
    space = SearchSpace.unit_box(1)
    tasks = (
        TaskData("a", rng.uniform(size=(4, 1)), rng.normal(size=4), np.ones(4, bool)),
        TaskData("b", rng.uniform(size=(4, 1)), rng.normal(size=4), np.ones(4, bool)),
    )
    ds = MultiTaskDataset(space, tasks, output_warping="none")
    cfg = TrainConfig(objective="kl", max_iters=5, seed=0)
    with pytest.raises(NoMatchingDataError):
        pretrain(ds, CONST_MATERN, cfg)


def test_fit_type2_ml_single_task(rng):
    true = const_params(1, amp=1.0, ls=0.3, noise=0.01)
    X = rng.uniform(size=(30, 1))
    from prebo.gp import kernel_matrix, mean_vector
    K = kernel_matrix(true, X) + 0.01 * np.eye(30)
    y = np.linalg.cholesky(K) @ rng.normal(size=30)
    fitted = fit_type2_ml(X, y, CONST_MATERN, seed=0, max_iters=50)
    obj = NllObjective([(X, y)], CONST_MATERN, 1)
    assert obj.value(fitted.theta) <= obj.value(true.theta) + 1.0
    assert fitted.architecture == CONST_MATERN
