import numpy as np
import pytest

from weakrate.models import PredictorFamily
from weakrate.problems import default_strong_family, default_weak_family, sign_code_problem
from weakrate.seeding import derive_seed
from weakrate.synth import AUGMENTED, STRONG, WEAK, Dataset, sample_strong, sample_weak
from weakrate.theory import exact_risk
from weakrate.training import (
    TrainConfig,
    TrueLatent,
    WeakModel,
    augment,
    erm_grid_oracle,
    run_pipeline,
    train_strong,
    train_weak,
)

FAST = TrainConfig(step_size=0.5, batch_size=32, max_epochs=60, early_stop_every=5)
ERM = TrainConfig(step_size=0.5, decay=0.97, batch_size=8, max_epochs=300, holdout_fraction=0.0,
                  stop_metric="loss")


def _weak_rows(X, w, seed=0):
    return Dataset(WEAK, X, np.asarray(w), seed)


def _aug_rows(U, y):
    return Dataset(AUGMENTED, U[:, :1], np.asarray(y), 0, Z=U[:, 1:])


# -- train_weak ---------------------------------------------------------------------


def test_weak_separable_task():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((1000, 2))
    w = (X @ [1.0, -2.0] > 0).astype(np.int64)
    fam = PredictorFamily("weak", 2, 2, "linear", hidden=1, radius=20.0)
    res = train_weak(fam, _weak_rows(X, w), FAST)
    holdout = [r for e, s, r in res.trajectory if s == "holdout"]
    assert holdout[-1] <= 0.02
    Xt = rng.standard_normal((5000, 2))
    assert np.mean(fam.predict(res.theta, Xt) != (Xt @ [1.0, -2.0] > 0)) <= 0.02


def test_weak_label_independent_of_input():
    k = 4
    rng = np.random.default_rng(1)
    X = rng.standard_normal((5000, 2))
    w = rng.integers(0, k, 5000)
    fam = PredictorFamily("weak", 2, k, "mlp", hidden=2)
    res = train_weak(fam, _weak_rows(X, w), FAST)
    holdout = [r for e, s, r in res.trajectory if s == "holdout"]
    assert abs(holdout[-1] - (k - 1) / k) < 0.05


def test_weak_training_deterministic():
    prob = sign_code_problem(atoms=300)
    fam = default_weak_family(prob)
    data = sample_weak(prob, 800, 3)
    cfg = TrainConfig(step_size=1.0, max_epochs=20, seed=9)
    assert np.array_equal(train_weak(fam, data, cfg).theta, train_weak(fam, data, cfg).theta)


def test_weak_parameters_stay_in_ball():
    prob = sign_code_problem(atoms=300)
    fam = PredictorFamily("weak", prob.input_dim, 16, "mlp", hidden=4, radius=2.0)
    res = train_weak(fam, sample_weak(prob, 500, 0), TrainConfig(step_size=5.0, max_epochs=10))
    assert np.linalg.norm(res.theta) <= 2.0 * (1 + 1e-12)


def test_compressed_rows_match_plain_training_risk():
    prob = sign_code_problem(atoms=50)
    fam = default_weak_family(prob)
    data = sample_weak(prob, 2000, 1)
    plain = Dataset(WEAK, data.X, data.labels, data.seed)  # no atom index, no compression
    cfg = TrainConfig(step_size=1.0, max_epochs=1, holdout_fraction=0.0, batch_size=100000)
    # one full-batch step from the same start gives the same parameters
    a = train_weak(fam, data, cfg).theta
    b = train_weak(fam, plain, cfg).theta
    assert np.allclose(a, b, atol=1e-10)


def test_train_weak_rejects_strong_rows():
    prob = sign_code_problem(atoms=20)
    with pytest.raises(ValueError):
        train_weak(default_weak_family(prob), sample_strong(prob, 10, 0), FAST)


# -- early stopping -------------------------------------------------------------------


def test_early_stop_at_first_increase():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((60, 5))
    w = rng.integers(0, 2, 60)  # pure noise: the holdout risk must eventually go up
    fam = PredictorFamily("weak", 5, 2, "mlp", hidden=8, radius=50.0)
    cfg = TrainConfig(step_size=2.0, decay=1.0, max_epochs=400, early_stop_every=5, stop_metric="loss", seed=1)
    res = train_weak(fam, _weak_rows(X, w), cfg)
    hold = [(e, r) for e, s, r in res.trajectory if s == "holdout"]
    assert res.stopped_early
    # all but the last check improved; training halted at the check that saw the increase
    risks = [r for _, r in hold]
    assert all(b <= a for a, b in zip(risks[:-2], risks[1:-1])) and risks[-1] > risks[-2]
    assert res.epochs_run == hold[-1][0] and res.epochs_run % cfg.early_stop_every == 0


# -- augment --------------------------------------------------------------------------


def test_augment_preserves_rows_and_attaches_latent():
    prob = sign_code_problem(atoms=100)
    data = sample_strong(prob, 37, 0)
    aug = augment(data, TrueLatent(prob))
    assert len(aug) == 37 and aug.kind == AUGMENTED
    assert np.array_equal(aug.Z, prob.latent(data.X))
    assert np.array_equal(aug.X, data.X) and np.array_equal(aug.labels, data.labels)


def test_augment_is_reproducible():
    prob = sign_code_problem(atoms=100)
    fam = default_weak_family(prob)
    g = WeakModel(fam, fam.init_params(np.random.default_rng(0)))
    data = sample_strong(prob, 50, 1)
    a, b = augment(data, g), augment(data, g)
    assert a.Z.tobytes() == b.Z.tobytes()


# -- train_strong ----------------------------------------------------------------------


def test_strong_reaches_oracle_on_deterministic_problem():
    rng = np.random.default_rng(3)
    U = rng.uniform(-1, 1, (40, 2))
    y = (U[:, 0] + U[:, 1] > 0).astype(np.int64)  # the family contains the Bayes predictor
    fam = PredictorFamily("strong", 2, 1, "linear", radius=3.0, use_bias=False)
    _, grid = erm_grid_oracle(fam, U, y, 200)
    res = train_strong(fam, _aug_rows(U, y), ERM)
    assert fam.mean_loss(res.theta, U, y) <= grid + 1e-3


def test_strong_single_row():
    fam = PredictorFamily("strong", 2, 1, "linear", radius=2.0, use_bias=False)
    U = np.array([[0.6, -0.3]])
    y = np.array([1])
    _, grid = erm_grid_oracle(fam, U, y, 400)
    res = train_strong(fam, _aug_rows(U, y), ERM)
    assert fam.mean_loss(res.theta, U, y) <= grid + 1e-3


def test_strong_training_deterministic():
    prob = sign_code_problem(atoms=200)
    fam = default_strong_family(prob)
    aug = augment(sample_strong(prob, 200, 0), TrueLatent(prob))
    cfg = TrainConfig(step_size=0.5, max_epochs=30, seed=4)
    assert np.array_equal(train_strong(fam, aug, cfg).theta, train_strong(fam, aug, cfg).theta)


def test_train_strong_needs_augmented_rows():
    prob = sign_code_problem(atoms=20)
    with pytest.raises(ValueError):
        train_strong(default_strong_family(prob), sample_strong(prob, 10, 0), FAST)


# -- pipeline ------------------------------------------------------------------------


def _parts(atoms=400, p_flip=0.0):
    prob = sign_code_problem(atoms=atoms, p_flip=p_flip)
    return prob, default_weak_family(prob), default_strong_family(prob)


WEAK_CFG = TrainConfig(step_size=2.0, decay=0.85, batch_size=64, max_epochs=60, early_stop_every=15,
                       stop_metric="loss")


def test_baseline_without_weak_data():
    prob, wf, sf = _parts()
    pipe = run_pipeline(None, sample_strong(prob, 100, 0), wf, sf, WEAK_CFG, FAST, init_seed=3)
    assert pipe.weak_result is None and pipe.provenance["m"] == 0
    pred = pipe.predict(prob.support.atoms)
    assert pred.shape == (400,) and set(np.unique(pred)) <= {0, 1}
    # the frozen random map is the seeded initialisation
    again = run_pipeline(None, sample_strong(prob, 100, 0), wf, sf, WEAK_CFG, FAST, init_seed=3)
    assert np.array_equal(pipe.g_hat.theta, again.g_hat.theta)


def test_perfect_weak_task_gives_low_strong_risk():
    prob, wf, sf = _parts(atoms=2000)
    pipe = run_pipeline(sample_weak(prob, 20000, 1), sample_strong(prob, 1000, 2), wf, sf, WEAK_CFG,
                        TrainConfig(step_size=0.5, max_epochs=200, early_stop_every=5, seed=2), init_seed=0)
    assert exact_risk(pipe, prob).value <= 0.05


def test_pipeline_composition_is_exact():
    prob, wf, sf = _parts()
    pipe = run_pipeline(sample_weak(prob, 500, 1), sample_strong(prob, 100, 2), wf, sf, WEAK_CFG, FAST)
    X = prob.support.atoms[:50]
    manual = sf.predict(pipe.f_theta, np.hstack([X, wf.latent(pipe.g_hat.theta, X)]))
    assert np.array_equal(pipe.predict(X), manual)


def test_weak_map_frozen_during_strong_step():
    prob, wf, sf = _parts()
    weak = sample_weak(prob, 500, 1)
    pipe = run_pipeline(weak, sample_strong(prob, 100, 2), wf, sf, WEAK_CFG, FAST)
    theta0 = wf.init_params(np.random.default_rng(derive_seed(0, "ghat-init")))
    alone = train_weak(wf, weak, WEAK_CFG, theta0=theta0)
    assert np.array_equal(pipe.g_hat.theta, alone.theta)


def test_pipeline_checks_widths():
    prob, wf, _ = _parts()
    bad = PredictorFamily("strong", prob.input_dim, 1, "mlp")
    with pytest.raises(ValueError):
        run_pipeline(None, sample_strong(prob, 10, 0), wf, bad, WEAK_CFG, FAST)


def test_more_strong_data_helps_on_average():
    prob, wf, sf = _parts(atoms=1000, p_flip=0.05)
    cfg = TrainConfig(step_size=0.5, max_epochs=100, early_stop_every=5)
    def mean_risk(n):
        risks = []
        for s in range(10):
            pipe = run_pipeline(sample_weak(prob, 4 * n, 100 + s), sample_strong(prob, n, s), wf, sf, WEAK_CFG,
                                TrainConfig(**{**cfg.__dict__, "seed": s}), init_seed=s)
            risks.append(exact_risk(pipe, prob).value)
        return np.mean(risks)
    assert mean_risk(32) >= mean_risk(128)


# -- grid oracle ----------------------------------------------------------------------


def test_threshold_oracle_tie_break():
    fam = PredictorFamily("strong", 1, 1, "threshold", radius=1.0)
    U = np.array([[-0.9], [-0.5], [0.3], [0.8]])
    y = np.array([0, 0, 1, 1])
    # predictions are 1{u > theta}: zero error for theta in [-0.5, 0.3); grid step is 0.1
    pv, risk = erm_grid_oracle(fam, U, y, 20, metric="zero_one")
    assert risk == 0.0 and pv.values[0] == pytest.approx(-0.5)


def test_oracle_refinement_non_increasing():
    rng = np.random.default_rng(4)
    U = rng.uniform(-1, 1, (30, 2))
    y = (U[:, 0] - 0.3 * U[:, 1] > 0.1).astype(np.int64)
    fam = PredictorFamily("strong", 2, 1, "linear", radius=2.0)
    risks = [erm_grid_oracle(fam, U, y, r)[1] for r in (5, 10, 20)]
    assert risks[0] >= risks[1] >= risks[2]


def test_oracle_constant_family():
    fam = PredictorFamily("strong", 2, 1, "linear", radius=1.0, use_bias=False)
    U = np.zeros((4, 2))
    y = np.array([0, 1, 1, 0])
    pv, risk = erm_grid_oracle(fam, U, y, 4)
    assert risk == pytest.approx(np.log(2))
    assert np.array_equal(pv.values, [-1.0, 0.0])  # lexicographically first point in the ball


def test_oracle_rejects_large_families():
    with pytest.raises(ValueError):
        erm_grid_oracle(PredictorFamily("strong", 4, 1, "linear"), np.zeros((1, 4)), np.zeros(1, int), 3)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(holdout_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(stop_metric="accuracy")
    with pytest.raises(ValueError):
        TrainConfig(step_size=0)


def test_max_steps_caps_work():
    prob = sign_code_problem(atoms=100)
    aug = augment(sample_strong(prob, 500, 0), TrueLatent(prob))
    res = train_strong(default_strong_family(prob), aug, TrainConfig(max_steps=7, holdout_fraction=0.0))
    assert res.steps == 7


def test_strong_kind_tag():
    prob = sign_code_problem(atoms=10)
    assert sample_strong(prob, 3, 0).kind == STRONG
