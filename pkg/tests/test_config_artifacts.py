import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weakrate import build
from weakrate.artifacts import (
    dataset_csv,
    ledger_csv,
    params_csv,
    provenance_json,
    read_dataset,
    read_params,
    trajectory_csv,
)
from weakrate.config import SCHEMA, Config, ConfigError, help_text, load, parse_pairs, problem_dumps, problem_loads
from weakrate.models import ParamVector, PredictorFamily
from weakrate.problems import continuous_fixture, sign_code_problem
from weakrate.seeding import derive_seed, rng_for
from weakrate.synth import Coarse, UniformNoise, enumerate_support, sample_strong, sample_weak
from weakrate.theory import LEDGER_COLUMNS, ledger_row
from weakrate.training import TrueLatent, augment


# -- seeding ------------------------------------------------------------------------


def test_derived_seeds_are_stable_and_distinct():
    assert derive_seed(0, "strong", 64, 1) == derive_seed(0, "strong", 64, 1)
    seen = {derive_seed(g, c, n) for g in range(3) for c in ("weak", "strong") for n in (64, 128)}
    assert len(seen) == 12


def test_new_component_does_not_shift_existing_stream():
    before = rng_for(7, "weak").random(5)
    rng_for(7, "brand-new-component").random(100)
    assert np.array_equal(before, rng_for(7, "weak").random(5))


@given(st.integers(0, 2 ** 40), st.text(max_size=10))
def test_seed_range(g, name):
    s = derive_seed(g, name)
    assert 0 <= s < 2 ** 63


# -- config --------------------------------------------------------------------------


def test_defaults_and_overrides():
    cfg = load(overrides=["sweep.n_grid=8,16,32", "strong.hidden=5"], seed=3, workers=2)
    assert cfg["sweep.n_grid"] == (8, 16, 32) and cfg["strong.hidden"] == 5
    assert cfg["run.seed"] == 3 and cfg["run.workers"] == 2
    assert cfg["problem.p_flip"] == 0.05


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError, match="unknown config key"):
        load(overrides=["sweep.ngrid=1,2,3"])


def test_bad_value_is_an_error():
    with pytest.raises(ConfigError):
        load(overrides=["strong.hidden=many"])
    with pytest.raises(ConfigError):
        load(overrides=["sweep.timing=perhaps"])


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nrun.seed=5\nsweep.c1 = 2.5  # trailing comment\n\n")
    cfg = load(str(path), ["sweep.c1=3"])
    assert cfg["run.seed"] == 5 and cfg["sweep.c1"] == 3.0


def test_parse_pairs_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_pairs("just words")


def test_dump_round_trip():
    cfg = load(overrides=["sweep.seeds=4,5", "sweep.timing=true"])
    again = Config(dict(parse_pairs(cfg.dumps())))
    assert again.dumps() == cfg.dumps() and again.digest() == cfg.digest()


def test_help_lists_every_key():
    text = help_text()
    assert all(k in text for k in SCHEMA)


def test_train_sections_build_configs():
    cfg = load()
    weak = build.train_config(cfg, "weak_train")
    assert weak.step_size == 2.0 and weak.early_stop_every == 15 and weak.stop_metric == "loss"
    with pytest.raises(ConfigError):
        build.train_config(load(overrides=["strong_train.holdout_fraction=1.5"]), "strong_train")


def test_build_corruptions():
    cfg = load(overrides=["problem.atoms=200"])
    prob = build.problem(cfg)
    assert build.corruption(cfg, prob) == UniformNoise(0.9, 16)
    assert build.corruption(load(overrides=["corruption.kind=coarse", "corruption.d=5"]), prob) == Coarse(5)
    with pytest.raises(ConfigError):
        build.corruption(load(overrides=["corruption.kind=gaussian"]), prob)


def test_coarse_corruption_shrinks_weak_head():
    cfg = load(overrides=["problem.atoms=200", "corruption.kind=coarse", "corruption.d=5"])
    _, weak, strong, _, _, _ = build.pipeline_parts(cfg)
    assert weak.n_outputs == 5 and strong.in_dim == 6 + 4


def test_annotator_corruption_reaches_target():
    cfg = load(overrides=["problem.atoms=300", "corruption.kind=annotator", "corruption.target_accuracy=0.6",
                          "corruption.m=1500"])
    prob, weak, _, corr, _, _ = build.pipeline_parts(cfg)
    data = sample_weak(prob, 3000, 0, corr)
    agree = np.mean(data.labels == prob.clean_weak(data.X))
    assert agree >= 0.5


def test_unknown_preset():
    with pytest.raises(ConfigError):
        build.problem(load(overrides=["problem.preset=cifar"]))


def test_schedule_constants():
    growths = build.growths(load())
    assert [g.kind for g in growths] == ["zero", "linear", "quadratic"]
    assert growths[1].c == 4.0 and growths[2].c == pytest.approx(4.0 / 64)


# -- problem files ---------------------------------------------------------------------


@pytest.mark.parametrize("prob", [sign_code_problem(atoms=30, p_flip=0.1), continuous_fixture(2).problem],
                         ids=["categorical", "continuous"])
def test_problem_round_trip(prob):
    back = problem_loads(problem_dumps(prob))
    assert problem_dumps(back) == problem_dumps(prob)
    a, b = enumerate_support(prob), enumerate_support(back)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.W, b.W) and np.array_equal(a.prob, b.prob)


def test_problem_file_missing_key():
    with pytest.raises(ConfigError):
        problem_loads("name=x\ninput_dim=2\n")


# -- artifacts --------------------------------------------------------------------------


def test_dataset_csv_layout_and_round_trip():
    prob = sign_code_problem(atoms=50)
    data = sample_strong(prob, 5, 42)
    text = dataset_csv(data)
    lines = text.splitlines()
    assert lines[:2] == ["kind,seed", "strong,42"]
    assert lines[2] == "x_0,x_1,x_2,x_3,x_4,x_5,label" and len(lines) == 3 + 5
    back = read_dataset(text)
    assert np.array_equal(back.X, data.X) and np.array_equal(back.labels, data.labels)


def test_augmented_and_continuous_round_trip():
    prob = sign_code_problem(atoms=50)
    aug = augment(sample_strong(prob, 4, 1), TrueLatent(prob))
    back = read_dataset(dataset_csv(aug))
    assert np.array_equal(back.Z, aug.Z)
    cont = sample_weak(continuous_fixture(0).problem, 6, 2)
    back = read_dataset(dataset_csv(cont))
    assert np.array_equal(back.labels, cont.labels)


def test_params_round_trip():
    fam = PredictorFamily("strong", 3, 1, "mlp", hidden=2)
    theta = fam.init_params(np.random.default_rng(0))
    text = params_csv(ParamVector.of(fam, theta))
    assert text.startswith("family_id,theta_0,")
    back = read_params(text)
    assert back.family_id == fam.family_id and np.array_equal(back.values, theta)


def test_trajectory_and_ledger_headers():
    assert trajectory_csv([(0, "holdout", 0.5)]).splitlines() == ["epoch,split,risk", "0,holdout,0.5"]
    text = ledger_csv([ledger_row("rate_m", "exact", 0.1)])
    assert text.splitlines()[0] == ",".join(LEDGER_COLUMNS)


def test_provenance_is_canonical():
    rec = {"b": np.int64(2), "a": (np.float64(0.5), np.arange(2))}
    text = provenance_json(rec)
    assert json.loads(text) == {"a": [0.5, [0, 1]], "b": 2}
    assert text == provenance_json(dict(reversed(list(rec.items()))))
