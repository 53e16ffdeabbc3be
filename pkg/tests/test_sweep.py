import math
import random
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakrate.models import PredictorFamily
from weakrate.problems import default_strong_family, default_weak_family, sign_code_problem
from weakrate.sweep import (
    Growth,
    RateFit,
    SweepConfig,
    SweepRecord,
    aggregate,
    compare_rates,
    default_growths,
    fit_power_law,
    fit_rate,
    plot_svg,
    read_records,
    records_csv,
    run_cell,
    run_sweep,
    weak_size,
)
from weakrate.synth import UniformNoise
from weakrate.training import TrainConfig


def _records(points, schedule="zero", seeds=(0,)):
    return [SweepRecord(schedule, n, 0, s, e, e, 0.0) for n, e in points for s in seeds]


# -- weak_size ----------------------------------------------------------------------


def test_weak_size_examples():
    assert weak_size(1000, Growth("linear", 4)) == 4000
    assert weak_size(1000, Growth("quadratic", 0.02)) == 20000
    assert weak_size(12345, Growth("zero")) == 0


def test_growth_needs_positive_constant():
    with pytest.raises(ValueError):
        Growth("linear", 0.0)
    with pytest.raises(ValueError):
        Growth("cubic", 1.0)


def test_default_growths_share_first_weak_size():
    grid = (64, 128, 256)
    zero, lin, quad = default_growths(4.0, grid)
    assert weak_size(64, lin) == weak_size(64, quad) == 256


# -- fitting ---------------------------------------------------------------------------


def test_exact_power_law():
    fit = fit_rate(_records([(10, 0.2), (100, 0.02), (1000, 0.002)]))
    assert fit.gamma == pytest.approx(1.0, abs=1e-12)
    assert fit.C == pytest.approx(2.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_flat_curve():
    fit = fit_rate(_records([(10, 0.3), (100, 0.3), (1000, 0.3)]))
    assert fit.gamma == pytest.approx(0.0, abs=1e-12)


def test_noisy_power_law():
    rng = np.random.default_rng(0)
    ns = np.geomspace(10, 10000, 10)
    errs = 5 * ns ** -0.5 * (1 + 0.01 * rng.standard_normal(10))
    gamma, _, _ = fit_power_law(ns, errs)
    assert abs(gamma - 0.5) < 0.05


@given(st.floats(0.05, 2.0), st.floats(0.01, 100.0))
def test_noiseless_recovery(gamma, C):
    ns = np.array([16, 32, 64, 128, 256], dtype=float)
    g, logC, r2 = fit_power_law(ns, C * ns ** -gamma)
    assert g == pytest.approx(gamma, abs=1e-9) and logC == pytest.approx(math.log(C), abs=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-9)


def test_non_positive_points_excluded_with_warning():
    recs = _records([(10, 0.2), (20, 0.0), (100, 0.02), (1000, 0.002)])
    with pytest.warns(UserWarning, match="excluded"):
        fit = fit_rate(recs)
    assert fit.point_count == 3 and fit.excluded == 1


def test_too_few_points():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            fit_rate(_records([(10, 0.2), (20, -0.1), (100, 0.02)]))


def test_trim_drops_smallest_n():
    fit = fit_rate(_records([(1, 9.0), (10, 0.2), (100, 0.02), (1000, 0.002)]), trim=1)
    assert fit.point_count == 3 and fit.gamma == pytest.approx(1.0)


def test_failed_cells_not_aggregated():
    recs = _records([(10, 0.2)]) + [SweepRecord("zero", 10, 0, 1, math.nan, math.nan, math.nan, status="error:x")]
    assert aggregate(recs) == {10: 0.2}


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_fit_invariant_to_record_order(rnd):
    rng = np.random.default_rng(1)
    recs = [SweepRecord("zero", n, 0, s, float(e), float(e), 0.0)
            for n in (16, 32, 64, 128) for s, e in enumerate(rng.uniform(0.01, 0.5, 4) / n ** 0.5)]
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    assert fit_rate(recs) == fit_rate(shuffled)


# -- comparison ------------------------------------------------------------------------


def test_compare_reported_gaps():
    cmp = compare_rates({"zero": 0.46, "quadratic": 0.97})
    assert cmp.ordering_ok and cmp.differences["quadratic-zero"] == pytest.approx(0.51)
    assert cmp.warnings == ["missing schedule 'linear'"]
    assert compare_rates({"zero": 0.89, "quadratic": 1.52}).ordering_ok


def test_compare_flags_inversion():
    assert not compare_rates({"zero": 0.5, "quadratic": 0.4}).passed


def test_compare_gap_and_r2():
    fits = {"zero": RateFit(0.4, 0.0, 0.9, 7), "linear": RateFit(0.5, 0.0, 0.95, 7),
            "quadratic": RateFit(0.55, 0.0, 0.7, 7)}
    cmp = compare_rates(fits, min_gap=0.2, min_r2=0.8)
    assert cmp.ordering_ok and not cmp.gap_ok and not cmp.r2_ok


def test_compare_margin():
    assert compare_rates({"zero": 0.5, "linear": 0.45, "quadratic": 0.9}, margin=0.1).ordering_ok
    assert not compare_rates({"zero": 0.5, "linear": 0.45, "quadratic": 0.9}).ordering_ok


# -- running --------------------------------------------------------------------------


def _small_config(**kw):
    prob = sign_code_problem(atoms=500, p_flip=0.05)
    args = dict(n_grid=(16, 32, 64, 128, 256), growths=default_growths(2.0, (16,)), seeds=(0, 1, 2, 3),
                corruption=UniformNoise(0.9, 16))
    args.update(kw)
    return SweepConfig(prob, default_weak_family(prob), default_strong_family(prob),
                       TrainConfig(step_size=2.0, decay=0.85, max_epochs=10, early_stop_every=5, stop_metric="loss"),
                       TrainConfig(step_size=0.5, max_epochs=10), **args)


@pytest.fixture(scope="module")
def small_sweep():
    return run_sweep(_small_config(growths=(Growth("zero"), Growth("linear", 2.0))))


def test_record_count(small_sweep):
    assert len(small_sweep) == 2 * 5 * 4
    assert len([r for r in small_sweep if r.schedule == "zero"]) == 20


def test_schedules_respected(small_sweep):
    for r in small_sweep:
        assert r.m == weak_size(r.n, Growth(r.schedule, 2.0 if r.schedule == "linear" else 0.0))
    assert all(r.m == 0 for r in small_sweep if r.schedule == "zero")


def test_records_valid(small_sweep):
    assert all(r.ok and 0.0 <= r.test_error <= 1.0 for r in small_sweep)
    assert all(r.wall_time is None for r in small_sweep)
    assert all(r.excess_risk == pytest.approx(r.test_error - 0.05, abs=1e-12) for r in small_sweep)


def test_sweep_deterministic(small_sweep):
    again = run_sweep(_small_config(growths=(Growth("zero"), Growth("linear", 2.0))))
    assert records_csv(again) == records_csv(small_sweep)


def test_failed_cell_is_recorded():
    cfg = _small_config()
    wrong_width = PredictorFamily("strong", 3, 1)
    bad = SweepConfig(cfg.problem, cfg.weak_family, wrong_width, cfg.weak_cfg, cfg.strong_cfg,
                      n_grid=(16, 32, 64), growths=(Growth("zero"),), seeds=(0,))
    rec = run_cell(bad, Growth("zero"), 16, 0)
    assert rec.status.startswith("error:") and math.isnan(rec.test_error)
    assert "," not in rec.status


def test_config_validation():
    with pytest.raises(ValueError):
        _small_config(n_grid=(16, 32))
    with pytest.raises(ValueError):
        _small_config(n_grid=(16, 64, 32))
    with pytest.raises(ValueError):
        _small_config(seeds=())


def test_csv_round_trip(small_sweep):
    text = records_csv(small_sweep)
    assert text.splitlines()[0] == "schedule,n,m,seed,test_error,excess_risk,rate_m,wall_time_s,status"
    assert read_records(text) == sorted(small_sweep, key=lambda r: (r.schedule != "zero", r.n, r.seed))


def test_csv_sorted_canonically(small_sweep):
    shuffled = small_sweep[:]
    random.Random(0).shuffle(shuffled)
    assert records_csv(shuffled) == records_csv(small_sweep)


def test_plot_has_one_curve_per_schedule(small_sweep, tmp_path):
    path = tmp_path / "p.svg"
    plot_svg(small_sweep, "test_error", str(path))
    text = path.read_text()
    assert text.startswith("<?xml") and "<svg" in text
    # text is drawn as paths, each preceded by a comment holding the string
    assert "<!-- m=0 -->" in text and "<!-- m=c1·n -->" in text
    assert "<!-- m=c2·n² -->" not in text
