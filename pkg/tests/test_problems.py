import itertools

import numpy as np
import pytest

from weakrate.problems import (
    default_categorical,
    default_strong_family,
    oracle_fixtures,
    separable,
    sign_code_comparator,
    transfer_fixtures,
)
from weakrate.synth import enumerate_support
from weakrate.theory import exact_risk, relative_lipschitz_estimate
from weakrate.training import reference_pipeline

FIXTURES = transfer_fixtures()


def test_fixture_mix():
    assert len(FIXTURES) == 5
    assert sum(fx.categorical for fx in FIXTURES) == 3


@pytest.mark.parametrize("fx", FIXTURES, ids=lambda f: f.name)
def test_analytic_lipschitz_dominates_estimates(fx):
    P = enumerate_support(fx.problem)
    pairs = list(itertools.combinations(fx.g_hats, 2))
    for theta in fx.probes[:15]:
        try:
            est = relative_lipschitz_estimate(fx.family, theta, pairs, P.X, P.Y)
        except ValueError:
            continue
        assert est <= fx.lipschitz + 1e-12


@pytest.mark.parametrize("fx", FIXTURES, ids=lambda f: f.name)
def test_probes_in_ball_and_contain_comparator(fx):
    assert any(np.array_equal(p, fx.f_star) for p in fx.probes)
    assert all(np.linalg.norm(p) <= fx.family.radius + 1e-12 for p in fx.probes)


def test_oracle_fixtures_are_small():
    assert all(fx.family.n_params <= 4 for fx in oracle_fixtures())


def test_default_problem_shape():
    prob = default_categorical()
    assert prob.label_law.p_flip == 0.05
    assert prob.weak_kind.k == 16 and len(prob.support.probs) == 20000
    assert default_strong_family(prob).n_params <= 200


def test_comparator_realizes_separable_labels():
    prob = separable()
    fam = default_strong_family(prob)
    h = reference_pipeline(prob, fam, sign_code_comparator(prob, fam))
    assert exact_risk(h, prob).value == 0.0
