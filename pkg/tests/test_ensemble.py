"""Objective evaluation, decisions, party weights, and the max-model baseline."""

import numpy as np
import pytest

from conftest import ConstantClassifier, ConstantDensity, LinearDensity, random_simplex
from densemble.ensemble import (
    EnsembleModel,
    PartyModel,
    build_ensemble,
    decide,
    decide_with_weights,
    evaluate_objective,
    lambda_weights,
    max_model_decide,
    posterior,
)


def two_party_example():
    """Two parties, two classes, densities fixed at log 1 and log e^-1."""
    parties = [
        PartyModel(ConstantClassifier([0.9, 0.1], (0, 1)), ConstantDensity(0.0), 1),
        PartyModel(ConstantClassifier([0.2, 0.8], (0, 1)), ConstantDensity(-1.0), 1),
    ]
    return build_ensemble(parties, num_classes=2)


def test_build_ensemble_priors():
    mk = lambda size: PartyModel(ConstantClassifier([1.0], (0,)), ConstantDensity(0.0), size)
    assert np.allclose(build_ensemble([mk(1000), mk(1000)]).priors, [0.5, 0.5])
    assert np.allclose(build_ensemble([mk(600), mk(200), mk(200)]).priors, [0.6, 0.2, 0.2])
    assert np.allclose(build_ensemble([mk(7)]).priors, [1.0])


def test_build_ensemble_empty_rejected():
    with pytest.raises(ValueError):
        build_ensemble([])
    with pytest.raises(ValueError):
        PartyModel(ConstantClassifier([1.0], (0,)), ConstantDensity(0.0), 0)


def test_objective_two_party_frozen_values():
    # hand evaluation: J0 = 0.5*1*0.9 + 0.5*e^-1*0.2, J1 = 0.5*1*0.1 + 0.5*e^-1*0.8
    ens = two_party_example()
    om = evaluate_objective(ens, np.zeros((1, 2)))
    e1 = np.exp(-1.0)
    assert np.isclose(om.objective[0, 0], 0.45 + 0.1 * e1, atol=1e-12)
    assert np.isclose(om.objective[0, 1], 0.05 + 0.4 * e1, atol=1e-12)
    # five-decimal values: (0.48679, 0.19715)
    assert round(float(om.objective[0, 0]), 5) == 0.48679
    assert round(float(om.objective[0, 1]), 5) == 0.19715
    assert decide(ens, np.zeros((1, 2)))[0] == 0


def test_objective_weight_invariants():
    rng = np.random.default_rng(0)
    parties = [
        PartyModel(
            ConstantClassifier(random_simplex(rng, 3), (0, 1, 2)),
            LinearDensity(rng.normal(size=2)),
            int(rng.integers(1, 50)),
        )
        for _ in range(4)
    ]
    ens = build_ensemble(parties, num_classes=3)
    X = rng.normal(size=(50, 2))
    om = evaluate_objective(ens, X)
    assert np.all(om.weights >= 0)
    assert np.all(om.weights <= ens.priors[None, :] + 1e-15)
    best = np.argmax(om.loglik, axis=1)
    assert np.array_equal(om.weights[np.arange(50), best], ens.priors[best])
    want = np.einsum("njk,nj->nk", om.posteriors, om.weights)
    assert np.allclose(om.objective, want, atol=1e-15)


def test_single_party_degeneracy():
    rng = np.random.default_rng(1)
    probs = random_simplex(rng, 3)
    party = PartyModel(ConstantClassifier(probs, (0, 1, 2)), LinearDensity([1.0, -2.0]), 5)
    ens = build_ensemble([party], num_classes=3)
    X = rng.normal(size=(20, 2))
    om = evaluate_objective(ens, X)
    assert np.allclose(om.objective, np.tile(probs, (20, 1)), atol=1e-15)
    assert np.array_equal(decide(ens, X), np.full(20, int(np.argmax(probs))))
    assert np.array_equal(decide(ens, X), max_model_decide(ens, X))


def test_shift_invariance_of_objective_and_decisions():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(100, 2))
    for c in (-100.0, 0.0, 37.0, 700.0):
        parties_a, parties_b = [], []
        for j in range(3):
            probs = random_simplex(rng, 4)
            a = rng.normal(size=2)
            b = float(rng.normal())
            size = int(rng.integers(1, 30))
            parties_a.append(
                PartyModel(ConstantClassifier(probs, (0, 1, 2, 3)), LinearDensity(a, b), size)
            )
            parties_b.append(
                PartyModel(ConstantClassifier(probs, (0, 1, 2, 3)), LinearDensity(a, b + c), size)
            )
        ens_a = build_ensemble(parties_a, num_classes=4)
        ens_b = build_ensemble(parties_b, num_classes=4)
        Ja = evaluate_objective(ens_a, X).objective
        Jb = evaluate_objective(ens_b, X).objective
        assert np.allclose(Ja, Jb, atol=1e-12)
        assert np.array_equal(decide(ens_a, X), decide(ens_b, X))


def test_prior_scale_invariance():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 2))
    specs = [(random_simplex(rng, 3), rng.normal(size=2)) for _ in range(3)]
    sizes = [2, 5, 13]
    builds = []
    for mult in (1, 10):
        parties = [
            PartyModel(ConstantClassifier(p, (0, 1, 2)), LinearDensity(a), s * mult)
            for (p, a), s in zip(specs, sizes)
        ]
        builds.append(build_ensemble(parties, num_classes=3))
    assert np.allclose(builds[0].priors, builds[1].priors, atol=1e-15)
    assert np.array_equal(decide(builds[0], X), decide(builds[1], X))


def test_missing_class_never_wins():
    rng = np.random.default_rng(4)
    parties = [
        PartyModel(ConstantClassifier(random_simplex(rng, 2), (0, 1)), LinearDensity(rng.normal(size=2)), 3),
        PartyModel(ConstantClassifier(random_simplex(rng, 2), (1, 2)), LinearDensity(rng.normal(size=2)), 4),
    ]
    ens = build_ensemble(parties, num_classes=4)
    X = rng.normal(size=(300, 2))
    om = evaluate_objective(ens, X)
    assert np.all(om.objective[:, 3] == 0.0)
    assert np.all(decide(ens, X) != 3)


def test_lambda_weights_uniform_when_symmetric():
    parties = [
        PartyModel(ConstantClassifier([1.0, 0.0], (0, 1)), ConstantDensity(-2.0), 10),
        PartyModel(ConstantClassifier([0.0, 1.0], (0, 1)), ConstantDensity(-2.0), 10),
    ]
    ens = build_ensemble(parties, num_classes=2)
    lam = lambda_weights(ens, np.zeros(2))
    assert np.allclose(lam, [0.5, 0.5], atol=1e-15)


def test_lambda_weights_frozen_example():
    # softmax of (0, -1): 1/(1+e^-1) = 0.73106 to five decimals
    ens = two_party_example()
    lam = lambda_weights(ens, np.zeros(2))
    want = 1.0 / (1.0 + np.exp(-1.0))
    assert np.isclose(lam[0], want, atol=1e-12)
    assert round(float(lam[0]), 5) == 0.73106
    assert round(float(lam[1]), 5) == 0.26894


def test_lambda_weights_floor_dominance():
    parties = [
        PartyModel(ConstantClassifier([1.0, 0.0], (0, 1)), ConstantDensity(-745.0), 1),
        PartyModel(ConstantClassifier([0.0, 1.0], (0, 1)), ConstantDensity(-1.0), 1),
    ]
    ens = build_ensemble(parties, num_classes=2)
    lam = lambda_weights(ens, np.zeros(2))
    assert lam[1] > 1.0 - 1e-12
    assert lam[0] < 1e-300


def test_lambda_weights_simplex_property():
    rng = np.random.default_rng(5)
    parties = [
        PartyModel(
            ConstantClassifier(random_simplex(rng, 3), (0, 1, 2)),
            LinearDensity(rng.normal(size=2), float(rng.normal())),
            int(rng.integers(1, 20)),
        )
        for _ in range(5)
    ]
    ens = build_ensemble(parties, num_classes=3)
    lam = lambda_weights(ens, rng.normal(size=(1000, 2)))
    assert np.all(lam >= 0)
    assert np.allclose(lam.sum(axis=1), 1.0, atol=1e-12)


def test_normalized_posterior_rows_sum_to_one():
    rng = np.random.default_rng(6)
    parties = [
        PartyModel(
            ConstantClassifier(random_simplex(rng, 4), (0, 1, 2, 3)),
            LinearDensity(rng.normal(size=2)),
            int(rng.integers(1, 9)),
        )
        for _ in range(3)
    ]
    ens = build_ensemble(parties, num_classes=4)
    P = posterior(ens, rng.normal(size=(100, 2)))
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(P >= 0)


def test_decide_tie_breaks_to_lowest_class():
    party = PartyModel(ConstantClassifier([0.5, 0.5], (0, 1)), ConstantDensity(0.0), 1)
    ens = build_ensemble([party], num_classes=2)
    assert decide(ens, np.zeros((3, 2)))[0] == 0


def test_max_model_two_party_example():
    # first party has the higher density (0 > -1); it alone labels the query
    ens = two_party_example()
    assert max_model_decide(ens, np.zeros((1, 2)))[0] == 0


def test_max_model_matches_delta_weights():
    rng = np.random.default_rng(7)
    parties = [
        PartyModel(
            ConstantClassifier(random_simplex(rng, 2), tuple(sorted(rng.choice(4, size=2, replace=False)))),
            LinearDensity(rng.normal(size=2), float(rng.normal())),
            int(rng.integers(1, 40)),
        )
        for _ in range(4)
    ]
    ens = build_ensemble(parties, num_classes=4)
    X = rng.normal(size=(1000, 2))
    om = evaluate_objective(ens, X)
    best = np.argmax(om.loglik, axis=1)
    delta = np.zeros((1000, 4))
    delta[np.arange(1000), best] = 1.0
    assert np.array_equal(decide_with_weights(ens, X, delta), max_model_decide(ens, X))


def test_agreeing_parties_decide_their_class():
    parties = [
        PartyModel(ConstantClassifier([0.0, 0.0, 1.0], (0, 1, 2)), LinearDensity([1.0, 0.0]), 2),
        PartyModel(ConstantClassifier([0.0, 0.0, 1.0], (0, 1, 2)), LinearDensity([-1.0, 0.5]), 3),
    ]
    ens = build_ensemble(parties, num_classes=3)
    X = np.random.default_rng(8).normal(size=(20, 2))
    assert np.all(decide(ens, X) == 2)


def test_queries_must_be_finite():
    ens = two_party_example()
    with pytest.raises(ValueError, match="finite"):
        evaluate_objective(ens, np.array([[np.nan, 0.0]]))


def test_ensemble_model_validation():
    party = PartyModel(ConstantClassifier([1.0], (0,)), ConstantDensity(0.0), 1)
    with pytest.raises(ValueError):
        EnsembleModel([party], np.array([0.5]), 1)
    with pytest.raises(ValueError):
        EnsembleModel([party], np.array([0.5, 0.5]), 1)
    with pytest.raises(ValueError, match="label_space"):
        EnsembleModel([party], np.array([1.0]), 0)
