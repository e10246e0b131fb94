import numpy as np
import pytest

from balance_lab.defense import (DefenseModel, GameParams, RandomizedDefense, ReducedSpace, apply_attack,
                                 attack_best_response, attack_objective, attack_randomized,
                                 defender_objective, defender_step, drift_eval, fit_reduction,
                                 make_drift_stream, make_spam_like, nb_predict, nb_trainer, pd_predict,
                                 pd_train, pd_trainer, randomized_grid, randomized_predict, randomized_train,
                                 train_nb_baseline)
from balance_lab.errors import UsageError
from balance_lab.numerics import RandomSource, svd_topk
from oracles import grid_max_vectorised, least_squares, nb_log_posterior


def toy(seed):
    """Eight labelled points in the plane."""
    rng = np.random.default_rng(seed)
    y = np.repeat([1, -1], 4)
    X = rng.normal(size=(8, 2)) * 0.5 + np.outer(y, [0.8, -0.5])
    return X, y


# --- reduction -------------------------------------------------------------

def test_exact_plane_is_reconstructed():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2)) @ rng.normal(size=(2, 6))
    sp = fit_reduction(X, 2)
    assert np.allclose(sp.reconstruct(sp.project(X)), X, atol=1e-10)


def test_full_rank_projection_is_isometry():
    X = np.random.default_rng(1).normal(size=(40, 5))
    sp = fit_reduction(X, 5)
    assert np.allclose(np.linalg.norm(sp.project(X), axis=1), np.linalg.norm(X, axis=1), atol=1e-8)


def test_reduction_uses_shared_kernel():
    X = np.random.default_rng(2).normal(size=(100, 30))
    sp = fit_reduction(X, 5)
    V, s = svd_topk(X, 5)
    assert np.array_equal(sp.basis, V) and np.array_equal(sp.singular_values, s)


def test_projection_checks_width():
    with pytest.raises(UsageError):
        fit_reduction(np.eye(4), 2).project(np.ones(3))


# --- attacker --------------------------------------------------------------

def test_attack_gradient_matches_finite_differences():
    X, y = toy(0)
    W = np.array([[0.7, -0.2], [0.1, 0.4]])
    a = np.array([0.3, -0.8])
    f, g = attack_objective(a, W, X, y, 0.5, 3, "positive")
    h = 1e-6
    fd = [(attack_objective(a + h * e, W, X, y, 0.5, 3, "positive")[0]
           - attack_objective(a - h * e, W, X, y, 0.5, 3, "positive")[0]) / (2 * h) for e in np.eye(2)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-6)


def test_zero_filter_means_zero_attack():
    X, y = toy(1)
    assert np.allclose(attack_best_response(np.zeros(2), X, y, 1.0).a, 0.0)


def test_crushing_cost_paralyses_attacker():
    X, y = toy(2)
    assert np.linalg.norm(attack_best_response(np.array([0.5, -0.5]), X, y, 1e8).a) <= 1e-3


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("scope", ["all", "positive"])
def test_single_attack_matches_grid_search(seed, scope):
    X, y = toy(seed)
    w = defender_step(X, y, None, 0.1)
    res = attack_best_response(w, X, y, 3.0, scope=scope, rng=seed)
    mask = y > 0 if scope == "positive" else None
    best, _ = grid_max_vectorised(w, X, y, 3.0, 3, mask)
    assert np.max(np.abs(res.a)) < 3.0
    assert abs(res.objective - best) <= 0.02 * abs(best)
    assert res.grad_norm <= 1e-6 or res.clamped


@pytest.mark.parametrize("seed", range(5))
def test_randomized_attack_matches_grid_search(seed):
    X, y = toy(seed)
    rd = randomized_train(X, y, m=2, subset_size=1, rng=seed)
    res = attack_randomized(rd, X, y, 3.0, rng=seed)
    best, _ = grid_max_vectorised(rd.embedded(2), X, y, 3.0, 3)
    assert np.max(np.abs(res.a)) < 3.0
    assert abs(res.objective - best) <= 0.02 * abs(best)


def test_attack_scope_moves_only_positive_rows():
    X, y = toy(3)
    moved = apply_attack(X, y, np.array([1.0, 2.0]), "positive")
    assert np.array_equal(moved[y < 0], X[y < 0])
    assert np.allclose(moved[y > 0], X[y > 0] + [1.0, 2.0])


# --- defender --------------------------------------------------------------

def test_no_regularisation_gives_least_squares():
    X, y = toy(4)
    assert np.allclose(defender_step(X, y, None, 0.0), least_squares(X, y), atol=1e-6)


def test_squared_penalty_gives_ridge():
    X, y = toy(5)
    ridge = np.linalg.solve(X.T @ X + 0.7 * np.eye(2), X.T @ y)
    assert np.allclose(defender_step(X, y, None, 0.7, exponent=2), ridge, atol=1e-8)


def test_heavy_regularisation_shrinks_filter():
    # a cubic penalty shrinks the filter like beta ** -1/2
    X, y = toy(6)
    assert np.linalg.norm(defender_step(X, y, None, 1e8)) <= 1e-3


def test_shifting_data_equals_passing_the_attack():
    X, y = toy(7)
    a = np.array([0.4, -0.3])
    assert np.allclose(defender_step(X + a, y, None, 0.1), defender_step(X, y, a, 0.1), atol=1e-8)


def test_defender_optimum_beats_perturbations():
    X, y = toy(8)
    a = np.array([0.2, 0.1])
    w = defender_step(X, y, a, 0.1)
    f0 = defender_objective(w, X, y, a, 0.1)[0]
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert defender_objective(w + 1e-3 * rng.normal(size=2), X, y, a, 0.1)[0] >= f0


def test_params_validation():
    with pytest.raises(UsageError):
        GameParams(exponent=4)
    with pytest.raises(UsageError):
        GameParams(scope="spam")
    with pytest.raises(UsageError):
        GameParams(alpha=-1)


# --- predictive defense ----------------------------------------------------

def small_stream(seed, drift=0.6, bins=4):
    return make_drift_stream(bins, drift, seed, per_class=100)


def test_paralysed_attacker_reduces_to_static_training():
    X, y = small_stream(0).bins[0]
    p = GameParams(alpha=1e6)
    model = pd_train(X, y, p, rng=0)
    static = defender_step(model.space.project(X), y, None, p.beta)
    assert np.linalg.norm(model.w - static) <= 1e-3
    acc = np.mean(pd_predict(model, X) == y)
    acc_static = np.mean(np.where(model.space.project(X) @ static > 0, 1, -1) == y)
    assert abs(acc - acc_static) <= 0.005


@pytest.mark.parametrize("method", ["leader", "alternating"])
def test_returned_filter_beats_start_under_final_attack(method):
    X, y = small_stream(1).bins[0]
    p = GameParams(scope="positive", method=method, outer_iter=5)
    model = pd_train(X, y, p, rng=1)
    Z = model.space.project(X)
    w0 = defender_step(Z, y, None, p.beta, p.exponent, p.scope)
    assert (defender_objective(model.w, Z, y, model.a, p.beta, 3, p.scope)[0]
            <= defender_objective(w0, Z, y, model.a, p.beta, 3, p.scope)[0] + 1e-9)
    assert model.history


def test_pd_predict_signs_and_scaling():
    sp = ReducedSpace(np.eye(2), np.ones(2))
    m = DefenseModel(np.array([1.0, 0.0]), np.zeros(2), sp, GameParams())
    X = np.array([[2.0, 1.0], [-1.0, 3.0], [0.0, 5.0]])
    assert list(pd_predict(m, X)) == [1, -1, -1]
    m2 = DefenseModel(4.0 * m.w, m.a, sp, m.params)
    assert np.array_equal(pd_predict(m, X), pd_predict(m2, X))


def test_pd_train_needs_two_classes():
    with pytest.raises(UsageError):
        pd_train(np.ones((4, 3)), np.ones(4))


# --- naive Bayes -----------------------------------------------------------

def test_nb_disjoint_vocabularies():
    X = np.array([[3.0, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0, 4.0]])
    y = np.array([1, -1])
    m = train_nb_baseline(X, y)
    assert list(nb_predict(m, X)) == [1, -1]
    assert m.log_prior[1] == pytest.approx(np.log(0.5))


def test_nb_matches_hand_computation():
    X = np.array([[2.0, 1.0, 0.0], [0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [0.0, 2.0, 2.0]])
    y = np.array([1, -1, 1, -1])
    m = train_nb_baseline(X, y)
    docs = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 2.0], [1.0, 1.0, 1.0]])
    for x, label in zip(docs, nb_predict(m, docs)):
        s = nb_log_posterior(X, y, x)
        assert label == max(s, key=s.get)
    jll = m.classifier.predict_joint_log_proba(docs)
    for row, x in zip(jll, docs):
        s = nb_log_posterior(X, y, x)
        assert np.allclose(row, [s[-1], s[1]])


def test_nb_rejects_negative_counts():
    with pytest.raises(UsageError):
        train_nb_baseline(-np.ones((2, 2)), np.array([1, -1]))


# --- drift stream ----------------------------------------------------------

def test_zero_drift_bins_share_a_distribution():
    s = small_stream(2, drift=0.0)
    assert np.all(s.mix == 0.0)
    means = [X[y > 0].mean(axis=0) / X[y > 0].sum(axis=1).mean() for X, y in s.bins]
    for m in means[1:]:
        assert np.max(np.abs(m - means[0])) < 0.01


def test_full_drift_makes_classes_coincide():
    s = make_drift_stream(4, 1.0, 3, per_class=300)
    assert s.mix[-1] == 1.0
    X, y = s.bins[-1]
    p = X[y > 0].sum(axis=0) / X[y > 0].sum()
    n = X[y < 0].sum(axis=0) / X[y < 0].sum()
    assert np.abs(p - n).sum() < 0.06  # sampling noise only
    nb = train_nb_baseline(*s.bins[0])
    assert abs(np.mean(nb_predict(nb, X) == y) - 0.5) < 0.1


def test_class_mean_distance_shrinks_bin_to_bin():
    s = make_drift_stream(8, 0.6, 4, per_class=300)
    d = []
    for X, y in s.bins:
        p = X[y > 0].sum(axis=0) / X[y > 0].sum()
        n = X[y < 0].sum(axis=0) / X[y < 0].sum()
        d.append(np.linalg.norm(p - n))
    assert all(b < a for a, b in zip(d, d[1:]))


def test_stream_is_deterministic():
    a, b = small_stream(5), small_stream(5)
    assert all(np.array_equal(x1, x2) and np.array_equal(y1, y2) for (x1, y1), (x2, y2) in zip(a.bins, b.bins))


def test_stationary_stream_no_degradation():
    s = small_stream(6, drift=0.0)
    _, drop = drift_eval(s, {"pd": pd_trainer(GameParams(scope="positive"), 20, 6), "nb": nb_trainer()})
    assert abs(drop["pd"]) <= 0.02 + 0.03 and abs(drop["nb"]) <= 0.02 + 0.03


def test_drift_eval_rejects_empty_bin():
    with pytest.raises(UsageError):
        drift_eval([(np.ones((2, 3)), np.array([1, -1])), (np.ones((0, 3)), np.zeros(0))], {"nb": nb_trainer()})


# --- randomized features ---------------------------------------------------

def test_subsets_are_a_random_partition():
    Z, y = make_spam_like(50, 20, rng=0)
    rd = randomized_train(Z, y, 2, 10, rng=1)
    assert sorted(np.concatenate(rd.subsets).tolist()) == list(range(20))


def test_single_full_subset_equals_single_filter():
    Z, y = make_spam_like(100, 6, rng=1)
    w = defender_step(Z, y, None, 0.1)
    rd = randomized_train(Z, y, subsets=[np.arange(6)])
    assert np.allclose(rd.weights[0], w, atol=1e-12)
    assert np.array_equal(randomized_predict(rd, Z, RandomSource(0)), np.where(Z @ w > 0, 1, -1))
    a1 = attack_best_response(w, Z, y, 10.0, rng=2)
    a2 = attack_randomized(rd, Z, y, 10.0, rng=2)
    assert np.allclose(a1.a, a2.a) and a1.objective == pytest.approx(a2.objective)


def test_duplicated_full_subsets_predict_identically():
    Z, y = make_spam_like(100, 6, rng=2)
    w = defender_step(Z, y, None, 0.1)
    rd = randomized_train(Z, y, subsets=[np.arange(6), np.arange(6), np.arange(6)])
    for s in range(5):
        assert np.array_equal(randomized_predict(rd, Z, RandomSource(s)), np.where(Z @ w > 0, 1, -1))


def test_randomized_prediction_is_deterministic_per_draw():
    Z, y = make_spam_like(100, 20, rng=3)
    rd = randomized_train(Z, y, rng=4)
    assert np.array_equal(randomized_predict(rd, Z, RandomSource(9)), randomized_predict(rd, Z, RandomSource(9)))


def test_randomized_predict_requires_seed():
    Z, y = make_spam_like(10, 4, rng=0)
    rd = randomized_train(Z, y, 2, 2, rng=0)
    with pytest.raises(UsageError):
        randomized_predict(rd, Z, None)


def test_randomized_attack_is_crushed_by_cost():
    Z, y = make_spam_like(50, 8, rng=5)
    rd = randomized_train(Z, y, 2, 4, rng=5)
    assert np.linalg.norm(attack_randomized(rd, Z, y, 1e8).a) <= 1e-3


def test_subset_size_checked():
    Z, y = make_spam_like(10, 4, rng=0)
    with pytest.raises(UsageError):
        randomized_train(Z, y, 2, 5, rng=0)


def test_grid_has_four_cells():
    Z, y = make_spam_like(200, 20, rng=6)
    g = randomized_grid(Z[:200], y[:200], Z[200:], y[200:], rng=6)
    assert set(g) == {(d, c) for d in ("single", "randomized") for c in ("nominal", "attacked")}
    assert all(0.0 <= v <= 1.0 for v in g.values())


def test_spam_like_spreads_evidence_evenly():
    Z, y = make_spam_like(4000, 10, rng=7)
    d = (Z[y > 0].mean(axis=0) - Z[y < 0].mean(axis=0)) / Z[y > 0].std(axis=0)
    assert np.allclose(np.abs(d), 1.1, atol=0.1)
