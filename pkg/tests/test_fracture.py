from itertools import combinations

import numpy as np
import pytest

from balance_lab.errors import UsageError
from balance_lab.fracture import (DELTA_SWEEP, RelationMatrix, check_balance, complete_relations,
                                  karate_relation_matrix, load_karate, planted_relation_matrix, predict_split,
                                  simulate_fracture, split_agreement)
from balance_lab.numerics import RandomSource


def two_group_matrix(groups, eps=0.1):
    groups = np.asarray(groups)
    Z = np.where(groups[:, None] == groups[None, :], eps, -eps)
    np.fill_diagonal(Z, 0.0)
    return Z


# --- relation matrices -----------------------------------------------------

def test_asymmetric_input_reports_indices():
    Z = np.zeros((3, 3))
    Z[0, 2] = 1.0
    with pytest.raises(UsageError, match=r"\(0,2\)"):
        RelationMatrix.full(Z)


def test_asymmetric_mask_rejected():
    known = np.ones((3, 3), dtype=bool)
    known[1, 2] = False
    with pytest.raises(UsageError, match="mask"):
        RelationMatrix(np.zeros((3, 3)), known)


def test_nonzero_diagonal_rejected():
    with pytest.raises(UsageError):
        RelationMatrix.full(np.eye(2))


def test_from_nan_marks_unknowns():
    Z = np.array([[0, np.nan, 1], [np.nan, 0, -1], [1, -1, 0]])
    r = RelationMatrix.from_nan(Z)
    assert not r.fully_known and r.Z[0, 1] == 0.0
    assert r.known_fraction() == pytest.approx(2 / 3)


# --- balance check ---------------------------------------------------------

def test_all_positive_is_balanced():
    assert check_balance(np.ones((4, 4)))[0]


def test_one_negative_edge_in_triangle():
    S = np.ones((3, 3))
    S[0, 1] = S[1, 0] = -1
    ok, bad = check_balance(S)
    assert not ok and bad == [(0, 1, 2)]


def test_two_clique_pattern_is_balanced():
    S = np.sign(two_group_matrix([0, 0, 0, 1, 1]) + np.eye(5))
    ok, bad = check_balance(S)
    assert ok and not bad
    # all ten triangles have an odd number of positive edges
    for i, j, k in combinations(range(5), 3):
        assert (S[i, j] > 0) + (S[j, k] > 0) + (S[i, k] > 0) in (1, 3)


# --- simulation ------------------------------------------------------------

def test_planted_epsilon_split_is_recovered():
    groups = np.array([0, 1, 0, 0, 1, 1, 0, 1])
    pred = simulate_fracture(two_group_matrix(groups))
    assert pred.balanced and pred.blew_up
    assert split_agreement(pred.groups, groups) == 1.0


def test_all_positive_gives_one_group():
    Z = np.ones((5, 5)) - np.eye(5)
    pred = simulate_fracture(Z)
    assert pred.balanced and set(pred.groups) == {1}
    assert len(pred.members(2)) == 0


def test_two_entities_one_positive_relation():
    pred = simulate_fracture(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert pred.blew_up and list(pred.groups) == [1, 1]
    assert pred.t_sing == pytest.approx(1.0, rel=0.01)


def test_no_blowup_gives_single_group_and_infinite_time():
    Z = -np.ones((3, 3)) * 0.01 + 0.01 * np.eye(3)
    pred = simulate_fracture(Z, horizon=1.0)
    assert not pred.blew_up and pred.t_sing == float("inf")
    assert set(pred.groups) == {1}


def test_scale_covariance():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(6, 6))
    Z0 = np.triu(M, 1) + np.triu(M, 1).T
    a = simulate_fracture(Z0)
    b = simulate_fracture(3.0 * Z0)
    assert split_agreement(a.groups, b.groups) == 1.0
    assert b.t_sing == pytest.approx(a.t_sing / 3.0, rel=0.01)


@pytest.mark.parametrize("seed", range(10))
def test_balanced_flag_means_at_most_two_positive_components(seed):
    from scipy.sparse.csgraph import connected_components

    rng = np.random.default_rng(seed)
    M = rng.normal(size=(8, 8))
    pred = simulate_fracture(np.triu(M, 1) + np.triu(M, 1).T)
    if pred.balanced:
        n_comp, _ = connected_components(pred.signs > 0, directed=False)
        assert n_comp in (1, 2)


def test_partially_known_matrix_rejected():
    known = np.ones((3, 3), dtype=bool)
    known[0, 1] = known[1, 0] = False
    with pytest.raises(UsageError):
        simulate_fracture(RelationMatrix(np.zeros((3, 3)), known))


# --- completion ------------------------------------------------------------

def test_fully_known_completion_is_identity():
    r = RelationMatrix.full(two_group_matrix([0, 0, 1]))
    assert complete_relations(r) is r


def test_single_unknown_completes_balanced_pattern():
    groups = np.array([0, 0, 0, 1, 1, 1])
    Z = two_group_matrix(groups, 1.0)
    for i, j in [(0, 1), (0, 4), (3, 5)]:
        known = np.ones_like(Z, dtype=bool)
        known[i, j] = known[j, i] = False
        full = complete_relations(RelationMatrix(Z, known))
        assert np.sign(full.Z[i, j]) == np.sign(Z[i, j])
        assert check_balance(np.sign(full.Z + np.eye(6)))[0]


def test_completion_uses_median_known_magnitude():
    Z = two_group_matrix([0, 0, 1, 1], 1.0)
    Z[0, 2] = Z[2, 0] = -3.0
    known = np.ones_like(Z, dtype=bool)
    known[1, 3] = known[3, 1] = False
    full = complete_relations(RelationMatrix(Z, known))
    assert abs(full.Z[1, 3]) == 1.0


def test_smallest_partial_input_is_defined():
    Z = np.zeros((3, 3))
    Z[0, 2] = Z[2, 0] = 1.0
    known = np.eye(3, dtype=bool)
    known[0, 2] = known[2, 0] = True
    pred = predict_split(RelationMatrix(Z, known))
    assert pred.groups.shape == (3,)


def test_all_unknown_rejected():
    with pytest.raises(UsageError):
        complete_relations(RelationMatrix(np.zeros((2, 2)), np.eye(2, dtype=bool)))


def test_predict_split_on_full_matrix_equals_simulation():
    Z, _ = planted_relation_matrix(9, RandomSource(1))
    a = predict_split(RelationMatrix.full(Z))
    b = simulate_fracture(Z)
    assert np.array_equal(a.groups, b.groups) and a.t_sing == b.t_sing


@pytest.mark.parametrize("seed", range(5))
def test_two_known_rows_recover_planted_groups(seed):
    rng = RandomSource(seed)
    Z, groups = planted_relation_matrix(17, rng.child("matrix"))
    known = np.zeros_like(Z, dtype=bool)
    known[[0, 1], :] = True
    known[:, [0, 1]] = True
    pred = predict_split(RelationMatrix(Z, known))
    assert split_agreement(pred.groups, groups) * 17 >= 16


# --- Zachary fixture -------------------------------------------------------

def test_karate_fixture_shape():
    g, faction = load_karate()
    assert g.n == 34 and g.m == 78
    assert np.sum(faction == 0) == 17 and np.sum(faction == 1) == 17


def test_karate_sweep_agreement():
    # frozen from the sweep: weak hostility leaves one club, from 0.1 on one member is misplaced
    g, faction = load_karate()
    got = {d: split_agreement(simulate_fracture(karate_relation_matrix(d, g)).groups, faction)
           for d in DELTA_SWEEP}
    assert got[0.01] == 0.5 and got[0.02] == 0.5
    for d in (0.1, 0.15, 0.2, 0.3, 0.5, 1.0):
        assert got[d] == pytest.approx(33 / 34)
