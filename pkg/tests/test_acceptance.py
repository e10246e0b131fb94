"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line (also echoed in the terminal summary) before asserting.
"""
import time
from itertools import combinations

import numpy as np
import pytest

import conftest
from balance_lab.contagion import EW_NETWORK, build_ew_corpus, corpus_features, cross_validate, \
    default_curve_family
from balance_lab.defense import GameParams, attack_best_response, attack_randomized, defender_step, \
    drift_eval, make_drift_stream, make_spam_like, nb_trainer, pd_trainer, randomized_grid, randomized_train
from balance_lab.fracture import DELTA_SWEEP, RelationMatrix, karate_relation_matrix, load_karate, \
    planted_relation_matrix, predict_split, simulate_fracture, split_agreement
from balance_lab.netcore import SignedDiGraph, UndirectedGraph, detect_communities, kshell_decompose, \
    modularity, triad_census_for_edge
from balance_lab.numerics import RandomSource, integrate_z_squared
from balance_lab.signs import LabeledEdgeSet, PolaritySeed, esp_objective, esp_train, evaluate_esp, \
    make_balanced_edge_sample, planted_balance_graph
from oracles import best_two_partition_q, dense_solve, grid_max_vectorised, modularity_double_sum, naive_peel, \
    riccati_closed_form, triad_census_brute
from test_cli import run_pipeline
from test_signs import dense_laplacian_system, random_instance


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def esp_curves():
    g, _ = planted_balance_graph(500, 0.1, 0.1, 0)
    sample = make_balanced_edge_sample(g, 1000, 1000, 0)
    t0 = time.perf_counter()
    res = evaluate_esp(sample, trials=10, rng=0, baseline=True)
    return res, time.perf_counter() - t0


# --- edge signs ------------------------------------------------------------

def test_criterion_01_solver_against_dense_and_gradient():
    rng = np.random.default_rng(2024)
    w = PolaritySeed.structural_balance().values
    worst_sol, worst_grad = 0.0, 0.0
    t0 = time.perf_counter()
    for _ in range(50):
        X, d = random_instance(rng)
        model = esp_train(LabeledEdgeSet(np.zeros((len(X), 2)), X, d), tol=1e-13, transform="none")
        c_aug = np.concatenate([model.d_est, model.c])
        M, rhs = dense_laplacian_system(X, d, w, 0.1, 0.5)
        ref = dense_solve(M, rhs)
        worst_sol = max(worst_sol, np.linalg.norm(c_aug - ref) / np.linalg.norm(ref))
        h = 1e-6
        for i in range(len(c_aug)):
            e = np.zeros_like(c_aug)
            e[i] = h
            fd = (esp_objective(c_aug + e, X, d, w, 0.1, 0.5) - esp_objective(c_aug - e, X, d, w, 0.1, 0.5)) / (2 * h)
            worst_grad = max(worst_grad, abs(fd))
    dt = time.perf_counter() - t0
    ok = worst_sol <= 1e-8 and worst_grad <= 1e-4 and dt < 10
    report(1, ok, f"relative solve error {worst_sol:.2e}, max |FD gradient| {worst_grad:.2e}, {dt:.1f}s")


def test_criterion_02_accuracy_without_labels_and_monotone(esp_curves):
    res, dt = esp_curves
    acc = [r.mean for r in res["esp"]]
    drops = [a - b for a, b in zip(acc, acc[1:])]
    ok = acc[0] >= 0.80 and max(drops) <= 0.02 and dt < 120
    report(2, ok, f"accuracy by n_l {[round(a, 3) for a in acc]}, largest drop {max(drops):+.3f}, {dt:.0f}s")


def test_criterion_03_esp_beats_logistic_at_ten_labels(esp_curves):
    res, _ = esp_curves
    esp = {r.n_labeled: r.mean for r in res["esp"]}[10]
    lr = {r.n_labeled: r.mean for r in res["logistic"]}[10]
    report(3, esp - lr >= 0.03, f"ESP {esp:.3f} vs logistic {lr:.3f} at n_l=10 ({100 * (esp - lr):+.1f} points)")


# --- fracture --------------------------------------------------------------

def test_criterion_04_integrator_against_closed_form():
    rng = np.random.default_rng(7)
    worst_err, worst_t = 0.0, 0.0
    t0 = time.perf_counter()
    for _ in range(20):
        M = rng.normal(size=(8, 8))
        Z0 = (M + M.T) / 2
        lam = float(np.linalg.eigvalsh(Z0).max())
        res = integrate_z_squared(Z0)
        for t, Z in zip(res.times, res.states):
            if t > 0.9 / lam:
                break
            exact = riccati_closed_form(Z0, t)
            worst_err = max(worst_err, np.abs(Z - exact).max() / np.abs(exact).max())
        worst_t = max(worst_t, abs(res.t_sing * lam - 1.0))
    dt = time.perf_counter() - t0
    ok = worst_err <= 1e-6 and worst_t <= 0.01 and dt < 30
    report(4, ok, f"max relative error to 0.9 t_sing {worst_err:.2e}, t_sing off by {100 * worst_t:.3f}%, "
                  f"{dt:.1f}s")


def test_criterion_05_generic_matrices_end_balanced():
    rng = np.random.default_rng(11)
    balanced = 0
    for _ in range(100):
        M = rng.normal(size=(10, 10))
        Z0 = np.triu(M, 1) + np.triu(M, 1).T
        balanced += simulate_fracture(Z0).balanced
    report(5, balanced >= 99, f"{balanced}/100 generic n=10 matrices end balanced")


def test_criterion_06_two_known_rows_recover_groups():
    scores = []
    for seed in range(10):
        rng = RandomSource(seed)
        Z, groups = planted_relation_matrix(17, rng.child("matrix"))
        rows = rng.child("known").choice(17, size=2, replace=False)
        known = np.zeros_like(Z, dtype=bool)
        known[rows, :] = True
        known[:, rows] = True
        np.fill_diagonal(known, True)
        pred = predict_split(RelationMatrix(Z, known))
        scores.append(int(round(split_agreement(pred.groups, groups) * 17)))
    report(6, min(scores) >= 16, f"correct entities per seed {scores}")


def test_criterion_07_karate_split():
    g, faction = load_karate()
    got = {d: split_agreement(simulate_fracture(karate_relation_matrix(d, g)).groups, faction) for d in DELTA_SWEEP}
    best = max(got, key=got.get)
    report(7, got[best] >= 0.90, f"best agreement {got[best]:.3f} at delta={best}")


# --- graph kernels ---------------------------------------------------------

def test_criterion_08_graph_kernels_against_oracles():
    rng = np.random.default_rng(8)
    shells_ok = census_ok = 0
    mod_err, det_ratio = 0.0, np.inf
    for _ in range(50):
        n = int(rng.integers(2, 51))
        edges = [(u, v) for u, v in combinations(range(n), 2) if rng.random() < rng.uniform(0.02, 0.3)]
        shells_ok += np.array_equal(kshell_decompose(UndirectedGraph(n, edges)).shells, naive_peel(n, edges))
    for _ in range(50):
        n = 8
        signed = [(u, v, 1 if rng.random() < 0.6 else -1) for u in range(n) for v in range(n)
                  if u != v and rng.random() < 0.35]
        g = SignedDiGraph(n, signed)
        census_ok += all(np.array_equal(triad_census_for_edge(g, u, v), triad_census_brute(signed, n, u, v))
                         for u in range(n) for v in range(n) if u != v)
    for _ in range(50):
        n = int(rng.integers(4, 13))
        g = UndirectedGraph(n, [(u, v) for u, v in combinations(range(n), 2) if rng.random() < 0.4])
        if g.m == 0:
            continue
        labels = rng.integers(0, 3, size=n)
        mod_err = max(mod_err, abs(modularity(g, labels) - modularity_double_sum(g.adj.toarray(), labels)))
        best = best_two_partition_q(g.adj.toarray())
        if best > 1e-12:
            det_ratio = min(det_ratio, modularity(g, detect_communities(g)) / best)
    ok = shells_ok == 50 and census_ok == 50 and mod_err <= 1e-12 and det_ratio >= 0.95
    report(8, ok, f"k-shell {shells_ok}/50, census {census_ok}/50, modularity error {mod_err:.1e}, "
                  f"worst detection/best-2-partition {det_ratio:.3f}")


# --- contagion -------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_early_warning_features():
    acc4, acc2, top2 = [], [], 0
    for seed in range(10):
        corpus = build_ew_corpus(EW_NETWORK, default_curve_family(), 100, 100, seed)
        X = corpus_features(corpus, 10)
        a4, imp = cross_validate(X, corpus.labels, seed)
        a2, _ = cross_validate(X[:, :2], corpus.labels, seed)
        acc4.append(a4)
        acc2.append(a2)
        top2 += 2 in np.argsort(imp)[-2:]
    m4, m2 = float(np.mean(acc4)), float(np.mean(acc2))
    ok = m4 - m2 >= 0.03 and m4 > 0.5 and m2 > 0.5 and top2 == 10
    report(9, ok, f"four features {m4:.3f} vs dynamics only {m2:.3f} ({100 * (m4 - m2):+.1f} points), "
                  f"dispersion in top two in {top2}/10 seeds")


# --- defense ---------------------------------------------------------------

def test_criterion_10_predictive_defense_under_drift():
    t0 = time.perf_counter()
    drops = {"pd": [], "nb": []}
    last = {"pd": [], "nb": []}
    for seed in range(10):
        stream = make_drift_stream(16, 0.6, seed)
        rows, drop = drift_eval(stream, {"pd": pd_trainer(GameParams(scope="positive"), 20, seed),
                                         "nb": nb_trainer()})
        for m in drops:
            drops[m].append(drop[m])
            last[m].append([a for b, name, a in rows if name == m and b == 16][0])
    dt = time.perf_counter() - t0
    d_pd, d_nb = np.mean(drops["pd"]), np.mean(drops["nb"])
    gap = np.mean(last["pd"]) - np.mean(last["nb"])
    ok = d_pd <= 0.5 * d_nb and gap >= 0.10 and dt < 120
    report(10, ok, f"loss bin 1 to 16: PD {d_pd:.3f}, NB {d_nb:.3f}; PD - NB at bin 16 {100 * gap:+.1f} points, "
                   f"{dt:.0f}s")


def toy(seed):
    rng = np.random.default_rng(seed)
    y = np.repeat([1, -1], 4)
    X = rng.normal(size=(8, 2)) * 0.5 + np.outer(y, [0.8, -0.5])
    return X, y


def test_criterion_11_attack_against_grid_search():
    worst = 0.0
    for seed in range(10):
        X, y = toy(seed)
        w = defender_step(X, y, None, 0.1)
        single = attack_best_response(w, X, y, 3.0, rng=seed).objective
        best, _ = grid_max_vectorised(w, X, y, 3.0)
        worst = max(worst, abs(single - best) / abs(best))
        rd = randomized_train(X, y, m=2, subset_size=1, rng=seed)
        rand = attack_randomized(rd, X, y, 3.0, rng=seed).objective
        best, _ = grid_max_vectorised(rd.embedded(2), X, y, 3.0)
        worst = max(worst, abs(rand - best) / abs(best))
    report(11, worst <= 0.02, f"worst relative gap to the grid optimum {100 * worst:.3f}% over 20 toys")


def test_criterion_12_randomized_features():
    cells = []
    for seed in range(10):
        Z, y = make_spam_like(rng=seed)
        cells.append(randomized_grid(Z[:1000], y[:1000], Z[1000:], y[1000:], rng=seed))
    mean = {k: float(np.mean([c[k] for c in cells])) for k in cells[0]}
    nominal_gap = mean[("single", "nominal")] - mean[("randomized", "nominal")]
    attacked_gap = mean[("randomized", "attacked")] - mean[("single", "attacked")]
    ok = 0 <= nominal_gap <= 0.05 and attacked_gap >= 0.10
    report(12, ok, f"nominal single - randomized {100 * nominal_gap:+.1f} points, "
                   f"attacked randomized - single {100 * attacked_gap:+.1f} points (10-seed means)")


# --- command line ----------------------------------------------------------

def test_criterion_13_cli_is_deterministic(tmp_path):
    first = run_pipeline(tmp_path)
    second = run_pipeline(tmp_path)
    differ = sorted({name for name, _ in first if first[(name, _)] != second[(name, _)]})
    names = sorted({name for name, _ in first})
    report(13, not differ, f"{len(names) - len(differ)}/{len(names)} subcommands byte-identical across runs")
