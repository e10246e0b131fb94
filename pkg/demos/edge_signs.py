"""Edge-sign accuracy against the number of revealed labels.

Builds a 500-vertex planted two-group signed digraph with 10% sign noise,
samples 1000 positive and 1000 negative edges, and compares the seeded
label-propagation model with a logistic regression trained only on the
revealed edges.

    python demos/edge_signs.py
"""
from balance_lab.signs import evaluate_esp, make_balanced_edge_sample, planted_balance_graph


def main(seed=0):
    g, _ = planted_balance_graph(500, 0.1, 0.1, seed)
    sample = make_balanced_edge_sample(g, 1000, 1000, seed)
    res = evaluate_esp(sample, trials=10, rng=seed, baseline=True)
    print(f"{'n_l':>5} {'esp':>7} {'logistic':>9}")
    for e, lr in zip(res["esp"], res["logistic"]):
        print(f"{e.n_labeled:>5} {e.mean:>7.3f} {lr.mean:>9.3f}")


if __name__ == "__main__":
    main()
