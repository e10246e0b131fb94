"""Group splits from the balance dynamics.

First the karate club across hostility levels, then a planted 17-entity
matrix where only two rows of relations are known.

    python demos/fracture.py
"""
import numpy as np

from balance_lab.fracture import (DELTA_SWEEP, RelationMatrix, karate_relation_matrix, load_karate,
                                  planted_relation_matrix, predict_split, simulate_fracture, split_agreement)
from balance_lab.numerics import RandomSource


def karate():
    g, faction = load_karate()
    print("delta  agreement  t_sing")
    for d in DELTA_SWEEP:
        pred = simulate_fracture(karate_relation_matrix(d, g))
        print(f"{d:<6} {split_agreement(pred.groups, faction):>9.3f}  {pred.t_sing:.4f}")


def sparse_knowledge(seed=0):
    rng = RandomSource(seed)
    Z, groups = planted_relation_matrix(17, rng.child("matrix"))
    known = np.zeros_like(Z, dtype=bool)
    known[[0, 1], :] = True
    known[:, [0, 1]] = True
    np.fill_diagonal(known, True)
    pred = predict_split(RelationMatrix(Z, known))
    print(f"two known rows: {round(17 * split_agreement(pred.groups, groups))}/17 placed correctly")


if __name__ == "__main__":
    karate()
    sparse_knowledge()
