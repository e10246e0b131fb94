"""Predictive defense against drift and randomized features against attack.

    python demos/spam_defense.py
"""
import numpy as np

from balance_lab.defense import (GameParams, drift_eval, make_drift_stream, make_spam_like, nb_trainer,
                                 pd_trainer, randomized_grid)


def drift(seed=0):
    stream = make_drift_stream(16, 0.6, seed)
    rows, drop = drift_eval(stream, {"pd": pd_trainer(GameParams(scope="positive"), 20, seed),
                                     "nb": nb_trainer()})
    acc = {(b, m): a for b, m, a in rows}
    print("bin     pd     nb")
    for b in (0, 1, 4, 8, 12, 16):
        print(f"{b:>3} {acc[(b, 'pd')]:.3f}  {acc[(b, 'nb')]:.3f}")
    print(f"loss from bin 1 to 16: pd {drop['pd']:.3f}, nb {drop['nb']:.3f}")


def randomized(seeds=range(10)):
    cells = []
    for s in seeds:
        Z, y = make_spam_like(rng=s)
        cells.append(randomized_grid(Z[:1000], y[:1000], Z[1000:], y[1000:], rng=s))
    print("defense     nominal  attacked")
    for d in ("single", "randomized"):
        nom = np.mean([c[(d, "nominal")] for c in cells])
        att = np.mean([c[(d, "attacked")] for c in cells])
        print(f"{d:<11} {nom:>7.3f}  {att:>8.3f}")


if __name__ == "__main__":
    drift()
    randomized()
