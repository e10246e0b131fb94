"""Early warning of viral cascades from the first 5% of a trace.

Samples 100 viral and 100 dissipating contagions on a community network
and compares cross-validated accuracy with and without the structural
features (community dispersion and core membership).

    python demos/early_warning.py [seed]
"""
import sys

from balance_lab.contagion import (EW_NETWORK, FEATURE_NAMES, build_ew_corpus, corpus_features,
                                   cross_validate, default_curve_family)


def main(seed=0):
    corpus = build_ew_corpus(EW_NETWORK, default_curve_family(), 100, 100, seed)
    X = corpus_features(corpus, 10)
    acc4, imp = cross_validate(X, corpus.labels, seed)
    acc2, _ = cross_validate(X[:, :2], corpus.labels, seed)
    print(f"{corpus.attempts} traces sampled")
    print(f"all features {acc4:.3f}, posts and rate only {acc2:.3f}")
    for name, v in sorted(zip(FEATURE_NAMES, imp), key=lambda t: -t[1]):
        print(f"  {name:<22} {v:.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
