"""Complex contagion on synthetic social networks and early warning.

A contagion needs reinforcement: a vertex adopts with probability ``p(k)``
where ``k`` counts its distinct adopting neighbours. Early-warning features
summarise how a trace has spread by time ``tau`` (volume, rate, how many
communities and how much of the innermost core it reached), and a bagged
tree ensemble separates traces that will go viral from those that fizzle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BudgetExhaustedError, UsageError
from .netcore import Partition, ShellIndex, UndirectedGraph, detect_communities, kshell_decompose, modularity
from .numerics import as_source

__all__ = [
    "ALARMING",
    "NOT_ALARMING",
    "FEATURE_NAMES",
    "InfluenceCurve",
    "ContagionTrace",
    "EwFeatureVector",
    "NetworkGenConfig",
    "GeneratedNetwork",
    "TreeEnsemble",
    "EwCorpus",
    "generate_network",
    "network_diagnostics",
    "simulate_contagion",
    "compute_ew_features",
    "lexicon_score",
    "train_ensemble",
    "ew_classify",
    "EW_NETWORK",
    "default_curve_family",
    "build_ew_corpus",
    "corpus_features",
    "cross_validate",
]

ALARMING = "alarming"
NOT_ALARMING = "not alarming"
FEATURE_NAMES = ("posts", "post_rate", "community_dispersion", "k_core_count")
LANGUAGE_NAMES = ("happiness", "arousal", "dominance", "sentiment")


# ---------------------------------------------------------------------------
# influence and traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InfluenceCurve:
    """Adoption probability by number of adopting neighbours.

    ``probs[k]`` is ``p(k)``; the last value extends to every larger ``k``.
    """

    probs: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in np.atleast_1d(self.probs))
        if not p:
            raise UsageError("influence curve needs at least p(0)")
        if any(not 0.0 <= x <= 1.0 for x in p):
            raise UsageError("influence probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", p)

    @classmethod
    def threshold(cls, k0, p=1.0):
        """``p`` once at least ``k0`` neighbours have adopted, else 0."""
        return cls([0.0] * k0 + [p])

    def __call__(self, k):
        k = np.minimum(np.asarray(k, dtype=np.int64), len(self.probs) - 1)
        return np.asarray(self.probs)[k]

    def table(self, k_max):
        """``p(0..k_max)`` as an array."""
        return self(np.arange(k_max + 1))

    def dominates(self, other):
        k = max(len(self.probs), len(other.probs))
        return bool(np.all(self.table(k) >= other.table(k)))


@dataclass(frozen=True)
class ContagionTrace:
    """Adoption events ``(t, node)`` in time order; seeds are the t = 0 events."""

    times: np.ndarray
    nodes: np.ndarray
    horizon: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.int64)
        v = np.asarray(self.nodes, dtype=np.int64)
        if t.shape != v.shape:
            raise UsageError("times and nodes differ in length")
        if t.size and np.any(np.diff(t) < 0):
            raise UsageError("event times must be non-decreasing")
        if len(np.unique(v)) != len(v):
            raise UsageError("a node adopts at most once")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "nodes", v)

    @property
    def seeds(self):
        return self.nodes[self.times == 0]

    @property
    def size(self):
        """Final adopter count T."""
        return len(self.nodes)

    def active_by(self, tau):
        return self.nodes[self.times <= tau]

    def posts_by(self, tau):
        return int(np.searchsorted(self.times, tau, side="right")) if tau >= 0 else 0


def simulate_contagion(g: UndirectedGraph, curve: InfluenceCurve, seeds, horizon, rng,
                       sequential=False) -> ContagionTrace:
    """Run the contagion for ``horizon`` steps.

    The default update is synchronous: every non-adopter sees the adopters
    of the previous step. One uniform draw per vertex is made every step,
    so two curves run from the same seed are coupled draw for draw.
    ``sequential=True`` instead visits vertices in a fresh random order
    each step and lets adoptions take effect immediately.
    """
    rng = as_source(rng)
    horizon = int(horizon)
    if horizon < 1:
        raise UsageError("horizon must be at least 1")
    seeds = np.unique(np.asarray(seeds, dtype=np.int64))
    if seeds.size and (seeds.min() < 0 or seeds.max() >= g.n):
        raise UsageError("seed outside vertex range")
    active = np.zeros(g.n, dtype=bool)
    active[seeds] = True
    times = [np.zeros(len(seeds), dtype=np.int64)]
    nodes = [seeds]
    p = curve.table(int(g.degrees.max()) if g.n else 0)
    A = g.adj
    k = np.asarray(A @ active.astype(float)).astype(np.int64)
    for t in range(1, horizon + 1):
        if not np.any(p[k[~active]] > 0):
            break
        u = rng.random(g.n)
        if sequential:
            new = []
            for v in rng.permutation(g.n):
                if not active[v] and u[v] < p[k[v]]:
                    active[v] = True
                    k[g.neighbors(v)] += 1
                    new.append(v)
            new = np.sort(np.asarray(new, dtype=np.int64))
        else:
            new = np.flatnonzero(~active & (u < p[k]))
            active[new] = True
            if new.size:
                hit = np.zeros(g.n)
                hit[new] = 1.0
                k += (A @ hit).astype(np.int64)
        if new.size:
            times.append(np.full(len(new), t, dtype=np.int64))
            nodes.append(new)
    return ContagionTrace(np.concatenate(times), np.concatenate(nodes), horizon)


# ---------------------------------------------------------------------------
# early-warning features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EwFeatureVector:
    posts: int
    post_rate: float
    community_dispersion: int
    k_core_count: int
    language: tuple = (0.0, 0.0, 0.0, 0.0)

    def as_array(self, features=FEATURE_NAMES, language=False):
        vals = [float(getattr(self, f)) for f in features]
        if language:
            vals.extend(float(x) for x in self.language)
        return np.array(vals)


def compute_ew_features(trace: ContagionTrace, tau, delta, g: UndirectedGraph = None,
                        partition: Partition = None, shells: ShellIndex = None,
                        language=None) -> EwFeatureVector:
    """Dynamics features of ``trace`` at time ``tau``.

    ``post_rate`` is the backward difference ``(posts(tau) - posts(tau - delta)) / delta``.
    """
    if tau < 0:
        raise UsageError("tau must be non-negative")
    if delta <= 0:
        raise UsageError("delta must be positive")
    if partition is None or shells is None:
        raise UsageError("community partition and shell index are required")
    posts = trace.posts_by(tau)
    before = trace.posts_by(tau - delta)
    active = trace.active_by(tau)
    dispersion = len(np.unique(partition.labels[active]))
    core = shells.shells[active] == shells.k_max
    lang = tuple(float(x) for x in language) if language is not None else (0.0,) * 4
    return EwFeatureVector(posts, (posts - before) / delta, dispersion, int(core.sum()), lang)


def lexicon_score(x, s, normalize="lexicon"):
    """Aggregate lexicon score of a bag of words.

    ``normalize="lexicon"`` gives ``s @ x / s.sum()``; ``"words"`` gives
    ``s @ x / x.sum()``, the per-word average. Out-of-lexicon words carry
    ``s = 0``.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if x.shape != s.shape:
        raise UsageError("counts and lexicon scores differ in length")
    num = float(s @ x)
    if normalize == "lexicon":
        den = float(s.sum())
    elif normalize == "words":
        den = float(x.sum())
    else:
        raise UsageError(f"unknown normalization {normalize!r}")
    if not np.any(x):
        return 0.0
    if den == 0:
        raise UsageError(f"zero denominator under {normalize!r} normalization")
    return num / den


# ---------------------------------------------------------------------------
# network generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkGenConfig:
    """Degree-corrected planted partition with closure and core passes.

    ``p_in``/``p_out`` are base edge probabilities between vertices of
    average weight; weights follow ``1 + Pareto(skew)`` rescaled to mean 1.
    ``skew=0`` gives uniform weights.
    """

    n: int = 2000
    sizes: tuple = None
    n_communities: int = 10
    p_in: float = 0.05
    p_out: float = 0.0006
    skew: float = 2.5
    closure_passes: int = 1
    closure_prob: float = 0.5
    core_boost: float = 0.1

    def __post_init__(self):
        sizes = self.sizes
        if sizes is None:
            q, r = divmod(self.n, self.n_communities)
            sizes = tuple([q + 1] * r + [q] * (self.n_communities - r))
        sizes = tuple(int(x) for x in sizes)
        if sum(sizes) != self.n or any(x <= 0 for x in sizes):
            raise UsageError("community sizes must be positive and sum to n")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "n_communities", len(sizes))
        for name in ("p_in", "p_out", "closure_prob", "core_boost"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1]")
        if self.skew < 0 or self.closure_passes < 0:
            raise UsageError("skew and closure_passes must be non-negative")

    def expected_degree(self):
        s = np.asarray(self.sizes, dtype=float)
        return float(np.sum(s * (self.p_in * (s - 1) + self.p_out * (self.n - s))) / self.n)


@dataclass
class GeneratedNetwork:
    graph: UndirectedGraph
    planted: Partition
    diagnostics: dict = field(default_factory=dict)


def _closure_pass(adj, prob, rng):
    # each vertex proposes one pair of its neighbours as a new edge
    n = adj.shape[0]
    deg = np.diff(adj.indptr)
    ok = np.flatnonzero(deg >= 2)
    u = rng.random((2, n))
    a = np.floor(u[0] * deg).astype(np.int64)
    b = np.floor(u[1] * (deg - 1)).astype(np.int64)
    b = b + (b >= a)
    keep = rng.random(n) < prob
    ok = ok[keep[ok]]
    v = adj.indices[adj.indptr[ok] + a[ok]]
    w = adj.indices[adj.indptr[ok] + b[ok]]
    return np.column_stack([v, w])


def generate_network(cfg: NetworkGenConfig, rng, diagnostics=True) -> GeneratedNetwork:
    """Sample a network with skewed degrees, clustering, communities and a dense core."""
    rng = as_source(rng)
    if cfg.expected_degree() >= cfg.n - 1:
        raise UsageError("configuration implies expected degree >= n")
    n = cfg.n
    labels = np.repeat(np.arange(cfg.n_communities), cfg.sizes)
    if cfg.skew > 0:
        theta = 1.0 + rng.pareto(cfg.skew, size=n)
    else:
        theta = np.ones(n)
    theta /= theta.mean()

    iu, ju = np.triu_indices(n, 1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, cfg.p_in, cfg.p_out) * theta[iu] * theta[ju]
    hit = rng.random(len(iu)) < np.minimum(prob, 1.0)
    edges = np.column_stack([iu[hit], ju[hit]])
    del iu, ju, same, prob, hit

    g = UndirectedGraph(n, edges)
    for _ in range(cfg.closure_passes):
        extra = _closure_pass(g.adj, cfg.closure_prob, rng)
        g = UndirectedGraph(n, np.concatenate([g.edges, extra]))
    if cfg.core_boost > 0:
        top = np.argsort(-g.degrees, kind="stable")[: max(2, n // 10)]
        top = np.sort(top)
        ci, cj = np.triu_indices(len(top), 1)
        hit = rng.random(len(ci)) < cfg.core_boost
        g = UndirectedGraph(n, np.concatenate([g.edges, np.column_stack([top[ci[hit]], top[cj[hit]]])]))

    planted = Partition(labels)
    out = GeneratedNetwork(g, planted)
    if diagnostics:
        out.diagnostics = network_diagnostics(g, planted, rng.child("rewire"))
    return out


def _clustering(adj):
    deg = np.diff(adj.indptr).astype(float)
    tri = np.asarray((adj @ adj).multiply(adj).sum(axis=1)).ravel() / 2.0
    pairs = deg * (deg - 1) / 2.0
    c = np.divide(tri, pairs, out=np.zeros_like(tri), where=pairs > 0)
    return float(c.mean())


def _rewire(g: UndirectedGraph, rng, swaps_per_edge=2):
    # degree-preserving double-edge swaps
    e = g.edges.copy()
    m = len(e)
    if m < 2:
        return g
    present = set(map(tuple, e.tolist()))
    n_try = swaps_per_edge * m
    picks = rng.integers(0, m, size=(n_try, 2))
    flips = rng.random(n_try) < 0.5
    for (i, j), flip in zip(picks, flips):
        if i == j:
            continue
        a, b = e[i]
        c, d = e[j]
        if flip:
            c, d = d, c
        if len({a, b, c, d}) < 4:
            continue
        x, y = (a, d) if a < d else (d, a)
        z, w = (c, b) if c < b else (b, c)
        if (x, y) in present or (z, w) in present:
            continue
        present.discard((a, b) if a < b else (b, a))
        present.discard((c, d) if c < d else (d, c))
        present.add((x, y))
        present.add((z, w))
        e[i] = (x, y)
        e[j] = (z, w)
    return UndirectedGraph(g.n, e)


def network_diagnostics(g: UndirectedGraph, planted: Partition, rng):
    """Degree skewness, clustering against a rewired baseline, planted Q and k_max."""
    rng = as_source(rng)
    base = _rewire(g, rng)
    return {
        "n": g.n,
        "m": g.m,
        "mean_degree": float(g.degrees.mean()),
        "degree_skewness": float(stats.skew(g.degrees)),
        "clustering": _clustering(g.adj),
        "clustering_rewired": _clustering(base.adj),
        "planted_modularity": modularity(g, planted),
        "k_max": kshell_decompose(g).k_max,
    }


# ---------------------------------------------------------------------------
# tree ensemble
# ---------------------------------------------------------------------------

def _gini(pos, tot):
    p = pos / tot
    return 2.0 * p * (1.0 - p)


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_proba(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return self.value[node]
            idx = np.flatnonzero(inner)
            f = self.feature[node[idx]]
            go_left = X[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])


def _best_split(X, y):
    n, f = X.shape
    pos_total = y.sum()
    parent = _gini(pos_total, n)
    best = (0.0, -1, 0.0)
    for j in range(f):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cum = np.cumsum(y[order])[:-1]
        nl = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        nr = n - nl
        child = (nl * _gini(cum, nl) + nr * _gini(pos_total - cum, nr)) / n
        gain = np.where(valid, parent - child, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0] + 1e-12:
            best = (float(gain[i]), j, 0.5 * (xs[i] + xs[i + 1]))
    return best


def _grow(X, y, max_depth, min_leaf, importance):
    feature, threshold, left, right, value = [], [], [], [], []

    def node(idx, depth):
        k = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        yi = y[idx]
        value.append(float(yi.mean()))
        if depth >= max_depth or len(idx) < 2 * min_leaf or yi.min() == yi.max():
            return k
        gain, j, thr = _best_split(X[idx], yi)
        if j < 0:
            return k
        mask = X[idx, j] <= thr
        if mask.sum() < min_leaf or (~mask).sum() < min_leaf:
            return k
        importance[j] += gain * len(idx)
        feature[k] = j
        threshold[k] = thr
        left[k] = node(idx[mask], depth + 1)
        right[k] = node(idx[~mask], depth + 1)
        return k

    node(np.arange(len(y)), 0)
    return _Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                 np.array(value))


@dataclass
class TreeEnsemble:
    """Bagged CART classifiers with majority vote."""

    trees: list
    bootstrap_seeds: list
    importances: np.ndarray
    oob_accuracy: float
    n_features: int
    feature_names: tuple = ()

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise UsageError(f"expected {self.n_features} features, got {X.shape[1]}")
        votes = np.mean([t.predict_proba(X) >= 0.5 for t in self.trees], axis=0)
        return (votes > 0.5).astype(np.int64)

    def accuracy(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def ranking(self):
        """Feature indices by decreasing importance."""
        return np.argsort(-self.importances, kind="stable")


def train_ensemble(X, y, n_trees=50, max_depth=4, rng=None, min_leaf=5, feature_names=()):
    """Bagged Gini trees; ``y`` is 1 for alarming and 0 otherwise."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise UsageError("features and labels differ in length")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise UsageError("training data needs both classes")
    rng = as_source(rng)
    n = len(y)
    trees, seeds = [], []
    importance = np.zeros(X.shape[1])
    oob_votes = np.zeros(n)
    oob_count = np.zeros(n)
    for b in range(n_trees):
        sub = rng.child(f"tree-{b}")
        seeds.append(sub.path)
        idx = sub.integers(0, n, size=n)
        imp = np.zeros(X.shape[1])
        tree = _grow(X[idx], y[idx], max_depth, min_leaf, imp)
        importance += imp / n
        trees.append(tree)
        out = np.setdiff1d(np.arange(n), idx)
        if out.size:
            oob_votes[out] += tree.predict_proba(X[out]) >= 0.5
            oob_count[out] += 1
    seen = oob_count > 0
    oob = float(np.mean((oob_votes[seen] / oob_count[seen] > 0.5) == y[seen])) if seen.any() else float("nan")
    importance /= n_trees
    total = importance.sum()
    if total > 0:
        importance = importance / total
    return TreeEnsemble(trees, seeds, importance, oob, X.shape[1], tuple(feature_names))


def ew_classify(model: TreeEnsemble, features, names=FEATURE_NAMES):
    """Alert decision for one trace.

    ``features`` is a sequence of EwFeatureVector (one per window, stacked in
    order) or an already flattened array.
    """
    if len(features) and isinstance(features[0], EwFeatureVector):
        x = np.concatenate([f.as_array(names) for f in features])
    else:
        x = np.asarray(features, dtype=float).ravel()
    if x.size != model.n_features:
        raise UsageError(f"expected {model.n_features} features, got {x.size}")
    return ALARMING if model.predict(x[None, :])[0] == 1 else NOT_ALARMING


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------

# sparse bridges keep a cascade inside its community unless it is seeded elsewhere
EW_NETWORK = NetworkGenConfig(p_out=5e-5, core_boost=0.0)


def default_curve_family():
    """Strictly complex curves that start slowly and accelerate.

    One adopting neighbour never converts; two rarely do, three ten times as
    often and four or more half the time.
    """
    return tuple(InfluenceCurve([0.0, 0.0, a, 10 * a, 0.5]) for a in (0.005, 0.01))


@dataclass
class EwCorpus:
    network: GeneratedNetwork
    partition: Partition
    shells: ShellIndex
    traces: list
    labels: np.ndarray
    horizon: int
    attempts: int


def build_ew_corpus(cfg: NetworkGenConfig, curves, n_viral, n_dissipating, rng, S=None, U=None,
                    horizon=200, n_seeds=6, max_seed_communities=None, budget=20000,
                    network=None) -> EwCorpus:
    """Rejection-sample viral (> S adopters) and dissipating (< U) traces.

    Each trace draws a curve from ``curves`` and a seed count (``n_seeds``
    is an int or an inclusive ``(lo, hi)`` range), then spreads the seeds
    over a uniformly chosen number of planted communities. Communities and
    shells used for features are detected on the generated graph.
    """
    rng = as_source(rng)
    if network is None:
        network = generate_network(cfg, rng.child("network"), diagnostics=False)
    g = network.graph
    S = int(0.2 * g.n) if S is None else int(S)
    U = int(0.02 * g.n) if U is None else int(U)
    if S <= U:
        raise UsageError("S must exceed U")
    curves = tuple(curves)
    if not curves:
        raise UsageError("curve family is empty")
    planted = network.planted
    members = [planted.members(c) for c in range(planted.n_communities)]
    lo, hi = (n_seeds, n_seeds) if np.isscalar(n_seeds) else n_seeds
    c_cap = planted.n_communities if max_seed_communities is None else max_seed_communities

    viral, dissipating = [], []
    attempts = 0
    while len(viral) < n_viral or len(dissipating) < n_dissipating:
        if attempts >= budget:
            raise BudgetExhaustedError(
                f"sampling budget of {budget} traces exhausted",
                achieved={"viral": len(viral), "dissipating": len(dissipating)})
        sub = rng.child(f"trace-{attempts}")
        attempts += 1
        curve = curves[int(sub.integers(0, len(curves)))]
        ns = int(sub.integers(lo, hi + 1))
        c = int(sub.integers(1, min(ns, c_cap, planted.n_communities) + 1))
        comms = sub.choice(planted.n_communities, size=c, replace=False)
        per = np.full(c, ns // c)
        per[: ns % c] += 1
        seeds = np.concatenate([sub.choice(members[cc], size=min(k, len(members[cc])), replace=False)
                                for cc, k in zip(comms, per)])
        tr = simulate_contagion(g, curve, seeds, horizon, sub)
        if tr.size > S and len(viral) < n_viral:
            viral.append(tr)
        elif tr.size < U and len(dissipating) < n_dissipating:
            dissipating.append(tr)
    detected = detect_communities(g)
    shells = kshell_decompose(g)
    traces = viral + dissipating
    labels = np.array([1] * len(viral) + [0] * len(dissipating), dtype=np.int64)
    return EwCorpus(network, detected, shells, traces, labels, horizon, attempts)


def corpus_features(corpus: EwCorpus, taus, delta=None, names=FEATURE_NAMES):
    """Feature matrix, one row per trace, windows at each ``tau`` stacked left to right."""
    taus = np.atleast_1d(taus)
    rows = []
    for tr in corpus.traces:
        parts = []
        for tau in taus:
            d = max(1, int(tau)) if delta is None else delta
            f = compute_ew_features(tr, tau, d, corpus.network.graph, corpus.partition, corpus.shells)
            parts.append(f.as_array(names))
        rows.append(np.concatenate(parts))
    return np.array(rows).reshape(len(corpus.traces), -1)


def cross_validate(X, y, rng, n_folds=10, **ensemble_params):
    """Stratified k-fold accuracy and fold-averaged importances."""
    rng = as_source(rng)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    fold = np.empty(len(y), dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = np.arange(len(idx)) % n_folds
    correct = 0
    imp = np.zeros(X.shape[1])
    for k in range(n_folds):
        test = fold == k
        model = train_ensemble(X[~test], y[~test], rng=rng.child(f"fold-{k}"), **ensemble_params)
        correct += int(np.sum(model.predict(X[test]) == y[test]))
        imp += model.importances
    return correct / len(y), imp / n_folds
