"""Edge-sign prediction seeded by structural balance.

Edges and features form a bipartite graph; edge and feature polarities are
smoothed over its Laplacian while labelled edges are pulled towards their
signs and balance-motivated features towards their seed polarity. The
minimiser solves one sparse symmetric positive definite system, and a new
edge is classified by ``sign(c @ x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import UsageError
from .netcore import SignedDiGraph, degree_features, triad_census_for_edge
from .numerics import SparseSymMatrix, as_source, cg_solve

__all__ = [
    "N_FEATURES",
    "PolaritySeed",
    "LabeledEdgeSet",
    "EspModel",
    "LogisticBaseline",
    "edge_feature_vector",
    "build_feature_matrix",
    "assemble_system",
    "esp_objective",
    "esp_train",
    "esp_predict",
    "train_logistic",
    "make_balanced_edge_sample",
    "evaluate_esp",
    "planted_balance_graph",
]

N_FEATURES = 21

# a-side and b-side codes whose edge is positive (see triad_census_for_edge)
_POS_SIDE = (0, 2)
_NEG_SIDE = (1, 3)


@dataclass(frozen=True)
class PolaritySeed:
    """Per-feature seed polarity: +1, -1 or 0 (unlabelled)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isin(v, (-1.0, 0.0, 1.0))):
            raise UsageError("seed values must be +1, -1 or 0")
        object.__setattr__(self, "values", v)

    @classmethod
    def structural_balance(cls):
        """The default 21-feature seed.

        Triads whose two neighbouring edges are both positive are seeded +1
        (four types), triads with exactly one positive neighbouring edge -1
        (eight types). Both-negative triads and degree features stay
        unlabelled.
        """
        v = np.zeros(N_FEATURES)
        for a in range(4):
            for b in range(4):
                pos = (a in _POS_SIDE) + (b in _POS_SIDE)
                if pos == 2:
                    v[4 * a + b] = 1.0
                elif pos == 1:
                    v[4 * a + b] = -1.0
        return cls(v)

    @property
    def labeled(self):
        return self.values != 0

    @property
    def positive(self):
        return np.flatnonzero(self.values > 0)

    @property
    def negative(self):
        return np.flatnonzero(self.values < 0)


@dataclass
class LabeledEdgeSet:
    """Edges with features; the first ``len(labels)`` rows carry labels."""

    edges: np.ndarray
    X: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.X = np.asarray(self.X, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if self.X.shape[0] != len(self.edges):
            raise UsageError("feature rows do not match edge count")
        if len(self.labels) > len(self.edges):
            raise UsageError("more labels than edges")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise UsageError("labels must be +1 or -1")

    @property
    def n(self):
        return len(self.edges)

    @property
    def n_labeled(self):
        return len(self.labels)

    @classmethod
    def from_mask(cls, edges, X, signs, labeled_mask):
        """Reorder so labelled edges come first (stable within each part)."""
        labeled_mask = np.asarray(labeled_mask, dtype=bool)
        order = np.concatenate([np.flatnonzero(labeled_mask), np.flatnonzero(~labeled_mask)])
        edges = np.asarray(edges)[order]
        X = np.asarray(X)[order]
        labels = np.asarray(signs)[order][: labeled_mask.sum()]
        return cls(edges, X, labels)


@dataclass(frozen=True)
class EspModel:
    """Trained classifier ``c`` plus the per-feature scale fixed at training."""

    c: np.ndarray
    d_est: np.ndarray = field(repr=False)
    beta1: float = 0.1
    beta2: float = 0.5
    transform: str = "colnorm"
    scale: np.ndarray | None = None


TRANSFORMS = ("colnorm", "log1p", "none")
# colnorm target column total; keeps feature degrees well below beta2
COLNORM_TOTAL = 0.01


def _fit_scale(X, transform):
    if transform == "colnorm":
        colsum = X.sum(axis=0)
        return np.where(colsum > 0, COLNORM_TOTAL / np.where(colsum > 0, colsum, 1.0), 1.0)
    if transform in ("none", "log1p", None):
        return np.ones(X.shape[1])
    raise UsageError(f"unknown feature transform {transform!r}; expected one of {TRANSFORMS}")


def _apply(X, transform, scale):
    if transform == "log1p":
        X = np.log1p(X)
    return X * scale if scale is not None else X


def edge_feature_vector(g: SignedDiGraph, u, v):
    """Triad census followed by the five degree features."""
    return np.concatenate([triad_census_for_edge(g, u, v), degree_features(g, u, v)])


def build_feature_matrix(g: SignedDiGraph, edges):
    """Stack :func:`edge_feature_vector` rows for ``edges``."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    X = np.zeros((len(edges), N_FEATURES))
    for i, (u, v) in enumerate(edges):
        X[i] = edge_feature_vector(g, u, v)
    return X


def _seed_vector(w, n_features):
    if isinstance(w, PolaritySeed):
        w = w.values
    w = np.asarray(w, dtype=float)
    if w.shape != (n_features,):
        raise UsageError(f"seed vector has shape {w.shape}, expected ({n_features},)")
    return w


def assemble_system(X, d, w, beta1, beta2):
    """Linear system whose solution minimises the ESP objective.

    Unknowns are ordered ``[d_est (n edges, labelled first), c (features)]``.
    The matrix is ``L + diag(beta1 on labelled edges, beta2 on seeded
    features)`` with ``L = D - A`` the Laplacian of the edge/feature
    bipartite graph ``A = [[0, X], [X^T, 0]]``; the right-hand side carries
    ``beta1 * d`` and ``beta2 * w``. This is the block system with labelled
    features moved to the front, up to a symmetric permutation of features.

    Parameters
    ----------
    X : (n, f) array of non-negative feature weights
    d : (n_l,) labels of the first ``n_l`` edges
    w : PolaritySeed or (f,) array, zero for unlabelled features
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise UsageError("X must be two-dimensional")
    if np.any(X < 0) or not np.all(np.isfinite(X)):
        raise UsageError("feature weights must be finite and non-negative")
    if beta1 < 0 or beta2 < 0:
        raise UsageError("beta1 and beta2 must be non-negative")
    n, f = X.shape
    d = np.asarray(d, dtype=float).ravel()
    n_l = len(d)
    if n_l > n:
        raise UsageError("more labels than edges")
    w = _seed_vector(w, f)

    Xs = sparse.csr_matrix(X)
    A = sparse.bmat([[None, Xs], [Xs.T, None]], format="csr")
    deg = np.asarray(A.sum(axis=1)).ravel()
    shift = np.zeros(n + f)
    shift[:n_l] = beta1
    shift[n:] = beta2 * (w != 0)
    M = sparse.diags(deg + shift) - A
    rhs = np.zeros(n + f)
    rhs[:n_l] = beta1 * d
    rhs[n:] = beta2 * w
    return SparseSymMatrix(M), rhs


def esp_objective(c_aug, X, d, w, beta1, beta2):
    """``c^T L c + beta1 |d_est[:n_l] - d|^2 + beta2 |c_seeded - w|^2``."""
    X = np.asarray(X, dtype=float)
    n, f = X.shape
    d = np.asarray(d, dtype=float).ravel()
    w = _seed_vector(w, f)
    d_est, c = c_aug[:n], c_aug[n:]
    # c^T L c = sum_ij X_ij (d_est_i - c_j)^2
    smooth = float(np.sum(X * (d_est[:, None] - c[None, :]) ** 2))
    lab = float(np.sum((d_est[: len(d)] - d) ** 2))
    seeded = w != 0
    feat = float(np.sum((c[seeded] - w[seeded]) ** 2))
    return smooth + beta1 * lab + beta2 * feat


def esp_train(data: LabeledEdgeSet, seed=None, beta1=0.1, beta2=0.5, tol=1e-8,
              max_iter=None, transform="colnorm") -> EspModel:
    """Fit ESP on a labelled edge set.

    ``seed`` defaults to :meth:`PolaritySeed.structural_balance`. With no
    labelled edges the seeded features alone anchor the solution.

    ``transform`` sets the bipartite edge weights: ``"colnorm"`` rescales
    every feature column of the training matrix to a total of 0.01, which
    keeps the Laplacian commensurate with the beta penalties at any sample
    size; ``"none"`` uses raw counts; ``"log1p"`` uses ``log(1 + x)``. The
    same scaling is stored on the model and applied at prediction.
    """
    if seed is None:
        seed = PolaritySeed.structural_balance()
    X = np.asarray(data.X, dtype=float)
    if transform == "log1p":
        X = np.log1p(X)
    scale = _fit_scale(X, transform)
    X = X * scale
    M, rhs = assemble_system(X, data.labels, seed, beta1, beta2)
    if max_iter is None:
        max_iter = 10 * M.n
    c_aug = cg_solve(M, rhs, tol=tol, max_iter=max_iter)
    n = data.n
    return EspModel(c=c_aug[n:].copy(), d_est=c_aug[:n].copy(), beta1=beta1, beta2=beta2,
                    transform=transform or "none", scale=scale)


def esp_predict(model: EspModel, x):
    """``sign(c @ x)`` with ties going to +1; accepts one row or a matrix."""
    x = _apply(np.asarray(x, dtype=float), model.transform, model.scale)
    score = x @ model.c
    return np.where(score >= 0, 1, -1) if np.ndim(score) else (1 if score >= 0 else -1)


# ---------------------------------------------------------------------------
# logistic comparator
# ---------------------------------------------------------------------------

@dataclass
class LogisticBaseline:
    coef: np.ndarray
    intercept: float

    def predict(self, X):
        score = np.asarray(X, dtype=float) @ self.coef + self.intercept
        return np.where(score >= 0, 1, -1)


def train_logistic(X, y, C=1.0):
    """L2-regularised logistic regression on raw features.

    With fewer than two classes present it degenerates to a constant
    predictor (majority label, +1 when there are no labels).
    """
    from sklearn.linear_model import LogisticRegression

    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(y) == 0 or len(np.unique(y)) < 2:
        const = 1.0 if len(y) == 0 or y[0] > 0 else -1.0
        return LogisticBaseline(np.zeros(X.shape[1]), const)
    clf = LogisticRegression(C=C, max_iter=5000)
    clf.fit(X, y)
    return LogisticBaseline(clf.coef_.ravel().copy(), float(clf.intercept_[0]))


# ---------------------------------------------------------------------------
# evaluation protocol
# ---------------------------------------------------------------------------

def make_balanced_edge_sample(g: SignedDiGraph, n_pos, n_neg, rng) -> LabeledEdgeSet:
    """Uniform sample of ``n_pos`` positive and ``n_neg`` negative edges.

    All returned edges are labelled; features are computed with each edge
    masked from its own row.
    """
    rng = as_source(rng)
    E = g.edge_array()
    pos = E[E[:, 2] > 0] if len(E) else E
    neg = E[E[:, 2] < 0] if len(E) else E
    if len(pos) < n_pos or len(neg) < n_neg:
        raise UsageError(f"graph has {len(pos)} positive / {len(neg)} negative edges, "
                         f"requested {n_pos} / {n_neg}")
    pick_p = pos[np.sort(rng.choice(len(pos), size=n_pos, replace=False))]
    pick_n = neg[np.sort(rng.choice(len(neg), size=n_neg, replace=False))]
    both = np.concatenate([pick_p, pick_n])
    both = both[rng.permutation(len(both))]
    X = build_feature_matrix(g, both[:, :2])
    return LabeledEdgeSet(both[:, :2], X, both[:, 2].astype(float))


@dataclass
class AccuracyRow:
    n_labeled: int
    mean: float
    std: float
    trials: int


def evaluate_esp(sample: LabeledEdgeSet, n_l_schedule=(0, 10, 20, 50, 100, 200), trials=10,
                 rng=None, beta1=0.1, beta2=0.5, tol=1e-8, transform="colnorm", baseline=False):
    """Mean test accuracy per labelled-edge count.

    Each trial splits the sample 50/50 into train and test, reveals the
    labels of ``n_l`` random training edges, trains on the whole training
    half (labelled edges first) and scores the test half. Trial ``t`` draws
    from child stream ``"trial-t"`` so every ``n_l`` sees the same splits.

    Returns a dict ``{"esp": [AccuracyRow, ...]}`` plus ``"logistic"`` when
    ``baseline`` is set.
    """
    rng = as_source(rng)
    n = sample.n
    n_train = n // 2
    if n < 2 or max(n_l_schedule) > n_train:
        raise UsageError(f"{n} edges cannot support n_l up to {max(n_l_schedule)}")
    if sample.n_labeled != n:
        raise UsageError("evaluation sample must be fully labelled")
    seed = PolaritySeed.structural_balance()
    acc = {"esp": np.zeros((len(n_l_schedule), trials))}
    if baseline:
        acc["logistic"] = np.zeros((len(n_l_schedule), trials))
    for t in range(trials):
        trng = rng.child(f"trial-{t}")
        perm = trng.permutation(n)
        train, test = perm[:n_train], perm[n_train:]
        order = trng.permutation(n_train)
        Xte, yte = sample.X[test], sample.labels[test]
        for j, n_l in enumerate(n_l_schedule):
            idx = train[order]
            data = LabeledEdgeSet(sample.edges[idx], sample.X[idx], sample.labels[idx[:n_l]])
            model = esp_train(data, seed, beta1, beta2, tol=tol, transform=transform)
            acc["esp"][j, t] = np.mean(esp_predict(model, Xte) == yte)
            if baseline:
                lr = train_logistic(sample.X[idx[:n_l]], sample.labels[idx[:n_l]])
                acc["logistic"][j, t] = np.mean(lr.predict(Xte) == yte)
    return {k: [AccuracyRow(int(nl), float(a[j].mean()), float(a[j].std()), trials)
                for j, nl in enumerate(n_l_schedule)] for k, a in acc.items()}


def planted_balance_graph(n, edge_prob, noise, rng, n_groups=2):
    """Random signed digraph over planted groups.

    Each ordered pair is an edge with probability ``edge_prob``; its sign is
    +1 inside a group and -1 across, flipped with probability ``noise``.
    Returns ``(graph, group_labels)``.
    """
    rng = as_source(rng)
    groups = np.arange(n) % n_groups
    groups = groups[rng.permutation(n)]
    present = rng.random((n, n)) < edge_prob
    np.fill_diagonal(present, False)
    flip = rng.random((n, n)) < noise
    u, v = np.nonzero(present)
    s = np.where(groups[u] == groups[v], 1, -1)
    s = np.where(flip[u, v], -s, s)
    return SignedDiGraph(n, zip(u.tolist(), v.tolist(), s.tolist())), groups
