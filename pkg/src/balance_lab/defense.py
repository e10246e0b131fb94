"""Predictive defense against adaptive adversaries.

Documents are reduced to a handful of SVD coordinates. The attacker shifts
every attacked instance by one shared vector ``a`` to maximise the
defender's squared loss, paying ``alpha * |a|**3``; the defender picks a
linear filter ``w`` paying ``beta * |w|**3``. Alternating best responses
give a filter trained against the attacks it provokes, which also holds
up when the data drift in the same direction. A multinomial naive Bayes
filter is the static reference, and randomly alternating between filters
on different feature subsets is a cheap second line of defense.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.naive_bayes import MultinomialNB

from .errors import UsageError
from .numerics import as_source, svd_topk

__all__ = [
    "SCOPES",
    "ReducedSpace",
    "GameParams",
    "AttackResult",
    "DefenseModel",
    "RandomizedDefense",
    "NbModel",
    "DriftStream",
    "fit_reduction",
    "attack_objective",
    "attack_best_response",
    "defender_objective",
    "defender_step",
    "pd_train",
    "pd_predict",
    "train_nb_baseline",
    "nb_predict",
    "drift_eval",
    "pd_trainer",
    "nb_trainer",
    "make_drift_stream",
    "randomized_train",
    "randomized_predict",
    "attack_randomized",
    "apply_attack",
    "make_spam_like",
    "randomized_grid",
]

# which instances the attack vector moves
SCOPES = ("all", "positive")


# ---------------------------------------------------------------------------
# reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReducedSpace:
    """Orthonormal basis (``d x k``) of the top right singular vectors."""

    basis: np.ndarray
    singular_values: np.ndarray = field(repr=False)
    tag: str = ""

    @property
    def k(self):
        return self.basis.shape[1]

    @property
    def d(self):
        return self.basis.shape[0]

    def project(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise UsageError(f"expected {self.d} original features, got {X.shape[-1]}")
        return X @ self.basis

    def reconstruct(self, Z):
        return np.asarray(Z) @ self.basis.T


def fit_reduction(X_train, k=20, tag="") -> ReducedSpace:
    basis, s = svd_topk(X_train, k)
    return ReducedSpace(basis, s, tag)


# ---------------------------------------------------------------------------
# game
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameParams:
    """Regularisation weights and solver settings for the attacker-defender game.

    ``exponent`` is the power on both norms (3 as written, 2 for the usual
    squared penalty). ``scope="positive"`` lets the attack move only the
    positive (malicious) instances. ``clamp_radius`` bounds the attack when
    its objective is unbounded; ``None`` picks ten times the largest
    instance norm. ``method`` selects how :func:`pd_train` plays the game.
    """

    alpha: float = 0.001
    beta: float = 0.1
    exponent: int = 3
    scope: str = "all"
    outer_iter: int = 20
    inner_iter: int = 500
    tol: float = 1e-6
    restarts: int = 4
    clamp_radius: float = None
    method: str = "leader"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise UsageError("alpha and beta must be non-negative")
        if self.exponent not in (2, 3):
            raise UsageError("exponent must be 2 or 3")
        if self.scope not in SCOPES:
            raise UsageError(f"scope must be one of {SCOPES}")
        if self.method not in ("leader", "alternating"):
            raise UsageError("method must be 'leader' or 'alternating'")
        if self.outer_iter < 1 or self.inner_iter < 1:
            raise UsageError("iteration caps must be at least 1")


def _check_xy(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) != len(y):
        raise UsageError(f"{len(X)} instances but {len(y)} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise UsageError("labels must be +1 or -1")
    return X, y


def _scope_mask(y, scope):
    return np.ones(len(y), dtype=bool) if scope == "all" else y > 0


def apply_attack(X, y, a, scope="all"):
    """Shift the attacked instances by ``a``."""
    X = np.array(X, dtype=float)
    X[_scope_mask(np.asarray(y), scope)] += a
    return X


def _norm_pow(v, p):
    r = float(np.linalg.norm(v))
    return r ** p, (p * r ** (p - 2) * v if r > 0 else np.zeros_like(v))


def attack_objective(a, W, X, y, alpha, exponent=3, scope="all"):
    """Attacker payoff ``-alpha |a|^p + mean_j sum_i (y_i - w_j @ (x_i + a))^2``.

    ``W`` holds one classifier per row; a single ``w`` is the one-row case
    and the mean over rows is the loss of a uniform random choice among them.
    Returns ``(value, gradient)``.
    """
    W = np.atleast_2d(W)
    a = np.asarray(a, dtype=float)
    mask = _scope_mask(y, scope)
    R = y[:, None] - X @ W.T
    R[mask] -= (W @ a)[None, :]
    pen, dpen = _norm_pow(a, exponent)
    val = -alpha * pen + float(np.sum(R ** 2)) / len(W)
    grad = -alpha * dpen - 2.0 * (R[mask].sum(axis=0) @ W) / len(W)
    return val, grad


@dataclass
class AttackResult:
    a: np.ndarray
    objective: float
    grad_norm: float
    clamped: bool


def _attack(W, X, y, alpha, exponent, scope, restarts, rng, tol, max_iter, clamp_radius):
    X, y = _check_xy(X, y)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if not np.all(np.isfinite(W)):
        raise UsageError("classifier has non-finite entries")
    k = W.shape[1]
    n_att = int(_scope_mask(y, scope).sum())
    if clamp_radius is None:
        clamp_radius = 10.0 * float(np.max(np.linalg.norm(X, axis=1))) if len(X) else 1.0
    # the loss grows like n |W a|^2 / m; the penalty must win eventually
    curv = n_att * float(np.linalg.eigvalsh(W.T @ W)[-1]) / len(W)
    bounded = alpha > 0 and (exponent == 3 or alpha > curv)
    bounds = None if bounded else [(-clamp_radius, clamp_radius)] * k

    def neg(a):
        v, g = attack_objective(a, W, X, y, alpha, exponent, scope)
        return -v, -g

    rng = as_source(rng)
    starts = [np.zeros(k)]
    scale = clamp_radius / 10.0
    for r in range(restarts):
        starts.append(rng.child(f"start-{r}").normal(0.0, scale, size=k))
    # the maximiser lies in the span of the classifiers; seed both directions
    for w in W:
        nw = np.linalg.norm(w)
        if nw == 0:
            continue
        if bounded and exponent == 3:
            # stationary radius of n |w|^2 t^2 - alpha t^3
            t = 2.0 * n_att * nw ** 2 / (3.0 * alpha)
        else:
            t = clamp_radius
        starts.extend([t * w / nw, -t * w / nw])
    best = None
    for a0 in starts:
        res = optimize.minimize(neg, a0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-15})
        if best is None or res.fun < best.fun:
            best = res
    a = best.x
    val, grad = attack_objective(a, W, X, y, alpha, exponent, scope)
    clamped = (not bounded) and bool(np.any(np.abs(a) >= clamp_radius * (1 - 1e-9)))
    return AttackResult(a, val, float(np.linalg.norm(grad)), clamped or not bounded)


def attack_best_response(w, X, y, alpha, exponent=3, scope="all", restarts=4, rng=0,
                         tol=1e-6, max_iter=500, clamp_radius=None) -> AttackResult:
    """Best shared shift ``a`` against filter ``w`` (multi-start quasi-Newton ascent).

    When the payoff is unbounded (``alpha = 0``, or the squared penalty is too
    weak) the search is confined to a box of half-width ``clamp_radius`` and
    the result is flagged ``clamped``.
    """
    return _attack(np.atleast_2d(w), X, y, alpha, exponent, scope, restarts, rng, tol, max_iter,
                   clamp_radius)


def defender_objective(w, X, y, a, beta, exponent=3, scope="all"):
    """``beta |w|^p + sum_i (y_i - w @ (x_i + a))^2`` with its gradient."""
    Xa = apply_attack(X, y, a, scope)
    r = y - Xa @ w
    pen, dpen = _norm_pow(w, exponent)
    return beta * pen + float(r @ r), beta * dpen - 2.0 * (Xa.T @ r)


def _ridge(Xa, y, beta):
    k = Xa.shape[1]
    G = Xa.T @ Xa + beta * np.eye(k)
    return np.linalg.lstsq(G, Xa.T @ y, rcond=None)[0]


def defender_step(X, y, a, beta, exponent=3, scope="all", tol=1e-10, max_iter=500):
    """Filter minimising the defender objective for a fixed attack ``a``.

    Starts from the ridge solution of the quadratic part and descends with
    L-BFGS; for ``beta = 0`` the ridge start is already the least-squares fit.
    """
    X, y = _check_xy(X, y)
    a = np.zeros(X.shape[1]) if a is None else np.asarray(a, dtype=float)
    w0 = _ridge(apply_attack(X, y, a, scope), y, beta)
    if beta == 0:
        return w0
    res = optimize.minimize(lambda w: defender_objective(w, X, y, a, beta, exponent, scope), w0,
                            jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15})
    f0 = defender_objective(w0, X, y, a, beta, exponent, scope)[0]
    return res.x if res.fun <= f0 else w0


@dataclass
class DefenseModel:
    w: np.ndarray
    a: np.ndarray
    space: ReducedSpace
    params: GameParams
    history: list = field(default_factory=list, repr=False)

    def scores(self, X):
        return self.space.project(X) @ self.w


def _worst_case(w, Z, y, p, restarts, rng):
    """``max_a`` of the full payoff at ``w`` and its gradient in ``w``.

    By the envelope theorem the gradient is the defender gradient at the
    maximising attack.
    """
    att = attack_best_response(w, Z, y, p.alpha, p.exponent, p.scope, restarts, rng, p.tol,
                               p.inner_iter, p.clamp_radius)
    f, g = defender_objective(w, Z, y, att.a, p.beta, p.exponent, p.scope)
    return f - p.alpha * float(np.linalg.norm(att.a)) ** p.exponent, g, att


def _alternate(Z, y, p, rng, w):
    best = None
    history = []
    for t in range(p.outer_iter + 1):
        worst, _, att = _worst_case(w, Z, y, p, p.restarts, rng.child(f"round-{t}"))
        history.append((t, worst))
        if best is None or worst < best[0]:
            best = (worst, w, att.a)
        if t == p.outer_iter:
            break
        w_new = defender_step(Z, y, att.a, p.beta, p.exponent, p.scope, max_iter=p.inner_iter)
        done = np.linalg.norm(w_new - w) <= p.tol * max(1.0, np.linalg.norm(w))
        w = w_new
        if done:
            worst, _, att = _worst_case(w, Z, y, p, p.restarts, rng.child(f"round-{t + 1}"))
            history.append((t + 1, worst))
            if worst < best[0]:
                best = (worst, w, att.a)
            break
    return best, history


def _lead(Z, y, p, rng, w0):
    # minimise the worst case directly, in coordinates scaled to unit RMS
    D = np.sqrt(np.mean(Z ** 2, axis=0))
    D[D == 0] = 1.0
    sub = rng.child("leader")

    def fun(v):
        f, g, _ = _worst_case(v / D, Z, y, p, 0, sub)
        return f, g / D

    best = None
    history = []
    # shrunken starts reach the basins where the attack is no longer dominant
    for i, scale in enumerate(LEADER_STARTS):
        res = optimize.minimize(fun, scale * w0 * D, jac=True, method="L-BFGS-B",
                                options={"maxiter": p.inner_iter, "gtol": 1e-9, "ftol": 1e-14})
        w = res.x / D
        worst, _, att = _worst_case(w, Z, y, p, p.restarts, rng.child(f"start-{i}"))
        history.append((i, worst))
        if best is None or worst < best[0]:
            best = (worst, w, att.a)
    return best, history


LEADER_STARTS = (1.0, 0.5, 0.25, 0.125)


def pd_train(X, y, params: GameParams = GameParams(), space: ReducedSpace = None, k=20, rng=0):
    """Train the filter against the attacks it provokes.

    ``X`` is in original coordinates; the reduction is fitted on it unless
    ``space`` is given. Both methods start from the ridge solution and
    return the filter with the smallest worst-case objective
    ``beta |w|^p + max_a [-alpha |a|^p + loss]`` they visited.

    ``method="leader"`` minimises that worst case directly (the defender
    anticipates the best response) from a few shrunken copies of the
    ridge start. ``method="alternating"`` lets attacker and defender answer
    each other in turn; the best response to a filter lies along the
    filter itself, so the alternation can cycle without settling.
    ``history`` lists ``(round or start, worst_case_objective)``.
    """
    X, y = _check_xy(X, y)
    if len(np.unique(y)) < 2:
        raise UsageError("training data needs both classes")
    if space is None:
        space = fit_reduction(X, k, tag="pd-train")
    Z = space.project(X)
    rng = as_source(rng)
    w0 = defender_step(Z, y, None, params.beta, params.exponent, params.scope, max_iter=params.inner_iter)
    if params.method == "leader":
        best, history = _lead(Z, y, params, rng, w0)
    else:
        best, history = _alternate(Z, y, params, rng, w0)
    return DefenseModel(best[1], best[2], space, params, history)


def pd_predict(model: DefenseModel, X):
    """``sign(w @ x_reduced)`` with zero ties mapped to -1."""
    s = model.scores(np.atleast_2d(X))
    return np.where(s > 0, 1, -1)


# ---------------------------------------------------------------------------
# naive Bayes reference
# ---------------------------------------------------------------------------

@dataclass
class NbModel:
    classifier: MultinomialNB

    @property
    def log_prior(self):
        return dict(zip(self.classifier.classes_.tolist(), self.classifier.class_log_prior_))


def train_nb_baseline(X, y):
    """Multinomial naive Bayes with add-one smoothing on raw counts."""
    X, y = _check_xy(X, y)
    if np.any(X < 0):
        raise UsageError("naive Bayes needs non-negative counts")
    clf = MultinomialNB(alpha=1.0)
    clf.fit(X, y.astype(int))
    return NbModel(clf)


def nb_predict(model: NbModel, X):
    return model.classifier.predict(np.atleast_2d(np.asarray(X, dtype=float))).astype(int)


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------

@dataclass
class DriftStream:
    """Bin ``b`` holds ``(X_b, y_b)``; bin 0 is the training bin."""

    bins: list
    mix: np.ndarray
    vocabulary: int

    def __len__(self):
        return len(self.bins)


def make_drift_stream(n_bins=16, drift=0.6, rng=0, per_class=500, vocabulary=400,
                      doc_length=1000, n_signal=40, contrast=4.0):
    """Bag-of-words stream whose positive class drifts toward the negative one.

    Negative documents draw words from a fixed distribution ``q_neg``. In
    bin ``b`` the positive distribution is ``(1 - m_b) q_pos + m_b q_neg``
    with ``m_b = drift * b / n_bins``, so every linear statistic of the
    positive class moves linearly toward the negative one; ``drift=1``
    makes the classes identical in the last bin. There are ``n_bins + 1``
    bins, each with ``per_class`` documents per class.
    """
    if n_bins < 1:
        raise UsageError("need at least one bin after the training bin")
    if not 0.0 <= drift <= 1.0:
        raise UsageError("drift must lie in [0, 1]")
    rng = as_source(rng)
    # Zipf word frequencies, so document norms barely depend on the seed
    base = 1.0 / (np.arange(vocabulary) + 10.0)
    q_neg = base / base.sum()
    boost = np.ones(vocabulary)
    idx = rng.child("signal").permutation(vocabulary)
    boost[idx[:n_signal]] = contrast
    boost[idx[n_signal:2 * n_signal]] = 1.0 / contrast
    q_pos = q_neg * boost
    q_pos /= q_pos.sum()
    mix = drift * np.arange(n_bins + 1) / n_bins
    bins = []
    for b, m in enumerate(mix):
        sub = rng.child(f"bin-{b}")
        q = (1.0 - m) * q_pos + m * q_neg
        lengths = np.maximum(1, sub.poisson(doc_length, size=2 * per_class))
        pos = np.array([sub.multinomial(n, q) for n in lengths[:per_class]])
        neg = np.array([sub.multinomial(n, q_neg) for n in lengths[per_class:]])
        X = np.vstack([pos, neg]).astype(float)
        y = np.concatenate([np.ones(per_class), -np.ones(per_class)]).astype(int)
        order = sub.permutation(len(y))
        bins.append((X[order], y[order]))
    return DriftStream(bins, mix, vocabulary)


def drift_eval(stream, trainers):
    """Train each method on bin 0 and score it on every bin.

    ``trainers`` maps a method name to ``fit(X, y) -> predict`` where
    ``predict(X)`` returns labels. Returns rows ``(bin, method, accuracy)``
    and the per-method drop from bin 1 to the last bin.
    """
    bins = stream.bins if isinstance(stream, DriftStream) else list(stream)
    if len(bins) < 2:
        raise UsageError("drift evaluation needs at least two bins")
    for b, (X, y) in enumerate(bins):
        if len(y) == 0:
            raise UsageError(f"bin {b} is empty")
    X0, y0 = bins[0]
    rows = []
    drop = {}
    for name, fit in trainers.items():
        predict = fit(X0, y0)
        acc = [float(np.mean(predict(X) == y)) for X, y in bins]
        rows.extend((b, name, a) for b, a in enumerate(acc))
        drop[name] = acc[1] - acc[-1]
    return rows, drop


def pd_trainer(params: GameParams = GameParams(), k=20, rng=0):
    def fit(X, y):
        model = pd_train(X, y, params, k=k, rng=rng)
        return lambda Xt: pd_predict(model, Xt)
    return fit


def nb_trainer():
    def fit(X, y):
        model = train_nb_baseline(X, y)
        return lambda Xt: nb_predict(model, Xt)
    return fit


# ---------------------------------------------------------------------------
# randomized features
# ---------------------------------------------------------------------------

@dataclass
class RandomizedDefense:
    """Filters on random feature subsets; each prediction picks one at random."""

    subsets: list
    weights: list
    space: ReducedSpace = None

    @property
    def k(self):
        return max(int(s.max()) for s in self.subsets) + 1

    def embedded(self, k=None):
        """Each filter as a full-length vector, zero outside its subset."""
        k = self.k if k is None else k
        W = np.zeros((len(self.subsets), k))
        for j, (s, w) in enumerate(zip(self.subsets, self.weights)):
            W[j, s] = w
        return W


def randomized_train(Z, y, m=2, subset_size=10, rng=0, beta=0.1, exponent=3, subsets=None):
    """One nominally trained filter (``a = 0``) per random feature subset.

    ``Z`` is already reduced. The features are divided at random: a
    shuffled feature order is dealt out ``subset_size`` at a time, so the
    subsets are disjoint while ``m * subset_size <= k``. Beyond that a
    fresh shuffle is started and later subsets overlap earlier ones.
    """
    Z, y = _check_xy(Z, y)
    k = Z.shape[1]
    if subsets is None:
        if not 1 <= subset_size <= k:
            raise UsageError(f"subset size must lie in [1, {k}]")
        rng = as_source(rng)
        per_pass = k // subset_size
        subsets = []
        for j in range(m):
            if j % per_pass == 0:
                order = rng.child(f"pass-{j // per_pass}").permutation(k)
            start = (j % per_pass) * subset_size
            subsets.append(np.sort(order[start:start + subset_size]))
    subsets = [np.asarray(s, dtype=np.int64) for s in subsets]
    if any(s.size == 0 for s in subsets):
        raise UsageError("feature subsets must be non-empty")
    weights = [defender_step(Z[:, s], y, None, beta, exponent) for s in subsets]
    return RandomizedDefense(subsets, weights)


def randomized_predict(defense: RandomizedDefense, Z, rng):
    """Per-instance draw of a subset filter; ties map to -1.

    ``rng`` must be given explicitly so that predictions are reproducible.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    rng = as_source(rng)
    pick = rng.integers(0, len(defense.subsets), size=len(Z))
    s = np.empty(len(Z))
    for j, (sub, w) in enumerate(zip(defense.subsets, defense.weights)):
        rows = pick == j
        s[rows] = Z[rows][:, sub] @ w
    return np.where(s > 0, 1, -1)


def attack_randomized(defense: RandomizedDefense, Z, y, alpha, exponent=3, scope="all", restarts=4,
                      rng=0, tol=1e-6, max_iter=500, clamp_radius=None) -> AttackResult:
    """Best shared shift against the uniform mixture of the subset filters."""
    W = defense.embedded(np.asarray(Z).shape[1])
    return _attack(W, Z, y, alpha, exponent, scope, restarts, rng, tol, max_iter, clamp_radius)


def make_spam_like(per_class=1000, k=20, separation=1.1, decay=1.0, rng=0):
    """Two Gaussian classes already expressed in a ``k``-dimensional reduced space.

    Component ``j`` (1-based) has variance ``j**-decay`` and the class means
    differ by ``separation`` standard deviations along every component, so
    the evidence is spread over all features rather than concentrated in a
    few. Returns ``(Z, y)`` with the classes interleaved at random.
    """
    if per_class < 1 or k < 1:
        raise UsageError("need at least one instance per class and one feature")
    rng = as_source(rng)
    var = np.arange(1, k + 1, dtype=float) ** (-decay)
    delta = separation * np.sqrt(var) * rng.child("means").choice([-1.0, 1.0], size=k)
    y = np.concatenate([np.ones(per_class), -np.ones(per_class)]).astype(int)
    noise = rng.child("noise").normal(size=(2 * per_class, k)) * np.sqrt(var)
    Z = noise + np.outer(y, delta / 2.0)
    order = rng.child("order").permutation(len(y))
    return Z[order], y[order]


def randomized_grid(Z_train, y_train, Z_test, y_test, alpha=10.0, m=2, subset_size=10, beta=0.1,
                    exponent=3, scope="all", rng=0):
    """Nominal and attacked accuracy of the single filter and the randomized defense.

    Each attack is the best response computed on the training data against
    the defense it targets, then applied to the test data. Returns a dict
    with keys ``(defense, condition)`` for defense in ``single, randomized``
    and condition in ``nominal, attacked``.
    """
    rng = as_source(rng)
    w = defender_step(Z_train, y_train, None, beta, exponent)
    rd = randomized_train(Z_train, y_train, m, subset_size, rng.child("subsets"), beta, exponent)
    a1 = attack_best_response(w, Z_train, y_train, alpha, exponent, scope, rng=rng.child("attack-single")).a
    a2 = attack_randomized(rd, Z_train, y_train, alpha, exponent, scope, rng=rng.child("attack-randomized")).a

    def single(Z):
        return np.where(Z @ w > 0, 1, -1)

    def mixed(Z):
        return randomized_predict(rd, Z, rng.child("select"))

    Z_test = np.asarray(Z_test, dtype=float)
    return {
        ("single", "nominal"): float(np.mean(single(Z_test) == y_test)),
        ("randomized", "nominal"): float(np.mean(mixed(Z_test) == y_test)),
        ("single", "attacked"): float(np.mean(single(apply_attack(Z_test, y_test, a1, scope)) == y_test)),
        ("randomized", "attacked"): float(np.mean(mixed(apply_attack(Z_test, y_test, a2, scope)) == y_test)),
    }
