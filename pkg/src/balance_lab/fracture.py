"""Fracture prediction by structural-balance dynamics.

A symmetric relation matrix is evolved under ``dZ/dt = Z^2`` until it
blows up; the sign pattern at the singularity splits the entities into
(at most) two mutually hostile, internally friendly groups. Partially
observed matrices are completed first with ESP.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import UsageError
from .netcore import SignedDiGraph, UndirectedGraph
from .numerics import as_source, integrate_z_squared
from .signs import LabeledEdgeSet, _apply, build_feature_matrix, esp_train

__all__ = [
    "RelationMatrix",
    "FracturePrediction",
    "simulate_fracture",
    "check_balance",
    "complete_relations",
    "predict_split",
    "split_agreement",
    "planted_relation_matrix",
    "load_karate",
    "karate_relation_matrix",
    "DELTA_SWEEP",
]

DELTA_SWEEP = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0)


@dataclass(frozen=True)
class RelationMatrix:
    """Symmetric relation strengths with a known/unknown mask.

    Unknown entries are stored as zero in ``Z``. The diagonal is always
    known and zero.
    """

    Z: np.ndarray
    known: np.ndarray

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float)
        known = np.array(self.known, dtype=bool)
        if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
            raise UsageError(f"relation matrix must be square, got {Z.shape}")
        if known.shape != Z.shape:
            raise UsageError("mask shape does not match matrix")
        if not np.array_equal(known, known.T):
            i, j = np.argwhere(known != known.T)[0]
            raise UsageError(f"unknown-entry mask is not symmetric at ({i},{j})")
        np.fill_diagonal(known, True)
        if np.any(np.diag(Z) != 0):
            raise UsageError("diagonal entries must be zero")
        Z[~known] = 0.0
        if not np.all(np.isfinite(Z)):
            raise UsageError("relation matrix has non-finite entries")
        asym = np.abs(Z - Z.T)
        if np.any(asym > 1e-12 * (1 + np.abs(Z))):
            i, j = np.argwhere(asym > 1e-12 * (1 + np.abs(Z)))[0]
            raise UsageError(f"relation matrix is not symmetric at ({i},{j})")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "known", known)

    @classmethod
    def full(cls, Z):
        Z = np.asarray(Z, dtype=float)
        return cls(Z, np.ones(Z.shape, dtype=bool))

    @classmethod
    def from_nan(cls, Z):
        """NaN marks an unknown entry."""
        Z = np.array(Z, dtype=float)
        known = ~np.isnan(Z)
        return cls(np.where(known, Z, 0.0), known)

    @property
    def n(self):
        return self.Z.shape[0]

    @property
    def fully_known(self):
        return bool(self.known.all())

    def known_fraction(self):
        """Fraction of off-diagonal pairs that are known."""
        iu = np.triu_indices(self.n, 1)
        return float(self.known[iu].mean()) if len(iu[0]) else 1.0


@dataclass
class FracturePrediction:
    groups: np.ndarray
    t_sing: float
    signs: np.ndarray = field(repr=False)
    balanced: bool
    blew_up: bool

    def members(self, group):
        return np.flatnonzero(self.groups == group)


def check_balance(signs):
    """Whether every triangle of a complete sign pattern has an odd number of + edges.

    Returns ``(ok, violations)`` where ``violations`` lists the offending
    ``(i, j, k)`` triples.
    """
    S = np.sign(np.asarray(signs, dtype=float))
    n = S.shape[0]
    violations = []
    for i, j, k in combinations(range(n), 3):
        if S[i, j] * S[j, k] * S[i, k] <= 0:
            violations.append((i, j, k))
    return not violations, violations


def _is_two_clique(S):
    # +1 within groups, -1 across, groups = components of the + graph
    n = S.shape[0]
    off = ~np.eye(n, dtype=bool)
    if np.any(S[off] == 0):
        return False, None
    n_comp, comp = connected_components((S > 0) & off, directed=False)
    if n_comp > 2:
        return False, comp
    same = comp[:, None] == comp[None, :]
    ok = np.all((S > 0)[off & same]) and np.all((S < 0)[off & ~same])
    return bool(ok), comp


def _groups_from(Z_s, comp, balanced):
    n = Z_s.shape[0]
    if balanced:
        side = comp == comp[0]
    else:
        vals, vecs = np.linalg.eigh(Z_s)
        v = vecs[:, -1]
        ref = v[0] if v[0] != 0 else 1.0
        side = np.sign(v) * np.sign(ref) >= 0
    return np.where(side, 1, 2).astype(np.int64) if n else np.zeros(0, dtype=np.int64)


def simulate_fracture(Z0, step_tol=1e-10, blowup_threshold=1e6, horizon=100.0,
                      zero_diagonal=False) -> FracturePrediction:
    """Integrate to the singularity and read off the two-group split.

    Without blow-up inside ``horizon`` every entity lands in group 1 and
    ``t_sing`` is ``inf`` (no predicted fracture).
    """
    if isinstance(Z0, RelationMatrix):
        if not Z0.fully_known:
            raise UsageError("simulate_fracture needs a fully known matrix; use predict_split")
        Z0 = Z0.Z
    Z0 = np.asarray(Z0, dtype=float)
    if not np.allclose(Z0, Z0.T, atol=1e-12):
        raise UsageError("Z0 must be symmetric")
    n = Z0.shape[0]
    res = integrate_z_squared(Z0, step_tol=step_tol, blowup_threshold=blowup_threshold,
                              horizon=horizon, record=False, zero_diagonal=zero_diagonal)
    S = np.sign(res.Z_s)
    np.fill_diagonal(S, 0)
    if not res.blew_up:
        return FracturePrediction(np.ones(n, dtype=np.int64), float("inf"), S, False, False)
    balanced, comp = _is_two_clique(S)
    if comp is None:
        comp = np.zeros(n, dtype=np.int64)
    groups = _groups_from(res.Z_s, comp, balanced)
    return FracturePrediction(groups, res.t_sing, S, balanced, True)


def complete_relations(Zp: RelationMatrix, beta1=0.1, beta2=0.5, transform="colnorm",
                       tol=1e-10) -> RelationMatrix:
    """Fill unknown entries with ESP-predicted signs.

    Every known non-zero pair contributes both directed edges with the sign
    of its entry; these are the labelled edges. Each unknown pair is scored
    in both directions, ``sign(c @ x_ij + c @ x_ji)`` (ties to +1), and
    given magnitude equal to the median absolute known entry.
    """
    if Zp.fully_known:
        return Zp
    n = Zp.n
    iu, ju = np.triu_indices(n, 1)
    known_pairs = Zp.known[iu, ju] & (Zp.Z[iu, ju] != 0)
    if not known_pairs.any():
        raise UsageError("no known off-diagonal relations to learn from")
    ki, kj = iu[known_pairs], ju[known_pairs]
    ks = np.sign(Zp.Z[ki, kj]).astype(int)
    edges = [(a, b, s) for a, b, s in zip(ki, kj, ks)] + [(b, a, s) for a, b, s in zip(ki, kj, ks)]
    g = SignedDiGraph(n, edges)

    unk = ~Zp.known[iu, ju]
    ui, uj = iu[unk], ju[unk]
    lab_edges = np.array([(a, b) for a, b, _ in edges], dtype=np.int64)
    lab_signs = np.array([s for _, _, s in edges], dtype=float)
    unl_edges = np.concatenate([np.column_stack([ui, uj]), np.column_stack([uj, ui])])
    all_edges = np.concatenate([lab_edges, unl_edges])
    X = build_feature_matrix(g, all_edges)
    data = LabeledEdgeSet(all_edges, X, lab_signs)
    model = esp_train(data, beta1=beta1, beta2=beta2, transform=transform, tol=tol)

    m = len(ui)
    Xu = X[len(lab_edges):]
    score = _apply(Xu, model.transform, model.scale) @ model.c
    pair_score = score[:m] + score[m:]
    pred = np.where(pair_score >= 0, 1.0, -1.0)
    mag = float(np.median(np.abs(Zp.Z[ki, kj])))
    Z = Zp.Z.copy()
    Z[ui, uj] = pred * mag
    Z[uj, ui] = pred * mag
    return RelationMatrix.full(Z)


def predict_split(Zp: RelationMatrix, esp_params=None, **sim_params) -> FracturePrediction:
    """``complete_relations`` followed by ``simulate_fracture``."""
    full = complete_relations(Zp, **(esp_params or {}))
    return simulate_fracture(full.Z, **sim_params)


def split_agreement(groups, truth):
    """Fraction of entities matching ``truth`` under the better of the two label matchings."""
    a = np.asarray(groups) == np.asarray(groups)[0]
    b = np.asarray(truth) == np.asarray(truth)[0]
    same = float(np.mean(a == b))
    return max(same, 1.0 - same)


def planted_relation_matrix(n, rng, sizes=None, magnitude=1.0, spread=0.3):
    """Random symmetric matrix with positive entries inside two planted groups.

    Entry magnitudes are ``|N(magnitude, spread)|``. Returns
    ``(Z, groups)`` with groups labelled 1 and 2.
    """
    rng = as_source(rng)
    if sizes is None:
        n1 = int(rng.integers(n // 3, n - n // 3 + 1))
        sizes = (n1, n - n1)
    if sum(sizes) != n:
        raise UsageError("group sizes must sum to n")
    groups = np.repeat([1, 2], sizes)
    groups = groups[rng.permutation(n)]
    mag = np.abs(rng.normal(magnitude, spread, size=(n, n)))
    mag = np.triu(mag, 1)
    mag = mag + mag.T
    sign = np.where(groups[:, None] == groups[None, :], 1.0, -1.0)
    Z = mag * sign
    np.fill_diagonal(Z, 0.0)
    return Z, groups


def load_karate():
    """Zachary karate club: ``(graph, faction)`` with faction 0 (Mr. Hi) / 1 (Officer)."""
    text = resources.files("balance_lab").joinpath("data/karate.txt").read_text()
    club = {}
    edges = []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "club":
            club[int(parts[1])] = int(parts[2])
        elif parts[0] == "edge":
            edges.append((int(parts[1]), int(parts[2])))
    n = len(club)
    return UndirectedGraph(n, edges), np.array([club[i] for i in range(n)])


def karate_relation_matrix(delta, graph=None):
    """+1 on friendship ties, ``-delta`` between every other pair."""
    if graph is None:
        graph, _ = load_karate()
    A = graph.adj.toarray()
    Z = np.where(A > 0, 1.0, -float(delta))
    np.fill_diagonal(Z, 0.0)
    return Z
