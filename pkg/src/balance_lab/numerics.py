"""Deterministic numerical kernels.

Jacobi-preconditioned conjugate gradients for the sparse symmetric systems
assembled by :mod:`balance_lab.signs`, a truncated SVD, an adaptive
Dormand-Prince integrator for the matrix Riccati flow ``dZ/dt = Z @ Z`` with
finite-time blow-up detection, and a seeded random source whose child
streams are addressed by label.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConvergenceError, IntegrationStallError, UsageError

__all__ = [
    "RandomSource",
    "as_source",
    "SparseSymMatrix",
    "cg_solve",
    "svd_topk",
    "OdeResult",
    "integrate_z_squared",
]


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


class RandomSource:
    """Seeded random stream with label-addressed children.

    ``RandomSource(seed).child("trial-3")`` depends only on the seed and the
    label path, never on how many draws the parent has made, so trials can
    be reordered or run concurrently without changing their draws.
    """

    def __init__(self, seed: int, path: str = ""):
        seed = int(seed)
        if seed < 0:
            raise UsageError("seed must be non-negative")
        self.seed = seed & 0xFFFFFFFFFFFFFFFF
        self.path = path
        entropy = [self.seed & 0xFFFFFFFF, self.seed >> 32] + _label_words(path)
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
        self.draws = 0

    def child(self, label) -> "RandomSource":
        return RandomSource(self.seed, f"{self.path}/{label}")

    # thin delegation; ``draws`` counts calls, a coarse stream position
    def random(self, size=None):
        self.draws += 1
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        self.draws += 1
        return self.generator.integers(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        self.draws += 1
        return self.generator.normal(loc, scale, size)

    def choice(self, a, size=None, replace=True, p=None):
        self.draws += 1
        return self.generator.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        self.draws += 1
        return self.generator.permutation(x)

    def pareto(self, a, size=None):
        self.draws += 1
        return self.generator.pareto(a, size)

    def poisson(self, lam, size=None):
        self.draws += 1
        return self.generator.poisson(lam, size)

    def multinomial(self, n, pvals, size=None):
        self.draws += 1
        return self.generator.multinomial(n, pvals, size)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, path={self.path!r})"


def as_source(rng) -> RandomSource:
    """Accept a RandomSource or an integer seed."""
    if isinstance(rng, RandomSource):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomSource(int(rng))
    raise UsageError("an explicit integer seed or RandomSource is required")


# ---------------------------------------------------------------------------
# sparse symmetric systems
# ---------------------------------------------------------------------------

class SparseSymMatrix:
    """Symmetric sparse matrix backed by CSR storage."""

    def __init__(self, matrix):
        m = sparse.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise UsageError(f"matrix must be square, got {m.shape}")
        self._m = m

    @classmethod
    def from_entries(cls, n, rows, cols, values):
        """Build from one triangle of entries; off-diagonal ones are mirrored.

        Duplicate coordinates are summed.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        off = rows != cols
        r = np.concatenate([rows, cols[off]])
        c = np.concatenate([cols, rows[off]])
        v = np.concatenate([values, values[off]])
        return cls(sparse.coo_matrix((v, (r, c)), shape=(n, n)))

    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def shape(self):
        return self._m.shape

    @property
    def csr(self):
        return self._m

    def diagonal(self):
        return self._m.diagonal()

    def matvec(self, x):
        return self._m @ x

    def __matmul__(self, x):
        return self._m @ x

    def toarray(self):
        return self._m.toarray()


def cg_solve(A, b, tol=1e-8, max_iter=None, x0=None):
    """Solve ``A x = b`` by Jacobi-preconditioned conjugate gradients.

    Parameters
    ----------
    A : SparseSymMatrix, scipy sparse matrix or ndarray
        Symmetric positive (semi-)definite operator. Zero diagonal entries
        get a unit preconditioner so consistent singular systems still
        converge from a zero start.
    b : array_like
    tol : float
        Target relative residual ``||Ax - b|| / ||b||``.
    max_iter : int, optional
        Defaults to ``10 * n``.

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``max_iter`` iterations.
    """
    if not isinstance(A, SparseSymMatrix):
        A = SparseSymMatrix(A)
    b = np.asarray(b, dtype=float)
    n = A.n
    if b.shape != (n,):
        raise UsageError(f"rhs has shape {b.shape}, expected ({n},)")
    if tol <= 0:
        raise UsageError("tol must be positive")
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n)

    diag = A.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    r = b - A @ x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    it = 0
    while np.linalg.norm(r) > tol * bnorm:
        if it >= max_iter:
            true_res = np.linalg.norm(b - A @ x) / bnorm
            raise ConvergenceError(
                f"CG did not reach tol={tol:g} in {max_iter} iterations "
                f"(relative residual {true_res:.3e})",
                residual=true_res, iterations=it)
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            true_res = np.linalg.norm(b - A @ x) / bnorm
            raise ConvergenceError("operator is not positive definite along search direction",
                                   residual=true_res, iterations=it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        # refresh the recursively updated residual now and then
        if it % 50 == 0:
            r = b - A @ x
    return x


# ---------------------------------------------------------------------------
# truncated SVD
# ---------------------------------------------------------------------------

def svd_topk(X, k):
    """Top-``k`` right singular vectors and singular values of ``X``.

    Returns ``(basis, singular_values)`` with ``basis`` of shape ``(m, k)``.
    Column signs are fixed so the largest-magnitude entry of each column is
    positive, which makes the result reproducible across LAPACK builds.
    """
    if sparse.issparse(X):
        X = X.toarray()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise UsageError("X must be two-dimensional")
    n, m = X.shape
    k = int(k)
    if not 1 <= k <= min(n, m):
        raise UsageError(f"k={k} outside [1, {min(n, m)}]")
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    basis = vt[:k].T.copy()
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(k)])
    signs[signs == 0] = 1.0
    basis *= signs
    return basis, s[:k].copy()


# ---------------------------------------------------------------------------
# dZ/dt = Z^2 with blow-up detection
# ---------------------------------------------------------------------------

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class OdeResult:
    """Outcome of :func:`integrate_z_squared`.

    ``Z_s`` is the first accepted state whose largest entry magnitude reaches
    the threshold (or the state at the horizon when there is no blow-up).
    ``t_sing`` is ``inf`` when the flow did not blow up.
    """

    times: np.ndarray
    states: list = field(repr=False)
    blew_up: bool
    t_sing: float
    Z_s: np.ndarray = field(repr=False)
    t_final: float
    n_steps: int
    n_rejected: int


def _dp_step(Z, h, zero_diag):
    def f(Y):
        d = Y @ Y
        if zero_diag:
            np.fill_diagonal(d, 0.0)
        return d

    ks = [f(Z)]
    for i in range(1, 7):
        Y = Z.copy()
        for j, a in enumerate(_A[i]):
            if a:
                Y += (h * a) * ks[j]
        ks.append(f(Y))
    Z5 = Z.copy()
    err = np.zeros_like(Z)
    for j in range(7):
        if _B5[j]:
            Z5 += (h * _B5[j]) * ks[j]
        if _E[j]:
            err += (h * _E[j]) * ks[j]
    return Z5, err


def _estimate_t_sing(times, inv_max):
    t = np.asarray(times[-5:])
    y = np.asarray(inv_max[-5:])
    if len(t) < 2:
        return float(t[-1])
    slope, intercept = np.polyfit(t - t[-1], y, 1)
    if slope >= 0:
        return float(t[-1])
    return float(t[-1] - intercept / slope)


def integrate_z_squared(Z0, step_tol=1e-10, blowup_threshold=1e6, horizon=100.0,
                        h0=None, record=True, zero_diagonal=False, max_steps=200000):
    """Integrate ``dZ/dt = Z Z`` from ``Z0`` until blow-up or ``horizon``.

    Adaptive Dormand-Prince 5(4) with a mixed absolute/relative per-entry
    max-norm error test at level ``step_tol``. Integration stops on the
    first accepted step at which some ``|Z_ij| >= blowup_threshold``; the
    singularity time is then extrapolated linearly from ``1 / max|Z|`` over
    the last five accepted steps.

    ``zero_diagonal`` pins the diagonal at zero (derivative and state).

    Raises
    ------
    IntegrationStallError
        When the step size underflows before the threshold is crossed.
    """
    Z = np.array(Z0, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise UsageError(f"Z0 must be square, got shape {Z.shape}")
    if zero_diagonal:
        np.fill_diagonal(Z, 0.0)
    zmax = np.max(np.abs(Z)) if Z.size else 0.0
    if not blowup_threshold > zmax:
        raise UsageError("blowup_threshold must exceed max |Z0| entry")
    if horizon <= 0:
        raise UsageError("horizon must be positive")

    t = 0.0
    times = [0.0]
    states = [Z.copy()] if record else []
    inv_max = [1.0 / zmax if zmax > 0 else np.inf]
    if h0 is None:
        # first step: a small fraction of the linearised time scale
        rate = np.max(np.abs(Z @ Z)) if Z.size else 0.0
        h = 0.01 * (zmax / rate if rate > 0 else horizon)
        h = min(h, horizon)
    else:
        h = h0
    n_steps = n_rej = 0
    blew_up = False

    while t < horizon:
        if n_steps + n_rej >= max_steps:
            raise IntegrationStallError(f"step budget {max_steps} exhausted at t={t:g}", t, Z)
        h = min(h, horizon - t)
        if h <= 1e-15 * max(1.0, abs(t)):
            raise IntegrationStallError(f"step size underflow at t={t:.6g}", t, Z)
        with np.errstate(over="ignore", invalid="ignore"):
            Z_new, err = _dp_step(Z, h, zero_diagonal)
            scale = step_tol * (1.0 + np.maximum(np.abs(Z), np.abs(Z_new)))
            ratio = np.max(np.abs(err) / scale) if Z.size else 0.0
        if not np.isfinite(ratio) or not np.all(np.isfinite(Z_new)):
            n_rej += 1
            h *= 0.2
            continue
        if ratio > 1.0:
            n_rej += 1
            h *= max(0.2, 0.9 * ratio ** -0.2)
            continue
        t += h
        Z = Z_new
        if zero_diagonal:
            np.fill_diagonal(Z, 0.0)
        n_steps += 1
        zmax = np.max(np.abs(Z)) if Z.size else 0.0
        times.append(t)
        inv_max.append(1.0 / zmax if zmax > 0 else np.inf)
        if record:
            states.append(Z.copy())
        if zmax >= blowup_threshold:
            blew_up = True
            break
        h *= min(5.0, 0.9 * ratio ** -0.2) if ratio > 0 else 5.0

    t_sing = _estimate_t_sing(times, inv_max) if blew_up else float("inf")
    return OdeResult(times=np.asarray(times), states=states, blew_up=blew_up,
                     t_sing=t_sing, Z_s=Z, t_final=t, n_steps=n_steps, n_rejected=n_rej)
