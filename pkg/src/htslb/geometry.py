"""The cone K_gamma, Euclidean projection onto it, and collapse diagnostics.

K_gamma is generated by the N vectors with 1 in one coordinate and gamma in
all others. gamma = 0 gives the nonnegative orthant, gamma = 1 collapses to
the ray along the all-ones vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, InvalidParameter, NonConvergence

DUAL_TOL = 1e-10


@dataclass(frozen=True)
class ConeDecomposition:
    parallel: np.ndarray
    perp: np.ndarray
    weights: np.ndarray
    perp_norm2: float

    def as_dict(self) -> dict:
        return {
            "parallel": self.parallel.tolist(),
            "perp": self.perp.tolist(),
            "weights": self.weights.tolist(),
            "perp_norm2": self.perp_norm2,
        }


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    se: float
    n: int


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParameter(f"gamma: must lie in [0, 1], got {gamma}")
    return gamma


def cone_generators(N: int, gamma: float) -> np.ndarray:
    """Generators as rows: row n has 1 at column n and gamma elsewhere.

    The matrix is symmetric, so rows and columns coincide.
    """
    if int(N) != N or N < 1:
        raise InvalidParameter(f"N: must be a positive integer, got {N}")
    gamma = _check_gamma(gamma)
    B = np.full((N, N), gamma)
    np.fill_diagonal(B, 1.0)
    return B


def nnls(A: np.ndarray, b: np.ndarray, max_iter: int = None, tol: float = DUAL_TOL):
    """Lawson-Hanson active-set solve of min ||A w - b||_2 subject to w >= 0.

    ``max_iter`` caps inner iterations (default 50 * ncols). ``tol`` is the
    dual feasibility threshold, scaled by ``1 + ||b||``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if max_iter is None:
        max_iter = 50 * n
    thresh = tol * (1.0 + np.linalg.norm(b))
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    grad = A.T @ b
    iters = 0
    while not passive.all():
        free = np.where(passive, -np.inf, grad)
        j = int(np.argmax(free))
        if free[j] <= thresh:
            break
        passive[j] = True
        while True:
            iters += 1
            if iters > max_iter:
                raise NonConvergence(f"NNLS exceeded {max_iter} iterations")
            z = np.zeros(n)
            if passive.any():
                z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                break
            bad = passive & (z <= 0)
            step = np.min(x[bad] / (x[bad] - z[bad]))
            x = x + step * (z - x)
            passive &= x > thresh * 1e-3
            x[~passive] = 0.0
        x = z
        grad = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


def project_to_cone(x, gamma: float) -> ConeDecomposition:
    """Split ``x`` into its Euclidean projection onto K_gamma and the remainder."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidParameter("x: expected a nonempty vector")
    if not np.all(np.isfinite(x)):
        raise InvalidParameter("x: entries must be finite")
    gamma = _check_gamma(gamma)
    N = x.size
    if gamma == 0.0:
        parallel = np.maximum(x, 0.0)
        weights = parallel.copy()
    elif gamma == 1.0:
        level = max(float(np.sum(x)), 0.0) / N
        parallel = np.full(N, level)
        weights = np.full(N, level / N)
    else:
        B = cone_generators(N, gamma)
        weights, _ = nnls(B, x)
        parallel = B @ weights
    perp = x - parallel
    return ConeDecomposition(parallel, perp, weights, float(np.linalg.norm(perp)))


def decomposition_checks(x, dec, gamma) -> dict:
    """Which of the four decomposition properties hold, with tolerances scaled by ``||x||``."""
    B = cone_generators(len(x), gamma)
    x = np.asarray(x, dtype=float)
    tol = 1e-9 * (1.0 + np.linalg.norm(x))
    return {
        "reconstruction": bool(np.all(np.abs(dec.parallel + dec.perp - x) <= tol)),
        "weights": bool(np.all(dec.weights >= 0)
                        and np.all(np.abs(B.T @ dec.weights - dec.parallel) <= tol)),
        "orthogonality": bool(abs(dec.perp @ dec.parallel) <= 1e-8 * (1.0 + x @ x)),
        "polar": bool(np.all(B @ dec.perp <= 1e-8 * (1.0 + np.linalg.norm(x)))),
    }


def in_cone(x, gamma: float, tol: float = None) -> bool:
    x = np.asarray(x, dtype=float)
    if tol is None:
        tol = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    return project_to_cone(x, gamma).perp_norm2 <= tol


def perp_norms(states, gamma: float) -> np.ndarray:
    """||Q_perp||_2 for each row of ``states``."""
    X = np.asarray(states, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    gamma = _check_gamma(gamma)
    if gamma == 0.0:
        return np.linalg.norm(np.minimum(X, 0.0), axis=1)
    if gamma == 1.0:
        level = np.maximum(X.sum(axis=1), 0.0) / X.shape[1]
        return np.linalg.norm(X - level[:, None], axis=1)
    return np.array([project_to_cone(row, gamma).perp_norm2 for row in X])


def ssc_moments(states, gamma: float, r: int = 2) -> MomentEstimate:
    """Monte Carlo estimate of E||Q_perp||_2**r with its naive standard error."""
    X = np.asarray(states, dtype=float)
    if X.size == 0:
        raise EmptySample("no states to estimate from")
    if int(r) != r or r < 1:
        raise InvalidParameter(f"r: must be a positive integer, got {r}")
    vals = perp_norms(X, gamma) ** r
    n = vals.size
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return MomentEstimate(float(np.mean(vals)), se, n)
