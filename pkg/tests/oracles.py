"""Independent reference computations used only by the tests."""
import itertools
import math

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg


def power_of_d_by_enumeration(N, d):
    """Win frequency of each sorted position over all C(N, d) subsets."""
    wins = np.zeros(N)
    subsets = list(itertools.combinations(range(N), d))
    for sub in subsets:
        wins[min(sub)] += 1
    return wins / len(subsets)


def cone_projection_by_enumeration(x, gamma):
    """Euclidean projection onto K_gamma by trying every generator subset.

    Each subset's unconstrained least-squares fit that comes out nonnegative
    is a feasible point; the projection is the closest of them.
    """
    x = np.asarray(x, dtype=float)
    N = x.size
    B = np.full((N, N), gamma)
    np.fill_diagonal(B, 1.0)
    best = np.zeros(N)
    best_res = np.linalg.norm(x)
    for k in range(1, N + 1):
        for cols in itertools.combinations(range(N), k):
            A = B[:, cols]
            w, *_ = np.linalg.lstsq(A, x, rcond=None)
            if np.all(w >= -1e-12):
                y = A @ np.maximum(w, 0)
                res = np.linalg.norm(x - y)
                if res < best_res - 1e-15:
                    best, best_res = y, res
    return best


def single_server_stationary(arrival_pmf, service_pmf, K):
    """Stationary law of Q' = max(Q + A - S, 0) truncated at K (overflow clipped to K)."""
    a = np.asarray(arrival_pmf, dtype=float)
    s = np.asarray(service_pmf, dtype=float)
    inc = {}
    for i, pa in enumerate(a):
        for j, ps in enumerate(s):
            inc[i - j] = inc.get(i - j, 0.0) + pa * ps
    rows, cols, vals = [], [], []
    for q in range(K + 1):
        for d, p in inc.items():
            rows.append(q)
            cols.append(min(max(q + d, 0), K))
            vals.append(p)
    P = sparse.csr_matrix((vals, (rows, cols)), shape=(K + 1, K + 1))
    A = (P.T - sparse.identity(K + 1)).tolil()
    A[0, :] = 1.0
    rhs = np.zeros(K + 1)
    rhs[0] = 1.0
    pi = splinalg.spsolve(A.tocsr(), rhs)
    return pi


def w1_by_quadrature(samples, exp_mean, upper=None):
    """Integral of |F_n - F| by adaptive quadrature with breakpoints at the samples."""
    from scipy import integrate

    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    upper = upper if upper is not None else xs[-1] + 60 * exp_mean

    def gap(t):
        return abs(np.searchsorted(xs, t, side="right") / n + math.expm1(-t / exp_mean))

    edges = np.unique(np.concatenate([[0.0], xs, [upper]]))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(gap, lo, hi, limit=200)[0]
    return total
