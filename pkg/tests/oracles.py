"""Independent oracle implementations used to freeze expected test values.

Everything here deliberately avoids the library code paths it checks:
dense linear algebra instead of banded solves, exhaustive enumeration instead
of iterative solvers, series/continued fractions instead of scipy.special,
plain set arithmetic instead of bitmask counting.
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# regularized upper incomplete gamma, Numerical-Recipes style

def gammq_oracle(a: float, x: float, itmax: int = 500, eps: float = 1e-14) -> float:
    """Q(a, x) by power series (x < a+1) or modified-Lentz continued fraction."""
    if a <= 0 or x < 0:
        raise ValueError("gammq_oracle: need a > 0, x >= 0")
    if x == 0.0:
        return 1.0
    gln = math.lgamma(a)
    if x < a + 1.0:
        ap = a
        total = 1.0 / a
        delta = total
        for _ in range(itmax):
            ap += 1.0
            delta *= x / ap
            total += delta
            if abs(delta) < abs(total) * eps:
                break
        return 1.0 - total * math.exp(-x + a * math.log(x) - gln)
    fpmin = 1e-300
    b = x + 1.0 - a
    c = 1.0 / fpmin
    d = 1.0 / b
    h = d
    for i in range(1, itmax + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < fpmin:
            d = fpmin
        c = b + an / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return math.exp(-x + a * math.log(x) - gln) * h


def chi2_sf_oracle(x: float, df: int) -> float:
    if x <= 0:
        return 1.0
    return gammq_oracle(df / 2.0, x / 2.0)


# ---------------------------------------------------------------------------
# dense smoothing-spline oracle: (I + lam * Q R^-1 Q^T) f = y

def dense_spline_oracle(x: np.ndarray, y: np.ndarray, lam: float):
    """Fitted values, smoother diagonal, and trace via dense inversion."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    h = np.diff(x)
    Q = np.zeros((n, n - 2))
    R = np.zeros((n - 2, n - 2))
    for j in range(1, n - 1):
        c = j - 1
        Q[j - 1, c] = 1.0 / h[j - 1]
        Q[j, c] = -1.0 / h[j - 1] - 1.0 / h[j]
        Q[j + 1, c] = 1.0 / h[j]
        R[c, c] = (h[j - 1] + h[j]) / 3.0
        if j < n - 2:
            R[c, c + 1] = R[c + 1, c] = h[j] / 6.0
    K = Q @ np.linalg.inv(R) @ Q.T
    S = np.linalg.inv(np.eye(n) + lam * K)
    f = S @ y
    return f, np.diag(S).copy(), float(np.trace(S))


def ols_line(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    X = np.column_stack([np.ones_like(x), x])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return X @ beta


# ---------------------------------------------------------------------------
# exact quantile-regression vertex enumeration (LP optimum for 2 parameters)

def pinball(residuals: np.ndarray, tau: float) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(r * (tau - (r < 0))))


def lp_quantile_oracle(x: np.ndarray, y: np.ndarray, tau: float):
    """Minimum of the check loss over all lines through two sample points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    best = (math.inf, 0.0, 0.0)
    n = x.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if x[i] == x[j]:
                continue
            b1 = (y[j] - y[i]) / (x[j] - x[i])
            b0 = y[i] - b1 * x[i]
            obj = pinball(y - (b0 + b1 * x), tau)
            if obj < best[0]:
                best = (obj, b0, b1)
    return best


# ---------------------------------------------------------------------------
# exhaustive motif census over (survey user, message event) pairs

def brute_motif_census(survey_users, follows, events, originals):
    """follows: set of (user, account); events: (source, retweeter) tuples;
    originals: account -> number of original qualifying posts."""
    direct = two_step = mixed = 0
    for u in survey_users:
        for author, n_posts in originals.items():
            if (u, author) in follows:
                direct += n_posts
        for source, retweeter in events:
            if (u, retweeter) not in follows:
                continue
            if source == retweeter:
                direct += 1
            elif (u, source) in follows:
                mixed += 1
            else:
                two_step += 1
    return {"direct": direct, "two_step": two_step, "mixed": mixed}


# ---------------------------------------------------------------------------
# stub-matching sampler for the directed configuration model

def stub_matching_sample(events, rng: np.random.Generator):
    """Uniformly re-pair source stubs with retweeter stubs."""
    retweeters = [w for (_, w) in events]
    perm = rng.permutation(len(events))
    return [(events[i][0], retweeters[perm[i]]) for i in range(len(events))]


# ---------------------------------------------------------------------------
# dense PageRank power iteration

def dense_pagerank(nodes, edge_weights, damping=0.85, tol=1e-14, max_iter=1000000):
    """edge_weights: (source, retweeter) -> weight; walk moves retweeter -> source."""
    nodes = list(nodes)
    idx = {v: i for i, v in enumerate(nodes)}
    n = len(nodes)
    M = np.zeros((n, n))
    out = np.zeros(n)
    for (src, dst), w in edge_weights.items():
        out[idx[dst]] += w
    for (src, dst), w in edge_weights.items():
        M[idx[src], idx[dst]] += w / out[idx[dst]]
    dangling = out == 0
    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        new = damping * (M @ v + v[dangling].sum() / n) + (1.0 - damping) / n
        if np.abs(new - v).sum() < tol:
            return dict(zip(nodes, new))
        v = new
    raise RuntimeError("dense_pagerank did not converge")
