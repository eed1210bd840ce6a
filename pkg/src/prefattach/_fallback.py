"""Pure numpy versions of the likelihood kernels."""
import numpy as np


def preference_values(degrees, piecewise, alpha, beta, gamma, delta):
    k = np.asarray(degrees, dtype=float)
    out = np.full(k.shape, float(delta))
    pos = k > 0
    out[pos] += np.exp(alpha * np.log(k[pos]))
    if piecewise:
        upper = k >= gamma
        out[upper] = np.exp(alpha * np.log(gamma)) + beta * (k[upper] - gamma) + delta
    return out


def log_b(degrees, c_ptr, c_idx, c_cnt, w, A, piecewise, alpha, beta, gamma, delta):
    """Log of the product of normalised weights raised to the increments.

    ``sum_k w_k log g(k) - sum_t A_t log(sum_k c[t, k] g(k))``. Returns NaN
    if some time point has zero total weight and ``-inf`` if an increment
    landed on a zero-weight degree.
    """
    gv = preference_values(degrees, piecewise, alpha, beta, gamma, delta)
    T = len(A)
    if T:
        rows = np.repeat(np.arange(T), np.diff(c_ptr))
        totals = np.bincount(rows, weights=c_cnt * gv[c_idx], minlength=T)
        if np.any(totals <= 0):
            return float("nan")
    else:
        totals = np.ones(0)
    hit = w > 0
    if np.any(gv[hit] <= 0):
        return float("-inf")
    pos = A > 0
    return float(np.dot(w[hit], np.log(gv[hit])) - np.dot(A[pos], np.log(totals[pos])))
