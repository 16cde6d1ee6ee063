"""Numeric inner loops, each with a numba and a numpy implementation.

The public names dispatch on :data:`superres._backend.USE_NUMBA`.  Both
variants are importable directly (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them side by side.  All kernels are deterministic; any
randomness is drawn by the caller so that both paths see identical inputs.
"""

import numpy as np

from ._backend import USE_NUMBA, njit

__all__ = [
    "sine_product_grid",
    "pattern_probabilities",
    "count_all_clicked",
    "local_extrema",
    "binomial_loglike",
]


# -- product of shifted sines ------------------------------------------------

def sine_product_grid_numpy(n, phi):
    phi = np.asarray(phi, dtype=np.float64)
    shifts = np.arange(n) * (np.pi / n)
    return np.prod(np.sin(phi[..., None] + shifts), axis=-1)


@njit
def _sine_product_grid_jit(n, phi):
    out = np.empty(phi.shape[0])
    step = np.pi / n
    for i in range(phi.shape[0]):
        acc = 1.0
        for k in range(n):
            acc *= np.sin(phi[i] + k * step)
        out[i] = acc
    return out


def sine_product_grid_numba(n, phi):
    phi = np.asarray(phi, dtype=np.float64)
    return _sine_product_grid_jit(int(n), phi.ravel()).reshape(phi.shape)


# -- joint outcome probabilities of independent threshold detectors ---------

def pattern_probabilities_numpy(p):
    """Probability of every click pattern; bit k of the index is channel k."""
    p = np.asarray(p, dtype=np.float64)
    k = p.shape[0]
    idx = np.arange(1 << k)
    bits = (idx[:, None] >> np.arange(k)) & 1
    return np.prod(np.where(bits == 1, p, 1.0 - p), axis=1)


@njit
def _pattern_probabilities_jit(p):
    k = p.shape[0]
    m = 1 << k
    out = np.empty(m)
    for idx in range(m):
        acc = 1.0
        for c in range(k):
            if (idx >> c) & 1:
                acc *= p[c]
            else:
                acc *= 1.0 - p[c]
        out[idx] = acc
    return out


def pattern_probabilities_numba(p):
    return _pattern_probabilities_jit(np.asarray(p, dtype=np.float64))


# -- gate-wise coincidence counting ------------------------------------------

def count_all_clicked_numpy(bits):
    """Number of columns (gates) in which every row (channel) is set."""
    bits = np.asarray(bits, dtype=bool)
    if bits.shape[0] == 0:
        return 0
    return int(np.count_nonzero(np.logical_and.reduce(bits, axis=0)))


@njit
def _count_all_clicked_jit(bits):
    # running AND over rows keeps memory access contiguous
    rows, cols = bits.shape
    acc = bits[0].copy()
    for i in range(1, rows):
        row = bits[i]
        for j in range(cols):
            acc[j] = acc[j] and row[j]
    total = 0
    for j in range(cols):
        total += acc[j]
    return total


def count_all_clicked_numba(bits):
    bits = np.ascontiguousarray(bits, dtype=np.bool_)
    if bits.shape[0] == 0:
        return 0
    return int(_count_all_clicked_jit(bits))


# -- discrete local extrema ----------------------------------------------------

def _plateau_extrema(y, sign):
    """Midpoints of strict local maxima (sign=+1) or minima (sign=-1), plateaus included."""
    y = sign * np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n < 3:
        return np.empty(0, dtype=np.int64)
    d = np.diff(y)
    # run-length encode equal stretches
    change = np.flatnonzero(d != 0)
    if change.size == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [n - 1]))
    vals = y[starts]
    out = []
    for r in range(1, starts.size - 1):
        if vals[r] > vals[r - 1] and vals[r] > vals[r + 1]:
            out.append((starts[r] + ends[r]) // 2)
    return np.asarray(out, dtype=np.int64)


def local_extrema_numpy(y):
    return _plateau_extrema(y, 1.0), _plateau_extrema(y, -1.0)


@njit
def _extrema_jit(y, sign):
    n = y.shape[0]
    out = np.empty(n, dtype=np.int64)
    count = 0
    i = 1
    while i < n - 1:
        prev = sign * y[i - 1]
        cur = sign * y[i]
        if cur > prev:
            j = i
            while j + 1 < n and y[j + 1] == y[i]:
                j += 1
            if j + 1 < n and sign * y[j + 1] < cur:
                out[count] = (i + j) // 2
                count += 1
            i = j + 1
        else:
            i += 1
    return out[:count]


def local_extrema_numba(y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] < 3:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return _extrema_jit(y, 1.0), _extrema_jit(y, -1.0)


# -- binomial log-likelihood over a phase grid --------------------------------

def binomial_loglike_numpy(counts, gates, probs):
    """Log-likelihood table ``L[t, g] = sum_c log Binom(counts[t, c] | gates[c], probs[g, c])``.

    Constant binomial coefficients are dropped.
    """
    counts = np.asarray(counts, dtype=np.float64)
    gates = np.asarray(gates, dtype=np.float64)
    probs = np.clip(np.asarray(probs, dtype=np.float64), 1e-300, 1.0 - 1e-16)
    return counts @ np.log(probs).T + (gates - counts) @ np.log1p(-probs).T


@njit
def _binomial_loglike_jit(counts, gates, probs):
    g_n, c_n = probs.shape
    # (channel, grid) layout so both products below are contiguous BLAS calls
    logp = np.empty((c_n, g_n))
    logq = np.empty((c_n, g_n))
    for g in range(g_n):
        for c in range(c_n):
            p = min(max(probs[g, c], 1e-300), 1.0 - 1e-16)
            logp[c, g] = np.log(p)
            logq[c, g] = np.log1p(-p)
    misses = np.empty_like(counts)
    for t in range(counts.shape[0]):
        for c in range(c_n):
            misses[t, c] = gates[c] - counts[t, c]
    return np.dot(counts, logp) + np.dot(misses, logq)


def binomial_loglike_numba(counts, gates, probs):
    return _binomial_loglike_jit(
        np.ascontiguousarray(counts, dtype=np.float64),
        np.ascontiguousarray(gates, dtype=np.float64),
        np.ascontiguousarray(probs, dtype=np.float64),
    )


if USE_NUMBA:
    sine_product_grid = sine_product_grid_numba
    pattern_probabilities = pattern_probabilities_numba
    count_all_clicked = count_all_clicked_numba
    local_extrema = local_extrema_numba
    binomial_loglike = binomial_loglike_numba
else:
    sine_product_grid = sine_product_grid_numpy
    pattern_probabilities = pattern_probabilities_numpy
    count_all_clicked = count_all_clicked_numpy
    local_extrema = local_extrema_numpy
    binomial_loglike = binomial_loglike_numpy
