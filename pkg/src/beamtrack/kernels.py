"""Hot inner loops: Monte-Carlo set-EI and the GP likelihood.

The set-EI kernels operate on a joint sample matrix ``samples`` of shape
``(S, n_beams)`` drawn from the posterior at one slot, and a scalar
``f_star`` (the believed best).  The improvement of a set B on sample s is
``max(max_{b in B} samples[s, b] - f_star, 0)``.

The likelihood kernels work on integer-coded pairs of the observation
buffer (see the comment above :func:`table_gram_numpy`).

Two implementations exist for each kernel: ``*_numba`` (compiled loops) and
``*_numpy`` (vectorized).  The public names resolve to one of them according
to :data:`beamtrack._accel.USE_NUMBA`.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


# greedy step: gain of adding each candidate to the current running max


def greedy_gains_numpy(samples, running, f_star, candidates):
    """Mean improvement of ``running ∪ {b}`` for every beam ``b``.

    ``running`` holds the per-sample max of the current set (``-inf`` for the
    empty set).  Non-candidates get ``-inf``.
    """
    base = np.maximum(running, f_star)
    vals = np.maximum(samples, base[:, None]) - f_star
    out = vals.mean(axis=0)
    out[~candidates] = -np.inf
    return out


@njit
def greedy_gains_numba(samples, running, f_star, candidates):
    n_samples, n_beams = samples.shape
    out = np.full(n_beams, -np.inf)
    for b in range(n_beams):
        if not candidates[b]:
            continue
        acc = 0.0
        for s in range(n_samples):
            base = running[s] if running[s] > f_star else f_star
            x = samples[s, b]
            acc += (x if x > base else base) - f_star
        out[b] = acc / n_samples
    return out


# batch evaluation of many fixed-size sets (index rows)


def set_improvements_numpy(samples, f_star, subsets):
    """Per-sample improvement for each row of ``subsets``; shape ``(n_sets, S)``."""
    picked = samples[:, subsets]  # (S, n_sets, k)
    best = picked.max(axis=2).T
    return np.maximum(best - f_star, 0.0)


@njit
def set_improvements_numba(samples, f_star, subsets):
    n_samples = samples.shape[0]
    n_sets, k = subsets.shape
    out = np.empty((n_sets, n_samples))
    for i in range(n_sets):
        for s in range(n_samples):
            m = -np.inf
            for j in range(k):
                x = samples[s, subsets[i, j]]
                if x > m:
                    m = x
            d = m - f_star
            out[i, s] = d if d > 0.0 else 0.0
    return out


# GP likelihood.  Buffer pairs are encoded by two small integer codes: the
# time-lag code (index into a table of distinct |t - t'|) and the beam-offset
# code (|dh| * V + |dv|).  The kernel matrix is then a product of two table
# lookups, and likelihood gradients only need the pairwise weights summed per
# (lag, offset) cell.


def table_gram_numpy(lag_code, off_code, time_tab, beam_tab):
    return time_tab[lag_code] * beam_tab[off_code]


def cell_sums_numpy(w, lag_code, off_code, n_lag, n_off):
    """Sum of ``w`` over each (lag, offset) cell; lower triangle of ``w`` only.

    Off-diagonal entries count twice, so the result equals the full
    symmetric sum.
    """
    n = w.shape[0]
    rows, cols = np.tril_indices(n)
    weights = np.where(rows == cols, 1.0, 2.0) * w[rows, cols]
    cell = lag_code[rows, cols] * n_off + off_code[rows, cols]
    return np.bincount(cell, weights=weights, minlength=n_lag * n_off).reshape(n_lag, n_off)


@njit
def table_gram_numba(lag_code, off_code, time_tab, beam_tab):
    n, m = lag_code.shape
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = time_tab[lag_code[i, j]] * beam_tab[off_code[i, j]]
    return out


@njit
def cell_sums_numba(w, lag_code, off_code, n_lag, n_off):
    n = w.shape[0]
    out = np.zeros((n_lag, n_off))
    for i in range(n):
        for j in range(i):
            out[lag_code[i, j], off_code[i, j]] += 2.0 * w[i, j]
        out[lag_code[i, i], off_code[i, i]] += w[i, i]
    return out


if USE_NUMBA:
    greedy_gains = greedy_gains_numba
    set_improvements = set_improvements_numba
    table_gram = table_gram_numba
    cell_sums = cell_sums_numba
else:
    greedy_gains = greedy_gains_numpy
    set_improvements = set_improvements_numpy
    table_gram = table_gram_numpy
    cell_sums = cell_sums_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
