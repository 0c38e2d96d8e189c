"""Hot loops with two interchangeable implementations.

``*_numba`` functions are explicit loops compiled by numba; ``*_numpy``
functions are vectorized numpy. Both perform the same floating-point additions
in the same order (every logarithm is precomputed by the caller), so they are
bit-for-bit identical. The public names dispatch on
:data:`melharm._backend.USE_NUMBA`.
"""
from __future__ import annotations

import numpy as np

from ._backend import USE_NUMBA, njit

# -- Viterbi -------------------------------------------------------------------


@njit
def viterbi_numba(log_prior, log_trans, log_emit):
    M, K = log_emit.shape
    delta = np.empty((M, K))
    back = np.zeros((M, K), dtype=np.int64)
    for j in range(K):
        delta[0, j] = log_prior[j] + log_emit[0, j]
    for t in range(1, M):
        for j in range(K):
            best = -np.inf
            arg = 0
            for i in range(K):
                v = delta[t - 1, i] + log_trans[i, j]
                if v > best:
                    best = v
                    arg = i
            delta[t, j] = best + log_emit[t, j]
            back[t, j] = arg
    path = np.empty(M, dtype=np.int64)
    best = -np.inf
    arg = 0
    for j in range(K):
        if delta[M - 1, j] > best:
            best = delta[M - 1, j]
            arg = j
    path[M - 1] = arg
    for t in range(M - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, delta[M - 1, arg]


def viterbi_numpy(log_prior, log_trans, log_emit):
    M, K = log_emit.shape
    delta = np.empty((M, K))
    back = np.zeros((M, K), dtype=np.int64)
    delta[0] = log_prior + log_emit[0]
    cols = np.arange(K)
    for t in range(1, M):
        scores = delta[t - 1][:, None] + log_trans
        arg = scores.argmax(axis=0)
        back[t] = arg
        delta[t] = scores[arg, cols] + log_emit[t]
    path = np.empty(M, dtype=np.int64)
    path[M - 1] = int(delta[M - 1].argmax())
    for t in range(M - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[M - 1, path[M - 1]])


def viterbi(log_prior: np.ndarray, log_trans: np.ndarray, log_emit: np.ndarray) -> tuple[np.ndarray, float]:
    """Max-score state path; ties go to the lower state index at every step.

    Scores accumulate as ``((prior + emit_0) + trans_1) + emit_1 ...``.
    """
    args = (np.ascontiguousarray(log_prior, dtype=np.float64),
            np.ascontiguousarray(log_trans, dtype=np.float64),
            np.ascontiguousarray(log_emit, dtype=np.float64))
    if args[2].shape[0] < 1:
        raise ValueError("empty observation sequence")
    if USE_NUMBA:
        path, score = viterbi_numba(*args)
        return path, float(score)
    return viterbi_numpy(*args)


# -- GA fitness ------------------------------------------------------------------


@njit
def population_fitness_numba(pop, slot_table, log_tri, log_pos, ent_terms, log_ent, weights):
    P, M = pop.shape
    K = slot_table.shape[1]
    n_bins = log_ent.shape[0]
    out = np.empty(P)
    counts = np.zeros(K, dtype=np.int64)
    for p in range(P):
        f1 = 0.0
        for m in range(M):
            f1 += slot_table[m, pop[p, m]]
        f2 = 0.0
        for m in range(2, M):
            f2 += log_tri[pop[p, m - 2], pop[p, m - 1], pop[p, m]]
        f3 = 0.0
        for m in range(M):
            f3 += log_pos[(m + 1) % 8, pop[p, m]]
        for c in range(K):
            counts[c] = 0
        for m in range(M):
            counts[pop[p, m]] += 1
        ent = 0.0
        for c in range(K):
            ent += ent_terms[counts[c]]
        b = int(np.floor(ent * 4.0))
        if b < 0:
            b = 0
        if b > n_bins - 1:
            b = n_bins - 1
        f4 = log_ent[b]
        total = weights[0] * f1
        total += weights[1] * f2
        total += weights[2] * f3
        total += weights[3] * f4
        out[p] = total
    return out


def population_fitness_numpy(pop, slot_table, log_tri, log_pos, ent_terms, log_ent, weights):
    P, M = pop.shape
    K = slot_table.shape[1]
    f1 = np.zeros(P)
    for m in range(M):
        f1 += slot_table[m, pop[:, m]]
    f2 = np.zeros(P)
    for m in range(2, M):
        f2 += log_tri[pop[:, m - 2], pop[:, m - 1], pop[:, m]]
    f3 = np.zeros(P)
    for m in range(M):
        f3 += log_pos[(m + 1) % 8, pop[:, m]]
    counts = np.zeros((P, K), dtype=np.int64)
    rows = np.arange(P)
    for m in range(M):
        np.add.at(counts, (rows, pop[:, m]), 1)
    ent = np.zeros(P)
    for c in range(K):
        ent += ent_terms[counts[:, c]]
    bins = np.clip(np.floor(ent * 4.0).astype(np.int64), 0, log_ent.shape[0] - 1)
    f4 = log_ent[bins]
    total = weights[0] * f1
    total += weights[1] * f2
    total += weights[2] * f3
    total += weights[3] * f4
    return total


def population_fitness(pop, slot_table, log_tri, log_pos, ent_terms, log_ent, weights) -> np.ndarray:
    """Weighted four-term GA fitness of every row of ``pop`` (shape P x M).

    ``slot_table[m, c]`` holds the summed frame log-posterior of label c in
    slot m; ``ent_terms[k] = -(k/M) ln(k/M)``; entropy bins are 0.25 wide.
    """
    args = (np.ascontiguousarray(pop, dtype=np.int64),
            np.ascontiguousarray(slot_table, dtype=np.float64),
            np.ascontiguousarray(log_tri, dtype=np.float64),
            np.ascontiguousarray(log_pos, dtype=np.float64),
            np.ascontiguousarray(ent_terms, dtype=np.float64),
            np.ascontiguousarray(log_ent, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64))
    if USE_NUMBA:
        return population_fitness_numba(*args)
    return population_fitness_numpy(*args)
