"""Slow, independent reference implementations used as test oracles."""
from __future__ import annotations

import itertools

import numpy as np


def brute_force_path(log_prior, log_trans, log_emit):
    """Enumerate every path; among max-score paths take the lexicographically
    smallest when read from the last slot backwards."""
    M, K = log_emit.shape
    best_score, best_key, best_path = -np.inf, None, None
    for path in itertools.product(range(K), repeat=M):
        s = log_prior[path[0]] + log_emit[0, path[0]]
        for t in range(1, M):
            s = s + log_trans[path[t - 1], path[t]]
            s = s + log_emit[t, path[t]]
        key = path[::-1]
        if s > best_score or (s == best_score and (best_key is None or key < best_key)):
            best_score, best_key, best_path = s, key, path
    return np.array(best_path), float(best_score)


def random_hmm_instance(rng, K, M, dyadic=False):
    """Valid random tables. ``dyadic`` puts every log value on a 1/8 grid so
    sums are exact and many paths tie exactly."""
    if dyadic:
        grid = lambda *shape: -rng.integers(0, 4 * 8, size=shape) / 8.0  # noqa: E731
        return grid(K), grid(K, K), grid(M, K)
    prior = rng.dirichlet(np.ones(K))
    trans = rng.dirichlet(np.ones(K), size=K)
    if rng.random() < 0.3:
        # structural zeros, keeping one nonzero entry per row
        mask = rng.random((K, K)) < 0.3
        mask[np.arange(K), rng.integers(K, size=K)] = False
        trans = np.where(mask, 0.0, trans)
        trans /= trans.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        return np.log(prior), np.log(trans), np.log(rng.random((M, K)) + 1e-3)


def exhaustive_max(fitness_fn, alphabet, M):
    """Best fitness over all |alphabet|**M sequences."""
    best, arg = -np.inf, None
    for seq in itertools.product(alphabet, repeat=M):
        f = fitness_fn(np.array(seq))
        if f > best:
            best, arg = f, seq
    return best, np.array(arg)


def central_difference(f, params, eps=1e-5):
    """Finite-difference gradient of scalar ``f(params)`` for every array in ``params``."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            fp = f(params)
            arr[idx] = orig - eps
            fm = f(params)
            arr[idx] = orig
            g[idx] = (fp - fm) / (2 * eps)
        grads[name] = g
    return grads


def relative_error(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    denom = max(na, nb)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def brute_force_path_vectorized(log_prior, log_trans, log_emit):
    """Same oracle as :func:`brute_force_path`, enumerating all paths as arrays.

    Additions happen in the same left-to-right order, so scores are bit-equal.
    """
    M, K = log_emit.shape
    paths = np.stack(np.unravel_index(np.arange(K ** M), (K,) * M), axis=1)
    s = log_prior[paths[:, 0]] + log_emit[0, paths[:, 0]]
    for t in range(1, M):
        s = s + log_trans[paths[:, t - 1], paths[:, t]]
        s = s + log_emit[t, paths[:, t]]
    best = s.max()
    winners = paths[s == best]
    # lexsort uses the last key as primary: keys in slot order make slot M-1 primary
    order = np.lexsort(tuple(winners[:, t] for t in range(M)))
    return winners[order[0]], float(best)
