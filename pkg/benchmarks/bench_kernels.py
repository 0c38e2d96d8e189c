"""Time the numba and numpy implementations of the hot kernels side by side.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--population 100] [--slots 32]

Both backends are called directly, so the ``MELHARM_BACKEND`` flag does not
matter here. The first numba call (compilation or cache load) is excluded.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from melharm.core import NUM_CHORDS
from melharm.ga import N_ENTROPY_BINS, entropy_terms
from melharm.kernels import population_fitness_numba, population_fitness_numpy, viterbi_numba, viterbi_numpy


def best_time(fn, args, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def viterbi_args(rng, slots):
    K = NUM_CHORDS
    return (np.log(rng.dirichlet(np.ones(K))), np.log(rng.dirichlet(np.ones(K), size=K)),
            rng.normal(-10, 3, size=(slots, K)))


def fitness_args(rng, population, slots):
    K = NUM_CHORDS
    return (rng.integers(K, size=(population, slots)), rng.normal(-20, 5, size=(slots, K)),
            np.log(rng.dirichlet(np.ones(K), size=(K, K))), np.log(rng.dirichlet(np.ones(K), size=8)),
            entropy_terms(slots), np.log(rng.dirichlet(np.ones(N_ENTROPY_BINS))), np.ones(4))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--population", type=int, default=100)
    parser.add_argument("--slots", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)

    cases = [
        ("viterbi", viterbi_numba, viterbi_numpy, viterbi_args(rng, args.slots)),
        ("ga fitness", population_fitness_numba, population_fitness_numpy,
         fitness_args(rng, args.population, args.slots)),
    ]
    print(f"{'kernel':<12}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}  identical")
    for name, fast, slow, call_args in cases:
        t0 = time.perf_counter()
        out_fast = fast(*call_args)
        warmup = time.perf_counter() - t0
        out_slow = slow(*call_args)
        if name == "viterbi":
            same = out_fast[0].tolist() == out_slow[0].tolist() and float(out_fast[1]) == out_slow[1]
        else:
            same = out_fast.tobytes() == out_slow.tobytes()
        t_fast = best_time(fast, call_args, args.repeat)
        t_slow = best_time(slow, call_args, args.repeat)
        print(f"{name:<12}{t_fast * 1e3:>12.3f}{t_slow * 1e3:>12.3f}{t_slow / t_fast:>9.1f}x  {same}"
              f"   (first numba call {warmup * 1e3:.0f} ms)")
    # one GA harmonization runs roughly population * (generations + 1) fitness evaluations
    per_gen = best_time(population_fitness_numba, cases[1][3], args.repeat)
    print(f"estimated GA run at 500 generations: {per_gen * 501:.2f}s (numba), "
          f"{best_time(population_fitness_numpy, cases[1][3], args.repeat) * 501:.2f}s (numpy)")


if __name__ == "__main__":
    main()
