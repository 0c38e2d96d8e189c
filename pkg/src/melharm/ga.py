"""Genetic-algorithm harmonizer with a corpus-learned four-term fitness.

Fitness of a chord sequence Y for 16th-note melody features X:

* frame term: sum over sounding 16th frames of log P(chord of the frame | x)
* trigram term: sum over m >= 3 of log P(y_m | y_{m-2}, y_{m-1})
* position term: sum over m of log P(y_m | m mod 8), m counted from 1
* entropy term: log P(bin of the label-frequency entropy of Y), bins 0.25 wide

Terms are accumulated left to right in that order and weighted.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import NUM_CHORDS, LeadSheet, Resolution, melody_pcp_matrix
from .hmm import VARIANCE_FLOOR, DiagGaussians, fit_diag_gaussians
from .kernels import population_fitness

ENTROPY_BIN_WIDTH = 0.25
N_ENTROPY_BINS = int(math.ceil(math.log(NUM_CHORDS) / ENTROPY_BIN_WIDTH))  # 16
FRAMES_PER_SLOT = 8


def sequence_entropy(Y: Sequence[int]) -> float:
    """Natural-log entropy of the label histogram of ``Y`` (labels summed in index order)."""
    Y = np.asarray(Y, dtype=np.int64)
    terms = entropy_terms(len(Y))
    counts = np.bincount(Y, minlength=NUM_CHORDS)
    ent = 0.0
    for c in range(NUM_CHORDS):
        ent += terms[counts[c]]
    return ent


def entropy_terms(M: int) -> np.ndarray:
    """``-(k/M) ln(k/M)`` for k = 0..M (0 at k = 0)."""
    k = np.arange(M + 1, dtype=float)
    p = k / M
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -p * np.log(p)
    out[0] = 0.0
    return out


def entropy_bin(E: float) -> int:
    return int(min(max(math.floor(E * 4.0), 0), N_ENTROPY_BINS - 1))


@dataclass(frozen=True)
class GaTables:
    means: np.ndarray  # frame Gaussians, (49, 12)
    variances: np.ndarray
    frame_prior: np.ndarray  # (49,)
    trigram: np.ndarray  # (49, 49, 49): trigram[a, b, c] = P(c | a, b)
    position: np.ndarray  # (8, 49): position[pos, c] = P(c | pos)
    entropy_hist: np.ndarray  # (16,)
    ngram_counts: dict | None = field(default=None, compare=False)

    def frame_log_posterior(self, X: np.ndarray) -> np.ndarray:
        """log P(y | x) for each row of ``X``: (N, 49)."""
        logp = DiagGaussians(self.means, self.variances, None).log_density(X) + np.log(self.frame_prior)[None, :]
        mx = logp.max(axis=1, keepdims=True)
        return logp - (mx + np.log(np.exp(logp - mx).sum(axis=1, keepdims=True)))

    def slot_table(self, X16: np.ndarray) -> np.ndarray:
        """Per-slot summed frame log-posteriors, skipping silent frames: (M, 49)."""
        X16 = np.asarray(X16, dtype=float)
        if X16.shape[0] % FRAMES_PER_SLOT:
            raise ValueError(f"{X16.shape[0]} frames is not a multiple of {FRAMES_PER_SLOT}")
        M = X16.shape[0] // FRAMES_PER_SLOT
        out = np.zeros((M, NUM_CHORDS))
        sounding = X16.sum(axis=1) > 0
        if sounding.any():
            post = self.frame_log_posterior(X16[sounding])
            frames = np.flatnonzero(sounding)
            for row, n in enumerate(frames):
                out[n // FRAMES_PER_SLOT] += post[row]
        return out

    def log_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.log(self.trigram), np.log(self.position), np.log(self.entropy_hist)

    def to_dict(self) -> dict:
        d = {"type": "ga_tables", "means": self.means.tolist(), "variances": self.variances.tolist(),
             "frame_prior": self.frame_prior.tolist(), "position": self.position.tolist(),
             "entropy_hist": self.entropy_hist.tolist()}
        if self.ngram_counts is not None:
            d["ngram_counts"] = self.ngram_counts
        else:
            d["trigram"] = self.trigram.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaTables":
        counts = d.get("ngram_counts")
        if counts is not None:
            tri = np.zeros((NUM_CHORDS,) * 3, dtype=np.int64)
            for a, b, c, n in counts["trigram"]:
                tri[a, b, c] = n
            bi = np.zeros((NUM_CHORDS,) * 2, dtype=np.int64)
            for b, c, n in counts["bigram"]:
                bi[b, c] = n
            trigram = backoff_trigram(tri, bi, np.asarray(counts["unigram"], dtype=np.int64))
        else:
            trigram = np.asarray(d["trigram"], dtype=float)
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["variances"], dtype=float),
                   np.asarray(d["frame_prior"], dtype=float), trigram, np.asarray(d["position"], dtype=float),
                   np.asarray(d["entropy_hist"], dtype=float), counts)


def backoff_trigram(tri: np.ndarray, bi: np.ndarray, uni: np.ndarray) -> np.ndarray:
    """Add-one trigram; contexts never seen back off to add-one bigram, then unigram."""
    K = NUM_CHORDS
    p_uni = (uni + 1.0) / (uni.sum() + K)
    bi_ctx = bi.sum(axis=1)
    p_bi = np.where(bi_ctx[:, None] > 0, (bi + 1.0) / (bi_ctx[:, None] + K), p_uni[None, :])
    tri_ctx = tri.sum(axis=2)
    return np.where(tri_ctx[:, :, None] > 0, (tri + 1.0) / (tri_ctx[:, :, None] + K), p_bi[None, :, :])


def fit_tables(train: Sequence[LeadSheet], variance_floor: float = VARIANCE_FLOOR) -> GaTables:
    if not train:
        raise ValueError("cannot fit GA tables on an empty corpus")
    K = NUM_CHORDS
    uni = np.zeros(K, dtype=np.int64)
    bi = np.zeros((K, K), dtype=np.int64)
    tri = np.zeros((K, K, K), dtype=np.int64)
    pos = np.zeros((8, K), dtype=np.int64)
    ent = np.zeros(N_ENTROPY_BINS, dtype=np.int64)
    frames_x, frames_y = [], []
    for sheet in train:
        Y = sheet.chord_array()
        np.add.at(uni, Y, 1)
        if Y.size > 1:
            np.add.at(bi, (Y[:-1], Y[1:]), 1)
        if Y.size > 2:
            np.add.at(tri, (Y[:-2], Y[1:-1], Y[2:]), 1)
        np.add.at(pos, ((np.arange(Y.size) + 1) % 8, Y), 1)
        ent[entropy_bin(sequence_entropy(Y))] += 1
        X16 = melody_pcp_matrix(sheet, Resolution.SIXTEENTH)
        sounding = X16.sum(axis=1) > 0
        frames_x.append(X16[sounding])
        frames_y.append(np.repeat(Y, FRAMES_PER_SLOT)[sounding])
    gauss = fit_diag_gaussians(np.concatenate(frames_x), np.concatenate(frames_y), variance_floor)
    counts = {
        "unigram": uni.tolist(),
        "bigram": [[int(b), int(c), int(bi[b, c])] for b, c in zip(*np.nonzero(bi))],
        "trigram": [[int(a), int(b), int(c), int(tri[a, b, c])] for a, b, c in zip(*np.nonzero(tri))],
    }
    return GaTables(
        means=gauss.means,
        variances=gauss.variances,
        frame_prior=(uni + 1.0) / (uni.sum() + K),
        trigram=backoff_trigram(tri, bi, uni),
        position=(pos + 1.0) / (pos.sum(axis=1, keepdims=True) + K),
        entropy_hist=(ent + 1.0) / (ent.sum() + N_ENTROPY_BINS),
        ngram_counts=counts,
    )


def fitness_terms(Y: Sequence[int], X16: np.ndarray, tables: GaTables) -> tuple[float, float, float, float]:
    """The four unweighted terms for a single sequence (scalar reference path)."""
    Y = [int(y) for y in Y]
    X16 = np.asarray(X16, dtype=float)
    if X16.shape[0] != FRAMES_PER_SLOT * len(Y):
        raise ValueError(f"expected {FRAMES_PER_SLOT * len(Y)} frames for {len(Y)} chords, got {X16.shape[0]}")
    table = tables.slot_table(X16)
    log_tri, log_pos, log_ent = tables.log_arrays()
    f1 = 0.0
    for m, y in enumerate(Y):
        f1 += table[m, y]
    f2 = 0.0
    for m in range(2, len(Y)):
        f2 += log_tri[Y[m - 2], Y[m - 1], Y[m]]
    f3 = 0.0
    for m, y in enumerate(Y):
        f3 += log_pos[(m + 1) % 8, y]
    f4 = log_ent[entropy_bin(sequence_entropy(Y))]
    return float(f1), float(f2), float(f3), float(f4)


def fitness(Y: Sequence[int], X16: np.ndarray, tables: GaTables, weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0)) -> float:
    f = fitness_terms(Y, X16, tables)
    total = weights[0] * f[0]
    total += weights[1] * f[1]
    total += weights[2] * f[2]
    total += weights[3] * f[3]
    return total


@dataclass
class GaConfig:
    population: int = 100
    generations: int = 500
    tournament_k: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # None -> 1/M
    elitism: int = 1
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    seed: int = 0
    alphabet: tuple[int, ...] | None = None  # restrict candidate labels; None = all 49

    def __post_init__(self):
        self.weights = tuple(float(w) for w in self.weights)
        if self.alphabet is not None:
            self.alphabet = tuple(int(a) for a in self.alphabet)
        self.validate()

    def validate(self) -> None:
        if not self.population >= self.elitism >= 1:
            raise ValueError("need population >= elitism >= 1")
        if self.tournament_k < 1 or self.generations < 0:
            raise ValueError("tournament_k must be >= 1 and generations >= 0")
        for rate in (self.crossover_rate, self.mutation_rate):
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        if len(self.weights) != 4:
            raise ValueError("exactly four weights")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights)
        d["alphabet"] = None if self.alphabet is None else list(self.alphabet)
        return d


@dataclass
class EvolveResult:
    best: np.ndarray
    best_fitness: float
    best_history: list[float]  # best-ever fitness after each generation (index 0 = initial population)
    generation_best: list[float]  # best fitness within each generation's population


class FitnessFunction:
    """Population fitness bound to one melody; wraps the backend kernel."""

    def __init__(self, X16: np.ndarray, tables: GaTables, weights: Sequence[float]):
        self.slot_table = tables.slot_table(X16)
        self.M = self.slot_table.shape[0]
        self.log_tri, self.log_pos, self.log_ent = tables.log_arrays()
        self.ent_terms = entropy_terms(self.M)
        self.weights = np.asarray(weights, dtype=float)

    def __call__(self, pop: np.ndarray) -> np.ndarray:
        return population_fitness(pop, self.slot_table, self.log_tri, self.log_pos, self.ent_terms,
                                  self.log_ent, self.weights)


def evolve(X16: np.ndarray, tables: GaTables, config: GaConfig, rng: np.random.Generator | None = None) -> EvolveResult:
    """Tournament selection, one-point crossover, per-gene mutation, elitism."""
    config.validate()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    fit = FitnessFunction(X16, tables, config.weights)
    M = fit.M
    alphabet = np.arange(NUM_CHORDS) if config.alphabet is None else np.asarray(config.alphabet, dtype=np.int64)
    P, E, k = config.population, config.elitism, config.tournament_k
    mut_rate = 1.0 / M if config.mutation_rate is None else config.mutation_rate

    pop = alphabet[rng.integers(alphabet.size, size=(P, M))]
    scores = fit(pop)
    top = int(np.argmax(scores))
    best, best_fit = pop[top].copy(), float(scores[top])
    history, gen_best = [best_fit], [best_fit]
    n_child = P - E
    for _ in range(config.generations):
        order = np.argsort(-scores, kind="stable")
        elites = pop[order[:E]]
        if n_child:
            cand = rng.integers(P, size=(2 * n_child, k))
            winners = cand[np.arange(2 * n_child), np.argmax(scores[cand], axis=1)]
            mothers, fathers = pop[winners[:n_child]], pop[winners[n_child:]]
            do_cross = rng.random(n_child) < config.crossover_rate
            cuts = rng.integers(1, M, size=n_child) if M > 1 else np.zeros(n_child, dtype=np.int64)
            take_father = (np.arange(M)[None, :] >= cuts[:, None]) & do_cross[:, None]
            children = np.where(take_father, fathers, mothers)
            mutate = rng.random((n_child, M)) < mut_rate
            genes = alphabet[rng.integers(alphabet.size, size=(n_child, M))]
            children = np.where(mutate, genes, children)
            pop = np.concatenate([elites, children])
        else:
            pop = elites
        scores = fit(pop)
        top = int(np.argmax(scores))
        gen_best.append(float(scores[top]))
        if scores[top] > best_fit:
            best, best_fit = pop[top].copy(), float(scores[top])
        history.append(best_fit)
    return EvolveResult(best, best_fit, history, gen_best)


@dataclass
class GaModel:
    tables: GaTables
    config: GaConfig = field(default_factory=GaConfig)

    name = "ga"

    def harmonize(self, sheet: LeadSheet, rng: np.random.Generator | None = None) -> np.ndarray:
        X16 = melody_pcp_matrix(sheet, Resolution.SIXTEENTH)
        return evolve(X16, self.tables, self.config, rng).best

    def to_dict(self) -> dict:
        return {"type": "ga", "config": self.config.to_dict(), "tables": self.tables.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GaModel":
        if d.get("type") != "ga":
            raise ValueError(f"not a ga checkpoint: type={d.get('type')!r}")
        cfg = dict(d["config"])
        return cls(GaTables.from_dict(d["tables"]), GaConfig(**cfg))
