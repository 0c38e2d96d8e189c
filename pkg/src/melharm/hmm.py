"""First-order HMM harmonizer with diagonal-Gaussian PCP emissions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CHORD_TEMPLATES, NUM_CHORDS, LeadSheet, melody_pcp_matrix
from .kernels import viterbi

DEFAULT_BETA = 0.08
VARIANCE_FLOOR = 1e-4
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DiagGaussians:
    """Per-label diagonal Gaussians over 12-d PCPs."""

    means: np.ndarray  # (49, 12)
    variances: np.ndarray  # (49, 12)
    counts: np.ndarray  # (49,) training occurrences

    def log_density(self, X: np.ndarray) -> np.ndarray:
        """Log density of each row of ``X`` (N, 12) under every label: (N, 49)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X[:, None, :] - self.means[None, :, :]
        quad = diff * diff / self.variances[None, :, :]
        return -0.5 * (np.log(self.variances)[None, :, :] + _LOG_2PI + quad).sum(axis=2)


def fit_diag_gaussians(X: np.ndarray, y: np.ndarray, floor: float = VARIANCE_FLOOR) -> DiagGaussians:
    """Mean and floored variance per label.

    Labels without training data get the L1-normalized chord template as mean
    and the average variance of the observed labels.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=NUM_CHORDS).astype(np.int64)
    means = np.zeros((NUM_CHORDS, 12))
    variances = np.zeros((NUM_CHORDS, 12))
    seen = np.flatnonzero(counts)
    for c in seen:
        rows = X[y == c]
        means[c] = rows.mean(axis=0)
        variances[c] = np.maximum(rows.var(axis=0), floor)
    fallback_var = variances[seen].mean(axis=0) if seen.size else np.full(12, 1.0)
    for c in np.flatnonzero(counts == 0):
        tpl = CHORD_TEMPLATES[c]
        means[c] = tpl / tpl.sum() if tpl.sum() > 0 else 0.0
        variances[c] = np.maximum(fallback_var, floor)
    return DiagGaussians(means, variances, counts)


def bigram_counts(sequences: Sequence[Sequence[int]]) -> np.ndarray:
    counts = np.zeros((NUM_CHORDS, NUM_CHORDS), dtype=np.int64)
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if seq.size > 1:
            np.add.at(counts, (seq[:-1], seq[1:]), 1)
    return counts


def raw_transitions(counts: np.ndarray) -> np.ndarray:
    """Row-normalized bigram counts; rows with no count are uniform."""
    totals = counts.sum(axis=1, keepdims=True)
    out = np.full(counts.shape, 1.0 / counts.shape[1])
    nz = totals[:, 0] > 0
    out[nz] = counts[nz] / totals[nz]
    return out


def smooth_transitions(raw: np.ndarray, prior: np.ndarray, beta: float) -> np.ndarray:
    return (1.0 - beta) * prior[None, :] + beta * raw


@dataclass(frozen=True)
class HmmModel:
    means: np.ndarray
    variances: np.ndarray
    transitions: np.ndarray
    priors: np.ndarray
    beta: float = DEFAULT_BETA

    name = "hmm"

    @property
    def gaussians(self) -> DiagGaussians:
        return DiagGaussians(self.means, self.variances, np.zeros(NUM_CHORDS, dtype=np.int64))

    def emission_logp(self, label: int, pcp: np.ndarray) -> float:
        return float(self.gaussians.log_density(pcp)[0, label])

    def log_emissions(self, pcps: np.ndarray) -> np.ndarray:
        return self.gaussians.log_density(pcps)

    def decode_pcps(self, pcps: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
            log_trans = np.log(self.transitions)
        path, _ = viterbi(log_prior, log_trans, self.log_emissions(pcps))
        return path

    def harmonize(self, sheet: LeadSheet, rng=None) -> np.ndarray:
        return self.decode_pcps(melody_pcp_matrix(sheet))

    def to_dict(self) -> dict:
        return {"type": "hmm", "beta": self.beta, "means": self.means.tolist(),
                "variances": self.variances.tolist(), "transitions": self.transitions.tolist(),
                "priors": self.priors.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HmmModel":
        if d.get("type") != "hmm":
            raise ValueError(f"not an hmm checkpoint: type={d.get('type')!r}")
        model = cls(np.array(d["means"], dtype=float), np.array(d["variances"], dtype=float),
                    np.array(d["transitions"], dtype=float), np.array(d["priors"], dtype=float), float(d["beta"]))
        model.check()
        return model

    def check(self) -> None:
        if self.means.shape != (NUM_CHORDS, 12) or self.variances.shape != (NUM_CHORDS, 12):
            raise ValueError("means/variances must be 49 x 12")
        if self.transitions.shape != (NUM_CHORDS, NUM_CHORDS) or self.priors.shape != (NUM_CHORDS,):
            raise ValueError("transitions must be 49 x 49 and priors length 49")
        if (self.variances <= 0).any():
            raise ValueError("non-positive variance")
        if np.abs(self.transitions.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("transition rows do not sum to 1")
        if abs(self.priors.sum() - 1.0) > 1e-9:
            raise ValueError("priors do not sum to 1")


def training_arrays(sheets: Sequence[LeadSheet]) -> tuple[np.ndarray, np.ndarray]:
    X = np.concatenate([melody_pcp_matrix(s) for s in sheets])
    y = np.concatenate([s.chord_array() for s in sheets])
    return X, y


def fit_hmm(train: Sequence[LeadSheet], beta: float = DEFAULT_BETA, variance_floor: float = VARIANCE_FLOOR) -> HmmModel:
    if not train:
        raise ValueError("cannot fit an HMM on an empty corpus")
    X, y = training_arrays(train)
    gauss = fit_diag_gaussians(X, y, variance_floor)
    priors = gauss.counts / gauss.counts.sum()
    raw = raw_transitions(bigram_counts([s.chords for s in train]))
    return HmmModel(gauss.means, gauss.variances, smooth_transitions(raw, priors, beta), priors, float(beta))
