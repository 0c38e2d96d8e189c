"""Per-half-bar template matching against binary triad PCPs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CHORD_TEMPLATES, NO_CHORD, LeadSheet, melody_pcp_matrix

_TRIAD_TEMPLATES = CHORD_TEMPLATES[1:]


def template_scores(pcp: np.ndarray) -> np.ndarray:
    """Dot-product score of ``pcp`` against every triad (index 0 = chord 1)."""
    return _TRIAD_TEMPLATES @ np.asarray(pcp, dtype=float)


def tie_set(pcp: np.ndarray) -> np.ndarray:
    """Chord indices whose templates attain the maximal score; empty for silence."""
    pcp = np.asarray(pcp, dtype=float)
    if not pcp.any():
        return np.empty(0, dtype=np.int64)
    scores = template_scores(pcp)
    return np.flatnonzero(scores == scores.max()) + 1


def match_half_bar(pcp: np.ndarray, rng: np.random.Generator) -> int:
    ties = tie_set(pcp)
    if ties.size == 0:
        return NO_CHORD
    if ties.size == 1:
        return int(ties[0])
    return int(ties[rng.integers(ties.size)])


@dataclass(frozen=True)
class TemplateMatcherModel:
    rng_seed: int = 0

    name = "template"

    def harmonize_pcps(self, pcps: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = np.random.default_rng(self.rng_seed) if rng is None else rng
        return np.array([match_half_bar(x, rng) for x in pcps], dtype=np.int64)

    def harmonize(self, sheet: LeadSheet, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.harmonize_pcps(melody_pcp_matrix(sheet), rng)

    def to_dict(self) -> dict:
        return {"type": "template", "seed": self.rng_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateMatcherModel":
        if d.get("type") != "template":
            raise ValueError(f"not a template checkpoint: type={d.get('type')!r}")
        return cls(int(d["seed"]))
