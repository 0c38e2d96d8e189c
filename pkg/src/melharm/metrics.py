"""Objective harmonization metrics.

Chord-progression metrics (CHE, CC, CTD) look at the chord sequence alone;
harmonicity metrics (CTnCTR, PCS, MCTD) relate it to the melody. N.C. counts
as a label for CHE/CC but carries no pitch content, so it is skipped by the
others. Undefined values are returned as ``None``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    CHORD_TEMPLATES,
    HALF_BAR_TICKS,
    NO_CHORD,
    NUM_CHORDS,
    LeadSheet,
    decode_chord,
    note_ticks,
    sounding_pitch_per_tick,
)

METRIC_NAMES = ("CHE", "CC", "CTD", "CTnCTR", "PCS", "MCTD", "accuracy")


def _tonal_matrix() -> np.ndarray:
    k = np.arange(12)
    return np.vstack([
        np.sin(k * 7 * np.pi / 6), np.cos(k * 7 * np.pi / 6),
        np.sin(k * 3 * np.pi / 2), np.cos(k * 3 * np.pi / 2),
        0.5 * np.sin(k * 2 * np.pi / 3), 0.5 * np.cos(k * 2 * np.pi / 3),
    ])


TONAL_MATRIX = _tonal_matrix()


def tonal_centroid(pcp: np.ndarray) -> np.ndarray:
    pcp = np.asarray(pcp, dtype=float)
    total = np.abs(pcp).sum()
    if total == 0:
        raise ValueError("the zero PCP has no tonal centroid")
    return TONAL_MATRIX @ (pcp / total)


def tonal_distance(pcp_a: np.ndarray, pcp_b: np.ndarray) -> float:
    return float(np.linalg.norm(tonal_centroid(pcp_a) - tonal_centroid(pcp_b)))


# chord-to-chord and pitch-class-to-chord distance lookup tables
_CHORD_CENTROIDS = np.zeros((NUM_CHORDS, 6))
_CHORD_CENTROIDS[1:] = [tonal_centroid(t) for t in CHORD_TEMPLATES[1:]]
_PC_CENTROIDS = np.array([tonal_centroid(np.eye(12)[k]) for k in range(12)])


def chord_distance(a: int, b: int) -> float:
    if a == NO_CHORD or b == NO_CHORD:
        raise ValueError("tonal distance is undefined for N.C.")
    return float(np.linalg.norm(_CHORD_CENTROIDS[a] - _CHORD_CENTROIDS[b]))


def note_chord_distance(pitch_class: int, chord: int) -> float:
    if chord == NO_CHORD:
        raise ValueError("tonal distance is undefined for N.C.")
    return float(np.linalg.norm(_PC_CENTROIDS[pitch_class % 12] - _CHORD_CENTROIDS[chord]))


# -- chord progression metrics ----------------------------------------------------------

def che(Y: Sequence[int]) -> float:
    counts = np.bincount(np.asarray(Y, dtype=np.int64), minlength=NUM_CHORDS)
    if counts.sum() == 0:
        raise ValueError("empty chord sequence")
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def cc(Y: Sequence[int]) -> int:
    if len(Y) == 0:
        raise ValueError("empty chord sequence")
    return len(set(int(y) for y in Y))


def ctd(Y: Sequence[int]) -> float | None:
    """Mean tonal distance of adjacent chord pairs, skipping pairs touching N.C."""
    if len(Y) < 2:
        raise ValueError("CTD needs at least two chords")
    dists = [chord_distance(a, b) for a, b in zip(Y[:-1], Y[1:]) if a != NO_CHORD and b != NO_CHORD]
    return float(np.mean(dists)) if dists else None


# -- harmonicity metrics -----------------------------------------------------------------

def _slot_of_tick(tick: int) -> int:
    return tick // HALF_BAR_TICKS


def ctnctr(sheet: LeadSheet, Y: Sequence[int]) -> float:
    """(chord tones + proper non-chord tones) / (chord tones + non-chord tones).

    A non-chord tone is proper when the next sounding melody note is within
    two semitones. Notes whose onset falls in an N.C. half bar are ignored.
    """
    notes = [n for n in sheet.melody if n.pitch is not None]
    n_c = n_n = n_p = 0
    for k, note in enumerate(notes):
        chord = int(Y[_slot_of_tick(note_ticks(note)[0])])
        if chord == NO_CHORD:
            continue
        if note.pitch % 12 in decode_chord(chord).pitch_classes():
            n_c += 1
            continue
        n_n += 1
        if k + 1 < len(notes) and abs(notes[k + 1].pitch - note.pitch) <= 2:
            n_p += 1
    if n_c + n_n == 0:
        return 1.0
    return (n_c + n_p) / (n_c + n_n)


_CONSONANCE = np.full(12, -1.0)
_CONSONANCE[[0, 3, 4, 7, 8, 9]] = 1.0
_CONSONANCE[5] = 0.0


def consonance(melody_pc: int, chord_pc: int) -> float:
    return float(_CONSONANCE[(melody_pc - chord_pc) % 12])


def pcs(sheet: LeadSheet, Y: Sequence[int]) -> float | None:
    """Mean over sounding 16th-note windows of the mean consonance with the 3 chord tones."""
    pitches = sounding_pitch_per_tick(sheet)
    total = 0.0
    windows = 0
    for tick, pitch in enumerate(pitches):
        if pitch < 0:
            continue
        chord = int(Y[_slot_of_tick(tick)])
        if chord == NO_CHORD:
            continue
        tones = decode_chord(chord).pitch_classes()
        total += sum(consonance(pitch % 12, t) for t in tones) / 3.0
        windows += 1
    return total / windows if windows else None


def mctd(sheet: LeadSheet, Y: Sequence[int]) -> float | None:
    """Duration-weighted tonal distance between each note and its chord.

    A note spanning several half bars contributes one weighted term per chord
    it sounds against.
    """
    num = 0.0
    den = 0
    for note in sheet.melody:
        if note.pitch is None:
            continue
        start, end = note_ticks(note)
        t = start
        while t < end:
            slot = _slot_of_tick(t)
            seg_end = min(end, (slot + 1) * HALF_BAR_TICKS)
            chord = int(Y[slot])
            if chord != NO_CHORD:
                num += (seg_end - t) * note_chord_distance(note.pitch, chord)
                den += seg_end - t
            t = seg_end
    return num / den if den else None


def chord_accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} vs {len(truth)}")
    if len(truth) == 0:
        raise ValueError("empty sequences")
    return float(np.mean(np.asarray(predicted) == np.asarray(truth)))


# -- reports ------------------------------------------------------------------------------

def sheet_metrics(sheet: LeadSheet, Y: Sequence[int], truth: Sequence[int] | None = None) -> dict[str, float | None]:
    Y = [int(y) for y in Y]
    if len(Y) != sheet.num_slots:
        raise ValueError(f"{sheet.id}: {len(Y)} chords for {sheet.num_slots} half bars")
    truth = sheet.chords if truth is None else truth
    return {
        "CHE": che(Y),
        "CC": float(cc(Y)),
        "CTD": ctd(Y),
        "CTnCTR": ctnctr(sheet, Y),
        "PCS": pcs(sheet, Y),
        "MCTD": mctd(sheet, Y),
        "accuracy": chord_accuracy(Y, truth),
    }


@dataclass
class MetricReport:
    ids: list[str] = field(default_factory=list)
    rows: list[dict[str, float | None]] = field(default_factory=list)

    def add(self, sheet_id: str, values: dict[str, float | None]) -> None:
        self.ids.append(sheet_id)
        self.rows.append(values)

    def means(self) -> dict[str, float | None]:
        """Mean over sheets with a defined value; ``fsum`` makes it independent of row order."""
        out = {}
        for name in METRIC_NAMES:
            values = [row[name] for row in self.rows if row.get(name) is not None]
            out[name] = math.fsum(values) / len(values) if values else None
        return out

    def skipped(self) -> dict[str, int]:
        return {name: sum(1 for row in self.rows if row.get(name) is None) for name in METRIC_NAMES}

    def to_csv(self) -> str:
        lines = [",".join(("id",) + METRIC_NAMES)]
        for sid, row in zip(self.ids, self.rows):
            lines.append(",".join([sid] + [_fmt(row.get(n)) for n in METRIC_NAMES]))
        means = self.means()
        lines.append(",".join(["MEAN"] + [_fmt(means[n]) for n in METRIC_NAMES]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "columns": ["id", *METRIC_NAMES],
            "rows": [{"id": sid, **{n: row.get(n) for n in METRIC_NAMES}} for sid, row in zip(self.ids, self.rows)],
            "mean": self.means(),
            "skipped": self.skipped(),
        }


def _fmt(v: float | None) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def evaluate_sequences(sheets: Sequence[LeadSheet], predictions: Sequence[Sequence[int]]) -> MetricReport:
    report = MetricReport()
    for sheet, Y in zip(sheets, predictions):
        report.add(sheet.id, sheet_metrics(sheet, Y))
    return report
