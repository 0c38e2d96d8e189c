"""Synthetic lead-sheet corpora for tests and desk-scale experiments.

Progressions walk a function-plausible bigram graph over the diatonic triads
of C major or c minor; melodies are drawn per half bar with mostly chord tones
and stepwise motion.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .core import ChordLabel, KeyMode, LeadSheet, Note, Quality, encode_chord
from .preprocess import RawChord, RawLeadSheet

M, m, d, A = Quality.MAJOR, Quality.MINOR, Quality.DIMINISHED, Quality.AUGMENTED

# I ii iii IV V vi vii°
DIATONIC_MAJOR = tuple(encode_chord(ChordLabel(r, q)) for r, q in
                       ((0, M), (2, m), (4, m), (5, M), (7, M), (9, m), (11, d)))
# i ii° III iv V VI VII
DIATONIC_MINOR = tuple(encode_chord(ChordLabel(r, q)) for r, q in
                       ((0, m), (2, d), (3, M), (5, m), (7, M), (8, M), (10, M)))

SCALE_MAJOR = (0, 2, 4, 5, 7, 9, 11)
SCALE_MINOR = (0, 2, 3, 5, 7, 8, 10)

# successor weights by scale degree (0-based), shared by both modes
_DEGREE_BIGRAM = np.array([
    #  I    ii   iii  IV   V    vi   vii
    [0.5, 1.0, 0.5, 2.5, 2.5, 2.0, 0.3],  # I
    [0.3, 0.3, 0.1, 0.5, 3.0, 0.2, 0.8],  # ii
    [0.3, 0.3, 0.2, 1.5, 0.4, 2.0, 0.1],  # iii
    [1.8, 0.7, 0.2, 0.3, 2.5, 0.5, 0.4],  # IV
    [3.5, 0.2, 0.3, 0.6, 0.3, 1.5, 0.2],  # V
    [0.6, 1.6, 0.4, 2.0, 1.0, 0.2, 0.2],  # vi
    [2.5, 0.1, 0.6, 0.1, 0.4, 0.3, 0.1],  # vii°
])
_DEGREE_BIGRAM = _DEGREE_BIGRAM / _DEGREE_BIGRAM.sum(axis=1, keepdims=True)

# half-bar rhythms in 16th-note ticks (each sums to 8)
_RHYTHMS = ((8,), (4, 4), (4, 4), (2, 2, 4), (4, 2, 2), (2, 2, 2, 2), (6, 2), (3, 1, 4), (2, 2, 2, 2), (4, 2, 2))
_BAR_CHOICES = (4, 4, 8, 8, 8, 8, 12, 16)


def _progression(rng: np.random.Generator, n_bars: int) -> list[int]:
    """Degree per half bar; changes at bar lines, sometimes mid-bar; ends V->I."""
    degrees = []
    cur = 0
    for bar in range(n_bars):
        if bar > 0:
            cur = int(rng.choice(7, p=_DEGREE_BIGRAM[cur]))
        first = cur
        if bar == n_bars - 1:
            first, second = (4, 0) if rng.random() < 0.7 else (cur, cur)
        elif rng.random() < 0.3:
            second = int(rng.choice(7, p=_DEGREE_BIGRAM[cur]))
            cur = second
        else:
            second = first
        degrees.extend((first, second))
    return degrees


def _melody_for(rng: np.random.Generator, slot_chords: list[int], scale, chord_tone_p: float) -> list[Note]:
    from .core import decode_chord

    notes: list[Note] = []
    prev = 67
    for slot, chord in enumerate(slot_chords):
        tones = sorted(decode_chord(chord).pitch_classes())
        others = [pc for pc in scale if pc not in tones]
        tick = slot * 8
        for dur in _RHYTHMS[int(rng.integers(len(_RHYTHMS)))]:
            if rng.random() < 0.06:
                notes.append(Note(None, Fraction(tick, 4), Fraction(dur, 4)))
                tick += dur
                continue
            pcs = tones if rng.random() < chord_tone_p else others
            candidates = [12 * octv + pc for pc in pcs for octv in range(5, 7) if 60 <= 12 * octv + pc <= 84]
            dist = np.array([abs(c - prev) for c in candidates], dtype=float)
            weights = np.exp(-dist / 3.0)
            pitch = candidates[int(rng.choice(len(candidates), p=weights / weights.sum()))]
            notes.append(Note(pitch, Fraction(tick, 4), Fraction(dur, 4)))
            prev = pitch
            tick += dur
    return notes


def _song_sheets(rng: np.random.Generator, song_index: int, count: int, id_prefix: str) -> list[LeadSheet]:
    minor = rng.random() < 0.4
    diatonic = DIATONIC_MINOR if minor else DIATONIC_MAJOR
    scale = SCALE_MINOR if minor else SCALE_MAJOR
    song_id = f"{id_prefix}song{song_index:05d}"
    sheets = []
    chord_tone_p = float(rng.uniform(0.7, 0.9))
    for section in range(count):
        n_bars = int(rng.choice(_BAR_CHOICES))
        chords = [diatonic[k] for k in _progression(rng, n_bars)]
        melody = _melody_for(rng, chords, scale, chord_tone_p)
        sheets.append(LeadSheet(f"{song_id}_{section}", song_id,
                                KeyMode.C_MINOR if minor else KeyMode.C_MAJOR, n_bars, tuple(melody), tuple(chords)))
    return sheets


def generate_synthetic_corpus(n: int, seed: int = 0, id_prefix: str = "") -> list[LeadSheet]:
    """``n`` valid lead sheets in C major / c minor, deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    out: list[LeadSheet] = []
    song = 0
    while len(out) < n:
        count = min(int(rng.integers(1, 4)), n - len(out))
        out.extend(_song_sheets(rng, song, count, id_prefix))
        song += 1
    return out


_MAJOR_DRESS = ("maj", "maj", "maj7", "7", "6", "add9", "sus4", "sus2")
_MINOR_DRESS = ("min", "m", "m7", "min7", "m9")
_DIM_DRESS = ("dim", "ø7", "m7b5", "dim7")
_ROMAN = ("I", "II", "III", "IV", "V", "VI", "VII")


def _dress(rng: np.random.Generator, label: ChordLabel, degree_index: int | None) -> tuple[str, str | None]:
    if label.quality is Quality.MAJOR:
        q = str(rng.choice(_MAJOR_DRESS))
    elif label.quality is Quality.MINOR:
        q = str(rng.choice(_MINOR_DRESS + ("sus4",)))
    elif label.quality is Quality.DIMINISHED:
        q = str(rng.choice(_DIM_DRESS))
    else:
        q = "aug"
    degree = None
    if degree_index is not None:
        numeral = _ROMAN[degree_index]
        degree = numeral if label.quality is Quality.MAJOR else numeral.lower()
        if q.startswith("sus"):
            degree += q
    return q, degree


def generate_synthetic_raw_corpus(n: int, seed: int = 0) -> list[RawLeadSheet]:
    """Raw sheets in random keys with extended chord symbols.

    Roughly one sheet in ten is rest-heavy and one in ten has an out-of-range
    length, so the filters have something to drop.
    """
    from .core import decode_chord

    rng = np.random.default_rng(seed)
    base = generate_synthetic_corpus(n, seed=int(rng.integers(2**31)), id_prefix="raw")
    out = []
    for sheet in base:
        tonic = int(rng.integers(12))
        mode = "major" if sheet.key_mode is KeyMode.C_MAJOR else "minor"
        diatonic = DIATONIC_MAJOR if mode == "major" else DIATONIC_MINOR
        melody = list(sheet.melody)
        n_bars = sheet.num_bars
        chords_slots = list(sheet.chords)
        roll = rng.random()
        if roll < 0.1:
            keep = [nt for i, nt in enumerate(melody) if i % 3 == 0]
            melody = keep
        elif roll < 0.2:
            n_bars = int(rng.choice([2, 3, 33, 36]))
            reps = (2 * n_bars + len(chords_slots) - 1) // len(chords_slots)
            chords_slots = (chords_slots * reps)[: 2 * n_bars]
            period = 4 * sheet.num_bars
            melody = [Note(nt.pitch, nt.onset + period * r, nt.duration) for r in range(reps)
                      for nt in sheet.melody if nt.onset + period * r + nt.duration <= 4 * n_bars]
        # merge repeated half-bar labels into longer spans
        spans: list[list] = []
        for slot, c in enumerate(chords_slots):
            if spans and spans[-1][0] == c:
                spans[-1][2] += 2
            else:
                spans.append([c, Fraction(2 * slot), Fraction(2)])
        raw_chords = []
        for c, onset, dur in spans:
            label = decode_chord(c)
            if label.root is None:
                continue
            q, degree = _dress(rng, label, diatonic.index(c) if c in diatonic else None)
            raw_chords.append(RawChord((label.root + tonic) % 12, q, onset, dur,
                                       extensions=("9",) if rng.random() < 0.05 else (),
                                       inversion=int(rng.integers(3)) if rng.random() < 0.1 else None,
                                       degree=degree))
        shifted = [Note(None if nt.pitch is None else nt.pitch + tonic - (12 if tonic > 6 else 0), nt.onset, nt.duration)
                   for nt in melody]
        out.append(RawLeadSheet(sheet.id, sheet.song_id, tonic, mode, n_bars, tuple(shifted), tuple(raw_chords)))
    return out
