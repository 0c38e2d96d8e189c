"""Raw lead sheet -> C-major/c-minor triad corpus, plus song-aware splitting."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    BEATS_PER_BAR,
    NO_CHORD,
    ChordLabel,
    KeyMode,
    LeadSheet,
    Note,
    Quality,
    TICKS_PER_BEAT,
    as_fraction,
    decode_chord,
    encode_chord,
)
from .corpus import CorpusError, format_rational, parse_rational, read_records, write_json

REST_RATIO_LIMIT = Fraction(2, 5)
MIN_BARS = 4
MAX_BARS = 32

_MAJOR = ("", "M", "maj", "major", "Maj", "maj7", "M7", "Maj7", "7", "dom7", "6", "M6", "maj6", "69", "6/9",
          "add9", "add2", "add4", "add11", "9", "maj9", "M9", "11", "13", "maj11", "maj13", "7b9", "7#9",
          "7#11", "7b5", "9b5", "13b9", "alt", "7alt")
_MINOR = ("m", "min", "minor", "-", "m7", "min7", "-7", "m6", "min6", "m9", "min9", "m11", "min11", "m13",
          "madd9", "madd2", "mmaj7", "m(maj7)", "mM7", "minmaj7", "m69")
_DIM = ("dim", "o", "°", "dim7", "o7", "°7", "ø", "ø7", "m7b5", "min7b5", "hdim", "hdim7")
_AUG = ("aug", "+", "aug7", "+7", "7#5", "7+5", "augmaj7", "+maj7", "9#5")
_SUS = ("sus", "sus2", "sus4", "7sus4", "7sus2", "9sus4", "7sus", "sus24")

QUALITY_TABLE: dict[str, Quality | None] = {}
for _names, _q in ((_MAJOR, Quality.MAJOR), (_MINOR, Quality.MINOR), (_DIM, Quality.DIMINISHED),
                   (_AUG, Quality.AUGMENTED), (_SUS, None)):
    for _n in _names:
        QUALITY_TABLE[_n] = _q
_NO_CHORD_QUALITIES = ("N.C.", "NC", "N", "none")


class UnknownQualityError(ValueError):
    def __init__(self, quality: str):
        self.quality = quality
        super().__init__(f"unknown chord quality string {quality!r}")


@dataclass(frozen=True)
class RawChord:
    root: int | None
    quality: str
    onset: Fraction
    duration: Fraction
    extensions: tuple[str, ...] = ()
    inversion: int | None = None
    degree: str | None = None  # roman-numeral annotation relative to the key, e.g. "V", "ii", "IVsus4"

    def __post_init__(self):
        object.__setattr__(self, "onset", as_fraction(self.onset))
        object.__setattr__(self, "duration", as_fraction(self.duration))
        object.__setattr__(self, "extensions", tuple(self.extensions))

    @property
    def end(self) -> Fraction:
        return self.onset + self.duration


@dataclass(frozen=True)
class RawLeadSheet:
    id: str
    song_id: str
    tonic: int
    mode: str  # "major" | "minor"
    num_bars: int
    melody: tuple[Note, ...]
    chords: tuple[RawChord, ...]

    def __post_init__(self):
        if self.mode not in ("major", "minor"):
            raise ValueError(f"mode must be 'major' or 'minor', got {self.mode!r}")
        object.__setattr__(self, "tonic", int(self.tonic) % 12)
        object.__setattr__(self, "melody", tuple(sorted(self.melody, key=lambda n: n.onset)))
        object.__setattr__(self, "chords", tuple(sorted(self.chords, key=lambda c: c.onset)))

    @property
    def length_beats(self) -> int:
        return BEATS_PER_BAR * self.num_bars


# -- filters -----------------------------------------------------------------

def rest_ratio(sheet: RawLeadSheet) -> Fraction:
    """Fraction of the sheet's length during which no melody note sounds."""
    total = Fraction(sheet.length_beats)
    if total <= 0:
        return Fraction(1)
    intervals = sorted(
        (max(n.onset, Fraction(0)), min(n.end, total)) for n in sheet.melody if n.pitch is not None
    )
    sounding = Fraction(0)
    cur_lo = cur_hi = None
    for lo, hi in intervals:
        if hi <= lo:
            continue
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                sounding += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        sounding += cur_hi - cur_lo
    return (total - sounding) / total


def filter_rest_ratio(sheet: RawLeadSheet) -> bool:
    """True to keep: drop only when rests exceed 40% of the length."""
    return rest_ratio(sheet) <= REST_RATIO_LIMIT


def filter_length(sheet: RawLeadSheet) -> bool:
    return MIN_BARS <= sheet.num_bars <= MAX_BARS


# -- transposition -------------------------------------------------------------

def transposition_shift(tonic: int) -> int:
    """Semitone shift taking ``tonic`` to C, chosen in [-6, +5]."""
    shift = (-tonic) % 12
    return shift - 12 if shift > 5 else shift


def _shift_pitch(pitch: int, shift: int) -> int:
    p = pitch + shift
    while p < 0:
        p += 12
    while p > 127:
        p -= 12
    return p


def transpose_to_c(sheet: RawLeadSheet) -> RawLeadSheet:
    shift = transposition_shift(sheet.tonic)
    melody = tuple(
        Note(None if n.pitch is None else _shift_pitch(n.pitch, shift), n.onset, n.duration) for n in sheet.melody
    )
    chords = tuple(
        RawChord(None if c.root is None else (c.root + shift) % 12, c.quality, c.onset, c.duration,
                 c.extensions, c.inversion, c.degree)
        for c in sheet.chords
    )
    return RawLeadSheet(sheet.id, sheet.song_id, 0, sheet.mode, sheet.num_bars, melody, chords)


# -- chord reduction -------------------------------------------------------------

def _degree_is_major(degree: str | None) -> bool:
    if not degree:
        return True
    letters = [ch for ch in degree.lstrip("b#♭♯") if ch in "IViv"]
    if not letters:
        return True
    return letters[0].isupper()


def reduce_chord(raw: RawChord | None) -> int:
    """Map a raw chord symbol to its root-position triad index (0 for N.C.)."""
    if raw is None or raw.root is None or raw.quality in _NO_CHORD_QUALITIES:
        return NO_CHORD
    q = raw.quality.strip()
    if q not in QUALITY_TABLE:
        raise UnknownQualityError(raw.quality)
    quality = QUALITY_TABLE[q]
    if quality is None:
        quality = Quality.MAJOR if _degree_is_major(raw.degree) else Quality.MINOR
    return encode_chord(ChordLabel(int(raw.root) % 12, quality))


def quantize_harmonic_rhythm(chords: Sequence[tuple[int, Fraction, Fraction]], num_bars: int) -> list[int]:
    """Assign one label per half bar from ``(label, onset, duration)`` spans.

    Each half bar takes the label with the greatest total overlap; ties go to
    the label that starts sounding earlier inside the half bar. Half bars with
    no sounding chord get N.C.
    """
    half = Fraction(BEATS_PER_BAR, 2)
    out = []
    for slot in range(2 * num_bars):
        lo, hi = slot * half, (slot + 1) * half
        overlap: dict[int, Fraction] = {}
        first: dict[int, Fraction] = {}
        for label, onset, duration in chords:
            a, b = max(lo, onset), min(hi, onset + duration)
            if b <= a:
                continue
            overlap[label] = overlap.get(label, Fraction(0)) + (b - a)
            first[label] = min(first.get(label, a), a)
        if not overlap:
            out.append(NO_CHORD)
            continue
        out.append(min(overlap, key=lambda lab: (-overlap[lab], first[lab])))
    return out


# -- melody cleanup ------------------------------------------------------------

def _snap(x: Fraction) -> Fraction:
    return Fraction(round(x * TICKS_PER_BEAT), TICKS_PER_BEAT)


def snap_melody(melody: Iterable[Note], length_beats: int) -> tuple[Note, ...]:
    """Quantize onsets/ends to 16ths, clip to the sheet, truncate overlaps."""
    total = Fraction(length_beats)
    spans = []
    for n in sorted(melody, key=lambda n: n.onset):
        lo = min(max(_snap(n.onset), Fraction(0)), total)
        hi = min(max(_snap(n.end), Fraction(0)), total)
        if hi > lo:
            spans.append([n.pitch, lo, hi])
    out = []
    for i, (pitch, lo, hi) in enumerate(spans):
        if out and lo < out[-1][2]:
            continue  # starts inside an earlier note after snapping
        if i + 1 < len(spans) and spans[i + 1][1] < hi and spans[i + 1][1] > lo:
            hi = spans[i + 1][1]
        out.append((pitch, lo, hi))
    return tuple(Note(p, lo, hi - lo) for p, lo, hi in out)


# -- pipeline --------------------------------------------------------------------

@dataclass
class PreprocessSummary:
    input: int = 0
    dropped_rest: int = 0
    dropped_length: int = 0
    kept: int = 0

    def as_dict(self) -> dict:
        return {"input": self.input, "dropped_rest": self.dropped_rest,
                "dropped_length": self.dropped_length, "kept": self.kept}


def process_sheet(raw: RawLeadSheet) -> LeadSheet:
    """Transpose, reduce, quantize. Assumes the filters already passed."""
    sheet = transpose_to_c(raw)
    spans = [(reduce_chord(c), c.onset, c.duration) for c in sheet.chords]
    chords = quantize_harmonic_rhythm(spans, sheet.num_bars)
    melody = snap_melody(sheet.melody, sheet.length_beats)
    key_mode = KeyMode.C_MAJOR if sheet.mode == "major" else KeyMode.C_MINOR
    return LeadSheet(sheet.id, sheet.song_id, key_mode, sheet.num_bars, melody, tuple(chords))


def preprocess(raws: Iterable[RawLeadSheet]) -> tuple[list[LeadSheet], PreprocessSummary]:
    summary = PreprocessSummary()
    out = []
    for raw in raws:
        summary.input += 1
        if not filter_rest_ratio(raw):
            summary.dropped_rest += 1
            continue
        if not filter_length(raw):
            summary.dropped_length += 1
            continue
        out.append(process_sheet(raw))
    summary.kept = len(out)
    return out, summary


# -- raw corpus I/O ------------------------------------------------------------------

_CANONICAL_QUALITY = {Quality.MAJOR: "maj", Quality.MINOR: "min", Quality.DIMINISHED: "dim", Quality.AUGMENTED: "aug"}


def raw_from_sheet(sheet: LeadSheet) -> RawLeadSheet:
    """View a processed sheet as a raw one (tonic C), one chord span per half bar."""
    half = Fraction(BEATS_PER_BAR, 2)
    chords = []
    for slot, idx in enumerate(sheet.chords):
        label = decode_chord(idx)
        if label.root is None:
            continue
        chords.append(RawChord(label.root, _CANONICAL_QUALITY[label.quality], slot * half, half))
    mode = "major" if sheet.key_mode is KeyMode.C_MAJOR else "minor"
    return RawLeadSheet(sheet.id, sheet.song_id, 0, mode, sheet.num_bars, sheet.melody, tuple(chords))


def raw_to_record(raw: RawLeadSheet) -> dict:
    return {
        "id": raw.id,
        "song_id": raw.song_id,
        "key": {"tonic": raw.tonic, "mode": raw.mode},
        "num_bars": raw.num_bars,
        "melody": [{"pitch": n.pitch, "onset": format_rational(n.onset), "duration": format_rational(n.duration)}
                   for n in raw.melody],
        "chords": [
            {"root": c.root, "quality": c.quality, "extensions": list(c.extensions), "inversion": c.inversion,
             "onset": format_rational(c.onset), "duration": format_rational(c.duration), "degree": c.degree}
            for c in raw.chords
        ],
    }


def _need(rec: dict, key: str, path, index: int):
    if key not in rec:
        raise CorpusError(path, index, key, "missing required field")
    return rec[key]


def raw_from_record(rec: dict, path="<memory>", index: int = 0) -> RawLeadSheet:
    """Parse a raw record; processed-format records (``key_mode`` + int chords) are accepted too."""
    if not isinstance(rec, dict):
        raise CorpusError(path, index, "<record>", "record must be an object")
    try:
        melody = tuple(
            Note(n["pitch"], parse_rational(n["onset"]), parse_rational(n["duration"]))
            for n in _need(rec, "melody", path, index)
        )
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise CorpusError(path, index, "melody", str(exc)) from None
    num_bars = _need(rec, "num_bars", path, index)
    if not isinstance(num_bars, int):
        raise CorpusError(path, index, "num_bars", "must be an integer")
    if "key" not in rec and "key_mode" in rec:
        from .corpus import record_to_sheet
        return raw_from_sheet(record_to_sheet(rec, path, index))
    key = _need(rec, "key", path, index)
    try:
        chords = tuple(
            RawChord(c.get("root"), c.get("quality", ""), parse_rational(c["onset"]), parse_rational(c["duration"]),
                     tuple(c.get("extensions") or ()), c.get("inversion"), c.get("degree"))
            for c in _need(rec, "chords", path, index)
        )
        return RawLeadSheet(str(rec["id"]), str(rec.get("song_id", rec["id"])), key["tonic"], key["mode"],
                            num_bars, melody, chords)
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise CorpusError(path, index, "chords", str(exc)) from None


def read_raw_corpus(path) -> list[RawLeadSheet]:
    return [raw_from_record(rec, path, i) for i, rec in enumerate(read_records(path))]


def write_raw_corpus(raws: Iterable[RawLeadSheet], path) -> None:
    write_json(path, [raw_to_record(r) for r in raws])


# -- splitting -------------------------------------------------------------------

@dataclass
class SplitManifest:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "ratios": list(self.ratios), "train": self.train,
                "validation": self.validation, "test": self.test}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(list(d["train"]), list(d["validation"]), list(d["test"]), int(d["seed"]),
                   tuple(d.get("ratios", (0.8, 0.1, 0.1))))

    def save(self, path) -> None:
        write_json(path, self.as_dict())

    @classmethod
    def load(cls, path) -> "SplitManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def subsets(self, sheets: Sequence[LeadSheet]) -> tuple[list[LeadSheet], list[LeadSheet], list[LeadSheet]]:
        by_id = {s.id: s for s in sheets}
        missing = [i for i in self.train + self.validation + self.test if i not in by_id]
        if missing:
            raise KeyError(f"split manifest references {len(missing)} unknown ids, e.g. {missing[0]!r}")
        return ([by_id[i] for i in self.train], [by_id[i] for i in self.validation], [by_id[i] for i in self.test])


def split_corpus(sheets: Sequence[LeadSheet], ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> SplitManifest:
    """Song-grouped split: every sheet of a song lands in the same subset."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")
    groups: dict[str, list[str]] = {}
    for s in sheets:
        groups.setdefault(s.song_id, []).append(s.id)
    songs = sorted(groups)
    order = np.random.default_rng(seed).permutation(len(songs))
    n = sum(len(v) for v in groups.values())
    cut_train = round(ratios[0] * n)
    cut_val = round((ratios[0] + ratios[1]) * n)
    parts: tuple[list[str], list[str], list[str]] = ([], [], [])
    placed = 0
    for k in order:
        ids = sorted(groups[songs[k]])
        if placed < cut_train:
            parts[0].extend(ids)
        elif placed < cut_val:
            parts[1].extend(ids)
        else:
            parts[2].extend(ids)
        placed += len(ids)
    return SplitManifest(parts[0], parts[1], parts[2], seed, tuple(float(r) for r in ratios))
