"""Domain types: chord vocabulary, notes, lead sheets and pitch-class profiles.

Time is kept as exact :class:`fractions.Fraction` beats on a 16th-note grid.
Feature extraction converts to integer ticks (one tick = one 16th note) so
segment boundaries never depend on floating-point arithmetic.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

NUM_PITCH_CLASSES = 12
NUM_CHORDS = 49
NO_CHORD = 0
TICKS_PER_BEAT = 4
BEATS_PER_BAR = 4
HALF_BAR_TICKS = 8
GRID = Fraction(1, TICKS_PER_BEAT)

PITCH_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
_FLAT_ALIASES = {"Db": 1, "Eb": 3, "Gb": 6, "Ab": 8, "Bb": 10, "Cb": 11, "Fb": 4, "E#": 5, "B#": 0}


class Quality(enum.IntEnum):
    MAJOR = 0
    MINOR = 1
    DIMINISHED = 2
    AUGMENTED = 3


QUALITY_INTERVALS = {
    Quality.MAJOR: (0, 4, 7),
    Quality.MINOR: (0, 3, 7),
    Quality.DIMINISHED: (0, 3, 6),
    Quality.AUGMENTED: (0, 4, 8),
}
_QUALITY_SUFFIX = {Quality.MAJOR: "", Quality.MINOR: "m", Quality.DIMINISHED: "dim", Quality.AUGMENTED: "aug"}


class ChordFunction(enum.IntEnum):
    TONAL = 0
    DOMINANT = 1
    OTHERS = 2


class KeyMode(str, enum.Enum):
    C_MAJOR = "CMajor"
    C_MINOR = "CMinor"


@dataclass(frozen=True)
class ChordLabel:
    """A root-position triad, or N.C. when ``root`` is None."""

    root: int | None = None
    quality: Quality | None = None

    def __post_init__(self):
        if (self.root is None) != (self.quality is None):
            raise ValueError("root and quality must both be set or both be None")
        if self.root is not None:
            if not 0 <= self.root < NUM_PITCH_CLASSES:
                raise ValueError(f"root {self.root} outside [0, 11]")
            object.__setattr__(self, "quality", Quality(self.quality))

    @property
    def is_no_chord(self) -> bool:
        return self.root is None

    def pitch_classes(self) -> frozenset[int]:
        if self.root is None:
            return frozenset()
        return frozenset((self.root + i) % 12 for i in QUALITY_INTERVALS[self.quality])

    def __str__(self) -> str:
        if self.root is None:
            return "N.C."
        return PITCH_NAMES[self.root] + _QUALITY_SUFFIX[self.quality]


NC = ChordLabel()


def encode_chord(label: ChordLabel) -> int:
    if label.root is None:
        return NO_CHORD
    return 1 + label.root * 4 + int(label.quality)


def decode_chord(index: int) -> ChordLabel:
    index = int(index)
    if not 0 <= index < NUM_CHORDS:
        raise ValueError(f"chord index {index} outside [0, 48]")
    if index == NO_CHORD:
        return NC
    root, quality = divmod(index - 1, 4)
    return ChordLabel(root, Quality(quality))


def chord_name(index: int) -> str:
    return str(decode_chord(index))


def parse_chord_name(name: str) -> int:
    """Inverse of :func:`chord_name` (also accepts flat spellings)."""
    name = name.strip()
    if name in ("N.C.", "NC", "N"):
        return NO_CHORD
    if len(name) > 1 and name[1] in "#b":
        root_txt, rest = name[:2], name[2:]
    else:
        root_txt, rest = name[:1], name[1:]
    if root_txt in PITCH_NAMES:
        root = PITCH_NAMES.index(root_txt)
    elif root_txt in _FLAT_ALIASES:
        root = _FLAT_ALIASES[root_txt]
    else:
        raise ValueError(f"unknown chord name {name!r}")
    for quality, suffix in sorted(_QUALITY_SUFFIX.items(), key=lambda kv: -len(kv[1])):
        if rest == suffix:
            return encode_chord(ChordLabel(root, quality))
    raise ValueError(f"unknown chord name {name!r}")


def _build_templates() -> np.ndarray:
    out = np.zeros((NUM_CHORDS, NUM_PITCH_CLASSES))
    for idx in range(1, NUM_CHORDS):
        for pc in decode_chord(idx).pitch_classes():
            out[idx, pc] = 1.0
    out.flags.writeable = False
    return out


#: Binary chord templates, row ``i`` is the PCP of chord index ``i``.
CHORD_TEMPLATES = _build_templates()


def chord_template_pcp(label: ChordLabel | int) -> np.ndarray:
    idx = label if isinstance(label, (int, np.integer)) else encode_chord(label)
    return CHORD_TEMPLATES[int(idx)].copy()


_TONAL = {"C", "Am", "Cm", "A"}
_DOMINANT = {"G", "Bdim"}


def chord_function(label: ChordLabel | int) -> ChordFunction:
    name = chord_name(label) if isinstance(label, (int, np.integer)) else str(label)
    if name in _TONAL:
        return ChordFunction.TONAL
    if name in _DOMINANT:
        return ChordFunction.DOMINANT
    return ChordFunction.OTHERS


#: ``FUNCTION_OF[i]`` is the ChordFunction value of chord index ``i``.
FUNCTION_OF = np.array([int(chord_function(i)) for i in range(NUM_CHORDS)], dtype=np.int64)
FUNCTION_OF.flags.writeable = False


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 20)
    return Fraction(value)


@dataclass(frozen=True)
class Note:
    """A melody event; ``pitch`` None is a rest. Times are in beats."""

    pitch: int | None
    onset: Fraction
    duration: Fraction

    def __post_init__(self):
        object.__setattr__(self, "onset", as_fraction(self.onset))
        object.__setattr__(self, "duration", as_fraction(self.duration))
        if self.pitch is not None:
            object.__setattr__(self, "pitch", int(self.pitch))
            if not 0 <= self.pitch <= 127:
                raise ValueError(f"pitch {self.pitch} outside MIDI range")
        if self.onset < 0:
            raise ValueError("negative onset")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def end(self) -> Fraction:
        return self.onset + self.duration

    @property
    def is_rest(self) -> bool:
        return self.pitch is None


class LeadSheetError(ValueError):
    pass


@dataclass(frozen=True)
class LeadSheet:
    id: str
    song_id: str
    key_mode: KeyMode
    num_bars: int
    melody: tuple[Note, ...]
    chords: tuple[int, ...]
    meta: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "key_mode", KeyMode(self.key_mode))
        object.__setattr__(self, "melody", tuple(self.melody))
        object.__setattr__(self, "chords", tuple(int(c) for c in self.chords))
        validate_sheet(self)

    @property
    def num_slots(self) -> int:
        return 2 * self.num_bars

    @property
    def length_beats(self) -> int:
        return BEATS_PER_BAR * self.num_bars

    def chord_array(self) -> np.ndarray:
        return np.asarray(self.chords, dtype=np.int64)

    def with_chords(self, chords: Sequence[int]) -> "LeadSheet":
        return LeadSheet(self.id, self.song_id, self.key_mode, self.num_bars, self.melody, tuple(chords))


def _on_grid(x: Fraction) -> bool:
    return (x * TICKS_PER_BEAT).denominator == 1


def validate_sheet(sheet: LeadSheet, min_bars: int = 4, max_bars: int = 32) -> None:
    T = sheet.num_bars
    if not min_bars <= T <= max_bars:
        raise LeadSheetError(f"{sheet.id}: num_bars={T} outside [{min_bars}, {max_bars}]")
    if len(sheet.chords) != 2 * T:
        raise LeadSheetError(f"{sheet.id}: {len(sheet.chords)} chords, expected 2*num_bars={2 * T}")
    for c in sheet.chords:
        if not 0 <= c < NUM_CHORDS:
            raise LeadSheetError(f"{sheet.id}: chord index {c} outside [0, 48]")
    prev_end = Fraction(0)
    for i, note in enumerate(sheet.melody):
        if not (_on_grid(note.onset) and _on_grid(note.duration)):
            raise LeadSheetError(f"{sheet.id}: note {i} is off the 16th-note grid")
        if note.onset < prev_end:
            raise LeadSheetError(f"{sheet.id}: note {i} overlaps or precedes the previous note")
        if note.end > sheet.length_beats:
            raise LeadSheetError(f"{sheet.id}: note {i} ends after bar {T}")
        prev_end = note.end


def note_ticks(note: Note) -> tuple[int, int]:
    """(start, end) in 16th-note ticks; exact for notes on the grid."""
    start = note.onset * TICKS_PER_BEAT
    end = note.end * TICKS_PER_BEAT
    return int(start), int(end)


class Resolution(str, enum.Enum):
    HALF_BAR = "half_bar"
    SIXTEENTH = "sixteenth"

    @property
    def ticks(self) -> int:
        return HALF_BAR_TICKS if self is Resolution.HALF_BAR else 1


def melody_pcp_matrix(sheet: LeadSheet, resolution: Resolution | str = Resolution.HALF_BAR) -> np.ndarray:
    """All melody PCPs of a sheet, shape ``(num_segments, 12)``.

    Notes crossing a segment boundary contribute to each segment they overlap.
    """
    res = Resolution(resolution)
    seg = res.ticks
    n_seg = sheet.length_beats * TICKS_PER_BEAT // seg
    counts = np.zeros((n_seg, NUM_PITCH_CLASSES), dtype=np.int64)
    for note in sheet.melody:
        if note.pitch is None:
            continue
        pc = note.pitch % 12
        start, end = note_ticks(note)
        s = start // seg
        while s * seg < end:
            lo = max(start, s * seg)
            hi = min(end, (s + 1) * seg)
            counts[s, pc] += hi - lo
            s += 1
    return counts / float(seg)


def melody_pcp(sheet: LeadSheet, segment_index: int, resolution: Resolution | str = Resolution.HALF_BAR) -> np.ndarray:
    res = Resolution(resolution)
    n_seg = sheet.length_beats * TICKS_PER_BEAT // res.ticks
    if not 0 <= segment_index < n_seg:
        raise IndexError(f"segment {segment_index} outside [0, {n_seg})")
    return melody_pcp_matrix(sheet, res)[segment_index]


def sounding_pitch_per_tick(sheet: LeadSheet) -> np.ndarray:
    """MIDI pitch sounding at every 16th-note tick, -1 for silence."""
    out = np.full(sheet.length_beats * TICKS_PER_BEAT, -1, dtype=np.int64)
    for note in sheet.melody:
        if note.pitch is None:
            continue
        start, end = note_ticks(note)
        out[start:end] = note.pitch
    return out


def transpose_sheet(sheet: LeadSheet, semitones: int) -> LeadSheet:
    """Shift melody pitches and chord roots by ``semitones`` (key_mode kept)."""
    melody = tuple(
        Note(None if n.pitch is None else n.pitch + semitones, n.onset, n.duration) for n in sheet.melody
    )
    return LeadSheet(
        sheet.id, sheet.song_id, sheet.key_mode, sheet.num_bars, melody,
        tuple(transpose_chord(c, semitones) for c in sheet.chords),
    )


def transpose_chord(index: int, semitones: int) -> int:
    label = decode_chord(index)
    if label.root is None:
        return NO_CHORD
    return encode_chord(ChordLabel((label.root + semitones) % 12, label.quality))


def chord_names(chords: Iterable[int]) -> list[str]:
    return [chord_name(c) for c in chords]
