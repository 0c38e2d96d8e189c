"""Corpus JSON I/O and MIDI export."""
from __future__ import annotations

import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema

from .core import (
    BEATS_PER_BAR,
    KeyMode,
    LeadSheet,
    LeadSheetError,
    Note,
    decode_chord,
)

_RATIONAL = {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}

NOTE_SCHEMA = {
    "type": "object",
    "required": ["pitch", "onset", "duration"],
    "properties": {
        "pitch": {"type": ["integer", "null"]},
        "onset": _RATIONAL,
        "duration": _RATIONAL,
    },
}

RECORD_SCHEMA = {
    "type": "object",
    "required": ["id", "song_id", "key_mode", "num_bars", "melody", "chords"],
    "properties": {
        "id": {"type": "string"},
        "song_id": {"type": "string"},
        "key_mode": {"enum": [m.value for m in KeyMode]},
        "num_bars": {"type": "integer"},
        "melody": {"type": "array", "items": NOTE_SCHEMA},
        "chords": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 48}},
    },
}


class CorpusError(ValueError):
    """Schema or invariant violation while reading a corpus file."""

    def __init__(self, path, index: int | None, field: str, message: str):
        self.path = str(path)
        self.index = index
        self.field = field
        where = f"{self.path}" + (f" record {index}" if index is not None else "")
        super().__init__(f"{where} field {field!r}: {message}")


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(text: str) -> Fraction:
    return Fraction(text)


def sheet_to_record(sheet: LeadSheet) -> dict:
    return {
        "id": sheet.id,
        "song_id": sheet.song_id,
        "key_mode": sheet.key_mode.value,
        "num_bars": sheet.num_bars,
        "melody": [
            {"pitch": n.pitch, "onset": format_rational(n.onset), "duration": format_rational(n.duration)}
            for n in sheet.melody
        ],
        "chords": list(sheet.chords),
    }


def record_to_sheet(record: dict, path="<memory>", index: int | None = None) -> LeadSheet:
    try:
        jsonschema.validate(record, RECORD_SCHEMA)
    except jsonschema.ValidationError as exc:
        parts = [str(p) for p in exc.absolute_path]
        if exc.validator == "required":
            missing = [name for name in exc.validator_value if name not in exc.instance]
            parts.append(missing[0] if missing else "?")
        raise CorpusError(path, index, "/".join(parts) or "<record>", exc.message) from None
    T = record["num_bars"]
    if len(record["chords"]) != 2 * T:
        raise CorpusError(path, index, "chords", f"length {len(record['chords'])} != 2*num_bars={2 * T}")
    try:
        melody = tuple(
            Note(n["pitch"], parse_rational(n["onset"]), parse_rational(n["duration"])) for n in record["melody"]
        )
        return LeadSheet(record["id"], record["song_id"], record["key_mode"], T, melody, tuple(record["chords"]))
    except (LeadSheetError, ValueError, ZeroDivisionError) as exc:
        raise CorpusError(path, index, "melody", str(exc)) from None


def read_records(path) -> list[dict]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(path, None, "<file>", f"invalid JSON: {exc}") from None
    if not isinstance(data, list):
        raise CorpusError(path, None, "<file>", "top-level value must be an array")
    return data


def read_corpus(path) -> list[LeadSheet]:
    return [record_to_sheet(rec, path, i) for i, rec in enumerate(read_records(path))]


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, ensure_ascii=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps_json(obj))


def write_corpus(sheets: Iterable[LeadSheet], path) -> None:
    write_json(path, [sheet_to_record(s) for s in sheets])


def export_midi(sheet: LeadSheet, path, chords: Sequence[int] | None = None, ticks_per_beat: int = 480,
                tempo_bpm: float = 100.0, chord_octave: int = 3) -> None:
    """Format-0 MIDI: melody on channel 0, block chords (half-bar) on channel 1."""
    import mido

    chords = sheet.chords if chords is None else chords
    events: list[tuple[int, int, mido.Message]] = []

    def add(start: Fraction, end: Fraction, pitch: int, channel: int, velocity: int) -> None:
        t0 = int(start * ticks_per_beat)
        t1 = int(end * ticks_per_beat)
        # note_off sorts before note_on at equal times
        events.append((t0, 1, mido.Message("note_on", note=pitch, velocity=velocity, channel=channel)))
        events.append((t1, 0, mido.Message("note_off", note=pitch, velocity=0, channel=channel)))

    for note in sheet.melody:
        if note.pitch is not None:
            add(note.onset, note.end, note.pitch, 0, 96)
    half = Fraction(BEATS_PER_BAR, 2)
    for slot, idx in enumerate(chords):
        label = decode_chord(idx)
        if label.root is None:
            continue
        base = 12 * (chord_octave + 1) + label.root
        for pc in sorted(label.pitch_classes(), key=lambda p: (p - label.root) % 12):
            add(slot * half, (slot + 1) * half, base + (pc - label.root) % 12, 1, 64)

    track = mido.MidiTrack()
    track.append(mido.MetaMessage("set_tempo", tempo=mido.bpm2tempo(tempo_bpm), time=0))
    track.append(mido.MetaMessage("time_signature", numerator=4, denominator=4, time=0))
    now = 0
    for t, _, msg in sorted(events, key=lambda e: (e[0], e[1])):
        track.append(msg.copy(time=t - now))
        now = t
    track.append(mido.MetaMessage("end_of_track", time=0))
    mid = mido.MidiFile(type=0, ticks_per_beat=ticks_per_beat)
    mid.tracks.append(track)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    mid.save(str(path))
