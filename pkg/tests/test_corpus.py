from __future__ import annotations

import json
from fractions import Fraction

import mido
import pytest

from melharm.corpus import (
    CorpusError,
    export_midi,
    format_rational,
    parse_rational,
    read_corpus,
    record_to_sheet,
    sheet_to_record,
    write_corpus,
)
from melharm.synth import generate_synthetic_corpus

from conftest import make_sheet


def minimal_record():
    return {
        "id": "r0", "song_id": "song", "key_mode": "CMajor", "num_bars": 4,
        "melody": [{"pitch": 60, "onset": "0/1", "duration": "1/1"}],
        "chords": [1] * 8,
    }


def test_minimal_record_parses():
    sheet = record_to_sheet(minimal_record())
    assert sheet.num_bars == 4 and len(sheet.melody) == 1 and sheet.chords == (1,) * 8


def test_wrong_chord_count_names_record(tmp_path):
    rec = minimal_record()
    rec["chords"] = [1] * 7
    path = tmp_path / "bad.json"
    path.write_text(json.dumps([minimal_record(), rec]))
    with pytest.raises(CorpusError) as err:
        read_corpus(path)
    assert err.value.index == 1 and err.value.field == "chords"
    assert "bad.json" in str(err.value) and "record 1" in str(err.value)


@pytest.mark.parametrize("mutate, field", [
    (lambda r: r.pop("song_id"), "song_id"),
    (lambda r: r.__setitem__("key_mode", "DMajor"), "key_mode"),
    (lambda r: r["melody"][0].__setitem__("onset", "0.5"), "melody/0/onset"),
    (lambda r: r["chords"].__setitem__(3, 49), "chords/3"),
])
def test_schema_errors_name_field(mutate, field):
    rec = minimal_record()
    mutate(rec)
    with pytest.raises(CorpusError) as err:
        record_to_sheet(rec, "x.json", 0)
    assert err.value.field == field


def test_invariant_violation_is_corpus_error():
    rec = minimal_record()
    rec["melody"].append({"pitch": 62, "onset": "1/2", "duration": "1/1"})
    with pytest.raises(CorpusError):
        record_to_sheet(rec)


def test_rationals():
    assert format_rational(Fraction(3, 4)) == "3/4"
    assert parse_rational("3/4") == Fraction(3, 4)
    assert parse_rational("2") == 2


def test_round_trip_32_bars(tmp_path):
    notes = [(60 + (i % 12), i, 1) for i in range(128)]
    sheet = make_sheet(notes, chords=[i % 49 for i in range(64)], num_bars=32, sheet_id="long", song_id="L")
    path = tmp_path / "c.json"
    write_corpus([sheet], path)
    (back,) = read_corpus(path)
    assert back == sheet
    assert sheet_to_record(back) == sheet_to_record(sheet)


def test_corpus_file_is_deterministic(tmp_path):
    sheets = generate_synthetic_corpus(20, seed=1)
    write_corpus(sheets, tmp_path / "a.json")
    write_corpus(read_corpus(tmp_path / "a.json"), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_top_level_must_be_array(tmp_path):
    path = tmp_path / "obj.json"
    path.write_text("{}")
    with pytest.raises(CorpusError):
        read_corpus(path)
    path.write_text("[")
    with pytest.raises(CorpusError):
        read_corpus(path)


def test_midi_export(tmp_path):
    sheet = make_sheet([(60, 0, 1), (None, 1, 1), (67, 2, 2)], chords=["C", "G"] * 4)
    path = tmp_path / "s.mid"
    export_midi(sheet, path)
    mid = mido.MidiFile(path)
    assert mid.type == 0
    ons = [m for m in mid.tracks[0] if m.type == "note_on" and m.velocity > 0]
    melody = [m.note for m in ons if m.channel == 0]
    chord_notes = [m for m in ons if m.channel == 1]
    assert melody == [60, 67]
    assert len(chord_notes) == 3 * 8
