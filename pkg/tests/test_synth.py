from __future__ import annotations

from melharm.core import validate_sheet
from melharm.corpus import record_to_sheet, sheet_to_record
from melharm.preprocess import preprocess
from melharm.synth import DIATONIC_MAJOR, DIATONIC_MINOR, generate_synthetic_corpus, generate_synthetic_raw_corpus


def test_single_sheet_is_valid():
    (sheet,) = generate_synthetic_corpus(1, seed=7)
    validate_sheet(sheet)
    assert record_to_sheet(sheet_to_record(sheet)) == sheet


def test_diatonic_coverage():
    sheets = generate_synthetic_corpus(1000, seed=0)
    seen = {c for s in sheets for c in s.chords}
    assert set(DIATONIC_MAJOR) <= seen
    assert set(DIATONIC_MINOR) <= seen


def test_deterministic():
    a = generate_synthetic_corpus(30, seed=11)
    b = generate_synthetic_corpus(30, seed=11)
    assert [sheet_to_record(s) for s in a] == [sheet_to_record(s) for s in b]
    c = generate_synthetic_corpus(30, seed=12)
    assert [sheet_to_record(s) for s in a] != [sheet_to_record(s) for s in c]


def test_ids_unique_and_songs_grouped():
    sheets = generate_synthetic_corpus(200, seed=1)
    assert len({s.id for s in sheets}) == 200
    assert len({s.song_id for s in sheets}) < 200


def test_raw_corpus_exercises_filters():
    raws = generate_synthetic_raw_corpus(200, seed=3)
    assert generate_synthetic_raw_corpus(200, seed=3) == raws
    sheets, summary = preprocess(raws)
    assert summary.dropped_rest > 0 and summary.dropped_length > 0 and summary.kept > 150
    assert any(r.tonic != 0 for r in raws)
