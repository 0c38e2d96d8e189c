from __future__ import annotations

from fractions import Fraction

import pytest

from melharm.core import NO_CHORD, KeyMode, LeadSheet, Note, parse_chord_name


def make_sheet(notes, chords=None, num_bars=4, sheet_id="s", song_id=None, key_mode=KeyMode.C_MAJOR):
    """Notes are (pitch, onset_beats, duration_beats) tuples; chords are names or indices."""
    melody = tuple(Note(p, Fraction(o), Fraction(d)) for p, o, d in notes)
    if chords is None:
        chords = [NO_CHORD] * (2 * num_bars)
    chords = tuple(parse_chord_name(c) if isinstance(c, str) else int(c) for c in chords)
    return LeadSheet(sheet_id, song_id or sheet_id, key_mode, num_bars, melody, chords)


@pytest.fixture(scope="session")
def small_corpus():
    from melharm.synth import generate_synthetic_corpus

    return generate_synthetic_corpus(60, seed=3)


# -- acceptance summary ------------------------------------------------------------------

_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if name.startswith("test_criterion_"):
            _ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        number = name.split("_")[2]
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {number}: {_ACCEPTANCE[name]}  ({label})")
