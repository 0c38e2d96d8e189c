"""Experiment orchestration: train the five harmonizers, run them, tabulate metrics."""
from __future__ import annotations

import hashlib
import json
import logging
import platform
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .core import LeadSheet
from .corpus import atomic_write_text, sheet_to_record, write_json
from .ga import GaConfig, GaModel, fit_tables
from .hmm import DEFAULT_BETA, HmmModel, fit_hmm
from .metrics import METRIC_NAMES, MetricReport, evaluate_sequences
from .neural import NeuralConfig, NeuralModel, train as train_neural
from .template import TemplateMatcherModel

LOGGER = logging.getLogger(__name__)

MODEL_NAMES = ("template", "hmm", "ga", "bilstm", "mtharmonizer")
TABLE_ROWS = ("human",) + MODEL_NAMES
ROW_LABELS = {
    "human": "Human-composed",
    "template": "Template matching",
    "hmm": "HMM",
    "ga": "GA-based",
    "bilstm": "BiLSTM",
    "mtharmonizer": "MTHarmonizer",
}


def model_seed(global_seed: int, name: str) -> int:
    """Per-model seed: global seed plus a CRC32 of the model name, mod 2**32."""
    return (int(global_seed) + zlib.crc32(name.encode("utf-8"))) % (1 << 32)


def sheet_rng(seed: int, sheet_id: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(sheet_id.encode("utf-8"))])


def corpus_hash(sheets: Sequence[LeadSheet]) -> str:
    h = hashlib.sha256()
    for s in sheets:
        h.update(json.dumps(sheet_to_record(s), sort_keys=True).encode("utf-8"))
    return h.hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class ModelSettings:
    """Per-model hyperparameters; every field maps to a CLI flag."""

    hmm_beta: float = DEFAULT_BETA
    ga: GaConfig = field(default_factory=GaConfig)
    nn: NeuralConfig = field(default_factory=NeuralConfig)

    def neural(self, multitask: bool, seed: int) -> NeuralConfig:
        values = {f.name: getattr(self.nn, f.name) for f in fields(NeuralConfig)}
        values.update(multitask=multitask, seed=seed)
        return NeuralConfig(**values)

    def ga_config(self, seed: int) -> GaConfig:
        values = {f.name: getattr(self.ga, f.name) for f in fields(GaConfig)}
        values["seed"] = seed
        return GaConfig(**values)


def train_model(name: str, train: Sequence[LeadSheet], validation: Sequence[LeadSheet], seed: int,
                settings: ModelSettings | None = None):
    settings = settings or ModelSettings()
    if name == "template":
        return TemplateMatcherModel(seed)
    if name == "hmm":
        return fit_hmm(train, settings.hmm_beta)
    if name == "ga":
        return GaModel(fit_tables(train), settings.ga_config(seed))
    if name in ("bilstm", "mtharmonizer"):
        model, history = train_neural(train, validation, settings.neural(name == "mtharmonizer", seed))
        LOGGER.info("%s: best epoch %d, val accuracy %s", name, history.best_epoch, history.val_accuracy)
        return model
    raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")


def model_from_dict(d: dict):
    kind = d.get("type")
    if kind == "template":
        return TemplateMatcherModel.from_dict(d)
    if kind == "hmm":
        return HmmModel.from_dict(d)
    if kind == "ga":
        return GaModel.from_dict(d)
    if kind in ("bilstm", "mtharmonizer"):
        return NeuralModel.from_dict(d)
    raise ValueError(f"unknown checkpoint type {kind!r}")


def save_checkpoint(model, path, *, corpus_digest: str, seed: int) -> None:
    payload = model.to_dict()
    payload["meta"] = {"corpus_hash": corpus_digest, "seed": int(seed), "version": __version__}
    write_json(path, payload)


def load_checkpoint(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def checkpoint_seed(path) -> int:
    meta = json.loads(Path(path).read_text(encoding="utf-8")).get("meta", {})
    return int(meta.get("seed", 0))


def _harmonize_one(model, sheet: LeadSheet, seed: int) -> list[int]:
    return [int(c) for c in model.harmonize(sheet, sheet_rng(seed, sheet.id))]


def harmonize_sheets(model, sheets: Sequence[LeadSheet], seed: int, jobs: int = 1) -> list[list[int]]:
    """Harmonize every sheet; each draws from its own RNG, so ``jobs`` never changes the result."""
    if jobs <= 1 or len(sheets) < 2:
        return [_harmonize_one(model, s, seed) for s in sheets]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(sheets) // (4 * jobs))
        return list(pool.map(_harmonize_one, [model] * len(sheets), sheets, [seed] * len(sheets), chunksize=chunk))


@dataclass
class TrainOutcome:
    succeeded: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)


def train_all(names: Sequence[str], train: Sequence[LeadSheet], validation: Sequence[LeadSheet], global_seed: int,
              out_dir, settings: ModelSettings | None = None) -> TrainOutcome:
    """Train each requested model; a failure is recorded and the rest continue."""
    out_dir = Path(out_dir)
    digest = corpus_hash(list(train) + list(validation))
    outcome = TrainOutcome()
    for name in names:
        seed = model_seed(global_seed, name)
        try:
            model = train_model(name, train, validation, seed, settings)
            save_checkpoint(model, out_dir / f"{name}.json", corpus_digest=digest, seed=seed)
            outcome.succeeded.append(name)
        except Exception as exc:  # one model's failure must not abort the others
            LOGGER.exception("training %s failed", name)
            outcome.failed[name] = f"{type(exc).__name__}: {exc}"
    return outcome


@dataclass
class Comparison:
    reports: dict[str, MetricReport] = field(default_factory=dict)
    predictions: dict[str, list[list[int]]] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)

    def table(self) -> list[tuple[str, dict[str, float | None]]]:
        return [(row, self.reports[row].means()) for row in TABLE_ROWS if row in self.reports]

    def to_csv(self) -> str:
        lines = [",".join(("model",) + METRIC_NAMES)]
        for row, means in self.table():
            lines.append(",".join([row] + ["" if means[n] is None else repr(float(means[n])) for n in METRIC_NAMES]))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = f"{'model':<20}" + "".join(f"{n:>10}" for n in METRIC_NAMES)
        lines = [header, "-" * len(header)]
        for row, means in self.table():
            cells = "".join(f"{'n/a':>10}" if means[n] is None else f"{means[n]:>10.3f}" for n in METRIC_NAMES)
            lines.append(f"{ROW_LABELS[row]:<20}{cells}")
        if self.missing:
            lines.append("missing checkpoints: " + ", ".join(self.missing))
        return "\n".join(lines) + "\n"


def evaluate_models(test: Sequence[LeadSheet], models_dir, names: Sequence[str] = MODEL_NAMES,
                    jobs: int = 1) -> Comparison:
    models_dir = Path(models_dir)
    comp = Comparison()
    comp.reports["human"] = evaluate_sequences(test, [list(s.chords) for s in test])
    for name in names:
        path = models_dir / f"{name}.json"
        if not path.exists():
            comp.missing.append(name)
            continue
        model = load_checkpoint(path)
        preds = harmonize_sheets(model, test, checkpoint_seed(path), jobs)
        comp.predictions[name] = preds
        comp.reports[name] = evaluate_sequences(test, preds)
    return comp


def write_comparison(comp: Comparison, out_dir) -> None:
    out_dir = Path(out_dir)
    atomic_write_text(out_dir / "table.csv", comp.to_csv())
    atomic_write_text(out_dir / "table.txt", comp.to_text())
    for name, report in comp.reports.items():
        atomic_write_text(out_dir / f"metrics_{name}.csv", report.to_csv())
        write_json(out_dir / f"metrics_{name}.json", report.to_dict())
    for name, preds in comp.predictions.items():
        write_json(out_dir / f"predictions_{name}.json", {"model": name, "chords": preds})
    write_json(out_dir / "table.json", {
        "rows": [{"model": row, **means} for row, means in comp.table()],
        "missing": comp.missing,
    })


def write_manifest(out_dir, command: str, seed: int | None, inputs: dict[str, Any], extra: dict | None = None) -> None:
    """``manifest.json``: tool/library versions, seed, and SHA-256 of each input file."""
    manifest = {
        "tool": "melharm",
        "version": __version__,
        "command": command,
        "seed": seed,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "inputs": {Path(p).name: file_hash(p) for p in inputs.values() if p is not None and Path(p).is_file()},
    }
    if extra:
        manifest.update(extra)
    write_json(Path(out_dir) / "manifest.json", manifest)
