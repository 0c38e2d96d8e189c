"""Command-line interface.

Exit codes: 0 success, 1 partial model failure, 2 usage or input error.
Every subcommand accepts ``--config FILE``: a flat ``key = value`` file whose
keys are flag names (``ga-population = 50``); command-line flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import NO_CHORD, LeadSheet, LeadSheetError, chord_names
from .corpus import CorpusError, read_corpus, read_records, record_to_sheet, write_corpus, write_json, export_midi
from .ga import GaConfig
from .harness import (
    MODEL_NAMES,
    ModelSettings,
    corpus_hash,
    evaluate_models,
    harmonize_sheets,
    load_checkpoint,
    checkpoint_seed,
    train_all,
    write_comparison,
    write_manifest,
)
from .neural import NeuralConfig
from .preprocess import SplitManifest, preprocess, read_raw_corpus, split_corpus, write_raw_corpus
from .synth import generate_synthetic_corpus, generate_synthetic_raw_corpus

LOGGER = logging.getLogger("melharm")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.replace(" ", "").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return tuple(parts)


def _models(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in MODEL_NAMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown model(s) {bad}; choose from {','.join(MODEL_NAMES)}")
    return names


def _weights(text: str) -> tuple[float, ...]:
    parts = tuple(float(x) for x in text.split(","))
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated weights")
    return parts


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model hyperparameters")
    g.add_argument("--hmm-beta", type=float, default=0.08)
    g.add_argument("--ga-population", type=int, default=100)
    g.add_argument("--ga-generations", type=int, default=500)
    g.add_argument("--ga-tournament-k", type=int, default=3)
    g.add_argument("--ga-crossover-rate", type=float, default=0.9)
    g.add_argument("--ga-mutation-rate", type=float, default=None, help="per-gene; default 1/M")
    g.add_argument("--ga-elitism", type=int, default=1)
    g.add_argument("--ga-weights", type=_weights, default=(1.0, 1.0, 1.0, 1.0))
    g.add_argument("--nn-hidden-size", type=int, default=64)
    g.add_argument("--nn-epochs", type=int, default=10)
    g.add_argument("--nn-batch-size", type=int, default=32)
    g.add_argument("--nn-learning-rate", type=float, default=1e-3)
    g.add_argument("--nn-dropout", type=float, default=0.2)
    g.add_argument("--mt-gamma", type=float, default=1.5)
    g.add_argument("--mt-alpha", type=float, default=1.8)


def _settings(args) -> ModelSettings:
    return ModelSettings(
        hmm_beta=args.hmm_beta,
        ga=GaConfig(population=args.ga_population, generations=args.ga_generations, tournament_k=args.ga_tournament_k,
                    crossover_rate=args.ga_crossover_rate, mutation_rate=args.ga_mutation_rate,
                    elitism=args.ga_elitism, weights=args.ga_weights),
        nn=NeuralConfig(hidden_size=args.nn_hidden_size, max_epochs=args.nn_epochs, batch_size=args.nn_batch_size,
                        learning_rate=args.nn_learning_rate, dropout=args.nn_dropout, gamma=args.mt_gamma,
                        alpha_others=args.mt_alpha),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melharm", description="Melody harmonization toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw", action="store_true", help="raw sheets in random keys with extended chords")
    p.add_argument("--out", type=Path, required=True, help="output directory (corpus.json or raw_corpus.json)")

    p = sub.add_parser("preprocess", help="filter, transpose, reduce, quantize, and split a raw corpus")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1))
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("split", help="song-aware train/validation/test split of a processed corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1))
    p.add_argument("--out", type=Path, required=True, help="output directory (split.json)")

    p = sub.add_parser("train", help="train harmonizers on the training split")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--models", type=_models, default=list(MODEL_NAMES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="checkpoint directory")
    _add_model_flags(p)

    p = sub.add_parser("harmonize", help="harmonize melodies with a trained checkpoint")
    p.add_argument("--model", type=Path, required=True, help="checkpoint JSON")
    p.add_argument("--input", type=Path, required=True, help="lead-sheet JSON (chords optional)")
    p.add_argument("--seed", type=int, default=None, help="override the checkpoint seed")
    p.add_argument("--midi", action="store_true", help="also write one MIDI file per sheet")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("evaluate", help="metrics table for checkpoints on the test split")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--models-dir", type=Path, required=True)
    p.add_argument("--models", type=_models, default=list(MODEL_NAMES))
    p.add_argument("--jobs", type=int, default=1, help="worker processes for harmonizing the test set")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("compare", help="end to end: preprocess, split, train, evaluate")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help="raw (or processed) corpus JSON")
    src.add_argument("--synth", type=int, metavar="N", help="generate N raw synthetic sheets instead")
    p.add_argument("--models", type=_models, default=list(MODEL_NAMES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1))
    p.add_argument("--jobs", type=int, default=1, help="worker processes for harmonizing the test set")
    p.add_argument("--out", type=Path, required=True)
    _add_model_flags(p)

    for sp in sub.choices.values():
        sp.add_argument("--config", type=Path, default=None, help="flat key = value file of flag defaults")
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        values[key.lstrip("-")] = value
    return values


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    if not args.config.is_file():
        raise UsageError(f"config file not found: {args.config}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    by_flag = {opt.lstrip("-"): action for action in sub._actions for opt in action.option_strings}
    prefix = []
    for key, value in read_config_file(args.config).items():
        key = key.replace("_", "-")
        if key not in by_flag or key == "config":
            raise UsageError(f"{args.config}: unknown key {key!r} for '{args.command}'")
        action = by_flag[key]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                prefix.append(f"--{key}")
        else:
            prefix.extend([f"--{key}", value])
    # flags from the file go first so explicit command-line flags override them
    cmd_index = argv.index(args.command)
    return parser.parse_args(argv[: cmd_index + 1] + prefix + argv[cmd_index + 1:])


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.raw:
        path = args.out / "raw_corpus.json"
        write_raw_corpus(generate_synthetic_raw_corpus(args.n, args.seed), path)
    else:
        path = args.out / "corpus.json"
        write_corpus(generate_synthetic_corpus(args.n, args.seed), path)
    write_manifest(args.out, "synth", args.seed, {}, {"n": args.n, "raw": args.raw})
    print(f"wrote {args.n} {'raw ' if args.raw else ''}sheets to {path}")
    return EXIT_OK


def run_preprocess(input_path: Path, out: Path, seed: int, ratios) -> tuple[list[LeadSheet], SplitManifest, dict]:
    _require_file(input_path, "input corpus")
    sheets, summary = preprocess(read_raw_corpus(input_path))
    manifest = split_corpus(sheets, ratios, seed)
    write_corpus(sheets, out / "corpus.json")
    manifest.save(out / "split.json")
    info = summary.as_dict()
    info.update(train=len(manifest.train), validation=len(manifest.validation), test=len(manifest.test))
    write_json(out / "preprocess_summary.json", info)
    return sheets, manifest, info


def cmd_preprocess(args) -> int:
    _, _, info = run_preprocess(args.input, args.out, args.seed, args.ratios)
    write_manifest(args.out, "preprocess", args.seed, {"input": args.input})
    print(json.dumps(info))
    return EXIT_OK


def cmd_split(args) -> int:
    _require_file(args.corpus, "corpus")
    manifest = split_corpus(read_corpus(args.corpus), args.ratios, args.seed)
    manifest.save(args.out / "split.json")
    write_manifest(args.out, "split", args.seed, {"corpus": args.corpus})
    print(f"train={len(manifest.train)} validation={len(manifest.validation)} test={len(manifest.test)}")
    return EXIT_OK


def _load_split(corpus: Path, split: Path):
    _require_file(corpus, "corpus")
    _require_file(split, "split manifest")
    sheets = read_corpus(corpus)
    try:
        return SplitManifest.load(split).subsets(sheets)
    except KeyError as exc:
        raise UsageError(str(exc)) from None


def _train(models, train, validation, seed, out, settings) -> int:
    outcome = train_all(models, train, validation, seed, out, settings)
    summary = {"succeeded": outcome.succeeded, "failed": outcome.failed}
    write_json(Path(out) / "train_summary.json", summary)
    for name in outcome.succeeded:
        print(f"trained {name}")
    for name, err in outcome.failed.items():
        print(f"FAILED {name}: {err}", file=sys.stderr)
    return EXIT_PARTIAL if outcome.failed else EXIT_OK


def cmd_train(args) -> int:
    train, validation, _ = _load_split(args.corpus, args.split)
    if not train:
        raise UsageError("training split is empty")
    code = _train(args.models, train, validation or train, args.seed, args.out, _settings(args))
    write_manifest(args.out, "train", args.seed, {"corpus": args.corpus, "split": args.split},
                   {"corpus_hash": corpus_hash(train + validation)})
    return code


def _read_melodies(path: Path) -> list[LeadSheet]:
    records = read_records(path)
    sheets = []
    for i, rec in enumerate(records):
        if isinstance(rec, dict) and "chords" not in rec and isinstance(rec.get("num_bars"), int):
            rec = dict(rec, chords=[NO_CHORD] * (2 * rec["num_bars"]))
        sheets.append(record_to_sheet(rec, path, i))
    return sheets


def cmd_harmonize(args) -> int:
    _require_file(args.model, "checkpoint")
    _require_file(args.input, "melody input")
    model = load_checkpoint(args.model)
    seed = checkpoint_seed(args.model) if args.seed is None else args.seed
    sheets = _read_melodies(args.input)
    preds = harmonize_sheets(model, sheets, seed)
    out_sheets = [s.with_chords(p) for s, p in zip(sheets, preds)]
    write_corpus(out_sheets, args.out / "harmonized.json")
    for sheet, pred in zip(out_sheets, preds):
        print(f"{sheet.id}: {' '.join(chord_names(pred))}")
        if args.midi:
            export_midi(sheet, args.out / f"{sheet.id}.mid")
    write_manifest(args.out, "harmonize", seed, {"model": args.model, "input": args.input})
    return EXIT_OK


def _evaluate(corpus: Path, split: Path, models_dir: Path, models, out: Path, jobs: int = 1) -> int:
    _, _, test = _load_split(corpus, split)
    if not test:
        raise UsageError("test split is empty")
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    comp = evaluate_models(test, models_dir, models, jobs)
    write_comparison(comp, out)
    print(comp.to_text(), end="")
    return EXIT_PARTIAL if comp.missing else EXIT_OK


def cmd_evaluate(args) -> int:
    code = _evaluate(args.corpus, args.split, args.models_dir, args.models, args.out, args.jobs)
    write_manifest(args.out, "evaluate", None, {"corpus": args.corpus, "split": args.split})
    return code


def cmd_compare(args) -> int:
    out: Path = args.out
    if args.synth is not None:
        if args.synth < 1:
            raise UsageError("--synth must be >= 1")
        raw_path = out / "raw_corpus.json"
        write_raw_corpus(generate_synthetic_raw_corpus(args.synth, args.seed), raw_path)
    else:
        raw_path = args.input
    _, _, info = run_preprocess(raw_path, out / "data", args.seed, args.ratios)
    print(json.dumps(info))
    corpus, split = out / "data" / "corpus.json", out / "data" / "split.json"
    train, validation, _ = _load_split(corpus, split)
    code_train = _train(args.models, train, validation or train, args.seed, out / "models", _settings(args))
    code_eval = _evaluate(corpus, split, out / "models", args.models, out / "report", args.jobs)
    write_manifest(out, "compare", args.seed, {"input": raw_path})
    return max(code_train, code_eval)


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "split": cmd_split,
    "train": cmd_train,
    "harmonize": cmd_harmonize,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, CorpusError, LeadSheetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
