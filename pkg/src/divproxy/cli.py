"""Command-line surface: measure, calibrate, select, train-predictor, simulate.

Every command validates its configuration before any network call, writes a
run manifest (config echo, seed, input hashes, tool version) next to its
outputs, and never mutates its inputs. All randomness flows from the single
run seed. Exit codes: 0 ok, 2 usage, 3 provider, 4 data.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

from . import __version__
from .analysis import (
    DIRECTIONS,
    MeasureRow,
    calibration_suite,
    write_calibration_csv,
    write_calibration_json,
)
from .answers import grade
from .config import RunConfig, load_config
from .datasets import (
    DatasetRecord,
    load,
    synthesize_ll,
    synthesize_mc,
    synthesize_numeric,
    truth_registry,
)
from .embedding import DeterministicEmbedder, HttpEmbedder
from .errors import DataError, ProviderError, UsageError
from .measures import diversity_report
from .predictor import (
    FEATURE_NAMES,
    MlpConfig,
    ablation_study,
    balance,
    evaluate,
    pr_curve,
    precision_at_recall,
    project_features,
    train_mlp,
    train_test_split,
)
from .prompts import PromptSpec, build_cot_prompts, build_fewshot_prompts
from .providers import (
    CachingProvider,
    HttpChatProvider,
    Question,
    ResponseCache,
    SimulatorProvider,
    sample,
)
from .selection import selection_sweep, write_sweep_csv, write_sweep_json

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROVIDER = 3
EXIT_DATA = 4


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: str, command: str, cfg: RunConfig, inputs: list[str], extra: dict | None = None) -> None:
    manifest = {
        "tool": "divproxy",
        "tool_version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "input_hashes": {path: _sha256_file(path) for path in inputs},
    }
    if extra:
        manifest["parameters"] = extra
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.cache is not None:
        updates["cache_path"] = args.cache
    if not updates:
        return cfg
    from dataclasses import replace

    return replace(cfg, **updates)


def _build_provider(cfg: RunConfig, records: list[DatasetRecord], args, per_prompt=None, cot_bonus: float = 0.0):
    cfg.validate_for_network()
    if cfg.provider.kind == "simulator":
        inner = SimulatorProvider(
            cfg.simulator_config(),
            truth_registry(records),
            per_prompt_correct_prob=per_prompt,
            cot_bonus=cot_bonus,
        )
    else:
        inner = HttpChatProvider(
            base_url=cfg.provider.base_url,
            model=cfg.provider.model,
            api_key_env=cfg.provider.api_key_env,
            retry=cfg.sampling.retry,
        )
    replay_only = bool(getattr(args, "replay_only", False))
    if cfg.cache_path:
        return CachingProvider(inner, ResponseCache(cfg.cache_path), replay_only=replay_only)
    if replay_only:
        raise UsageError("--replay-only requires a cache path (config cache_path or --cache)")
    return inner


def _build_embedder(cfg: RunConfig):
    if cfg.embedder.kind == "none":
        return None
    if cfg.embedder.kind == "deterministic_test":
        return DeterministicEmbedder(dim=cfg.embedder.dim, seed=cfg.seed)
    return HttpEmbedder(
        base_url=cfg.embedder.base_url,
        model=cfg.embedder.model,
        dim=cfg.embedder.dim or None,
        api_key_env=cfg.provider.api_key_env,
    )


# -- measure -------------------------------------------------------------------


def _measure_row_dict(record: DatasetRecord, report, m: int, temperature: float, correct: bool) -> dict:
    return {
        "question_id": record.id,
        "prompt_id": "measure",
        "temperature": temperature,
        "m": m,
        "entropy": report.entropy,
        "gini": report.gini,
        "centroid_distance": report.centroid_distance,
        "majority_answer": sorted(report.majority_answer.elements),
        "majority_share": report.majority_share,
        "correct": correct,
    }


def cmd_measure(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    records = load(args.dataset, args.format)
    if args.limit is not None:
        records = records[: args.limit]
    if not records:
        raise DataError("dataset is empty")
    provider = _build_provider(cfg, records, args)
    embedder = _build_embedder(cfg)
    prompt = PromptSpec(id="measure", instruction=cfg.instruction)

    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    for record in records:
        batch = sample(provider, prompt, Question(record.id, record.question), cfg.sampling, record.task)
        report = diversity_report(batch, embedder=embedder)
        correct = grade(report.majority_answer, record.truth, record.task)
        rows.append(_measure_row_dict(record, report, cfg.sampling.m, cfg.sampling.temperature, correct))

    jsonl_path = os.path.join(cfg.out_dir, "measures.jsonl")
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    with open(os.path.join(cfg.out_dir, "measures.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["question_id", "temperature", "entropy", "gini", "centroid_distance", "majority_answer", "majority_share", "correct"]
        )
        for row in rows:
            writer.writerow(
                [
                    row["question_id"],
                    row["temperature"],
                    row["entropy"],
                    row["gini"],
                    "" if row["centroid_distance"] is None else row["centroid_distance"],
                    " ".join(row["majority_answer"]),
                    row["majority_share"],
                    row["correct"],
                ]
            )
    _write_manifest(cfg.out_dir, "measure", cfg, [args.dataset], {"format": args.format, "limit": args.limit})
    failures = sum(1 for row in rows if not row["correct"])
    print(f"measured {len(rows)} questions; failure probability {failures / len(rows):.4f}")
    print(f"wrote {jsonl_path}")
    return EXIT_OK


# -- calibrate -----------------------------------------------------------------


def _read_measure_rows(paths: list[str]) -> list[MeasureRow]:
    rows = []
    for path in paths:
        if not os.path.exists(path):
            raise DataError(f"input file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    measures = {"entropy": float(raw["entropy"]), "gini": float(raw["gini"])}
                    if raw.get("centroid_distance") is not None:
                        measures["centroid_distance"] = float(raw["centroid_distance"])
                    rows.append(
                        MeasureRow(
                            question_id=str(raw["question_id"]),
                            temperature=float(raw["temperature"]),
                            measures=measures,
                            failed=not raw["correct"],
                        )
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise DataError(f"{path}:{line_no}: malformed measure row: {exc}") from exc
    return rows


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    rows = _read_measure_rows(args.inputs)
    if len(rows) < args.min_bucket:
        raise DataError(f"{len(rows)} rows < min_bucket={args.min_bucket}")
    measures = [m.strip() for m in args.measures.split(",") if m.strip()]
    directions = [d.strip() for d in args.directions.split(",") if d.strip()]
    report = calibration_suite(rows, measures, directions=directions or DIRECTIONS, min_bucket=args.min_bucket)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_calibration_csv(report, os.path.join(cfg.out_dir, "calibration.csv"))
    write_calibration_json(report, os.path.join(cfg.out_dir, "calibration.json"))
    _write_manifest(
        cfg.out_dir,
        "calibrate",
        cfg,
        list(args.inputs),
        {"min_bucket": args.min_bucket, "measures": measures, "directions": directions},
    )
    print(f"wrote {len(report.curves)} curves to {cfg.out_dir}/calibration.csv")
    return EXIT_OK


# -- select --------------------------------------------------------------------


def cmd_select(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    records = load(args.dataset, args.format)
    if len(records) < args.test_size + args.shots:
        raise DataError(
            f"dataset of {len(records)} records cannot supply {args.test_size} test questions plus {args.shots}-shot prompts"
        )
    import random as _random

    rng = _random.Random(cfg.seed)
    test_ids = set(rng.sample([r.id for r in records], args.test_size))
    test_records = [r for r in records if r.id in test_ids]
    pool_records = [r for r in records if r.id not in test_ids]
    overlap = {r.id for r in pool_records} & test_ids
    if overlap:
        raise UsageError(f"prompt pool overlaps test questions: {sorted(overlap)[:5]}")

    pool = [(r.question, r.truth) for r in pool_records]
    builder = build_cot_prompts if args.cot else build_fewshot_prompts
    prompts = builder(pool, n_prompts=args.n_prompts, shots=args.shots, seed=cfg.seed, instruction=cfg.instruction)

    per_prompt = None
    if args.prompt_quality:
        qualities = [float(q) for q in args.prompt_quality.split(",")]
        if len(qualities) != args.n_prompts:
            raise UsageError(f"--prompt-quality needs {args.n_prompts} comma-separated values")
        per_prompt = {p.id: q for p, q in zip(prompts, qualities)}
    provider = _build_provider(cfg, test_records, args, per_prompt=per_prompt, cot_bonus=args.cot_bonus)
    embedder = _build_embedder(cfg)
    if args.criterion == "centroid" and embedder is None:
        raise UsageError("criterion=centroid requires an embedder in the config")

    questions = [(Question(r.id, r.question), r.truth, r.task) for r in test_records]
    report = selection_sweep(prompts, questions, provider, cfg.sampling, criterion=args.criterion, embedder=embedder)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_sweep_json(report, os.path.join(cfg.out_dir, "sweep.json"))
    write_sweep_csv(report, os.path.join(cfg.out_dir, "sweep.csv"))
    _write_manifest(
        cfg.out_dir,
        "select",
        cfg,
        [args.dataset],
        {
            "format": args.format,
            "n_prompts": args.n_prompts,
            "shots": args.shots,
            "test_size": args.test_size,
            "criterion": args.criterion,
            "cot": args.cot,
            "prompt_quality": args.prompt_quality,
            "cot_bonus": args.cot_bonus,
        },
    )
    print(
        f"selection failure {report.selection_failure:.4f}; "
        f"mean prompt failure {report.mean_prompt_failure:.4f}; "
        f"worst prompt failure {max(report.per_prompt_failure):.4f}"
    )
    print(f"wrote {cfg.out_dir}/sweep.json")
    return EXIT_OK


# -- train-predictor -------------------------------------------------------------


def _parse_masks(spec: str) -> list[tuple[str, ...]]:
    masks = []
    for group in spec.split(";"):
        names = tuple(name.strip() for name in group.split(",") if name.strip())
        if names:
            masks.append(names)
    if not masks:
        raise UsageError("no masks given")
    return masks


def cmd_train_predictor(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    measure_rows = _read_measure_rows(args.inputs)
    if not measure_rows:
        raise DataError("no measure rows found")
    labeled = [(row.measures, row.failed) for row in measure_rows]
    n_failed = sum(1 for _, failed in labeled if failed)
    if n_failed == 0 or n_failed == len(labeled):
        raise DataError("training needs both failed and successful rows")

    full_mask = _parse_masks(args.masks)[0]
    mlp_cfg = MlpConfig(
        hidden_layers=args.depth,
        hidden_width=args.width,
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=cfg.seed,
    )
    train_rows, test_rows = train_test_split(labeled, test_fraction=args.test_fraction, seed=cfg.seed)
    train = [(project_features(measures, full_mask), failed) for measures, failed in train_rows]
    test_x = [project_features(measures, full_mask) for measures, _ in test_rows]
    test_y = [failed for _, failed in test_rows]
    balanced = balance(train, seed=cfg.seed, mode=args.balance_mode)
    model = train_mlp(balanced, mlp_cfg)
    curve = pr_curve(model, test_x, test_y)
    metrics = evaluate(model, test_x, test_y)

    os.makedirs(cfg.out_dir, exist_ok=True)
    model.save(os.path.join(cfg.out_dir, "model.json"))
    with open(os.path.join(cfg.out_dir, "pr_curve.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall"])
        for point in curve.points:
            writer.writerow([point.threshold, point.precision, point.recall])

    ablation_rows = ablation_study(
        labeled,
        _parse_masks(args.masks),
        mlp_cfg,
        test_fraction=args.test_fraction,
        split_seed=cfg.seed,
        balance_mode=args.balance_mode,
    )
    with open(os.path.join(cfg.out_dir, "ablation.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mask", "accuracy", "precision", "recall", "f1", "auprc"])
        for row in ablation_rows:
            writer.writerow(
                ["+".join(row.mask), row.metrics.accuracy, row.metrics.precision, row.metrics.recall, row.metrics.f1, row.metrics.auprc]
            )
    summary = {
        "auprc": curve.auprc,
        "baseline_prevalence": curve.baseline,
        "precision_at_recall_0.2": precision_at_recall(curve, 0.2),
        "accuracy": metrics.accuracy,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
        "mask": list(full_mask),
    }
    with open(os.path.join(cfg.out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        cfg.out_dir,
        "train-predictor",
        cfg,
        list(args.inputs),
        {
            "depth": args.depth,
            "width": args.width,
            "epochs": args.epochs,
            "lr": args.lr,
            "batch_size": args.batch_size,
            "masks": args.masks,
            "test_fraction": args.test_fraction,
            "balance_mode": args.balance_mode,
        },
    )
    print(
        f"AUPRC {curve.auprc:.4f} (baseline {curve.baseline:.4f}); "
        f"precision@recall0.2 {summary['precision_at_recall_0.2']:.4f}"
    )
    print(f"wrote {cfg.out_dir}/model.json")
    return EXIT_OK


# -- simulate --------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.kind == "ll":
        records = synthesize_ll(args.count, words_per_name=args.words, seed=seed)
        payload = [
            {"id": r.id, "question": r.question, "answer": next(iter(r.truth.answer.elements)), "explanation": r.truth.explanation}
            for r in records
        ]
    elif args.kind == "mc":
        records = synthesize_mc(args.count, n_options=args.options, seed=seed)
        payload = [
            {
                "id": r.id,
                "question": {"stem": r.question, "choices": [{"label": l, "text": t} for l, t in r.task.options]},
                "answerKey": next(iter(r.truth.answer.elements)),
                "explanation": r.truth.explanation,
            }
            for r in records
        ]
    else:
        records = synthesize_numeric(args.count, seed=seed)
        payload = [
            {
                "id": r.id,
                "sQuestion": r.question,
                "lSolutions": [float(e) for e in sorted(r.truth.answer.elements, key=float)],
                "explanation": r.truth.explanation,
            }
            for r in records
        ]
    out_path = args.out or f"{args.kind}_dataset.json"
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    print(f"wrote {len(payload)} records to {out_path}")
    return EXIT_OK


# -- argument wiring --------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the config output directory")
    parser.add_argument("--cache", default=None, help="override the config cache path")
    parser.add_argument("--replay-only", action="store_true", help="serve every sample from the cache; miss = error")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divproxy", description="Response-diversity measures for LLM sampling")
    parser.add_argument("--version", action="version", version=f"divproxy {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("measure", help="sample a dataset and write per-question diversity measures")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", required=True, choices=("csqa_json", "draw1k_json", "ll_json"))
    p.add_argument("--limit", type=int, default=None, help="measure only the first N records")
    p.set_defaults(func=cmd_measure)

    p = commands.add_parser("calibrate", help="cumulative failure-vs-measure curves from measure outputs")
    _add_common(p)
    p.add_argument("--input", dest="inputs", action="append", required=True, help="measures.jsonl (repeatable)")
    p.add_argument("--min-bucket", type=int, default=100)
    p.add_argument("--measures", default="entropy,gini,centroid_distance")
    p.add_argument("--directions", default="cumulative_min,cumulative_max")
    p.set_defaults(func=cmd_calibrate)

    p = commands.add_parser("select", help="diversity-based prompt selection sweep")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", required=True, choices=("csqa_json", "draw1k_json", "ll_json"))
    p.add_argument("--n-prompts", type=int, default=20)
    p.add_argument("--shots", type=int, default=30)
    p.add_argument("--test-size", type=int, default=100)
    p.add_argument("--criterion", default="entropy", choices=("entropy", "gini", "centroid"))
    p.add_argument("--cot", action="store_true", help="build chain-of-thought prompts (pool needs explanations)")
    p.add_argument("--cot-bonus", type=float, default=0.0, help="simulator: correctness bonus for CoT prompts")
    p.add_argument("--prompt-quality", default=None, help="simulator: per-prompt correct_prob list, comma separated")
    p.set_defaults(func=cmd_select)

    p = commands.add_parser("train-predictor", help="train the failure-prediction MLP on measure outputs")
    _add_common(p)
    p.add_argument("--input", dest="inputs", action="append", required=True, help="measures.jsonl (repeatable)")
    p.add_argument("--depth", type=int, default=10, help="hidden layer count")
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--balance-mode", default="oversample_minority", choices=("oversample_minority", "undersample_majority"))
    p.add_argument(
        "--masks",
        default=";".join([",".join(FEATURE_NAMES), "entropy,gini", "centroid_distance"]),
        help="semicolon-separated feature masks; the first is the primary model",
    )
    p.set_defaults(func=cmd_train_predictor)

    p = commands.add_parser("simulate", help="write a synthetic dataset file")
    p.add_argument("--kind", required=True, choices=("ll", "mc", "numeric"))
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--words", type=int, default=2, help="words per synthesized name (ll)")
    p.add_argument("--options", type=int, default=4, help="option count (mc)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output file path")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
