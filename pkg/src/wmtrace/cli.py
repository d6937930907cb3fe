"""Command-line driver for the watermark pipeline.

Six subcommands cover the full life cycle:

    wmtrace train      --config cfg.toml --out model.json
    wmtrace watermark  --config cfg.toml --model model.json --out bundle.json
    wmtrace generate   --config cfg.toml --bundle bundle.json --out text.txt
    wmtrace detect     --config cfg.toml --text text.txt --bundle bundle.json --out reports.jsonl
    wmtrace attack-sim --config cfg.toml --out attack.json
    wmtrace sweep      --config cfg.toml --axis sigma --values 0.0005,0.001 --out sweep.csv

Every command reads one TOML config (overridable with repeated
--set section.key=value), writes its results plus a sidecar
<out>.manifest.json, and is fully deterministic given the config. Exit
codes: 0 success, 1 config/validation error, 2 runtime or I/O error,
3 vocabulary mismatch. WMTRACE_WORKERS caps trial/detection parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from .config import ExperimentConfig, load_config
from .corpus import (
    Corpus,
    FrequencyTable,
    Vocabulary,
    build_vocabulary,
    dump_json,
    estimate_frequency,
    frequency_from_ids,
    load_json,
    read_corpus_file,
    require_same_vocabulary,
    tokenize,
)
from .detector import DetectorConfig, bounds_from_rates, detect_sequence, expected_tokens
from .errors import ConfigError, VocabularyMismatch, WmtraceError
from .manifest import RunManifest
from .montecarlo import derive_seed, parallel_map, run_detection_trials, summarize
from .ngram import GenerationConfig, NGramModel, WatermarkedModel, generate, simulate_extraction, extraction_gap, train_ngram
from .watermark import (
    NoisedFrequencyTable,
    ReweightTable,
    WatermarkKey,
    build_reweight_table,
    noise_frequency,
    watermark_strength,
)

SWEEP_CSV_HEADER = [
    "axis_value",
    "strength_nats",
    "n1_pred",
    "n2_pred",
    "empirical_fpr",
    "empirical_fnr",
    "median_tokens_to_decision",
]


def _require_corpus_path(cfg: ExperimentConfig) -> str:
    if not cfg.corpus_path:
        raise ConfigError("corpus_path must be set in the config for this command")
    return cfg.corpus_path


def _load_trained_corpus(cfg: ExperimentConfig) -> Corpus:
    texts = read_corpus_file(_require_corpus_path(cfg))
    vocabulary = build_vocabulary(texts, cfg.vocabulary.min_count)
    return Corpus.from_texts(texts, vocabulary)


def _load_model_file(path: str) -> NGramModel:
    try:
        return NGramModel.from_json_obj(load_json(path))
    except (KeyError, ValueError, TypeError) as exc:
        raise WmtraceError(f"model file {path} is malformed: {exc}") from exc


def _measure_frequency(model: NGramModel, cfg: ExperimentConfig, manifest: RunManifest | None) -> FrequencyTable:
    """The frequency profile F the watermark is built on, per frequency_source.

    "corpus" measures token frequencies on the training corpus;
    "model_generated" measures them on a fresh deterministic sample of the
    model's own output. The same table serves as both the noising base and
    the reweighting denominator, mirroring how the ratio couples them.
    """
    if cfg.watermark.frequency_source == "corpus":
        texts = read_corpus_file(_require_corpus_path(cfg))
        corpus = Corpus.from_texts(texts, model.vocabulary)
        return estimate_frequency(corpus, model.vocabulary)
    sample_seed = derive_seed(cfg.watermark.seed, "frequency-sample")
    if manifest is not None:
        manifest.record_seed("frequency_sample_seed", sample_seed)
    sample = generate(
        model,
        GenerationConfig(max_tokens=cfg.watermark.freq_sample_tokens, rng_seed=sample_seed),
    )
    return frequency_from_ids(sample, model.vocabulary)


def _build_watermark(model: NGramModel, cfg: ExperimentConfig, manifest: RunManifest | None):
    freq = _measure_frequency(model, cfg, manifest)
    key = WatermarkKey(seed=cfg.watermark.seed, sigma=cfg.watermark.sigma)
    noised = noise_frequency(freq, key, cfg.watermark.floor_epsilon)
    table = build_reweight_table(noised, freq, cfg.watermark.floor_epsilon)
    strength = watermark_strength(noised, freq)
    return freq, noised, table, strength


def _bundle_obj(model: NGramModel, freq: FrequencyTable, noised: NoisedFrequencyTable,
                table: ReweightTable, strength: float, cfg: ExperimentConfig) -> dict:
    return {
        "version": 1,
        "key": noised.key.to_json_obj(),
        "floor_epsilon": cfg.watermark.floor_epsilon,
        "frequency_source": cfg.watermark.frequency_source,
        "base_freq": [float(x) for x in noised.base.freq],
        "model_freq": [float(x) for x in freq.freq],
        "ratio": [float(x) for x in table.ratio],
        "strength_nats": strength,
        "model": model.to_json_obj(),
    }


def _load_bundle(path: str):
    """Reconstruct (watermarked model, base model, strength) from a bundle file."""
    try:
        obj = load_json(path)
        if obj.get("version") != 1:
            raise ValueError(f"unsupported bundle version: {obj.get('version')!r}")
        model = NGramModel.from_json_obj(obj["model"])
        table = ReweightTable(
            model.vocabulary,
            np.asarray(obj["ratio"], dtype=np.float64),
            float(obj["floor_epsilon"]),
        )
        strength = float(obj["strength_nats"])
    except (KeyError, ValueError, TypeError) as exc:
        raise WmtraceError(f"bundle file {path} is malformed: {exc}") from exc
    return WatermarkedModel(model, table), model, strength


def _detector_config(cfg: ExperimentConfig) -> DetectorConfig:
    return DetectorConfig(alpha=cfg.detector.alpha, beta=cfg.detector.beta)


def _strength_or_none(strength: float) -> float | None:
    return strength if strength > 0.0 else None


def cmd_train(cfg: ExperimentConfig, args) -> None:
    corpus = _load_trained_corpus(cfg)
    manifest = RunManifest("train", args.out, cfg.to_json_obj(), args.overrides)
    manifest.add_output(args.out)
    manifest.begin()
    model = train_ngram(corpus, cfg.model.order, cfg.model.alpha)
    dump_json(model.to_json_obj(), args.out)
    manifest.finish()
    print(f"trained order-{model.order} model on {corpus.total_tokens} tokens -> {args.out}")


def cmd_watermark(cfg: ExperimentConfig, args) -> None:
    model = _load_model_file(args.model)
    manifest = RunManifest("watermark", args.out, cfg.to_json_obj(), args.overrides)
    manifest.add_output(args.out)
    manifest.record_seed("watermark_seed", cfg.watermark.seed)
    if args.export_noised:
        manifest.add_output(args.export_noised)
    manifest.begin()
    freq, noised, table, strength = _build_watermark(model, cfg, manifest)
    dump_json(_bundle_obj(model, freq, noised, table, strength, cfg), args.out)
    if args.export_noised:
        dump_json(noised.as_table().to_json_obj(), args.export_noised)
    manifest.finish()
    print(f"watermark strength {strength:.6g} nats -> {args.out}")


def cmd_generate(cfg: ExperimentConfig, args) -> None:
    if args.bundle:
        model, _, _ = _load_bundle(args.bundle)
    else:
        model = _load_model_file(args.model)
    vocabulary = model.vocabulary
    sequences = args.sequences if args.sequences is not None else cfg.generation.sequences
    max_tokens = args.tokens if args.tokens is not None else cfg.generation.max_tokens
    seed_base = args.seed if args.seed is not None else cfg.generation.seed
    prompt_text = args.prompt if args.prompt is not None else cfg.generation.prompt
    if sequences < 1:
        raise ConfigError("--sequences must be >= 1")
    if max_tokens < 1:
        raise ConfigError("--tokens must be >= 1")
    prompt_ids = vocabulary.encode(tokenize(prompt_text))
    stop_id = None
    if cfg.generation.stop_token is not None:
        try:
            stop_id = vocabulary.lookup(cfg.generation.stop_token)
        except KeyError:
            raise ConfigError(
                f"generation.stop_token {cfg.generation.stop_token!r} is not in the vocabulary"
            ) from None

    manifest = RunManifest("generate", args.out, cfg.to_json_obj(), args.overrides)
    manifest.add_output(args.out)
    seeds = [derive_seed(seed_base, "generate", i) for i in range(sequences)]
    manifest.record_seed("sequence_seeds", seeds)
    manifest.begin()
    lines = []
    for seed in seeds:
        ids = generate(model, GenerationConfig(max_tokens=max_tokens, rng_seed=seed, stop_token=stop_id), prompt_ids)
        lines.append(" ".join(vocabulary.decode(ids)))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest.finish()
    kind = "watermarked" if args.bundle else "plain"
    print(f"generated {sequences} {kind} sequence(s) of up to {max_tokens} tokens -> {args.out}")


def cmd_detect(cfg: ExperimentConfig, args) -> None:
    h0_model, base_model, strength = _load_bundle(args.bundle)
    if args.h1_model:
        h1_model = _load_model_file(args.h1_model)
        require_same_vocabulary(h0_model.vocabulary, h1_model.vocabulary, "detect")
    else:
        h1_model = base_model
    det_config = _detector_config(cfg)
    with open(args.text, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()

    vocabulary = h0_model.vocabulary
    skipped: list[dict] = []
    detectable: list[tuple[int, np.ndarray]] = []
    for lineno, line in enumerate(raw_lines, start=1):
        if not line.strip():
            skipped.append({"line": lineno, "reason": "blank line"})
            continue
        try:
            ids = vocabulary.encode(tokenize(line))
        except KeyError as exc:
            skipped.append({"line": lineno, "reason": f"unencodable token: {exc}"})
            continue
        detectable.append((lineno, ids))

    strength_arg = _strength_or_none(strength)
    reports = parallel_map(
        lambda item: detect_sequence(item[1], h0_model, h1_model, det_config, strength_nats=strength_arg),
        detectable,
    )

    summary_path = f"{args.out}.summary.json"
    manifest = RunManifest("detect", args.out, cfg.to_json_obj(), args.overrides)
    manifest.add_output(args.out)
    manifest.add_output(summary_path)
    manifest.begin()
    with open(args.out, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_json_obj(), sort_keys=True, separators=(",", ":")) + "\n")
    stats = summarize(reports)
    summary = {
        "version": 1,
        "lines_total": len(raw_lines),
        "lines_detected": len(detectable),
        "lines_skipped": len(skipped),
        "skipped": skipped,
        "decisions": stats["decisions"],
        "rates": stats["rates"],
        "median_tokens_used": stats["median_tokens_used"],
        "median_tokens_to_decision": stats["median_tokens_to_decision"],
        "floored_events_total": stats["floored_events_total"],
        "strength_nats": strength,
    }
    dump_json(summary, summary_path)
    manifest.finish()
    print(
        f"detected {len(detectable)} line(s): "
        f"{stats['decisions']['watermarked']} watermarked, "
        f"{stats['decisions']['not_watermarked']} not watermarked, "
        f"{stats['decisions']['undecided']} undecided -> {args.out}"
    )


def cmd_attack_sim(cfg: ExperimentConfig, args) -> None:
    corpus = _load_trained_corpus(cfg)
    manifest = RunManifest("attack-sim", args.out, cfg.to_json_obj(), args.overrides)
    manifest.add_output(args.out)
    master = cfg.monte_carlo.master_seed
    transcript_seed = derive_seed(master, "extraction-transcript")
    probe_seed = derive_seed(master, "extraction-probe")
    manifest.record_seed("extraction_transcript_seed", transcript_seed)
    manifest.record_seed("extraction_probe_seed", probe_seed)
    manifest.begin()

    teacher_base = train_ngram(corpus, cfg.model.order, cfg.model.alpha)
    _, _, table, strength = _build_watermark(teacher_base, cfg, manifest)
    teacher_wm = WatermarkedModel(teacher_base, table)

    source_model = teacher_base if args.unwatermarked_teacher else teacher_wm
    student = simulate_extraction(
        source_model,
        cfg.extraction.student_order,
        cfg.extraction.query_tokens,
        GenerationConfig(max_tokens=cfg.extraction.query_tokens, rng_seed=transcript_seed),
        smoothing_alpha=cfg.model.alpha,
    )
    gap = extraction_gap(teacher_wm, student, cfg.extraction.probe_contexts, probe_seed)

    det_config = _detector_config(cfg)
    reports = run_detection_trials(
        student,
        teacher_wm,
        teacher_base,
        det_config,
        trials=cfg.monte_carlo.trials,
        sequence_length=cfg.monte_carlo.sequence_length,
        master_seed=master,
        strength_nats=_strength_or_none(strength),
        seed_tag="attack-trial",
    )
    stats = summarize(reports)
    b1, b2 = bounds_from_rates(det_config)
    if strength > 0.0:
        n1, n2 = expected_tokens(det_config, strength)
    else:
        n1 = n2 = None
    working_limit = b2 / cfg.monte_carlo.sequence_length
    report = {
        "version": 1,
        "unwatermarked_teacher": bool(args.unwatermarked_teacher),
        "strength_nats": strength,
        "extraction_gap_nats": gap,
        "b1": b1,
        "b2": b2,
        "n1_expected": n1,
        "n2_expected": n2,
        "sequence_length": cfg.monte_carlo.sequence_length,
        "query_tokens": cfg.extraction.query_tokens,
        "student_order": cfg.extraction.student_order,
        "trials": cfg.monte_carlo.trials,
        "decision_counts": stats["decisions"],
        "decision_rates": stats["rates"],
        "median_tokens_to_decision": stats["median_tokens_to_decision"],
        "working_limit_nats_per_token": working_limit,
        "below_working_limit": bool(gap < working_limit),
        "floored_events_total": stats["floored_events_total"],
    }
    dump_json(report, args.out)
    manifest.finish()
    print(
        f"extraction gap {gap:.6g} nats, watermarked rate "
        f"{stats['rates']['watermarked']:.3f} over {cfg.monte_carlo.trials} trials -> {args.out}"
    )


def _parse_axis_values(axis: str, text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) < 2:
        raise ConfigError("--values needs at least 2 comma-separated points")
    values = []
    for part in parts:
        try:
            value = float(part) if axis == "sigma" else int(part)
        except ValueError:
            raise ConfigError(f"axis value {part!r} is not a number") from None
        if not math.isfinite(float(value)):
            raise ConfigError(f"axis value {part!r} is not finite")
        if axis == "sigma" and value <= 0:
            raise ConfigError("sigma values must be positive")
        if axis == "sequence_length" and value < 1:
            raise ConfigError("sequence_length values must be >= 1")
        if axis == "query_tokens" and value < 1000:
            raise ConfigError("query_tokens values must be >= 1000")
        values.append(value)
    return values


def cmd_sweep(cfg: ExperimentConfig, args) -> None:
    values = _parse_axis_values(args.axis, args.values)
    corpus = _load_trained_corpus(cfg)
    manifest = RunManifest("sweep", args.out, cfg.to_json_obj(), args.overrides)
    manifest.add_output(args.out)
    manifest.begin()

    base_model = train_ngram(corpus, cfg.model.order, cfg.model.alpha)
    det_config = _detector_config(cfg)
    master = cfg.monte_carlo.master_seed
    trials = cfg.monte_carlo.trials

    def rates_for(positive_model, negative_model, h0, h1, strength, length, point_tag):
        pos = run_detection_trials(
            positive_model, h0, h1, det_config, trials=trials, sequence_length=length,
            master_seed=derive_seed(master, "sweep", args.axis, point_tag),
            strength_nats=_strength_or_none(strength), seed_tag="positive",
        )
        neg = run_detection_trials(
            negative_model, h0, h1, det_config, trials=trials, sequence_length=length,
            master_seed=derive_seed(master, "sweep", args.axis, point_tag),
            strength_nats=_strength_or_none(strength), seed_tag="negative",
        )
        pos_stats = summarize(pos)
        neg_stats = summarize(neg)
        fpr = neg_stats["rates"]["watermarked"]
        fnr = pos_stats["rates"]["not_watermarked"]
        return fpr, fnr, pos_stats["median_tokens_to_decision"]

    freq = _measure_frequency(base_model, cfg, None)

    def watermark_at(sigma: float):
        key = WatermarkKey(seed=cfg.watermark.seed, sigma=sigma)
        noised = noise_frequency(freq, key, cfg.watermark.floor_epsilon)
        table = build_reweight_table(noised, freq, cfg.watermark.floor_epsilon)
        return WatermarkedModel(base_model, table), watermark_strength(noised, freq)

    rows = []
    if args.axis == "sigma":
        for i, sigma in enumerate(values):
            wm, strength = watermark_at(sigma)
            fpr, fnr, med = rates_for(
                wm, base_model, wm, base_model, strength,
                cfg.monte_carlo.sequence_length, i,
            )
            rows.append((sigma, strength, fpr, fnr, med))
    elif args.axis == "sequence_length":
        wm, strength = watermark_at(cfg.watermark.sigma)
        for i, length in enumerate(values):
            fpr, fnr, med = rates_for(wm, base_model, wm, base_model, strength, length, i)
            rows.append((length, strength, fpr, fnr, med))
    else:  # query_tokens
        wm, strength = watermark_at(cfg.watermark.sigma)
        for i, budget in enumerate(values):
            student_pos = simulate_extraction(
                wm, cfg.extraction.student_order, budget,
                GenerationConfig(max_tokens=budget, rng_seed=derive_seed(master, "sweep-extract", i, "wm")),
                smoothing_alpha=cfg.model.alpha,
            )
            student_neg = simulate_extraction(
                base_model, cfg.extraction.student_order, budget,
                GenerationConfig(max_tokens=budget, rng_seed=derive_seed(master, "sweep-extract", i, "plain")),
                smoothing_alpha=cfg.model.alpha,
            )
            fpr, fnr, med = rates_for(
                student_pos, student_neg, wm, base_model, strength,
                cfg.monte_carlo.sequence_length, i,
            )
            rows.append((budget, strength, fpr, fnr, med))

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_CSV_HEADER)
        for axis_value, strength, fpr, fnr, med in rows:
            if strength > 0.0:
                n1, n2 = expected_tokens(det_config, strength)
            else:
                n1 = n2 = ""
            writer.writerow([
                axis_value,
                strength,
                n1,
                n2,
                fpr,
                fnr,
                med if med is not None else "",
            ])
    manifest.finish()
    print(f"swept {args.axis} over {len(values)} points, {trials} trials per side -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wmtrace",
        description="Frequency-based watermarking for toy language models: embed, generate, detect, attack.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override a config value (repeatable)")
        p.add_argument("--out", required=True, help="output file path")

    p_train = sub.add_parser("train", help="train an n-gram model on the corpus")
    common(p_train)

    p_wm = sub.add_parser("watermark", help="build a watermark bundle for a trained model")
    common(p_wm)
    p_wm.add_argument("--model", required=True, help="model JSON from `wmtrace train`")
    p_wm.add_argument("--export-noised", default=None,
                      help="also write the noised frequency table (debugging)")

    p_gen = sub.add_parser("generate", help="sample text from a model or watermark bundle")
    common(p_gen)
    source = p_gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", help="plain model JSON")
    source.add_argument("--bundle", help="watermark bundle JSON")
    p_gen.add_argument("--sequences", type=int, default=None, help="lines to generate")
    p_gen.add_argument("--tokens", type=int, default=None, help="max tokens per line")
    p_gen.add_argument("--seed", type=int, default=None, help="generation seed")
    p_gen.add_argument("--prompt", default=None, help="prompt text (not echoed in output)")

    p_det = sub.add_parser("detect", help="run sequential detection on a text file, one report per line")
    common(p_det)
    p_det.add_argument("--text", required=True, help="input text, one sequence per line")
    p_det.add_argument("--bundle", required=True, help="watermark bundle defining H0")
    p_det.add_argument("--h1-model", default=None,
                       help="alternative H1 model JSON (default: the bundle's base model)")

    p_atk = sub.add_parser("attack-sim", help="simulate a model-extraction attack and detect the student")
    common(p_atk)
    p_atk.add_argument("--unwatermarked-teacher", action="store_true",
                       help="negative control: train the student on unwatermarked teacher output")

    p_sweep = sub.add_parser("sweep", help="sweep one axis and emit a CSV of error rates")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=["sigma", "sequence_length", "query_tokens"])
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis points (at least 2)")
    return parser


_HANDLERS = {
    "train": cmd_train,
    "watermark": cmd_watermark,
    "generate": cmd_generate,
    "detect": cmd_detect,
    "attack-sim": cmd_attack_sim,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        _HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VocabularyMismatch as exc:
        print(f"error: vocabulary mismatch: {exc}", file=sys.stderr)
        return 3
    except WmtraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
