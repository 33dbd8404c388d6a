"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checks import DEFAULT_SEEDS, GRADCHECK_MODULES, run_gradcheck
from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .config import ModelConfig, PRESETS, load_config_file, make_config
from .corpus import (
    Conversation,
    Utterance,
    atomic_write_text,
    corpus_stats,
    load_jsonl,
    save_jsonl,
    split_dataset,
    tokenize,
)
from .errors import DataError, DialactError, NumericError
from .synth import SynthSpec, load_bundled_spec, synth_generate
from .train import (
    REFERENCE_RESULTS,
    evaluate,
    multi_seed_eval,
    resolve_taxonomy,
    train,
    validation_callback_for,
)

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dialact",
                     description="Contextual dialogue-act sentence classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train a model on a JSONL corpus")
    p.add_argument("--corpus", required=True, help="conversation corpus (JSONL)")
    p.add_argument("--config", help="JSON config file (preset plus overrides)")
    p.add_argument("--preset", default=None, choices=PRESETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--json", action="store_true", help="machine-readable summary")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("predict", help="classify a single sentence")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--context", help="JSONL file; first conversation precedes the text")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True,
                   help="generation spec file, or bundled name (separable|ambiguous)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--utterances", type=int, default=2000)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="multi-seed train/eval protocol")
    p.add_argument("--corpus", help="overrides the config's corpus path")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", default=None, choices=PRESETS)
    p.add_argument("--seeds", type=int, default=8, help="number of seeds (0..n-1)")
    p.add_argument("--out", help="write the full report as JSON")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--module", choices=GRADCHECK_MODULES, default=None)
    p.add_argument("--seeds", type=int, default=len(DEFAULT_SEEDS))

    p = sub.add_parser("inspect", help="describe a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--taxonomy", default="swda")
    p.add_argument("--json", action="store_true")
    return parser


def _load_cli_config(args) -> tuple[ModelConfig, dict]:
    if args.config:
        config, extra = load_config_file(args.config)
        if args.preset:
            config = make_config(args.preset, **{
                k: v for k, v in config.to_dict().items() if k != "preset"
            })
        return config, extra
    return make_config(args.preset or "desk"), {}


def _ratios(extra: dict) -> tuple[float, float, float]:
    ratios = extra.get("split_ratios")
    if ratios is None:
        return (0.87, 0.10, 0.03)
    if len(ratios) != 3:
        raise DataError(f"split_ratios must have 3 entries, got {ratios}")
    return tuple(float(r) for r in ratios)


def _cmd_train(args) -> int:
    config, extra = _load_cli_config(args)
    taxonomy = resolve_taxonomy(config.taxonomy)
    conversations = load_jsonl(args.corpus, taxonomy)
    split = split_dataset(conversations, _ratios(extra), seed=extra.get("split_seed", args.seed))
    result = train(config, split.train, validation_callback_for(split.validation), args.seed)
    test_eval = evaluate(result.model, split.test)
    digest = save_checkpoint(result.model, args.out)
    summary = {
        "checkpoint": str(args.out),
        "hash": digest,
        "epochs": config.epochs,
        "best_validation_accuracy": result.best_validation_accuracy,
        "test_accuracy": test_eval.accuracy,
        "test_fallback_rate": test_eval.fallback_rate,
        "wall_clock_seconds": result.wall_clock_seconds,
    }
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"saved {args.out} (hash {digest[:12]}...)")
        print(f"validation accuracy {result.best_validation_accuracy:.4f}, "
              f"test accuracy {test_eval.accuracy:.4f}, "
              f"fallback rate {test_eval.fallback_rate:.4f}")
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    conversations = load_jsonl(args.corpus, model.taxonomy)
    result = evaluate(model, conversations)
    if args.json:
        print(json.dumps({
            "accuracy": result.accuracy,
            "fallback_rate": result.fallback_rate,
            "n_utterances": result.n_utterances,
            "confusion": result.confusion.tolist(),
            "reference": dict(REFERENCE_RESULTS),
        }, indent=2))
    else:
        print(f"accuracy {result.accuracy:.4f} over {result.n_utterances} utterances "
              f"(fallback rate {result.fallback_rate:.4f})")
    return 0


def _cmd_predict(args) -> int:
    model = load_checkpoint(args.model)
    utterances = []
    if args.context:
        context = load_jsonl(args.context)
        if not context:
            raise DataError(f"{args.context}: no conversations")
        utterances = list(context[0].utterances)
    tokens = tokenize(args.text)
    if not tokens:
        raise DataError("text is empty after tokenization")
    utterances.append(Utterance(text=args.text, tokens=tokens, speaker="",
                                act_tag=None, index=len(utterances)))
    conv = Conversation(id="cli", utterances=utterances)
    pred = model.predict_conversation(conv)[-1]
    out = {
        "label": model.taxonomy.tag_of(pred.label_id),
        "confidence": pred.confidence,
        "used_fallback": pred.used_fallback,
    }
    if pred.coarse_type:
        out["coarse_type"] = pred.coarse_type
    if args.json:
        out["distribution"] = {
            model.taxonomy.tag_of(i): float(p) for i, p in enumerate(pred.distribution)
        }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_synth(args) -> int:
    if args.spec in ("separable", "ambiguous"):
        spec = load_bundled_spec(args.spec)
    else:
        spec = SynthSpec.from_file(args.spec)
    conversations, stats = synth_generate(spec, args.seed, args.utterances)
    save_jsonl(conversations, args.out)
    print(f"wrote {len(conversations)} conversations / {stats.total_utterances} utterances "
          f"to {args.out}")
    if stats.ambiguous_count:
        print(f"ambiguous subset: {stats.ambiguous_count} utterances, "
              f"context-free ceiling {stats.context_free_bayes_ceiling():.3f}")
    return 0


def _cmd_bench(args) -> int:
    config, extra = _load_cli_config(args)
    corpus_path = args.corpus or extra.get("corpus")
    if not corpus_path:
        raise DataError("bench needs --corpus or a 'corpus' entry in the config file")
    taxonomy = resolve_taxonomy(config.taxonomy)
    conversations = load_jsonl(corpus_path, taxonomy)
    split = split_dataset(conversations, _ratios(extra), seed=extra.get("split_seed", 0))
    if args.seeds < 1:
        raise DataError("--seeds must be >= 1")
    report = multi_seed_eval(config, split, seeds=tuple(range(args.seeds)))
    for row in report.rows:
        print(f"seed {row.seed}: validation {row.validation_accuracy:.4f} "
              f"test {row.test_accuracy:.4f} ({row.wall_clock_seconds:.1f}s)")
    std = report.std_test_accuracy
    print(f"test accuracy mean {report.mean_test_accuracy:.4f}"
          + (f" +/- {std:.4f} (sample std)" if std is not None else ""))
    if args.out:
        atomic_write_text(args.out, json.dumps(report.to_dict(), indent=2) + "\n")
        print(f"report written to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    modules = (args.module,) if args.module else GRADCHECK_MODULES
    results = run_gradcheck(modules, seeds=tuple(range(args.seeds)))
    failed = False
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.module:<12} max_rel_err {r.max_rel_err:.3e} over {r.seeds} seeds  {status}")
        failed = failed or not r.passed
    if failed:
        print("gradient check FAILED", file=sys.stderr)
        return NUMERIC_EXIT
    return 0


def _cmd_inspect(args) -> int:
    model = load_checkpoint(args.model)
    info = {
        "preset": model.config.preset,
        "encoder": model.config.encoder,
        "hash": checkpoint_hash(model),
        "parameters": model.params.total_parameters(),
        "vocabulary": len(model.vocab),
        "taxonomy": len(model.taxonomy),
        "label_mode": model.config.label_mode,
        "fallback_threshold": model.config.fallback_threshold,
        "shapes": {name: list(t.value.shape) for name, t in model.params.items()},
    }
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        for key in ("preset", "encoder", "hash", "parameters", "vocabulary", "taxonomy"):
            print(f"{key:<12} {info[key]}")
        for name, shape in info["shapes"].items():
            print(f"  {name:<24} {shape[0]} x {shape[1]}")
    return 0


def _cmd_stats(args) -> int:
    taxonomy = resolve_taxonomy(args.taxonomy)
    conversations = load_jsonl(args.corpus, taxonomy)
    stats = corpus_stats(conversations, taxonomy)
    if args.json:
        print(json.dumps({
            "sentence_count": stats.sentence_count,
            "question_fraction": stats.question_fraction,
            "histogram": stats.histogram,
        }, indent=2))
    else:
        print(f"{stats.sentence_count} sentences, "
              f"question fraction {stats.question_fraction:.3f}")
        for tag, count in stats.histogram.items():
            if count:
                print(f"  {tag:<10} {count}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "synth": _cmd_synth,
    "bench": _cmd_bench,
    "gradcheck": _cmd_gradcheck,
    "inspect": _cmd_inspect,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return NUMERIC_EXIT
    except (DataError, DialactError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_EXIT
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
