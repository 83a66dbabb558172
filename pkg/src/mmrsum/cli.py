"""Command-line interface: corpus synthesis, training, guided
summarization, scoring, and analysis reports.

Every subcommand echoes its fully resolved configuration on stdout as a
single ``config {...}`` JSON line before doing any work, so runs are
self-describing. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import torch

from mmrsum.checkpoint import Bundle, load_bundle, save_bundle
from mmrsum.controller import (
    MASK_VARIANTS,
    MmrConfig,
    PointerGeneratorAbstractor,
    pg_mmr_summarize,
)
from mmrsum.corpus import (
    Topic,
    build_megadoc,
    load_sds_pairs,
    load_topics,
    save_sds_jsonl,
    save_topics_jsonl,
    synth_fusion_corpus,
)
from mmrsum.errors import DataError, NumericalError
from mmrsum.evaluation import (
    content_location_report,
    evaluate,
    extractiveness_report,
)
from mmrsum.neural import HyperParams, train_sds
from mmrsum.salience import (
    IMPORTANCE_VARIANTS,
    ImportanceTrainConfig,
    train_importance,
)
from mmrsum.textproc import as_tokens


class UsageError(Exception):
    """Bad flag or config-file value; maps to exit code 1."""


SUMMARIZE_DEFAULTS = {
    "variant": "cosine",
    "mask": "mute",
    "k": 7,
    "lambda": 0.6,
    "min_words": 100,
    "max_words": 120,
    "beam": 1,
    "seed": 0,
    "jobs": 1,
}

_COERCE = {
    "variant": str,
    "mask": str,
    "k": int,
    "lambda": float,
    "min_words": int,
    "max_words": int,
    "beam": int,
    "seed": int,
    "jobs": int,
}


def _echo(command: str, resolved: dict) -> None:
    print(f"config {json.dumps({'command': command, **resolved}, sort_keys=True)}")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Plain-text ``key = value`` lines; ``#`` starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise UsageError(f"{p}:{lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def resolve_summarize_config(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by flags. The
    bestsummrec variant defaults K to 2 unless K was given explicitly."""
    resolved = dict(SUMMARIZE_DEFAULTS)
    file_cfg = read_config_file(args.config) if args.config else {}
    unknown = sorted(set(file_cfg) - set(SUMMARIZE_DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in file_cfg.items():
        try:
            resolved[key] = _COERCE[key](value)
        except ValueError as exc:
            raise UsageError(f"config key {key}: bad value {value!r}") from exc
    flags = {
        "variant": args.variant,
        "mask": args.mask,
        "k": args.k,
        "lambda": args.lam,
        "min_words": args.min_words,
        "max_words": args.max_words,
        "beam": args.beam,
        "seed": args.seed,
        "jobs": args.jobs,
    }
    for key, value in flags.items():
        if value is not None:
            resolved[key] = value
    if resolved["variant"] == "bestsummrec" and args.k is None and "k" not in file_cfg:
        resolved["k"] = 2
    if resolved["variant"] not in IMPORTANCE_VARIANTS:
        raise UsageError(f"unknown importance variant {resolved['variant']!r}")
    if resolved["mask"] not in MASK_VARIANTS:
        raise UsageError(f"unknown mask variant {resolved['mask']!r}")
    if resolved["jobs"] < 1:
        raise UsageError("jobs must be at least 1")
    return resolved


def _mmr_config(resolved: dict) -> MmrConfig:
    try:
        return MmrConfig(
            k=resolved["k"],
            lam=resolved["lambda"],
            mask=resolved["mask"],
            min_len=resolved["min_words"],
            max_len=resolved["max_words"],
            beam=resolved["beam"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# summarize, with optional topic-level parallelism
# ---------------------------------------------------------------------------

_WORKER: dict = {}


def _worker_init(model_path: str, resolved: dict) -> None:
    torch.set_num_threads(1)
    _WORKER["bundle"] = load_bundle(model_path)
    _WORKER["resolved"] = resolved


def _worker_run(topic: Topic) -> tuple[str, list[str], dict]:
    return _summarize_one(topic, _WORKER["bundle"], _WORKER["resolved"])


def _summarize_one(
    topic: Topic, bundle: Bundle, resolved: dict
) -> tuple[str, list[str], dict]:
    mega = build_megadoc(topic)
    result = pg_mmr_summarize(
        mega,
        PointerGeneratorAbstractor(bundle.abstractor),
        importance_variant=resolved["variant"],
        config=_mmr_config(resolved),
        references=topic.references,
        importance_model=bundle.importance,
    )
    return topic.topic_id, list(result.draft.tokens), result.trace_payload()


def cmd_summarize(args: argparse.Namespace) -> int:
    resolved = resolve_summarize_config(args)
    _echo("summarize", resolved)
    _mmr_config(resolved)  # fail fast on bad bounds before any heavy work
    topics = sorted(load_topics(args.topics), key=lambda t: t.topic_id)
    if not topics:
        raise DataError(f"no topics in {args.topics}")
    bundle = load_bundle(args.model)
    if bundle.abstractor is None:
        raise DataError(f"{args.model} holds no abstractor parameters")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_dir = Path(args.trace_out) if args.trace_out else None
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)

    if resolved["jobs"] == 1:
        outputs = [_summarize_one(t, bundle, resolved) for t in topics]
    else:
        with ProcessPoolExecutor(
            max_workers=resolved["jobs"],
            initializer=_worker_init,
            initargs=(args.model, resolved),
        ) as pool:
            outputs = list(pool.map(_worker_run, topics))

    # Job count is an execution detail: outputs must be byte-identical
    # across --jobs settings, so it stays out of the manifest.
    manifest: dict = {
        "config": {k: v for k, v in resolved.items() if k != "jobs"},
        "topics": [],
    }
    for topic_id, tokens, trace in outputs:
        (out_dir / f"{topic_id}.txt").write_text(
            " ".join(tokens) + "\n", encoding="utf-8"
        )
        entry = {"id": topic_id, "summary": f"{topic_id}.txt"}
        if trace_dir is not None:
            trace_name = f"{topic_id}.trace.json"
            (trace_dir / trace_name).write_text(
                json.dumps(trace, sort_keys=True) + "\n", encoding="utf-8"
            )
            entry["trace"] = trace_name
        manifest["topics"].append(entry)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(outputs)} summaries to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Other subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    resolved = {
        "seed": args.seed,
        "topics": args.topics,
        "vocab": args.vocab,
        "docs_per_topic": args.docs_per_topic,
        "out_dir": str(args.out_dir),
    }
    _echo("synth", resolved)
    try:
        corpus = synth_fusion_corpus(
            seed=args.seed,
            n_topics=args.topics,
            vocab_size=args.vocab,
            docs_per_topic=args.docs_per_topic,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_topics_jsonl(corpus.topics, out_dir / "topics.jsonl")
    save_sds_jsonl(corpus.sds_pairs, out_dir / "sds.jsonl")
    print(
        f"wrote {len(corpus.topics)} topics and {len(corpus.sds_pairs)} "
        f"training pairs to {out_dir}"
    )
    return 0


def cmd_train_abstractor(args: argparse.Namespace) -> int:
    resolved = {
        "sds": str(args.sds),
        "out": str(args.out),
        "embed_dim": args.embed_dim,
        "hidden_dim": args.hidden_dim,
        "max_vocab": args.max_vocab,
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "grad_clip": args.grad_clip,
        "seed": args.seed,
        "lenient": args.lenient,
    }
    _echo("train-abstractor", resolved)
    pairs = load_sds_pairs(args.sds, lenient=args.lenient)
    try:
        hyper = HyperParams(
            embed_dim=args.embed_dim,
            hidden_dim=args.hidden_dim,
            max_vocab=args.max_vocab,
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            grad_clip=args.grad_clip,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = train_sds(pairs, hyper)
    save_bundle(args.out, abstractor=result.params)
    losses = ", ".join(f"{x:.4f}" for x in result.epoch_losses)
    print(f"epoch losses: {losses}")
    print(f"saved abstractor to {args.out}")
    return 0


def cmd_train_importance(args: argparse.Namespace) -> int:
    resolved = {
        "sds": str(args.sds),
        "model": str(args.model),
        "out": str(args.out),
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "epsilon": args.epsilon,
        "l2": args.l2,
        "holdout": args.holdout,
        "loss": args.loss,
        "seed": args.seed,
    }
    _echo("train-importance", resolved)
    bundle = load_bundle(args.model)
    if bundle.abstractor is None:
        raise DataError(f"{args.model} holds no abstractor parameters")
    pairs = load_sds_pairs(args.sds)
    try:
        config = ImportanceTrainConfig(
            epsilon=args.epsilon,
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            l2=args.l2,
            seed=args.seed,
            holdout_fraction=args.holdout,
            loss=args.loss,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model = train_importance(pairs, bundle.abstractor, config)
    save_bundle(args.out, abstractor=bundle.abstractor, importance=model)
    print(
        f"train loss {model.train_loss:.4f}, holdout mae {model.holdout_mae:.4f}"
    )
    print(f"saved bundle to {args.out}")
    return 0


def _read_summaries(summaries_dir: str | Path) -> tuple[dict[str, list[str]], dict]:
    """Summary surfaces per topic id, plus the manifest config if present."""
    d = Path(summaries_dir)
    if not d.is_dir():
        raise DataError(f"summary directory not found: {d}")
    manifest_config: dict = {}
    manifest_path = d / "manifest.json"
    summaries: dict[str, list[str]] = {}
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest_config = manifest.get("config", {})
        entries = [(e["id"], e["summary"]) for e in manifest["topics"]]
    else:
        entries = [(p.stem, p.name) for p in sorted(d.glob("*.txt"))]
    if not entries:
        raise DataError(f"no summaries found in {d}")
    for topic_id, name in entries:
        text = (d / name).read_text(encoding="utf-8").strip()
        summaries[topic_id] = text.split() if text else []
    return summaries, manifest_config


def cmd_evaluate(args: argparse.Namespace) -> int:
    resolved = {
        "topics": str(args.topics),
        "summaries": str(args.summaries),
        "truncate_100": args.truncate_100,
        "stem": args.stem,
        "out": str(args.out) if args.out else None,
    }
    _echo("evaluate", resolved)
    topics = load_topics(args.topics)
    surfaces, manifest_config = _read_summaries(args.summaries)
    summaries = {tid: as_tokens(toks) for tid, toks in surfaces.items()}
    report = evaluate(
        summaries,
        topics,
        truncate_100=args.truncate_100,
        stem=args.stem,
        config=manifest_config,
    )
    print(report.render_table())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    resolved = {
        "topics": str(args.topics),
        "summaries": str(args.summaries),
        "out": str(args.out) if args.out else None,
    }
    _echo("report", resolved)
    topics = load_topics(args.topics)
    surfaces, _ = _read_summaries(args.summaries)
    megadocs = {
        t.topic_id: build_megadoc(t) for t in topics if t.topic_id in surfaces
    }
    missing = sorted(set(surfaces) - set(megadocs))
    if missing:
        raise DataError(f"summaries without topics: {', '.join(missing)}")
    combined = extractiveness_report(surfaces, megadocs).merged(
        content_location_report(surfaces, megadocs)
    )
    print(combined.render_table())
    if args.out:
        Path(args.out).write_text(combined.to_json() + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmrsum",
        description="Guided multi-document summarization toolkit",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--vocab", type=int, default=120)
    p.add_argument("--docs-per-topic", type=int, default=3)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-abstractor", help="train the encoder-decoder on SDS pairs")
    p.add_argument("--sds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--max-vocab", type=int, default=5000)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--grad-clip", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lenient", action="store_true", help="skip malformed lines")
    p.set_defaults(func=cmd_train_abstractor)

    p = sub.add_parser("train-importance", help="fit the sentence importance regressor")
    p.add_argument("--sds", required=True)
    p.add_argument("--model", required=True, help="bundle with abstractor parameters")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--loss", choices=("epsilon", "squared"), default="epsilon")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_importance)

    p = sub.add_parser("summarize", help="summarize topics with guided decoding")
    p.add_argument("--topics", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--variant", choices=IMPORTANCE_VARIANTS, default=None)
    p.add_argument("--mask", choices=MASK_VARIANTS, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--min-words", type=int, default=None)
    p.add_argument("--max-words", type=int, default=None)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--trace-out", default=None, help="directory for decode traces")
    p.add_argument("--config", default=None, help="key = value config file")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="score summaries against references")
    p.add_argument("--topics", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--truncate-100", action="store_true")
    p.add_argument("--stem", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="extractiveness and content-location analysis")
    p.add_argument("--topics", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args_list = list(sys.argv[1:] if argv is None else argv)
    if not args_list:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(args_list)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
