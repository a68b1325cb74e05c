"""Command-line entry point: ``mgfte {synth,train,eval,extract,gradcheck,dump-fusion}``.

Results go to stdout as JSON.  Failures print a single JSON object
``{"error": <kind>, "message": <text>}`` on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .corpus import generate_synthetic_corpus, parse_sentences, write_corpus
from .fusion import dump_fusion_matrix
from .harness import (
    TrainConfig,
    config_field_types,
    evaluate,
    extract,
    load_config_file,
    load_model,
    run_gradcheck,
    support_groups,
    train,
)
from .model import Flags, forward_query, prepare_support


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep usage errors on one parsable line
        raise CliError(message)


_TYPES = {"int": int, "float": float, "str": str}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file supplying defaults; explicit flags win")
    for name, kind in config_field_types().items():
        flag = "--" + name.replace("_", "-")
        if kind == "bool":
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        else:
            p.add_argument(flag, type=_TYPES.get(kind, str), default=None, metavar=name.upper())


def _config_from(args: argparse.Namespace) -> TrainConfig:
    values = load_config_file(args.config) if args.config else {}
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return TrainConfig(**values)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _tokens(args) -> list[str]:
    return args.tokens if args.tokens else args.sentence.split()


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> None:
    corpus = generate_synthetic_corpus(
        args.relations, args.per_relation, args.vocab_size,
        (args.min_len, args.max_len), (args.min_entity, args.max_entity),
        seed=args.seed, domain=args.domain, entity_pool=args.entity_pool,
    )
    if args.output:
        write_corpus(corpus, args.output)
        _emit({"path": args.output, "relations": corpus.relations, "sentences": len(corpus)})
    else:
        for s in corpus.sentences():
            sys.stdout.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def cmd_train(args) -> None:
    config = _config_from(args)
    ckpt = train(config)
    _emit({"checkpoint": str(ckpt), "vocab": str(ckpt.parent / "vocab.json"), "episodes": config.episodes})


def cmd_eval(args) -> None:
    config = _config_from(args)
    corpus = config.eval_corpus
    if not corpus:
        raise CliError("eval needs --eval-corpus")
    metrics = evaluate(args.checkpoint, corpus, config, episode_log=args.episode_log)
    _emit(metrics.to_dict())


def cmd_extract(args) -> None:
    config = _config_from(args)
    triple = extract(args.checkpoint, args.support, _tokens(args), config)
    _emit(triple.to_dict())


def cmd_gradcheck(args) -> None:
    flags = Flags(args.disable_pfm, args.disable_rge, args.disable_egr, args.literal_k)
    report = run_gradcheck(args.seed, args.d, flags, args.lambda_ent)
    ok = report.passed(args.tolerance)
    _emit({
        "passed": ok,
        "tolerance": args.tolerance,
        "max_rel_error": report.max_rel_error,
        "n_checked": report.n_checked,
        "per_param": report.per_param,
        "nonfinite": report.nonfinite,
    })
    if not ok:
        raise CliError(f"gradient check failed: max relative error {report.max_rel_error:.3g}")


def cmd_dump_fusion(args) -> None:
    config = _config_from(args)
    tokens = _tokens(args)
    params, vocab, _ = load_model(args.checkpoint, config.vocab_path)
    with Path(args.support).open(encoding="utf-8") as fh:
        rels, groups = support_groups(parse_sentences(fh))
    state = prepare_support(params, vocab, groups, rels, config.flags)
    fwd = forward_query(params, vocab, state, tokens, config.flags)
    if args.relation is None:
        rel = fwd.predicted
    elif args.relation in rels:
        rel = rels.index(args.relation)
    else:
        raise CliError(f"relation {args.relation!r} is not in the support set")
    tables = dump_fusion_matrix(fwd.Q, state.prototypes[rel], tokens)
    out = Path(args.csv_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, text in tables.items():
        path = out / f"{name}.csv"
        path.write_text(text, encoding="utf-8")
        paths[name] = str(path)
    _emit({"relation": rels[rel], "files": paths})


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mgfte", description="Few-shot relational triple extraction on numpy.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic corpus as JSONL")
    p.add_argument("--relations", type=int, default=5)
    p.add_argument("--per-relation", type=int, default=40)
    p.add_argument("--vocab-size", type=int, default=300)
    p.add_argument("--min-len", type=int, default=8)
    p.add_argument("--max-len", type=int, default=14)
    p.add_argument("--min-entity", type=int, default=1)
    p.add_argument("--max-entity", type=int, default=3)
    p.add_argument("--entity-pool", type=int, default=4, help="surface forms per entity slot")
    p.add_argument("--domain", default="syn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="file to write; stdout when omitted")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="episodic training")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="micro-F1 over seeded test episodes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episode-log", help="optional per-episode CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    for name, func, helptext in (
        ("extract", cmd_extract, "predict one triple for a sentence"),
        ("dump-fusion", cmd_dump_fusion, "write the token/prototype attention tables as CSV"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--support", required=True, help="support JSONL, same count per relation")
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--sentence", help="whitespace-tokenized sentence")
        group.add_argument("--tokens", nargs="+")
        if name == "dump-fusion":
            p.add_argument("--relation", help="relation id (default: the predicted one)")
            p.add_argument("--csv-dir", default="fusion")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="finite-difference check on a micro-episode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--lambda-ent", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    for flag in ("disable_pfm", "disable_rge", "disable_egr", "literal_k"):
        p.add_argument("--" + flag.replace("_", "-"), action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        kind = "usage" if isinstance(exc, CliError) else type(exc).__name__
        message = " ".join(str(exc).split())
        sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
        return 2 if kind == "usage" else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
