"""Command-line entry point: ``pbnmt {decode,bpe-learn,bpe-apply,average,bleu,make-fixture}``.

The log level comes from ``PBNMT_LOG_LEVEL`` (default WARNING); everything
else is set by flags or the decoder config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from .config import ConfigError, DecoderConfig, load_decoder

log = logging.getLogger("pbnmt")

ERROR_MARKER = "[ERROR]"

# per-process decoder for the worker pool
_worker = None


def _open_in(path):
    if path in (None, "-"):
        return sys.stdin
    return open(path, encoding="utf-8")


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", encoding="utf-8")


# ---------------------------------------------------------------------------
# decode


class _Pipeline:
    """Loaded decoder plus the pre/post-processing the config asks for."""

    def __init__(self, config: DecoderConfig):
        from .text import MergeTable

        self.config = config
        self.decoder = load_decoder(config)
        self.merges = MergeTable.load(config.bpe_source) if config.bpe_source else None

    def run(self, index: int, line: str):
        """``(1-best line, n-best text, stats dict)`` for one input line."""
        from .decoder import DecodingError, format_nbest
        from .text import bpe_apply, bpe_undo, truecase

        tokens = line.split()
        if not tokens:
            return "", "", {"id": index, "source_length": 0}
        if self.config.truecase:
            tokens = truecase(tokens)
        if self.merges is not None:
            tokens = bpe_apply(tokens, self.merges)
        try:
            best, nbest, stats = self.decoder.translate(tokens)
        except DecodingError as exc:
            log.warning("line %d: %s", index + 1, exc)
            return f"{ERROR_MARKER} {exc}", "", {"id": index, "source_length": len(tokens),
                                                  "error": str(exc)}
        out = " ".join(bpe_undo(best, strict=False))
        return out, format_nbest(index, nbest), {"id": index, **stats.as_dict()}


def _init_worker(config: DecoderConfig, level: int) -> None:
    global _worker
    logging.basicConfig(level=level)
    _worker = _Pipeline(config)


def _run_worker(item):
    return _worker.run(*item)


def run_decode(config: DecoderConfig, lines, workers: int = 1):
    """Translate ``lines``; yields results in input order."""
    items = list(enumerate(line.rstrip("\n") for line in lines))
    if workers <= 1 or len(items) <= 1:
        pipeline = _Pipeline(config)
        for item in items:
            yield pipeline.run(*item)
        return
    config.check_paths()  # fail in the parent, not in every worker
    with ProcessPoolExecutor(workers, initializer=_init_worker,
                             initargs=(config, log.getEffectiveLevel())) as pool:
        yield from pool.map(_run_worker, items, chunksize=max(1, len(items) // (4 * workers)))


def _cmd_decode(args) -> int:
    config = DecoderConfig.load(args.config)
    overrides = {}
    for attr, key in (("algorithm", "algorithm"), ("expansion", "expansion"), ("mode", "mode"),
                      ("nbest_size", "nbest"), ("stack_size", "stack_size"),
                      ("recombination", "recombination")):
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = str(value)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if overrides:
        text = config.to_text()
        kept = [ln for ln in text.splitlines() if ln.split("=", 1)[0].strip() not in overrides]
        names = {f.name for f in fields(DecoderConfig)}
        for key, value in overrides.items():
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            kept.append(f"{key} = {value}")
        config = DecoderConfig.from_text("\n".join(kept))
    workers = args.workers if args.workers is not None else config.workers
    if workers == 0:
        workers = os.cpu_count() or 1
    config.check_paths()

    with _open_in(args.input) as src:
        lines = src.readlines()
    out = _open_out(args.output)
    nbest_out = open(args.nbest, "w", encoding="utf-8") if args.nbest else None
    stats_out = open(args.stats, "w", encoding="utf-8") if args.stats else None
    try:
        for best, nbest_text, stats in run_decode(config, lines, workers):
            out.write(best + "\n")
            if nbest_out:
                nbest_out.write(nbest_text)
            if stats_out:
                stats_out.write(json.dumps(stats, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
        for f in (nbest_out, stats_out):
            if f:
                f.close()
    return 0


# ---------------------------------------------------------------------------
# other subcommands


def _cmd_bpe_learn(args) -> int:
    from .text import bpe_learn

    with _open_in(args.input) as f:
        corpus = [line.split() for line in f]
    merges = bpe_learn(corpus, args.merges)
    merges.save(args.output)
    log.info("learned %d merges", len(merges))
    return 0


def _cmd_bpe_apply(args) -> int:
    from .text import MergeTable, bpe_apply

    merges = MergeTable.load(args.merges)
    out = _open_out(args.output)
    try:
        with _open_in(args.input) as f:
            for line in f:
                out.write(" ".join(bpe_apply(line.split(), merges)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_average(args) -> int:
    from .averaging import average_files

    average_files(args.inputs, args.out)
    return 0


def _cmd_bleu(args) -> int:
    from .bleu import bleu_files

    report = bleu_files(args.hypotheses, args.references, smooth=args.smooth)
    if args.json:
        print(json.dumps({"bleu": report.bleu, "precisions": list(report.precisions),
                          "brevity_penalty": report.brevity_penalty,
                          "hyp_length": report.hyp_length, "ref_length": report.ref_length}))
    else:
        print(report)
    return 0


def _cmd_make_fixture(args) -> int:
    from .fixture import FixtureSizes, make_fixture

    sizes = {}
    for f in fields(FixtureSizes):
        value = getattr(args, f.name, None)
        if value is not None:
            sizes[f.name] = value
    fx = make_fixture(args.seed, FixtureSizes(**sizes))
    fx.save(args.out)
    print(Path(args.out) / "decoder.ini")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbnmt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="translate a tokenized source file")
    p.add_argument("--config", "-c", required=True)
    p.add_argument("--input", "-i", default="-")
    p.add_argument("--output", "-o", default="-", help="1-best output")
    p.add_argument("--nbest", help="n-best output file (Moses format)")
    p.add_argument("--stats", help="per-sentence JSON lines with scorer query counts")
    p.add_argument("--workers", "-j", type=int, help="worker processes; 0 = one per core")
    p.add_argument("--algorithm")
    p.add_argument("--expansion")
    p.add_argument("--mode")
    p.add_argument("--nbest-size", dest="nbest_size", type=int)
    p.add_argument("--stack-size", dest="stack_size", type=int)
    p.add_argument("--recombination")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("bpe-learn", help="learn BPE merges from a tokenized corpus")
    p.add_argument("--input", "-i", default="-")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--merges", "-s", type=int, required=True, help="number of merge operations")
    p.set_defaults(func=_cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="segment a tokenized file with learned merges")
    p.add_argument("--merges", "-m", required=True)
    p.add_argument("--input", "-i", default="-")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=_cmd_bpe_apply)

    p = sub.add_parser("average", help="element-wise average of scorer parameter files")
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=_cmd_average)

    p = sub.add_parser("bleu", help="corpus BLEU-4 of hypotheses against references")
    p.add_argument("hypotheses")
    p.add_argument("references")
    p.add_argument("--smooth", action="store_true", help="add-one smoothing for orders 2-4")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bleu)

    p = sub.add_parser("make-fixture", help="write a synthetic corpus and all models")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--min-len", dest="min_len", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--src-words", dest="src_words", type=int)
    p.add_argument("--tgt-words", dest="tgt_words", type=int)
    p.add_argument("--num-scorers", dest="num_scorers", type=int)
    p.set_defaults(func=_cmd_make_fixture)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("PBNMT_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"pbnmt {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
