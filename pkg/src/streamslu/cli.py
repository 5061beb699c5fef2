"""Command-line surface: corpus generation, training, evaluation, live
streaming decode, and early-spotting reports.

Exit codes: 0 success, 2 usage error, 3 data/file error, 4 numeric
divergence (streaming vs offline mismatch under --verify). Failures print a
single machine-parseable line `error <kind>: <message>` to stderr. The
STREAMSLU_OUT environment variable supplies the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import data, decoder, encoder, evaluation, training
from .data import DataError
from .encoder import CheckpointError

ENV_OUT = "STREAMSLU_OUT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4


def _default_out() -> str:
    return os.environ.get(ENV_OUT, ".")


def _fail(kind: str, message: str) -> None:
    print(f"error {kind}: {message}", file=sys.stderr)


def _write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _load_split(directory, corpus: str) -> dict[str, data.Dataset]:
    return {part: data.load_dataset(directory, f"{corpus}_{part}")
            for part in data.PARTS}


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        s1_train, s1_val, s1_test = (int(x) for x in args.sizes.split(","))
    except ValueError:
        _fail("usage", f"--sizes wants train,val,test counts, got {args.sizes!r}")
        return EXIT_USAGE
    sizes = data.CorpusSizes(s1_train=s1_train, s1_val=s1_val, s1_test=s1_test)
    params = data.GeneratorParams(feature_dim=args.feature_dim)
    corpora = data.build_corpora(args.seed, sizes=sizes, params=params)
    data.save_corpora(corpora, args.out)
    for corpus in data.CORPORA:
        counts = ",".join(str(len(corpora[corpus][p])) for p in data.PARTS)
        print(f"{corpus}: {counts} utterances (train,val,test) -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    if args.config:
        cfg = training.TrainConfig.from_json(args.config)
    else:
        cfg = training.TrainConfig()
    if args.mode:
        cfg.mode = args.mode
    if args.train_split:
        cfg.train_split = args.train_split
    if args.deterministic:
        cfg.deterministic = True

    corpora = {cfg.train_split: _load_split(args.data, cfg.train_split)}
    if cfg.mode != "ctc_only":
        corpora["CHAR"] = _load_split(args.data, "CHAR")
    result = training.run_pipeline(cfg, corpora)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prefix = f"{cfg.train_split}_{cfg.mode}"
    ckpt = out / f"{prefix}.ckpt"
    encoder.save_checkpoint(result.model, ckpt)
    training.write_log(result.log, out / f"{prefix}_log.csv")
    cfg.to_json(out / f"{prefix}_config.json")
    final = [r for r in result.log if r.phase == "ctc"]
    best = max((r.val_accuracy for r in final), default=float("nan"))
    print(f"trained {prefix}: best val accuracy {best:.4f} -> {ckpt}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    model = encoder.load_checkpoint(args.checkpoint)
    ds = data.load_dataset(args.data, f"{args.test_split}_test")
    blank = model.config.blank_index
    preds, refs = [], []
    for u in ds.utterances:
        pred, _ = decoder.decode_offline(encoder.forward(model, u.features), blank)
        preds.append(pred)
        refs.append(u.intent_labels)
    acc = evaluation.sequence_accuracy(preds, refs)
    confusion = evaluation.confusion_matrix(preds, refs, model.config.vocab_size)

    out = Path(args.out)
    prefix = f"{Path(args.checkpoint).stem}_{args.test_split}"
    _write_csv(out / f"{prefix}_accuracy.csv", ["metric", "value"],
               [("sequence_accuracy", float(acc)), ("utterances", len(ds))])
    names = model.config.names()
    _write_csv(out / f"{prefix}_confusion.csv", ["reference", "predicted", "count"],
               [(names[r], names[p], int(confusion[r, p]))
                for r in range(confusion.shape[0])
                for p in range(confusion.shape[1])])
    print(f"{prefix}: sequence accuracy {acc:.4f} over {len(ds)} utterances")
    return EXIT_OK


# ---------------------------------------------------------------------------
# stream
# ---------------------------------------------------------------------------


def _resolve_record(path_str: str) -> tuple[Path, str]:
    path = Path(path_str)
    name = path.name
    for suffix in (".bin", ".json"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return path.parent, name


def cmd_stream(args) -> int:
    if args.chunk_frames < 1:
        _fail("usage", "--chunk-frames must be >= 1")
        return EXIT_USAGE
    model = encoder.load_checkpoint(args.checkpoint)
    directory, record = _resolve_record(args.input)
    ds = data.load_dataset(directory, record)
    if not 0 <= args.index < len(ds):
        _fail("data", f"utterance index {args.index} out of range (0..{len(ds)-1})")
        return EXIT_DATA
    utt = ds.utterances[args.index]

    names = model.config.names()
    geometry = decoder.FrameGeometry.from_config(model.config)
    blank = model.config.blank_index
    enc_state = encoder.new_stream(model)
    dec_state = decoder.DecoderState()

    def consume(rows):
        for row in rows:
            step = dec_state.frame_index
            emission, _ = decoder.greedy_step(row, dec_state, blank)
            if emission is not None:
                print(f"{step}\t{geometry.emit_ms(step):.1f}\t{names[emission]}",
                      flush=True)

    feats = utt.features
    for start in range(0, feats.shape[0], args.chunk_frames):
        consume(encoder.stream_push(model, enc_state,
                                    feats[start : start + args.chunk_frames]))
    consume(encoder.stream_close(model, enc_state))

    if args.verify:
        offline_labels, offline_frames = decoder.decode_offline(
            encoder.forward(model, feats), blank)
        if (dec_state.emitted, dec_state.emitted_frames) != (
                offline_labels, offline_frames):
            _fail("divergence",
                  f"streamed {dec_state.emitted}@{dec_state.emitted_frames} != "
                  f"offline {offline_labels}@{offline_frames}")
            return EXIT_DIVERGENCE
        print("verified: streamed emissions equal offline decode",
              file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# spotting
# ---------------------------------------------------------------------------


def cmd_spotting(args) -> int:
    model = encoder.load_checkpoint(args.checkpoint)
    ds = data.load_dataset(args.data, f"{args.test_split}_test")
    blank = model.config.blank_index
    geometry = decoder.FrameGeometry.from_config(model.config)

    events, lengths = [], []
    unmatched = 0
    for u in ds.utterances:
        labels, frames = decoder.decode_offline(
            encoder.forward(model, u.features), blank)
        res = decoder.spotting_positions(list(zip(labels, frames)),
                                         u.boundaries_ms, geometry)
        events.extend(res.events)
        lengths.extend([len(u.char_labels)] * len(res.events))
        unmatched += res.unmatched_emissions + res.unmatched_boundaries
    if not events:
        _fail("data", "decoded no emissions; nothing to report")
        return EXIT_DATA

    report = evaluation.early_spotting_report(events, bucket_ms=args.bucket_ms)
    series = evaluation.length_vs_position(events, lengths)

    out = Path(args.out)
    prefix = f"{Path(args.checkpoint).stem}_{args.test_split}"
    _write_csv(out / f"{prefix}_spotting_summary.csv", ["metric", "value"],
               report.summary_rows()
               + [("rank_correlation_length_position", series.correlation),
                  ("unmatched", unmatched)])
    _write_csv(out / f"{prefix}_spotting_histogram.csv", ["bucket_ms", "count"],
               [(float(lo), int(c)) for lo, c in report.histogram])
    _write_csv(out / f"{prefix}_spotting_lengths.csv",
               ["length_chars", "relative_ms"],
               [(float(l), float(r)) for l, r in series.pairs])
    print(f"{prefix}: {report.count} events, {report.fraction_early:.2%} early, "
          f"length/position correlation {series.correlation:+.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamslu",
        description="Streaming multi-intent recognition pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate the synthetic corpora")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--sizes", default="2000,200,400",
                   help="single-intent train,val,test counts")
    p.add_argument("--feature-dim", type=int, default=8)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run a training pipeline")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", default=_default_out())
    p.add_argument("--mode", choices=training.MODES)
    p.add_argument("--train-split", choices=("S1", "M2", "M3", "MM"))
    p.add_argument("--deterministic", action="store_true",
                   help="force serial single-threaded execution")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="offline decode + accuracy on a test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--test-split", choices=("S1", "M2", "M3"), required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="chunked streaming decode of one utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="record file (.bin)")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--chunk-frames", type=int, default=16)
    p.add_argument("--verify", action="store_true",
                   help="exit 4 unless streamed emissions equal offline decode")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("spotting", help="early-spotting statistics on a test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--test-split", choices=("S1", "M2", "M3"), required=True)
    p.add_argument("--bucket-ms", type=float, default=100.0)
    p.set_defaults(func=cmd_spotting)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except (DataError, CheckpointError) as e:
        _fail("data", str(e))
        return EXIT_DATA
    except FileNotFoundError as e:
        _fail("data", f"missing file: {e.filename or e}")
        return EXIT_DATA
    except ValueError as e:
        _fail("usage", str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
