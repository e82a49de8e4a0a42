"""Command-line entry point: ``contentgen <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import corpus as C
from . import pipeline as P
from .lexicon import ExtractionMode, content_pool, extract_content_sequence, load_function_lexicon
from .metrics import evaluate_corpus, load_embeddings, read_token_lines
from .models import Architecture, HierarchicalModel, ModelConfig

log = logging.getLogger("contentgen")


def _lexicon(args, vocab=None):
    return load_function_lexicon(args.lexicon, corpus_vocab=vocab)


def _write_lines(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(" ".join(row) + "\n")


def _decoded(vocab, ids):
    return [vocab.id_to_token(i) for i in ids]


# subcommands -------------------------------------------------------------------


def cmd_preprocess(args):
    if args.format == "dailydialog":
        with open(args.dialogs, encoding="utf-8") as f:
            raw = f.read().splitlines()
        acts = [None] * len(raw)
        if args.acts:
            with open(args.acts, encoding="utf-8") as f:
                acts = f.read().splitlines()
        dialogs = [C.parse_dailydialog(r, a) for r, a in zip(raw, acts)]
        dialogs = [d for d in dialogs if d is not None]
    else:
        with open(args.lines, encoding="iso-8859-1") as lf, open(args.conversations, encoding="iso-8859-1") as cf:
            dialogs = C.parse_cornell_movie(lf, cf)
    dialogs = [C.preprocess_dialog(d, args.max_len) for d in dialogs]
    dialogs = [d for d in dialogs if len(d.sentences) >= 2]
    ratios = tuple(float(x) for x in args.split.split(","))
    splits, indices = C.split_dialogs(dialogs, args.seed, ratios)
    os.makedirs(args.out, exist_ok=True)
    for name, part, idx in zip(("train", "valid", "test"), splits, indices):
        C.write_canonical(part, os.path.join(args.out, f"{name}.txt"))
        with open(os.path.join(args.out, f"{name}.index"), "w", encoding="utf-8") as f:
            f.write("".join(f"{i}\n" for i in idx))
        if args.acts:
            C.write_acts(part, os.path.join(args.out, f"{name}.acts"))
    print(f"{len(dialogs)} dialogs -> " + ", ".join(f"{len(s)}" for s in splits))


def cmd_build_vocab(args):
    dialogs = C.read_canonical(args.corpus)
    if args.no_lemmas:
        vocab = C.build_vocab(dialogs, args.cap)
    else:
        vocab = P.build_content_vocab(dialogs, args.cap, _lexicon(args))
    vocab.save(args.out)
    print(f"{len(vocab)} entries (including 4 specials)")


def cmd_extract(args):
    lex = _lexicon(args)
    mode = ExtractionMode(args.mode)
    rows = [extract_content_sequence(s, lex, mode).lemmas for s in read_token_lines(args.input)]
    if args.out:
        _write_lines(args.out, rows)
    else:
        for r in rows:
            print(" ".join(r))


def _triplets(path, acts_path, lex, vocab, window):
    dialogs = C.read_canonical(path)
    if acts_path:
        C.attach_acts(dialogs, acts_path)
    windows = [w for d in dialogs for w in C.to_context_windows(d, window)]
    return P.build_training_triplets(windows, lex, vocab)


def cmd_train(args):
    vocab = C.Vocabulary.load(args.vocab)
    lex = _lexicon(args)
    config = ModelConfig(
        vocab_size=len(vocab),
        architecture=args.arch,
        emb_size=args.emb_size,
        enc_hidden=args.enc_hidden,
        dec_hidden=args.dec_hidden,
        window=args.window,
        da_head=args.da_head,
    )
    triplets = _triplets(args.train, args.acts, lex, vocab, args.window)
    if args.triplet_cache:
        P.write_triplets(triplets, args.triplet_cache)
    model = HierarchicalModel(config, seed=args.seed)
    if args.embeddings:
        hits = model.load_embeddings(load_embeddings(args.embeddings, vocab), vocab)
        log.info("initialized %d of %d embedding rows from %s", hits, len(vocab), args.embeddings)
    pool = content_pool(vocab, lex)
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "loss.log")
    with open(log_path, "w", encoding="utf-8", newline="\n") as loss_log:
        for epoch in range(1, args.epochs + 1):
            report = P.train_epoch(
                model, triplets, rng, batch_size=args.batch_size, lr=args.lr,
                insert_pool=pool, noise=not args.no_noise, epoch=epoch,
            )
            loss_log.write(report.log_line() + "\n")
            loss_log.flush()
            metrics = {"content_loss": f"{report.content_loss:.6f}", "sentence_loss": f"{report.sentence_loss:.6f}",
                       "total_loss": f"{report.total_loss:.6f}"}
            P.save_checkpoint(model, os.path.join(args.out, f"epoch-{epoch:02d}"), vocab, epoch, metrics)
            print(report.log_line(), flush=True)


def _load(args):
    vocab = C.Vocabulary.load(args.vocab)
    model, _ = P.load_checkpoint(args.checkpoint, vocab)
    return model, vocab


def cmd_generate(args):
    model, vocab = _load(args)
    hyps, contents, refs = [], [], []
    for d in C.read_canonical(args.contexts):
        for ctx, ref in P.contexts_from_dialog(d, vocab, model.config.window):
            g = P.generate(model, ctx, beam=args.beam)
            hyps.append(_decoded(vocab, g.response))
            contents.append(_decoded(vocab, g.content))
            refs.append(ref)
    _write_lines(args.out, hyps)
    if args.content_out and model.config.architecture.has_content:
        _write_lines(args.content_out, contents)
    if args.refs_out:
        _write_lines(args.refs_out, refs)
    print(f"{len(hyps)} responses written to {args.out}")


def cmd_evaluate(args):
    refs = read_token_lines(args.refs)
    hyps = read_token_lines(args.hyps)
    table = load_embeddings(args.embeddings) if args.embeddings else None
    report = evaluate_corpus(refs, hyps, _lexicon(args), table)
    text = report.dumps()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    sys.stdout.write(text)


def cmd_chat(args, stdin=None, stdout=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    model, vocab = _load(args)
    window = model.config.window
    history: list[list[str]] = []
    interactive = stdin.isatty()
    while True:
        if interactive:
            stdout.write("> ")
            stdout.flush()
        line = stdin.readline()
        if not line:
            break
        sentences = [s[: model.config.max_sent_len] for s in C.segment(C.tokenize(line)) if s]
        if not sentences:
            continue
        history = (history + sentences)[-window:]
        g = P.generate(model, [vocab.encode(s) for s in history], beam=args.beam)
        reply = _decoded(vocab, g.response)
        if model.config.architecture.has_content:
            stdout.write("content: " + " ".join(_decoded(vocab, g.content)) + "\n")
        stdout.write("response: " + " ".join(reply) + "\n")
        stdout.flush()
        if reply:
            history = (history + [reply])[-window:]


# parser -----------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="contentgen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def lexicon_flag(p):
        p.add_argument("--lexicon", help="function-word file (default: bundled list)")

    p = sub.add_parser("preprocess", help="tokenize, segment and split a raw corpus")
    p.add_argument("--format", choices=("dailydialog", "cornell"), default="dailydialog")
    p.add_argument("--dialogs", help="DailyDialog dialogues_text.txt")
    p.add_argument("--acts", help="DailyDialog dialogues_act.txt")
    p.add_argument("--lines", help="Cornell movie_lines.txt")
    p.add_argument("--conversations", help="Cornell movie_conversations.txt")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="0.8,0.1,0.1")
    p.add_argument("--max-len", type=int, default=C.MAX_SENT_LEN)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("build-vocab", help="frequency-capped vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cap", type=int, default=20000)
    p.add_argument("--no-lemmas", action="store_true", help="count surface tokens only")
    p.add_argument("--out", required=True)
    lexicon_flag(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("extract", help="content-word sequences, one per input line")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("train", "eval"), default="eval")
    p.add_argument("--out")
    lexicon_flag(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a model, checkpointing every epoch")
    p.add_argument("--train", required=True, help="canonical training corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--arch", choices=[a.value for a in Architecture], default="hed-ced")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.0003)
    p.add_argument("--window", type=int, default=C.DEFAULT_WINDOW)
    p.add_argument("--emb-size", type=int, default=200)
    p.add_argument("--enc-hidden", type=int, default=300)
    p.add_argument("--dec-hidden", type=int, default=200)
    p.add_argument("--embeddings", help="pretrained vectors used to initialize the embedding table")
    p.add_argument("--acts", help="per-sentence dialog-act labels aligned with --train")
    p.add_argument("--da-head", action="store_true")
    p.add_argument("--no-noise", action="store_true", help="disable content-sequence noise injection")
    p.add_argument("--triplet-cache", help="also write the id-encoded triplets here")
    p.add_argument("--out", required=True)
    lexicon_flag(p)
    p.set_defaults(func=cmd_train)

    def model_flags(p):
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--vocab", required=True)
        p.add_argument("--beam", type=int, default=0, help="beam width (0 or 1: greedy)")

    p = sub.add_parser("generate", help="decode a response for every context in a corpus file")
    model_flags(p)
    p.add_argument("--contexts", required=True, help="canonical dialogs; every sentence after the first is a target")
    p.add_argument("--out", required=True)
    p.add_argument("--content-out")
    p.add_argument("--refs-out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out")
    lexicon_flag(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("chat", help="interactive loop over standard input")
    model_flags(p)
    p.set_defaults(func=cmd_chat)
    return parser


def _check_paths(args):
    if args.command == "preprocess":
        if args.format == "dailydialog" and not args.dialogs:
            raise SystemExit("preprocess: --dialogs is required for DailyDialog")
        if args.format == "cornell" and not (args.lines and args.conversations):
            raise SystemExit("preprocess: --lines and --conversations are required for Cornell")
    for name in ("dialogs", "acts", "lines", "conversations", "corpus", "input", "train", "vocab",
                 "checkpoint", "contexts", "refs", "hyps", "embeddings", "lexicon"):
        path = getattr(args, name, None)
        if path and not os.path.exists(path):
            raise FileNotFoundError(f"{name.replace('_', '-')}: no such file {path}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _check_paths(args)
        args.func(args)
    except SystemExit as e:
        if isinstance(e.code, str):
            print(f"error: {e.code}", file=sys.stderr)
            return 2
        return int(e.code or 0)
    except KeyboardInterrupt:
        return 130
    except Exception as e:  # surfaced to the shell as a nonzero status
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


run = main

if __name__ == "__main__":
    sys.exit(main())
