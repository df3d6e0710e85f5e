"""Command-line entry point: corpus generation, vocabulary training,
pretraining, fine-tuning, evaluation, a terminal chat REPL, the HTTP
service, and the adapter-size sweep."""
from __future__ import annotations

import argparse
import json
import sys

from . import (checkpoint as CK, codec, corpus as C, dialogue, inference,
               kb, model as M, pipeline, training as TR)


class CliError(Exception):
    pass


def _read_lines(path):
    try:
        with open(path) as f:
            return [line.rstrip("\n") for line in f if line.strip()]
    except OSError as e:
        raise CliError(f"cannot read text file {path}: {e}") from None


def _load_corpus(path, db=None):
    try:
        return C.load_corpus(path, db)
    except OSError as e:
        raise CliError(f"cannot read corpus {path}: {e}") from None
    except C.CorpusError as e:
        raise CliError(f"invalid corpus {path}: {e}") from None


def _load_db(path):
    try:
        return kb.Database.load(path)
    except OSError as e:
        raise CliError(f"cannot read database {path}: {e}") from None
    except kb.KbError as e:
        raise CliError(f"invalid database {path}: {e}") from None


def _load_vocab(path):
    try:
        return codec.Vocab.load(path)
    except OSError as e:
        raise CliError(f"cannot read vocabulary {path}: {e}") from None
    except codec.CodecError as e:
        raise CliError(f"invalid vocabulary {path}: {e}") from None


def _load_checkpoint(path, vocab=None):
    try:
        return CK.load_checkpoint(path, vocab)
    except OSError as e:
        raise CliError(f"cannot read checkpoint {path}: {e}") from None
    except CK.CheckpointError as e:
        raise CliError(f"invalid checkpoint {path}: {e}") from None


def _model_config(args, vocab, adapter_enabled, copy_enabled):
    try:
        return M.ModelConfig(
            n_layer=args.n_layer, n_head=args.n_head, d_model=args.d_model,
            d_ff=args.d_ff, vocab_size=len(vocab),
            max_positions=args.max_positions, adapter_size=args.adapter_size,
            adapter_enabled=adapter_enabled, copy_enabled=copy_enabled)
    except M.ConfigError as e:
        raise CliError(f"invalid model configuration: {e}") from None


def _train_config(args, mode):
    try:
        cfg = TR.TrainConfig(learning_rate=args.learning_rate,
                             batch_size=args.batch_size, epochs=args.epochs,
                             seed=args.seed, mode=mode)
        cfg.validate()
        return cfg
    except TR.TrainError as e:
        raise CliError(f"invalid training configuration: {e}") from None


def _add_model_flags(p):
    p.add_argument("--n-layer", type=int, default=2)
    p.add_argument("--n-head", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-positions", type=int, default=512)
    p.add_argument("--adapter-size", type=int, default=32)


def _add_train_flags(p, lr, batch, epochs):
    p.add_argument("--learning-rate", type=float, default=lr)
    p.add_argument("--batch-size", type=int, default=batch)
    p.add_argument("--epochs", type=int, default=epochs)


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_corpus(args):
    if args.drills:
        corpus = C.generate_copy_drills(seed=args.seed, n_dialogues=args.n_dialogues)
        db = None
    else:
        corpus, db = C.generate_synthetic(seed=args.seed,
                                          n_dialogues=args.n_dialogues,
                                          entity_pool=args.pool)
    C.save_corpus(corpus, args.out)
    if db is not None and args.db_out:
        db.save(args.db_out)
    print(f"wrote {len(corpus.dialogues)} dialogues to {args.out}")
    return 0


def cmd_train_vocab(args):
    texts = []
    for path in args.corpus:
        texts += C.corpus_texts(_load_corpus(path))
    for path in args.text or []:
        texts += _read_lines(path)
    if not texts:
        raise CliError("no training text: give at least one --corpus or --text")
    vocab = codec.train_vocab(texts, args.size)
    vocab.save(args.out)
    print(f"wrote vocabulary of {len(vocab)} tokens to {args.out}")
    return 0


def cmd_pretrain(args):
    vocab = _load_vocab(args.vocab)
    config = _model_config(args, vocab, adapter_enabled=False, copy_enabled=False)
    model = M.init_model(config, seed=args.seed)
    corpora = [_load_corpus(p) for p in args.corpus or []]
    if args.drill_dialogues:
        corpora.append(C.generate_copy_drills(seed=args.drill_seed,
                                              n_dialogues=args.drill_dialogues))
    plain = []
    for path in args.text or []:
        plain += _read_lines(path)
    if not corpora and not plain:
        raise CliError("no pretraining data: give --corpus, --text or --drill-dialogues")
    log = TR.pretrain_backbone(model, plain, vocab,
                               _train_config(args, "pretrain_full"),
                               log_path=args.log, dialogue_corpora=corpora)
    CK.save_checkpoint(args.out, model, vocab)
    print(f"pretrained {args.epochs} epochs, "
          f"loss {log[0]['mean_loss']:.4f} -> {log[-1]['mean_loss']:.4f}; "
          f"wrote {args.out}")
    return 0


def cmd_finetune(args):
    vocab = _load_vocab(args.vocab)
    backbone, _ = _load_checkpoint(args.checkpoint_in, vocab)
    if backbone.config.adapter_enabled or backbone.config.copy_enabled:
        raise CliError("finetune expects a plain backbone checkpoint as input")
    config = M.ModelConfig(**{**backbone.config.to_dict(),
                              "adapter_enabled": True,
                              "copy_enabled": not args.no_copy,
                              "adapter_size": args.adapter_size})
    model = M.init_model(config, seed=args.seed)
    for name, p in backbone.params.items():
        model.params[name].data = p.data.copy()
    seqs = []
    for path in args.corpus:
        seqs += TR.linearize_corpus(vocab, _load_corpus(path))
    if args.drill_dialogues:
        seqs += TR.linearize_corpus(
            vocab, C.generate_copy_drills(seed=args.drill_seed,
                                          n_dialogues=args.drill_dialogues))
    if not seqs:
        raise CliError("no fine-tuning data: give at least one --corpus")
    if args.full:
        partition, mode = M.ParamPartition.all_trainable(model), "finetune_full"
    else:
        partition, mode = M.ParamPartition.adapter_finetune(model), "finetune_adapters"
    log = TR.finetune(model, seqs, partition, _train_config(args, mode),
                      log_path=args.log)
    CK.save_checkpoint(args.out, model, vocab)
    print(f"finetuned {args.epochs} epochs, "
          f"loss {log[0]['mean_loss']:.4f} -> {log[-1]['mean_loss']:.4f}; "
          f"wrote {args.out}")
    return 0


def cmd_evaluate(args):
    vocab = _load_vocab(args.vocab)
    model, _ = _load_checkpoint(args.checkpoint, vocab)
    db = _load_db(args.db)
    corpus = _load_corpus(args.corpus, db)
    report = pipeline.evaluate_model(model, vocab, db, corpus)
    print(report.to_json() if args.json else report.to_text())
    return 0


def cmd_chat(args):
    vocab = _load_vocab(args.vocab)
    model, _ = _load_checkpoint(args.checkpoint, vocab)
    db = _load_db(args.db)
    history = []
    print("type a message, or an empty line / EOF to quit")
    while True:
        try:
            text = input("you> ").strip()
        except EOFError:
            break
        if not text:
            break
        try:
            result = inference.respond(model, vocab, db, history, text)
        except inference.BeliefParseError as e:
            print(f"[belief stage failed to parse: {e.raw_text!r}]")
            continue
        print(f"belief>   {dialogue.serialize_belief(result.belief)}")
        print(f"db>       {result.db_text}")
        print(f"action>   {dialogue.serialize_action(result.action)}")
        print(f"system>   {result.response}")
        history.append(dialogue.DialogueTurn(
            user_utterance=text, belief=result.belief,
            db_records=result.db_records, db_total=result.db_total,
            action=result.action, system_response=result.response))
    return 0


def cmd_serve(args):
    import uvicorn

    from .server import create_app
    vocab = _load_vocab(args.vocab)
    model, _ = _load_checkpoint(args.checkpoint, vocab)
    db = _load_db(args.db)
    uvicorn.run(create_app(model, vocab, db), host=args.host, port=args.port)
    return 0


def cmd_sweep_adapters(args):
    if any(s < 1 for s in args.sizes):
        raise CliError("adapter sizes must be positive")
    vocab = _load_vocab(args.vocab)
    backbone, _ = _load_checkpoint(args.checkpoint_in, vocab)
    db = _load_db(args.db)
    train_corpus = _load_corpus(args.corpus)
    eval_corpus = _load_corpus(args.eval_corpus, db)
    seqs = TR.linearize_corpus(vocab, train_corpus)
    for size in args.sizes:
        config = M.ModelConfig(**{**backbone.config.to_dict(),
                                  "adapter_enabled": True,
                                  "copy_enabled": not args.no_copy,
                                  "adapter_size": size})
        model = M.init_model(config, seed=args.seed)
        for name, p in backbone.params.items():
            model.params[name].data = p.data.copy()
        TR.finetune(model, seqs, M.ParamPartition.adapter_finetune(model),
                    _train_config(args, "finetune_adapters"))
        report = pipeline.evaluate_model(model, vocab, db, eval_corpus)
        print(json.dumps({"adapter_size": size, **report.to_dict()},
                         sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpt-acn")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic dialogue corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-dialogues", type=int, default=50)
    p.add_argument("--pool", choices=sorted(C.NAME_WORDS), default="train")
    p.add_argument("--drills", action="store_true",
                   help="generate random-entity copy drills instead")
    p.add_argument("--out", required=True)
    p.add_argument("--db-out")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train-vocab", help="train the byte-fallback vocabulary")
    p.add_argument("--corpus", action="append", default=[])
    p.add_argument("--text", action="append")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_vocab)

    p = sub.add_parser("pretrain", help="pretrain a backbone checkpoint")
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", action="append")
    p.add_argument("--text", action="append")
    p.add_argument("--drill-dialogues", type=int, default=0)
    p.add_argument("--drill-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_train_flags(p, lr=1e-3, batch=8, epochs=10)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="adapter/copy fine-tuning on a frozen backbone")
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint-in", required=True)
    p.add_argument("--corpus", action="append", default=[])
    p.add_argument("--drill-dialogues", type=int, default=0)
    p.add_argument("--drill-seed", type=int, default=0)
    p.add_argument("--adapter-size", type=int, default=32)
    p.add_argument("--no-copy", action="store_true")
    p.add_argument("--full", action="store_true",
                   help="fine-tune all parameters instead of adapters only")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log")
    p.add_argument("--out", required=True)
    _add_train_flags(p, lr=3e-4, batch=2, epochs=15)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="run the metric suite over a corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("chat", help="interactive terminal REPL")
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--db", required=True)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve", help="HTTP JSON service for the chat UI")
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("sweep-adapters", help="fine-tune and evaluate per adapter size")
    p.add_argument("sizes", type=int, nargs="+")
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint-in", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--eval-corpus", required=True)
    p.add_argument("--no-copy", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p, lr=3e-4, batch=2, epochs=15)
    p.set_defaults(func=cmd_sweep_adapters)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
