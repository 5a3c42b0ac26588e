"""Command-line entry point: synth, preprocess, train, eval, predict,
explain, and bias-inject subcommands over plain files in an output
directory. Every randomized command takes an explicit --seed and writes a
run manifest capturing its arguments, so runs are reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as dp
from . import synth as sy
from .errors import ConfigError, ValidationError
from .metrics import evaluate
from .model import ModelConfig, predict as model_predict, score_batchwise
from .training import TrainConfig, TrainingDivergedError, train

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_manifest(out: Path, args, argv: list[str]) -> None:
    payload = {
        "command": args.command,
        "argv": argv,
        "seed": getattr(args, "seed", None),
    }
    _write_json(out / "run_manifest.json", payload)


def _parse_split(text: str) -> dp.SplitSpec:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--split expects three fractions a,b,c, got {text!r}")
    try:
        a, b, c = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"--split fractions must be numeric: {text!r}") from exc
    return dp.SplitSpec(a, b, c)


def _add_cap_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-reqs", type=int, default=15)
    p.add_argument("--max-exps", type=int, default=15)
    p.add_argument("--max-req-words", type=int, default=30)
    p.add_argument("--max-exp-words", type=int, default=300)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pjfit",
        description="Train, evaluate, and explain posting/resume match models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--postings", type=int, default=200)
    p.add_argument("--apps-per-posting", type=int, default=40)
    p.add_argument("--skills", type=int, default=50)
    p.add_argument("--skills-per-posting", type=int, default=6)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--cover-strong", type=float, default=0.85)
    p.add_argument("--cover-weak", type=float, default=0.15)
    p.add_argument("--weak-prob", type=float, default=0.5)
    p.add_argument("--words-per-experience", type=int, default=66)

    p = sub.add_parser("preprocess", help="undersample and split a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True, help="train,val,test fractions")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--undersample", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model and keep the best checkpoint")
    p.add_argument("--model", choices=["apjfnn", "bpjfnn", "apjfnn-side"],
                   default="apjfnn")
    p.add_argument("--corpus", help="single corpus file; use with --split")
    p.add_argument("--split", help="train,val,test fractions for --corpus")
    p.add_argument("--train-file", help="pre-split alternative to --corpus")
    p.add_argument("--val-file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--undersample", action="store_true")
    p.add_argument("--embeddings", help="word2vec text file for the embedding layer")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--keep-prob", type=float, default=0.8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--embedding-dim", type=int, default=100)
    p.add_argument("--hidden-size", type=int, default=200)
    p.add_argument("--attn-self", type=int, default=200)
    p.add_argument("--attn-cond", type=int, default=400)
    p.add_argument("--compare-dim", type=int, default=200)
    p.add_argument("--bpjfnn-head", choices=["sigmoid", "softmax2"],
                   default="sigmoid")
    p.add_argument("--side-values", default="female,male")
    _add_cap_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a labeled corpus with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="print the match probability of one application")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="file with one JSON record")

    p = sub.add_parser("explain", help="emit attention distributions for one application")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--pretty", action="store_true",
                   help="render text heat bars next to the weights")

    p = sub.add_parser("bias-inject", help="flip labels by group to simulate a "
                                           "prejudiced training corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--female-value", default="female")
    p.add_argument("--male-value", default="male")
    p.add_argument("--out", required=True)

    return parser


# ---------------------------------------------------------------------------
# command bodies
# ---------------------------------------------------------------------------


def cmd_synth(args, argv) -> int:
    out = _out_dir(args)
    config = sy.GeneratorConfig(
        num_postings=args.postings,
        applications_per_posting=args.apps_per_posting,
        skill_vocab_size=args.skills,
        skills_per_posting=args.skills_per_posting,
        noise_rate=args.noise,
        cover_prob_strong=args.cover_strong,
        cover_prob_weak=args.cover_weak,
        weak_prob=args.weak_prob,
        words_per_experience=args.words_per_experience,
        seed=args.seed,
    )
    summary = sy.generate(config, out / "corpus.jsonl", out / "truth.jsonl")
    _write_json(out / "summary.json", summary)
    _run_manifest(out, args, argv)
    print(f"wrote {summary['applications']} applications "
          f"(positive rate {summary['positive_rate']:.3f})")
    return EXIT_OK


def cmd_preprocess(args, argv) -> int:
    out = _out_dir(args)
    corpus = dp.load_corpus(args.corpus)
    if args.undersample:
        corpus = dp.undersample(corpus, args.seed)
    spec = _parse_split(args.split)
    spec.seed = args.seed
    train_set, val_set, test_set = dp.split(corpus, spec)
    dp.save_corpus(train_set, out / "train.jsonl")
    dp.save_corpus(val_set, out / "val.jsonl")
    dp.save_corpus(test_set, out / "test.jsonl")
    _run_manifest(out, args, argv)
    print(f"split {len(corpus)} -> {len(train_set)}/{len(val_set)}/{len(test_set)}")
    return EXIT_OK


def _caps_from_args(args) -> dict:
    return {
        "max_requirements": args.max_reqs,
        "max_experiences": args.max_exps,
        "max_requirement_words": args.max_req_words,
        "max_experience_words": args.max_exp_words,
    }


def cmd_train(args, argv) -> int:
    if args.corpus:
        if not args.split:
            raise ConfigError("--corpus needs --split a,b,c")
        corpus = dp.load_corpus(args.corpus)
        if args.undersample:
            corpus = dp.undersample(corpus, args.seed)
        spec = _parse_split(args.split)
        spec.seed = args.seed
        train_set, val_set, test_set = dp.split(corpus, spec)
    elif args.train_file and args.val_file:
        train_set = dp.load_corpus(args.train_file)
        val_set = dp.load_corpus(args.val_file)
        test_set = []
    else:
        raise ConfigError("provide either --corpus with --split, or both "
                          "--train-file and --val-file")

    out = _out_dir(args)
    vocab = dp.build_vocab(train_set, min_count=args.min_count)
    side = args.model == "apjfnn-side"
    side_values = tuple(args.side_values.split(",")) if side else ()
    config = ModelConfig(
        vocab_size=len(vocab),
        embedding_dim=args.embedding_dim,
        hidden_size=args.hidden_size,
        attn_dim_self=args.attn_self,
        attn_dim_cond=args.attn_cond,
        compare_dim=args.compare_dim,
        side_feature_width=len(side_values),
        side_values=side_values,
        bpjfnn_head=args.bpjfnn_head,
        **_caps_from_args(args),
    )
    caps = config.caps()
    train_enc = dp.encode_corpus(train_set, vocab, caps)
    val_enc = dp.encode_corpus(val_set, vocab, caps)

    embedding = None
    if args.embeddings:
        embedding = dp.load_embeddings(
            args.embeddings, vocab, args.embedding_dim,
            np.random.default_rng(args.seed),
        )

    train_config = TrainConfig(
        batch_size=args.batch_size,
        learning_rate=args.lr,
        epochs=args.epochs,
        keep_prob=args.keep_prob,
        seed=args.seed,
        eval_every=args.eval_every,
        patience=args.patience,
    )
    try:
        result = train(args.model, train_enc, val_enc, config, train_config,
                       embedding=embedding)
    except TrainingDivergedError as exc:
        _write_json(out / "divergence.json", exc.snapshot)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    ckpt.save_checkpoint(result.params, vocab, out / "checkpoint.json")
    _write_jsonl(out / "history.jsonl", result.history)
    if args.corpus:
        dp.save_corpus(train_set, out / "train.jsonl")
        dp.save_corpus(val_set, out / "val.jsonl")
        dp.save_corpus(test_set, out / "test.jsonl")
    _run_manifest(out, args, argv)
    print(f"best validation AUC {result.best_val_auc:.4f} "
          f"at epoch {result.best_epoch}")
    return EXIT_OK


def _encode_for(params, vocab, corpus):
    return dp.encode_corpus(corpus, vocab, params.config.caps())


def cmd_eval(args, argv) -> int:
    params, vocab = ckpt.load_checkpoint(args.checkpoint)
    corpus = dp.load_corpus(args.corpus)
    if not corpus:
        raise ValidationError(f"{args.corpus} is empty")
    out = _out_dir(args)
    encoded = _encode_for(params, vocab, corpus)
    scores = score_batchwise(params, encoded)
    labels = np.array([a.label for a in corpus])
    report = evaluate(scores, labels)
    _write_json(out / "metrics.json", report.to_dict())
    _run_manifest(out, args, argv)
    print(report.table())
    return EXIT_OK


def _load_single(path: str) -> dp.Application:
    text = Path(path).read_text(encoding="utf-8").strip()
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(record, dict):
        record.setdefault("label", 0)
        record.setdefault("job_id", "input")
        record.setdefault("resume_id", "input")
    return dp.validate_record(record, where=path)


def cmd_predict(args, argv) -> int:
    params, vocab = ckpt.load_checkpoint(args.checkpoint)
    app = _load_single(args.input)
    encoded = _encode_for(params, vocab, [app])[0]
    out = model_predict(encoded, params, mode="eval")
    print(f"{out.y_hat:.6f}")
    return EXIT_OK


def _heat_bar(weight: float, width: int = 24) -> str:
    filled = int(round(weight * width))
    return "#" * filled + "." * (width - filled)


def _render_pretty(report: dict, app: dp.Application) -> str:
    lines = [f"match probability: {report['y_hat']:.4f}", "", "requirements:"]
    for l, (weights, tokens) in enumerate(zip(report["alpha"], app.requirements)):
        lines.append(f"  [{l}] importance {report['beta'][l]:.3f} "
                     f"{_heat_bar(report['beta'][l])}")
        for w, tok in zip(weights, tokens):
            lines.append(f"      {w:6.3f} {_heat_bar(w)} {tok}")
    lines.append("")
    lines.append("experiences:")
    for l, gamma_l in enumerate(report["gamma"]):
        lines.append(f"  [{l}] importance {report['delta'][l]:.3f} "
                     f"{_heat_bar(report['delta'][l])}")
        for k, weights in enumerate(gamma_l):
            lines.append(f"      vs requirement {k}:")
            for w, tok in zip(weights, app.experiences[l]):
                lines.append(f"        {w:6.3f} {_heat_bar(w)} {tok}")
    return "\n".join(lines)


def cmd_explain(args, argv) -> int:
    params, vocab = ckpt.load_checkpoint(args.checkpoint)
    if params.kind == "bpjfnn":
        raise ConfigError("the flat model records no attention; use an "
                          "attention model checkpoint")
    app = _load_single(args.input)
    encoded = _encode_for(params, vocab, [app])[0]
    out = model_predict(encoded, params, mode="eval")
    trace = out.trace
    report = {
        "y_hat": out.y_hat,
        "job_id": app.job_id,
        "resume_id": app.resume_id,
        "alpha": [a.tolist() for a in trace.alpha],
        "beta": trace.beta.tolist(),
        "gamma": [g.tolist() for g in trace.gamma],
        "delta": trace.delta.tolist(),
    }
    payload = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    if args.pretty:
        truncated, _ = dp.truncate_pad(app, params.config.caps())
        print(_render_pretty(report, truncated))
    elif not args.out:
        print(payload)
    return EXIT_OK


def cmd_bias_inject(args, argv) -> int:
    corpus = dp.load_corpus(args.corpus)
    out = _out_dir(args)
    injected, manifest = dp.inject_bias(
        corpus, args.rate, args.seed,
        female_value=args.female_value, male_value=args.male_value,
    )
    dp.save_corpus(injected, out / "injected.jsonl")
    _write_json(out / "flip_manifest.json", manifest.to_dict())
    _run_manifest(out, args, argv)
    print(f"flipped {len(manifest.flips)} of {len(corpus)} records")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "explain": cmd_explain,
    "bias-inject": cmd_bias_inject,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args, argv)
    except (ConfigError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
